import math
from fractions import Fraction

import pytest
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st

from todsim.core import Speaker
from todsim.errors import InvalidCounts
from todsim.eval_service import (
    Annotation,
    EvalStore,
    binomial_p,
    build_tasks,
    create_app,
    gate_annotators,
    make_control_task,
    win_matrix,
)


@pytest.fixture()
def runs(small_episodes):
    half = len(small_episodes) // 2
    return {"alpha": small_episodes[:half], "beta": small_episodes[half:]}


class TestBinomial:
    def test_exact_value(self):
        assert binomial_p(10, 10) == 0.001953125

    def test_symmetry(self):
        assert binomial_p(3, 10) == binomial_p(7, 10)

    def test_even_split_is_one(self):
        assert binomial_p(5, 10) == 1.0

    def test_invalid_counts(self):
        with pytest.raises(InvalidCounts):
            binomial_p(-1, 10)
        with pytest.raises(InvalidCounts):
            binomial_p(11, 10)
        with pytest.raises(InvalidCounts):
            binomial_p(0, 0)

    @given(st.integers(min_value=1, max_value=400), st.data())
    @settings(max_examples=60)
    def test_matches_exact_fraction_oracle(self, n, data):
        k = data.draw(st.integers(min_value=0, max_value=n))
        lo = max(k, n - k)
        exact = 2 * Fraction(sum(math.comb(n, i) for i in range(lo, n + 1)), 2**n)
        expected = float(min(Fraction(1), exact))
        assert binomial_p(k, n) == pytest.approx(expected, abs=1e-12)

    def test_large_n_logspace_branch(self):
        got = binomial_p(1100, 2000)
        lo = 1100
        exact = 2 * Fraction(sum(math.comb(2000, i) for i in range(lo, 2001)), 2**2000)
        assert got == pytest.approx(float(exact), rel=1e-9)


class TestTasks:
    def test_build_crosses_pairs(self, runs):
        tasks = build_tasks(runs, seed=0)
        assert len(tasks) == min(len(v) for v in runs.values())
        assert all({t.left_system, t.right_system} == {"alpha", "beta"} for t in tasks)

    def test_left_right_randomized(self, runs):
        tasks = build_tasks(runs, seed=0)
        assert len({t.left_system for t in tasks}) == 2

    def test_presented_payload_is_clean(self, runs):
        for task in build_tasks(runs, seed=0):
            doc = task.presented()
            assert set(doc) == {"task_id", "question", "left_turns", "right_turns"}
            blob = str(doc)
            assert "APICALL:" not in blob
            assert "APIRESP:" not in blob
            assert "[DONE]" not in blob
            assert "alpha" not in blob and "beta" not in blob
            for turn in doc["left_turns"] + doc["right_turns"]:
                assert turn["speaker"] in ("User", "Assistant")

    def test_question_text(self, runs):
        task = build_tasks(runs, seed=0)[0]
        assert task.question == "Which Assistant would you rather use yourself?"

    def test_control_pairs_gold_with_repetitive(self, small_episodes):
        control = make_control_task(small_episodes[0], "c1", seed=0)
        assert control.is_control
        gold_side = control.left if control.control_gold_side == "Left" else control.right
        other = control.right if control.control_gold_side == "Left" else control.left
        assistant_utts = {
            t.text for t in other.turns if t.speaker is Speaker.ASSISTANT_UTT
        }
        assert len(assistant_utts) == 1  # repetitive side repeats one utterance
        assert gold_side.turns == small_episodes[0].turns


class TestGatingAndMatrix:
    def control_and_regular(self, small_episodes):
        tasks = build_tasks(
            {"alpha": small_episodes[:2], "beta": small_episodes[2:4]},
            controls=[small_episodes[0]],
            seed=0,
        )
        control = next(t for t in tasks if t.is_control)
        regular = [t for t in tasks if not t.is_control]
        return tasks, control, regular

    def test_control_failure_excludes_annotator(self, small_episodes):
        tasks, control, regular = self.control_and_regular(small_episodes)
        wrong = "Left" if control.control_gold_side == "Right" else "Right"
        anns = [
            Annotation(control.id, "bad", wrong),
            Annotation(control.id, "good", control.control_gold_side),
            Annotation(regular[0].id, "bad", "Left"),
            Annotation(regular[0].id, "good", "Left"),
        ]
        assert gate_annotators(anns, tasks) == {"bad"}
        matrix = win_matrix(anns, tasks)
        winner = (
            regular[0].left_system
        )  # only "good"'s vote counts, exactly once
        i = matrix.systems.index(winner)
        j = 1 - i
        assert matrix.n[i][j] == 1
        assert matrix.wins[i][j] == 1.0

    def test_significance_needs_enough_votes(self, small_episodes):
        tasks, control, regular = self.control_and_regular(small_episodes)
        anns = [Annotation(regular[0].id, f"a{i}", "Left") for i in range(3)]
        matrix = win_matrix(anns, tasks)
        assert not any(flag for row in matrix.significant for flag in row)
        anns = [Annotation(regular[0].id, f"a{i}", "Left") for i in range(6)]
        matrix = win_matrix(anns, tasks)
        # 6-0 split: p = 2 * 2^-6 = 0.03125 < 0.05
        assert any(flag for row in matrix.significant for flag in row)


class TestStoreAndApi:
    def make_client(self, tmp_path, runs, controls=None, monkeypatch=None):
        store = EvalStore(tmp_path)
        store.set_tasks(build_tasks(runs, controls=controls or [], seed=0))
        return store, TestClient(create_app(store))

    def test_controls_served_first(self, tmp_path, runs, small_episodes):
        store, client = self.make_client(tmp_path, runs, controls=[small_episodes[0]])
        task = client.get("/api/next-task", params={"annotator": "a1"}).json()
        control_ids = {t.id for t in store.tasks if t.is_control}
        assert task["task_id"] in control_ids

    def test_annotate_and_duplicate(self, tmp_path, runs):
        store, client = self.make_client(tmp_path, runs)
        task = client.get("/api/next-task", params={"annotator": "a1"}).json()
        body = {"task_id": task["task_id"], "annotator_id": "a1", "choice": "Left"}
        assert client.post("/api/annotate", json=body).status_code == 204
        assert client.post("/api/annotate", json=body).status_code == 409

    def test_bad_choice_rejected(self, tmp_path, runs):
        store, client = self.make_client(tmp_path, runs)
        task = client.get("/api/next-task", params={"annotator": "a1"}).json()
        body = {"task_id": task["task_id"], "annotator_id": "a1", "choice": "left"}
        assert client.post("/api/annotate", json=body).status_code == 422

    def test_lease_blocks_second_annotator(self, tmp_path, runs):
        single = {k: v[:1] for k, v in runs.items()}
        store, client = self.make_client(tmp_path, single)
        first = client.get("/api/next-task", params={"annotator": "a1"}).json()
        second = client.get("/api/next-task", params={"annotator": "a2"}).json()
        assert "task_id" in first
        assert second == {"done": True}  # only task is leased to a1

    def test_least_annotated_first(self, tmp_path, runs):
        store, client = self.make_client(tmp_path, runs)
        t1 = store.next_task("a1")
        store.add_annotation(Annotation(t1.id, "a1", "Left"))
        t2 = store.next_task("a2")
        assert t2.id != t1.id

    def test_results_requires_admin_token(self, tmp_path, runs, monkeypatch):
        monkeypatch.setenv("EVAL_ADMIN_TOKEN", "s3cr3t")
        store, client = self.make_client(tmp_path, runs)
        assert client.get("/api/results").status_code == 403
        assert (
            client.get("/api/results", headers={"X-Admin-Token": "wrong"}).status_code
            == 403
        )
        ok = client.get("/api/results", headers={"X-Admin-Token": "s3cr3t"})
        assert ok.status_code == 200
        assert ok.json()["systems"] == ["alpha", "beta"]

    def test_results_denied_without_configured_token(self, tmp_path, runs, monkeypatch):
        monkeypatch.delenv("EVAL_ADMIN_TOKEN", raising=False)
        store, client = self.make_client(tmp_path, runs)
        assert client.get("/api/results").status_code == 403

    def test_state_survives_restart(self, tmp_path, runs):
        store, client = self.make_client(tmp_path, runs)
        task = store.next_task("a1")
        store.add_annotation(Annotation(task.id, "a1", "Left"))
        reopened = EvalStore(tmp_path)
        assert len(reopened.tasks) == len(store.tasks)
        assert len(reopened.annotations) == 1
        assert reopened.annotations[0].task_id == task.id
