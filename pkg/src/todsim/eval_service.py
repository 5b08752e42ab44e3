"""Pairwise human-evaluation backend: task building, control pairs, annotator
gating, win matrices, and the exact binomial significance test.

Annotators see only User / Assistant utterance turns with systems anonymized;
API call and response turns never leave the server.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, Response

from .core import Episode, Speaker, Turn, episode_from_dict, episode_to_dict
from .errors import InvalidCounts, MissingEpisode, EmptyInput

DEFAULT_QUESTION = "Which Assistant would you rather use yourself?"
LEASE_SECONDS = 15 * 60
SIGNIFICANCE_ALPHA = 0.05


@dataclass
class EvalTask:
    id: str
    left_system: str
    right_system: str
    left: Episode
    right: Episode
    question: str = DEFAULT_QUESTION
    is_control: bool = False
    control_gold_side: Optional[str] = None  # "Left" | "Right"
    goal_matched: bool = True

    def presented(self) -> dict:
        """Annotator-facing payload: utterance turns only, systems anonymized."""
        return {
            "task_id": self.id,
            "question": self.question,
            "left_turns": _visible_turns(self.left),
            "right_turns": _visible_turns(self.right),
        }


def _visible_turns(episode: Episode) -> list[dict]:
    labels = {Speaker.USER: "User", Speaker.ASSISTANT_UTT: "Assistant"}
    return [
        {"speaker": labels[t.speaker], "text": t.text}
        for t in episode.turns
        if t.speaker in labels and t.text.strip() and not t.is_done()
    ]


@dataclass(frozen=True)
class Annotation:
    task_id: str
    annotator_id: str
    choice: str  # "Left" | "Right"
    rationale: str = ""
    timestamp: float = 0.0


@dataclass
class WinMatrix:
    systems: list[str]
    wins: list[list[float]]
    n: list[list[int]]
    significant: list[list[bool]]

    def to_dict(self) -> dict:
        return {
            "systems": self.systems,
            "wins": self.wins,
            "n": self.n,
            "significant": self.significant,
        }


def binomial_p(k: int, n: int) -> float:
    """Two-sided exact tail probability under p = 0.5, capped at 1."""
    if n < 1 or k < 0 or k > n:
        raise InvalidCounts(f"invalid counts k={k}, n={n}")
    lo = max(k, n - k)
    if n <= 1000:
        tail = sum(math.comb(n, i) for i in range(lo, n + 1))
        return min(1.0, 2.0 * tail / 2**n)
    # Log-space accumulation avoids huge intermediates for large n.
    log_half_n = n * math.log(0.5)
    acc = 0.0
    for i in range(lo, n + 1):
        acc += math.exp(math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1) + log_half_n)
    return min(1.0, 2.0 * acc)


def make_control_task(
    gold: Episode, task_id: str, seed: int, question: str = DEFAULT_QUESTION
) -> EvalTask:
    """Pair a gold dialogue against an artificially repetitive one built by
    repeating the gold dialogue's first assistant utterance every round."""
    first_utt = next(
        (t.text for t in gold.turns if t.speaker is Speaker.ASSISTANT_UTT),
        "Okay .",
    )
    repetitive_turns = []
    for turn in gold.turns:
        if turn.speaker is Speaker.USER:
            repetitive_turns.append(turn)
            repetitive_turns.append(Turn(Speaker.ASSISTANT_UTT, first_utt))
    repetitive = Episode(
        goal=gold.goal,
        turns=repetitive_turns,
        success=False,
        domain=gold.domain,
        fold=gold.fold,
        origin=gold.origin,
    )
    gold_left = random.Random(f"control|{seed}|{task_id}").random() < 0.5
    left, right = (gold, repetitive) if gold_left else (repetitive, gold)
    return EvalTask(
        id=task_id,
        left_system="gold" if gold_left else "repetitive",
        right_system="repetitive" if gold_left else "gold",
        left=left,
        right=right,
        question=question,
        is_control=True,
        control_gold_side="Left" if gold_left else "Right",
        goal_matched=True,
    )


def build_tasks(
    runs: dict[str, list[Episode]],
    goals_subset: Optional[list[int]] = None,
    controls: Optional[list[Episode]] = None,
    seed: int = 0,
    question: str = DEFAULT_QUESTION,
) -> list[EvalTask]:
    """Cross all unordered system pairs with the selected goal indices,
    randomizing left/right per task; append one control task per control
    episode."""
    systems = sorted(runs)
    if not systems:
        raise EmptyInput("no systems")
    n_goals = min(len(runs[s]) for s in systems)
    indices = goals_subset if goals_subset is not None else list(range(n_goals))
    rng = random.Random(seed)
    tasks: list[EvalTask] = []
    for sys_a, sys_b in itertools.combinations(systems, 2):
        for goal_idx in indices:
            if goal_idx >= len(runs[sys_a]) or goal_idx >= len(runs[sys_b]):
                raise MissingEpisode(f"goal {goal_idx} missing for a system")
            left_sys, right_sys = (sys_a, sys_b) if rng.random() < 0.5 else (sys_b, sys_a)
            tasks.append(
                EvalTask(
                    id=f"t{len(tasks):05d}",
                    left_system=left_sys,
                    right_system=right_sys,
                    left=runs[left_sys][goal_idx],
                    right=runs[right_sys][goal_idx],
                    question=question,
                )
            )
    for control in controls or []:
        tasks.append(
            make_control_task(control, f"c{len(tasks):05d}", seed, question)
        )
    return tasks


def gate_annotators(
    annotations: list[Annotation], tasks: list[EvalTask]
) -> set:
    """Annotators who chose the repetitive side on any control are excluded."""
    by_id = {t.id: t for t in tasks}
    excluded = set()
    for ann in annotations:
        task = by_id.get(ann.task_id)
        if task is None or not task.is_control:
            continue
        if ann.choice != task.control_gold_side:
            excluded.add(ann.annotator_id)
    return excluded


def win_matrix(annotations: list[Annotation], tasks: list[EvalTask]) -> WinMatrix:
    """Preference fractions over gated, non-control annotations."""
    by_id = {t.id: t for t in tasks}
    excluded = gate_annotators(annotations, tasks)
    systems = sorted(
        {t.left_system for t in tasks if not t.is_control}
        | {t.right_system for t in tasks if not t.is_control}
    )
    index = {s: i for i, s in enumerate(systems)}
    counts = [[0] * len(systems) for _ in systems]
    for ann in annotations:
        if ann.annotator_id in excluded:
            continue
        task = by_id.get(ann.task_id)
        if task is None or task.is_control:
            continue
        winner = task.left_system if ann.choice == "Left" else task.right_system
        loser = task.right_system if ann.choice == "Left" else task.left_system
        counts[index[winner]][index[loser]] += 1
    size = len(systems)
    wins = [[0.0] * size for _ in range(size)]
    n = [[0] * size for _ in range(size)]
    significant = [[False] * size for _ in range(size)]
    for i in range(size):
        for j in range(size):
            if i == j:
                continue
            total = counts[i][j] + counts[j][i]
            n[i][j] = total
            if total:
                wins[i][j] = counts[i][j] / total
                significant[i][j] = binomial_p(counts[i][j], total) < SIGNIFICANCE_ALPHA
    return WinMatrix(systems=systems, wins=wins, n=n, significant=significant)


class EvalStore:
    """File-backed task and annotation state; survives restart.

    Tasks are served least-annotated-first with an atomic claim and a
    15-minute lease; one annotation per (task, annotator).
    """

    def __init__(self, data_dir: str | Path, controls_per_annotator: int = 1):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.controls_per_annotator = controls_per_annotator
        self.tasks: list[EvalTask] = []
        self.annotations: list[Annotation] = []
        self._leases: dict[str, tuple[str, float]] = {}
        self._lock = threading.Lock()
        self._load()

    @property
    def tasks_path(self) -> Path:
        return self.data_dir / "tasks.json"

    @property
    def annotations_path(self) -> Path:
        return self.data_dir / "annotations.jsonl"

    def _load(self) -> None:
        if self.tasks_path.exists():
            with open(self.tasks_path, encoding="utf-8") as fh:
                self.tasks = [_task_from_dict(d) for d in json.load(fh)]
        if self.annotations_path.exists():
            with open(self.annotations_path, encoding="utf-8") as fh:
                self.annotations = [
                    Annotation(**json.loads(line)) for line in fh if line.strip()
                ]

    def set_tasks(self, tasks: list[EvalTask]) -> None:
        with self._lock:
            self.tasks = list(tasks)
            with open(self.tasks_path, "w", encoding="utf-8") as fh:
                json.dump([_task_to_dict(t) for t in tasks], fh, sort_keys=True)
                fh.write("\n")

    def next_task(self, annotator_id: str) -> Optional[EvalTask]:
        with self._lock:
            now = time.monotonic()
            done = {
                (a.task_id, a.annotator_id) for a in self.annotations
            }
            per_task = {}
            for a in self.annotations:
                per_task[a.task_id] = per_task.get(a.task_id, 0) + 1

            def claimable(task: EvalTask) -> bool:
                if (task.id, annotator_id) in done:
                    return False
                lease = self._leases.get(task.id)
                if lease and lease[0] != annotator_id and lease[1] > now:
                    return False
                return True

            controls_done = sum(
                1
                for a in self.annotations
                if a.annotator_id == annotator_id
                and any(t.id == a.task_id and t.is_control for t in self.tasks)
            )
            candidates = []
            if controls_done < self.controls_per_annotator:
                candidates = [t for t in self.tasks if t.is_control and claimable(t)]
            if not candidates:
                candidates = [t for t in self.tasks if not t.is_control and claimable(t)]
            if not candidates:
                return None
            task = min(candidates, key=lambda t: (per_task.get(t.id, 0), t.id))
            self._leases[task.id] = (annotator_id, now + LEASE_SECONDS)
            return task

    def add_annotation(self, annotation: Annotation) -> bool:
        with self._lock:
            for existing in self.annotations:
                if (
                    existing.task_id == annotation.task_id
                    and existing.annotator_id == annotation.annotator_id
                ):
                    return False
            self.annotations.append(annotation)
            self._leases.pop(annotation.task_id, None)
            with open(self.annotations_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(annotation.__dict__, sort_keys=True))
                fh.write("\n")
            return True

    def results(self) -> WinMatrix:
        with self._lock:
            return win_matrix(self.annotations, self.tasks)


def _task_to_dict(task: EvalTask) -> dict:
    return {
        "id": task.id,
        "left_system": task.left_system,
        "right_system": task.right_system,
        "left": episode_to_dict(task.left),
        "right": episode_to_dict(task.right),
        "question": task.question,
        "is_control": task.is_control,
        "control_gold_side": task.control_gold_side,
        "goal_matched": task.goal_matched,
    }


def _task_from_dict(data: dict) -> EvalTask:
    return EvalTask(
        id=data["id"],
        left_system=data["left_system"],
        right_system=data["right_system"],
        left=episode_from_dict(data["left"]),
        right=episode_from_dict(data["right"]),
        question=data["question"],
        is_control=data["is_control"],
        control_gold_side=data.get("control_gold_side"),
        goal_matched=data.get("goal_matched", True),
    )


def create_app(store: EvalStore, static_dir: Optional[str | Path] = None):
    app = FastAPI(title="todsim pairwise eval")

    @app.get("/api/next-task")
    async def next_task(annotator: str):
        task = store.next_task(annotator)
        if task is None:
            return {"done": True}
        return task.presented()

    @app.post("/api/annotate", status_code=204)
    async def annotate(request: Request):
        body = await request.json()
        if body.get("choice") not in ("Left", "Right"):
            raise HTTPException(status_code=422, detail="choice must be Left or Right")
        annotation = Annotation(
            task_id=body["task_id"],
            annotator_id=body["annotator_id"],
            choice=body["choice"],
            rationale=body.get("rationale", ""),
            timestamp=time.time(),
        )
        if not store.add_annotation(annotation):
            raise HTTPException(status_code=409, detail="duplicate annotation")
        return Response(status_code=204)

    @app.get("/api/results")
    async def results(request: Request):
        token = os.environ.get("EVAL_ADMIN_TOKEN", "")
        supplied = request.headers.get("x-admin-token", "")
        if not token or supplied != token:
            raise HTTPException(status_code=403, detail="admin token required")
        return store.results().to_dict()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
