"""Success-filtered bootstrapping: generate with the schema-aware pair, keep
only successful dialogues, hold out 10% by goal, accumulate, retrain, repeat."""

from __future__ import annotations

import hashlib
import json
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from .agents import Agent, DecodeConfig, DecodeMode, NoisyUser, Role
from .core import ApiCall, ApiSchema, Episode, Fold, Origin, serialize_call
from .errors import TrainerFailed
from .exemplar import ExemplarAssistant, ExemplarStore, ExemplarUser, train_exemplar
from .metrics import MetricReport, bleu4, build_report, joint_goal_accuracy, token_exact_match
from .mock_api import ApiTable
from .offline import assistant_predictions
from .orchestrator import SimConfig, run_batch

log = logging.getLogger(__name__)


@dataclass
class BootstrapState:
    iteration: int = 0
    synthetic_train: list[Episode] = field(default_factory=list)
    synthetic_valid: list[Episode] = field(default_factory=list)
    model_refs: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)


class ExemplarTrainer:
    """Rebuilds a single store (both roles) from accumulated data each iteration.

    The store grows monotonically with the accumulated corpus, so rebuilding is
    equivalent to incremental fine-tuning and keeps restarts deterministic. One
    store serves the schema-aware and schema-agnostic variants; awareness is
    decided at inference by grounding presence.
    """

    def train(
        self,
        train_episodes: list[Episode],
        valid_episodes: list[Episode],
        prev_refs: dict,
    ) -> dict:
        store = ExemplarStore()
        train_exemplar(store, train_episodes, Role.USER)
        train_exemplar(store, train_episodes, Role.ASSISTANT)
        return {"schema_aware": store, "schema_agnostic": store}


class ExternalTrainer:
    """Shells out to a trainer command once per model variant.

    The command receives ``--train --valid --init --role both --schema-aware
    {true|false}`` and must print ``CHECKPOINT <path>`` and exit 0.
    """

    def __init__(self, command: str, timeout: float = 3600.0):
        self.command = command
        self.timeout = timeout

    def train(self, train_episodes, valid_episodes, prev_refs) -> dict:
        from .data_io import write_episodes

        workdir = Path(tempfile.mkdtemp(prefix="todsim-trainer-"))
        train_path = workdir / "train.jsonl"
        valid_path = workdir / "valid.jsonl"
        write_episodes(train_path, train_episodes)
        write_episodes(valid_path, valid_episodes)
        refs = {}
        for variant, aware in (("schema_aware", "true"), ("schema_agnostic", "false")):
            init = str(prev_refs.get(variant, ""))
            argv = shlex.split(self.command) + [
                "--train", str(train_path),
                "--valid", str(valid_path),
                "--init", init,
                "--role", "both",
                "--schema-aware", aware,
            ]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout
                )
            except subprocess.TimeoutExpired as exc:
                raise TrainerFailed(f"trainer timed out: {exc}") from exc
            if proc.returncode != 0:
                raise TrainerFailed(
                    f"trainer exited {proc.returncode}: {proc.stderr.strip()}"
                )
            checkpoint = None
            for line in proc.stdout.splitlines():
                if line.startswith("CHECKPOINT "):
                    checkpoint = line.split(" ", 1)[1].strip()
            if not checkpoint:
                raise TrainerFailed("trainer printed no CHECKPOINT line")
            refs[variant] = checkpoint
        return refs


def goal_in_valid_split(goal: ApiCall) -> bool:
    """Deterministic 90/10 split by stable hash of the canonical goal."""
    digest = hashlib.sha256(serialize_call(goal).encode()).digest()
    return int.from_bytes(digest[:8], "big") % 10 == 0


def exemplar_pair(
    store: ExemplarStore,
    schema_aware: bool,
    domain_noise: Optional[dict[str, float]] = None,
    domains: Optional[dict[str, str]] = None,
) -> tuple[Callable[[ApiCall], Agent], Callable[[], Agent]]:
    """(per-goal user factory, assistant factory) for a trained store."""

    def user_for(goal: ApiCall) -> Agent:
        user: Agent = ExemplarUser(store)
        if domain_noise:
            domain = (domains or {}).get(goal.intent, goal.intent)
            epsilon = domain_noise.get(domain, 0.0)
            if epsilon > 0:
                user = NoisyUser(user, epsilon)
        return user

    return user_for, lambda: ExemplarAssistant(store)


def evaluate_schema_agnostic(
    store: ExemplarStore,
    goals: list[ApiCall],
    api: ApiTable,
    offline_gold: list[Episode],
    seed: int = 0,
    domains: Optional[dict[str, str]] = None,
) -> MetricReport:
    """Online TSR with one greedy rollout per goal plus offline JGA/BLEU/TEM."""
    cfg = SimConfig(
        rollouts_per_goal=1,
        decode=DecodeConfig(mode=DecodeMode.GREEDY, seed=seed),
        schema_aware=False,
    )
    user_for, assistant_factory = exemplar_pair(store, schema_aware=False)
    episodes = run_batch(
        goals, None, assistant_factory, api, cfg,
        domains=domains, user_factory_for=user_for,
    )
    jga = bleu = tem = 0.0
    if offline_gold:
        hyp_calls, hyp_utts, gold_utts = assistant_predictions(
            assistant_factory, offline_gold, schema_aware=False
        )
        jga = joint_goal_accuracy(offline_gold, hyp_calls)
        hyp_tokens = [u.split() for row in hyp_utts for u in row]
        gold_tokens = [u.split() for row in gold_utts for u in row]
        if hyp_tokens:
            bleu = bleu4(hyp_tokens, gold_tokens)
            tem = token_exact_match(hyp_tokens, gold_tokens)
    return build_report(episodes, jga=jga, bleu=bleu, tem=tem)


def bootstrap_iteration(
    state: BootstrapState,
    goals: list[ApiCall],
    schemas: dict[str, ApiSchema],
    api: ApiTable,
    in_domain: list[Episode],
    cfg: SimConfig,
    trainer=None,
    domains: Optional[dict[str, str]] = None,
    domain_noise: Optional[dict[str, float]] = None,
    extra_train: Optional[list[Episode]] = None,
    extra_valid: Optional[list[Episode]] = None,
    eval_goals: Optional[list[ApiCall]] = None,
    in_domain_eval_goals: Optional[list[ApiCall]] = None,
) -> BootstrapState:
    """One generate / filter / split / accumulate / retrain / evaluate pass."""
    trainer = trainer or ExemplarTrainer()
    store = state.model_refs.get("schema_aware")
    if not isinstance(store, ExemplarStore):
        raise TypeError("bootstrap_iteration needs an exemplar schema_aware ref")
    gen_cfg = replace(cfg, schema_aware=True)
    user_for, assistant_factory = exemplar_pair(
        store, schema_aware=True, domain_noise=domain_noise, domains=domains
    )
    generated = run_batch(
        goals, None, assistant_factory, api, gen_cfg,
        schemas=schemas, domains=domains, user_factory_for=user_for,
    )
    successes = []
    for episode in generated:
        if not episode.success:
            continue
        episode.origin = Origin.SYNTHETIC
        episode.fold = Fold.VALID if goal_in_valid_split(episode.goal) else Fold.TRAIN
        successes.append(episode)
    if not successes:
        log.warning("iteration %d produced no successful dialogues", state.iteration + 1)

    synthetic_train = state.synthetic_train + [
        e for e in successes if e.fold is Fold.TRAIN
    ]
    synthetic_valid = state.synthetic_valid + [
        e for e in successes if e.fold is Fold.VALID
    ]

    train_data = list(in_domain) + list(extra_train or []) + synthetic_train
    valid_data = list(extra_valid or []) + synthetic_valid
    model_refs = trainer.train(train_data, valid_data, state.model_refs)

    entry = {"iteration": state.iteration + 1, "n_generated": len(generated),
             "n_successes": len(successes)}
    new_store = model_refs.get("schema_agnostic")
    if isinstance(new_store, ExemplarStore):
        held_out = eval_goals if eval_goals is not None else _distinct_goals(
            synthetic_valid
        )
        if held_out:
            report = evaluate_schema_agnostic(
                new_store, held_out, api, synthetic_valid,
                seed=cfg.decode.seed, domains=domains,
            )
            entry["ood"] = report.to_dict()
        if in_domain_eval_goals:
            in_report = evaluate_schema_agnostic(
                new_store, in_domain_eval_goals, api, [], seed=cfg.decode.seed
            )
            entry["in_domain"] = in_report.to_dict()

    return BootstrapState(
        iteration=state.iteration + 1,
        synthetic_train=synthetic_train,
        synthetic_valid=synthetic_valid,
        model_refs=model_refs,
        history=state.history + [entry],
    )


def _distinct_goals(episodes: list[Episode]) -> list[ApiCall]:
    seen = {}
    for episode in episodes:
        seen.setdefault(serialize_call(episode.goal), episode.goal)
    return list(seen.values())


def initial_state(
    in_domain: list[Episode],
    trainer=None,
    api: Optional[ApiTable] = None,
    eval_goals: Optional[list[ApiCall]] = None,
    in_domain_eval_goals: Optional[list[ApiCall]] = None,
    seed: int = 0,
    domains: Optional[dict[str, str]] = None,
) -> BootstrapState:
    """Iteration 0: the baseline model trained on In-Domain data only."""
    trainer = trainer or ExemplarTrainer()
    model_refs = trainer.train(list(in_domain), [], {})
    state = BootstrapState(iteration=0, model_refs=model_refs)
    store = model_refs.get("schema_agnostic")
    if isinstance(store, ExemplarStore) and api is not None:
        entry: dict = {"iteration": 0, "n_generated": 0, "n_successes": 0}
        if eval_goals:
            entry["ood"] = evaluate_schema_agnostic(
                store, eval_goals, api, [], seed=seed, domains=domains
            ).to_dict()
        if in_domain_eval_goals:
            entry["in_domain"] = evaluate_schema_agnostic(
                store, in_domain_eval_goals, api, [], seed=seed
            ).to_dict()
        state.history.append(entry)
    return state


def run_bootstrap(
    n_iterations: int,
    goals: list[ApiCall],
    schemas: dict[str, ApiSchema],
    api: ApiTable,
    in_domain: list[Episode],
    cfg: SimConfig,
    trainer=None,
    out_dir: Optional[str | Path] = None,
    resume: bool = True,
    domains: Optional[dict[str, str]] = None,
    domain_noise: Optional[dict[str, float]] = None,
    eval_goals: Optional[list[ApiCall]] = None,
    in_domain_eval_goals: Optional[list[ApiCall]] = None,
) -> BootstrapState:
    """Fold bootstrap_iteration n times, checkpointing each completed iteration."""
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    trainer = trainer or ExemplarTrainer()
    state = None
    start = 1
    if out_dir is not None and resume:
        state = _load_snapshot(Path(out_dir), trainer, n_iterations)
        if state is not None:
            start = state.iteration + 1
    if state is None:
        state = initial_state(
            in_domain, trainer, api=api, eval_goals=eval_goals,
            in_domain_eval_goals=in_domain_eval_goals, seed=cfg.decode.seed,
            domains=domains,
        )
        if out_dir is not None:
            _save_snapshot(Path(out_dir), state)
    for _ in range(start, n_iterations + 1):
        state = bootstrap_iteration(
            state, goals, schemas, api, in_domain, cfg, trainer,
            domains=domains, domain_noise=domain_noise, eval_goals=eval_goals,
            in_domain_eval_goals=in_domain_eval_goals,
        )
        if out_dir is not None:
            _save_snapshot(Path(out_dir), state)
    return state


def _save_snapshot(out_dir: Path, state: BootstrapState) -> None:
    from .data_io import write_episodes

    iter_dir = out_dir / f"iter_{state.iteration}"
    iter_dir.mkdir(parents=True, exist_ok=True)
    write_episodes(iter_dir / "synthetic_train.jsonl", state.synthetic_train)
    write_episodes(iter_dir / "synthetic_valid.jsonl", state.synthetic_valid)
    with open(iter_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(state.history, fh, indent=2, sort_keys=True)
        fh.write("\n")
    store = state.model_refs.get("schema_aware")
    if isinstance(store, ExemplarStore):
        store.save(str(iter_dir / "store.json"))
    with open(iter_dir / "state.json", "w", encoding="utf-8") as fh:
        json.dump({"iteration": state.iteration}, fh)
        fh.write("\n")


def _load_snapshot(out_dir: Path, trainer, n_iterations: int):
    from .data_io import load_episodes

    best = None
    for k in range(n_iterations + 1):
        iter_dir = out_dir / f"iter_{k}"
        if (iter_dir / "state.json").exists():
            best = k
    if best is None:
        return None
    iter_dir = out_dir / f"iter_{best}"
    model_refs = {}
    if (iter_dir / "store.json").exists():
        store = ExemplarStore.load(str(iter_dir / "store.json"))
        model_refs = {"schema_aware": store, "schema_agnostic": store}
    with open(iter_dir / "metrics.json", encoding="utf-8") as fh:
        history = json.load(fh)
    return BootstrapState(
        iteration=best,
        synthetic_train=load_episodes(iter_dir / "synthetic_train.jsonl"),
        synthetic_valid=load_episodes(iter_dir / "synthetic_valid.jsonl"),
        model_refs=model_refs,
        history=history,
    )
