"""Task-success-driven data acquisition: rank schemas by simulated TSR, inject
matching human conversations for the weakest ones, plus the random few-shot
baseline sampler."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import Episode, episode_to_dict
from .errors import EmptyInput
from .metrics import task_success_rate

DEFAULT_K_SCHEMAS = 8
DEFAULT_K_CONVS = 8


@dataclass
class SchemaScoreTable:
    rows: dict[str, dict] = field(default_factory=dict)

    def worst(self, k: int) -> list[str]:
        """Ascending by (tsr, intent); lexicographic tie-break."""
        ranked = sorted(self.rows.items(), key=lambda kv: (kv[1]["tsr"], kv[0]))
        return [intent for intent, _ in ranked[:k]]


def episode_id(episode: Episode) -> str:
    """Stable content hash used to keep selections disjoint across iterations."""
    doc = json.dumps(episode_to_dict(episode), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def rank_schemas(episodes: list[Episode]) -> SchemaScoreTable:
    if not episodes:
        raise EmptyInput("no episodes to rank")
    _, table = task_success_rate(episodes, by_intent=True)
    rows = {
        intent: {"tsr": row["tsr"], "n_goals": row["n"]} for intent, row in table.items()
    }
    return SchemaScoreTable(rows)


def select_al_batch(
    table: SchemaScoreTable,
    pool_train: list[Episode],
    pool_valid: list[Episode],
    k_schemas: int = DEFAULT_K_SCHEMAS,
    k_convs: int = DEFAULT_K_CONVS,
    seed: int = 0,
    used_ids: Optional[set] = None,
) -> dict:
    """Sample k_convs train and k_convs valid episodes whose goal intent is
    among the k_schemas worst, round-robin across those intents, never reusing
    an episode. Shortfalls return what remains (with a warning flag)."""
    used = set(used_ids or ())
    intents = table.worst(k_schemas)
    rng = random.Random(seed)
    train_adds = _round_robin(pool_train, intents, k_convs, rng, used)
    used.update(episode_id(e) for e in train_adds)
    valid_adds = _round_robin(pool_valid, intents, k_convs, rng, used)
    used.update(episode_id(e) for e in valid_adds)
    return {
        "intents": intents,
        "train_adds": train_adds,
        "valid_adds": valid_adds,
        "shortfall": len(train_adds) < k_convs or len(valid_adds) < k_convs,
    }


def _round_robin(pool, intents, k, rng, used):
    buckets = {intent: [] for intent in intents}
    for episode in pool:
        intent = episode.goal.intent
        if intent in buckets and episode_id(episode) not in used:
            buckets[intent].append(episode)
    for bucket in buckets.values():
        rng.shuffle(bucket)
    selected = []
    while len(selected) < k and any(buckets.values()):
        for intent in intents:
            if len(selected) >= k:
                break
            if buckets[intent]:
                selected.append(buckets[intent].pop())
    return selected


def select_random_fewshot(pool: list[Episode], n: int, seed: int) -> list[Episode]:
    """Seeded uniform sample without replacement, size min(n, |pool|)."""
    rng = random.Random(seed)
    if n >= len(pool):
        return list(pool)
    return rng.sample(pool, n)


def run_active_learning(
    n_iterations: int,
    goals,
    schemas,
    api,
    in_domain: list[Episode],
    cfg,
    pool_train: list[Episode],
    pool_valid: list[Episode],
    seed: int = 0,
    domains: Optional[dict] = None,
    domain_noise: Optional[dict] = None,
    k_schemas: int = DEFAULT_K_SCHEMAS,
    k_convs: int = DEFAULT_K_CONVS,
    out_dir: Optional[str | Path] = None,
    snapshot_iterations: Optional[list[int]] = None,
):
    """Bootstrap loop with per-iteration worst-schema conversation injection.

    Each iteration ranks schemas by the previous model's per-intent TSR over
    all goals, injects k_convs train and k_convs valid pool conversations for
    the k_schemas worst, then runs a normal bootstrap iteration with the
    injected data multitasked in. Returns (final state, ledger, snapshots),
    where snapshots maps requested iteration numbers to their model refs.
    """
    from .bootstrap import ExemplarTrainer, bootstrap_iteration, initial_state
    from .orchestrator import derive_seed

    trainer = ExemplarTrainer()
    state = initial_state(
        in_domain, trainer, api=api, eval_goals=list(goals),
        seed=cfg.decode.seed, domains=domains,
    )
    ledger = AlLedger()
    snapshots: dict[int, dict] = {}
    extra_train: list[Episode] = []
    extra_valid: list[Episode] = []
    for k in range(1, n_iterations + 1):
        table = _table_from_history(state.history)
        iter_seed = derive_seed(seed, k, 0)
        selection = select_al_batch(
            table, pool_train, pool_valid, k_schemas, k_convs,
            seed=iter_seed, used_ids=ledger.used_ids,
        )
        ledger.record(k, selection, iter_seed)
        extra_train = extra_train + selection["train_adds"]
        extra_valid = extra_valid + selection["valid_adds"]
        state = bootstrap_iteration(
            state, goals, schemas, api, in_domain, cfg, trainer,
            domains=domains, domain_noise=domain_noise,
            extra_train=extra_train, extra_valid=extra_valid,
            eval_goals=list(goals),
        )
        if snapshot_iterations and k in snapshot_iterations:
            snapshots[k] = state.model_refs
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        ledger.save(Path(out_dir) / "al_ledger.json")
    return state, ledger, snapshots


def _table_from_history(history: list[dict]) -> SchemaScoreTable:
    for entry in reversed(history):
        per_schema = entry.get("ood", {}).get("per_schema")
        if per_schema:
            rows = {
                intent: {"tsr": row["tsr"], "n_goals": row["n"]}
                for intent, row in per_schema.items()
            }
            return SchemaScoreTable(rows)
    raise EmptyInput("no per-schema evaluation available for ranking")


@dataclass
class AlLedger:
    """Auditable per-iteration record of what active learning consumed."""

    iterations: list[dict] = field(default_factory=list)
    used_ids: set = field(default_factory=set)

    def record(self, iteration: int, selection: dict, seed: int) -> None:
        self.iterations.append(
            {
                "iteration": iteration,
                "intents": selection["intents"],
                "train_ids": [episode_id(e) for e in selection["train_adds"]],
                "valid_ids": [episode_id(e) for e in selection["valid_adds"]],
                "seed": seed,
            }
        )
        self.used_ids.update(episode_id(e) for e in selection["train_adds"])
        self.used_ids.update(episode_id(e) for e in selection["valid_adds"])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.iterations, fh, indent=2, sort_keys=True)
            fh.write("\n")
