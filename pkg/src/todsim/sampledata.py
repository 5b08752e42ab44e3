"""Seeded synthetic domain fixtures for experiments and tests."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .agents import ScriptedAssistant, ScriptedUser
from .core import ApiCall, ApiSchema, Episode, Fold, Origin
from .mock_api import ApiTable, synthesize_table
from .orchestrator import SimConfig, run_batch


@dataclass
class DomainFixture:
    domains: list[str]
    schemas: dict[str, ApiSchema]
    domain_of: dict[str, str]  # intent -> domain

    def intents(self, domain: str | None = None) -> list[str]:
        return sorted(
            i for i, d in self.domain_of.items() if domain is None or d == domain
        )


def make_domains(
    n_domains: int,
    intents_per_domain: int = 2,
    slots_per_intent: int = 2,
    prefix: str = "dom",
) -> DomainFixture:
    """Domains with disjoint intent and slot-name vocabularies."""
    domains = [f"{prefix}{d}" for d in range(n_domains)]
    schemas: dict[str, ApiSchema] = {}
    domain_of: dict[str, str] = {}
    for d, domain in enumerate(domains):
        for s in range(intents_per_domain):
            intent = f"{prefix.capitalize()}{d}Svc{s}"
            slot_names = tuple(
                f"{intent.lower()}_slot{k}" for k in range(slots_per_intent)
            )
            schemas[intent] = ApiSchema(intent, slot_names)
            domain_of[intent] = domain
    return DomainFixture(domains=domains, schemas=schemas, domain_of=domain_of)


def make_goals(
    fixture: DomainFixture, n_per_intent: int, seed: int
) -> list[ApiCall]:
    rng = random.Random(seed)
    goals = []
    for intent in sorted(fixture.schemas):
        schema = fixture.schemas[intent]
        for g in range(n_per_intent):
            slots = {
                name: f"val_{name}_{g}_{rng.randrange(1000):03d}"
                for name in schema.slot_names
            }
            goals.append(ApiCall(intent, slots))
    return goals


def make_world(
    n_domains: int,
    intents_per_domain: int = 2,
    slots_per_intent: int = 2,
    goals_per_intent: int = 5,
    seed: int = 0,
    prefix: str = "dom",
) -> tuple[DomainFixture, list[ApiCall], ApiTable]:
    fixture = make_domains(n_domains, intents_per_domain, slots_per_intent, prefix)
    goals = make_goals(fixture, goals_per_intent, seed)
    table = synthesize_table(list(fixture.schemas.values()), goals, seed)
    return fixture, goals, table


def make_human_episodes(
    fixture: DomainFixture,
    goals: list[ApiCall],
    table: ApiTable,
    fold: Fold = Fold.TRAIN,
    seed: int = 0,
) -> list[Episode]:
    """Gold-style conversations produced by the scripted oracle pair."""
    cfg = SimConfig(rollouts_per_goal=1, schema_aware=True)
    episodes = run_batch(
        goals,
        ScriptedUser,
        ScriptedAssistant,
        table,
        cfg,
        schemas=fixture.schemas,
        domains=fixture.domain_of,
    )
    for episode in episodes:
        episode.origin = Origin.HUMAN
        episode.fold = fold
        episode.schema = None
    return episodes
