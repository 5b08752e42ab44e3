"""Offline and online metrics: TSR, JGA, BLEU-4, TEM, error reduction."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import ApiCall, Episode, Speaker, calls_equal, parse_call
from .errors import AlignmentError, DegenerateBase, EmptyInput

BLEU_EPSILON = 1e-9


@dataclass
class MetricReport:
    tsr: float = 0.0
    jga: float = 0.0
    bleu4: float = 0.0
    tem: float = 0.0
    per_schema: dict[str, dict] = field(default_factory=dict)
    calls_per_dialogue: float = 0.0
    n_goals: int = 0
    n_turns: int = 0

    def to_dict(self) -> dict:
        return {
            "tsr": self.tsr,
            "jga": self.jga,
            "bleu4": self.bleu4,
            "tem": self.tem,
            "per_schema": {k: dict(v) for k, v in sorted(self.per_schema.items())},
            "calls_per_dialogue": self.calls_per_dialogue,
            "n_goals": self.n_goals,
            "n_turns": self.n_turns,
        }


def task_success_rate(
    episodes: list[Episode], by_intent: bool = False
) -> float | tuple[float, dict[str, dict]]:
    """Mean success; optionally also the per-goal-intent breakdown."""
    if not episodes:
        raise EmptyInput("no episodes")
    overall = sum(e.success for e in episodes) / len(episodes)
    if not by_intent:
        return overall
    groups: dict[str, list[bool]] = {}
    for episode in episodes:
        groups.setdefault(episode.goal.intent, []).append(episode.success)
    table = {
        intent: {"tsr": sum(flags) / len(flags), "n": len(flags)}
        for intent, flags in groups.items()
    }
    return overall, table


def episode_rounds(episode: Episode) -> list[dict]:
    """Split turns into per-round dicts: user, call (or None), resp, utterance."""
    rounds: list[dict] = []
    current: Optional[dict] = None
    for turn in episode.turns:
        if turn.speaker is Speaker.USER:
            current = {"user": turn, "call": None, "call_turn": None, "resp": None, "utt": None}
            rounds.append(current)
        elif current is not None:
            if turn.speaker is Speaker.ASSISTANT_CALL:
                current["call"] = parse_call(turn.text)
                current["call_turn"] = turn
            elif turn.speaker is Speaker.API_RESP:
                current["resp"] = turn
            else:
                current["utt"] = turn
    return rounds


def joint_goal_accuracy(
    gold: list[Episode],
    hyp_calls: list[list[Optional[ApiCall]]],
    call_turns_only: bool = False,
) -> float:
    """Per assistant round: 1 iff gold and hypothesis agree on the exact call,
    where silence on a no-call round counts as correct."""
    if len(gold) != len(hyp_calls):
        raise AlignmentError(f"{len(gold)} episodes vs {len(hyp_calls)} hypothesis rows")
    scores: list[int] = []
    for episode, hyps in zip(gold, hyp_calls):
        rounds = [r for r in episode_rounds(episode) if not _is_done_round(r)]
        if len(rounds) != len(hyps):
            raise AlignmentError(
                f"{len(rounds)} gold rounds vs {len(hyps)} hypothesis calls"
            )
        for rnd, hyp in zip(rounds, hyps):
            gold_call = rnd["call"]
            if call_turns_only and gold_call is None:
                continue
            if gold_call is None:
                scores.append(1 if hyp is None else 0)
            else:
                scores.append(1 if hyp is not None and calls_equal(gold_call, hyp) else 0)
    if not scores:
        raise EmptyInput("no assistant rounds")
    return sum(scores) / len(scores)


def _is_done_round(rnd: dict) -> bool:
    return rnd["user"].is_done()


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(
    hypotheses: list[Sequence[str]], references: list[Sequence[str]]
) -> float:
    """Corpus BLEU, n = 1..4, uniform weights, brevity penalty, add-epsilon
    smoothing for zero counts (tiny corpora stay finite)."""
    if not hypotheses:
        raise EmptyInput("no hypotheses")
    if len(hypotheses) != len(references):
        raise AlignmentError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    matched = [0] * 4
    total = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            total[n - 1] += sum(hyp_counts.values())
            matched[n - 1] += sum((hyp_counts & ref_counts).values())
    log_precision = 0.0
    for n in range(4):
        if total[n] == 0:
            precision = BLEU_EPSILON
        elif matched[n] == 0:
            precision = BLEU_EPSILON / total[n]
        else:
            precision = matched[n] / total[n]
        log_precision += math.log(precision) / 4.0
    if hyp_len == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return brevity * math.exp(log_precision)


def token_exact_match(
    hypotheses: list[Sequence[str]], references: list[Sequence[str]]
) -> float:
    if not hypotheses:
        raise EmptyInput("no hypotheses")
    if len(hypotheses) != len(references):
        raise AlignmentError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    hits = sum(1 for h, r in zip(hypotheses, references) if list(h) == list(r))
    return hits / len(hypotheses)


def error_reduction(base_jga, new_jga):
    """(new - base) / (1 - base); works for floats and Fractions alike."""
    if base_jga == 1:
        raise DegenerateBase("base JGA is already perfect")
    return (new_jga - base_jga) / (1 - base_jga)


def calls_per_dialogue(episodes: list[Episode]) -> float:
    if not episodes:
        raise EmptyInput("no episodes")
    calls = sum(
        1 for e in episodes for t in e.turns if t.speaker is Speaker.ASSISTANT_CALL
    )
    return calls / len(episodes)


def build_report(
    episodes: list[Episode],
    jga: float = 0.0,
    bleu: float = 0.0,
    tem: float = 0.0,
) -> MetricReport:
    tsr, per_schema = task_success_rate(episodes, by_intent=True)
    return MetricReport(
        tsr=tsr,
        jga=jga,
        bleu4=bleu,
        tem=tem,
        per_schema=per_schema,
        calls_per_dialogue=calls_per_dialogue(episodes),
        n_goals=len(episodes),
        n_turns=sum(len(e.turns) for e in episodes),
    )
