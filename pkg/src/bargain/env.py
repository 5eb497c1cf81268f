"""Multi-issue bargaining environment.

Scenarios over three issues (books, hats, balls), divisions, the dialogue
state machine with a length cutoff, outcome reconciliation and scoring,
and an exact Pareto-frontier oracle for small scenarios.

All types are immutable values; all operations are pure functions.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ContractError,
    IllegalTransition,
    InvalidAct,
    InvalidDivision,
    SamplingError,
)

N_ISSUES = 3
ISSUE_NAMES = ("book", "hat", "ball")
MAX_POINTS = 10
DEFAULT_CUTOFF = 20

SCHEMA_VERSION = 1

Vec = tuple[int, int, int]


def _as_vec(values) -> Vec:
    t = tuple(int(v) for v in values)
    if len(t) != N_ISSUES:
        raise ContractError(f"expected {N_ISSUES} issues, got {len(t)}")
    return t  # type: ignore[return-value]


class Speaker(str, Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Speaker":
        return Speaker.B if self is Speaker.A else Speaker.A


class ActKind(str, Enum):
    PROPOSE = "propose"
    ACCEPT = "accept"
    SELECT = "select"
    WALKAWAY = "walkaway"


class OutcomeKind(str, Enum):
    AGREEMENT = "agreement"
    WALKAWAY = "walkaway"
    CUTOFF = "cutoff"
    MISMATCH = "mismatch"


@dataclass(frozen=True)
class Scenario:
    """Item counts plus each side's private per-item values (each dotting to 10)."""

    counts: Vec
    values_a: Vec
    values_b: Vec
    scenario_id: str = ""

    def values_for(self, role: Speaker) -> Vec:
        return self.values_a if role is Speaker.A else self.values_b

    def to_json(self) -> str:
        return json.dumps(
            {
                "v": SCHEMA_VERSION,
                "id": self.scenario_id,
                "counts": list(self.counts),
                "values_a": list(self.values_a),
                "values_b": list(self.values_b),
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "Scenario":
        d = json.loads(line)
        return Scenario(
            counts=_as_vec(d["counts"]),
            values_a=_as_vec(d["values_a"]),
            values_b=_as_vec(d["values_b"]),
            scenario_id=str(d.get("id", "")),
        )


@dataclass(frozen=True)
class Division:
    """Items one side claims for itself."""

    take: Vec

    def complement(self, counts: Vec) -> "Division":
        return Division(tuple(c - t for c, t in zip(counts, self.take)))  # type: ignore[arg-type]

    def fits(self, counts: Vec) -> bool:
        return all(0 <= t <= c for t, c in zip(self.take, counts))


@dataclass(frozen=True)
class DialogueAct:
    kind: ActKind
    speaker: Speaker
    proposal: Division | None = None

    def __post_init__(self):
        if self.kind is ActKind.PROPOSE and self.proposal is None:
            raise InvalidAct("PROPOSE requires a proposal division")
        if self.kind is not ActKind.PROPOSE and self.proposal is not None:
            raise InvalidAct(f"{self.kind.value} must not carry a proposal")


@dataclass(frozen=True)
class DialogueState:
    scenario: Scenario
    history: tuple[DialogueAct, ...] = ()
    turn: Speaker = Speaker.A
    terminal: bool = False

    @property
    def utterance_count(self) -> int:
        return len(self.history)

    @property
    def last_act(self) -> DialogueAct | None:
        return self.history[-1] if self.history else None

    def proposal_on_table(self) -> Division | None:
        """The standing offer: the most recent act, when it is a proposal."""
        last = self.last_act
        if last is not None and last.kind is ActKind.PROPOSE:
            return last.proposal
        return None


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    points_a: int
    points_b: int
    division_a: Division | None = None
    division_b: Division | None = None
    needs_review: bool = field(default=False)

    @property
    def is_agreement(self) -> bool:
        return self.kind is OutcomeKind.AGREEMENT


def score(division: Division, values) -> int:
    """Points a division earns under a value vector (plain dot product)."""
    values = _as_vec(values)
    if len(division.take) != N_ISSUES:
        raise ContractError("division has wrong arity")
    return int(sum(t * v for t, v in zip(division.take, values)))


def validate_scenario(s: Scenario) -> list[str]:
    """All invariant violations; empty list means the scenario is well formed."""
    problems: list[str] = []
    for name, vec in (("counts", s.counts), ("values_a", s.values_a), ("values_b", s.values_b)):
        if any(v < 0 for v in vec):
            problems.append(f"{name} has a negative entry: {vec}")
    if all(c == 0 for c in s.counts):
        problems.append("no items: all counts are zero")
    for name, vec in (("values_a", s.values_a), ("values_b", s.values_b)):
        total = sum(c * v for c, v in zip(s.counts, vec))
        if total != MAX_POINTS:
            problems.append(f"dot(counts, {name}) = {total}, expected {MAX_POINTS}")
    return problems


@dataclass(frozen=True)
class PoolStats:
    """Sampling constraints, either defaults or derived from an ingested corpus.

    ``count_vectors`` is an empirical pool of observed count triples; when
    present the sampler resamples from it, so sampled totals match the
    corpus distribution by construction.
    """

    total_items_min: int = 5
    total_items_max: int = 7
    count_vectors: tuple[Vec, ...] = ()

    @staticmethod
    def from_scenarios(scenarios) -> "PoolStats":
        vecs = tuple(s.counts for s in scenarios)
        if not vecs:
            raise ContractError("cannot derive pool stats from an empty scenario list")
        totals = [sum(v) for v in vecs]
        return PoolStats(
            total_items_min=min(totals), total_items_max=max(totals), count_vectors=vecs
        )


def _value_vectors(counts: Vec, total: int = MAX_POINTS) -> list[Vec]:
    """All integer value vectors with dot(counts, v) == total.

    Zero-count issues get value 0 (their value is unconstrained and unused).
    """
    out: list[Vec] = []
    c0, c1, c2 = counts
    for v0 in range(total // c0 + 1 if c0 else 1):
        rem0 = total - c0 * v0
        for v1 in range(rem0 // c1 + 1 if c1 else 1):
            rem1 = rem0 - c1 * v1
            if c2:
                if rem1 % c2 == 0:
                    out.append((v0, v1, rem1 // c2))
            elif rem1 == 0:
                out.append((v0, v1, 0))
    return out


_MAX_SAMPLE_RETRIES = 200


def sample_scenario(rng: np.random.Generator, pool: PoolStats | None = None) -> Scenario:
    """Draw a valid scenario under pool constraints.

    Every item must be valued by at least one side; both value vectors dot
    to 10 with the counts. Deterministic for a given generator state.
    """
    pool = pool or PoolStats()
    for _ in range(_MAX_SAMPLE_RETRIES):
        if pool.count_vectors:
            counts = pool.count_vectors[int(rng.integers(len(pool.count_vectors)))]
        else:
            total = int(rng.integers(pool.total_items_min, pool.total_items_max + 1))
            # positive counts summing to `total`
            cut = sorted(rng.choice(np.arange(1, total), size=2, replace=False).tolist())
            counts = (cut[0], cut[1] - cut[0], total - cut[1])
        vecs = _value_vectors(counts)
        if not vecs:
            continue
        # retry values with the counts held fixed, so the realized count
        # distribution stays faithful to the pool
        for _ in range(_MAX_SAMPLE_RETRIES):
            va = vecs[int(rng.integers(len(vecs)))]
            vb = vecs[int(rng.integers(len(vecs)))]
            if any(a == 0 and b == 0 for c, a, b in zip(counts, va, vb) if c > 0):
                continue  # some item worthless to both sides
            sid = "s" + format(abs(hash((counts, va, vb))) % 16**8, "08x")
            s = Scenario(counts=counts, values_a=va, values_b=vb, scenario_id=sid)
            if not validate_scenario(s):
                return s
    raise SamplingError(f"no valid scenario after {_MAX_SAMPLE_RETRIES} attempts")


def legal_kinds(state: DialogueState) -> tuple[ActKind, ...]:
    """Act kinds an agent may emit next (WALKAWAY is human-only, never listed)."""
    kinds = [ActKind.PROPOSE]
    if state.proposal_on_table() is not None:
        kinds.append(ActKind.ACCEPT)
    if state.history:
        kinds.append(ActKind.SELECT)
    return tuple(kinds)


def apply_act(state: DialogueState, act: DialogueAct, cutoff_l: int = DEFAULT_CUTOFF) -> DialogueState:
    """Advance the dialogue state machine by one utterance.

    Terminal when the act is SELECT or WALKAWAY, or when the utterance
    count reaches ``cutoff_l`` (the simulated-walkaway length limit).
    """
    if state.terminal:
        raise IllegalTransition("cannot act on a terminal dialogue")
    if act.speaker is not state.turn:
        raise InvalidAct(f"out of turn: expected {state.turn.value}, got {act.speaker.value}")
    if act.kind is ActKind.PROPOSE and not act.proposal.fits(state.scenario.counts):
        raise InvalidAct(
            f"proposal {act.proposal.take} exceeds counts {state.scenario.counts}"
        )
    history = state.history + (act,)
    terminal = act.kind in (ActKind.SELECT, ActKind.WALKAWAY) or len(history) >= cutoff_l
    return DialogueState(
        scenario=state.scenario,
        history=history,
        turn=state.turn.other,
        terminal=terminal,
    )


def terminal_kind(state: DialogueState) -> OutcomeKind:
    """How a terminal dialogue ended, before deal reconciliation."""
    if not state.terminal:
        raise ContractError("dialogue is not terminal")
    last = state.last_act
    if last is not None and last.kind is ActKind.WALKAWAY:
        return OutcomeKind.WALKAWAY
    if last is not None and last.kind is ActKind.SELECT:
        return OutcomeKind.AGREEMENT  # pending reconciliation
    return OutcomeKind.CUTOFF


def resolve_outcome(
    state: DialogueState,
    output_a: Division | None = None,
    output_b: Division | None = None,
) -> Outcome:
    """Reconcile the two sides' claimed divisions into a scored outcome.

    Cutoffs and walkaways score 0/0. A selection whose claims sum exactly
    to the counts is an agreement; anything else is a mismatch, scored 0/0
    and flagged for review.
    """
    kind = terminal_kind(state)
    if kind in (OutcomeKind.CUTOFF, OutcomeKind.WALKAWAY):
        return Outcome(kind=kind, points_a=0, points_b=0)
    if output_a is None or output_b is None:
        raise ContractError("selection outcomes need both output divisions")
    counts = state.scenario.counts
    for div in (output_a, output_b):
        if not div.fits(counts):
            raise InvalidDivision(f"output {div.take} exceeds counts {counts}")
    if all(a + b == c for a, b, c in zip(output_a.take, output_b.take, counts)):
        return Outcome(
            kind=OutcomeKind.AGREEMENT,
            points_a=score(output_a, state.scenario.values_a),
            points_b=score(output_b, state.scenario.values_b),
            division_a=output_a,
            division_b=output_b,
        )
    return Outcome(
        kind=OutcomeKind.MISMATCH,
        points_a=0,
        points_b=0,
        division_a=output_a,
        division_b=output_b,
        needs_review=True,
    )


def all_divisions(counts: Vec):
    """Every feasible own-share division for the counts, lexicographic order."""
    ranges = [range(c + 1) for c in counts]
    for take in itertools.product(*ranges):
        yield Division(take)  # type: ignore[arg-type]


def pareto_frontier(s: Scenario) -> list[tuple[tuple[int, int], Division]]:
    """Non-dominated (points_a, points_b) pairs over all complementary splits.

    Returns one witness division (A's share) per frontier point, in
    lexicographic division order. Enumeration only; scenarios are tiny.
    """
    if sum(s.counts) > 20:
        raise ContractError("pareto_frontier is an enumeration oracle; too many items")
    pairs: list[tuple[tuple[int, int], Division]] = []
    for div_a in all_divisions(s.counts):
        pa = score(div_a, s.values_a)
        pb = score(div_a.complement(s.counts), s.values_b)
        pairs.append(((pa, pb), div_a))
    frontier: list[tuple[tuple[int, int], Division]] = []
    seen: set[tuple[int, int]] = set()
    for (pa, pb), div in pairs:
        if (pa, pb) in seen:
            continue
        dominated = any(
            (qa >= pa and qb >= pb) and (qa, qb) != (pa, pb) for (qa, qb), _ in pairs
        )
        if not dominated:
            frontier.append(((pa, pb), div))
            seen.add((pa, pb))
    return frontier


def is_pareto_optimal(s: Scenario, outcome: Outcome) -> bool:
    """Whether an agreement outcome sits on the scenario's Pareto frontier."""
    if not outcome.is_agreement:
        return False
    points = {p for p, _ in pareto_frontier(s)}
    return (outcome.points_a, outcome.points_b) in points
