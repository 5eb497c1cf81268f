"""Round-robin agent-agent evaluation: paired rollouts, the points/walkaway
metric suite (including and excluding walkaways), heatmap matrices, and
proportion tests.

All cells share one seeded scenario list for comparability; greedy act
selection by default makes full grids byte-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from .env import PoolStats, Scenario, Speaker, is_pareto_optimal, sample_scenario
from .errors import ContractError, DataError
from .selfplay import Episode, TrainerConfig, episode_to_json, rollout

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TournamentConfig:
    n_scenarios: int = 194
    symmetrize: bool = True  # play each scenario in both role orders
    temperature: float = 0.0  # 0 = greedy decoding
    cutoff: int = 20
    seed: int = 0

    @property
    def episodes_per_pair(self) -> int:
        return self.n_scenarios * (2 if self.symmetrize else 1)


def scenario_list(cfg: TournamentConfig, pool: PoolStats | None = None) -> list[Scenario]:
    """The shared seeded scenario list used by every grid cell."""
    rng = np.random.default_rng(cfg.seed)
    return [sample_scenario(rng, pool) for _ in range(cfg.n_scenarios)]


@dataclass
class PairResult:
    agent_a: str
    agent_b: str
    episodes: list[Episode] = field(default_factory=list)

    def points(self, side: str) -> list[float]:
        out = []
        for ep in self.episodes:
            mine = ep.outcome.points_a if ep.learner_role is Speaker.A else ep.outcome.points_b
            theirs = ep.outcome.points_b if ep.learner_role is Speaker.A else ep.outcome.points_a
            out.append(float(mine if side == "a" else theirs))
        return out

    @property
    def n(self) -> int:
        return len(self.episodes)

    @property
    def walkaway_fraction(self) -> float:
        return sum(not ep.outcome.is_agreement for ep in self.episodes) / self.n

    @property
    def pareto_fraction(self) -> float:
        hits = sum(is_pareto_optimal(ep.scenario, ep.outcome) for ep in self.episodes)
        return hits / self.n

    def summary(self) -> dict:
        a, b = self.points("a"), self.points("b")
        joint = [x + y for x, y in zip(a, b)]
        return {
            "agent_a": self.agent_a,
            "agent_b": self.agent_b,
            "n": self.n,
            "mean_a": _mean(a),
            "se_a": _se(a),
            "mean_b": _mean(b),
            "se_b": _se(b),
            "mean_joint": _mean(joint),
            "walkaway_fraction": self.walkaway_fraction,
            "pareto_fraction": self.pareto_fraction,
        }


def _mean(xs) -> float | None:
    return float(np.mean(xs)) if len(xs) else None


def _se(xs) -> float | None:
    if len(xs) < 2:
        return None
    return float(np.std(xs, ddof=1) / math.sqrt(len(xs)))


def run_pair(
    agent_a,
    agent_b,
    name_a: str,
    name_b: str,
    scenarios: list[Scenario],
    cfg: TournamentConfig,
) -> PairResult:
    """All episodes for one grid cell. ``agent_a`` is the row agent; its
    points are tracked via the episode's learner seat."""
    t_cfg = TrainerConfig(
        episodes=0, cutoff=cfg.cutoff, seed=cfg.seed, learner_temperature=cfg.temperature,
        partner_temperature=cfg.temperature,
    )
    result = PairResult(agent_a=name_a, agent_b=name_b)
    greedy = cfg.temperature == 0.0
    for i, scenario in enumerate(scenarios):
        orders = (Speaker.A, Speaker.B) if cfg.symmetrize else (Speaker.A,)
        for role in orders:
            rng = np.random.default_rng((cfg.seed, i, 0 if role is Speaker.A else 1))
            ep = rollout(
                agent_a, agent_b, scenario, t_cfg, rng,
                learner_role=role, greedy=greedy, sample_output=False,
            )
            result.episodes.append(ep)
    return result


@dataclass(frozen=True)
class MetricRow:
    """One Table-style row: the row agent's view over a set of episodes."""

    agent: str
    n: int
    agent_points: float | None
    agent_se: float | None
    partner_points: float | None
    partner_se: float | None
    joint_points: float | None
    joint_se: float | None
    walkaway_pct: float


def metrics(
    agent: str, episode_points: list[tuple[float, float, bool]], include_walkaways: bool
) -> MetricRow:
    """Aggregate (agent_points, partner_points, is_agreement) tuples.

    Excluding-walkaways mode filters non-agreements before averaging; with
    zero agreements the means are undefined (None), never a crash.
    """
    if not episode_points:
        raise DataError("no episodes to aggregate")
    n = len(episode_points)
    walkaway_pct = 100.0 * sum(1 for _, _, agreed in episode_points if not agreed) / n
    rows = episode_points if include_walkaways else [r for r in episode_points if r[2]]
    if not rows:
        return MetricRow(agent, n, None, None, None, None, None, None, walkaway_pct)
    own = [r[0] for r in rows]
    other = [r[1] for r in rows]
    joint = [a + b for a, b in zip(own, other)]
    return MetricRow(
        agent=agent,
        n=n,
        agent_points=_mean(own),
        agent_se=_se(own),
        partner_points=_mean(other),
        partner_se=_se(other),
        joint_points=_mean(joint),
        joint_se=_se(joint),
        walkaway_pct=walkaway_pct,
    )


def episode_point_rows(result: PairResult, side: str) -> list[tuple[float, float, bool]]:
    own = result.points(side)
    other = result.points("b" if side == "a" else "a")
    return [
        (o, p, ep.outcome.is_agreement)
        for o, p, ep in zip(own, other, result.episodes)
    ]


@dataclass
class Grid:
    """A complete round-robin over named agents."""

    names: list[str]
    cells: dict[tuple[str, str], PairResult] = field(default_factory=dict)

    def require_complete(self) -> None:
        missing = [
            (a, b) for a in self.names for b in self.names if (a, b) not in self.cells
        ]
        if missing:
            raise ContractError(f"incomplete grid; missing pairs: {missing[:6]}")

    def agent_rows(self, agent: str) -> list[tuple[float, float, bool]]:
        """Every episode of the agent's row cells, from its own side.

        Both orientations of each unordered pair are stored, so iterating
        row cells only counts every episode exactly once per agent.
        """
        rows = []
        for b in self.names:
            result = self.cells.get((agent, b))
            if result is not None:
                rows.extend(episode_point_rows(result, "a"))
        return rows


def run_grid(agents: dict[str, object], scenarios, cfg: TournamentConfig) -> Grid:
    """Row agent vs column agent for every ordered... unordered pair; the
    cell (a, b) holds a's episodes as the learner seat."""
    names = list(agents)
    grid = Grid(names=names)
    for i, a in enumerate(names):
        for b in names[i:]:
            result = run_pair(agents[a], agents[b], a, b, scenarios, cfg)
            grid.cells[(a, b)] = result
            if a != b:
                grid.cells[(b, a)] = _flip_pair(result)
    return grid


def _flip_pair(result: PairResult) -> PairResult:
    flipped = PairResult(agent_a=result.agent_b, agent_b=result.agent_a)
    for ep in result.episodes:
        flipped.episodes.append(
            Episode(
                scenario=ep.scenario,
                learner_role=ep.learner_role.other,
                acts=ep.acts,
                learner_steps=(),
                output_take=None,
                output_logprob=None,
                outcome=ep.outcome,
                reward=0.0,
            )
        )
    return flipped


def heatmaps(grid: Grid, metric: str) -> dict:
    """Machine-readable matrix for one metric.

    metric: "own_points" (row agent's mean), "joint_points", or
    "walkaway_pct". Cell [i][j] aggregates the row agent's episodes
    against column agent j.
    """
    grid.require_complete()
    if metric not in ("own_points", "joint_points", "walkaway_pct"):
        raise ContractError(f"unknown heatmap metric {metric!r}")
    matrix = []
    for a in grid.names:
        row = []
        for b in grid.names:
            rows = episode_point_rows(grid.cells[(a, b)], "a")
            m = metrics(a, rows, include_walkaways=True)
            value = {
                "own_points": m.agent_points,
                "joint_points": m.joint_points,
                "walkaway_pct": m.walkaway_pct,
            }[metric]
            row.append(value)
        matrix.append(row)
    return {
        "v": REPORT_SCHEMA_VERSION,
        "metric": metric,
        "agents": grid.names,
        "matrix": matrix,
    }


def compare_proportions(k1: int, n1: int, k2: int, n2: int, seed: int = 0) -> dict:
    """Chi-square (continuity-corrected) test that two walkaway proportions
    differ, with a seeded bootstrap CI for p1 - p2.

    Degenerate tables (a zero row/column) fall back to Fisher's exact test.
    """
    if min(n1, n2) < 20:
        raise ContractError("need at least 20 observations per group")
    table = np.array([[k1, n1 - k1], [k2, n2 - k2]])
    degenerate = (table.sum(axis=0) == 0).any() or (table.sum(axis=1) == 0).any()
    if degenerate:
        _, p = scipy_stats.fisher_exact(table)
        chi2 = float("nan")
        method = "fisher_exact"
    else:
        chi2, p, _, _ = scipy_stats.chi2_contingency(table, correction=True)
        method = "chi2_continuity"
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(2000):
        b1 = rng.binomial(n1, k1 / n1) / n1
        b2 = rng.binomial(n2, k2 / n2) / n2
        boots.append(b1 - b2)
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return {
        "chi2": float(chi2),
        "p_value": float(p),
        "diff": k1 / n1 - k2 / n2,
        "ci_low": float(lo),
        "ci_high": float(hi),
        "method": method,
    }


# ── persistence ───────────────────────────────────────────────────────


def save_grid(grid: Grid, path) -> None:
    """Line-delimited episodes per cell plus a summary JSON (no timestamps)."""
    import pathlib

    out = pathlib.Path(path)
    out.mkdir(parents=True, exist_ok=True)
    index = {"v": REPORT_SCHEMA_VERSION, "agents": grid.names, "cells": []}
    for (a, b), result in sorted(grid.cells.items()):
        if a > b:
            continue  # the flipped view is derivable
        fname = f"cell_{grid.names.index(a)}_{grid.names.index(b)}.jsonl"
        with open(out / fname, "w") as fh:
            for ep in result.episodes:
                fh.write(episode_to_json(ep) + "\n")
        index["cells"].append({"a": a, "b": b, "file": fname, "n": result.n})
    (out / "grid.json").write_text(json.dumps(index, indent=2, sort_keys=True))


def load_grid(path) -> Grid:
    import pathlib

    out = pathlib.Path(path)
    index = json.loads((out / "grid.json").read_text())
    grid = Grid(names=index["agents"])
    from .selfplay import episode_from_json

    for cell in index["cells"]:
        result = PairResult(agent_a=cell["a"], agent_b=cell["b"])
        with open(out / cell["file"]) as fh:
            for line in fh:
                result.episodes.append(episode_from_json(line))
        grid.cells[(cell["a"], cell["b"])] = result
        if cell["a"] != cell["b"]:
            grid.cells[(cell["b"], cell["a"])] = _flip_pair(result)
    return grid


def metrics_table(grid: Grid) -> dict:
    """Per-agent rows over the whole pool, incl./excl. walkaways."""
    grid.require_complete()
    rows = []
    for agent in grid.names:
        data = grid.agent_rows(agent)
        incl = metrics(agent, data, include_walkaways=True)
        excl = metrics(agent, data, include_walkaways=False)
        rows.append({"agent": agent, "including": incl.__dict__, "excluding": excl.__dict__})
    return {"v": REPORT_SCHEMA_VERSION, "rows": rows}
