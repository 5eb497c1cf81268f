import json
import math

import numpy as np
import pytest

from bargain.env import Scenario
from bargain.errors import ContractError, DataError
from bargain.policy import ArchSpec, Policy
from bargain.tournament import (
    Grid,
    TournamentConfig,
    compare_proportions,
    heatmaps,
    load_grid,
    metrics,
    metrics_table,
    run_grid,
    run_pair,
    save_grid,
    scenario_list,
)

TABLE1 = Scenario(counts=(2, 1, 3), values_a=(1, 2, 2), values_b=(0, 7, 1))


def tiny_agents(n=3, hidden=6):
    return {
        f"agent{i}": Policy.init(ArchSpec(hidden=hidden, max_count=10), seed=50 + i)
        for i in range(n)
    }


class TestMetrics:
    EPISODES = [(8, 0, True), (5, 5, True), (0, 0, False), (7, 3, True)]

    def test_including_walkaways(self):
        row = metrics("x", self.EPISODES, include_walkaways=True)
        assert row.agent_points == 5.0
        assert row.joint_points == 7.0
        assert row.walkaway_pct == 25.0

    def test_excluding_walkaways(self):
        row = metrics("x", self.EPISODES, include_walkaways=False)
        assert math.isclose(row.agent_points, 20 / 3)
        assert math.isclose(row.joint_points, 28 / 3)
        assert row.walkaway_pct == 25.0

    def test_all_walkaways_undefined_mean(self):
        row = metrics("x", [(0, 0, False), (0, 0, False)], include_walkaways=False)
        assert row.agent_points is None
        assert row.joint_points is None
        assert row.walkaway_pct == 100.0

    def test_standard_error(self):
        row = metrics("x", self.EPISODES, include_walkaways=True)
        own = [8, 5, 0, 7]
        want = np.std(own, ddof=1) / 2.0
        assert math.isclose(row.agent_se, want)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            metrics("x", [], include_walkaways=True)


class TestCompareProportions:
    def test_identical_groups(self):
        res = compare_proportions(10, 100, 10, 100, seed=0)
        assert res["p_value"] > 0.9
        assert res["ci_low"] <= 0.0 <= res["ci_high"]

    def test_table3_like_gap_significant(self):
        # group sizes echoing the 9.71% vs 24.44% walkaway proportions
        res = compare_proportions(10, 103, 24, 98, seed=0)
        assert res["p_value"] < 0.05
        # hand computation of the continuity-corrected chi-square
        k1, n1, k2, n2 = 10, 103, 24, 98
        table = [[k1, n1 - k1], [k2, n2 - k2]]
        total = n1 + n2
        col1, col2 = k1 + k2, total - (k1 + k2)
        expected = [
            [n1 * col1 / total, n1 * col2 / total],
            [n2 * col1 / total, n2 * col2 / total],
        ]
        chi2 = sum(
            (abs(table[i][j] - expected[i][j]) - 0.5) ** 2 / expected[i][j]
            for i in range(2)
            for j in range(2)
        )
        assert math.isclose(res["chi2"], chi2, rel_tol=1e-9)

    def test_small_groups_rejected(self):
        with pytest.raises(ContractError):
            compare_proportions(1, 10, 2, 30)

    def test_degenerate_uses_exact_test(self):
        res = compare_proportions(0, 50, 0, 50, seed=0)
        assert res["method"] == "fisher_exact"
        assert res["p_value"] == 1.0

    def test_bootstrap_deterministic(self):
        a = compare_proportions(12, 100, 30, 100, seed=5)
        b = compare_proportions(12, 100, 30, 100, seed=5)
        assert a == b


class StubbornScripted:
    """Always demands everything; never agrees (cutoff every episode)."""

    def encoder(self, scenario, role):
        class E:
            h = None

            @staticmethod
            def push(act):
                pass

        return E()

    def choose_act(self, state, role, h, rng, temperature):
        from bargain.env import ActKind, DialogueAct, Division

        return DialogueAct(ActKind.PROPOSE, role, Division(state.scenario.counts)), 0.0

    def choose_output(self, scenario, role, h, rng=None, greedy=True):
        from bargain.env import Division

        return Division(scenario.counts), 0.0


class TestRunPair:
    def test_always_cutoff_pair(self):
        cfg = TournamentConfig(n_scenarios=5, symmetrize=True, seed=1)
        scenarios = scenario_list(cfg)
        result = run_pair(StubbornScripted(), StubbornScripted(), "s", "s", scenarios, cfg)
        assert result.n == 10
        assert result.walkaway_fraction == 1.0
        assert all(p == 0 for p in result.points("a"))

    def test_same_seed_identical(self):
        agents = tiny_agents(2)
        cfg = TournamentConfig(n_scenarios=4, temperature=1.0, seed=9)
        scenarios = scenario_list(cfg)
        a = run_pair(agents["agent0"], agents["agent1"], "x", "y", scenarios, cfg)
        b = run_pair(agents["agent0"], agents["agent1"], "x", "y", scenarios, cfg)
        assert a.episodes == b.episodes

    def test_episode_count(self):
        cfg = TournamentConfig(n_scenarios=3, symmetrize=False, seed=2)
        result = run_pair(
            StubbornScripted(), StubbornScripted(), "s", "s", scenario_list(cfg), cfg
        )
        assert result.n == 3

    def test_pareto_fraction(self):
        # an all-cutoff pair has no agreements at all, hence none on the frontier
        cfg = TournamentConfig(n_scenarios=3, seed=2)
        scenarios = scenario_list(cfg)
        result = run_pair(StubbornScripted(), StubbornScripted(), "s", "s", scenarios, cfg)
        assert result.pareto_fraction == 0.0
        agents = tiny_agents(2)
        result = run_pair(agents["agent0"], agents["agent1"], "x", "y", scenarios, cfg)
        assert 0.0 <= result.pareto_fraction <= 1.0
        summary = result.summary()
        assert set(summary) >= {"mean_a", "mean_b", "mean_joint", "walkaway_fraction", "pareto_fraction"}


class TestGrid:
    def test_heatmap_shapes_and_diagonal(self):
        agents = tiny_agents(3)
        cfg = TournamentConfig(n_scenarios=3, seed=4)
        grid = run_grid(agents, scenario_list(cfg), cfg)
        for metric in ("own_points", "joint_points", "walkaway_pct"):
            hm = heatmaps(grid, metric)
            assert len(hm["matrix"]) == 3
            assert all(len(row) == 3 for row in hm["matrix"])

    def test_missing_cell_error(self):
        grid = Grid(names=["a", "b"])
        with pytest.raises(ContractError):
            heatmaps(grid, "own_points")

    def test_unknown_metric(self):
        agents = tiny_agents(2)
        cfg = TournamentConfig(n_scenarios=2, seed=4)
        grid = run_grid(agents, scenario_list(cfg), cfg)
        with pytest.raises(ContractError):
            heatmaps(grid, "happiness")

    def test_save_load_reproduces_metrics(self, tmp_path):
        agents = tiny_agents(2)
        cfg = TournamentConfig(n_scenarios=3, seed=6)
        grid = run_grid(agents, scenario_list(cfg), cfg)
        save_grid(grid, tmp_path)
        loaded = load_grid(tmp_path)
        assert metrics_table(loaded) == metrics_table(grid)
        for metric in ("own_points", "joint_points", "walkaway_pct"):
            assert heatmaps(loaded, metric) == heatmaps(grid, metric)

    def test_byte_identical_rerun(self, tmp_path):
        agents = tiny_agents(2)
        cfg = TournamentConfig(n_scenarios=3, temperature=1.0, seed=7)
        for sub in ("a", "b"):
            grid = run_grid(agents, scenario_list(cfg), cfg)
            save_grid(grid, tmp_path / sub)
        for fname in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / fname).read_bytes() == (
                tmp_path / "b" / fname
            ).read_bytes(), fname

    def test_excluding_ge_including_when_walkaways(self):
        agents = tiny_agents(3)
        cfg = TournamentConfig(n_scenarios=4, temperature=1.0, seed=8)
        grid = run_grid(agents, scenario_list(cfg), cfg)
        table = metrics_table(grid)
        for row in table["rows"]:
            inc, exc = row["including"], row["excluding"]
            if inc["walkaway_pct"] > 0 and exc["agent_points"] is not None:
                assert exc["agent_points"] >= inc["agent_points"]
                assert exc["joint_points"] >= inc["joint_points"]

    def test_metrics_json_round_trip(self, tmp_path):
        agents = tiny_agents(2)
        cfg = TournamentConfig(n_scenarios=2, seed=10)
        grid = run_grid(agents, scenario_list(cfg), cfg)
        table = metrics_table(grid)
        assert json.loads(json.dumps(table)) == table
