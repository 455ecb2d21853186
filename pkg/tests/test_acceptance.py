import copy
import math

import numpy as np
import pytest

from ReplayLab.handler.config import RunConfig
from ReplayLab.handler.deformation import DeformationSpec
from ReplayLab.handler.graph_env import generate_graph
from ReplayLab.handler.harm_memory import FieldParams, HarmFields
from ReplayLab.handler.policies import Policy
from ReplayLab.handler.rsd_protocol import EpisodeSeeds, RsdConfig, run_rsd_episode
from ReplayLab.handler.run_storage import RunStorage
from ReplayLab.modules.baselines import MethodSuite, run_sweep

pytestmark = pytest.mark.slow

GRAPH_SEEDS = [0, 1, 2, 3, 4]
SUPPRESSION_METHODS = ["GE", "PM-ST", "RAPO", "RAPO-off@rep", "RAPO-slow"]
STATIONARY_METHODS = ["GE", "PM-ST", "PM-WIN"]

DESK_CONFIG = {
    "graph": {"nodes": 50, "seeds": GRAPH_SEEDS},
    "training": {"scripted_fallback": "MODERATE"},
    "seeds": {"master": 0, "episodes": 10},
    "methods": SUPPRESSION_METHODS,
}


def _desk_config(**sections):
    data = copy.deepcopy(DESK_CONFIG)
    for section, values in sections.items():
        if isinstance(values, dict):
            data.setdefault(section, {}).update(values)
        else:
            data[section] = values
    return RunConfig(data)


@pytest.fixture(scope="module")
def suppression(tmp_path_factory):
    """The desk-scale suite with its per-graph and pooled rows."""
    suite = MethodSuite(_desk_config(), RunStorage(str(tmp_path_factory.mktemp("suppression"))))
    rows = suite.run(SUPPRESSION_METHODS)
    summary = {row["method"]: row for row in suite.summary_rows(SUPPRESSION_METHODS)}
    return suite, rows, summary


class TestNoGo:
    def test_paired_replay_is_bit_identical(self):
        config = RsdConfig(T_exp=120, T_decay=30, T_rep=120, z=1, k_seed=3, rng_mode="paired", snapshot_every=60)
        matched = 0
        for graph_seed in GRAPH_SEEDS:
            graph = generate_graph(50, seed=graph_seed)
            policy = Policy()
            policy.params["W"] = np.random.default_rng(graph_seed).normal(size=policy.params["W"].shape)
            policy.freeze()
            for episode_seed in range(40):
                fields = HarmFields.zeros(graph.region_count, FieldParams(delay=50))
                record = run_rsd_episode(config, policy, graph, fields, DeformationSpec(mode="off"),
                                         EpisodeSeeds(graph_seed=graph_seed, episode_seed=episode_seed))
                matched += record.exposure.trajectory_hash == record.replay.trajectory_hash
        assert matched == 200

    def test_stationary_methods_do_not_shift(self, tmp_path):
        config = _desk_config(seeds={"episodes": 40}, methods=STATIONARY_METHODS)
        suite = MethodSuite(config, RunStorage(str(tmp_path / "stationary")))
        suite.run(STATIONARY_METHODS)
        for row in suite.summary_rows(STATIONARY_METHODS):
            assert row["episodes"] == 200
            assert 0.9 <= row["rag_mean"] <= 1.1, row["method"]
            assert row["reach_ks_p"] > 0.01, row["method"]


class TestReplaySuppression:
    @pytest.mark.parametrize("column", ["rag_mean", "auc_r_mean", "sm_r_mean"])
    def test_ordering(self, suppression, column):
        _, _, summary = suppression
        rapo, control, counterfactual = summary["RAPO"][column], summary["PM-ST"][column], \
            summary["RAPO-off@rep"][column]
        assert rapo < 0.6
        assert 0.85 <= control <= 1.15
        assert counterfactual > 0.75
        assert counterfactual >= rapo + 0.2
        assert 0.85 <= summary["GE"][column] <= 1.2

    def test_counterfactual_shares_the_checkpoint(self, suppression):
        suite, _, _ = suppression
        for graph_seed in GRAPH_SEEDS:
            assert suite.storage.checkpoint_hash("RAPO-off@rep", graph_seed) == \
                suite.storage.checkpoint_hash("RAPO", graph_seed)

    def test_slow_decay_still_suppresses(self, suppression):
        _, _, summary = suppression
        assert summary["RAPO-slow"]["rag_mean"] < 0.7


class TestOddsMechanism:
    def test_odds_contract_only_under_deformation(self, suppression):
        _, _, summary = suppression
        assert summary["RAPO"]["odds_ratio_mean"] < 0.7
        for method in ("PM-ST", "GE"):
            assert 0.9 <= summary[method]["odds_ratio_mean"] <= 1.1

    def test_odds_never_exceed_their_bound(self, suppression):
        _, _, summary = suppression
        assert all(row["odds_bound_violations"] == 0 for row in summary.values())

    def test_odds_track_replay_gain(self, suppression):
        suite, rows, _ = suppression
        defined = [row for row in rows if not math.isnan(row["odds_ratio_mean"])]
        assert len(defined) >= 20
        rho, _ = suite.correlation(defined)
        assert rho > 0.5


class TestUtility:
    def test_rapo_keeps_most_of_the_return(self, suppression):
        _, _, summary = suppression
        assert summary["RAPO"]["replay_ret_mean"] >= 0.6

    def test_gain_falls_with_scar_weight(self, tmp_path):
        config = _desk_config(sweep={"w_H": [0.5, 1.0, 2.0, 4.0], "eta": [0.05]}, methods=["GE", "RAPO"])
        rows = run_sweep(config, RunStorage(str(tmp_path / "sweep")))
        rags = [row["rag"] for row in rows]
        pairs = list(zip(rags, rags[1:]))
        non_increasing = sum(later <= earlier for earlier, later in pairs)
        assert non_increasing >= 0.75 * len(pairs)
