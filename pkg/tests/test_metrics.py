import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from ReplayLab.handler.deformation import DeformationSpec
from ReplayLab.handler.rsd_protocol import PhaseSeries, RsdEpisodeRecord
from ReplayLab.modules.metrics import (
    REPORT_COLUMNS, action_shift_distance, aggregate, containment_radius, discounted_return, episode_metrics,
    ge_reference, odds_bound_violations, odds_rag_correlation, odds_ratio_series, peak_ks, reach_peak_ks,
    replay_ratios, replay_return, significance_rows, welch_test,
)
from ReplayLab.utility.errors import ProtocolError

UNIFORM = [1 / 3, 1 / 3, 1 / 3]
NO_FRONTIER = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0]


def _series(reach, sens=None, rewards=None, probs=None, odds=None, final_active=()):
    n = len(reach)
    return PhaseSeries(
        reach=list(reach),
        sens=list(sens) if sens is not None else [0] * n,
        rewards=list(rewards) if rewards is not None else [0.0] * n,
        harms=[0.0] * n,
        actions=[1] * n,
        action_probs=list(probs) if probs is not None else [UNIFORM] * n,
        odds=list(odds) if odds is not None else [NO_FRONTIER] * n,
        final_active=list(final_active),
    )


def _record(exposure, replay, seeds=(0,), episode_seed=0, shield_transitions=0):
    return RsdEpisodeRecord(
        method="RAPO", graph_seed=0, episode_seed=episode_seed, z=1, seeds=list(seeds), config_hash="",
        policy_hash="", rng_mode="independent", counterfactual=False, field_reset="persist",
        phases={"exposure": exposure, "decay": _series([0]), "replay": replay},
        shield_transitions=shield_transitions,
    )


class TestReplayRatios:
    def test_ratios(self):
        record = _record(_series([1, 4, 2], sens=[0, 2, 2]), _series([1, 2, 1], sens=[0, 1, 1]))
        rag, auc_r, sm_r = replay_ratios(record)
        assert_allclose([rag, auc_r, sm_r], [0.5, 4 / 7, 0.5], rtol=1e-7)

    def test_nothing_in_exposure_stays_finite(self):
        rag, _, _ = replay_ratios(_record(_series([0, 0]), _series([0, 0])))
        assert rag == 0.0

    def test_sm_r_undefined_without_sensitive_exposure(self):
        _, _, sm_r = replay_ratios(_record(_series([1, 2]), _series([1, 1], sens=[0, 1])))
        assert math.isnan(sm_r)


class TestReplayReturn:
    def test_example(self):
        record = _record(_series([1, 1]), _series([1, 1], rewards=[1.0, 1.0]))
        assert_allclose(replay_return(record, 3.0, 0.99), 1.99 / 3, rtol=1e-12)

    @pytest.mark.parametrize("reference", [None, 0.0, -1.0])
    def test_needs_positive_reference(self, reference):
        record = _record(_series([1]), _series([1], rewards=[1.0]))
        with pytest.raises(ProtocolError):
            replay_return(record, reference)

    def test_ge_reference_is_mean_return(self):
        records = [_record(_series([1]), _series([1, 1], rewards=[r, 0.0])) for r in (1.0, 3.0)]
        assert_allclose(ge_reference(records), 2.0)

    def test_ge_reference_empty(self):
        with pytest.raises(ProtocolError):
            ge_reference([])

    def test_discounted_return(self):
        assert_allclose(discounted_return([1.0, 1.0, 1.0], 0.5), 1.75)


class TestActionShift:
    def test_example(self):
        record = _record(_series([1], probs=[[0.5, 0.5, 0.0]]), _series([1], probs=[[0.5, 0.25, 0.25]]))
        assert_allclose(action_shift_distance(record), 0.25)

    def test_scripted_policy_has_no_shift(self):
        probs = [[0.0, 1.0, 0.0]] * 3
        assert action_shift_distance(_record(_series([1] * 3, probs=probs), _series([1] * 3, probs=probs))) == 0.0

    def test_matched_on_the_shorter_phase(self):
        record = _record(_series([1, 1], probs=[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
                         _series([1], probs=[[0.0, 1.0, 0.0]]))
        assert_allclose(action_shift_distance(record), 1.0)


class TestOdds:
    def test_ratio_and_skip(self):
        odds = [[0.1, 0.9, 0.5, 0.5, 0.2, 1.0], NO_FRONTIER]
        series = odds_ratio_series(_record(_series([1]), _series([1, 1], odds=odds)))
        assert_allclose(series.ratios, [1 / 9])
        assert series.steps.tolist() == [0]
        assert series.skipped == 1

    def test_bound_violations(self):
        odds = [
            [0.1, 0.9, 0.5, 0.5, 1.0, 0.0],
            [0.5, 0.5, 0.5, 0.5, 1.0, 0.0],
            [0.5, 0.5, 0.5, 0.5, 0.0, 0.0],
            NO_FRONTIER,
        ]
        record = _record(_series([1]), _series([1] * 4, odds=odds))
        assert odds_bound_violations(record, DeformationSpec(w_H=2.0, psi_min=0.01)) == 1

    def test_floor_caps_the_bound(self):
        odds = [[0.005, 1.0, 0.5, 0.5, 5.0, 0.0], [0.02, 1.0, 0.5, 0.5, 5.0, 0.0]]
        record = _record(_series([1]), _series([1, 1], odds=odds))
        assert odds_bound_violations(record, DeformationSpec(w_H=2.0, psi_min=0.01)) == 1
        assert odds_bound_violations(record, DeformationSpec(w_H=2.0, psi_min=0.05)) == 0

    def test_safe_scar_loosens_the_bound(self):
        odds = [[0.5, 0.5, 0.5, 0.5, 0.5, 1.0]]
        record = _record(_series([1]), _series([1], odds=odds))
        assert odds_bound_violations(record, DeformationSpec(w_H=2.0)) == 0

    def test_episode_counts_violations(self, path_graph):
        odds = [[0.5, 0.5, 0.5, 0.5, 1.0, 0.0]]
        record = _record(_series([1]), _series([1], odds=odds))
        assert episode_metrics(record, path_graph, 1.0, deform=DeformationSpec(w_H=2.0)).odds_violations == 1
        assert episode_metrics(record, path_graph, 1.0, deform=DeformationSpec(w_H=0.0)).odds_violations == 0

    def test_all_skipped_gives_nan_mean(self, path_graph):
        record = _record(_series([1]), _series([1]))
        assert math.isnan(episode_metrics(record, path_graph, 1.0).odds_ratio)


class TestContainment:
    def test_radius(self, path_graph):
        record = _record(_series([1]), _series([3], final_active=[0, 1, 2]))
        assert containment_radius(record, path_graph) == 2

    def test_seed_only(self, path_graph):
        record = _record(_series([1]), _series([1], final_active=[0]))
        assert containment_radius(record, path_graph) == 0

    def test_nothing_active(self, path_graph):
        assert containment_radius(_record(_series([0]), _series([0])), path_graph) == 0


class TestAggregate:
    def test_row(self, path_graph):
        records = [
            _record(_series([2]), _series([1], rewards=[1.0]), episode_seed=1, shield_transitions=6),
            _record(_series([2]), _series([2], rewards=[1.0]), episode_seed=0),
        ]
        reports = [episode_metrics(r, path_graph, 1.0) for r in records]
        row = aggregate("RAPO", 0, reports)
        assert tuple(row) == REPORT_COLUMNS
        assert row["episodes"] == 2
        assert_allclose(row["rag_mean"], 0.75, rtol=1e-7)
        assert_allclose(row["rag_std"], np.std([0.5, 1.0], ddof=1), rtol=1e-7)
        assert_allclose(row["replay_ret_mean"], 1.0)
        assert_allclose(row["shield_transitions_per_step"], 1.0)
        assert math.isnan(row["odds_ratio_mean"])
        assert row["odds_bound_violations"] == 0
        assert row["sm_r_undefined"] == 2
        assert math.isnan(row["sm_r_mean"])
        assert row["reach_ks_stat"] == 0.5

    def test_undefined_sm_r_left_out_of_the_mean(self, path_graph):
        records = [
            _record(_series([2], sens=[1]), _series([1], sens=[1], rewards=[1.0]), episode_seed=0),
            _record(_series([2], sens=[2]), _series([1], sens=[1], rewards=[1.0]), episode_seed=1),
            _record(_series([2]), _series([1], sens=[1], rewards=[1.0]), episode_seed=2),
        ]
        row = aggregate("RAPO", 0, [episode_metrics(r, path_graph, 1.0) for r in records])
        assert row["sm_r_undefined"] == 1
        assert_allclose(row["sm_r_mean"], 0.75, rtol=1e-7)
        assert_allclose(row["sm_r_std"], np.std([1.0, 0.5], ddof=1), rtol=1e-6)

    def test_single_episode_std_is_zero(self, path_graph):
        report = episode_metrics(_record(_series([2]), _series([1], rewards=[1.0])), path_graph, 1.0)
        assert aggregate("GE", "all", [report])["rag_std"] == 0.0


class TestStatistics:
    def test_welch_matches_scipy(self):
        a, b = [1.0, 2.0, 3.0, 4.0], [2.0, 3.5, 4.0, 6.0]
        result = welch_test(a, b)
        expected = stats.ttest_ind(a, b, equal_var=False)
        assert_allclose([result.t, result.p_value], [expected.statistic, expected.pvalue])
        assert_allclose(result.diff, np.mean(a) - np.mean(b))
        assert result.ci_low < result.diff < result.ci_high
        assert_allclose(result.diff - result.ci_low, result.ci_high - result.diff)

    def test_welch_degenerate(self):
        result = welch_test([1.0, 1.0], [1.0, 1.0])
        assert math.isnan(result.t)
        assert result.diff == 0.0

    def test_significance_rows(self):
        rows = significance_rows({"PM-ST": [1.0, 1.1, 0.9, 1.0], "RAPO": [0.2, 0.25, 0.15, 0.2]})
        assert [r["method"] for r in rows] == ["RAPO"]
        assert rows[0]["significant"]
        assert rows[0]["diff"] < 0

    def test_significance_without_reference(self):
        assert significance_rows({"RAPO": [0.2, 0.3]}) == []

    def test_correlation(self):
        rho, _ = odds_rag_correlation([0.1, 0.2, 0.3, 0.4], [1.0, 2.0, 3.0, 5.0])
        assert_allclose(rho, 1.0)

    def test_correlation_needs_three_runs(self):
        rho, p_value = odds_rag_correlation([0.1, float("nan"), 0.3], [1.0, 2.0, 3.0])
        assert math.isnan(rho) and math.isnan(p_value)

    def test_reach_peak_ks(self):
        records = [_record(_series([k]), _series([k])) for k in range(1, 6)]
        statistic, p_value = reach_peak_ks(records)
        assert statistic == 0.0
        assert p_value == 1.0

    def test_peak_ks_separates_shifted_peaks(self):
        statistic, p_value = peak_ks([10, 11, 12, 13, 14, 15], [1, 2, 3, 4, 5, 6])
        assert statistic == 1.0
        assert p_value < 0.01

    def test_peak_ks_empty_sample(self):
        assert all(math.isnan(v) for v in peak_ks([], [1, 2]))
