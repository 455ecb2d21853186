import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ReplayLab.handler.config import RunConfig
from ReplayLab.handler.deformation import DeformationSpec
from ReplayLab.handler.graph_env import Action, initial_state
from ReplayLab.handler.harm_memory import FieldParams
from ReplayLab.handler.policies import Policy, TrainingConfig
from ReplayLab.handler.run_storage import RunStorage
from ReplayLab.modules.baselines import (
    METHOD_REGISTRY, MethodSuite, check_control_identity, collect_batch, evaluation_order, local_regions,
    method_config, method_deformation, run_sweep, shield_filter, train_method, tune_shield_um,
)
from ReplayLab.utility.errors import InvalidArgumentError, ProtocolError


class TestRegistry:
    def test_every_method_registered(self):
        assert set(METHOD_REGISTRY) == {
            "GE", "SS", "DR", "Shield", "Shield-UM", "PM-ST", "PM-WIN",
            "RAPO", "RAPO-off@rep", "RAPO-topk", "RAPO-local", "RAPO-slow",
        }

    def test_unknown_method(self):
        with pytest.raises(InvalidArgumentError):
            method_config("Oracle")

    def test_matched_control_differs_only_in_deformation(self):
        check_control_identity(method_config("PM-ST"), method_config("RAPO"))
        assert method_config("PM-ST").deform_mode == "off"
        assert method_config("RAPO").deform_mode == "full"

    def test_control_identity_rejects_other_pairs(self):
        with pytest.raises(ProtocolError):
            check_control_identity(method_config("GE"), method_config("RAPO"))

    def test_wirings(self):
        assert method_config("SS").cost_mode == "instantaneous"
        assert method_config("DR").cost_mode == "delayed"
        assert method_config("PM-WIN").policy_kind == "window_history"
        assert method_config("RAPO-slow").retention == 0.99
        assert method_config("RAPO-off@rep").source == "RAPO"
        assert not method_config("Shield").trains

    @pytest.mark.parametrize("methods, expected", [
        (["SS"], ["GE", "SS"]),
        (["RAPO-off@rep"], ["GE", "RAPO", "RAPO-off@rep"]),
        (["Shield-UM", "DR"], ["GE", "DR", "RAPO", "Shield-UM"]),
        (["Shield-UM", "RAPO-off@rep"], ["GE", "RAPO", "RAPO-off@rep", "Shield-UM"]),
    ])
    def test_evaluation_order(self, methods, expected):
        assert evaluation_order(methods) == expected

    def test_local_regions(self, gateway_graph):
        assert local_regions(gateway_graph) == frozenset({1, 2, 3, 4})
        spec = method_deformation(method_config("RAPO-local"), gateway_graph, DeformationSpec())
        assert spec.mode == "local" and spec.regions == frozenset({1, 2, 3, 4})


class TestShield:
    def _state(self, graph):
        return initial_state(graph, 1, delay=2, phase_horizon=10, k_seed=1)

    def test_infinite_threshold_allows_everything(self, gateway_graph):
        decision = shield_filter(self._state(gateway_graph), gateway_graph, math.inf, 3, 5, (0, 0, 0, 0))
        assert decision.allowed.all()
        assert decision.transitions == 3 * 5 * 3

    def test_negative_threshold_keeps_conservative(self, gateway_graph):
        decision = shield_filter(self._state(gateway_graph), gateway_graph, -1.0, 2, 4, (0, 0, 0, 0))
        assert_array_equal(decision.allowed, [False, False, True])

    def test_masses_see_the_sensitive_gateway(self, gateway_graph):
        decision = shield_filter(self._state(gateway_graph), gateway_graph, 0.0, 2, 4, (0, 0, 0, 0))
        assert np.all(decision.masses > 0)

    def test_deterministic_per_key(self, small_graph):
        state = initial_state(small_graph, 2, delay=5, phase_horizon=20)
        a = shield_filter(state, small_graph, 1.0, 4, 6, (1, 2, 0, 3))
        b = shield_filter(state, small_graph, 1.0, 4, 6, (1, 2, 0, 3))
        assert_array_equal(a.masses, b.masses)

    def test_needs_rollouts(self, gateway_graph):
        with pytest.raises(InvalidArgumentError):
            shield_filter(self._state(gateway_graph), gateway_graph, 1.0, 0, 4, (0,))


class TestShieldTuning:
    @staticmethod
    def _evaluate(threshold):
        return min(max(threshold, 0.0), 100.0) / 100.0

    def test_bisection_meets_target(self):
        tuning = tune_shield_um(0.5, self._evaluate, (-1.0, 100.0), tolerance=0.01, iterations=20)
        assert tuning.met and not tuning.boundary
        assert abs(tuning.achieved - 0.5) <= 0.01

    def test_target_above_unshielded(self):
        tuning = tune_shield_um(2.0, self._evaluate, (-1.0, 100.0))
        assert tuning.boundary and not tuning.met
        assert tuning.threshold == 100.0

    def test_target_below_fully_shielded(self):
        tuning = tune_shield_um(-1.0, self._evaluate, (-1.0, 100.0))
        assert tuning.boundary and tuning.threshold == -1.0

    def test_budget_exhausted_keeps_best(self):
        tuning = tune_shield_um(0.5, self._evaluate, (-1.0, 100.0), tolerance=1e-9, iterations=3)
        assert not tuning.met and not tuning.boundary
        assert tuning.iterations == 3
        assert abs(tuning.achieved - 0.5) < 0.2


class TestTraining:
    def test_collect_batch_shape(self, small_graph):
        config = TrainingConfig(batch_steps=25, episode_steps=10)
        batch = collect_batch(Policy(), small_graph, FieldParams(delay=3), DeformationSpec(), config, (6, 0))
        assert len(batch) == 25
        assert np.flatnonzero(batch.episode_ends).tolist() == [9, 19, 24]
        assert batch.g_sums[0] == 0.0

    def test_training_is_deterministic(self, tiny_config, small_graph):
        config = RunConfig(tiny_config)
        a = train_method(method_config("RAPO"), small_graph, config)
        b = train_method(method_config("RAPO"), small_graph, config)
        assert a.policy.frozen and b.policy.frozen
        assert a.policy.weights_hash() == b.policy.weights_hash()
        assert a.updates == 2
        assert a.duals() == b.duals()

    def test_scripted_fallback(self, tiny_config, small_graph):
        tiny_config["training"]["scripted_fallback"] = "CONSERVATIVE"
        trainer = train_method(method_config("DR"), small_graph, RunConfig(tiny_config))
        assert trainer.policy.kind == "scripted"
        assert trainer.policy.scripted_action == Action.CONSERVATIVE
        assert trainer.updates == 0


class TestSuite:
    @pytest.fixture
    def suite_run(self, tiny_config, tmp_path):
        tiny_config["methods"] = ["GE", "PM-ST", "RAPO", "RAPO-off@rep", "Shield"]
        config = RunConfig(tiny_config)
        storage = RunStorage(str(tmp_path / "run"))
        suite = MethodSuite(config, storage)
        rows = suite.run()
        return config, storage, suite, rows

    def test_rows_and_files(self, suite_run):
        config, storage, suite, rows = suite_run
        assert [r["method"] for r in rows] == config.methods
        assert all(r["episodes"] == 2 for r in rows)
        for name in ("report.csv", "summary.csv", "significance.csv"):
            with open(storage.path(name), encoding="utf-8") as handle:
                assert handle.readline().startswith("method,")
        assert set(suite.status) == set(config.methods)

    def test_counterfactual_reuses_the_checkpoint(self, suite_run):
        _, storage, suite, _ = suite_run
        assert storage.checkpoint_hash("RAPO-off@rep", 0) == storage.checkpoint_hash("RAPO", 0)
        assert storage.checkpoint_hash("Shield", 0) == storage.checkpoint_hash("GE", 0)
        treated = suite.results[("RAPO", 0)].records
        counterfactual = suite.results[("RAPO-off@rep", 0)].records
        assert all(r.counterfactual for r in counterfactual)
        assert [r.exposure.trajectory_hash for r in treated] == \
            [r.exposure.trajectory_hash for r in counterfactual]

    def test_shield_accounts_transitions(self, suite_run):
        _, _, suite, _ = suite_run
        record = suite.results[("Shield", 0)].records[0]
        assert record.shield_transitions == 2 * 3 * 3 * record.total_steps

    def test_restore_matches_the_run(self, suite_run):
        config, storage, suite, _ = suite_run
        fresh = MethodSuite(config, storage)
        for method_id in evaluation_order(config.methods):
            fresh.restore(method_id, 0)
        for method_id in config.methods:
            assert [r.rag for r in fresh.results[(method_id, 0)].reports] == \
                [r.rag for r in suite.results[(method_id, 0)].reports]

    def test_evaluate_needs_ge_reference(self, tiny_config, tmp_path):
        suite = MethodSuite(RunConfig(tiny_config), RunStorage(str(tmp_path / "run")))
        suite.train("SS", 0)
        with pytest.raises(ProtocolError):
            suite.evaluate("SS", 0)

    def test_shield_um_needs_rapo(self, tiny_config, tmp_path):
        suite = MethodSuite(RunConfig(tiny_config), RunStorage(str(tmp_path / "run")))
        suite.evaluate("GE", 0, suite.train("GE", 0))
        suite.train("Shield-UM", 0)
        with pytest.raises(ProtocolError):
            suite.evaluate("Shield-UM", 0)

    def test_dependent_needs_source_checkpoint(self, tiny_config, tmp_path):
        suite = MethodSuite(RunConfig(tiny_config), RunStorage(str(tmp_path / "run")))
        with pytest.raises(ProtocolError):
            suite.train("RAPO-off@rep", 0)


class TestSweep:
    def test_grid_rows(self, tiny_config, tmp_path):
        storage = RunStorage(str(tmp_path / "run"))
        rows = run_sweep(RunConfig(tiny_config), storage)
        assert [(r["w_H"], r["eta"]) for r in rows] == [(1.0, 0.05), (2.0, 0.05)]
        with open(storage.path("sweep.csv"), encoding="utf-8") as handle:
            assert len(handle.readlines()) == 3


@pytest.mark.slow
class TestWorkers:
    def test_worker_count_does_not_change_records(self, tiny_config, tmp_path):
        tiny_config["methods"] = ["GE", "RAPO"]
        config = RunConfig(tiny_config)
        serial = MethodSuite(config, RunStorage(str(tmp_path / "serial")), workers=1)
        parallel = MethodSuite(config, RunStorage(str(tmp_path / "parallel")), workers=2)
        serial.run()
        parallel.run()
        for method_id in ("GE", "RAPO"):
            assert [r.to_json() for r in serial.results[(method_id, 0)].records] == \
                [r.to_json() for r in parallel.results[(method_id, 0)].records]
