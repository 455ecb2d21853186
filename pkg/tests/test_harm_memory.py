import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ReplayLab.handler.harm_memory import (
    FieldParams, HarmFields, attribute_harm, scar_injection, step_fields, update_scar,
)
from ReplayLab.utility.errors import InvalidArgumentError


def _fields(G=(0.0, 0.0, 0.0), H=(0.0, 0.0, 0.0), **params):
    return HarmFields(np.asarray(G, dtype=np.float64), np.asarray(H, dtype=np.float64), FieldParams(**params))


class TestFieldParams:
    @pytest.mark.parametrize("kwargs", [
        {"decay": 0.0}, {"decay": 1.0}, {"gain": 0.0}, {"scar_rate": -1.0},
        {"scar_threshold": 0.0}, {"retention": 0.9}, {"delay": 0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            FieldParams(**kwargs)

    def test_defaults(self):
        params = FieldParams()
        assert (params.decay, params.gain, params.scar_rate, params.scar_threshold) == (0.1, 0.5, 0.05, 0.3)
        assert params.retention == 1.0


class TestAttributeHarm:
    def test_pure_decay(self):
        fields = _fields(G=(1.0, 0.5, 0.0))
        for _ in range(100):
            fields = attribute_harm(0.0, [], fields)
        assert_allclose(fields.G, np.array([1.0, 0.5, 0.0]) * 0.9 ** 100)

    def test_mass_goes_to_causal_set(self):
        fields = attribute_harm(0.4, [0, 2], _fields())
        assert_allclose(fields.G, [0.1, 0.0, 0.1])
        assert_allclose(fields.G.sum(), 0.5 * 0.4)

    def test_boolean_mask(self):
        mask = np.array([False, True, False])
        assert_allclose(attribute_harm(1.0, mask, _fields()).G, [0.0, 0.5, 0.0])

    def test_empty_causal_set_with_harm_decays(self, caplog):
        with caplog.at_level(logging.WARNING):
            fields = attribute_harm(0.3, [], _fields(G=(1.0, 1.0, 1.0)))
        assert_allclose(fields.G, [0.9, 0.9, 0.9])
        assert [r.name for r in caplog.records] == ["root"]
        assert "empty causal set" in caplog.text

    def test_harm_range(self):
        with pytest.raises(InvalidArgumentError):
            attribute_harm(1.5, [0], _fields())


class TestScar:
    def test_threshold(self):
        fields = _fields(G=(0.2, 0.3, 0.7))
        assert_allclose(scar_injection(fields), [0.0, 0.0, 0.05 * 0.4])

    def test_irreversible_scar_never_shrinks(self):
        rng = np.random.default_rng(0)
        fields = HarmFields.zeros(5)
        previous = fields.H.copy()
        for _ in range(200):
            causal = rng.random(5) < 0.3
            harm = float(rng.random()) if causal.any() else 0.0
            fields, _ = step_fields(fields, harm, causal)
            assert np.all(fields.H >= previous)
            previous = fields.H.copy()

    @pytest.mark.slow
    def test_scar_is_monotone_across_trajectories(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            fields = HarmFields.zeros(4)
            for _ in range(10):
                causal = rng.random(4) < 0.5
                harm = float(rng.uniform(0.0, 1.0)) if causal.any() else 0.0
                previous = fields.H
                fields, _ = step_fields(fields, harm, causal)
                assert np.all(fields.H >= previous)

    def test_retention_below_one_forgets(self):
        fields = update_scar(_fields(H=(1.0, 0.0, 0.0), retention=0.95))
        assert_allclose(fields.H, [0.95, 0.0, 0.0])

    def test_step_order_uses_post_injection_trace(self):
        fields, cost = step_fields(_fields(), 1.0, np.array([True, False, False]))
        assert_allclose(fields.G, [0.5, 0.0, 0.0])
        assert_allclose(cost, 0.05 * 0.2)
        assert_allclose(fields.H, [0.05 * 0.2, 0.0, 0.0])


class TestSnapshot:
    def test_sums_and_top_regions(self):
        fields = _fields(G=(0.1, 0.2, 0.3), H=(0.0, 2.0, 1.0))
        snap = fields.snapshot(7)
        assert snap["step"] == 7
        assert_allclose(snap["g_sum"], 0.6)
        assert_allclose(snap["h_sum"], 3.0)
        assert [r for r, _ in snap["top_h"]] == [1, 2, 0]

    def test_json_round_trip(self):
        fields = _fields(G=(0.1, 0.2, 0.3), H=(0.0, 2.0, 1.0), delay=7)
        loaded = HarmFields.from_json(fields.to_json())
        assert_array_equal(loaded.G, fields.G)
        assert_array_equal(loaded.H, fields.H)
        assert loaded.params == fields.params
