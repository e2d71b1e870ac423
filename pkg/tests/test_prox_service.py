"""Tests for the proximal operators and subgradient recovery"""

import numpy as np
import pytest

from asyncopt.core.errors import ConfigError
from asyncopt.models.problem import Regularizer
from asyncopt.services.prox_service import ProxService

D = 5
LO = np.array([-1.0, -0.5, -0.2, 0.0, -2.0])
HI = np.array([1.0, 0.5, 0.3, 0.1, 2.0])

REGULARIZERS = {
    "zero": Regularizer.zero(),
    "l1": Regularizer.l1(0.3),
    "box": Regularizer.box(LO, HI),
    "separable": Regularizer.separable(
        [Regularizer.l1(0.5), Regularizer.box(LO[2:], HI[2:])], [2, 3]
    ),
}


class TestProx:
    """Closed-form proximal maps"""

    def test_zero_is_identity(self):
        v = np.array([5.0, -3.0])
        np.testing.assert_array_equal(ProxService.prox(Regularizer.zero(), 3.0, v), v)

    def test_soft_threshold(self):
        out = ProxService.prox(Regularizer.l1(1.0), 1.0, np.array([2.0, -0.5, 0.0]))
        np.testing.assert_array_equal(out, [1.0, 0.0, 0.0])

    def test_soft_threshold_boundary_is_zero(self):
        out = ProxService.prox(Regularizer.l1(0.5), 2.0, np.array([1.0, -1.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_box_projection(self):
        reg = Regularizer.box([0.0, 0.0], [1.0, 1.0])
        np.testing.assert_array_equal(ProxService.prox(reg, 0.7, np.array([2.0, -1.0])), [1.0, 0.0])

    @pytest.mark.parametrize("gamma", [0.0, -1.0])
    def test_nonpositive_gamma_rejected(self, gamma):
        with pytest.raises(ValueError):
            ProxService.prox(Regularizer.l1(1.0), gamma, np.ones(2))

    @pytest.mark.parametrize("name", sorted(REGULARIZERS))
    def test_nonexpansive(self, name, rng):
        reg = REGULARIZERS[name]
        for _ in range(200):
            u, v = rng.standard_normal(D), rng.standard_normal(D)
            gamma = rng.uniform(0.01, 5.0)
            lhs = np.linalg.norm(ProxService.prox(reg, gamma, u) - ProxService.prox(reg, gamma, v))
            assert lhs <= np.linalg.norm(u - v) * (1 + 1e-12)

    def test_tiny_gamma_approaches_identity(self, rng):
        v = rng.standard_normal(D)
        gamma = 1e-12
        out = ProxService.prox(Regularizer.l1(1.0), gamma, v)
        assert np.linalg.norm(out - v) <= gamma * np.sqrt(D) + 1e-14


class TestProxBlock:
    """Block prox consistency under a partition"""

    def test_single_coordinate_block(self):
        out = ProxService.prox_block(Regularizer.l1(1.0), 0.1, slice(0, 1), np.array([0.05]), (1, 1))
        np.testing.assert_array_equal(out, [0.0])

    @pytest.mark.parametrize("name", sorted(REGULARIZERS))
    def test_blocks_compose_to_full_prox(self, name, rng):
        reg = REGULARIZERS[name]
        partition = (2, 1, 2)
        slices = [slice(0, 2), slice(2, 3), slice(3, 5)]
        v = 3.0 * rng.standard_normal(D)
        gamma = 0.8
        pieces = [ProxService.prox_block(reg, gamma, s, v[s], partition) for s in slices]
        np.testing.assert_allclose(np.concatenate(pieces), ProxService.prox(reg, gamma, v), rtol=0, atol=1e-15)

    def test_non_separable_partition_rejected(self):
        reg = REGULARIZERS["separable"]
        with pytest.raises(ConfigError):
            ProxService.prox_block(reg, 1.0, slice(0, 1), np.zeros(1), (1, 4))

    def test_block_length_mismatch(self):
        with pytest.raises(ValueError):
            ProxService.prox_block(Regularizer.l1(1.0), 1.0, slice(0, 2), np.zeros(3), (2, 3))


class TestSubgradient:
    """xi = (pre - post) / gamma lies in the subdifferential at post"""

    def test_zero_regularizer_gives_zero(self):
        v = np.array([1.0, -2.0])
        post = ProxService.prox(Regularizer.zero(), 0.5, v)
        np.testing.assert_array_equal(ProxService.recover_subgradient(Regularizer.zero(), 0.5, v, post), [0.0, 0.0])

    def test_l1_active_coordinate(self):
        reg = Regularizer.l1(1.0)
        pre = np.array([2.0])
        post = ProxService.prox(reg, 1.0, pre)
        np.testing.assert_array_equal(post, [1.0])
        np.testing.assert_array_equal(ProxService.recover_subgradient(reg, 1.0, pre, post), [1.0])

    def test_box_interior_gives_zero(self):
        reg = Regularizer.box([0.0], [1.0])
        pre = np.array([0.25])
        post = ProxService.prox(reg, 1.0, pre)
        np.testing.assert_array_equal(ProxService.recover_subgradient(reg, 1.0, pre, post), [0.0])

    @pytest.mark.parametrize("name", ["l1", "box", "separable"])
    def test_subgradient_inequality(self, name, rng):
        reg = REGULARIZERS[name]
        for _ in range(50):
            pre = 2.0 * rng.standard_normal(D)
            gamma = rng.uniform(0.1, 2.0)
            post = ProxService.prox(reg, gamma, pre)
            xi = ProxService.recover_subgradient(reg, gamma, pre, post)
            base = ProxService.value(reg, post)
            for _ in range(20):
                y = np.clip(rng.standard_normal(D), LO, HI)
                assert ProxService.value(reg, y) >= base + xi @ (y - post) - 1e-10


class TestValue:
    def test_l1_value(self):
        assert ProxService.value(Regularizer.l1(2.0), np.array([1.0, -3.0])) == 8.0

    def test_box_outside_is_infinite(self):
        reg = Regularizer.box([0.0], [1.0])
        assert ProxService.value(reg, np.array([0.5])) == 0.0
        assert np.isinf(ProxService.value(reg, np.array([1.5])))

    def test_separable_sums_parts(self):
        x = np.array([1.0, -1.0, 0.0, 0.05, 1.0])
        assert ProxService.value(REGULARIZERS["separable"], x) == pytest.approx(1.0)
