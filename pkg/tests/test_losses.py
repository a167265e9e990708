import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fd_gradient, rel_err
from robust_loss_lab.data import centered_onehot, rng_from_seed, softmax
from robust_loss_lab.errors import ConfigError
from robust_loss_lab.losses import (
    LossSpec,
    batch_loss,
    gce,
    gradients_at_zero,
    is_symmetric,
    linearize,
    loss_eval,
    loss_grads,
    loss_values,
    mae,
    muh,
    muh_square_decomposition_residual,
    parse_loss,
    sce,
    softmax_ce,
    square_star,
    symmetry_sum,
)

ZOO_TOKENS = ["muh", "mae", "gce:q=0.7", "sce:lambda=1.0", "softmax_ce", "square_star"]


def zoo(c):
    return [parse_loss(tok, c) for tok in ZOO_TOKENS]


class TestEval:
    def test_muh_substitution(self):
        out = loss_eval(muh(3), np.array([1.0, 2.0, 3.0]), 2)
        assert abs(out.value - (-1.0)) <= 1e-15
        np.testing.assert_allclose(out.grad, [1 / 3, 1 / 3, -2 / 3], atol=1e-15)

    @pytest.mark.parametrize("c", [2, 3, 7])
    def test_softmax_ce_at_zero(self, c):
        for y in range(c):
            out = loss_eval(softmax_ce(c), np.zeros(c), y)
            assert abs(out.value - np.log(c)) <= 1e-14
            np.testing.assert_allclose(out.grad, -centered_onehot(y, c), atol=1e-15)

    def test_gce_q1_is_half_mae(self):
        # softmax(0) = (1/2, 1/2) so p_y = 0.5
        out = loss_eval(gce(2, q=1.0), np.zeros(2), 0)
        assert abs(out.value - 0.5) <= 1e-15
        half_mae = loss_eval(mae(2), np.zeros(2), 0)
        assert abs(out.value - half_mae.value / 2) <= 1e-15

    def test_sce_lambda_zero_is_ce(self):
        rng = rng_from_seed(0)
        for _ in range(10):
            z = rng.standard_normal(4)
            y = int(rng.integers(4))
            a = loss_eval(sce(4, 0.0), z, y)
            b = loss_eval(softmax_ce(4), z, y)
            assert abs(a.value - b.value) <= 1e-12
            np.testing.assert_allclose(a.grad, b.grad, atol=1e-12)

    def test_square_star_zero_at_target(self):
        for y in range(3):
            out = loss_eval(square_star(3), centered_onehot(y, 3), y)
            assert abs(out.value) <= 1e-15

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            loss_eval(muh(3), np.zeros(3), 3)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            loss_eval(mae(3), np.array([np.nan, 0.0, 0.0]), 0)

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            gce(3, q=0.0)
        with pytest.raises(ConfigError):
            gce(3, q=1.5)
        with pytest.raises(ConfigError):
            sce(3, lambda_sce=-1.0)


class TestParse:
    def test_tokens(self):
        assert parse_loss("muh", 3).kind == "muh"
        assert parse_loss("GCE:Q=0.7", 4).q == 0.7
        assert parse_loss("sce:lambda=2.5", 3).lambda_sce == 2.5
        assert parse_loss(" softmax_ce ", 3).kind == "softmax_ce"

    def test_bad_tokens_named(self):
        with pytest.raises(ConfigError, match="hinge"):
            parse_loss("hinge", 3)
        with pytest.raises(ConfigError, match="gce"):
            parse_loss("gce", 3)
        with pytest.raises(ConfigError, match="q=bad"):
            parse_loss("gce:q=bad", 3)
        with pytest.raises(ConfigError):
            parse_loss("muh:q=1", 3)


class TestSymmetry:
    def test_muh_sum_zero(self):
        rng = rng_from_seed(1)
        for _ in range(20):
            assert abs(symmetry_sum(muh(4), 5 * rng.standard_normal(4))) <= 1e-12

    def test_mae_sum_constant(self):
        rng = rng_from_seed(2)
        for _ in range(20):
            assert abs(symmetry_sum(mae(3), 3 * rng.standard_normal(3)) - 4.0) <= 1e-12

    def test_square_star_sum_at_zero(self):
        assert abs(symmetry_sum(square_star(3), np.zeros(3)) - 2.0) <= 1e-12

    def test_is_symmetric_classification(self):
        assert is_symmetric(muh(4)).symmetric
        assert is_symmetric(muh(4)).max_deviation <= 1e-12
        assert is_symmetric(mae(4)).max_deviation <= 1e-12
        assert not is_symmetric(softmax_ce(4)).symmetric
        assert is_symmetric(softmax_ce(4)).max_deviation > 1e-3
        assert not is_symmetric(gce(4, 0.7)).symmetric
        assert is_symmetric(gce(4, 1.0)).symmetric  # q=1 is proportional to mae
        assert not is_symmetric(sce(4, 1.0)).symmetric
        assert not is_symmetric(square_star(4)).symmetric


class TestLinearize:
    def test_muh_rows_are_centered_onehots(self):
        lin = linearize(muh(4))
        for y in range(4):
            np.testing.assert_allclose(lin.grad0[y], -centered_onehot(y, 4), atol=1e-15)

    def test_muh_fixed_point(self):
        lin = linearize(muh(3))
        rng = rng_from_seed(3)
        for _ in range(20):
            z = rng.standard_normal(3)
            y = int(rng.integers(3))
            assert abs(loss_eval(lin, z, y).value - loss_eval(muh(3), z, y).value) <= 1e-14

    def test_softmax_ce_linearization_equals_muh(self):
        a = linearize(softmax_ce(5)).grad0
        b = linearize(muh(5)).grad0
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_first_order_approximation_quality(self):
        # |l(t z, y) - l(0, y) - t * lin(z, y)| should decay quadratically in t
        rng = rng_from_seed(4)
        z = rng.standard_normal(3)
        for spec in zoo(3):
            lin = linearize(spec)
            base = loss_eval(spec, np.zeros(3), 1).value
            errs = []
            for t in (1e-1, 1e-2, 1e-3):
                err = abs(loss_eval(spec, t * z, 1).value - base - loss_eval(lin, t * z, 1).value)
                errs.append(err)
            assert errs[1] <= 0.05 * errs[0] + 1e-12
            assert errs[2] <= 0.05 * errs[1] + 1e-12

    def test_gce_rows_approach_ce_rows_as_q_shrinks(self):
        target = linearize(softmax_ce(4)).grad0
        dists = []
        for q in (0.5, 0.1, 0.01):
            rows = linearize(gce(4, q)).grad0
            dists.append(np.abs(rows - target).max())
        assert dists[0] > dists[1] > dists[2]


class TestDecomposition:
    def test_constant_for_c3(self):
        rng = rng_from_seed(5)
        for _ in range(10):
            z = 4 * rng.standard_normal(3)
            y = int(rng.integers(3))
            assert abs(muh_square_decomposition_residual(z, y, 3) - 2 / 3) <= 1e-12

    def test_c2_at_zero(self):
        assert abs(muh_square_decomposition_residual(np.zeros(2), 0, 2) - 0.5) <= 1e-15

    def test_sweep_c5(self):
        rng = rng_from_seed(6)
        for _ in range(1000):
            z = 3 * rng.standard_normal(5)
            y = int(rng.integers(5))
            assert abs(muh_square_decomposition_residual(z, y, 5) - 4 / 5) <= 1e-12


class TestGradients:
    @pytest.mark.parametrize("token", ZOO_TOKENS + ["linearized"])
    def test_matches_finite_differences(self, token):
        c = 4
        if token == "linearized":
            spec = linearize(softmax_ce(c))
        else:
            spec = parse_loss(token, c)
        rng = rng_from_seed(7)
        for _ in range(25):
            z = 2 * rng.standard_normal(c)
            y = int(rng.integers(c))
            analytic = loss_eval(spec, z, y).grad
            numeric = fd_gradient(lambda zz: loss_eval(spec, zz, y).value, z)
            assert rel_err(analytic, numeric) <= 1e-6

    def test_tables_consistent_with_eval(self):
        spec = sce(3, 0.5)
        rng = rng_from_seed(8)
        Z = rng.standard_normal((6, 3))
        y = rng.integers(0, 3, size=6)
        values, grads = batch_loss(spec, Z, y)
        table_v = loss_values(spec, Z)
        table_g = loss_grads(spec, Z)
        for i in range(6):
            single = loss_eval(spec, Z[i], int(y[i]))
            assert abs(values[i] - single.value) <= 1e-15
            np.testing.assert_allclose(grads[i], single.grad, atol=1e-15)
            assert abs(table_v[i, y[i]] - single.value) <= 1e-15
            np.testing.assert_allclose(table_g[i, y[i]], single.grad, atol=1e-15)

    def test_gradients_at_zero_shape(self):
        rows = gradients_at_zero(mae(5))
        assert rows.shape == (5, 5)


@given(z=st.lists(st.floats(min_value=-30, max_value=30, allow_nan=False), min_size=3, max_size=3))
@settings(max_examples=100, deadline=None)
def test_symmetry_properties(z):
    z = np.asarray(z)
    assert abs(symmetry_sum(muh(3), z)) <= 1e-12 * max(1.0, np.abs(z).sum())
    assert abs(symmetry_sum(mae(3), z) - 4.0) <= 1e-12


@given(
    z=st.lists(st.floats(min_value=-20, max_value=20, allow_nan=False), min_size=4, max_size=4),
    y=st.integers(min_value=0, max_value=3),
)
@settings(max_examples=100, deadline=None)
def test_decomposition_residual_property(z, y):
    assert abs(muh_square_decomposition_residual(np.asarray(z), y, 4) - 3 / 4) <= 1e-10 * max(
        1.0, float(np.abs(z).max()) ** 2
    )
