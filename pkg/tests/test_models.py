import numpy as np
import pytest

from helpers import fd_gradient, rel_err
from robust_loss_lab.data import Dataset, SyntheticSpec, default_centers, make_blobs, noise_constants, rng_from_seed
from robust_loss_lab.errors import ConfigError
from robust_loss_lab.losses import muh, parse_loss, softmax_ce
from robust_loss_lab.models import (
    LinearFamily,
    Mlp2Family,
    Model,
    ModelOutput,
    Objective,
    append_one_map,
    feature_second_moment,
    forward,
    identity_map,
    l2_norm,
    load_checkpoint,
    objective_value_and_grad,
    predict,
    random_fourier_map,
    save_checkpoint,
)
from robust_loss_lab.regularizers import entropy, label_smoothing, quadratic


def blob_dataset(seed=0, c=3, d=3, npc=20, sigma=1.0):
    return make_blobs(SyntheticSpec(c, d, npc, default_centers(c, d), sigma=sigma, seed=seed))


class TestForward:
    def test_linear_zero_params_zero_output(self):
        ds = blob_dataset()
        fam = LinearFamily(append_one_map(3), 3)
        out = forward(Model(fam, np.zeros(fam.n_params)), ds)
        np.testing.assert_array_equal(out.Z, np.zeros((ds.n, 3)))

    def test_linear_identity_passthrough(self):
        ds = blob_dataset(c=3, d=3)
        fam = LinearFamily(identity_map(3), 3)
        out = forward(Model(fam, np.eye(3).ravel()), ds)
        np.testing.assert_allclose(out.Z, ds.features, atol=1e-15)

    def test_mlp2_second_layer_scaling_is_exact(self):
        ds = blob_dataset()
        fam = Mlp2Family(3, 8, 3)
        rng = rng_from_seed(1)
        theta = rng.standard_normal(fam.n_params)
        t = 3.7
        z1 = fam.forward(theta, ds.features)
        z2 = fam.forward(fam.scale_outputs(theta, t), ds.features)
        np.testing.assert_allclose(z2, t * z1, rtol=1e-15, atol=1e-15)

    def test_linear_scaling_is_exact(self):
        ds = blob_dataset()
        fam = LinearFamily(append_one_map(3), 3)
        rng = rng_from_seed(2)
        theta = rng.standard_normal(fam.n_params)
        np.testing.assert_allclose(
            fam.forward(fam.scale_outputs(theta, 2.5), fam.prepare(ds.features)),
            2.5 * fam.forward(theta, fam.prepare(ds.features)),
            rtol=1e-15,
            atol=1e-15,
        )

    def test_dim_mismatch(self):
        ds = blob_dataset(d=3)
        fam = LinearFamily(identity_map(4), 3)
        with pytest.raises(ConfigError):
            forward(Model(fam, np.zeros(fam.n_params)), ds)

    def test_output_count_mismatch(self):
        ds = blob_dataset(c=3)
        fam = LinearFamily(identity_map(3), 5)
        with pytest.raises(ConfigError):
            forward(Model(fam, np.zeros(fam.n_params)), ds)


class TestPredict:
    def test_argmax(self):
        assert predict(np.array([[0.1, 0.9, 0.3]]))[0] == 1

    def test_tie_breaks_small_index(self):
        assert predict(np.zeros((1, 4)))[0] == 0
        assert predict(np.array([[0.5, 0.7, 0.7]]))[0] == 1

    def test_scale_invariance(self):
        rng = rng_from_seed(3)
        z = rng.standard_normal((50, 4))
        np.testing.assert_array_equal(predict(7.3 * z), predict(z))

    def test_reduced_output_embeds_before_argmax(self):
        out = ModelOutput(Z=np.array([[-1.0, -2.0]]), n_classes=3, reduced=True)
        # embedded logits are (-1, -2, 0): class 2 wins
        assert predict(out)[0] == 2


class TestNorm:
    def test_zero(self):
        assert l2_norm(np.zeros((4, 3))) == 0.0

    def test_single_row(self):
        assert abs(l2_norm(np.array([[3.0, 4.0]])) - 5.0) <= 1e-15

    def test_homogeneity(self):
        rng = rng_from_seed(4)
        z = rng.standard_normal((10, 3))
        assert abs(l2_norm(-2.0 * z) - 2.0 * l2_norm(z)) <= 1e-12


class TestJacobian:
    @pytest.mark.parametrize("family_kind", ["linear", "mlp2"])
    def test_matches_finite_differences(self, family_kind):
        ds = blob_dataset(npc=4)
        if family_kind == "linear":
            fam = LinearFamily(append_one_map(3), 3)
        else:
            fam = Mlp2Family(3, 5, 3)
        rng = rng_from_seed(5)
        theta = 0.5 * rng.standard_normal(fam.n_params)
        prepared = fam.prepare(ds.features)
        jac = fam.jacobian(theta, prepared)
        for i in (0, 5, 11):
            for k in range(3):
                numeric = fd_gradient(lambda th: fam.forward(th, prepared)[i, k], theta)
                assert rel_err(jac[i, k], numeric) <= 1e-6

    def test_grad_from_output_grads_consistent_with_jacobian(self):
        ds = blob_dataset(npc=5)
        fam = Mlp2Family(3, 4, 3)
        rng = rng_from_seed(6)
        theta = rng.standard_normal(fam.n_params)
        G = rng.standard_normal((ds.n, 3))
        prepared = fam.prepare(ds.features)
        via_jac = np.einsum("nki,nk->i", fam.jacobian(theta, prepared), G)
        via_chain = fam.grad_from_output_grads(theta, prepared, G)
        assert rel_err(via_chain, via_jac) <= 1e-12


class TestObjective:
    def test_zero_loss_coeff_quadratic_reg_at_zero(self):
        ds = blob_dataset()
        fam = LinearFamily(append_one_map(3), 3)
        model = Model(fam, np.zeros(fam.n_params))
        value, grad = objective_value_and_grad(model, ds, None, quadratic(np.eye(3)), alpha=0.0)
        assert value == 0.0
        np.testing.assert_allclose(grad, np.zeros(fam.n_params), atol=1e-15)

    @pytest.mark.parametrize("reg_maker", [lambda c: quadratic(np.eye(c)), entropy, label_smoothing])
    def test_stationary_at_zero_params_when_alpha_zero(self, reg_maker):
        ds = blob_dataset()
        reg = reg_maker(3)
        n_out = 2 if reg.reduced else 3
        fam = LinearFamily(append_one_map(3), n_out)
        obj = Objective(fam, ds, softmax_ce(3), reg, loss_coeff=0.0)
        _, grad = obj.value_and_grad(np.zeros(fam.n_params))
        assert np.max(np.abs(grad)) <= 1e-12

    @pytest.mark.parametrize(
        "case",
        [
            ("linear", "softmax_ce", "quad", None),
            ("linear", "softmax_ce", "quad", 0.3),
            ("linear", "gce:q=0.7", "entropy", 0.2),
            ("linear", "sce:lambda=1.0", "label_smoothing", None),
            ("mlp2", "muh", "quad", 0.3),
            ("mlp2", "mae", "entropy", None),
        ],
    )
    def test_gradient_matches_finite_differences(self, case):
        family_kind, loss_tok, reg_kind, rho = case
        c = 3
        ds = blob_dataset(npc=6)
        loss = parse_loss(loss_tok, c)
        if reg_kind == "quad":
            reg = quadratic(0.5 * np.eye(c))
        else:
            reg = entropy(c) if reg_kind == "entropy" else label_smoothing(c)
        n_out = c - 1 if reg.reduced else c
        fam = LinearFamily(append_one_map(3), n_out) if family_kind == "linear" else Mlp2Family(3, 4, n_out)
        noise = noise_constants(rho, c) if rho is not None else None
        obj = Objective(fam, ds, loss, reg, loss_coeff=0.7, reg_coeff=1.3, noise=noise)
        rng = rng_from_seed(7)
        for _ in range(5):
            theta = 0.5 * rng.standard_normal(fam.n_params)
            _, analytic = obj.value_and_grad(theta)
            numeric = fd_gradient(obj.value, theta)
            assert rel_err(analytic, numeric) <= 1e-6

    def test_exact_noise_scales_symmetric_loss_value(self):
        # with a label-sum-zero loss the noisy risk is exactly a * clean risk
        ds = blob_dataset()
        fam = LinearFamily(append_one_map(3), 3)
        rng = rng_from_seed(8)
        theta = rng.standard_normal(fam.n_params)
        noise = noise_constants(0.3, 3)
        clean = Objective(fam, ds, muh(3), None).value(theta)
        noisy = Objective(fam, ds, muh(3), None, noise=noise).value(theta)
        assert abs(noisy - noise.a * clean) <= 1e-14 * max(1.0, abs(clean))

    def test_reduced_space_mismatch_rejected(self):
        ds = blob_dataset()
        fam = LinearFamily(append_one_map(3), 3)  # full-space model
        with pytest.raises(ConfigError):
            Objective(fam, ds, softmax_ce(3), entropy(3))


class TestSecondMoment:
    @pytest.mark.parametrize("fmap_maker", [identity_map, append_one_map])
    def test_positive_definite_on_blobs(self, fmap_maker):
        ds = blob_dataset(npc=10)
        s = feature_second_moment(fmap_maker(3), ds.features)
        assert np.linalg.eigvalsh(s)[0] > 1e-8


class TestCheckpoints:
    def test_linear_round_trip(self, tmp_path):
        fam = LinearFamily(random_fourier_map(3, 16, 1.5, seed=11), 3)
        rng = rng_from_seed(9)
        model = Model(fam, rng.standard_normal(fam.n_params))
        path = tmp_path / "model.json"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        np.testing.assert_array_equal(back.theta, model.theta)
        ds = blob_dataset(npc=4)
        np.testing.assert_allclose(forward(back, ds).Z, forward(model, ds).Z, atol=1e-15)

    def test_mlp2_round_trip(self, tmp_path):
        fam = Mlp2Family(3, 6, 2)
        rng = rng_from_seed(10)
        model = Model(fam, rng.standard_normal(fam.n_params))
        path = tmp_path / "model.json"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert isinstance(back.family, Mlp2Family)
        np.testing.assert_array_equal(back.theta, model.theta)

    def test_reference_init_outputs_vanish(self):
        ds = blob_dataset()
        fam = Mlp2Family(3, 8, 3)
        theta0 = fam.reference_init(seed=3)
        z = fam.forward(theta0, ds.features)
        np.testing.assert_array_equal(z, np.zeros_like(z))
        # but the output Jacobian does not vanish
        jac = fam.jacobian(theta0, ds.features)
        assert np.max(np.abs(jac)) > 0
