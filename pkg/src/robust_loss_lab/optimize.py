"""Deterministic full-batch minimization, risk computations, and analytic probes.

The optimizer is plain gradient descent with backtracking line search
(sufficient decrease). Every objective verified here is smooth and
low-dimensional, so simplicity and determinism win over speed.

Risk computations use exact expectations over label flips (enumeration of
the flip distribution), never sampling, so equality assertions carry no
Monte-Carlo error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses as losses_mod
from .data import Dataset, NoiseSpec, centered_onehot_matrix, flip_matrix, rng_from_seed
from .errors import ConfigError, DegenerateProblemError, DivergenceError
from .models import FeatureMap, Model, ModelOutput, forward
from .regularizers import RegularizerSpec, embed_outputs, reg_hessian_at_min


# ---------------------------------------------------------------------------
# minimization

@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-8  # stop when ||grad|| <= grad_tol * max(1, ||theta||)
    init: str = "zeros"  # zeros | gaussian
    init_scale: float = 0.1
    step0: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 60

    def __post_init__(self):
        if self.max_iters < 1 or self.grad_tol <= 0:
            raise ConfigError("need max_iters >= 1 and grad_tol > 0")
        if not (0 < self.shrink < 1 and self.step0 > 0 and self.sufficient_decrease > 0):
            raise ConfigError("invalid line-search parameters")
        if self.init not in ("zeros", "gaussian"):
            raise ConfigError(f"unknown init {self.init!r}")


def initial_theta(config: TrainConfig, n_params: int, seed: int = 0) -> np.ndarray:
    if config.init == "zeros":
        return np.zeros(n_params)
    return config.init_scale * rng_from_seed(seed).standard_normal(n_params)


@dataclass
class MinimizeResult:
    theta: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    status: str  # converged | max_iters | stalled
    trace: list = field(default_factory=list)  # rows (iter, objective, grad_norm, step)


class _CallableObjective:
    def __init__(self, value_and_grad):
        self.value_and_grad = value_and_grad

    def value(self, theta):
        return self.value_and_grad(theta)[0]


def minimize(objective, theta0: np.ndarray, config: TrainConfig = TrainConfig()) -> MinimizeResult:
    """Backtracking gradient descent.

    `objective` exposes value(theta) and value_and_grad(theta); a bare callable
    returning (value, grad) is wrapped. The trace of accepted iterates is
    monotone non-increasing in the objective. Non-finite values at an accepted
    iterate raise DivergenceError; non-finite line-search probes just shrink
    the step. If rounding prevents any decrease ("stalled"), the best iterate
    so far is returned.
    """
    if not hasattr(objective, "value_and_grad"):
        objective = _CallableObjective(objective)
    theta = np.array(theta0, dtype=float)
    f, g = objective.value_and_grad(theta)
    trace = [(0, float(f), float(np.linalg.norm(g)), 0.0)]
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise DivergenceError("non-finite objective or gradient at the initial point", trace)
    # decreases below a few ulps of the objective scale are rounding noise;
    # demanding at least this much makes the stall exit reachable
    eps = float(np.finfo(float).eps)
    f_scale = abs(f)
    iterations = 0
    status = "max_iters"
    for it in range(1, config.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol * max(1.0, float(np.linalg.norm(theta))):
            status = "converged"
            break
        step = config.step0
        accepted = False
        floor = 4.0 * eps * f_scale
        for _ in range(config.max_backtracks):
            candidate = theta - step * g
            f_new = objective.value(candidate)
            required = max(config.sufficient_decrease * step * gnorm * gnorm, floor)
            if np.isfinite(f_new) and f_new <= f - required:
                accepted = True
                break
            step *= config.shrink
        if not accepted:
            status = "stalled"
            break
        theta = candidate
        f, g = objective.value_and_grad(theta)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise DivergenceError(f"non-finite objective or gradient at iteration {it}", trace)
        f_scale = max(f_scale, abs(f))
        iterations = it
        trace.append((it, float(f), float(np.linalg.norm(g)), step))
    else:
        status = "max_iters"
    return MinimizeResult(
        theta=theta,
        value=float(f),
        grad_norm=float(np.linalg.norm(g)),
        iterations=iterations,
        status=status,
        trace=trace,
    )


def write_trace_csv(result: MinimizeResult, path: str | Path) -> None:
    lines = ["iter,objective,grad_norm,step"]
    for it, f, gnorm, step in result.trace:
        lines.append(f"{it},{f!r},{gnorm!r},{step!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# risks

def _full_logits(model: Model, dataset: Dataset) -> np.ndarray:
    out = forward(model, dataset)
    return out.full_logits()


def clean_risk(model: Model, dataset: Dataset, loss: losses_mod.LossSpec) -> float:
    """Empirical risk (1/n) sum_i l(z_i, y_i)."""
    z = _full_logits(model, dataset)
    idx = np.arange(dataset.n)
    return float(losses_mod.loss_values(loss, z)[idx, dataset.labels].mean())


def total_label_risk(model: Model, dataset: Dataset, loss: losses_mod.LossSpec) -> float:
    """(1/n) sum_i sum_y l(z_i, y): mean of the per-sample label sums."""
    z = _full_logits(model, dataset)
    return float(losses_mod.loss_values(loss, z).sum(axis=1).mean())


def exact_noisy_risk(model: Model, dataset: Dataset, loss: losses_mod.LossSpec, spec: NoiseSpec) -> float:
    """Expected risk under label flips, by enumeration of the flip distribution."""
    if spec.n_classes != dataset.n_classes:
        raise ConfigError("noise class count does not match dataset")
    z = _full_logits(model, dataset)
    weights = flip_matrix(spec)[dataset.labels]
    return float(np.sum(weights * losses_mod.loss_values(loss, z)) / dataset.n)


@dataclass(frozen=True)
class RiskReport:
    clean_risk: float
    exact_noisy_risk: float
    total_label_risk: float
    identity_residual: float


def risk_identity_report(model: Model, dataset: Dataset, loss: losses_mod.LossSpec, spec: NoiseSpec) -> RiskReport:
    """Noisy risk versus its decomposition rho/(C-1) * T + a * L.

    The left side enumerates flips; the right side combines two independent
    passes (clean risk and total label risk), so the residual checks the
    decomposition rather than one code path against itself.
    """
    noisy = exact_noisy_risk(model, dataset, loss, spec)
    clean = clean_risk(model, dataset, loss)
    total = total_label_risk(model, dataset, loss)
    predicted = spec.rho / (spec.n_classes - 1) * total + spec.a * clean
    return RiskReport(
        clean_risk=clean,
        exact_noisy_risk=noisy,
        total_label_risk=total,
        identity_residual=abs(noisy - predicted),
    )


# ---------------------------------------------------------------------------
# closed forms

def _solve_checked(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Dense solve with an explicit relative singularity threshold."""
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1e-12:
        raise DegenerateProblemError(f"{what} is singular (cond > 1e12)")
    return np.linalg.solve(a, b)


def noisy_target_rows(dataset: Dataset, spec: NoiseSpec | None) -> np.ndarray:
    """Per-sample centered one-hot targets, flip-averaged when noise is given."""
    h = centered_onehot_matrix(dataset.n_classes)
    if spec is None:
        return h[dataset.labels]
    return (flip_matrix(spec) @ h)[dataset.labels]


def closed_form_muh_quadratic(
    dataset: Dataset,
    feature_map: FeatureMap,
    matrix: np.ndarray,
    spec: NoiseSpec | None = None,
) -> np.ndarray:
    """Unique minimizer of E[-<z, target(Y)> + z^T A z] over linear heads.

    Stationarity gives 2 A Theta S = B with S = E[phi phi^T] and
    B = E[target(Y) phi^T]; under exact noise the targets are flip-averaged.
    Returns Theta of shape (C, p).
    """
    matrix = np.asarray(matrix, dtype=float)
    F = feature_map.apply(dataset.features)
    s = F.T @ F / dataset.n
    targets = noisy_target_rows(dataset, spec)
    b = targets.T @ F / dataset.n  # (C, p)
    y = _solve_checked(2.0 * matrix, b, "quadratic coefficient matrix")
    return _solve_checked(s.T, y.T, "feature second moment").T


# ---------------------------------------------------------------------------
# reference direction (leading-order minimizer direction as the loss weight -> 0)

@dataclass(frozen=True)
class ReferenceDirection:
    v: np.ndarray  # -[hess G(theta0)]^{-1} grad L(theta0)
    direction: np.ndarray  # v normalized
    field: np.ndarray  # normalized output field: J v / ||J v||_L2, shape (n, out)
    min_row_norm: float  # min_i ||J_i v / ||v|| ||: the non-vanishing check
    hessian: np.ndarray
    rank_deficient: bool


def reference_direction(
    family,
    dataset: Dataset,
    loss: losses_mod.LossSpec,
    reg: RegularizerSpec,
    theta0: np.ndarray,
    noise: NoiseSpec | None = None,
) -> ReferenceDirection:
    """First-order direction of the regularized minimizer leaving theta0.

    Computes v = -[hess G(theta0)]^{-1} grad L(theta0) where G is the mean
    regularizer and L the (optionally exact-noisy) risk; both derivatives use
    the per-sample output Jacobians at theta0, where the model output is
    assumed to vanish. A singular Hessian is accepted only when the gradient
    lies in its range (minimum-norm solution, flagged rank_deficient).
    """
    prepared = family.prepare(dataset.features)
    z0 = family.forward(np.asarray(theta0, dtype=float), prepared)
    if float(np.max(np.abs(z0))) > 1e-10:
        raise ConfigError("reference direction requires the model output to vanish at theta0")
    jac = family.jacobian(theta0, prepared)  # (n, out, m)
    n, out, m = jac.shape
    reduced = out == dataset.n_classes - 1
    hess_g = reg_hessian_at_min(reg)
    if hess_g.shape[0] != out:
        raise ConfigError("regularizer space does not match model outputs")
    hessian = np.einsum("nai,ab,nbj->ij", jac, hess_g, jac) / n

    rows = losses_mod.loss_grads(loss, embed_outputs(z0) if reduced else z0)  # (n, C, C)
    weights = flip_matrix(noise)[dataset.labels] if noise is not None else None
    if weights is None:
        per_sample = rows[np.arange(n), dataset.labels]
    else:
        per_sample = np.einsum("nj,njk->nk", weights, rows)
    if reduced:
        per_sample = per_sample[:, :out]
    grad_l = np.einsum("nai,na->i", jac, per_sample) / n
    gnorm = float(np.linalg.norm(grad_l))
    if gnorm == 0.0:
        raise DegenerateProblemError("risk gradient vanishes at theta0; no reference direction")

    eigvals, eigvecs = np.linalg.eigh(hessian)
    cutoff = 1e-12 * max(float(eigvals[-1]), 1e-300)
    keep = eigvals > cutoff
    rank_deficient = not bool(np.all(keep))
    coeffs = eigvecs.T @ (-grad_l)
    solved = np.where(keep, coeffs / np.where(keep, eigvals, 1.0), 0.0)
    v = eigvecs @ solved
    residual = float(np.linalg.norm(hessian @ v + grad_l))
    if residual > 1e-8 * gnorm:
        raise DegenerateProblemError(
            f"regularizer Hessian at theta0 is singular and the risk gradient leaves its range "
            f"(relative residual {residual / gnorm:.3e})"
        )

    direction = v / np.linalg.norm(v)
    field = np.einsum("nai,i->na", jac, v)
    field_norm = float(np.sqrt(np.mean(np.sum(field * field, axis=1))))
    if field_norm == 0.0:
        raise DegenerateProblemError("output field of the reference direction vanishes")
    min_row_norm = float(np.min(np.linalg.norm(np.einsum("nai,i->na", jac, direction), axis=1)))
    return ReferenceDirection(
        v=v,
        direction=direction,
        field=field / field_norm,
        min_row_norm=min_row_norm,
        hessian=hessian,
        rank_deficient=rank_deficient,
    )


# ---------------------------------------------------------------------------
# curvature probe

@dataclass(frozen=True)
class ProbeResult:
    min_rayleigh: float
    rayleighs: np.ndarray


def hessian_pd_probe(objective, theta: np.ndarray, n_dirs: int = 50, seed: int = 0, step: float = 1e-4) -> ProbeResult:
    """Minimum second-difference Rayleigh quotient over random unit directions."""
    value = objective.value if hasattr(objective, "value") else objective
    theta = np.asarray(theta, dtype=float)
    rng = rng_from_seed(seed)
    dirs = rng.standard_normal((n_dirs, theta.shape[0]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    h = step * max(1.0, float(np.linalg.norm(theta)))
    f0 = value(theta)
    rayleighs = np.array([(value(theta + h * u) - 2.0 * f0 + value(theta - h * u)) / (h * h) for u in dirs])
    return ProbeResult(min_rayleigh=float(rayleighs.min()), rayleighs=rayleighs)


def positive_curvature_threshold(
    make_objective,
    theta: np.ndarray,
    n_dirs: int = 50,
    seed: int = 0,
    alpha_start: float = 1.0,
    max_halvings: int = 30,
) -> float | None:
    """Largest alpha in a halving search where the curvature probe stays positive.

    `make_objective(alpha)` returns the objective for that loss weight.
    Returns None if no tested alpha gives a positive probe.
    """
    alpha = float(alpha_start)
    for _ in range(max_halvings):
        probe = hessian_pd_probe(make_objective(alpha), theta, n_dirs=n_dirs, seed=seed)
        if probe.min_rayleigh > 0.0:
            return alpha
        alpha *= 0.5
    return None


# ---------------------------------------------------------------------------
# output-space metric

def field_l2_norm(Z: np.ndarray) -> float:
    Z = np.asarray(Z, dtype=float)
    return float(np.sqrt(np.mean(np.sum(Z * Z, axis=1))))


def normalized_output_distance(Z1: np.ndarray, Z2: np.ndarray) -> float:
    """L2 distance between the L2-normalized output fields; 0 iff one is a
    positive scaling of the other, 2 for antipodal fields."""
    Z1 = np.asarray(Z1, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    if Z1.shape != Z2.shape:
        raise ConfigError(f"output fields have different shapes {Z1.shape} vs {Z2.shape}")
    n1, n2 = field_l2_norm(Z1), field_l2_norm(Z2)
    if n1 <= 0.0 or n2 <= 0.0:
        raise DegenerateProblemError("cannot normalize a zero output field")
    diff = Z1 / n1 - Z2 / n2
    return field_l2_norm(diff)
