"""Loss functions over logits with analytic gradients.

Every loss is a function of a logit vector z in R^C and a label y. Losses
that are natively defined on probability vectors (MAE, GCE, SCE) compose
with softmax internally, so the whole zoo shares one input convention.

Kinds
-----
muh         (1/C) sum(z) - z_y = -<z, centered_onehot(y)>; linear and symmetric
mae         ||softmax(z) - onehot(y)||_1 = 2 (1 - p_y)
gce         (1 - p_y^q) / q with q in (0, 1]
sce         -log p_y + lambda_sce * (1 - p_y)
softmax_ce  -z_y + log sum_i exp(z_i)
square_star ||z - centered_onehot(y)||^2
linearized  first-order expansion at z = 0 of another loss: row_y(G0) . z
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import centered_onehot_matrix, log_sum_exp, rng_from_seed, softmax
from .errors import ConfigError

LOSS_KINDS = ("muh", "mae", "gce", "sce", "softmax_ce", "square_star", "linearized")


@dataclass(frozen=True, eq=False)
class LossSpec:
    kind: str
    n_classes: int
    q: float | None = None
    lambda_sce: float | None = None
    grad0: np.ndarray | None = None  # (C, C): row y is grad_z l(0, y)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.kind == "gce":
            if self.q is None or not 0.0 < self.q <= 1.0:
                raise ConfigError(f"gce requires q in (0, 1], got {self.q}")
        if self.kind == "sce":
            if self.lambda_sce is None or self.lambda_sce < 0.0:
                raise ConfigError(f"sce requires lambda >= 0, got {self.lambda_sce}")
        if self.kind == "linearized":
            g = np.asarray(self.grad0, dtype=float)
            if g.shape != (self.n_classes, self.n_classes):
                raise ConfigError(f"linearized loss needs a {self.n_classes}x{self.n_classes} gradient matrix")
            object.__setattr__(self, "grad0", g)

    def describe(self) -> str:
        if self.kind == "gce":
            return f"gce:q={self.q}"
        if self.kind == "sce":
            return f"sce:lambda={self.lambda_sce}"
        return self.kind


@dataclass(frozen=True)
class LossEval:
    value: float
    grad: np.ndarray


def muh(n_classes: int) -> LossSpec:
    return LossSpec("muh", n_classes)


def mae(n_classes: int) -> LossSpec:
    return LossSpec("mae", n_classes)


def gce(n_classes: int, q: float) -> LossSpec:
    return LossSpec("gce", n_classes, q=float(q))


def sce(n_classes: int, lambda_sce: float) -> LossSpec:
    return LossSpec("sce", n_classes, lambda_sce=float(lambda_sce))


def softmax_ce(n_classes: int) -> LossSpec:
    return LossSpec("softmax_ce", n_classes)


def square_star(n_classes: int) -> LossSpec:
    return LossSpec("square_star", n_classes)


def parse_loss(text: str, n_classes: int) -> LossSpec:
    """Parse a loss config string, e.g. `muh`, `gce:q=0.7`, `sce:lambda=1.0`."""
    token = text.strip().lower()
    head, _, tail = token.partition(":")
    params = {}
    if tail:
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigError(f"bad loss parameter {item!r} in {text!r} (expected key=value)")
            try:
                params[key.strip()] = float(value)
            except ValueError:
                raise ConfigError(f"bad loss parameter value {value!r} in {text!r}") from None
    if head in ("muh", "mae", "softmax_ce", "square_star"):
        if params:
            raise ConfigError(f"loss {head!r} takes no parameters, got {tail!r}")
        return LossSpec(head, n_classes)
    if head == "gce":
        if set(params) != {"q"}:
            raise ConfigError(f"gce requires exactly q=<value>, got {text!r}")
        return gce(n_classes, params["q"])
    if head == "sce":
        if set(params) != {"lambda"}:
            raise ConfigError(f"sce requires exactly lambda=<value>, got {text!r}")
        return sce(n_classes, params["lambda"])
    raise ConfigError(f"unknown loss {head!r} in {text!r}")


def _check_logits(spec: LossSpec, Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != spec.n_classes:
        raise ConfigError(f"logits have {Z.shape[1]} columns, expected {spec.n_classes}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("logits must be finite")
    return Z


def loss_values(spec: LossSpec, Z: np.ndarray) -> np.ndarray:
    """Table V with V[i, j] = l(Z[i], j) for every label j."""
    Z = _check_logits(spec, Z)
    c = spec.n_classes
    if spec.kind == "muh":
        return Z.mean(axis=1, keepdims=True) - Z
    if spec.kind == "softmax_ce":
        return log_sum_exp(Z)[:, None] - Z
    if spec.kind == "mae":
        return 2.0 * (1.0 - softmax(Z))
    if spec.kind == "gce":
        return (1.0 - softmax(Z) ** spec.q) / spec.q
    if spec.kind == "sce":
        return (log_sum_exp(Z)[:, None] - Z) + spec.lambda_sce * (1.0 - softmax(Z))
    if spec.kind == "square_star":
        # ||z - h(j)||^2 with h(j) = centered one-hot
        H = centered_onehot_matrix(c)
        diff = Z[:, None, :] - H[None, :, :]
        return np.sum(diff * diff, axis=2)
    if spec.kind == "linearized":
        return Z @ spec.grad0.T
    raise AssertionError(spec.kind)


def loss_grads(spec: LossSpec, Z: np.ndarray) -> np.ndarray:
    """Table G with G[i, j, :] = grad_z l(Z[i], j) for every label j."""
    Z = _check_logits(spec, Z)
    n, c = Z.shape
    eye = np.eye(c)
    if spec.kind == "muh":
        g = 1.0 / c - eye  # rows: -centered_onehot(j)
        return np.broadcast_to(g[None, :, :], (n, c, c)).copy()
    if spec.kind == "linearized":
        return np.broadcast_to(spec.grad0[None, :, :], (n, c, c)).copy()
    P = softmax(Z)
    if spec.kind == "softmax_ce":
        return P[:, None, :] - eye[None, :, :]
    if spec.kind == "mae":
        # d/dz [2(1 - p_j)] = -2 p_j (e_j - p)
        return -2.0 * P[:, :, None] * (eye[None, :, :] - P[:, None, :])
    if spec.kind == "gce":
        return -(P**spec.q)[:, :, None] * (eye[None, :, :] - P[:, None, :])
    if spec.kind == "sce":
        ce = P[:, None, :] - eye[None, :, :]
        reg = -P[:, :, None] * (eye[None, :, :] - P[:, None, :])
        return ce + spec.lambda_sce * reg
    if spec.kind == "square_star":
        H = centered_onehot_matrix(c)
        return 2.0 * (Z[:, None, :] - H[None, :, :])
    raise AssertionError(spec.kind)


def batch_loss(spec: LossSpec, Z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample values and gradients at the given labels."""
    Z = _check_logits(spec, Z)
    y = np.asarray(y, dtype=np.int64)
    idx = np.arange(Z.shape[0])
    values = loss_values(spec, Z)[idx, y]
    grads = loss_grads(spec, Z)[idx, y]
    return values, grads


def loss_eval(spec: LossSpec, z: np.ndarray, y: int) -> LossEval:
    """Value and analytic gradient of the loss at a single logit vector."""
    if not 0 <= y < spec.n_classes:
        raise IndexError(f"class index {y} out of range for {spec.n_classes} classes")
    values, grads = batch_loss(spec, np.asarray(z, dtype=float)[None, :], np.array([y]))
    return LossEval(value=float(values[0]), grad=grads[0])


def gradients_at_zero(spec: LossSpec) -> np.ndarray:
    """Matrix whose row y is grad_z l(0, y)."""
    return loss_grads(spec, np.zeros((1, spec.n_classes)))[0]


def linearize(spec: LossSpec) -> LossSpec:
    """First-order expansion at z = 0: l_lin(z, y) = grad_z l(0, y) . z."""
    return LossSpec("linearized", spec.n_classes, grad0=gradients_at_zero(spec))


def symmetry_sum(spec: LossSpec, z: np.ndarray) -> float:
    """Sum of the loss over all C labels at a fixed logit vector."""
    return float(loss_values(spec, np.asarray(z, dtype=float)[None, :]).sum())


@dataclass(frozen=True)
class SymmetryResult:
    symmetric: bool
    max_deviation: float


def is_symmetric(spec: LossSpec, trials: int = 32, tol: float = 1e-9, seed: int = 0) -> SymmetryResult:
    """Sample logit vectors and compare the label sum against its value at z = 0."""
    if trials < 2:
        raise ConfigError(f"need at least 2 trials, got {trials}")
    rng = rng_from_seed(seed)
    ref = symmetry_sum(spec, np.zeros(spec.n_classes))
    zs = rng.standard_normal((trials, spec.n_classes))
    sums = loss_values(spec, zs).sum(axis=1)
    max_dev = float(np.max(np.abs(sums - ref)))
    return SymmetryResult(symmetric=max_dev <= tol, max_deviation=max_dev)


def muh_square_decomposition_residual(z: np.ndarray, y: int, n_classes: int) -> float:
    """square_star(z,y) - 2*muh(z,y) - ||z||^2; constant (C-1)/C for all (z, y)."""
    z = np.asarray(z, dtype=float)
    sq = loss_eval(square_star(n_classes), z, y).value
    mu = loss_eval(muh(n_classes), z, y).value
    return sq - 2.0 * mu - float(z @ z)
