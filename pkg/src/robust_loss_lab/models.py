"""Classifier families, forward maps, and objective assembly.

Two families realize the output field Z(theta) = f_theta(X):

* LinearFamily: independent linear heads over a shared feature map,
  Z = phi(X) Theta^T with Theta of shape (n_outputs, p).
* Mlp2Family: a bias-free two-layer network Z = tanh(X W1^T) W2^T. Without
  biases, scaling W2 by t scales every output by t exactly, so the family is
  closed under positive output scaling.

When an objective uses a reduced-space regularizer (confidence penalty), the
model produces n_outputs = C - 1 logits; losses are evaluated on the embedded
C-vector (last logit pinned to 0) and predictions are unchanged by the
embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses as losses_mod
from . import regularizers as regs_mod
from .data import Dataset, NoiseSpec, flip_matrix, rng_from_seed
from .errors import ConfigError


# ---------------------------------------------------------------------------
# feature maps

@dataclass(frozen=True, eq=False)
class FeatureMap:
    kind: str  # identity | append_one | random_fourier
    dim_in: int
    dim_out: int
    bandwidth: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "append_one", "random_fourier"):
            raise ConfigError(f"unknown feature map {self.kind!r}")
        if self.kind == "random_fourier":
            if self.bandwidth is None or self.bandwidth <= 0 or self.seed is None:
                raise ConfigError("random_fourier needs a positive bandwidth and a seed")
            rng = rng_from_seed(self.seed)
            w = rng.standard_normal((self.dim_out, self.dim_in)) / self.bandwidth
            b = rng.uniform(0.0, 2.0 * np.pi, size=self.dim_out)
            object.__setattr__(self, "_w", w)
            object.__setattr__(self, "_b", b)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.dim_in:
            raise ConfigError(f"feature map expects dim {self.dim_in}, got {X.shape[1]}")
        if self.kind == "identity":
            return X
        if self.kind == "append_one":
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return np.sqrt(2.0 / self.dim_out) * np.cos(X @ self._w.T + self._b)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "dim_in": self.dim_in, "dim_out": self.dim_out}
        if self.kind == "random_fourier":
            cfg["bandwidth"] = self.bandwidth
            cfg["seed"] = self.seed
        return cfg


def identity_map(dim_in: int) -> FeatureMap:
    return FeatureMap("identity", dim_in, dim_in)


def append_one_map(dim_in: int) -> FeatureMap:
    return FeatureMap("append_one", dim_in, dim_in + 1)


def random_fourier_map(dim_in: int, dim_out: int, bandwidth: float, seed: int) -> FeatureMap:
    return FeatureMap("random_fourier", dim_in, dim_out, bandwidth=bandwidth, seed=seed)


def feature_map_from_config(cfg: dict) -> FeatureMap:
    return FeatureMap(
        cfg["kind"],
        int(cfg["dim_in"]),
        int(cfg["dim_out"]),
        bandwidth=cfg.get("bandwidth"),
        seed=cfg.get("seed"),
    )


def feature_second_moment(fmap: FeatureMap, X: np.ndarray) -> np.ndarray:
    """Empirical E[phi(X) phi(X)^T]."""
    F = fmap.apply(X)
    return F.T @ F / F.shape[0]


# ---------------------------------------------------------------------------
# families

class LinearFamily:
    """Independent linear heads over a shared feature map; theta = Theta.ravel()."""

    kind = "linear"

    def __init__(self, feature_map: FeatureMap, n_outputs: int):
        self.feature_map = feature_map
        self.n_outputs = int(n_outputs)
        self.n_features = feature_map.dim_out
        self.n_params = self.n_outputs * self.n_features

    def prepare(self, X: np.ndarray) -> np.ndarray:
        return self.feature_map.apply(X)

    def unflatten(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(self.n_outputs, self.n_features)

    def forward(self, theta: np.ndarray, prepared: np.ndarray) -> np.ndarray:
        return prepared @ self.unflatten(theta).T

    def jacobian(self, theta: np.ndarray, prepared: np.ndarray) -> np.ndarray:
        """(n, n_outputs, n_params) array of per-sample output Jacobians."""
        n = prepared.shape[0]
        out = self.n_outputs
        j = np.zeros((n, out, out, self.n_features))
        idx = np.arange(out)
        j[:, idx, idx, :] = prepared[:, None, :]
        return j.reshape(n, out, self.n_params)

    def grad_from_output_grads(self, theta: np.ndarray, prepared: np.ndarray, G: np.ndarray) -> np.ndarray:
        """sum_i J_i^T G_i for per-sample output gradients G (n, n_outputs)."""
        return (G.T @ prepared).ravel()

    def scale_outputs(self, theta: np.ndarray, t: float) -> np.ndarray:
        return t * np.asarray(theta, dtype=float)

    def to_config(self) -> dict:
        return {"kind": self.kind, "n_outputs": self.n_outputs, "feature_map": self.feature_map.to_config()}


class Mlp2Family:
    """Bias-free two-layer tanh network; theta = [W1.ravel(), W2.ravel()]."""

    kind = "mlp2"

    def __init__(self, dim_in: int, hidden: int, n_outputs: int):
        self.dim_in = int(dim_in)
        self.hidden = int(hidden)
        self.n_outputs = int(n_outputs)
        self.n_params = self.hidden * self.dim_in + self.n_outputs * self.hidden

    def prepare(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.dim_in:
            raise ConfigError(f"mlp2 expects input dim {self.dim_in}, got {X.shape[1]}")
        return X

    def unflatten(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        k = self.hidden * self.dim_in
        w1 = theta[:k].reshape(self.hidden, self.dim_in)
        w2 = theta[k:].reshape(self.n_outputs, self.hidden)
        return w1, w2

    def forward(self, theta: np.ndarray, prepared: np.ndarray) -> np.ndarray:
        w1, w2 = self.unflatten(theta)
        return np.tanh(prepared @ w1.T) @ w2.T

    def jacobian(self, theta: np.ndarray, prepared: np.ndarray) -> np.ndarray:
        w1, w2 = self.unflatten(theta)
        n = prepared.shape[0]
        h = np.tanh(prepared @ w1.T)  # (n, hidden)
        d = 1.0 - h * h
        j1 = np.einsum("ka,na,nb->nkab", w2, d, prepared)  # d z_k / d W1_ab
        out = self.n_outputs
        j2 = np.zeros((n, out, out, self.hidden))
        idx = np.arange(out)
        j2[:, idx, idx, :] = h[:, None, :]
        return np.concatenate(
            [j1.reshape(n, out, self.hidden * self.dim_in), j2.reshape(n, out, out * self.hidden)],
            axis=2,
        )

    def grad_from_output_grads(self, theta: np.ndarray, prepared: np.ndarray, G: np.ndarray) -> np.ndarray:
        w1, w2 = self.unflatten(theta)
        h = np.tanh(prepared @ w1.T)
        ds = (G @ w2) * (1.0 - h * h)
        dw1 = ds.T @ prepared
        dw2 = G.T @ h
        return np.concatenate([dw1.ravel(), dw2.ravel()])

    def scale_outputs(self, theta: np.ndarray, t: float) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).copy()
        k = self.hidden * self.dim_in
        theta[k:] *= t
        return theta

    def reference_init(self, seed: int, scale: float = 0.5) -> np.ndarray:
        """Seeded first layer, zero second layer: Z(theta) = 0 with nonzero output Jacobian."""
        rng = rng_from_seed(seed)
        w1 = scale * rng.standard_normal((self.hidden, self.dim_in))
        return np.concatenate([w1.ravel(), np.zeros(self.n_outputs * self.hidden)])

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "dim_in": self.dim_in,
            "hidden": self.hidden,
            "n_outputs": self.n_outputs,
        }


def family_from_config(cfg: dict):
    if cfg["kind"] == "linear":
        return LinearFamily(feature_map_from_config(cfg["feature_map"]), int(cfg["n_outputs"]))
    if cfg["kind"] == "mlp2":
        return Mlp2Family(int(cfg["dim_in"]), int(cfg["hidden"]), int(cfg["n_outputs"]))
    raise ConfigError(f"unknown model family {cfg.get('kind')!r}")


# ---------------------------------------------------------------------------
# models and outputs

@dataclass(frozen=True, eq=False)
class Model:
    family: LinearFamily | Mlp2Family
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.family.n_params,):
            raise ConfigError(f"theta has shape {theta.shape}, expected ({self.family.n_params},)")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True, eq=False)
class ModelOutput:
    """Logit field over a dataset; reduced outputs carry C-1 columns."""

    Z: np.ndarray
    n_classes: int
    reduced: bool

    def full_logits(self) -> np.ndarray:
        return regs_mod.embed_outputs(self.Z) if self.reduced else self.Z


def _output_mode(family, n_classes: int) -> bool:
    if family.n_outputs == n_classes:
        return False
    if family.n_outputs == n_classes - 1:
        return True
    raise ConfigError(
        f"model produces {family.n_outputs} outputs; expected {n_classes} (full) or {n_classes - 1} (reduced)"
    )


def forward(model: Model, dataset: Dataset) -> ModelOutput:
    reduced = _output_mode(model.family, dataset.n_classes)
    prepared = model.family.prepare(dataset.features)
    z = model.family.forward(model.theta, prepared)
    if not np.all(np.isfinite(z)):
        raise ValueError("model output contains non-finite values")
    return ModelOutput(Z=z, n_classes=dataset.n_classes, reduced=reduced)


def predict(output: ModelOutput | np.ndarray) -> np.ndarray:
    """Per-row argmax; ties break toward the smallest class index."""
    z = output.full_logits() if isinstance(output, ModelOutput) else np.asarray(output, dtype=float)
    return np.argmax(z, axis=1)


def l2_norm(output: ModelOutput | np.ndarray) -> float:
    """sqrt(E ||z||^2) over rows. Embedding a reduced field does not change it."""
    z = output.Z if isinstance(output, ModelOutput) else np.asarray(output, dtype=float)
    return float(np.sqrt(np.mean(np.sum(z * z, axis=1))))


# ---------------------------------------------------------------------------
# objectives

class Objective:
    """loss_coeff * (empirical or exact-noisy risk) + reg_coeff * mean regularizer.

    With a NoiseSpec the loss term is the exact expectation over label flips
    (no sampling): sum_j P(noisy=j | y_i) l(z_i, j), averaged over samples.
    """

    def __init__(
        self,
        family,
        dataset: Dataset,
        loss: losses_mod.LossSpec | None,
        reg: regs_mod.RegularizerSpec | None = None,
        loss_coeff: float = 1.0,
        reg_coeff: float = 1.0,
        noise: NoiseSpec | None = None,
    ):
        if loss is None and reg is None:
            raise ConfigError("objective needs a loss, a regularizer, or both")
        self.family = family
        self.dataset = dataset
        self.loss = loss
        self.reg = reg
        self.loss_coeff = float(loss_coeff)
        self.reg_coeff = float(reg_coeff)
        self.noise = noise
        self.reduced = _output_mode(family, dataset.n_classes)
        if loss is not None and loss.n_classes != dataset.n_classes:
            raise ConfigError("loss class count does not match dataset")
        if reg is not None:
            if reg.n_classes != dataset.n_classes:
                raise ConfigError("regularizer class count does not match dataset")
            if reg.reduced != self.reduced:
                raise ConfigError(
                    "regularizer space does not match model outputs "
                    f"(regularizer {'reduced' if reg.reduced else 'full'}, model "
                    f"{'reduced' if self.reduced else 'full'})"
                )
        self._prepared = family.prepare(dataset.features)
        self._flip_rows = None
        if noise is not None:
            if noise.n_classes != dataset.n_classes:
                raise ConfigError("noise class count does not match dataset")
            self._flip_rows = flip_matrix(noise)[dataset.labels]  # (n, C)

    @property
    def n_params(self) -> int:
        return self.family.n_params

    def _loss_term(self, Z: np.ndarray, want_grad: bool):
        Zf = regs_mod.embed_outputs(Z) if self.reduced else Z
        if self._flip_rows is None:
            if want_grad:
                values, grads = losses_mod.batch_loss(self.loss, Zf, self.dataset.labels)
                return float(values.mean()), grads
            idx = np.arange(Zf.shape[0])
            values = losses_mod.loss_values(self.loss, Zf)[idx, self.dataset.labels]
            return float(values.mean()), None
        table = losses_mod.loss_values(self.loss, Zf)
        value = float(np.sum(self._flip_rows * table) / Zf.shape[0])
        if not want_grad:
            return value, None
        grads = np.einsum("nj,njk->nk", self._flip_rows, losses_mod.loss_grads(self.loss, Zf))
        return value, grads

    def value(self, theta: np.ndarray) -> float:
        Z = self.family.forward(theta, self._prepared)
        total = 0.0
        if self.loss is not None and self.loss_coeff != 0.0:
            lval, _ = self._loss_term(Z, want_grad=False)
            total += self.loss_coeff * lval
        if self.reg is not None and self.reg_coeff != 0.0:
            total += self.reg_coeff * float(regs_mod.reg_values(self.reg, Z).mean())
        return total

    def value_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        Z = self.family.forward(theta, self._prepared)
        n, out = Z.shape
        total = 0.0
        G = np.zeros_like(Z)
        if self.loss is not None and self.loss_coeff != 0.0:
            lval, lgrads = self._loss_term(Z, want_grad=True)
            total += self.loss_coeff * lval
            G += self.loss_coeff * (lgrads[:, :out] if self.reduced else lgrads)
        if self.reg is not None and self.reg_coeff != 0.0:
            total += self.reg_coeff * float(regs_mod.reg_values(self.reg, Z).mean())
            G += self.reg_coeff * regs_mod.reg_grads(self.reg, Z)
        grad = self.family.grad_from_output_grads(theta, self._prepared, G / n)
        return total, grad


def objective_value_and_grad(
    model: Model,
    dataset: Dataset,
    loss: losses_mod.LossSpec | None,
    reg: regs_mod.RegularizerSpec | None,
    alpha: float = 1.0,
    noise: NoiseSpec | None = None,
) -> tuple[float, np.ndarray]:
    """Value and theta-gradient of alpha * risk + mean regularizer at model.theta."""
    obj = Objective(model.family, dataset, loss, reg, loss_coeff=alpha, noise=noise)
    return obj.value_and_grad(model.theta)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(model: Model, path: str | Path) -> None:
    """JSON checkpoint: family descriptor plus the row-major parameter vector."""
    payload = {
        "schema_version": "v1",
        "family": model.family.to_config(),
        "theta": [float(v) for v in model.theta],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> Model:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    family = family_from_config(payload["family"])
    return Model(family=family, theta=np.array(payload["theta"], dtype=float))
