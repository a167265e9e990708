"""Output regularizers, their quadratization, and the reduced output space.

A regularizer penalizes the model's output vector and has a unique minimum
at the zero output. Quadratic penalties act on the full C-dimensional logit
space. Confidence penalties (entropy, label smoothing) are functions of
softmax probabilities and are constant along the all-ones direction, so they
are evaluated on the reduced (C-1)-dimensional space obtained by subtracting
the last logit; there they do have a unique minimum at 0.

The quadratization of g is the quadratic form z^T H z with H the Hessian of
g at its minimum (twice the second-order Taylor term; the factor is absorbed
by the loss coefficient in any objective that uses it).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import log_sum_exp, softmax
from .errors import ConfigError, CsvParseError, DegenerateProblemError

REGULARIZER_KINDS = ("quadratic", "entropy", "label_smoothing")


def reduce_outputs(z: np.ndarray) -> np.ndarray:
    """Subtract the last coordinate and drop it: R^C -> R^(C-1). Works on rows too."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return z[:-1] - z[-1]
    return z[:, :-1] - z[:, -1:]


def embed_outputs(z: np.ndarray) -> np.ndarray:
    """Append a zero coordinate: R^(C-1) -> {z in R^C | z_C = 0}."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return np.concatenate([z, [0.0]])
    return np.hstack([z, np.zeros((z.shape[0], 1))])


@dataclass(frozen=True, eq=False)
class RegularizerSpec:
    kind: str
    n_classes: int
    matrix: np.ndarray | None = None  # quadratic form coefficient A
    reduced: bool = False

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ConfigError(f"unknown regularizer kind {self.kind!r}")
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.kind == "quadratic":
            a = np.asarray(self.matrix, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ConfigError(f"quadratic matrix must be square, got shape {a.shape}")
            if a.shape[0] != self.dim:
                raise ConfigError(
                    f"quadratic matrix has dim {a.shape[0]}, expected {self.dim} "
                    f"({'reduced' if self.reduced else 'full'} space, C={self.n_classes})"
                )
            if np.max(np.abs(a - a.T)) > 1e-12:
                raise ConfigError("quadratic matrix must be symmetric (|A - A^T| <= 1e-12)")
            scale = np.max(np.abs(a))
            min_eig = float(np.linalg.eigvalsh(a)[0])
            if min_eig <= 1e-10 * max(scale, 1e-300):
                raise DegenerateProblemError(f"quadratic matrix not positive definite (min eig {min_eig:.3e})")
            object.__setattr__(self, "matrix", a)
        else:
            # confidence penalties only make sense on the reduced space
            object.__setattr__(self, "reduced", True)
            if self.matrix is not None:
                raise ConfigError(f"{self.kind} takes no matrix")

    @property
    def dim(self) -> int:
        """Dimension of the output space this regularizer acts on."""
        return self.n_classes - 1 if self.reduced else self.n_classes

    def describe(self) -> str:
        if self.kind == "quadratic":
            return f"quad(dim={self.dim}{', reduced' if self.reduced else ''})"
        return self.kind


@dataclass(frozen=True)
class RegEval:
    value: float
    grad: np.ndarray


def quadratic(matrix: np.ndarray, n_classes: int | None = None, reduced: bool = False) -> RegularizerSpec:
    matrix = np.asarray(matrix, dtype=float)
    if n_classes is None:
        n_classes = matrix.shape[0] + 1 if reduced else matrix.shape[0]
    return RegularizerSpec("quadratic", n_classes, matrix=matrix, reduced=reduced)


def entropy(n_classes: int) -> RegularizerSpec:
    return RegularizerSpec("entropy", n_classes, reduced=True)


def label_smoothing(n_classes: int) -> RegularizerSpec:
    return RegularizerSpec("label_smoothing", n_classes, reduced=True)


def _load_matrix_csv(path: str) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    rows = []
    for i, line in enumerate(lines, start=1):
        try:
            rows.append([float(p) for p in line.split(",")])
        except ValueError as exc:
            raise CsvParseError(f"{path}: line {i}: non-numeric matrix entry ({exc})") from None
        if len(rows[-1]) != len(rows[0]):
            raise CsvParseError(f"{path}: line {i}: ragged row")
    return np.array(rows)


def parse_regularizer(text: str, n_classes: int) -> RegularizerSpec:
    """Parse a config string: `quad:identity`, `quad:scale=<s>`, `quad:file=<path>`,
    `entropy`, `label_smoothing`."""
    token = text.strip()
    head, _, tail = token.lower().partition(":")
    if head == "entropy":
        return entropy(n_classes)
    if head == "label_smoothing":
        return label_smoothing(n_classes)
    if head == "quad":
        if tail == "identity":
            return quadratic(np.eye(n_classes), n_classes)
        if tail.startswith("scale="):
            try:
                s = float(tail[len("scale=") :])
            except ValueError:
                raise ConfigError(f"bad quad scale in {text!r}") from None
            return quadratic(s * np.eye(n_classes), n_classes)
        if tail.startswith("file="):
            # preserve case in the path: re-split the original token
            path = token.partition(":")[2][len("file=") :]
            return quadratic(_load_matrix_csv(path), n_classes)
        raise ConfigError(f"bad quad specifier {tail!r} in {text!r}")
    raise ConfigError(f"unknown regularizer {head!r} in {text!r}")


def _check_input(spec: RegularizerSpec, Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != spec.dim:
        raise ConfigError(f"regularizer input has dim {Z.shape[1]}, expected {spec.dim}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("regularizer input must be finite")
    return Z


def reg_values(spec: RegularizerSpec, Z: np.ndarray) -> np.ndarray:
    """Per-row regularizer values."""
    Z = _check_input(spec, Z)
    if spec.kind == "quadratic":
        return np.einsum("ni,ij,nj->n", Z, spec.matrix, Z)
    Zf = embed_outputs(Z)
    lse = log_sum_exp(Zf)
    if spec.kind == "entropy":
        # sum_i p_i log p_i written as sum_i p_i z_i - lse (stable for extreme logits)
        P = softmax(Zf)
        return np.sum(P * Zf, axis=1) - lse
    if spec.kind == "label_smoothing":
        # -(1/C) sum_i log p_i = lse - mean(z)
        return lse - Zf.mean(axis=1)
    raise AssertionError(spec.kind)


def reg_grads(spec: RegularizerSpec, Z: np.ndarray) -> np.ndarray:
    """Per-row gradients in the regularizer's own (full or reduced) coordinates."""
    Z = _check_input(spec, Z)
    if spec.kind == "quadratic":
        return 2.0 * Z @ spec.matrix
    Zf = embed_outputs(Z)
    P = softmax(Zf)
    if spec.kind == "entropy":
        lse = log_sum_exp(Zf)
        value = np.sum(P * Zf, axis=1) - lse
        full = P * (Zf - lse[:, None] - value[:, None])
    elif spec.kind == "label_smoothing":
        full = P - 1.0 / spec.n_classes
    else:
        raise AssertionError(spec.kind)
    return full[:, :-1]


def reg_eval(spec: RegularizerSpec, z: np.ndarray) -> RegEval:
    """Value and analytic gradient at a single output vector."""
    values = reg_values(spec, np.asarray(z, dtype=float)[None, :])
    grads = reg_grads(spec, np.asarray(z, dtype=float)[None, :])
    return RegEval(value=float(values[0]), grad=grads[0])


def reg_hessian_at_min(spec: RegularizerSpec) -> np.ndarray:
    """Analytic Hessian of the regularizer at its minimum (the zero output)."""
    if spec.kind == "quadratic":
        return 2.0 * spec.matrix
    # entropy and label smoothing share the same Hessian at the uniform point:
    # restriction of (1/C)(I - J/C) to the reduced coordinates
    c = spec.n_classes
    full = (np.eye(c) - np.full((c, c), 1.0 / c)) / c
    return full[: c - 1, : c - 1]


def quadratize(spec: RegularizerSpec) -> RegularizerSpec:
    """Quadratic surrogate z^T H z with H the Hessian at the minimum."""
    h = reg_hessian_at_min(spec)
    return quadratic(h, spec.n_classes, reduced=spec.reduced)
