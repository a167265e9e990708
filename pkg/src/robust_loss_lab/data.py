"""Datasets, label encodings, softmax, and the uniform label-noise model.

Labels are 0-based integers in {0, ..., C-1} everywhere. Under uniform label
noise of level rho, a label keeps its value with probability 1 - rho and
flips to each of the other C - 1 classes with probability rho / (C - 1).
The derived constant a = 1 - rho * C / (C - 1) is the factor by which the
clean risk enters the noisy risk; lambda_equiv = 1 / a is the regularization
coefficient the noise effectively induces.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, CsvParseError


def rng_from_seed(seed: int) -> np.random.Generator:
    """Named, seedable generator used by every stochastic operation."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with integer labels; the empirical distribution of (X, Y)."""

    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    n_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ConfigError(f"features must be a non-empty 2-D matrix, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ConfigError("features contain non-finite values")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ConfigError("labels must be a vector with one entry per sample")
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform label-noise level with its derived constants (a, lambda_equiv = 1/a)."""

    rho: float
    n_classes: int
    a: float
    lambda_equiv: float


def noise_constants(rho: float, n_classes: int) -> NoiseSpec:
    """Build a NoiseSpec, rejecting levels at or beyond (C-1)/C where a <= 0."""
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    rho = float(rho)
    if rho < 0.0:
        raise ConfigError(f"noise level must be non-negative, got {rho}")
    a = 1.0 - rho * n_classes / (n_classes - 1)
    if a <= 0.0:
        limit = (n_classes - 1) / n_classes
        raise ConfigError(f"noise level {rho} not below {limit} for {n_classes} classes (a <= 0)")
    return NoiseSpec(rho=rho, n_classes=n_classes, a=a, lambda_equiv=1.0 / a)


def onehot(y: int, n_classes: int) -> np.ndarray:
    if not 0 <= y < n_classes:
        raise IndexError(f"class index {y} out of range for {n_classes} classes")
    e = np.zeros(n_classes)
    e[y] = 1.0
    return e


def centered_onehot(y: int, n_classes: int) -> np.ndarray:
    """One-hot target shifted by -1/C so its entries sum to zero."""
    v = onehot(y, n_classes)
    v -= 1.0 / n_classes
    return v


def centered_onehot_matrix(n_classes: int) -> np.ndarray:
    """Rows are centered_onehot(y) for y = 0..C-1."""
    return np.eye(n_classes) - 1.0 / n_classes


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction); rejects non-finite input."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input must be finite")
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_sum_exp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    m = np.max(z, axis=axis, keepdims=True)
    out = m[..., 0] if axis == -1 else np.squeeze(m, axis=axis)
    return out + np.log(np.sum(np.exp(z - m), axis=axis))


def flip_distribution(y: int, spec: NoiseSpec) -> np.ndarray:
    """P(noisy label = i | clean label = y) for each i."""
    if not 0 <= y < spec.n_classes:
        raise IndexError(f"class index {y} out of range for {spec.n_classes} classes")
    p = np.full(spec.n_classes, spec.rho / (spec.n_classes - 1))
    p[y] = 1.0 - spec.rho
    return p


def flip_matrix(spec: NoiseSpec) -> np.ndarray:
    """Row y is flip_distribution(y, spec)."""
    c = spec.n_classes
    m = np.full((c, c), spec.rho / (c - 1))
    np.fill_diagonal(m, 1.0 - spec.rho)
    return m


def inject_noise(labels: np.ndarray, spec: NoiseSpec, seed: int) -> np.ndarray:
    """Independently resample each label from its flip distribution (seeded)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= spec.n_classes:
        raise IndexError(f"labels must lie in [0, {spec.n_classes})")
    rng = rng_from_seed(seed)
    u = rng.random(labels.shape[0])
    # uniform over the other C-1 classes via a cyclic offset in 1..C-1
    offsets = rng.integers(1, spec.n_classes, size=labels.shape[0])
    out = labels.copy()
    flipped = u < spec.rho
    out[flipped] = (labels[flipped] + offsets[flipped]) % spec.n_classes
    return out


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Isotropic Gaussian blob generator: one blob per class, balanced counts."""

    n_classes: int
    dim: int
    n_per_class: int
    centers: np.ndarray  # (C, d)
    sigma: float
    seed: int

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        object.__setattr__(self, "centers", centers)
        if self.n_classes < 2 or self.n_per_class < 1 or self.dim < 1:
            raise ConfigError("need n_classes >= 2, dim >= 1, n_per_class >= 1")
        if centers.shape != (self.n_classes, self.dim):
            raise ConfigError(f"centers must have shape ({self.n_classes}, {self.dim}), got {centers.shape}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 0:
            raise ConfigError("centers must be pairwise distinct")


def default_centers(n_classes: int, dim: int, scale: float = 3.0) -> np.ndarray:
    """Scaled standard basis vectors; falls back to a circle / line when C > d."""
    if n_classes <= dim:
        return scale * np.eye(n_classes, dim)
    if dim == 1:
        return scale * np.arange(n_classes, dtype=float).reshape(-1, 1)
    centers = np.zeros((n_classes, dim))
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers[:, 0] = scale * np.cos(angles)
    centers[:, 1] = scale * np.sin(angles)
    return centers


def make_blobs(spec: SyntheticSpec) -> Dataset:
    """Balanced Gaussian blobs: n_per_class samples around each center."""
    rng = rng_from_seed(spec.seed)
    labels = np.repeat(np.arange(spec.n_classes), spec.n_per_class)
    noise = rng.standard_normal((labels.shape[0], spec.dim))
    features = spec.centers[labels] + spec.sigma * noise
    return Dataset(features=features, labels=labels, n_classes=spec.n_classes)


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write `f0,...,f{d-1},label` rows; floats via repr so loading round-trips exactly."""
    path = Path(path)
    header = ",".join([f"f{j}" for j in range(dataset.dim)] + ["label"])
    lines = [header]
    for row, y in zip(dataset.features, dataset.labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(y)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_csv(path: str | Path, n_classes: int | None = None) -> Dataset:
    """Load a dataset CSV written by save_csv (or matching its schema).

    Line numbers in error messages are 1-based and count the header.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise CsvParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[-1] != "label" or len(header) < 2:
        raise CsvParseError(f"{path}: line 1: expected header 'f0,...,label', got {lines[0]!r}")
    d = len(header) - 1
    features = np.empty((len(lines) - 1, d))
    labels = np.empty(len(lines) - 1, dtype=np.int64)
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != d + 1:
            raise CsvParseError(f"{path}: line {i}: expected {d + 1} fields, got {len(parts)}")
        try:
            features[i - 2] = [float(p) for p in parts[:-1]]
        except ValueError as exc:
            raise CsvParseError(f"{path}: line {i}: non-numeric feature value ({exc})") from None
        try:
            labels[i - 2] = int(parts[-1])
        except ValueError:
            raise CsvParseError(f"{path}: line {i}: non-integer label {parts[-1]!r}") from None
        if labels[i - 2] < 0:
            raise CsvParseError(f"{path}: line {i}: negative label {parts[-1]}")
        if n_classes is not None and labels[i - 2] >= n_classes:
            raise CsvParseError(f"{path}: line {i}: label {parts[-1]} out of range for {n_classes} classes")
    if features.shape[0] == 0:
        raise CsvParseError(f"{path}: no data rows")
    c = n_classes if n_classes is not None else max(int(labels.max()) + 1, 2)
    return Dataset(features=features, labels=labels, n_classes=c)
