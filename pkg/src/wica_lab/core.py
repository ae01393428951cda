"""Array contracts, weighted statistics, correlations, and random streams.

Conventions used across the package:

* data matrices are N x d float64, one sample per row;
* all variances and covariances are population quantities (ddof=0);
* randomness flows through RngStream so every artifact is reproducible
  from a single integer seed and a path of string tags.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateColumnError,
    DegenerateWeightsError,
    DimensionError,
    FileFormatError,
    NonFiniteError,
    NumericalError,
)

__all__ = [
    "Dataset",
    "WeightedSample",
    "RngStream",
    "as_data",
    "as_weights",
    "weighted_mean",
    "weighted_cov",
    "normalize_componentwise",
    "average_ranks",
    "pearson_corr_matrix",
    "spearman_corr",
    "polar_orthogonal",
    "sample_haar_orthogonal",
    "load_csv",
    "save_csv",
]


# ---------------------------------------------------------------------------
# validation


def as_data(x, *, min_cols: int = 1, name: str = "data") -> np.ndarray:
    """Coerce to a float64 N x d matrix and validate the array contract."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    n, d = arr.shape
    if n < 1:
        raise DimensionError(f"{name} must contain at least one row")
    if d < min_cols:
        raise DimensionError(f"{name} needs at least {min_cols} columns, got {d}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


def as_weights(w, n: int) -> np.ndarray:
    """Validate a weight vector: length n, finite, nonnegative, positive sum."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.shape != (n,):
        raise DimensionError(f"weights must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateWeightsError("weights contain non-finite values")
    if np.any(arr < 0.0):
        raise DegenerateWeightsError("weights must be nonnegative")
    if arr.sum() <= 0.0:
        raise DegenerateWeightsError("weights sum to zero")
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """A validated sample matrix with at least two columns.

    Thin wrapper used at file boundaries; numerical routines take bare
    arrays so intermediate results never pay re-validation.
    """

    x: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", as_data(self.x, min_cols=2, name="dataset"))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls(load_csv(path))

    def save(self, path) -> None:
        save_csv(path, self.x)


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """Samples paired with nonnegative weights, one weight per row."""

    x: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        x = as_data(self.x, name="weighted sample")
        w = as_weights(self.w, x.shape[0])
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    def mean(self) -> np.ndarray:
        return weighted_mean(self.x, self.w)

    def cov(self) -> np.ndarray:
        return weighted_cov(self.x, self.w)


# ---------------------------------------------------------------------------
# weighted statistics


def weighted_mean(x, w) -> np.ndarray:
    """Weight-normalized mean of the rows of x."""
    x = as_data(x)
    w = as_weights(w, x.shape[0])
    return (w @ x) / w.sum()


def weighted_cov(x, w) -> np.ndarray:
    """Population covariance of rows of x under weights w.

    The divisor is the total weight, never a Bessel-style correction:
    a two-row sample [[0], [2]] with equal weights has variance 1.
    """
    x = as_data(x)
    w = as_weights(w, x.shape[0])
    s = w.sum()
    centered = x - (w @ x) / s
    return (centered.T * w) @ centered / s


_NORMALIZE_FLOOR = 1e-8


def normalize_componentwise(x) -> np.ndarray:
    """Shift each column to mean 0 and scale it to unit std (ddof=0).

    Columns with std below 1e-8 are divided by (std + 1e-8) instead of
    erroring: a latent channel that has gone flat mid-training should
    yield zeros here, not abort the run.  Correlation routines remain
    strict about constant columns.
    """
    x = as_data(x)
    if x.shape[0] < 2:
        raise DimensionError("normalization needs at least 2 rows")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    denom = np.where(sigma < _NORMALIZE_FLOOR, sigma + _NORMALIZE_FLOOR, sigma)
    return (x - mu) / denom


# ---------------------------------------------------------------------------
# correlation


def average_ranks(v) -> np.ndarray:
    """Ranks 1..n of a vector, with ties sharing their average rank."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"ranks are defined for vectors, got ndim={v.ndim}")
    n = v.shape[0]
    order = np.argsort(v, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        # tied block [i, j] shares the mean of the ranks it occupies
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson_corr_matrix(z, s) -> np.ndarray:
    """Pearson correlations between every column of z and every column of s.

    Uses a single square root on the product of second moments so a column
    paired with itself scores exactly 1.0.  Constant columns are rejected
    because a correlation is undefined there.
    """
    z = as_data(z, name="left sample")
    s = as_data(s, name="right sample")
    if z.shape[0] != s.shape[0]:
        raise DimensionError(
            f"row counts differ: {z.shape[0]} vs {s.shape[0]}"
        )
    # constancy is decided on the raw columns; centering residue of a
    # constant column is roundoff, not variance
    for j in np.flatnonzero(z.max(axis=0) == z.min(axis=0)):
        raise DegenerateColumnError(int(j))
    for j in np.flatnonzero(s.max(axis=0) == s.min(axis=0)):
        raise DegenerateColumnError(int(j))
    zc = z - z.mean(axis=0)
    sc = s - s.mean(axis=0)
    zsq = np.einsum("ij,ij->j", zc, zc)
    ssq = np.einsum("ij,ij->j", sc, sc)
    r = (zc.T @ sc) / np.sqrt(np.outer(zsq, ssq))
    return np.clip(r, -1.0, 1.0)


def spearman_corr(a, b) -> float:
    """Spearman rank correlation of two vectors (average ranks on ties)."""
    ra = average_ranks(a)
    rb = average_ranks(b)
    if ra.shape != rb.shape:
        raise DimensionError("vectors must have equal length")
    return float(pearson_corr_matrix(ra[:, None], rb[:, None])[0, 0])


# ---------------------------------------------------------------------------
# orthogonal matrices


_JACOBI_SWEEPS = 60
_JACOBI_TOL = 1e-14


def _jacobi_svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided Jacobi SVD of a square matrix: a = u * diag(s) @ v.T.

    Rotates column pairs of a working copy until all pairs are mutually
    orthogonal, accumulating the rotations in v.  Quadratic convergence
    makes the sweep cap generous for any dimension this package meets.
    """
    u = np.array(a, dtype=np.float64, copy=True)
    d = u.shape[0]
    v = np.eye(d)
    for _ in range(_JACOBI_SWEEPS):
        off = 0.0
        for p in range(d - 1):
            for q in range(p + 1, d):
                app = u[:, p] @ u[:, p]
                aqq = u[:, q] @ u[:, q]
                apq = u[:, p] @ u[:, q]
                denom = np.sqrt(app * aqq)
                if denom == 0.0 or not np.isfinite(denom):
                    raise NumericalError("rank-deficient matrix in Jacobi sweep")
                ratio = abs(apq) / denom
                off = max(off, ratio)
                if ratio <= _JACOBI_TOL:
                    continue
                zeta = (aqq - app) / (2.0 * apq)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                up = u[:, p].copy()
                u[:, p] = c * up - s * u[:, q]
                u[:, q] = s * up + c * u[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if off <= _JACOBI_TOL:
            break
    else:
        raise NumericalError("Jacobi SVD did not converge")
    sigma = np.sqrt(np.einsum("ij,ij->j", u, u))
    if np.any(sigma <= 0.0) or not np.all(np.isfinite(sigma)):
        raise NumericalError("singular values collapsed in Jacobi SVD")
    return u / sigma, sigma, v


def polar_orthogonal(g) -> np.ndarray:
    """Orthogonal polar factor u @ v.T of a nonsingular square matrix."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("matrix contains non-finite values")
    u, _, v = _jacobi_svd(g)
    return u @ v.T


def sample_haar_orthogonal(d: int, rng: "RngStream | np.random.Generator") -> np.ndarray:
    """Draw a d x d orthogonal matrix from the Haar measure.

    The polar factor of a Gaussian matrix is Haar-distributed; the factor
    comes from the in-house Jacobi SVD so draws stay identical across
    numpy releases.
    """
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    g = gen.standard_normal((d, d))
    return polar_orthogonal(g)


# ---------------------------------------------------------------------------
# random streams


def _tag_key(tag: str) -> int:
    # crc32 is stable across platforms and python versions, unlike hash()
    return zlib.crc32(tag.encode("utf-8"))


class RngStream:
    """Named, splittable random stream on a counter-based generator.

    A stream is fully determined by (seed, path of tags).  Splitting never
    advances the parent, so adding a new consumer of randomness does not
    disturb the draws of existing ones.
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()) -> None:
        self.seed = int(seed)
        self.path = tuple(_path)
        entropy = [self.seed] + [_tag_key(t) for t in self.path]
        self._gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy))
        )

    def split(self, tag: str) -> "RngStream":
        """Independent child stream identified by an extra tag."""
        return RngStream(self.seed, self.path + (str(tag),))

    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:
        joined = "/".join(self.path)
        return f"RngStream(seed={self.seed}, path={joined!r})"


# ---------------------------------------------------------------------------
# dataset files


def _column_header(d: int) -> list[str]:
    return [f"c{j}" for j in range(d)]


def save_csv(path, x) -> None:
    """Write a sample matrix as CSV with header c0..c{d-1}.

    Values are written with repr so a load/save round trip reproduces the
    float64 payload bit for bit.
    """
    x = as_data(x)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_column_header(x.shape[1]))
        for row in x:
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        with path.open("r", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FileFormatError(f"{path}: empty file") from None
            d = len(header)
            if header != _column_header(d):
                raise FileFormatError(
                    f"{path}: header must be c0..c{d - 1}, got {header!r}"
                )
            rows: list[list[float]] = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != d:
                    raise FileFormatError(
                        f"{path}:{lineno}: expected {d} fields, got {len(row)}"
                    )
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise FileFormatError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FileFormatError(f"{path}: non-finite values")
    return arr
