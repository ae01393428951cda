"""Weighted independence index.

The index probes local dependence: reweight the sample by a Gaussian
bump at a chosen point, take the covariance of the reweighted sample,
and score every coordinate pair by

    c_ij = 2 z_ij^2 / (z_ii^2 + z_jj^2)

which is 0 for uncorrelated pairs and at most rho_ij^2 in general, with
equality exactly when the two weighted standard deviations agree.  The
index is the average of c_ij over pairs, and over several weighting
points drawn near the origin of the normalized sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream, as_data, normalize_componentwise, weighted_cov
from .errors import DimensionError, InsufficientDataError, WeightCollapseError

__all__ = [
    "WiiConfig",
    "gaussian_log_weights",
    "weights_from_log",
    "dependence_coefficients",
    "wii_at_point",
    "sample_weighting_points",
    "wii_multi",
    "wii_index",
    "concentration",
]


@dataclass(frozen=True)
class WiiConfig:
    """Knobs for the index.

    num_points=None means one weighting point per data dimension, which
    is the default protocol everywhere in this package.
    """

    num_points: int | None = None
    min_effective_weight: float = 1e-12

    def __post_init__(self) -> None:
        if self.num_points is not None and self.num_points < 1:
            raise DimensionError(
                f"num_points must be >= 1 or None, got {self.num_points}"
            )
        if self.min_effective_weight < 0.0:
            raise DimensionError(
                "min_effective_weight must be >= 0, got "
                f"{self.min_effective_weight}"
            )

    def resolve_num_points(self, d: int) -> int:
        return d if self.num_points is None else self.num_points


def gaussian_log_weights(y, p) -> np.ndarray:
    """Log of unnormalized N(p, I) density at every row of y.

    The density's constant factor cancels in every weighted statistic,
    so it is dropped here and never materialized.
    """
    y = as_data(y, name="sample")
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (y.shape[1],):
        raise DimensionError(
            f"weighting point must have shape ({y.shape[1]},), got {p.shape}"
        )
    diff = y - p
    return -0.5 * np.einsum("ij,ij->i", diff, diff)


def weights_from_log(lw, *, min_effective_weight: float = 1e-12, point=None) -> np.ndarray:
    """Exponentiate log weights, shifted so the largest weight is 1.

    The shift is exact for every statistic downstream (weights enter
    only through ratios) and keeps exp() away from underflow.  If the
    remaining weights carry less than min_effective_weight of combined
    mass, the weighted sample has degenerated to a single row and the
    covariance would be meaningless.
    """
    lw = np.asarray(lw, dtype=np.float64)
    w = np.exp(lw - lw.max())
    effective = w.sum() - 1.0
    if effective < min_effective_weight:
        raise WeightCollapseError(point, float(effective))
    return w


def dependence_coefficients(cov) -> np.ndarray:
    """Pairwise coefficients c_ij from a covariance matrix, zero diagonal.

    A pair whose variances are both zero carries no evidence of linear
    dependence, so its coefficient is 0 rather than 0/0; this is what
    lets the index stay finite on flat latent channels during training.
    """
    z = np.asarray(cov, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {z.shape}")
    var = np.diag(z)
    denom = var[:, None] ** 2 + var[None, :] ** 2
    dead = denom == 0.0
    c = 2.0 * z * z / np.where(dead, 1.0, denom)
    c[dead] = 0.0
    np.fill_diagonal(c, 0.0)
    return c


def wii_at_point(y, p, config: WiiConfig = WiiConfig()) -> float:
    """Index of the sample reweighted by a Gaussian bump at p."""
    y = as_data(y, min_cols=2, name="sample")
    lw = gaussian_log_weights(y, p)
    w = weights_from_log(
        lw, min_effective_weight=config.min_effective_weight, point=p
    )
    c = dependence_coefficients(weighted_cov(y, w))
    d = y.shape[1]
    # c is symmetric with zero diagonal; summing it all counts each pair twice
    return float(c.sum() / (d * (d - 1)))


def sample_weighting_points(y, num_points: int, rng: RngStream) -> np.ndarray:
    """Draw weighting points as means of d distinct rows of y.

    For a normalized sample the mean of d rows is close to N(0, I/d), so
    the points concentrate where the Gaussian bump retains mass.
    """
    y = as_data(y, name="sample")
    n, d = y.shape
    if num_points < 1:
        raise DimensionError(f"num_points must be >= 1, got {num_points}")
    if n < d:
        raise InsufficientDataError(
            f"need at least d={d} rows to build a weighting point, got {n}"
        )
    gen = rng.generator()
    points = np.empty((num_points, d))
    for k in range(num_points):
        rows = gen.choice(n, size=d, replace=False)
        points[k] = y[rows].mean(axis=0)
    return points


def wii_multi(y, points, config: WiiConfig = WiiConfig()) -> float:
    """Mean of the single-point index over the given weighting points.

    Points where the Gaussian weights collapse are skipped; the error
    surfaces only when every point collapses, since then there is no
    index to report at all.
    """
    points = as_data(points, name="weighting points")
    values = []
    last_collapse: WeightCollapseError | None = None
    for p in points:
        try:
            values.append(wii_at_point(y, p, config))
        except WeightCollapseError as exc:
            last_collapse = exc
    if not values:
        assert last_collapse is not None
        raise last_collapse
    return float(np.mean(values))


def wii_index(x, config: WiiConfig = WiiConfig(), rng: RngStream | None = None) -> float:
    """Normalize x, draw weighting points from it, average the index.

    This is the quantity reported by diagnostics and used to calibrate
    thresholds; training recomputes the same pipeline differentiably.
    """
    x = as_data(x, min_cols=2, name="sample")
    if rng is None:
        rng = RngStream(0)
    y = normalize_componentwise(x)
    points = sample_weighting_points(y, config.resolve_num_points(x.shape[1]), rng)
    return wii_multi(y, points, config)


def concentration(p, *, normalized: bool = True) -> float:
    """How much standard-normal mass a unit Gaussian bump at p retains.

    The closed form is (3/4)^(D/2) * exp(-|p|^2 / 6); the normalized
    variant is scaled by its own value at the origin, so it reads as a
    fraction of the best case and is 1.0 at p = 0.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise DimensionError(f"point must be a vector, got ndim={p.ndim}")
    value = float(np.exp(-(p @ p) / 6.0))
    if normalized:
        return value
    return float((3.0 / 4.0) ** (p.shape[0] / 2.0)) * value
