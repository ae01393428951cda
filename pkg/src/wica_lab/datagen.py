"""Synthetic source generation.

Five families, all componentwise normalized on the way out:

* lattice: the regular n-per-axis grid on [-1, 1]^d, the classic
  benchmark input whose mixed image makes distortion visible;
* uniform / laplace: i.i.d. non-Gaussian columns;
* sine_mixture: sinusoids with well-separated random frequencies over a
  long time window, so any two columns sweep out a filled rectangle
  rather than a closed curve;
* fig1_dependent: a 2-D sample with exactly zero empirical Pearson
  correlation but strong dependence (two arcs mirrored through the
  vertical axis), the canonical case where correlation-based checks
  fail and the weighted index does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import RngStream, normalize_componentwise
from .errors import DimensionError

__all__ = ["KINDS", "SourceSpec", "generate"]

KINDS = ("lattice", "uniform", "laplace", "sine_mixture", "fig1_dependent")

_LATTICE_ROW_CAP = 10 ** 6


@dataclass(frozen=True)
class SourceSpec:
    """What to generate; the same spec always yields the same sample."""

    kind: str
    d: int
    n: int
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DimensionError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.d < 2:
            raise DimensionError(f"need d >= 2, got d={self.d}")
        if self.n < 2:
            raise DimensionError(f"need n >= 2, got n={self.n}")
        if self.kind == "fig1_dependent" and self.d != 2:
            raise DimensionError("fig1_dependent is a 2-D construction; set d=2")
        if self.seed < 0:
            raise DimensionError(f"seed must be nonnegative, got {self.seed}")


def _lattice(spec: SourceSpec) -> np.ndarray:
    # n is the per-axis count; total rows are n^d
    rows = spec.n ** spec.d
    if rows > _LATTICE_ROW_CAP:
        raise DimensionError(
            f"lattice with n={spec.n}, d={spec.d} has {rows} rows, "
            f"cap is {_LATTICE_ROW_CAP}"
        )
    axis = np.linspace(-1.0, 1.0, spec.n)
    grids = np.meshgrid(*([axis] * spec.d), indexing="ij")
    return np.column_stack([g.reshape(-1) for g in grids])


def _uniform(spec: SourceSpec, rng: RngStream) -> np.ndarray:
    return rng.generator().uniform(-1.0, 1.0, size=(spec.n, spec.d))


def _laplace(spec: SourceSpec, rng: RngStream) -> np.ndarray:
    return rng.generator().laplace(0.0, 1.0, size=(spec.n, spec.d))


def _sine_mixture(spec: SourceSpec, rng: RngStream) -> np.ndarray:
    p = spec.params
    t_max = float(p.get("t_max", 200.0))
    omega_lo = float(p.get("omega_min", 1.0))
    omega_hi = float(p.get("omega_max", 4.0))
    min_sep = float(p.get("min_sep", 0.3))
    gen = rng.generator()
    omegas: list[float] = []
    # rejection keeps frequencies apart; near-equal pairs would trace a
    # closed Lissajous figure and reintroduce dependence
    attempts = 0
    while len(omegas) < spec.d:
        cand = float(gen.uniform(omega_lo, omega_hi))
        attempts += 1
        if attempts > 1000 * spec.d:
            raise DimensionError(
                "cannot fit frequencies: shrink min_sep or widen the omega range"
            )
        if all(abs(cand - o) >= min_sep for o in omegas):
            omegas.append(cand)
    phases = gen.uniform(0.0, 2.0 * np.pi, size=spec.d)
    t = np.linspace(0.0, t_max, spec.n)
    return np.sin(np.outer(t, np.array(omegas)) + phases)


def _fig1_dependent(spec: SourceSpec, rng: RngStream) -> np.ndarray:
    p = spec.params
    half_angle = float(p.get("half_angle", np.pi / 4.0))
    r_lo = float(p.get("radius_min", 0.9))
    r_hi = float(p.get("radius_max", 1.1))
    gen = rng.generator()
    half = (spec.n + 1) // 2
    theta = gen.uniform(-half_angle, half_angle, size=half)
    radius = gen.uniform(r_lo, r_hi, size=half)
    arc = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    # mirroring through the vertical axis zeroes the empirical Pearson
    # correlation exactly while keeping the two arcs sharply dependent
    both = np.concatenate([arc, arc * np.array([-1.0, 1.0])])
    return both[: spec.n]


def generate(spec: SourceSpec) -> np.ndarray:
    """Build the sample for a spec, componentwise normalized."""
    rng = RngStream(spec.seed).split(f"datagen-{spec.kind}")
    if spec.kind == "lattice":
        raw = _lattice(spec)
    elif spec.kind == "uniform":
        raw = _uniform(spec, rng)
    elif spec.kind == "laplace":
        raw = _laplace(spec, rng)
    elif spec.kind == "sine_mixture":
        raw = _sine_mixture(spec, rng)
    else:
        raw = _fig1_dependent(spec, rng)
    return normalize_componentwise(raw)
