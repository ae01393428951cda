"""Weighted independence index: weights, coefficients, estimator, concentration."""

import json
from pathlib import Path

import numpy as np
import pytest

from wica_lab.core import RngStream, normalize_componentwise, weighted_cov
from wica_lab.errors import (
    DimensionError,
    InsufficientDataError,
    WeightCollapseError,
)
from wica_lab.oracles import load_record, quadrature_P
from wica_lab.wii import (
    WiiConfig,
    concentration,
    dependence_coefficients,
    gaussian_log_weights,
    sample_weighting_points,
    weights_from_log,
    wii_at_point,
    wii_index,
    wii_multi,
)

DATA = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# weights


def test_log_weights_at_the_point_are_zero():
    y = np.array([[1.0, -2.0], [0.0, 0.0]])
    lw = gaussian_log_weights(y, np.array([1.0, -2.0]))
    assert lw[0] == 0.0
    assert abs(lw[1] - (-2.5)) < 1e-15  # -(1+4)/2


def test_log_weights_monotone_in_distance():
    g = RngStream(3).split("lw").generator()
    y = g.standard_normal((100, 3))
    p = np.zeros(3)
    lw = gaussian_log_weights(y, p)
    dist = np.sum(y**2, axis=1)
    order = np.argsort(dist)
    assert np.all(np.diff(lw[order]) <= 1e-15)


def test_weights_from_log_shift_invariance():
    # adding a constant to every log-weight must not change the weights
    lw = np.array([-1.0, -2.0, -3.5])
    w1 = weights_from_log(lw)
    w2 = weights_from_log(lw - 500.0)
    assert np.max(np.abs(w1 - w2)) < 1e-15


def test_weights_from_log_survives_huge_negative_logs():
    # raw exp would underflow to all zeros; the max shift keeps one weight at 1
    lw = np.array([-50000.0, -50001.0, -50002.0])
    w = weights_from_log(lw)
    assert w.max() == 1.0
    assert np.all(w > 0.0)


def test_weight_collapse_raises_with_context():
    lw = np.array([0.0, -800.0, -900.0])
    with pytest.raises(WeightCollapseError) as err:
        weights_from_log(lw, point=np.array([4.0, 4.0]))
    assert err.value.effective_mass < 1e-12


# ---------------------------------------------------------------------------
# dependence coefficients


def test_coefficients_zero_for_diagonal_covariance():
    c = dependence_coefficients(np.diag([2.0, 0.5, 1.0]))
    assert np.max(np.abs(c)) == 0.0


def test_coefficients_reach_one_at_equal_variances():
    # z12^2 = z11*z22 and z11 = z22 forces c = 2z12^2/(2 z11^2) = 1
    z = np.array([[1.0, 1.0], [1.0, 1.0]])
    c = dependence_coefficients(z)
    assert abs(c[0, 1] - 1.0) < 1e-15


def test_coefficients_dead_pair_is_zero_not_error():
    z = np.zeros((2, 2))
    c = dependence_coefficients(z)
    assert np.all(c == 0.0)


def test_coefficient_bounded_by_squared_correlation():
    """c_ij <= rho_ij^2 on 1000 random weighted covariances (AM-GM)."""
    g = RngStream(31).split("bound").generator()
    for _ in range(1000):
        n = int(g.integers(3, 30))
        d = int(g.integers(2, 5))
        x = g.standard_normal((n, d))
        w = g.random(n) + 1e-6
        z = weighted_cov(x, w)
        var = np.diag(z)
        if np.any(var <= 0.0):
            continue
        c = dependence_coefficients(z)
        rho2 = z**2 / np.outer(var, var)
        np.fill_diagonal(rho2, 0.0)
        assert np.all(c <= rho2 + 1e-12)


def test_equal_variance_scaling_achieves_equality():
    g = RngStream(32).split("eq").generator()
    for _ in range(50):
        x = g.standard_normal((40, 2))
        x[:, 1] = 0.6 * x[:, 0] + 0.8 * x[:, 1]
        w = g.random(40) + 0.05
        z = weighted_cov(x, w)
        x[:, 1] *= np.sqrt(z[0, 0] / z[1, 1])
        z = weighted_cov(x, w)
        c = dependence_coefficients(z)[0, 1]
        rho2 = z[0, 1] ** 2 / (z[0, 0] * z[1, 1])
        assert abs(c - rho2) < 1e-10


# ---------------------------------------------------------------------------
# wii at a point and the multi-point estimator


def test_wii_at_point_in_unit_interval():
    g = RngStream(33).split("unit").generator()
    for _ in range(50):
        x = normalize_componentwise(g.standard_normal((60, 3)))
        p = g.standard_normal(3) * 0.5
        v = wii_at_point(x, p)
        assert 0.0 <= v <= 1.0


def test_wii_at_point_detects_linear_dependence():
    g = RngStream(34).split("dep").generator()
    t = g.standard_normal(2000)
    x = normalize_componentwise(np.column_stack([t, t + 0.01 * g.standard_normal(2000)]))
    assert wii_at_point(x, np.zeros(2)) > 0.9


def test_sample_weighting_points_shape_and_determinism():
    g = RngStream(35).split("pts").generator()
    x = g.standard_normal((50, 3))
    pts1 = sample_weighting_points(x, 4, RngStream(9))
    pts2 = sample_weighting_points(x, 4, RngStream(9))
    assert len(pts1) == 4
    assert all(p.shape == (3,) for p in pts1)
    assert all(np.array_equal(a, b) for a, b in zip(pts1, pts2))


def test_sample_weighting_points_needs_enough_rows():
    with pytest.raises(InsufficientDataError):
        sample_weighting_points(np.zeros((2, 3)), 1, RngStream(0))


def test_wii_multi_skips_collapsed_points():
    g = RngStream(36).split("skip").generator()
    x = normalize_componentwise(g.standard_normal((400, 2)))
    good = np.zeros(2)
    clean = wii_multi(x, [good])
    # a far-away point collapses onto the single nearest sample and is skipped
    far = np.array([1e6, 1e6])
    mixed = wii_multi(x, [good, far])
    assert mixed == clean


def test_wii_multi_raises_when_every_point_collapses():
    g = RngStream(37).split("all").generator()
    x = normalize_componentwise(g.standard_normal((400, 2)))
    with pytest.raises(WeightCollapseError):
        wii_multi(x, [np.array([1e6, 1e6]), np.array([-1e6, 1e6])])


def test_wii_index_deterministic_and_affine_invariant():
    g = RngStream(38).split("det").generator()
    x = g.standard_normal((800, 3))
    cfg = WiiConfig()
    v1 = wii_index(x, cfg, RngStream(5))
    v2 = wii_index(x, cfg, RngStream(5))
    assert v1 == v2
    y = x * np.array([4.0, 0.2, 7.0]) + np.array([3.0, -1.0, 0.5])
    v3 = wii_index(y, cfg, RngStream(5))
    assert abs(v3 - v1) < 1e-10


def test_wii_config_defaults_num_points_to_dimension():
    cfg = WiiConfig()
    assert cfg.resolve_num_points(5) == 5
    assert WiiConfig(num_points=3).resolve_num_points(5) == 3
    with pytest.raises(DimensionError):
        WiiConfig(num_points=0)


def test_independent_data_stays_below_calibrated_threshold():
    rec = load_record(DATA / "wii_independent.json")
    from wica_lab.datagen import SourceSpec, generate

    u = generate(SourceSpec(kind="uniform", d=2, n=10_000, seed=101))
    value = wii_index(u, WiiConfig(), RngStream(202))
    assert value < rec.threshold
    assert abs(value - rec.measured["wii"]) < 1e-12


def test_independence_holds_at_every_weighting_point():
    """Not just on average: all 100 seeded points stay under the threshold."""
    rec = load_record(DATA / "wii_every_point.json")
    g = RngStream(55).split("normal").generator()
    x = normalize_componentwise(g.standard_normal((10_000, 2)))
    pts = sample_weighting_points(x, 100, RngStream(66))
    values = [wii_at_point(x, p) for p in pts]
    assert max(values) < rec.threshold
    assert abs(max(values) - rec.measured["max_over_points"]) < 1e-12


# ---------------------------------------------------------------------------
# concentration diagnostic


def test_concentration_normalization_maximum_at_origin():
    assert concentration(np.zeros(4)) == 1.0


def test_concentration_closed_form_at_norm_six():
    p = np.sqrt(6.0) * np.array([1.0, 0.0])
    assert abs(concentration(p) - np.exp(-1.0)) < 1e-12


def test_concentration_matches_quadrature():
    g = RngStream(39).split("quad").generator()
    for _ in range(3):
        p = g.standard_normal(2)
        numeric = quadrature_P(p)
        closed = concentration(p, normalized=False)
        assert abs(numeric - closed) / closed < 1e-3


def test_unnormalized_concentration_prefactor():
    # the d-dependent prefactor (3/4)^{d/2} at the origin
    assert abs(concentration(np.zeros(2), normalized=False) - 0.75) < 1e-15
    assert abs(concentration(np.zeros(4), normalized=False) - 0.75**2) < 1e-15
