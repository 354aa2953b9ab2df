"""Geometry: spectral curves, caches, integral quantities, admissibility."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msrelax import geometry
from msrelax.errors import NonPositiveRadius, Unresolved


def circle(R=1.0, N=32):
    rho_hat = np.zeros((N, 2))
    rho_hat[0, 0] = R
    return geometry.RadialCurve(R, rho_hat, np.zeros(2))


# ---------------------------------------------------------------------------
# exact circles and shifted disks
# ---------------------------------------------------------------------------

def test_circle_cache_exact():
    cache = geometry.build_cache(circle(2.0))
    assert np.allclose(cache.kappa, 0.5, atol=1e-14)
    assert np.allclose(cache.ell, 2.0, atol=1e-14)
    assert np.allclose(cache.omega, 0.0, atol=1e-14)
    assert abs(geometry.perimeter(cache) - 4.0 * np.pi) < 1e-13
    assert abs(geometry.enclosed_area(cache) - 4.0 * np.pi) < 1e-13
    assert abs(geometry.isoperimetric_gap(cache)) < 1e-14
    assert geometry.gauss_bonnet_residual(cache) < 1e-13


def test_shifted_disk_is_a_circle():
    # rho = a cos phi + sqrt(R^2 - a^2 sin^2 phi) parametrizes an exact circle
    curve = geometry.shifted_disk_curve(1.0, 0.3)
    cache = geometry.build_cache(curve, unresolved_tol=None)
    assert np.max(np.abs(cache.kappa - 1.0)) < 1e-11
    assert abs(geometry.enclosed_area(cache) - np.pi) < 1e-12
    assert np.allclose(geometry.barycenter_bulk(cache), [0.3, 0.0], atol=1e-11)
    assert geometry.isoperimetric_gap(cache) < 1e-11


# ---------------------------------------------------------------------------
# synthesis / analysis round trips
# ---------------------------------------------------------------------------

def test_synth_coeffs_roundtrip():
    rng = np.random.default_rng(0)
    rho_hat = np.zeros((32, 2))
    rho_hat[0, 0] = 1.0
    rho_hat[1:8] = 0.01 * rng.normal(size=(7, 2))
    curve = geometry.RadialCurve(1.0, rho_hat, np.zeros(2))
    back = geometry.coeffs_from_nodes(geometry.synth_nodes(curve))
    assert np.max(np.abs(back - rho_hat)) < 1e-14


def test_eval_rho_matches_nodes():
    curve = geometry.single_mode_curve(1.0, 3, 0.02, phase=0.7)
    phi = 2.0 * np.pi * np.arange(curve.M) / curve.M
    for d in (0, 1, 2):
        assert np.max(np.abs(geometry.eval_rho(curve, phi, d)
                             - geometry.synth_nodes(curve, d))) < 1e-12


def test_curve_points_offset_pole():
    curve = geometry.RadialCurve(1.0, circle().rho_hat, np.array([0.5, -0.2]))
    pts = geometry.curve_points(curve, np.array([0.0, np.pi / 2]))
    assert np.allclose(pts, [[1.5, -0.2], [0.5, 0.8]], atol=1e-13)


# ---------------------------------------------------------------------------
# perimeter / energy-gap expansions (quadrature oracle values)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3, 5])
def test_perimeter_expansion_raw(k):
    # without area projection: perimeter - 2 pi R = pi eps^2 k^2 / (2R) + O(eps^4)
    eps, R = 1e-3, 1.0
    curve = geometry.single_mode_curve(R, k, eps, project_area=False)
    cache = geometry.build_cache(curve)
    gap = geometry.perimeter(cache) - 2.0 * np.pi * R
    assert abs(gap / (np.pi * eps**2 * k**2 / (2.0 * R)) - 1.0) < 1e-4


@pytest.mark.parametrize("k", [2, 3, 5])
def test_energy_gap_expansion(k):
    # area-projected: E = pi eps^2 (k^2 - 1) / (2R) + O(eps^4)
    eps, R = 1e-3, 1.0
    curve = geometry.single_mode_curve(R, k, eps)
    cache = geometry.build_cache(curve)
    E = geometry.isoperimetric_gap(cache)
    assert abs(E / (np.pi * eps**2 * (k**2 - 1) / (2.0 * R)) - 1.0) < 1e-4


def test_isoperimetric_gap_matches_naive_difference():
    curve = geometry.single_mode_curve(1.0, 3, 0.02)
    cache = geometry.build_cache(curve)
    naive = geometry.perimeter(cache) - 2.0 * np.pi * 1.0
    stable = geometry.isoperimetric_gap(cache)
    assert abs(stable - naive) < 1e-10 * naive


def test_isoperimetric_gap_nonnegative_tiny():
    # at amplitudes where perimeter() - 2 pi R is pure rounding noise, the
    # stable path still resolves the (positive) gap
    curve = geometry.single_mode_curve(1.0, 2, 1e-8)
    cache = geometry.build_cache(curve)
    E = geometry.isoperimetric_gap(cache)
    expected = np.pi * 1e-16 * 3.0 / 2.0
    assert abs(E / expected - 1.0) < 1e-4


# ---------------------------------------------------------------------------
# barycenters, Gauss-Bonnet, Bonnesen
# ---------------------------------------------------------------------------

@given(st.integers(0, 200))
@settings(max_examples=25, deadline=None)
def test_barycenters_agree_to_second_order(seed):
    rng = np.random.default_rng([17, seed])
    curve = geometry.random_admissible(rng, delta=0.05)
    cache = geometry.build_cache(curve, unresolved_tol=None)
    d = np.hypot(*(geometry.barycenter_bulk(cache)
                   - geometry.barycenter_boundary(cache)))
    sup = np.max(np.abs(cache.rho - curve.R))
    assert d <= 2.0 * sup**2 / curve.R


@given(st.integers(0, 200))
@settings(max_examples=25, deadline=None)
def test_gauss_bonnet_random(seed):
    rng = np.random.default_rng([23, seed])
    curve = geometry.random_admissible(rng, delta=0.05)
    cache = geometry.build_cache(curve, unresolved_tol=None)
    assert geometry.gauss_bonnet_residual(cache) < 1e-10


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_bonnesen_annulus_inside_gap(k):
    cache = geometry.build_cache(geometry.single_mode_curve(1.0, k, 0.01))
    rep = geometry.bonnesen_monitor(cache)
    assert rep["lhs"] <= rep["rhs"]
    assert rep["R_in"] <= 1.0 <= rep["R_out"]


# ---------------------------------------------------------------------------
# admissibility machinery
# ---------------------------------------------------------------------------

@given(st.integers(0, 500))
@settings(max_examples=40, deadline=None)
def test_random_admissible_passes_report(seed):
    rng = np.random.default_rng([5, seed])
    curve = geometry.random_admissible(rng, delta=0.05)
    rep = geometry.admissibility_report(curve, delta=0.05)
    assert rep["pass"], rep


def test_make_admissible_fixes_constraints():
    rho_hat = np.zeros((32, 2))
    rho_hat[0, 0] = 1.02
    rho_hat[1, 0] = 0.004
    rho_hat[3, 1] = 0.01
    curve = geometry.make_admissible(
        geometry.RadialCurve(1.0, rho_hat, np.zeros(2)))
    rep = geometry.admissibility_report(curve)
    assert rep["area_residual"] < 1e-13
    assert rep["barycenter_residual"] < 1e-13


def test_project_area_exact():
    curve = geometry.single_mode_curve(1.0, 2, 0.05, project_area=False)
    proj = geometry.project_area(curve)
    cache = geometry.build_cache(proj)
    assert abs(geometry.enclosed_area(cache) - np.pi) < 1e-14


def test_project_area_impossible():
    rho_hat = np.zeros((32, 2))
    rho_hat[0, 0] = 1.0
    rho_hat[2, 0] = 1.5
    with pytest.raises(NonPositiveRadius):
        geometry.project_area(geometry.RadialCurve(1.0, rho_hat, np.zeros(2)))


# ---------------------------------------------------------------------------
# validation and error paths
# ---------------------------------------------------------------------------

def test_curve_validation():
    with pytest.raises(ValueError):
        geometry.RadialCurve(1.0, np.zeros((12, 2)), np.zeros(2))  # N < 16
    with pytest.raises(ValueError):
        geometry.RadialCurve(1.0, np.zeros((24, 2)), np.zeros(2))  # not 2^m
    bad = np.zeros((16, 2))
    bad[0] = [1.0, 0.5]  # sin coefficient at k = 0
    with pytest.raises(ValueError):
        geometry.RadialCurve(1.0, bad, np.zeros(2))
    good = np.zeros((16, 2))
    good[0, 0] = 1.0
    with pytest.raises(ValueError):
        geometry.RadialCurve(1.0, good, np.zeros(2), "torus")  # missing L


def test_build_cache_nonpositive_radius():
    rho_hat = np.zeros((32, 2))
    rho_hat[0, 0] = 1.0
    rho_hat[2, 0] = 1.2
    with pytest.raises(NonPositiveRadius):
        geometry.build_cache(geometry.RadialCurve(1.0, rho_hat, np.zeros(2)))


def test_build_cache_unresolved():
    import warnings
    rho_hat = np.zeros((32, 2))
    rho_hat[0, 0] = 1.0
    rho_hat[31, 0] = 1e-4
    curve = geometry.RadialCurve(1.0, rho_hat, np.zeros(2))
    with pytest.raises(Unresolved):
        geometry.build_cache(curve)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        geometry.build_cache(curve, unresolved_tol=None)  # opt-out works


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_curve_roundtrip_plane(tmp_path):
    curve = geometry.single_mode_curve(1.0, 4, 0.0123456789012345)
    path = tmp_path / "c.msrc"
    geometry.write_curve(curve, path)
    back = geometry.read_curve(path)
    assert np.array_equal(back.rho_hat, curve.rho_hat)
    assert back.R == curve.R and back.domain == "plane"


def test_curve_roundtrip_torus(tmp_path):
    curve = geometry.single_mode_curve(1.0, 2, 0.01, domain="torus", L=8.0)
    path = tmp_path / "c.msrc"
    geometry.write_curve(curve, path)
    back = geometry.read_curve(path)
    assert back.domain == "torus" and back.L == 8.0
    assert np.array_equal(back.rho_hat, curve.rho_hat)


def test_read_curve_rejects_garbage(tmp_path):
    path = tmp_path / "bad.msrc"
    path.write_text("not a curve\n")
    with pytest.raises(ValueError):
        geometry.read_curve(path)
