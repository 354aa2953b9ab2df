"""Boundary-integral solver, dissipation, trace equality, and H distance."""

import warnings

import numpy as np
import pytest

from msrelax import elliptic, geometry, potential
from msrelax.errors import GridTooCoarse


def circle_cache(R=1.0, N=32):
    return geometry.build_cache(geometry.single_mode_curve(R, 2, 0.0, N=N))


# ---------------------------------------------------------------------------
# log quadrature
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 7, 15])
def test_log_quadrature_fourier_multiplier(m):
    # the circulant with first row log_quadrature_row applies the multiplier
    # -1/(2|m|) to cos(m t) exactly (m below the Nyquist mode)
    M = 64
    row = potential.log_quadrature_row(M)
    t = 2.0 * np.pi * np.arange(M) / M
    f = np.cos(m * t)
    idx = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
    out = row[idx] @ f
    assert np.max(np.abs(out + f / (2.0 * m))) < 1e-13


# ---------------------------------------------------------------------------
# solver calibration on the disk
# ---------------------------------------------------------------------------

def test_circle_equilibrium():
    cache = circle_cache(2.0)
    solve = potential.solve_ms(cache)
    assert np.max(np.abs(solve.V)) < 1e-12
    assert abs(solve.additive_constant - 0.5) < 1e-12  # c = kappa = 1/R
    assert solve.density.mean_constraint_residual < 1e-12


@pytest.mark.parametrize("k", [2, 5, 8])
def test_disk_mode_density(k):
    # data A cos(k phi) on the circle of radius R -> V = -(2k/R) A cos(k phi)
    R, A = 1.5, 0.7
    cache = circle_cache(R, N=64)
    data = A * np.cos(k * cache.phi_nodes)
    solve = potential.solve_ms(cache, data=data)
    expected = -(2.0 * k / R) * data
    assert np.max(np.abs(solve.V - expected)) < 1e-10
    assert abs(solve.additive_constant) < 1e-10


def test_disk_mode_density_sin_phase():
    cache = circle_cache(1.0, N=64)
    data = 0.3 * np.sin(3 * cache.phi_nodes)
    solve = potential.solve_ms(cache, data=data)
    assert np.max(np.abs(solve.V + 6.0 * data)) < 1e-10


def test_assemble_with_cond():
    sys_ = potential.assemble(circle_cache(), with_cond=True)
    assert np.isfinite(sys_["cond"]) and sys_["cond"] < 1e4


def test_torus_matches_plane_at_large_L():
    curve = geometry.single_mode_curve(1.0, 2, 1e-3, domain="torus", L=8.0)
    cache = geometry.build_cache(curve)
    vp = potential.solve_ms(cache).V
    vt = potential.solve_ms(cache, elliptic.LatticeKernel(8.0)).V
    assert np.max(np.abs(vt - vp)) / np.max(np.abs(vp)) < 0.02


def test_torus_plane_convergence_order():
    # the finite-cell correction decays like (R/L)^2
    curve0 = geometry.single_mode_curve(1.0, 2, 1e-3)
    cache = geometry.build_cache(curve0)
    vp = potential.solve_ms(cache).V
    errs = []
    for L in (8.0, 16.0, 32.0):
        vt = potential.solve_ms(cache, elliptic.LatticeKernel(L)).V
        errs.append(np.max(np.abs(vt - vp)) / np.max(np.abs(vp)))
    order = np.polyfit(np.log([8.0, 16.0, 32.0]), np.log(errs), 1)[0]
    assert order < -1.8


# ---------------------------------------------------------------------------
# dissipation and velocity norms
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3])
def test_dissipation_linearized(k):
    # D = 2 pi k (k^2-1)^2 eps^2 / R^4 + O(eps^3)
    eps, R = 1e-4, 1.0
    cache = geometry.build_cache(geometry.single_mode_curve(R, k, eps))
    solve = potential.solve_ms(cache)
    D = potential.dissipation(cache, solve)
    expected = 2.0 * np.pi * k * (k**2 - 1) ** 2 * eps**2 / R**4
    assert abs(D / expected - 1.0) < 1e-3


def test_velocity_norm_ratios():
    # V ~ cos(k phi) on a near-circle: ||V_s|| / ||V|| = k/R and
    # ||V||_{H^-1/2} / ||V|| = sqrt(R/k)
    k, R, eps = 3, 1.0, 1e-5
    cache = geometry.build_cache(geometry.single_mode_curve(R, k, eps))
    solve = potential.solve_ms(cache)
    rep = potential.normal_velocity_sobolev(cache, solve)
    assert abs(rep["Vs_l2"] / rep["V_l2"] - k / R) < 1e-3
    assert abs(rep["V_hm_half"] / rep["V_l2"] - np.sqrt(R / k)) < 1e-3


# ---------------------------------------------------------------------------
# trace equality
# ---------------------------------------------------------------------------

def test_trace_equality_disk():
    rep = potential.trace_equality_disk({k: 1.0 for k in (1, 4, 16, 32)})
    for row in rep["rows"]:
        k = row["k"]
        assert abs(row["interior"] - np.pi * k) < 1e-10
        assert abs(row["exterior"] - np.pi * k) < 1e-10
        assert abs(row["h_half_sq"] - np.pi * k) < 1e-10


def test_trace_equality_amplitude_scaling():
    rep = potential.trace_equality_disk({2: 0.5})
    assert abs(rep["total"]["interior"] - np.pi * 2 * 0.25) < 1e-12


# ---------------------------------------------------------------------------
# squared H^-1 distance
# ---------------------------------------------------------------------------

def shifted(R=1.0, a=0.05):
    return geometry.shifted_disk_curve(R, a)


def test_h_zero_for_centered_ball():
    curve = geometry.single_mode_curve(1.0, 2, 0.0)
    H = potential.squared_distance(curve, grid=128)
    assert H < 1e-24


def test_h_dilation_scaling():
    # H scales like length^4 under dilation (embedding follows R), exactly
    # at the rasterization level
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridTooCoarse)
        H1 = potential.squared_distance(shifted(1.0, 0.05),
                                        center=np.zeros(2), grid=128)
        H2 = potential.squared_distance(shifted(2.0, 0.10),
                                        center=np.zeros(2), grid=128)
    assert abs(H2 / H1 - 16.0) < 1e-10


def test_h_pair_symmetric_and_matches_ball():
    a = geometry.single_mode_curve(1.0, 2, 0.0)   # exact circle as a curve
    b = shifted(1.0, 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridTooCoarse)
        Hab = potential.squared_distance_pair(a, b, grid=128)
        Hba = potential.squared_distance_pair(b, a, grid=128)
        Hb = potential.squared_distance(b, center=np.zeros(2), grid=128)
    assert abs(Hab - Hba) < 1e-12 * Hab
    # circle-curve coverage equals disk coverage: same rasterized field
    assert abs(Hab - Hb) < 1e-12 * Hb


def test_h_quadratic_in_amplitude():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridTooCoarse)
        Hs = [potential.squared_distance(
            geometry.single_mode_curve(1.0, 2, eps), grid=256)
            for eps in (0.02, 0.04)]
    assert abs(Hs[1] / Hs[0] - 4.0) < 0.05


def test_h_grid_refinement_stable():
    curve = geometry.single_mode_curve(1.0, 2, 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridTooCoarse)
        H1 = potential.squared_distance(curve, grid=256)
        H2 = potential.squared_distance(curve, grid=512)
    assert abs(H1 / H2 - 1.0) < 2e-2


def test_h_warns_when_under_resolved():
    curve = geometry.single_mode_curve(1.0, 2, 1e-4)
    with pytest.warns(GridTooCoarse):
        potential.squared_distance(curve, grid=32)


def test_oracle_agrees_small_grid():
    # full-size oracle comparisons live in the acceptance suite; this is the
    # cheap smoke version at grid 32
    curve = shifted(1.0, 0.1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridTooCoarse)
        H = potential.squared_distance(curve, center=np.zeros(2), grid=32)
        Ho = potential.squared_distance_oracle(curve, center=np.zeros(2),
                                               grid=32)
    assert abs(H / Ho - 1.0) < 0.02
