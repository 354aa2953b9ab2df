"""Time integration of the interface flow in polar-graph gauge.

With a frozen pole, the radial function obeys

    d rho / d t = V * ell / rho

(the graph moves along the normal with speed V; projecting the normal motion
onto the ray through the pole costs the factor ell / rho = 1 / cos omega).

Stepping is classical RK4 on the Fourier coefficients.  The linearized decay
rate of mode k on a circle of radius R is 2 k (k^2 - 1) / R^3, so the default
step obeys the real-axis RK4 stability limit for the fastest representable
mode:

    dt_max = c_cfl * 2.785 * R^3 / (2 N (N^2 - 1)).

The flow conserves enclosed area exactly; the integrator's O(dt^5) drift per
step is removed after each accepted step by an exact adjustment of the zero
mode (area is a quadratic polynomial in the coefficients).  Steps are
rejected (StepRejected) when rho turns non-positive mid-stage or the
pre-projection area drift exceeds a hard bound; rejections halve dt,
acceptance streaks let it recover toward dt_max.

The polar gauge degrades as the barycenter drifts off the pole, so the curve
is periodically re-centered: the pole is moved to the bulk barycenter and the
radial function recomputed by Newton ray-shooting, a pure reparametrization
that leaves the curve (and hence E, H, D) unchanged to interpolation accuracy.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis, elliptic, geometry, potential
from .errors import NonPositiveRadius, RecenterFail, StepRejected

RK4_STABILITY = 2.785
AREA_DRIFT_REJECT = 1e-5

DEFAULTS = {
    "R": 1.0,
    "N": 64,
    "domain": "plane",
    "L": 0.0,               # 0 means: plane, or torus default 8R
    "modes": "2",
    "amps": "0.02",
    "phases": "",
    "seed": 0,
    "c_cfl": 0.5,
    "dt0": 0.0,             # 0 means dt_max
    "t_end": 0.01,
    "max_steps": 2000000,
    "k_out": 10,
    "k_rec": 10,
    "k_H": 5,               # H every k_H-th record; 0 disables H
    "grid": 256,
    "embed_factor": 8.0,
    "filter": 0.0,          # exponential-filter strength (0 = off)
    "E_stop": 0.0,
    "unresolved_tol": 1e-6,
}


@dataclass
class FlowState:
    curve: geometry.RadialCurve
    t: float = 0.0
    step_count: int = 0
    last_dt: float = 0.0
    n_rejects: int = 0


@dataclass
class TrajectoryLog:
    R: float
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def write_csv(self, path, meta=None):
        with open(path, "w") as fh:
            if meta:
                fh.write(meta.rstrip("\n") + "\n")
            fh.write(analysis.DiagnosticsRecord.csv_header() + "\n")
            for r in self.records:
                fh.write(r.csv_row() + "\n")

    def write_events(self, path):
        with open(path, "w") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev, sort_keys=True) + "\n")


def dt_max(N, R, c_cfl=0.5):
    """Largest stable step for the stiffest representable mode (k = N - 1,
    rate 2k(k^2-1)/R^3 ~ 2N(N^2-1)/R^3)."""
    return c_cfl * RK4_STABILITY * R**3 / (2.0 * N * (N**2 - 1.0))


def _kernel_for(curve):
    if curve.domain == "torus":
        return elliptic.LatticeKernel(curve.L)
    return None


def rhs(curve, kernel=None, unresolved_tol=1e-6):
    """Coefficient-space time derivative, plus the cache and solve used."""
    if isinstance(curve, FlowState):
        curve = curve.curve
    cache = geometry.build_cache(curve, unresolved_tol=unresolved_tol)
    solve = potential.solve_ms(cache, kernel)
    drho = solve.V * cache.ell / cache.rho
    return geometry.coeffs_from_nodes(drho), cache, solve


def _filter_mask(N, strength, order=16):
    k = np.arange(N) / (N - 1.0)
    return np.exp(-strength * k**order)[:, None]


def step(state, dt, kernel=None, unresolved_tol=1e-6, filter_strength=0.0):
    """One RK4 step; returns the new state and the pre-projection area drift.

    Raises StepRejected if any stage curve loses positivity of rho or the
    area drift before re-projection exceeds AREA_DRIFT_REJECT relative.
    """
    curve = state.curve
    y0 = curve.rho_hat

    def f(y):
        try:
            k, _, _ = rhs(replace(curve, rho_hat=y), kernel, unresolved_tol)
        except NonPositiveRadius as exc:
            raise StepRejected(f"rho <= 0 mid-stage at dt = {dt:.3e}") from exc
        return k

    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    area_target = np.pi * curve.R**2
    area_raw = np.pi * (y1[0, 0] ** 2 + 0.5 * np.sum(y1[1:] ** 2))
    drift = abs(area_raw - area_target) / area_target
    if drift > AREA_DRIFT_REJECT:
        raise StepRejected(f"area drift {drift:.3e} at dt = {dt:.3e}")
    if filter_strength > 0.0:
        damp = _filter_mask(curve.N, filter_strength)
        y1 = y1 * damp
        y1[0, 0] /= damp[0, 0]
    a0sq = curve.R**2 - 0.5 * np.sum(y1[1:] ** 2)
    if a0sq <= 0.0 or y1[0, 0] <= 0.0:
        raise StepRejected(f"area projection failed at dt = {dt:.3e}")
    y1[0, 0] = np.sqrt(a0sq)

    new = replace(curve, rho_hat=y1)
    return (FlowState(new, state.t + dt, state.step_count + 1, dt,
                      state.n_rejects), drift)


def recenter(state, tol=1e-13, max_iter=60):
    """Move the pole to the bulk barycenter, keeping the curve fixed.

    For each node direction e(phi_i) from the new pole c, the intersection
    radius r_i solves  gamma(psi) = c + r_i e(phi_i)  for the old parameter
    psi by Newton on the cross-product equation; the new coefficients are the
    FFT of r.  Pure reparametrization: raises RecenterFail if the Newton
    solve stalls, an intersection radius is non-positive, or |c - pole| is
    not small compared to R.
    """
    curve = state.curve
    cache = geometry.build_cache(curve, unresolved_tol=None)
    c = geometry.barycenter_bulk(cache)
    shift = c - curve.pole
    if np.hypot(*shift) < 1e-15 * curve.R:
        return state
    if np.hypot(*shift) > 0.2 * curve.R:
        raise RecenterFail(f"barycenter offset {np.hypot(*shift):.3e} > 0.2 R")

    M = curve.M
    phi = 2.0 * np.pi * np.arange(M) / M
    cphi, sphi = np.cos(phi), np.sin(phi)
    psi = phi.copy()
    for _ in range(max_iter):
        rho = geometry.eval_rho(curve, psi)
        rho_p = geometry.eval_rho(curve, psi, 1)
        gx = rho * np.cos(psi) - shift[0]
        gy = rho * np.sin(psi) - shift[1]
        # cross((gamma - c), e(phi)) = 0 aligns gamma(psi) with ray phi
        g = gx * sphi - gy * cphi
        dgx = rho_p * np.cos(psi) - rho * np.sin(psi)
        dgy = rho_p * np.sin(psi) + rho * np.cos(psi)
        dg = dgx * sphi - dgy * cphi
        delta = g / dg
        psi -= delta
        if np.max(np.abs(delta)) < tol:
            break
    else:
        raise RecenterFail("ray Newton did not converge")
    rho = geometry.eval_rho(curve, psi)
    r = (rho * np.cos(psi) - shift[0]) * cphi + \
        (rho * np.sin(psi) - shift[1]) * sphi
    if np.any(r <= 0.0):
        raise RecenterFail("non-positive radius about the new pole")
    new = replace(curve, rho_hat=geometry.coeffs_from_nodes(r), pole=c)
    return replace(state, curve=geometry.project_area(new))


def initial_curve(cfg):
    """Build the initial interface from a flat config dict."""
    R, N = cfg["R"], int(cfg["N"])
    domain = cfg["domain"]
    L = cfg["L"] if cfg["L"] > 0 else (8.0 * R if domain == "torus" else None)
    rho_hat = np.zeros((N, 2))
    rho_hat[0, 0] = R
    modes = [int(s) for s in str(cfg["modes"]).split(",") if s.strip()]
    amps = [float(s) for s in str(cfg["amps"]).split(",") if s.strip()]
    phs = [float(s) for s in str(cfg["phases"]).split(",") if s.strip()]
    if len(amps) == 1 and len(modes) > 1:
        amps = amps * len(modes)
    if not phs:
        rng = np.random.default_rng(int(cfg["seed"]))
        phs = list(rng.uniform(0.0, 2.0 * np.pi, len(modes)))
    for k, a, p in zip(modes, amps, phs):
        rho_hat[k, 0] = a * np.cos(p)
        rho_hat[k, 1] = a * np.sin(p)
    curve = geometry.RadialCurve(R, rho_hat, np.zeros(2), domain, L)
    return geometry.project_area(curve)


def run(config=None, curve=None, progress=None):
    """Drive the flow from a config dict (unknown keys rejected).

    Records diagnostics every ``k_out`` accepted steps (H on the ``k_H``
    record cadence), re-centers every ``k_rec`` steps, halves dt on
    rejection and doubles it back toward dt_max after 20 clean steps.
    Stops at t_end, E <= E_stop, or max_steps.
    """
    cfg = dict(DEFAULTS)
    for key, val in (config or {}).items():
        if key not in DEFAULTS:
            raise KeyError(f"unknown config key {key!r}")
        cfg[key] = type(DEFAULTS[key])(val)
    if curve is None:
        curve = initial_curve(cfg)
    R = curve.R
    kernel = _kernel_for(curve)
    utol = cfg["unresolved_tol"]

    state = FlowState(curve)
    traj = TrajectoryLog(R=R, config=dict(cfg))
    dt_cap = dt_max(curve.N, R, cfg["c_cfl"])
    dt = cfg["dt0"] if cfg["dt0"] > 0 else dt_cap
    dt = min(dt, dt_cap)
    traj.events.append({"event": "start", "t": 0.0, "dt": dt,
                        "N": curve.N, "domain": curve.domain})

    n_rec_total = 0
    clean_streak = 0
    max_drift = 0.0

    def emit(st):
        nonlocal n_rec_total
        cache = geometry.build_cache(st.curve, unresolved_tol=None)
        solve = potential.solve_ms(cache, kernel)
        H = float("nan")
        if cfg["k_H"] > 0 and n_rec_total % int(cfg["k_H"]) == 0:
            H = potential.squared_distance(
                st.curve, grid=int(cfg["grid"]),
                embed_factor=cfg["embed_factor"])
        traj.records.append(analysis.record(cache, solve, st.t, H))
        n_rec_total += 1

    emit(state)
    while (state.t < cfg["t_end"] and state.step_count < cfg["max_steps"]
           and (cfg["E_stop"] <= 0.0 or traj.records[-1].E > cfg["E_stop"])):
        dt_eff = min(dt, cfg["t_end"] - state.t)
        try:
            state, drift = step(state, dt_eff, kernel, utol, cfg["filter"])
        except StepRejected as exc:
            state.n_rejects += 1
            clean_streak = 0
            dt *= 0.5
            traj.events.append({"event": "reject", "t": state.t,
                                "dt": dt, "reason": str(exc)})
            if dt < 1e-12 * dt_cap:
                raise
            continue
        max_drift = max(max_drift, drift)
        clean_streak += 1
        if clean_streak >= 20 and dt < dt_cap:
            dt = min(2.0 * dt, dt_cap)
            clean_streak = 0
        if cfg["k_rec"] > 0 and state.step_count % int(cfg["k_rec"]) == 0:
            state = recenter(state)
        if state.step_count % int(cfg["k_out"]) == 0:
            emit(state)
            if progress:
                progress(state, traj.records[-1])
    if state.step_count % int(cfg["k_out"]) != 0:
        emit(state)
    traj.events.append({"event": "finish", "t": state.t,
                        "steps": state.step_count, "rejects": state.n_rejects,
                        "max_area_drift": max_drift,
                        "E_final": traj.records[-1].E})
    return traj
