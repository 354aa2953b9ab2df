"""Command-line entry point.

Subcommands: simulate, checks, hminus, potential-table, norms, report.
Exit codes: 0 success, 1 hard-assertion failure, 2 usage error.

Configs are flat ``key = value`` text (unknown keys rejected); every output
carries the sha256 hash of the canonicalized config so runs are traceable.
Batch suites fan out across worker threads, capped by MSRELAX_THREADS;
results merge in task order so output stays deterministic.
"""

import argparse
import hashlib
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, elliptic, evolution, geometry, potential, sobolev
from .errors import HypothesisFail, MsrelaxError


def parse_config(path):
    cfg = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            cfg[key] = val
    return cfg


def config_hash(cfg):
    blob = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _n_workers():
    env = os.environ.get("MSRELAX_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _parallel(tasks):
    """Run no-argument callables across the worker pool, merged in order."""
    with ThreadPoolExecutor(max_workers=_n_workers()) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = parse_config(args.config)
    for item in args.set or []:
        key, val = item.split("=", 1)
        cfg[key.strip()] = val.strip()
    chash = config_hash(cfg)
    traj = evolution.run(cfg)
    out = args.out
    os.makedirs(out, exist_ok=True)
    meta = f"# msrelax trajectory v1 config_hash={chash} R={traj.R:.17g}"
    traj.write_csv(os.path.join(out, "trajectory.csv"), meta=meta)
    traj.events.insert(0, {"event": "config", "hash": chash, **traj.config})
    traj.write_events(os.path.join(out, "run.jsonl"))
    last = traj.records[-1]
    print(json.dumps({
        "config_hash": chash,
        "records": len(traj.records),
        "t_final": last.t,
        "E_final": last.E,
        "out": out,
    }, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# checks suites
# ---------------------------------------------------------------------------

def _suite_fuglede(n, seed):
    def one(i):
        rng = np.random.default_rng([seed, i])
        curve = geometry.random_admissible(rng, delta=0.05)
        return analysis.check_fuglede(curve)

    results = _parallel([lambda i=i: one(i) for i in range(n)])
    fails = [r for r in results if not r["pass"]]
    margin = min((r["deficit"] - r["lower"] for r in results), default=0.0)
    return {"n": n, "failures": len(fails), "min_lower_margin": margin,
            "pass": not fails}


def _suite_eed(n, seed):
    rows = []
    for k in (2, 3, 5):
        for eps in (1e-2, 1e-3, 1e-4):
            curve = geometry.single_mode_curve(1.0, k, eps)
            cache = geometry.build_cache(curve)
            solve = potential.solve_ms(cache)
            E = geometry.isoperimetric_gap(cache)
            D = potential.dissipation(cache, solve)
            rows.append({"k": k, "eps": eps, "ratio": E / D,
                         "limit": 1.0 / (4.0 * k * (k**2 - 1))})
    worst = max(abs(r["ratio"] / r["limit"] - 1.0)
                for r in rows if r["eps"] <= 1e-3)
    traj = evolution.run({"N": 32, "modes": "2,3", "amps": "0.01,0.008",
                          "seed": seed, "t_end": 0.004, "k_out": 5, "k_H": 0})
    mono = analysis.check_eed(traj, R=1.0)
    return {"family": rows, "worst_small_eps_err": worst,
            "eed_monotone": mono["eed_monotone"],
            "max_E_over_R3D": mono["max_E_over_R3D"],
            "pass": worst < 0.05 and mono["eed_monotone"]}


def _suite_diff(n, seed):
    traj = evolution.run({"N": 32, "modes": "2,3,5", "amps": "0.01,0.008,0.005",
                          "seed": seed, "t_end": 0.003, "k_out": 4,
                          "k_H": 5, "grid": 256})
    rep = analysis.check_differential(traj)
    return {**rep, "pass": rep["max_energy_balance_err"] <= 1e-3}


def _suite_regime(n, seed):
    modes = ",".join(str(k) for k in range(8, 17))
    traj = evolution.run({"N": 32, "modes": modes, "amps": "6.9e-4",
                          "seed": seed, "t_end": 0.15, "k_out": 2, "k_H": 0})
    fit = analysis.regime_fit(traj, slope_band=(-1.15, -0.85))
    ok = (abs(fit.alg_slope + 1.0) <= 0.15
          and abs(fit.exp_rate - 12.0) <= 1.2)
    return {"T1": fit.T1, "alg_slope": fit.alg_slope,
            "exp_rate": fit.exp_rate, "pass": ok}


def _suite_bary(n, seed):
    traj = evolution.run({"N": 32, "modes": "2,3", "amps": "0.01,0.008",
                          "seed": seed, "t_end": 0.01, "k_out": 5, "k_H": 0})
    rep = analysis.barycenter_monitor(traj, R=1.0)
    return {**{k: v for k, v in rep.items()}, "pass": bool(rep["pass"])}


def _suite_embed(n, seed):
    out, worst = [], 0.0
    for i in range(max(n // 50, 5)):
        rng = np.random.default_rng([seed, 7, i])
        # gentle curves: the L1 curvature-oscillation hypothesis is strict
        curve = geometry.random_admissible(rng, delta=0.01, k_max=5)
        cache = geometry.build_cache(curve)
        solve = potential.solve_ms(cache)
        try:
            rep = analysis.check_improved_embedding(cache, solve)
        except HypothesisFail:
            continue
        out.append(rep)
        worst = max(worst, rep["observed"] / rep["bound"])
    return {"n": len(out), "worst_ratio_to_bound": worst,
            "pass": all(r["pass"] for r in out)}


def _suite_sobolev(n, seed):
    def one(i):
        rng = np.random.default_rng([seed, 3, i])
        K = int(rng.integers(2, 24))
        coeffs = rng.normal(size=2 * K + 1) + 1j * rng.normal(size=2 * K + 1)
        coeffs[:K] = np.conj(coeffs[:K:-1])
        coeffs[K] = 0.0  # zero mean: negative orders stay in range
        sig = sobolev.PeriodicSignal(np.pi, coeffs)
        alpha, beta = sorted(rng.uniform(-1.0, 1.5, 2))
        if beta - alpha < 0.1:
            beta = alpha + 0.1
        sigma = rng.uniform(alpha + 0.01, beta - 0.01)
        try:
            interp = sobolev.interpolation_check(sig, alpha, sigma, beta)
        except MsrelaxError:
            return None
        vals = sobolev.to_samples(sig, 8 * K + 8)
        pars = abs(np.mean(vals**2) * 2 * np.pi
                   - sobolev.l2_norm(sig)**2 / 1.0)
        return {"ratio": interp["ratio"], "parseval": pars}

    results = [r for r in _parallel([lambda i=i: one(i) for i in range(n)])
               if r is not None]
    worst = max(r["ratio"] for r in results)
    return {"n": len(results), "max_interpolation_ratio": worst,
            "pass": bool(worst <= 1.0 + 1e-10)}


def _suite_elliptic(n, seed):
    kern = elliptic.LatticeKernel(1.0)
    rng = np.random.default_rng([seed, 5])
    z = (rng.uniform(-0.9, 0.9, n // 10 + 20)
         + 1j * rng.uniform(-0.9, 0.9, n // 10 + 20))
    per = max(
        float(np.max(np.abs(elliptic.lam(kern, z + 2.0)
                            - elliptic.lam(kern, z)))),
        float(np.max(np.abs(elliptic.lam(kern, z + 2.0j)
                            - elliptic.lam(kern, z)))))
    leg = elliptic.legendre_residual(kern)
    ser = float(np.max(np.abs(elliptic.lambda_series_small(kern, z)
                              - elliptic.lam(kern, z))))
    return {"periodicity": per, "legendre": float(leg), "series": ser,
            "pass": per <= 1e-10 and leg <= 1e-12 and ser <= 1e-11}


def _suite_trace(n, seed):
    rep = potential.trace_equality_disk({k: 1.0 for k in range(1, 33)})
    worst = max(max(abs(r["interior"] - np.pi * r["k"]),
                    abs(r["h_half_sq"] - np.pi * r["k"]))
                for r in rep["rows"])
    return {"max_abs_err": worst, "pass": worst <= 1e-10}


SUITES = {
    "fuglede": _suite_fuglede,
    "eed": _suite_eed,
    "diff": _suite_diff,
    "regime": _suite_regime,
    "bary": _suite_bary,
    "embed": _suite_embed,
    "sobolev": _suite_sobolev,
    "elliptic": _suite_elliptic,
    "trace": _suite_trace,
}


def cmd_checks(args):
    names = args.suite or list(SUITES)
    for name in names:
        if name not in SUITES:
            print(f"unknown suite {name!r}", file=sys.stderr)
            return 2
    summary, ok = {}, True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in names:
            try:
                rep = SUITES[name](args.n, args.seed)
            except MsrelaxError as exc:
                rep = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
            summary[name] = rep
            ok = ok and bool(rep["pass"])
    print(json.dumps({"suites": summary, "pass": ok}, sort_keys=True,
                     default=float))
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# hminus / potential-table / norms / report
# ---------------------------------------------------------------------------

def cmd_hminus(args):
    a = geometry.read_curve(args.curve_a)
    b = geometry.read_curve(args.curve_b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        H = potential.squared_distance_pair(a, b, grid=args.grid)
        out = {"H": H, "grid": args.grid}
        if not args.no_oracle:
            Ho = potential.squared_distance_pair_oracle(
                a, b, grid=min(args.grid, 64))
            out["H_oracle"] = Ho
            out["oracle_grid"] = min(args.grid, 64)
            if args.grid <= 64:
                out["oracle_rel_delta"] = abs(H - Ho) / max(Ho, 1e-300)
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_potential_table(args):
    kern = elliptic.LatticeKernel(args.L)
    n = args.n
    x = -args.L + 2.0 * args.L * (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    lam = elliptic.lam(kern, X + 1j * Y)
    dest = open(args.out, "w") if args.out else sys.stdout
    dest.write(f"# msrelax potential-table v1 L={args.L:.17g} n={n}\n")
    dest.write("x,y,lambda\n")
    for i in range(n):
        for j in range(n):
            dest.write(f"{X[i, j]:.17g},{Y[i, j]:.17g},{lam[i, j]:.17g}\n")
    if args.out:
        dest.close()
    return 0


def cmd_norms(args):
    curve = geometry.read_curve(args.curve)
    cache = geometry.build_cache(curve, unresolved_tol=None)
    kbar = 2.0 * np.pi / geometry.perimeter(cache)
    out = {
        "N": curve.N,
        "R": curve.R,
        "domain": curve.domain,
        "perimeter": geometry.perimeter(cache),
        "area": geometry.enclosed_area(cache),
        "E": geometry.isoperimetric_gap(cache),
        "gauss_bonnet_residual": geometry.gauss_bonnet_residual(cache),
        "admissibility": geometry.admissibility_report(curve, args.delta),
        "kappa_dev_l1": cache.quad(np.abs(cache.kappa - kbar) * cache.ell),
        "kappa_dev_l2": float(np.sqrt(
            cache.quad((cache.kappa - kbar) ** 2 * cache.ell))),
    }
    for sigma in (0.5, 1.0):
        out[f"rho_dev_h{sigma:g}"] = sobolev.curve_norm(
            cache, cache.rho - curve.R, sigma)
    print(json.dumps(out, sort_keys=True, default=float))
    return 0


def read_trajectory(path):
    """Load a trajectory.csv back into records + metadata."""
    meta = {}
    with open(path) as fh:
        lines = fh.readlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        elif line.strip():
            body.append(line.strip())
    header = body[0].split(",")
    records = []
    for row in body[1:]:
        vals = [float(x) for x in row.split(",")]
        d = dict(zip(header, vals))
        amps = np.array([d[h] for h in header if h.startswith("amp")])
        records.append(analysis.DiagnosticsRecord(
            t=d["t"], E=d["E"], H=d["H"], D=d["D"], bary=d["bary"],
            Vs2=d["Vs2"], EED=d["EED"], sup_rho_dev=d["sup_rho_dev"],
            sup_slope=d["sup_slope"], mode_amps=amps))
    return records, meta


def cmd_report(args):
    records, meta = read_trajectory(args.trajectory)
    R = float(meta.get("R", 1.0))
    out = {"meta": meta, "rows": len(records)}
    code = 0
    try:
        out["eed"] = analysis.check_eed(records, R=R)
        out["differential"] = analysis.check_differential(records)
    except MsrelaxError as exc:
        out["hard_failure"] = f"{type(exc).__name__}: {exc}"
        code = 1
    out["barycenter"] = analysis.barycenter_monitor(records, R=R)
    try:
        fit = analysis.regime_fit(records)
        out["regime"] = {"T1": fit.T1, "T1_over_R3": fit.T1 / R**3,
                         "alg_slope": fit.alg_slope,
                         "exp_rate": fit.exp_rate}
    except MsrelaxError as exc:
        out["regime"] = {"error": f"{type(exc).__name__}: {exc}"}
    print(json.dumps(out, sort_keys=True, default=float))
    return code


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="msrelax")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate a flow from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=".")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("checks", help="run verification suites")
    s.add_argument("--suite", action="append", choices=sorted(SUITES))
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_checks)

    s = sub.add_parser("hminus", help="squared H^-1 distance of two curves")
    s.add_argument("curve_a")
    s.add_argument("curve_b")
    s.add_argument("--grid", type=int, default=256)
    s.add_argument("--no-oracle", action="store_true")
    s.set_defaults(func=cmd_hminus)

    s = sub.add_parser("potential-table",
                       help="dump the periodic kernel on a grid")
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_potential_table)

    s = sub.add_parser("norms", help="geometry/norm report for a curve file")
    s.add_argument("curve")
    s.add_argument("--delta", type=float, default=0.05)
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("report", help="summarize a trajectory.csv")
    s.add_argument("trajectory")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except MsrelaxError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
