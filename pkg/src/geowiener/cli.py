"""Command line entry point: ``geowiener <experiment> [--config PATH] ...``.

Every run writes ``results.csv``, ``manifest.json`` (full configuration,
library version, seed) and ``summary.txt`` (one PASS/FAIL line per check).

Exit status: 0 all checks passed, 1 a tolerance check failed, 2 invalid
configuration (nothing is written), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .config import EXPERIMENTS, RunConfig, defaults, load_config
from .cylinder import BumpProduct, Constant, FlatCosine, LegendreZonal, bump
from .errors import ConfigurationError, GeoWienerError
from .heat_kernel import oracle_for, quad_grid, semigroup_defect
from .ibp import CameronMartinPath, ibp_residual
from .infinite_horizon import trichotomy_experiment
from .manifolds import Euclidean, Hyperbolic2, Sphere2, Torus, make_manifold
from .measures import DiscreteMixture, FiniteDimMeasure, convergence_sweep, estimate, free_path_estimate, wiener_mc
from .paths import Partition

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


# -- building blocks from configuration ----------------------------------------


def build_manifold(cfg):
    man = cfg["manifold"]
    name = man["name"]
    if name == "euclidean":
        return make_manifold(name, dim=man["dim"])
    if name == "torus":
        periods = man["periods"] or [1.0] * man["dim"]
        return make_manifold(name, periods=periods)
    if name == "sphere2":
        return make_manifold(name, radius=man["radius"])
    return make_manifold(name, curvature=man["curvature"])


def _chart_point(m, coords, chart, what):
    coords = np.asarray(coords, dtype=float)
    if coords.size != m.dim or not m.in_domain(coords, chart):
        raise ConfigurationError(f"{what} {coords.tolist()} is not a valid chart point of {m.name}")
    return m.to_ambient(coords, chart)


def build_start(cfg, m):
    st = cfg["start"]
    if st["coords"] is None:
        if isinstance(m, Hyperbolic2):
            return m.to_ambient(np.array([0.0, 1.0]))
        return m.to_ambient(np.zeros(m.dim), 0)
    return _chart_point(m, st["coords"], st["chart"], "start")


def _offset(m, x0, v):
    F = m.default_frame(x0)
    q, _, _ = m.exp_transport(x0, F @ np.asarray(v, dtype=float), tau=1.0)
    return q


def build_function(cfg, m, x0, T):
    fn = cfg["function"]
    t1 = fn["time"] if fn["time"] is not None else T
    if t1 <= 0 or t1 > T * (1 + 1e-12):
        raise ConfigurationError(f"function time {t1} outside (0, T]")
    default_off = np.zeros(m.dim)
    default_off[0] = 0.4
    if m.dim > 1:
        default_off[1] = 0.2

    def center(key, off):
        if fn[key] is None:
            return _offset(m, x0, off)
        return _chart_point(m, fn[key], 0, f"function {key}")

    kind = fn["type"]
    if kind == "constant":
        return Constant(fn["amplitude"], t1)
    if kind == "bump":
        return bump(m, center("center", default_off), fn["scale"], t1, fn["amplitude"])
    if kind == "bump2":
        t2 = fn["time2"] if fn["time2"] is not None else T
        if not (0 < t1 < t2 <= T * (1 + 1e-12)):
            raise ConfigurationError("bump2 needs 0 < time < time2 <= T")
        return BumpProduct(
            m, [center("center", default_off), center("center2", -default_off)], [fn["scale"], fn["scale2"]],
            [t1, t2], fn["amplitude"],
        )
    if kind == "cosine":
        if not isinstance(m, Euclidean) or isinstance(m, Torus):
            raise ConfigurationError("cosine functions need the euclidean manifold")
        k = np.asarray(fn["k"], dtype=float)
        if k.size != m.dim:
            raise ConfigurationError("cosine k has the wrong dimension")
        return FlatCosine(m, k, t1)
    if kind == "legendre":
        if not isinstance(m, Sphere2):
            raise ConfigurationError("legendre functions need the sphere")
        return LegendreZonal(m, x0, fn["degree"], t1)
    raise ConfigurationError(f"unknown function type {kind!r}")


def build_h(cfg, m, T):
    ib = cfg["ibp"]
    v = np.asarray(ib["v"], dtype=float)
    if v.size != m.dim:
        raise ConfigurationError("[ibp] v has the wrong dimension")
    if ib["h"] == "linear":
        return CameronMartinPath.linear(v)
    if ib["h"] == "sines":
        return CameronMartinPath.sines(np.stack([v, 0.5 * v[::-1]]), T)
    grid = np.array([0.0, T / 2, T])
    return CameronMartinPath.hats(grid, np.stack([np.zeros_like(v), v, 0.25 * v]))


def _partitions(cfg):
    part = cfg["partition"]
    if part["type"] == "dyadic":
        return [Partition.dyadic(n) for n in part["N"]]
    return [Partition.uniform(part["T"], n) for n in part["N"]]


# -- experiments -----------------------------------------------------------------
# each returns (columns, rows, checks) with checks = [(name, passed, detail)]


def _check(name, ok, detail):
    return (name, bool(ok), detail)


def run_simulate(cfg, workers=None):
    m = build_manifold(cfg)
    x0 = build_start(cfg, m)
    T = cfg["partition"]["T"]
    steps = max(cfg["partition"]["N"])

    times = Partition.uniform(T, steps).times[1:]

    def F(batch):
        return np.stack([m.distance(x0, batch.point_at(t)) ** 2 for t in times], axis=1)

    from .measures import _chunk_driver  # shared sampler, vector valued functional
    from .sampling import chunk_plan, map_chunks

    meas = FiniteDimMeasure(m, x0, "wiener", Partition.uniform(T, steps))
    parts = map_chunks(_chunk_driver(meas, F, cfg.seed), chunk_plan(cfg.samples), workers)
    vals = np.concatenate([p[2] for p in parts], axis=0)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
    rows = [
        {"time": float(t), "mean_sq_distance": float(a), "stderr": float(s), "samples": cfg.samples, "seed": cfg.seed}
        for t, a, s in zip(times, mean, se)
    ]
    checks = []
    k = cfg["tolerance"]["k_sigma"]
    if isinstance(m, Euclidean) and not isinstance(m, Torus):
        expect = m.dim * T
        checks.append(_check("flat E|X_T - x|^2 = nT", abs(mean[-1] - expect) <= k * se[-1],
                             f"mean {mean[-1]:.6g} vs {expect:.6g} (stderr {se[-1]:.3g})"))
    return ["time", "mean_sq_distance", "stderr", "samples", "seed"], rows, checks


def run_converge(cfg, workers=None):
    m = build_manifold(cfg)
    x0 = build_start(cfg, m)
    parts = _partitions(cfg)
    T = parts[0].T
    if any(abs(P.T - T) > 1e-12 for P in parts):
        raise ConfigurationError("converge partitions must share one horizon")
    F = build_function(cfg, m, x0, T)
    kind = cfg["measure"]["kind"]
    if kind == "wiener":
        raise ConfigurationError("converge compares G0/G1 measures; kind must be G0 or G1")
    sweep = convergence_sweep(m, x0, F, kind, parts, cfg.samples, cfg.seed, workers=workers)
    truth = sweep["truth"]
    rows = sweep["rows"] + [
        {"mesh": 0.0, "N": 0, "mean": truth, "stderr": 0.0, "ess": 0.0, "samples": 0, "seed": cfg.seed, "error": 0.0}
    ]
    k = cfg["tolerance"]["k_sigma"]
    r = sweep["rows"]
    checks = []
    flat = isinstance(m, Euclidean)
    if flat:
        for row in r:
            checks.append(_check(f"N={row['N']} equals the Gaussian value", abs(row["error"]) <= k * row["stderr"] + 1e-12,
                                 f"error {row['error']:.3g}, stderr {row['stderr']:.3g}"))
    else:
        for a, b in zip(r, r[1:]):
            tol = k * math.hypot(a["stderr"], b["stderr"])
            checks.append(_check(f"|error| nonincreasing N={a['N']}->{b['N']}", abs(b["error"]) <= abs(a["error"]) + tol,
                                 f"{abs(a['error']):.3g} -> {abs(b['error']):.3g} (tol {tol:.3g})"))
        last, prev = r[-1], r[-2]
        bound = k * last["stderr"] + 0.5 * abs(prev["error"])
        checks.append(_check(f"finest N={last['N']} within 3 stderr + half the previous bias",
                             abs(last["error"]) <= bound, f"|error| {abs(last['error']):.3g} <= {bound:.3g}"))
    cols = ["mesh", "N", "mean", "stderr", "ess", "samples", "seed", "error"]
    return cols, rows, checks


def run_ibp(cfg, workers=None):
    m = build_manifold(cfg)
    x0 = build_start(cfg, m)
    T = cfg["partition"]["T"]
    F = build_function(cfg, m, x0, T)
    h = build_h(cfg, m, T)
    S = cfg["ibp"]["steps"]
    rule = cfg["ibp"]["rule"]
    k = cfg["tolerance"]["k_sigma"]
    coarse = ibp_residual(m, x0, F, h, T, S, cfg.samples, cfg.seed, rule=rule, substeps=2, workers=workers)
    fine = ibp_residual(m, x0, F, h, T, 2 * S, cfg.samples, cfg.seed, rule=rule, workers=workers)
    rows = []
    for steps, r in ((S, coarse), (2 * S, fine)):
        rows.append({"steps": steps, "lhs": r.lhs.mean, "lhs_stderr": r.lhs.stderr, "rhs": r.rhs.mean,
                     "rhs_stderr": r.rhs.stderr, "residual": r.residual, "stderr": r.stderr,
                     "samples": cfg.samples, "seed": cfg.seed})
    checks = []
    flat = isinstance(m, Euclidean) and not isinstance(m, Torus)
    exact = F.flat_ibp(x0, h) if flat else None
    if exact is not None:
        checks.append(_check("lhs equals the Gaussian value", abs(fine.lhs.mean - exact) <= k * fine.lhs.stderr,
                             f"{fine.lhs.mean:.6g} vs {exact:.6g} (stderr {fine.lhs.stderr:.3g})"))
        checks.append(_check("rhs equals the Gaussian value", abs(fine.rhs.mean - exact) <= k * fine.rhs.stderr,
                             f"{fine.rhs.mean:.6g} vs {exact:.6g} (stderr {fine.rhs.stderr:.3g})"))
    if isinstance(m, Euclidean):
        checks.append(_check("residual within 3 stderr", abs(fine.residual) <= k * fine.stderr,
                             f"{fine.residual:.3g} (stderr {fine.stderr:.3g})"))
    else:
        allowance = abs(coarse.residual - fine.residual)
        checks.append(_check("residual within 3 stderr + halving allowance",
                             abs(fine.residual) <= k * fine.stderr + allowance,
                             f"{fine.residual:.3g} <= {k * fine.stderr + allowance:.3g}"))
        checks.append(_check("residual does not grow when halving dt",
                             abs(fine.residual) <= abs(coarse.residual) + k * fine.stderr,
                             f"{abs(coarse.residual):.3g} -> {abs(fine.residual):.3g}"))
    cols = ["steps", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "residual", "stderr", "samples", "seed"]
    return cols, rows, checks


def run_trichotomy(cfg, workers=None):
    tri = cfg["trichotomy"]
    models = {
        "sphere2": (make_manifold("sphere2", radius=1.0), np.array([0.0, 0.0, -1.0])),
        "torus": (make_manifold("torus", periods=[1.0, 1.0]), np.zeros(2)),
        "hyperbolic2": (make_manifold("hyperbolic2", curvature=-1.0), None),
    }
    models["hyperbolic2"] = (models["hyperbolic2"][0], models["hyperbolic2"][0].to_ambient(np.array([0.0, 1.0])))
    res = trichotomy_experiment(models, tri["horizons"], tri["mesh"], tri["levels"], cfg.samples, cfg.seed,
                                tri["cap"], workers)
    checks = []
    for label, fit in res["fits"].items():
        s, p = fit["slope"], fit["predicted"]
        if p == 0:
            checks.append(_check(f"{label} slope 0 +- 0.03", abs(s) <= 0.03, f"{s:.4g}"))
        else:
            checks.append(_check(f"{label} slope {p:.4g} within 15%", abs(s - p) <= 0.15 * abs(p), f"{s:.4g}"))
    cols = ["model", "partition", "horizon", "mesh", "log_mass", "stderr", "fitted_slope", "predicted_slope"]
    return cols, res["rows"], checks


def run_heat_kernel(cfg, workers=None):
    m = build_manifold(cfg)
    x0 = build_start(cfg, m)
    orc = oracle_for(m)
    res = cfg["heat_kernel"]["resolution"]
    rows, checks = [], []
    y = _offset(m, x0, np.r_[0.6, 0.3, np.zeros(max(m.dim - 2, 0))][: m.dim])
    for t in cfg["heat_kernel"]["times"]:
        g = quad_grid(m, max(res, 8), center=x0, t=t)
        mass = g.integrate(orc.p(t, x0, g.points))
        sym = abs(float(orc.p(t, x0, y)) - float(orc.p(t, y, x0)))
        semi = semigroup_defect(m, t / 2, t / 2, x0, y, res)
        pos = float(np.min(orc.p(t, x0, g.points)))
        for name, val, tol in (("mass", abs(mass - 1), 1e-6 + g.tail_bound), ("symmetry", sym, 1e-8),
                               ("semigroup", semi, 1e-5)):
            rows.append({"check": name, "t": float(t), "value": float(val), "tolerance": float(tol)})
            checks.append(_check(f"{name} at t={t:g}", val <= tol, f"{val:.3g} <= {tol:.3g}"))
        rows.append({"check": "min_density", "t": float(t), "value": pos, "tolerance": 0.0})
        checks.append(_check(f"positivity at t={t:g}", pos >= 0, f"{pos:.3g}"))
    return ["check", "t", "value", "tolerance"], rows, checks


def run_free_path(cfg, workers=None):
    m = build_manifold(cfg)
    x0 = build_start(cfg, m)
    parts = _partitions(cfg)
    P = parts[-1]
    fp = cfg["free_path"]
    if fp["atoms"] is None:
        atoms = [x0, _offset(m, x0, np.r_[0.3, -0.2, np.zeros(max(m.dim - 2, 0))][: m.dim])]
    else:
        atoms = [_chart_point(m, a, 0, "free_path atom") for a in fp["atoms"]]
    weights = np.asarray(fp["weights"], dtype=float)
    if len(atoms) != weights.size:
        raise ConfigurationError("free_path atoms and weights differ in length")
    F = build_function(cfg, m, x0, P.T)
    kind = cfg["measure"]["kind"]
    k = cfg["tolerance"]["k_sigma"]
    rows = []
    fixed = []
    for i, a in enumerate(atoms):
        if kind == "wiener":
            r = wiener_mc(m, a, F, P.T, P.N, cfg.samples, cfg.seed + 1 + i, workers)
        else:
            r = estimate(FiniteDimMeasure(m, a, kind, P), F, cfg.samples, cfg.seed + 1 + i, workers)
        fixed.append(r)
        rows.append({"estimate": f"atom{i}", "weight": float(weights[i]), "mean": r.mean, "stderr": r.stderr,
                     "samples": r.samples, "seed": r.seed})
    mix = free_path_estimate(m, DiscreteMixture(atoms, weights), kind if kind != "wiener" else "wiener", F, P,
                             cfg.samples, cfg.seed, workers)
    comb = float(np.dot(weights, [r.mean for r in fixed]))
    comb_se = float(np.sqrt(np.sum((weights * [r.stderr for r in fixed]) ** 2)))
    rows.append({"estimate": "mixture", "weight": 1.0, "mean": mix.mean, "stderr": mix.stderr,
                 "samples": mix.samples, "seed": mix.seed})
    rows.append({"estimate": "convex_combination", "weight": 1.0, "mean": comb, "stderr": comb_se,
                 "samples": cfg.samples * len(atoms), "seed": cfg.seed})
    tol = k * math.hypot(mix.stderr, comb_se)
    checks = [_check("mixture equals the convex combination", abs(mix.mean - comb) <= tol,
                     f"{mix.mean:.6g} vs {comb:.6g} (tol {tol:.3g})")]
    return ["estimate", "weight", "mean", "stderr", "samples", "seed"], rows, checks


RUNNERS = {
    "simulate": run_simulate,
    "converge": run_converge,
    "ibp-check": run_ibp,
    "trichotomy": run_trichotomy,
    "heat-kernel-check": run_heat_kernel,
    "free-path": run_free_path,
}


# -- artifacts ---------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def manifest_for(cfg: RunConfig):
    return {
        "library": "geowiener",
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "samples": cfg.samples,
        "config": cfg.to_dict(),
    }


def run(cfg: RunConfig, out_dir, workers=None):
    """Run the configured experiment, write artifacts, return the exit status."""
    cols, rows, checks = RUNNERS[cfg.experiment](cfg, workers)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(cols, rows))
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest_for(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    ok = all(c[1] for c in checks)
    lines = [f"experiment: {cfg.experiment}", f"seed: {cfg.seed}", f"samples: {cfg.samples}"]
    lines += [f"{'PASS' if c[1] else 'FAIL'} {c[0]}: {c[2]}" for c in checks]
    lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_TOLERANCE


def replay(manifest_path, out_dir, workers=None):
    with open(manifest_path, encoding="utf-8") as fh:
        man = json.load(fh)
    if man.get("version") != __version__:
        warnings.warn(f"manifest was written by version {man.get('version')}, running {__version__}", stacklevel=2)
    cfg = RunConfig.from_dict(man["config"])
    return run(cfg, out_dir, workers)


def _parser():
    ap = argparse.ArgumentParser(prog="geowiener", description="Path-space measure experiments on model manifolds.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        p.add_argument("--samples", type=int, help="Monte Carlo sample count (overrides the config)")
        p.add_argument("--out", help="output directory (default ./geowiener-out/<experiment>)")
    p = sub.add_parser("replay", help="re-run an experiment from its manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default ./geowiener-out/replay)")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "replay":
            return replay(args.manifest, args.out or os.path.join("geowiener-out", "replay"))
        if args.config:
            cfg = load_config(args.config)
            if cfg.values["run"]["experiment"] not in (None, args.command):
                raise ConfigurationError(
                    f"configuration is for {cfg.values['run']['experiment']!r}, not {args.command!r}"
                )
        else:
            vals = defaults()
            cfg = RunConfig(vals)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigurationError("--seed must be an unsigned 64-bit integer")
        cfg.override(seed=args.seed, samples=args.samples, experiment=args.command)
        return run(cfg, args.out or os.path.join("geowiener-out", args.command))
    except ConfigurationError as exc:
        print(f"geowiener: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeoWienerError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"geowiener: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
