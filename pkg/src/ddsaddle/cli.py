"""Command-line front end: ``ddsaddle solve|diagnose|bench-ev``.

Settings come from an optional JSON file (``--config``) overlaid by flags.
Every run writes plain CSV/JSON files that are byte-for-byte reproducible
from the resolved configuration, which is echoed in ``summary.json`` and can
be fed back through ``--config``.

Exit status: 0 on success, 2 when a precondition is violated (the message
names it), 3 when a solver fails to converge.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as dg
from . import solvers as sv
from .evmarket import (EvParams, build_problem, closed_form_references, load_demand_csv,
                       synth_demand)
from .geometry import inner_radius
from .oracles import FirstOrderOracle

SOLVE_METHODS = ("epd", "sepd", "dfo", "retrain")
DIAGNOSE_KINDS = ("subweibull", "contraction", "mixture", "distance", "rate")

DEFAULTS = {
    "seed": 0,
    "iters": None,
    "reps": 1,
    "eta": None,
    "ell": None,
    "kappa": None,
    "delta": 0.05,
    "batch": 1,
    "out": "runs",
    "standardize": "var",
    "hour": 12,
    "demand": "synthetic",
    "n_days": 365,
    "record_every": 1,
    "stop_tolerance": 0.0,
    "z0": None,
    "ev": {},
    "p_fail": 0.1,
    "pairs": 20,
    "inner_tolerance": 1e-10,
    "samples": 100_000,
    "taus": [0.25, 0.5, 0.75],
}

# per-command fallbacks applied after config and flags
METHOD_DEFAULTS = {
    "epd": {"eta": 0.1, "iters": 1000},
    "sepd": {"ell": 1.0, "kappa": 20.0, "iters": 10_000},
    "dfo": {"ell": 0.3, "kappa": 500.0, "iters": 10_000},
    "retrain": {"iters": 50},
}

BENCH = {
    "iters": 10_000,
    "reps": 10,
    "record_every": 10,
    "display_iters": 3000,
    "epd": {"eta": 0.001},
    "sepd": {"ell": 1.0, "kappa": 20.0},
    "dfo": {"ell": 0.3, "kappa": 500.0},
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# -- serialization -----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def emit_trace(trace: sv.SolverTrace, path) -> None:
    """Write a trace as CSV: ``t,eta,err_eq_sq,err_saddle_sq,residual,z0..z{k-1}``.

    Missing columns are left empty; floats carry 17 significant digits.
    """
    if len(trace) == 0:
        raise ValueError("cannot emit an empty trace")
    k = trace.z.shape[1]
    header = ["t", "eta", "err_eq_sq", "err_saddle_sq", "residual"] + [f"z{i}" for i in range(k)]
    lines = [",".join(header)]
    for t, z, eta, e1, e2, res in trace.rows():
        lines.append(",".join([str(t), _fmt(eta), _fmt(e1), _fmt(e2), _fmt(res)]
                              + [_fmt(v) for v in z]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path) -> dict:
    """Parse an emitted trace back into arrays (empty cells become ``None`` columns)."""
    rows = Path(path).read_text().strip().splitlines()
    header = rows[0].split(",")
    cells = [r.split(",") for r in rows[1:]]
    out = {}
    for j, name in enumerate(header):
        col = [c[j] for c in cells]
        if all(v == "" for v in col):
            out[name] = None
        elif name == "t":
            out[name] = np.array([int(v) for v in col])
        else:
            out[name] = np.array([float(v) if v else np.nan for v in col])
    return out


def emit_aggregate(agg: dict, path) -> None:
    cols = ["t", "mean_err_eq_sq", "mean_err_saddle_sq", "se_err_eq_sq", "se_err_saddle_sq"]
    lines = [",".join(cols)]
    for i, t in enumerate(agg["t"]):
        vals = [str(int(t))]
        for c in cols[1:]:
            vals.append("" if agg[c] is None else _fmt(agg[c][i]))
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# -- configuration ---------------------------------------------------------------

def load_config(path) -> dict:
    """Read a JSON config; a previous ``summary.json`` works too (its ``config`` key is used)."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    unknown = set(data) - set(DEFAULTS) - {"command", "target"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    file_cfg = load_config(args.config) if args.config else {}
    cfg.update({k: v for k, v in file_cfg.items() if k not in ("command", "target")})
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    cfg["target"] = getattr(args, "target", None)
    if file_cfg.get("command") not in (None, cfg["command"]) or \
            file_cfg.get("target") not in (None, cfg["target"]):
        print(f"note: config was written for {file_cfg.get('command')} "
              f"{file_cfg.get('target') or ''}; running {cfg['command']} {cfg['target'] or ''}",
              file=sys.stderr)
    return cfg


def _apply_method_defaults(cfg: dict, method: str) -> dict:
    cfg = dict(cfg)
    md = METHOD_DEFAULTS.get(method, {})
    if cfg["iters"] is None:
        cfg["iters"] = md.get("iters", 1000)
    if method in ("sepd",) and cfg["eta"] is not None:
        return cfg
    for key in ("eta", "ell", "kappa"):
        if cfg[key] is None and key in md:
            cfg[key] = md[key]
    return cfg


def _check_positive(cfg, keys):
    for key in keys:
        val = cfg[key]
        if val is None:
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
            raise ConfigError(f"{key} must be positive, got {val!r}")


def _validate_common(cfg):
    _check_positive(cfg, ("iters", "reps", "batch", "record_every", "delta", "eta", "ell", "kappa",
                          "samples", "pairs", "inner_tolerance", "n_days"))
    for key in ("iters", "reps", "batch", "record_every", "samples", "pairs", "n_days", "seed", "hour"):
        if cfg[key] is not None and not float(cfg[key]).is_integer():
            raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}")
    if cfg["standardize"] not in ("var", "std"):
        raise ConfigError("standardize must be 'var' or 'std'")
    if not 0 < cfg["p_fail"] < 1:
        raise ConfigError("p_fail must lie in (0, 1)")
    if cfg["stop_tolerance"] < 0:
        raise ConfigError("stop_tolerance must be nonnegative")


def _ev_params(cfg) -> EvParams:
    raw = dict(cfg["ev"])
    n = int(raw.pop("n_zones", 3))
    kwargs = {"n_zones": n}
    for key in ("a1", "a2", "b1", "b2"):
        if key in raw:
            v = np.asarray(raw.pop(key), dtype=float)
            kwargs[key] = v * np.eye(n) if v.ndim == 0 else v
    for key in ("gamma1", "gamma2", "theta", "mu_a", "mu_b", "price_lo", "price_hi"):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if raw:
        raise ConfigError(f"unknown ev parameters {sorted(raw)}")
    return EvParams(**kwargs)


def _demand(cfg, n_zones):
    src = cfg["demand"]
    if src == "gaussian":
        return None
    if src == "synthetic":
        return synth_demand(n_zones, int(cfg["n_days"]), int(cfg["seed"]), cfg["standardize"])
    return load_demand_csv(src, int(cfg["hour"]), cfg["standardize"])


def _setup(cfg):
    params = _ev_params(cfg)
    problem = build_problem(params, _demand(cfg, params.n_zones))
    return params, problem, params.box


def _z0(cfg, box):
    if cfg["z0"] is None:
        return None
    z0 = np.asarray(cfg["z0"], dtype=float)
    if z0.ndim == 0:
        z0 = np.full(box.dim, float(z0))
    if z0.shape != (box.dim,):
        raise ConfigError(f"z0 must have {box.dim} entries")
    return z0


def _schedule(cfg, method):
    if cfg["eta"] is not None and method in ("epd", "sepd"):
        return sv.StepSchedule.constant(float(cfg["eta"]))
    if cfg["ell"] is None or cfg["kappa"] is None:
        raise ConfigError(f"{method} needs --ell and --kappa")
    return sv.StepSchedule.polynomial(float(cfg["ell"]), float(cfg["kappa"]))


def _solver_config(cfg, method):
    return sv.SolverConfig(_schedule(cfg, method), int(cfg["iters"]), int(cfg["seed"]),
                           float(cfg["stop_tolerance"]), int(cfg["batch"]), float(cfg["delta"]),
                           int(cfg["record_every"]))


def _precheck(problem, box, cfg, method):
    """Validate solver preconditions before any iteration runs."""
    c = problem.constants
    if method in ("epd", "retrain") or (method == "sepd" and cfg["eta"] is not None):
        upper = sv.step_size_upper_bound(c.gamma, c.lip_l, c.eps)
        if method != "retrain" and not 0 < cfg["eta"] < upper:
            raise ConfigError(f"eta = {cfg['eta']:g} violates the step window (0, {upper:g})")
    if method == "sepd" and cfg["eta"] is None:
        bad = sv.validate_polynomial_schedule(cfg["ell"], cfg["kappa"], c, "sepd")
        if bad:
            raise ConfigError(bad[0])
    if method == "dfo":
        r = inner_radius(box)
        if cfg["delta"] > r:
            raise ConfigError(f"delta = {cfg['delta']:g} exceeds the box inner radius {r:g}")
        bad = sv.validate_polynomial_schedule(cfg["ell"], cfg["kappa"], c, "dfo")
        if bad:
            raise ConfigError(bad[0])


# -- runs ---------------------------------------------------------------------------

def _references(params, problem, box, method, delta):
    refs = closed_form_references(params)
    out = {"z_bar": refs.z_bar, "z_star": refs.z_star, "clamped": refs.clamped}
    if method == "dfo":
        out["z_star_delta"] = sv.compute_smoothed_saddle(problem, box, delta)
    return out


def _constants_summary(problem, box, cfg, method):
    c = problem.constants
    d = c.as_dict()
    try:
        d["step_upper_bound"] = sv.step_size_upper_bound(c.gamma, c.lip_l, c.eps)
    except ValueError:
        d["step_upper_bound"] = None
    if cfg.get("eta") is not None and method in ("epd", "sepd"):
        d["alpha"] = sv.contraction_factor(cfg["eta"], c.gamma, c.lip_l, c.eps)
    d["distance_bound"] = sv.distance_bound_rhs(c, box)
    return d


def _noise_fit(problem, cfg, z):
    """Sub-Weibull fit of the first-order oracle error at ``z``."""
    oracle = FirstOrderOracle(problem, batch=int(cfg["batch"]))
    rng = np.random.default_rng(int(cfg["seed"]) + 10**6)
    raw = oracle.draw(rng, (int(cfg["samples"]),))
    err = oracle.evaluate(z, raw) - problem.decoupled_grad(z, z)
    return dg.fit_subweibull(np.linalg.norm(err, axis=-1))


def _final_decade_slope(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (t >= t.max() / 10.0) & (t > 0) & (y > 0)
    if m.sum() < 2:
        return None
    return float(np.polyfit(np.log(t[m]), np.log(y[m]), 1)[0])


def run_solver(cfg: dict, method: str, out: Path, summary_extra: Optional[dict] = None) -> dict:
    cfg = _apply_method_defaults(cfg, method)
    _validate_common(cfg)
    params, problem, box = _setup(cfg)
    _precheck(problem, box, cfg, method)
    out.mkdir(parents=True, exist_ok=True)
    refs = _references(params, problem, box, method, cfg["delta"])
    z0 = _z0(cfg, box)
    summary = {"config": cfg, "method": method,
               "constants": _constants_summary(problem, box, cfg, method),
               "references": refs}
    if method == "retrain":
        start = np.zeros(box.dim) if z0 is None else z0
        seq = sv.repeated_retraining(problem, box, start, cfg["inner_tolerance"], int(cfg["iters"]))
        seq = np.array(seq)
        trace = sv.SolverTrace(np.arange(len(seq)), seq, np.full(len(seq), np.nan),
                               np.sum((seq - refs["z_bar"]) ** 2, axis=1),
                               np.sum((seq - refs["z_star"]) ** 2, axis=1))
        emit_trace(trace, out / "trace_000.csv")
        diffs = np.linalg.norm(np.diff(seq, axis=0), axis=1)
        keep = diffs[:-1] > 1e-9
        ratios = diffs[1:][keep] / diffs[:-1][keep]
        summary["max_outer_ratio"] = float(ratios.max()) if ratios.size else None
        emit_aggregate(sv.aggregate([trace]), out / "aggregate.csv")
        write_json(summary, out / "summary.json")
        return summary

    config = _solver_config(cfg, method)
    if method == "dfo":
        references = sv.References(refs["z_bar"], refs["z_star_delta"])
    else:
        references = sv.References(refs["z_bar"], refs["z_star"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traces = sv.run_replications(method, problem, box, config, int(cfg["reps"]), references,
                                     z0=z0)
    for k, tr in enumerate(traces):
        emit_trace(tr, out / f"trace_{k:03d}.csv")
    agg = sv.aggregate(traces)
    emit_aggregate(agg, out / "aggregate.csv")

    err_col = "mean_err_saddle_sq" if method == "dfo" else "mean_err_eq_sq"
    sched = config.schedule
    summary["rate_slope"] = None
    if sched.kind == "polynomial" and agg[err_col] is not None:
        t = agg["t"]
        mask = (t > 0) & (agg[err_col] > 0)
        try:
            summary["rate_slope"] = dg.fit_rate(np.column_stack([t[mask], agg[err_col][mask]]),
                                                sched.kappa)
        except ValueError:
            pass
    summary["final_decade_slope"] = _final_decade_slope(agg["t"], agg[err_col])
    summary["envelope"] = None
    if method == "sepd" and sched.kind == "constant":
        c = problem.constants
        start = traces[0].z[0]
        fit = _noise_fit(problem, cfg, refs["z_bar"])
        env = dg.EnvelopeParams(float(np.linalg.norm(start - refs["z_bar"])),
                                sv.contraction_factor(sched.eta, c.gamma, c.lip_l, c.eps),
                                fit.nu_hat, sched.eta, fit.theta_hat, cfg["p_fail"])
        t_end = int(traces[0].t[-1])
        bound = dg.high_prob_bound(t_end, env)
        finals = np.array([math.sqrt(tr.err_eq_sq[-1]) for tr in traces])
        summary["envelope"] = {"t": t_end, "bound": bound, "coverage": float(np.mean(finals <= bound)),
                               "theta_hat": fit.theta_hat, "nu_hat": fit.nu_hat,
                               "p_fail": cfg["p_fail"]}
    if summary_extra:
        summary.update(summary_extra)
    write_json(summary, out / "summary.json")
    return summary


def run_bench(cfg: dict, out: Path) -> dict:
    """EPD, SEPD and DFO on the charging market with one shared configuration."""
    cfg = dict(cfg)
    if cfg["iters"] is None:
        cfg["iters"] = BENCH["iters"]
    if cfg["reps"] == DEFAULTS["reps"]:
        cfg["reps"] = BENCH["reps"]
    if cfg["record_every"] == DEFAULTS["record_every"]:
        cfg["record_every"] = BENCH["record_every"]
    if cfg["z0"] is None:
        cfg["z0"] = 1.0
    _validate_common(cfg)
    out.mkdir(parents=True, exist_ok=True)
    runs = {}
    for method in ("epd", "sepd", "dfo"):
        mcfg = dict(cfg, eta=None, ell=None, kappa=None)
        mcfg.update(BENCH[method])
        for key in ("eta", "ell", "kappa"):
            if cfg[key] is not None and key in BENCH[method]:
                mcfg[key] = cfg[key]
        if method == "epd":
            mcfg["reps"] = 1
        runs[method] = run_solver(mcfg, method, out / method)

    params, problem, box = _setup(cfg)
    z_star = closed_form_references(params).z_star
    aggs = {m: _read_aggregate(out / m / "aggregate.csv") for m in runs}
    dfo_traces = [read_trace_csv(p) for p in sorted((out / "dfo").glob("trace_*.csv"))]
    zcols = [f"z{i}" for i in range(box.dim)]
    dfo_star = np.mean([np.sum((np.column_stack([tr[c] for c in zcols]) - z_star) ** 2, axis=1)
                        for tr in dfo_traces], axis=0)
    t = aggs["epd"]["t"]
    curves = {
        "t": t,
        "epd_err_eq_sq": aggs["epd"]["mean_err_eq_sq"],
        "sepd_err_eq_sq": aggs["sepd"]["mean_err_eq_sq"],
        "dfo_err_saddle_delta_sq": aggs["dfo"]["mean_err_saddle_sq"],
        "dfo_err_saddle_sq": dfo_star,
    }
    lines = [",".join(curves)]
    for i in range(t.size):
        lines.append(",".join([str(int(t[i]))] + [_fmt(curves[c][i]) for c in list(curves)[1:]]))
    (out / "curves.csv").write_text("\n".join(lines) + "\n")
    summary = {
        "config": dict(cfg, command="bench-ev", target=None),
        "display_iters": min(BENCH["display_iters"], int(cfg["iters"])),
        "final_decade_slope": {c: _final_decade_slope(t, curves[c]) for c in list(curves)[1:]},
        "schedules": {m: {k: runs[m]["config"][k] for k in BENCH[m]} for m in runs},
    }
    write_json(summary, out / "summary.json")
    return summary


def _read_aggregate(path) -> dict:
    rows = Path(path).read_text().strip().splitlines()
    header = rows[0].split(",")
    cells = [r.split(",") for r in rows[1:]]
    out = {}
    for j, name in enumerate(header):
        col = [c[j] for c in cells]
        out[name] = (np.array([int(v) for v in col]) if name == "t"
                     else np.array([float(v) if v else np.nan for v in col]))
    return out


def run_diagnose(cfg: dict, kind: str, out: Path) -> dict:
    if cfg["iters"] is None:
        cfg = dict(cfg, iters=10_000)
    _validate_common(cfg)
    params, problem, box = _setup(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    out.mkdir(parents=True, exist_ok=True)
    report = {"config": cfg, "kind": kind}
    if kind == "subweibull":
        z = np.zeros(box.dim) if cfg["z0"] is None else _z0(cfg, box)
        fit = _noise_fit(problem, cfg, z)
        report.update(theta_hat=fit.theta_hat, nu_hat=fit.nu_hat, moments=fit.moments)
    elif kind == "contraction":
        ratio = dg.estimate_h_contraction(problem, box, int(cfg["pairs"]), cfg["inner_tolerance"], rng)
        report.update(max_ratio=ratio, theory=problem.constants.ratio)
    elif kind == "mixture":
        z, z2 = box.sample_uniform(rng, 2)
        rows = []
        for tau in cfg["taus"]:
            chk = dg.check_mixture_equality(problem.dist_map, dg.squared_norm, z, z2, float(tau),
                                            int(cfg["samples"]), rng)
            rows.append({"tau": tau, **chk._asdict()})
        report.update(z=z, z_prime=z2, checks=rows, ok=all(r["ok"] for r in rows))
    elif kind == "distance":
        refs = closed_form_references(params)
        chk = dg.check_distance_bound(problem, box, refs.z_star, refs.z_bar)
        report.update(chk._asdict(), z_star=refs.z_star, z_bar=refs.z_bar)
    elif kind == "rate":
        sub = run_solver(dict(cfg, eta=None, record_every=1), "sepd", out / "rate_run")
        report.update(rate_slope=sub["rate_slope"])
    write_json(report, out / f"diagnose_{kind}.json")
    return report


# -- entry point ------------------------------------------------------------------------

def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file (a previous summary.json also works)")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--eta", type=float, help="constant step size")
    p.add_argument("--ell", type=float, help="polynomial schedule numerator")
    p.add_argument("--kappa", type=float, help="polynomial schedule offset")
    p.add_argument("--delta", type=float, help="zeroth-order smoothing radius")
    p.add_argument("--batch", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--standardize", choices=("var", "std"))
    p.add_argument("--hour", type=int, help="hour window of the demand CSV")
    p.add_argument("--demand", help="'synthetic' (default), 'gaussian' or a CSV path")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="ddsaddle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="run one solver")
    p.add_argument("target", choices=SOLVE_METHODS)
    p = sub.add_parser("diagnose", parents=[common], help="run a statistical check")
    p.add_argument("target", choices=DIAGNOSE_KINDS)
    sub.add_parser("bench-ev", parents=[common], help="EPD/SEPD/DFO error curves on the charging market")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        out = Path(cfg["out"])
        if args.command == "solve":
            summary = run_solver(cfg, args.target, out)
            print(f"{args.target}: wrote {out}/summary.json")
            if summary.get("rate_slope") is not None:
                print(f"rate slope {summary['rate_slope']:.4f}")
        elif args.command == "diagnose":
            report = run_diagnose(cfg, args.target, out)
            print(json.dumps(_jsonable({k: v for k, v in report.items()
                                        if k not in ("config", "moments")}), sort_keys=True))
        else:
            summary = run_bench(cfg, out)
            print(json.dumps(_jsonable(summary["final_decade_slope"]), sort_keys=True))
    except sv.SolverError as err:
        print(f"error: solver failure: {err}", file=sys.stderr)
        return 3
    except (ValueError, OSError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
