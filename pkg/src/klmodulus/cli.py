"""Command line front end: ``klmod {modulus,compare,palm,catalog,verify}``.

Exit codes: 0 success, 1 invariant violation, 2 undefined modulus (h is
infinite for the chosen neighbourhood and window), 3 configuration error.
Outputs go to ``--out``, else ``$KLMOD_OUT``, else ``./klmod_out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import catalog
from .desingularizers import (GrowthModulus, bdlm_phi, bdlm_phi_convex, compare,
                              growth_desingularizer)
from .errors import ConfigurationError, HInfiniteError, KLModulusError
from .function_model import Piecewise1D
from .intervals import INF, Interval, IntervalSet
from .modulus import ClosedForm, KlContext, exact_modulus, verify_gkl
from .numerics import concavity_check
from .palm import (PalmConfig, length_bound, limit_set_estimate, residual_check, run,
                   sufficient_decrease_check)

EXIT_OK, EXIT_INVARIANT, EXIT_UNDEFINED, EXIT_CONFIG = 0, 1, 2, 3
EXIT_CODES = {"ok": EXIT_OK, "invariant-violation": EXIT_INVARIANT,
              "undefined-modulus": EXIT_UNDEFINED, "configuration-error": EXIT_CONFIG}
OUT_ENV = "KLMOD_OUT"

DEFAULTS = {
    "catalog": None, "function": None, "xbar": 0.0, "U": None, "eta": None, "rho": None, "K": None,
    "depth": None, "tmax": None, "points": 257, "tol": 1e-9, "sources": None, "svg": False,
    "problem": "palm-soft-threshold", "gamma1": 2.0, "gamma2": 2.0, "z0": None, "max_iters": 200,
    "stop_tol": 0.0, "seed": 0, "modulus": "exact", "eps": None, "kl_eta": None, "n": 10,
}


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path: Path, data):
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_svg(path: Path, ts, series: dict, title: str):
    """Minimal fixed-style line chart."""
    W, H, pad = 640, 420, 50
    colors = ["#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"]
    ts = np.asarray(ts, float)
    allv = np.concatenate([np.asarray(v, float) for v in series.values()])
    allv = allv[np.isfinite(allv)]
    x0, x1 = float(ts.min()), float(ts.max())
    y0, y1 = 0.0, float(allv.max()) if allv.size else 1.0
    sx = lambda x: pad + (x - x0) / ((x1 - x0) or 1) * (W - 2 * pad)  # noqa: E731
    sy = lambda y: H - pad - (y - y0) / ((y1 - y0) or 1) * (H - 2 * pad)  # noqa: E731
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W // 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>']
    for i, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts, vals) if math.isfinite(v))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - pad - 150}" y="{pad + 16 * i}" font-family="sans-serif" '
                   f'font-size="12" fill="{c}">{name}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def effective_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from exc
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            cfg[key] = v
    if cfg["points"] < 2:
        raise ConfigurationError("points must be at least 2")
    if not cfg["tol"] > 0:
        raise ConfigurationError("tol must be positive")
    return cfg


def out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or "klmod_out")
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"output directory not writable: {exc}") from exc
    if not os.access(d, os.W_OK):
        raise ConfigurationError(f"output directory {d} is not writable")
    return d


def _catalog_params(cfg) -> dict:
    name = cfg["catalog"]
    keys = {"nonsmooth-modulus": ["rho"], "exp-flat": ["eta"], "harmonic-piecewise": ["K"],
            "dc-oscillation": ["depth"]}.get(name, [])
    return {k: cfg[k] for k in keys if cfg[k] is not None}


def load_function(cfg):
    """(entry or None, f, ctx) from a catalog name or a JSON function file."""
    if cfg["catalog"]:
        entry = catalog.build(cfg["catalog"], **_catalog_params(cfg))
        if not isinstance(entry.function, Piecewise1D):
            raise ConfigurationError(f"{cfg['catalog']} is not a one-dimensional piecewise entry")
        return entry, entry.function, entry.context
    if cfg["function"]:
        try:
            f = Piecewise1D.from_json(Path(cfg["function"]).read_text())
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigurationError(f"cannot load function file: {exc}") from exc
        U = None
        if cfg["U"] is not None:
            lo, hi = (float(v) for v in cfg["U"])
            U = IntervalSet([Interval.open(lo, hi)])
        eta = INF if cfg["eta"] is None else float(cfg["eta"])
        return None, f, KlContext.pointwise(f, float(cfg["xbar"]), U, eta)
    raise ConfigurationError("give --catalog NAME or --function FILE")


def t_grid(tmax: float, eta: float, points: int) -> np.ndarray:
    # the left derivative at eta needs h on (0, eta) only, so eta itself is left out
    if eta <= tmax:
        return np.linspace(0.0, eta, points, endpoint=False)
    return np.linspace(0.0, tmax, points)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_modulus(args) -> int:
    cfg = effective_config(args)
    entry, f, ctx = load_function(cfg)
    if entry is not None and cfg["eta"] is not None and cfg["catalog"] != "exp-flat":
        ctx = KlContext(ctx.anchor, ctx.U, float(cfg["eta"]), ctx.base_value)
    d = out_dir(args)
    try:
        mod = exact_modulus(f, ctx, tol=cfg["tol"])
    except HInfiniteError as exc:
        report = {"config": cfg, "status": "undefined-modulus", "error": str(exc),
                  "diagnostic": "h(s) is unbounded: dist(0, df) tends to 0 inside the band; "
                                "shrink U or eta", "s": exc.s, "witness": exc.witness}
        write_json(d / "modulus.json", report)
        print(f"h-infinite: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    tmax = cfg["tmax"] if cfg["tmax"] is not None else 4.0
    ts = t_grid(tmax, ctx.eta, cfg["points"])
    rows = []
    for t in ts:
        deriv = mod.phi_tilde.left_deriv(t) if t > 0 else None
        rows.append([float(t), mod(t), deriv])
    write_csv(d / "modulus.csv", ["t", "phi_tilde", "left_deriv"], rows)
    ss = [s for s in (ts[1:] if len(ts) > 1 else []) if 0 < s < ctx.eta][:: max(1, len(ts) // 32)]
    report = {"config": cfg, "status": "ok", "modulus": mod.to_json(),
              "h_samples": [[float(s), mod.h_value(float(s))] for s in ss]}
    if entry is not None and entry.golden_modulus is not None:
        err = max(abs(mod(t) - entry.golden_modulus(t)) for t in ts)
        report["golden"] = {"formula": entry.golden_modulus.describe(), "max_abs_error": err}
    write_json(d / "modulus.json", report)
    print(f"wrote {d / 'modulus.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _rivals_for(entry, f, ctx, cfg) -> dict:
    """Rival desingularizers computed by the library for a catalog entry."""
    name = entry.name if entry else None
    out = {}
    if name == "nonsmooth-modulus":
        rho = entry.params["rho"]
        out["phi_1"] = bdlm_phi_convex(f, r0=rho * rho / 2, limiting=True)
        m, m_inv = catalog.nonsmooth_growth_m(rho)
        out["phi_2"] = growth_desingularizer(GrowthModulus(m, inverse=m_inv, knots=[rho * rho / 2]))
    elif name == "three-slope-step":
        for n in (int(cfg["n"]), 100):
            out[f"ramp_{n}"] = bdlm_phi(f, 0.0, INF, 4.0, "infimal-ramp", n=n)
        out["step_hold"] = bdlm_phi(f, 0.0, INF, 4.0, "step-hold")
    elif name == "harmonic-piecewise":
        out.update({k.replace("-", "_"): v for k, v in entry.golden_rivals.items()})
        r1 = entry.extra["r1"]
        out["bdlm_ramp_trunc"] = bdlm_phi(f, 0.0, INF, r1, "infimal-ramp", n=int(cfg["n"]))
    elif entry is not None:
        out.update({k.replace("-", "_"): v for k, v in entry.golden_rivals.items()})
    return out


def cmd_compare(args) -> int:
    cfg = effective_config(args)
    entry, f, ctx = load_function(cfg)
    d = out_dir(args)
    mod = exact_modulus(f, ctx, tol=cfg["tol"])
    sources = {"phi_tilde": mod.phi_tilde}
    rivals = _rivals_for(entry, f, ctx, cfg)
    wanted = cfg["sources"]
    if wanted:
        names = [s.strip() for s in (wanted.split(",") if isinstance(wanted, str) else wanted)]
        for s in names:
            if s not in rivals and s not in ("phi_tilde", "self"):
                raise ConfigurationError(f"unknown source {s!r}; available: {sorted(rivals)}")
        rivals = {s: rivals[s] for s in names if s in rivals}
        if "self" in names:
            rivals["phi_tilde_again"] = mod.phi_tilde
    if not rivals:
        rivals = {"phi_tilde_again": mod.phi_tilde}
    sources.update(rivals)
    default_tmax = 2.0 if not math.isfinite(ctx.eta) else ctx.eta
    tmax = cfg["tmax"] if cfg["tmax"] is not None else default_tmax
    top = min(tmax, ctx.eta)
    points = cfg["points"] if args.points is not None or cfg["points"] != DEFAULTS["points"] else 1000
    ts = np.linspace(0.0, top, points + 1)[1:]
    values = {k: np.array([phi(t) for t in ts]) for k, phi in sources.items()}
    rows = [[float(t), *(values[k][i] for k in sources)] for i, t in enumerate(ts)]
    write_csv(d / "comparison.csv", ["t", *sources], rows)
    reports = {}
    ok = True
    for k, phi in rivals.items():
        rep = compare(lambda t: values["phi_tilde"][_idx(ts, t)], lambda t: values[k][_idx(ts, t)], ts,
                      tol=cfg["tol"])
        reports[k] = rep.to_json()
        ok &= rep.a_le_b
    if entry is not None and entry.name == "nonsmooth-modulus":
        write_csv(d / "figure1_left.csv", ["t", "phi_tilde", "phi_1"],
                  [[float(t), values["phi_tilde"][i], values["phi_1"][i]] for i, t in enumerate(ts)])
        write_csv(d / "figure1_right.csv", ["t", "phi_tilde", "phi_2"],
                  [[float(t), values["phi_tilde"][i], values["phi_2"][i]] for i, t in enumerate(ts)])
    if cfg["svg"]:
        write_svg(d / "comparison.svg", ts, values, entry.name if entry else "comparison")
    write_json(d / "compare.json", {"config": cfg, "dominance": ok, "reports": reports,
                                    "sources": {k: v.describe() for k, v in sources.items()}})
    print(f"dominance {'holds' if ok else 'FAILS'} for {len(rivals)} rival(s)")
    return EXIT_OK if ok else EXIT_INVARIANT


def _idx(ts, t):
    return int(np.searchsorted(ts, t))


def _palm_moduli(entry, cfg) -> tuple[dict, str]:
    moduli = {"exact": entry.golden_modulus, **entry.golden_rivals}
    choice = cfg["modulus"]
    if choice.startswith("file:"):
        try:
            data = json.loads(Path(choice[5:]).read_text())
            scale, power = float(data["scale"]), float(data["exponent"])
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigurationError(f"cannot read modulus file: {exc}") from exc
        if not (scale > 0 and 0 < power <= 1):
            raise ConfigurationError("modulus file needs scale > 0 and 0 < exponent <= 1")
        moduli["file"] = ClosedForm(lambda t: scale * t ** power,
                                    lambda t: scale * power * t ** (power - 1), INF, "user", "file",
                                    f"{scale!r}*t^{power!r}")
        choice = "file"
    if choice not in moduli:
        raise ConfigurationError(f"unknown modulus source {choice!r}; choose from {sorted(moduli)} or file:PATH")
    return moduli, choice


def cmd_palm(args) -> int:
    cfg = effective_config(args)
    if cfg["problem"] not in ("palm-soft-threshold", "palm-quadratic"):
        raise ConfigurationError(f"unknown PALM problem {cfg['problem']!r}")
    entry = catalog.build(cfg["problem"])
    base = entry.extra["config"]
    z0 = tuple(float(v) for v in cfg["z0"]) if cfg["z0"] is not None else tuple(base.z0)
    config = PalmConfig(gamma1=float(cfg["gamma1"]), gamma2=float(cfg["gamma2"]), z0=z0,
                        max_iters=int(cfg["max_iters"]), stop_tol=float(cfg["stop_tol"]),
                        seed=int(cfg["seed"]))
    eps = float(cfg["eps"]) if cfg["eps"] is not None else entry.context["eps"]
    eta = float(cfg["kl_eta"]) if cfg["kl_eta"] is not None else entry.context["eta"]
    moduli, primary = _palm_moduli(entry, cfg)
    d = out_dir(args)
    prob = entry.function
    trace = run(prob, config)
    write_csv(d / "trace.csv", ["k", "x", "y", "psi", "step_norm", "residual_norm", "decrease_slack"],
              trace.rows())
    dec = sufficient_decrease_check(trace, trace.rho1)
    res = residual_check(trace)
    invariants = {"descent": dec.to_json(), "residual": res.to_json(),
                  "psi_monotone": bool(np.all(np.diff(trace.psi) <= 1e-12))}
    ledger_json = {"config": {**cfg, "z0": list(z0), "eps": eps, "kl_eta": eta},
                   "iterations": len(trace) - 1, "fixed_point": trace.fixed_point}
    ok = dec.passed and res.passed and invariants["psi_monotone"]
    if len(trace) > 1:
        ledger = length_bound(trace, moduli, eps, eta, primary=primary, problem=prob)
        ledger_json["ledger"] = ledger.to_json()
        dom = all(ledger.kl_bounds[primary] <= v + 1e-12 for v in ledger.kl_bounds.values()) \
            if primary == "exact" and ledger.kl_bounds else True
        slack = ledger.partial_sum_min_slack
        invariants["length_certified"] = ledger.certified
        invariants["exact_bound_dominates"] = dom
        invariants["partial_sums"] = slack is None or slack >= -1e-9
        ok = ok and ledger.certified and dom and invariants["partial_sums"]
        pts, mu = limit_set_estimate(trace, tail=min(10, len(trace)))
        ledger_json["limit_set"] = {"points": [p.tolist() for p in pts], "mu": mu}
    else:
        ledger_json["ledger"] = None
        invariants["length_certified"] = True
    ledger_json["invariants"] = invariants
    ledger_json["passed"] = ok
    write_json(d / "ledger.json", ledger_json)
    print(f"{prob.name}: {len(trace) - 1} iterations, invariants {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_catalog(args) -> int:
    if args.action == "list":
        for name in catalog.names():
            print(name)
        return EXIT_OK
    if not args.name:
        raise ConfigurationError("catalog show needs a name")
    entry = catalog.build(args.name)
    print(json.dumps(_clean(entry.metadata()), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = effective_config(args)
    entry, f, ctx = load_function(cfg)
    d = out_dir(args)
    mod = exact_modulus(f, ctx, tol=cfg["tol"])
    top = min(ctx.eta, 10.0)
    ts = np.linspace(0.0, top, 1001)[:-1]
    report = {"config": cfg}
    ok = True
    band = ctx.U.intersect(f.level_band(ctx.base_value, 0.0, ctx.eta)).clip(1e3)
    xs = np.concatenate([np.linspace(iv.lo, iv.hi, 10001) for iv in band]) if band else np.zeros(0)
    g = verify_gkl(f, ctx, mod.phi_tilde, xs.tolist())
    report["self_desingularizing"] = g.to_json()
    ok &= g.passed
    conc = concavity_check(mod.phi_tilde, ts[1:])
    report["concavity"] = conc.to_json()
    ok &= conc.passed
    if entry is not None and entry.golden_modulus is not None:
        err = max(abs(mod(t) - entry.golden_modulus(t)) for t in ts)
        report["golden_max_abs_error"] = err
        ok &= err <= 1e-6
        for k, phi in entry.golden_rivals.items():
            rep = compare(mod.phi_tilde, phi, ts[1:], tol=1e-9)
            report.setdefault("dominance", {})[k] = rep.to_json()
            ok &= rep.a_le_b
    report["passed"] = bool(ok)
    write_json(d / "verify.json", report)
    print(f"verify {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INVARIANT


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="klmod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (flags override it)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./klmod_out)")
        sp.add_argument("--tol", type=float)

    def function_opts(sp):
        sp.add_argument("--catalog", help="catalog entry name")
        sp.add_argument("--function", help="JSON piecewise function file")
        sp.add_argument("--xbar", type=float)
        sp.add_argument("--U", nargs=2, type=float, metavar=("LO", "HI"))
        sp.add_argument("--eta", type=float)
        sp.add_argument("--rho", type=float)
        sp.add_argument("--K", type=int)
        sp.add_argument("--depth", type=int)
        sp.add_argument("--tmax", type=float)
        sp.add_argument("--points", type=int)

    sp = sub.add_parser("modulus", help="tabulate the exact modulus")
    common(sp)
    function_opts(sp)
    sp.set_defaults(func=cmd_modulus)

    sp = sub.add_parser("compare", help="compare the exact modulus with rival desingularizers")
    common(sp)
    function_opts(sp)
    sp.add_argument("--sources", help="comma-separated rival names (or 'self')")
    sp.add_argument("--n", type=int, help="ramp parameter for the ramp majorant")
    sp.add_argument("--svg", action="store_true", help="also write comparison.svg")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("palm", help="run PALM and evaluate the length certificate")
    common(sp)
    sp.add_argument("--problem")
    sp.add_argument("--gamma1", type=float)
    sp.add_argument("--gamma2", type=float)
    sp.add_argument("--z0", nargs=2, type=float, metavar=("X", "Y"))
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--stop-tol", dest="stop_tol", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--modulus", help="exact | bdlm | growth | lojasiewicz | file:PATH")
    sp.add_argument("--eps", type=float, help="KL ball radius around the limit")
    sp.add_argument("--kl-eta", dest="kl_eta", type=float, help="KL value window")
    sp.set_defaults(func=cmd_palm)

    sp = sub.add_parser("catalog", help="list or show catalog entries")
    sp.add_argument("action", choices=["list", "show"])
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_catalog)

    sp = sub.add_parser("verify", help="check an entry's modulus against its golden data")
    common(sp)
    function_opts(sp)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    for key in DEFAULTS:
        if not hasattr(args, key):
            setattr(args, key, None)
    try:
        return args.func(args)
    except HInfiniteError as exc:
        print(f"h-infinite: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KLModulusError as exc:
        print(f"invariant violation: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
