"""``escape-lab`` command line front end."""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build_system, describe, list_presets, load_config, parse_center, resolve
from .errors import DomainError, NumericalError, PreconditionError, ResourceError
from .escape import Hole, escape_rate_spectral, hitting_ratio, survival_exact, survival_mc
from .experiments import (
    THETA_GE_HALF,
    extremal_index_analytic,
    extremal_index_empirical,
    fit_decay_ratio,
    gibbs_markov_theta,
    local_escape_experiment,
    local_escape_iterate,
    phi_coefficient,
    s_of_n,
)
from .interval import ball_escape_experiment
from .sft import CylinderSet, cylinder_of_point, minimal_period
from .thermo import gibbs_state, measure_of_set

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_STRICT = 0, 2, 3, 4


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv(header: list, rows: list) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    return "\n".join([",".join(header)] + [",".join(cell(v) for v in r) for r in rows]) + "\n"


def _n_values(params: dict) -> list:
    lo, hi = params["n_range"]
    return list(range(lo, hi + 1))


def _local_escape(resolved, built, g, threads):
    p = resolved["parameters"]
    ns = _n_values(p)
    x = parse_center(p["center"], built, ns[-1])
    power = p.get("iterate_power")
    report = local_escape_experiment(g, x, ns, hitting=bool(p.get("hitting")), workers=threads)
    result = report.to_json()
    result["gibbs_markov_theta"] = gibbs_markov_theta(g, x) if report.period is not None else None
    if power is not None and report.period is not None:
        it = local_escape_iterate(g, x, ns, p=None if power == "auto" else int(power), workers=threads)
        result["iterate"] = it.to_json()
    return {"local_escape.csv": report.to_csv()}, result, report.warnings


def _ball_escape(resolved, built, g, threads):
    p = resolved["parameters"]
    report = ball_escape_experiment(built.map, p["center"]["x"], p["r_sequence"], w=float(p["w"]), g=g)
    result = report.to_json()
    result["final_bracket"] = list(report.final_bracket)
    return {"ball_escape.csv": report.to_csv()}, result, report.warnings


def _extremal_index(resolved, built, g, threads):
    p = resolved["parameters"]
    ns = _n_values(p)
    x = parse_center(p["center"], built, ns[-1])
    x.validate(g.sft)
    if minimal_period(x) is None:
        raise PreconditionError("parameters.center: extremal index needs a periodic point")
    theta = extremal_index_analytic(g, x)
    rows = [(n, extremal_index_empirical(g, x, n), theta) for n in ns]
    result = {
        "theta_analytic": theta,
        "gibbs_markov_theta": gibbs_markov_theta(g, x),
        "rows": [{"n": n, "theta_empirical": e} for n, e, _ in rows],
    }
    warnings = [THETA_GE_HALF] if theta >= 0.5 else []
    result["warnings"] = warnings
    return {"extremal_index.csv": _csv(["n", "theta_empirical", "theta_analytic"], rows)}, result, warnings


def _hitting(resolved, built, g, threads):
    p = resolved["parameters"]
    ns = _n_values(p)
    x = parse_center(p["center"], built, ns[-1])
    x.validate(g.sft)
    rows = []
    for n in ns:
        U = CylinderSet.cylinder(g.sft, cylinder_of_point(x, n))
        mu = measure_of_set(g, U)
        s = int(p["s"]) if p.get("s") is not None else s_of_n(mu)
        rows.append((n, mu, s, hitting_ratio(g, Hole(U), s)))
    result = {"rows": [dict(zip(("n", "mu", "s", "ratio"), r)) for r in rows]}
    if minimal_period(x) is not None:
        result["theta_analytic"] = extremal_index_analytic(g, x)
    return {"hitting.csv": _csv(["n", "mu", "s", "ratio"], rows)}, result, []


def _phi(resolved, built, g, threads):
    p = resolved["parameters"]
    ks = list(range(1, int(p["k_max"]) + 1))
    est = [phi_coefficient(g, int(p["n_max"]), int(p["j_max"]), k, over=p["over"]) for k in ks]
    rows = [(e.k, e.value) for e in est]
    result = {
        "over": p["over"],
        "rows": [e.to_json() for e in est],
        "fitted_ratio": fit_decay_ratio(ks, [e.value for e in est]),
        "spectral_ratio": g.second_eigenvalue_ratio(),
    }
    return {"phi.csv": _csv(["k", "phi"], rows)}, result, []


def _survival(resolved, built, g, threads):
    p = resolved["parameters"]
    spec = p["hole"]
    if "words" in spec:
        words = [built.sft.parse_word(str(w)) for w in spec["words"]]
        depth = int(spec.get("depth", max(len(w) for w in words)))
        U = CylinderSet(g.sft, depth, words)
    elif "center" in spec and "n" in spec:
        n = int(spec["n"])
        U = CylinderSet.cylinder(g.sft, cylinder_of_point(parse_center(spec["center"], built, n), n))
    else:
        raise ConfigError("parameters.hole: expected {words[, depth]} or {center, n}")
    hole = Hole(U)
    T = int(p["T"])
    exact = survival_exact(g, hole, T)
    rate = escape_rate_spectral(g, hole)
    N = int(p.get("N") or 0)
    header = ["t", "exact"]
    cols = [exact.times, exact.values]
    result = {"escape": rate.to_json(), "T": T}
    if N > 0:
        mc = survival_mc(g, hole, T, N, seed=int(p["seed"]), workers=threads)
        header += ["mc", "ci_lo", "ci_hi"]
        cols += [mc.values, mc.ci_low, mc.ci_high]
        inside = (exact.values >= mc.ci_low - 1e-15) & (exact.values <= mc.ci_high + 1e-15)
        result["mc_coverage"] = float(inside.mean())
    rows = [[int(c[0])] + [float(v) for v in c[1:]] for c in zip(*cols)]
    return {"survival.csv": _csv(header, rows)}, result, list(rate.warnings)


RUNNERS = {
    "local-escape": _local_escape,
    "ball-escape": _ball_escape,
    "extremal-index": _extremal_index,
    "hitting": _hitting,
    "phi": _phi,
    "survival": _survival,
}


def run(resolved: dict, output: str | Path | None = None, threads: int = 1) -> dict:
    """Execute a resolved config and write its artifacts; returns the report."""
    built = build_system(resolved)
    g = gibbs_state(built.sft, built.potential)
    started = time.perf_counter()
    files, result, warnings = RUNNERS[resolved["experiment"]](resolved, built, g, threads)
    elapsed = time.perf_counter() - started
    report = _clean(
        {
            "version": __version__,
            "config": resolved,
            "pressure": g.pressure,
            "result": result,
            "warnings": sorted(set(warnings)),
        }
    )
    out = Path(output if output is not None else resolved["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    formats = resolved["output"]["formats"]
    if "csv" in formats:
        for name, text in files.items():
            (out / name).write_text(text)
    if "json" in formats:
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    meta = {
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": elapsed,
        "threads": threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return report


def _threads_default() -> int:
    env = os.environ.get("ESCAPE_LAB_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"ESCAPE_LAB_THREADS: expected an integer, got {env!r}") from None


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="escape-lab", description="Localized escape rates of open dynamical systems.")
    ap.add_argument("--version", action="version", version=f"escape-lab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file (JSON/TOML) or a preset")
    r.add_argument("config")
    r.add_argument("--output", "-o", help="output directory (overrides the config)")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default $ESCAPE_LAB_THREADS or 1)")
    r.add_argument("--seed", type=int, default=None, help="override parameters.seed")
    r.add_argument("--strict", action="store_true", help="exit 4 when theta >= 1/2 at a periodic center")
    sub.add_parser("presets", help="list the preset catalog")
    d = sub.add_parser("describe", help="print the resolved config of a preset")
    d.add_argument("preset")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name, text in list_presets().items():
                print(f"{name:28s} {text}")
            return EXIT_OK
        if args.command == "describe":
            print(json.dumps(_clean(describe(args.preset)), indent=2, sort_keys=True))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.setdefault("parameters", {})["seed"] = args.seed
        resolved = resolve(cfg)
        threads = args.threads if args.threads is not None else _threads_default()
        if threads < 1:
            raise ConfigError("--threads: must be >= 1")
        report = run(resolved, args.output, threads)
    except (ConfigError, DomainError, PreconditionError) as exc:
        print(f"escape-lab: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ResourceError, MemoryError) as exc:
        print(f"escape-lab: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalError as exc:
        print(f"escape-lab: numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return 1
    summary = report["result"].get("rho_limit")
    if summary is not None:
        print(f"rho_limit = {summary!r}")
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if args.strict and THETA_GE_HALF in report["warnings"] and resolved["experiment"] == "local-escape":
        return EXIT_STRICT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
