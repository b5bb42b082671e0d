"""Command-line interface: ``ncgeom <command> --config cfg.json``.

Reports are canonical JSON (sorted keys, shortest round-trip floats,
complex numbers as [re, im]); wall time goes to stderr so the JSON stays
byte-identical across runs.  Results are cached by config digest, tool
version and command options under ``$NCGEOM_CACHE_DIR`` (default
``.ncgeom-cache/``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InputError, NCGeomError, SchemaError

COMMANDS = ("clifford", "riemann", "spectrum", "invariants", "finsler", "extremize", "selfcheck")
EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class Report:
    config_hash: str
    tool_version: str
    command: str
    payload: dict
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    cache_hit: bool = False

    def canonical(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "command": self.command,
            "payload": self.payload,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------- serialization


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def emit(report: Report, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (canonical_dumps(report.canonical()) + "\n").encode()
    if fmt == "csv":
        table = report.payload.get("table")
        if table is None:
            raise UsageError(f"command {report.command!r} has no tabular payload; use --format json")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table["header"])
        for row in table["rows"]:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue().encode()
    raise UsageError(f"unknown format {fmt!r}")


def density_table(grid, density: np.ndarray) -> dict:
    """Rows x1..xn followed by re_ij, im_ij for every matrix entry (1-based ij)."""
    n, N = grid.n, density.shape[-1]
    x = grid.coords().reshape(n, -1).T
    flat = density.reshape(-1, N, N)
    header = [f"x{i + 1}" for i in range(n)]
    for i in range(N):
        for j in range(N):
            header += [f"re_{i + 1}{j + 1}", f"im_{i + 1}{j + 1}"]
    rows = []
    for p in range(len(x)):
        row = [float(v) for v in x[p]]
        for i in range(N):
            for j in range(N):
                row += [float(flat[p, i, j].real), float(flat[p, i, j].imag)]
        rows.append(row)
    return {"header": header, "rows": rows}


def eigenvalue_table(eigs) -> dict:
    return {"header": ["index", "lambda_squared"], "rows": [[i, float(v)] for i, v in enumerate(eigs)]}


# ---------------------------------------------------------------- commands


def cmd_clifford(cfg, opts) -> dict:
    from .clifford import clifford_report

    p = cfg.params("clifford")
    dim = opts.dim or p.get("dim") or cfg.n
    return clifford_report(dim, check=p.get("check", True), seed=cfg.data["seed"])


def cmd_riemann(cfg, opts) -> dict:
    from .action import einstein_residual
    from .riemann import commutative_invariants, scalar_curvature

    metric = cfg.base_metric
    order = cfg.quadrature.stencil_order
    R = scalar_curvature(metric, order)
    A0, A1 = commutative_invariants(metric, cfg.rep.N, order)
    lam = cfg.params("riemann")["Lambda"]
    resid = einstein_residual(metric, lam, order)
    table = {"header": [f"x{i + 1}" for i in range(cfg.n)] + ["R", "sqrt_g"], "rows": []}
    x = cfg.grid.coords().reshape(cfg.n, -1).T
    for p, (r, s) in enumerate(zip(R.ravel(), metric.sqrt_g.ravel())):
        table["rows"].append([float(v) for v in x[p]] + [float(r), float(s)])
    return {
        "A0": A0,
        "A1": A1,
        "volume": float(cfg.grid.integrate(metric.sqrt_g)),
        "integral_R_dvol": float(cfg.grid.integrate(R * metric.sqrt_g)),
        "max_abs_R": float(np.abs(R).max()),
        "einstein_residual_max": float(np.abs(resid).max()),
        "Lambda": lam,
        "table": table,
    }


def cmd_spectrum(cfg, opts) -> dict:
    from .riemann import flat_torus_spectrum, heat_trace, heat_trace_tail_bound, index_supertrace

    p = cfg.params("spectrum")
    ts = p["t"]
    if opts.nc:
        from .operators import dirac_spectra, nc_index, paired_nonzero_spectra

        f = cfg.fields
        order = cfg.quadrature.stencil_order
        sp = dirac_spectra(f, order, p["cap"])
        scale = (2 * np.pi / min(cfg.grid.lengths)) ** 2
        out = {
            "source": "dense-lattice",
            "pairing_residual": paired_nonzero_spectra(sp["DbarD"], sp["DDbar"], scale),
            "adjoint_mismatch": sp["adjoint_mismatch"],
            "symmetrization_defects": sp["defects"],
            "self_adjointness_defect": sp["self_adjointness_defect"],
            "heat_trace": {repr(t): float(np.sum(np.exp(-t * sp["DbarD"]))) for t in ts},
        }
        try:
            out["index"] = nc_index(f, order, p["cap"])
        except NCGeomError as exc:
            out["index_error"] = str(exc)
        out["table"] = eigenvalue_table(sp["DbarD"])
        return out
    base = cfg.data["base_metric"]
    if base["kind"] != "flat" or base["sigma"] or "g0" in base:
        raise ConfigError("the analytic spectrum needs a flat base metric; use --nc for the lattice operator")
    spec = flat_torus_spectrum(cfg.grid.lengths, cfg.rep.N, p["K"], cfg.twist)
    n = cfg.n
    out = {
        "source": spec.source,
        "cutoff_momentum": spec.cutoff_momentum,
        "heat_trace": {repr(t): heat_trace(spec, t) for t in ts},
        "scaled_heat_trace": {repr(t): (4 * np.pi * t) ** (n / 2) * heat_trace(spec, t) for t in ts},
        "tail_bound": {repr(t): heat_trace_tail_bound(spec, t) for t in ts},
        "table": eigenvalue_table(spec.eigenvalues),
    }
    if spec.chirality_labels is not None:
        out["supertrace"] = {repr(t): index_supertrace(spec, t) for t in ts}
    return out


def cmd_invariants(cfg, opts) -> dict:
    from .heat import global_invariants, heat_trace_crosscheck

    p = cfg.params("invariants")
    f = cfg.fields
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = global_invariants(f, quad=cfg.quadrature, refine=opts.refine, with_a1=p["with_a1"])
        out = {"A0": rep.A0, "A1": rep.A1, "provenance": rep.provenance, "diagnostics": rep.diagnostics}
        if opts.crosscheck:
            out["crosscheck"] = heat_trace_crosscheck(f, p["t_list"], p["cap"], cfg.quadrature.stencil_order, rep)
    out["warnings"] = [str(w.message) for w in caught]
    if p["density"] == "a1" and not p["with_a1"]:
        raise ConfigError("density 'a1' requested with with_a1 = false")
    density = rep.a1_density if p["density"] == "a1" else rep.a0_density
    out["table"] = density_table(cfg.grid, density)
    return out


def cmd_finsler(cfg, opts) -> dict:
    from .finsler import finsler_identity_table, sample_points

    p = cfg.params("finsler")
    directions = opts.directions or p["directions"]
    pts = sample_points(cfg.grid, p["points"])
    tab = finsler_identity_table(cfg.fields, directions, pts, p["fd_step"])
    keys = ["point", "direction", "branch", "multiplicity", "homogeneity", "h_identity",
            "gradient_identity", "degree0", "roundtrip", "inverse", "min_metric_eigenvalue", "gap"]
    header = [f"x{i + 1}_index" for i in range(cfg.n)] + keys[1:]
    rows = [list(r["point"]) + [r[k] for k in keys[1:]] for r in tab["rows"]]
    return {
        "max_residuals": tab["max_residuals"],
        "samples": len(tab["rows"]),
        "skipped": tab["skipped"],
        "table": {"header": header, "rows": rows},
    }


def cmd_extremize(cfg, opts) -> dict:
    from .action import EHObjective, ExtremizeOptions, extremize

    p = cfg.params("extremize")
    model, theta0 = cfg.field_model()
    if model.size == 0:
        raise ConfigError("extremize needs at least one parameter slot")
    mu = p["penalty_mu"] if opts.penalty_mu is None else opts.penalty_mu
    objective = EHObjective(model, p["G"], p["Lambda"], cfg.quadrature, mu, p["fd_step"])
    options = ExtremizeOptions(max_iters=p["max_iters"] if opts.max_iters is None else opts.max_iters,
                               tol_g=p.get("tol_g"))
    res = extremize(objective, theta0, options)
    rep = res.report
    return {
        "theta": res.theta,
        "S": res.S,
        "A0": rep.A0,
        "A1": rep.A1,
        "status": res.status,
        "history": res.history,
        "table": {
            "header": ["iteration", "S", "grad_norm"],
            "rows": [[h["iteration"], h["S"], h["grad_norm"]] for h in res.history],
        },
    }


def cmd_selfcheck(cfg, opts) -> dict:
    from .selfcheck import run_selfcheck

    return run_selfcheck(cfg)


DISPATCH = {
    "clifford": cmd_clifford,
    "riemann": cmd_riemann,
    "spectrum": cmd_spectrum,
    "invariants": cmd_invariants,
    "finsler": cmd_finsler,
    "extremize": cmd_extremize,
    "selfcheck": cmd_selfcheck,
}


# ---------------------------------------------------------------- cache


def cache_dir() -> Path:
    return Path(os.environ.get("NCGEOM_CACHE_DIR", ".ncgeom-cache"))


def cache_key(cfg, command: str, opts) -> str:
    import hashlib

    options = {k: getattr(opts, k, None) for k in ("dim", "nc", "refine", "crosscheck", "directions",
                                                   "max_iters", "penalty_mu")}
    blob = canonical_dumps({"config": cfg.digest, "version": __version__, "command": command, "options": options})
    return hashlib.sha256(blob.encode()).hexdigest()


def cache_load(key: str):
    path = cache_dir() / f"{key}.json"
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        return None
    except (OSError, ValueError) as exc:
        warnings.warn(f"cache read failed ({exc}); recomputing")
        return None


def cache_store(key: str, payload: dict):
    d = cache_dir()
    try:
        d.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            fh.write(canonical_dumps(payload))
        os.replace(tmp, d / f"{key}.json")
    except OSError as exc:
        warnings.warn(f"cache write failed ({exc}); continuing without cache")


def run_command(cfg, command: str, opts=None, use_cache: bool = True) -> Report:
    if command not in DISPATCH:
        raise UsageError(f"unknown command {command!r}")
    opts = opts if opts is not None else default_options()
    start = time.perf_counter()
    key = cache_key(cfg, command, opts)
    cached = cache_load(key) if use_cache else None
    if cached is not None:
        return Report(cfg.digest, __version__, command, cached["payload"], cached["diagnostics"],
                      time.perf_counter() - start, cache_hit=True)
    payload = to_jsonable(DISPATCH[command](cfg, opts))
    diagnostics = payload.pop("diagnostics", {}) if isinstance(payload.get("diagnostics"), dict) else {}
    report = Report(cfg.digest, __version__, command, payload, diagnostics, time.perf_counter() - start)
    if use_cache:
        cache_store(key, {"payload": payload, "diagnostics": diagnostics})
    return report


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncgeom", description="Matrix-geometry Dirac operators and heat invariants")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name not in ("clifford", "selfcheck"))
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--no-cache", action="store_true")
        p.add_argument("--output", help="write the report here instead of stdout")
        if name == "clifford":
            p.add_argument("--dim", type=int)
        if name == "spectrum":
            p.add_argument("--nc", action="store_true", help="dense lattice operator instead of Fourier modes")
        if name == "invariants":
            p.add_argument("--refine", action="store_true")
            p.add_argument("--crosscheck", action="store_true")
        if name == "finsler":
            p.add_argument("--directions", type=int)
        if name == "extremize":
            p.add_argument("--max-iters", type=int, dest="max_iters")
            p.add_argument("--penalty-mu", type=float, dest="penalty_mu")
    return parser


def default_options() -> argparse.Namespace:
    return argparse.Namespace(dim=None, nc=False, refine=False, crosscheck=False, directions=None,
                              max_iters=None, penalty_mu=None)


def _resolve_config(args):
    from .config import RunConfig, load_config

    if args.config:
        return load_config(args.config)
    dim = getattr(args, "dim", None) or 2
    return RunConfig.from_dict({"manifold": {"n": dim, "sizes": [8]}})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = default_options()
    for k, v in vars(args).items():
        setattr(opts, k, v)
    try:
        cfg = _resolve_config(args)
    except SchemaError as exc:
        for pointer, msg in exc.errors:
            print(f"config error at {pointer or '/'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_command(cfg, args.command, opts, use_cache=not args.no_cache)
        data = emit(report, args.format)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, InputError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NCGeomError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    if args.output:
        Path(args.output).write_bytes(data)
    else:
        try:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
        except BrokenPipeError:
            devnull = os.open(os.devnull, os.O_WRONLY)
            os.dup2(devnull, sys.stdout.fileno())
    status = "cache hit" if report.cache_hit else "computed"
    print(f"{args.command}: {status} in {report.wall_time:.3f} s", file=sys.stderr)
    if args.command == "selfcheck" and not report.payload.get("all_passed", False):
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
