"""Command-line front end.

Subcommands: ``solve``, ``response``, ``constants``, ``validate`` and
``lattice-info``.  Exit status is 0 on success, 1 on a domain failure and 2
on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import resource
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import check_conditions, constants_table, inequality_suite
from .exceptions import BDFError
from .lattice import DensityField, LatticeSpec, build_lattice, c_norm
from .operators import load_operator, save_operator
from .response import response_table
from .scf import PRECONDITIONERS, SCHEMES, SolverConfig, SourceSpec, solve

__all__ = ["ConfigError", "load_config", "run", "main"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

TRACE_COLUMNS = [
    "iter",
    "x_increment",
    "energy_total",
    "energy_kinetic",
    "energy_direct",
    "energy_exchange",
    "charge",
    "min_abs_eig",
]
RESPONSE_COLUMNS = ["k_abs", "lambda", "B_1d", "B_3d", "rel_diff"]
CHECKPOINT_Q = "q.bin"
CHECKPOINT_RHO = "rho_prime.npy"

# key: (type check, default); a default of ``None`` marks a required key.
_CONFIG_KEYS = {
    "alpha": ("number", None),
    "lambda": ("number", None),
    "grid.points_per_axis": ("int", None),
    "grid.spacing": ("number", None),
    "source.profile": ("str", "gaussian"),
    "source.z": ("number", 1.0),
    "source.sigma": ("number", 1.0),
    "scheme": ("str", "preconditioned"),
    "exchange": ("bool", True),
    "tol": ("number", 1e-8),
    "max_iter": ("int", 200),
    "gap_tol": ("number", 1e-6),
    "seed": ("int", 0),
    "verify_samples": ("int", 100),
    "preconditioner": ("str", "lattice"),
}


class ConfigError(ValueError):
    """Malformed or inconsistent solver configuration."""


def _flatten(obj, prefix=""):
    out = {}
    for key, val in obj.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        else:
            out[name] = val
    return out


def _check_type(key, kind, val):
    ok = {
        "number": isinstance(val, (int, float)) and not isinstance(val, bool),
        "int": isinstance(val, int) and not isinstance(val, bool),
        "bool": isinstance(val, bool),
        "str": isinstance(val, str),
    }[kind]
    if not ok:
        raise ConfigError(f"config key {key!r} must be of type {kind}, got {val!r}")


def resolve_config(raw):
    """Validate a configuration mapping and fill in defaults.

    Keys may be given flat (``"grid.spacing"``) or nested
    (``{"grid": {"spacing": ...}}``).

    Returns
    -------
    dict
        Flat mapping with every known key.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    resolved = {}
    for key, (kind, default) in _CONFIG_KEYS.items():
        if key in flat:
            _check_type(key, kind, flat[key])
            resolved[key] = flat[key]
        elif default is None:
            raise ConfigError(f"missing required config key {key!r}")
        else:
            resolved[key] = default
    if resolved["scheme"] not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}")
    if resolved["preconditioner"] not in PRECONDITIONERS:
        raise ConfigError(f"preconditioner must be one of {PRECONDITIONERS}")
    return resolved


def build_solver_config(resolved):
    """Turn a resolved flat mapping into a validated :class:`SolverConfig`."""
    spec = LatticeSpec(
        resolved["grid.points_per_axis"], float(resolved["grid.spacing"]), float(resolved["lambda"])
    )
    source = SourceSpec(
        resolved["source.profile"], float(resolved["source.z"]), float(resolved["source.sigma"])
    )
    config = SolverConfig(
        alpha=float(resolved["alpha"]),
        lattice=spec,
        source=source,
        scheme=resolved["scheme"],
        preconditioner=resolved["preconditioner"],
        exchange=resolved["exchange"],
        tol=float(resolved["tol"]),
        max_iter=resolved["max_iter"],
        gap_tol=float(resolved["gap_tol"]),
        verify_samples=resolved["verify_samples"],
        seed=resolved["seed"],
    )
    try:
        return config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    """Read, validate and resolve a JSON solver configuration.

    Returns
    -------
    config : SolverConfig
    resolved : dict
    """
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config JSON: {exc}") from exc
    resolved = resolve_config(raw)
    return build_solver_config(resolved), resolved


def _clean(obj):
    """Make ``obj`` strictly JSON-serialisable; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, complex):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    return obj


def _write_json(path, payload):
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})


class _Run:
    """Bookkeeping for one subcommand: outputs, timing, printing."""

    def __init__(self, name, args):
        self.name = name
        self.args = args
        self.out = Path(args.out)
        self.outputs = []
        self.inputs = []
        self.config = {}
        self.start = time.perf_counter()

    def path(self, filename):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / filename
        self.outputs.append(str(p))
        return p

    def say(self, text=""):
        if not self.args.quiet:
            print(text)

    def finish(self, status):
        manifest = {
            "subcommand": self.name,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": __version__,
            "exit_status": status,
            "wall_seconds": time.perf_counter() - self.start,
            # ru_maxrss is in kibibytes on Linux.
            "peak_rss_mib": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        _write_json(self.out / "manifest.json", manifest)
        return status


def certificate_for(config, n):
    """Certificate at ``b = 2 sqrt(pi) alpha ||n||_C``, kept away from zero."""
    n_norm = c_norm(n)
    b = max(2.0 * math.sqrt(math.pi) * config.alpha * n_norm, 1e-12)
    return check_conditions(config.alpha, config.lattice.cutoff, n_norm, b)


def _cmd_solve(run, args):
    config, resolved = load_config(args.config)
    run.inputs.append(str(args.config))
    run.config = resolved
    lattice = build_lattice(config.lattice)
    n = config.source.density(lattice)
    initial = None
    if args.restart:
        rdir = Path(args.restart)
        try:
            q0 = load_operator(rdir / CHECKPOINT_Q, lattice)
            rho0 = DensityField(lattice, np.load(rdir / CHECKPOINT_RHO))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot restore checkpoint: {exc}") from exc
        initial = (q0, rho0)
        run.inputs += [str(rdir / CHECKPOINT_Q), str(rdir / CHECKPOINT_RHO)]

    callback = None
    if args.checkpoint:
        cdir = Path(args.checkpoint)
        cdir.mkdir(parents=True, exist_ok=True)

        def callback(rec, q, rho):
            save_operator(q, cdir / CHECKPOINT_Q)
            np.save(cdir / CHECKPOINT_RHO, rho.values)

    report = solve(config, lattice, n, initial=initial, callback=callback)
    if args.checkpoint:
        run.outputs += [str(Path(args.checkpoint) / CHECKPOINT_Q), str(Path(args.checkpoint) / CHECKPOINT_RHO)]
    cert = certificate_for(config, n)

    _write_csv(run.path("trace.csv"), TRACE_COLUMNS, [r.to_row() for r in report.records])
    payload = {
        "config": resolved,
        "lattice": lattice.info(),
        "summary": report.summary(),
        "diagnostics": report.diagnostics,
        "source_c_norm": c_norm(n),
        "certificate": cert.to_dict(),
    }
    _write_json(run.path("report.json"), payload)

    summary = report.summary()
    run.say(f"verdict: {report.verdict} after {report.iterations} iterations")
    if report.records:
        run.say(f"final increment: {summary['final_increment']:.3e}")
        run.say(f"energy: {summary['energy']['total']:.12e}")
        run.say(f"charge: {summary['charge']:.3e}")
    if report.diagnostics:
        run.say(f"verification passed: {report.diagnostics.get('passed')}")
    run.say(f"certificate passed: {cert.passed} (b = {cert.b:.3e})")

    if not report.converged:
        logger.error("solver stopped: %s", report.message)
        return EXIT_DOMAIN
    if args.require_certificate and not cert.passed:
        logger.error("certificate conditions not met")
        return EXIT_DOMAIN
    return EXIT_OK


def _cmd_response(run, args):
    run.config = {"lambda": args.cutoff, "kmax": args.kmax, "points": args.points, "method": args.method}
    try:
        table = response_table(args.cutoff, args.kmax, args.points, args.method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = list(table.rows())
    _write_csv(run.path("response.csv"), RESPONSE_COLUMNS, rows)
    run.say(f"{'k_abs':>10} {'B_1d':>14} {'B_3d':>14} {'rel_diff':>10}")
    for r in rows:
        run.say(f"{r['k_abs']:10.4f} {r['B_1d']:14.8e} {r['B_3d']:14.8e} {r['rel_diff']:10.2e}")
    return EXIT_OK


def _cmd_constants(run, args):
    run.config = {"lambda": args.cutoff, "alpha": args.alpha, "n_norm": args.n_norm, "b": args.b}
    try:
        table = constants_table(args.cutoff)
        cert = check_conditions(args.alpha, args.cutoff, args.n_norm, args.b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_json(run.path("constants.json"), {"constants": table.to_dict(), "certificate": cert.to_dict()})
    for key in ("C_inf", "C_6", "C_R", "C_M", "kappa_1", "kappa_2", "kappa_3", "kappa_4", "kappa_sqrt_K"):
        run.say(f"{key:>14} = {getattr(table, key):.10g}")
    run.say(f"{'alpha_b':>14} = {cert.alpha_b:.6g}")
    run.say(f"certificate passed: {cert.passed}")
    return EXIT_OK


def _cmd_validate(run, args):
    run.config = {"samples": args.samples, "kernels": args.kernels, "seed": args.seed}
    if args.samples < 1 or args.kernels < 0:
        raise ConfigError("samples must be positive and kernels non-negative")
    result = inequality_suite(args.samples, args.kernels, seed=args.seed)
    _write_json(run.path("validate.json"), result)
    run.say(f"{'check':<24} {'samples':>8} {'failures':>8} {'worst_ratio':>12}")
    for name, check in result["checks"].items():
        run.say(f"{name:<24} {check['samples']:>8} {check['failures']:>8} {check['worst_ratio']:>12.6g}")
    run.say(f"all passed: {result['passed']}")
    return EXIT_OK if result["passed"] else EXIT_DOMAIN


def _cmd_lattice_info(run, args):
    if args.config:
        config, _ = load_config(args.config)
        spec = config.lattice
        run.inputs.append(str(args.config))
    else:
        if args.points_per_axis is None or args.spacing is None or args.cutoff is None:
            raise ConfigError("give --config or all of --points-per-axis, --spacing, --lambda")
        spec = LatticeSpec(args.points_per_axis, args.spacing, args.cutoff)
    try:
        info = build_lattice(spec).info()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run.config = spec.to_dict()
    if not args.quiet:
        print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="bdfvac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="self-consistent vacuum for a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--require-certificate", action="store_true",
                   help="exit 1 when the sufficient conditions fail")
    p.add_argument("--checkpoint", help="directory receiving the latest iterate")
    p.add_argument("--restart", help="directory holding a checkpoint to start from")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("response", parents=[common], help="tabulate the response function")
    p.add_argument("--lambda", dest="cutoff", type=float, required=True)
    p.add_argument("--kmax", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--method", choices=("1d", "3d", "both"), default="both")
    p.set_defaults(func=_cmd_response)

    p = sub.add_parser("constants", parents=[common], help="constants table and certificate")
    p.add_argument("--lambda", dest="cutoff", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=1 / 137.036)
    p.add_argument("--n-norm", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.5)
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("validate", parents=[common], help="random-sample inequality suite")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--kernels", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("lattice-info", parents=[common], help="describe a momentum lattice")
    p.add_argument("--config")
    p.add_argument("--points-per-axis", type=int)
    p.add_argument("--spacing", type=float)
    p.add_argument("--lambda", dest="cutoff", type=float)
    p.set_defaults(func=_cmd_lattice_info)
    return parser


def run(argv=None):
    """Parse ``argv`` and execute one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    job = _Run(args.command, args)
    try:
        status = args.func(job, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return job.finish(EXIT_USAGE)
    except BDFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return job.finish(EXIT_DOMAIN)
    return job.finish(status)


def main(argv=None):
    sys.exit(run(argv))
