"""Command-line front end.

Every command writes its artifacts and a ``manifest.json`` into one run
directory. Errors exit nonzero and leave an ``error.json`` report carrying a
machine-readable ``code``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .continuation import DEFAULT_ORDER, FrcPointSet, trace_frc
from .errors import InputValidationError, MevSindyError
from .ghb import CandidateLibrary
from .metrics import score_report
from .model import PRESETS, IdentifiedModel, simulate
from .pod import read_snapshots, reduce
from .series import ForcingConfig, read_timeseries, write_timeseries
from .sparse import RegressionConfig

CONFIG_ENV = "MEVSINDY_CONFIG"

# training defaults per preset: (omega_f, duration, dt)
PRESET_DEFAULTS = {
    "table1": (1.999, 1000.0, 0.01),
    "linear": (1.999, 1000.0, 0.01),
    "beam": (0.551, 2000.0, 0.05),
    "mirror": (0.183841, 40000.0, 0.2),
}
CUSTOM_DEFAULTS = (1.0, 1000.0, 0.01)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputValidationError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    return [int(v) for v in _floats(text)]


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputValidationError(f"cannot read {what} {path}: {exc}") from None


def load_config(path=None):
    """Run configuration from ``path``, else from ``$MEVSINDY_CONFIG``, else empty.

    The file may hold regression settings at top level or split into
    ``"regression"`` and ``"library"`` sections.
    """
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}, None
    cfg = _load_json(path, "config")
    if not isinstance(cfg, dict):
        raise InputValidationError("config must be a JSON object")
    return cfg, str(path)


def _split_config(cfg):
    if "regression" in cfg or "library" in cfg:
        return dict(cfg.get("regression", {})), cfg.get("library")
    return dict(cfg), None


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out, command, inputs=(), config=None, library=None, params=None, seed=None):
    """``manifest.json`` describing the run that produced ``out``."""
    manifest = {
        "command": command,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "config": config or {},
        "library": library,
        "parameters": params or {},
        "seed": seed,
        "tool_version": __version__,
    }
    _write_json(Path(out) / "manifest.json", manifest)
    return manifest


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands --------------------------------------------------------------------

def _resolve_model(name):
    if name in PRESETS:
        return PRESETS[name](), PRESET_DEFAULTS.get(name, CUSTOM_DEFAULTS)
    p = Path(name)
    if not p.exists():
        raise InputValidationError(f"unknown preset or missing model file {name!r}")
    return IdentifiedModel.from_dict(_load_json(p, "model")), CUSTOM_DEFAULTS


def cmd_generate(args):
    model, (omega_f, duration, dt) = _resolve_model(args.preset)
    omega_f = args.omega_f if args.omega_f is not None else omega_f
    duration = args.duration if args.duration is not None else duration
    dt = args.dt if args.dt is not None else dt
    x0 = _floats(args.x0) if args.x0 else [0.0] * (2 * model.dims)
    forcing = ForcingConfig(args.beta, omega_f)
    ts = simulate(model, forcing, x0, duration, dt)
    out = _outdir(args.out)
    write_timeseries(ts, out / "trajectory.csv")
    params = {"preset": args.preset, "beta": args.beta, "omega_f": omega_f, "x0": x0,
              "duration": duration, "dt": dt}
    inputs = [args.preset] if args.preset not in PRESETS else []
    write_manifest(out, "generate", inputs, params=params, seed=None)
    return {"trajectory": str(out / "trajectory.csv")}


def cmd_identify(args):
    from .pipeline import identify_model

    cfg, cfg_path = load_config(args.config)
    reg, lib = _split_config(cfg)
    if args.library:
        lib = _load_json(args.library, "library spec")
    if args.lam is not None:
        reg["lam"] = args.lam
    config = RegressionConfig.from_dict(reg)
    series = [read_timeseries(p) for p in args.data]
    orders = _ints(args.orders) if args.orders else None
    channels = _ints(args.channels) if args.channels else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, report = identify_model(series, channels, lib, config, orders)
    report["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    report["library"] = CandidateLibrary.from_spec(1, 0, lib).spec
    out = _outdir(args.out)
    model.save(out / "model.json")
    _write_json(out / "report.json", report)
    inputs = list(args.data) + [p for p in (cfg_path, args.library) if p]
    write_manifest(out, "identify", inputs, config=config.to_dict(), library=lib,
                   params={"orders": orders, "channels": channels})
    return {"model": str(out / "model.json"), "report": str(out / "report.json")}


def _frc_job(payload):
    model_dict, beta, omega_range, ds0, channel, order, max_points = payload
    model = IdentifiedModel.from_dict(model_dict)
    frc = trace_frc(model, beta, omega_range, ds0, channel, order, max_points)
    return frc


def cmd_frc(args):
    if args.model in PRESETS:
        model_dict = PRESETS[args.model]().to_dict()
    else:
        model_dict = _load_json(args.model, "model")
        IdentifiedModel.from_dict(model_dict)  # validate before fanning out
    betas = _floats(args.beta)
    omega_range = _floats(args.omega_range)
    if len(omega_range) != 2 or not omega_range[0] < omega_range[1]:
        raise InputValidationError("--omega-range needs 'lo,hi' with lo < hi")
    if not betas:
        raise InputValidationError("--beta needs at least one value")
    payloads = [(model_dict, b, tuple(omega_range), args.ds0, args.channel, args.order,
                 args.max_points) for b in betas]
    jobs = max(1, min(args.jobs, len(betas)))
    if jobs == 1:
        results = [_frc_job(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_frc_job, payloads))
    out = _outdir(args.out)
    files = []
    for b, frc in zip(betas, results):
        path = out / f"frc_beta_{b:g}.csv"
        frc.write(path)
        files.append(str(path))
    write_manifest(out, "frc", [] if args.model in PRESETS else [args.model],
                   params={"model": args.model, "beta": betas, "omega_range": omega_range, "ds0": args.ds0,
                           "channel": args.channel, "order": args.order,
                           "max_points": args.max_points})
    return {"frc": files}


def cmd_score(args):
    frc = FrcPointSet.read(args.frc)
    ref = FrcPointSet.read(args.frc_ref)
    report = score_report(frc, ref)
    report["success"] = bool(report["mcdrc"] < args.threshold)
    report["threshold"] = args.threshold
    out = _outdir(args.out)
    _write_json(out / "score.json", report)
    write_manifest(out, "score", [args.frc, args.frc_ref], params={"threshold": args.threshold})
    return report


def cmd_pod(args):
    x = read_snapshots(args.snapshots)
    basis, reduced = reduce(x, args.k_hat)
    out = _outdir(args.out)
    basis.save(out / "basis.npz")
    write_timeseries(reduced, out / "reduced.csv")
    write_manifest(out, "pod", [args.snapshots], params={"k_hat": args.k_hat})
    return {"basis": str(out / "basis.npz"), "reduced": str(out / "reduced.csv"),
            "truncation_error": float(basis.truncation_error())}


# -- argument parsing --------------------------------------------------------------

def build_parser():
    p = _Parser(prog="mevsindy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"mevsindy {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a preset or model JSON")
    g.add_argument("preset", help=f"one of {sorted(PRESETS)} or a model JSON path")
    g.add_argument("--beta", type=float, default=0.5)
    g.add_argument("--omega-f", type=float, default=None)
    g.add_argument("--x0", default=None, help="comma-separated initial displacements then velocities")
    g.add_argument("--duration", type=float, default=None)
    g.add_argument("--dt", type=float, default=None)
    g.add_argument("--out", default="run")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("identify", help="identify a model from trajectory CSVs")
    i.add_argument("data", nargs="+")
    i.add_argument("--library", default=None, help="library spec JSON")
    i.add_argument("--config", default=None, help=f"config JSON (default: ${CONFIG_ENV})")
    i.add_argument("--orders", default=None, help="harmonic orders, e.g. 0,1")
    i.add_argument("--channels", default=None, help="channels to identify, e.g. 0")
    i.add_argument("--lambda", dest="lam", type=float, default=None)
    i.add_argument("--out", default="run")
    i.set_defaults(func=cmd_identify)

    f = sub.add_parser("frc", help="trace frequency-response curves")
    f.add_argument("model", help=f"model JSON or one of {sorted(PRESETS)}")
    f.add_argument("--beta", required=True, help="comma-separated load multipliers")
    f.add_argument("--omega-range", required=True, help="lo,hi")
    f.add_argument("--ds0", type=float, default=0.01)
    f.add_argument("--channel", type=int, default=0)
    f.add_argument("--order", type=int, default=DEFAULT_ORDER)
    f.add_argument("--max-points", type=int, default=2000)
    f.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    f.add_argument("--out", default="run")
    f.set_defaults(func=cmd_frc)

    s = sub.add_parser("score", help="MCDRC of an FRC against a reference")
    s.add_argument("frc")
    s.add_argument("frc_ref")
    s.add_argument("--threshold", type=float, default=0.1)
    s.add_argument("--out", default="run")
    s.set_defaults(func=cmd_score)

    d = sub.add_parser("pod", help="POD reduction of a snapshot file")
    d.add_argument("snapshots")
    d.add_argument("--k-hat", type=int, required=True)
    d.add_argument("--out", default="run")
    d.set_defaults(func=cmd_pod)
    return p


def _error_report(exc):
    code = getattr(exc, "code", None)
    if not isinstance(code, str):
        code = "io_error" if isinstance(exc, OSError) else "internal_error"
    return {"status": "error", "code": code, "type": type(exc).__name__, "message": str(exc)}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    out = None
    try:
        args = build_parser().parse_args(argv)
        out = getattr(args, "out", None)
        result = args.func(args)
    except (MevSindyError, OSError, ValueError, KeyError) as exc:
        report = _error_report(exc)
        if out is not None:
            try:
                _write_json(_outdir(out) / "error.json", report)
            except OSError:
                pass
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, MevSindyError) else 1
    print(json.dumps({"status": "ok", **_jsonable(result)}, sort_keys=True))
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


if __name__ == "__main__":
    sys.exit(main())
