"""Command-line front end: ``reachcert {check,synth,simulate,experiment}``.

Exit codes: 0 success / not excluded, 2 target excluded or not reachable,
1 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from reachcert.bloch import SuperOpMatrix
from reachcert.criteria import DEFAULT_TOL, compute_bounds, full_report
from reachcert.dynamics import expm, propagate
from reachcert.errors import NotReachableError, ReachCertError
from reachcert.models import GeneratorSpec, from_descriptor, gad, lindbladian, parse_descriptor
from reachcert.search import (
    LAMBDA_T,
    lambda_skew_point,
    majorization_boundary,
    reachability_experiment,
)
from reachcert.synth import synthesize_unital_qubit

log = logging.getLogger("reachcert")

EXIT_OK, EXIT_ERROR, EXIT_EXCLUDED = 0, 1, 2
SCHEMA = 1

GAD_SAMPLE_HEADER = [
    "p", "index", "seed", "det_verdict", "eq5_verdict", "eq6_verdict", "eq7_verdict_n2", "excluded",
    "optimized_distance",
]
GAD_SUMMARY_HEADER = [
    "p", "samples", "excluded_fraction", "det_fraction", "eq5_fraction", "eq6_fraction", "eq7_fraction",
    "optimized", "reached_fraction",
]
LAMBDA_HEADER = ["skew", "eq5_verdict", "eq6_verdict", "optimized_distance", "boundary_skew"]


class InputError(ReachCertError):
    pass


# -- input parsing ------------------------------------------------------------------


def _load_json_source(text: str):
    """Inline JSON, a JSON file, or ``None`` when ``text`` is a descriptor."""
    text = text.strip()
    if text.startswith("{") or text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed JSON: {exc}") from exc
    looks_like_path = text.endswith(".json") or os.sep in text
    if looks_like_path or os.path.isfile(text):
        try:
            with open(text) as fh:
                return json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"no such file: {text}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed JSON in {text}: {exc}") from exc
    return None


def _desc_time(desc: dict) -> float | None:
    for key in ("t", "time"):
        if key in desc:
            return float(desc[key])
    return None


def parse_drift(text: str) -> GeneratorSpec:
    """``family:params``, a generator JSON, or ``{"segments": [{"duration", "generator"}]}``."""
    if not text:
        raise InputError("--drift is required")
    data = _load_json_source(text)
    if data is None:
        desc = parse_descriptor(text)
        return GeneratorSpec.constant(lindbladian(from_descriptor(desc)), _desc_time(desc) or 1.0)
    if isinstance(data, dict) and "segments" in data:
        try:
            segs = [(float(s["duration"]), SuperOpMatrix.from_dict(s["generator"])) for s in data["segments"]]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed segment list: {exc}") from exc
        return GeneratorSpec(tuple(segs))
    if isinstance(data, dict) and "mat" in data:
        G = SuperOpMatrix.from_dict({**data, "kind": "generator"})
        return GeneratorSpec.constant(G, float(data.get("t", 1.0)))
    if isinstance(data, dict) and "family" in data:
        return GeneratorSpec.constant(lindbladian(from_descriptor(data)), _desc_time(data) or 1.0)
    raise InputError("unrecognized drift description")


def parse_target(text: str) -> SuperOpMatrix:
    """A channel JSON, or ``family:params,t=...`` meaning ``exp(G t)``."""
    data = _load_json_source(text)
    if data is None:
        data = parse_descriptor(text)
    if isinstance(data, dict) and "mat" in data:
        return SuperOpMatrix.from_dict({**data, "kind": "channel"})
    if isinstance(data, dict) and "family" in data:
        t = _desc_time(data)
        if t is None:
            raise InputError("target descriptor needs a time, e.g. 'dephasing:gamma=1,t=0.5'")
        G = lindbladian(from_descriptor(data))
        return SuperOpMatrix(G.d, expm(G.mat * t), "channel")
    raise InputError("unrecognized target description")


def parse_generator_target(text: str) -> tuple[SuperOpMatrix, float]:
    data = _load_json_source(text)
    if data is None:
        data = parse_descriptor(text)
    if not isinstance(data, dict):
        raise InputError("target must be an object")
    t = _desc_time(data)
    if t is None:
        raise InputError("synthesis target needs a time t")
    if "mat" in data:
        return SuperOpMatrix.from_dict({**data, "kind": "generator"}), t
    return lindbladian(from_descriptor(data)), t


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from exc


# -- output -------------------------------------------------------------------------


def _prepare_out(path: str | None) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _emit(payload: dict, out: Path | None, name: str):
    text = json.dumps(payload, indent=2, default=_json_default)
    if out is None:
        print(text)
    else:
        (out / name).write_text(text + "\n")
        log.info("wrote %s", out / name)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _fmt(x) -> str:
    return repr(float(x))


def _read_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _append_rows(path: Path, header: list[str], rows: list[list]):
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        if new:
            writer.writerow(header)
        writer.writerows(rows)
        fh.flush()


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(rows)


# -- commands -----------------------------------------------------------------------


def cmd_check(args) -> int:
    out = _prepare_out(args.out)
    drift = parse_drift(args.drift)
    target = parse_target(args.target)
    report = full_report(target, drift, tol=args.tol)
    payload = report.to_dict()
    _emit(payload, out, "report.json")
    return EXIT_OK if report.overall else EXIT_EXCLUDED


def cmd_synth(args) -> int:
    out = _prepare_out(args.out)
    drift = parse_drift(args.drift)
    if len(drift.segments) != 1:
        raise InputError("synthesis needs a time-independent drift")
    Lprime, t = parse_generator_target(args.target)
    try:
        result = synthesize_unital_qubit(drift.generators[0], Lprime, t, tol=args.tol)
    except NotReachableError as exc:
        _emit({"schema": SCHEMA, "reachable": False, "reason": str(exc)}, out, "schedule.json")
        return EXIT_EXCLUDED
    _emit({**result.to_dict(), "reachable": True}, out, "schedule.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _prepare_out(args.out)
    drift = parse_drift(args.drift)
    if args.time is not None:
        drift = GeneratorSpec(tuple(drift.pieces(args.time)))
    controls = None
    if args.controls:
        data = _load_json_source(args.controls)
        if not isinstance(data, list):
            raise InputError("controls must be a JSON list of {duration, H_real, H_imag}")
        try:
            controls = [
                (float(c["duration"]), np.asarray(c["H_real"], float) + 1j * np.asarray(c.get("H_imag", 0.0), float))
                for c in data
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed control entry: {exc}") from exc
    channel = propagate(drift, controls, dt_max=args.dt)
    _emit({"schema": SCHEMA, "total_time": drift.total_time, **channel.to_dict()}, out, "channel.json")
    return EXIT_OK


def _gad_sweep(args, out: Path) -> int:
    desc = parse_descriptor(args.drift) if args.drift else {"family": "gad", "gamma": 1.0}
    if desc.get("family") != "gad":
        raise InputError("gad-sweep needs a gad drift")
    gamma = float(desc.get("gamma", 1.0))
    purities = _float_list(args.purities)
    samples_path = out / "gad_samples.csv"
    existing = _read_rows(samples_path)
    summary = []
    for p in purities:
        G = lindbladian(gad(gamma, p))
        done = [r for r in existing if float(r["p"]) == p]
        start = len(done)
        optimized = sum(1 for r in done if r["optimized_distance"] != "")
        bounds = compute_bounds(GeneratorSpec.constant(G, 1.0)) if start < args.samples else None
        for lo in range(start, args.samples, args.chunk):
            hi = min(args.samples, lo + args.chunk)
            rec = reachability_experiment(
                G, hi, rng_seed=args.seed, start=lo, jobs=args.jobs, bounds=bounds,
                optimize_count=max(0, args.optimize - optimized), max_iters=args.max_iters,
            )
            optimized += sum(not np.isnan(s.optimized_distance) for s in rec.samples)
            _append_rows(samples_path, GAD_SAMPLE_HEADER, [[_fmt(p), *s.row()] for s in rec.samples])
            log.info("p=%g: samples %d..%d written", p, lo, hi - 1)
        rows = [r for r in _read_rows(samples_path) if float(r["p"]) == p][: args.samples]
        summary.append(_summary_row(p, rows))
    _write_csv(out / "gad_summary.csv", GAD_SUMMARY_HEADER, summary)
    return EXIT_OK


def _summary_row(p: float, rows: list[dict]) -> list:
    n = len(rows)
    frac = lambda pred: _fmt(sum(1 for r in rows if pred(r)) / n) if n else ""
    dists = [float(r["optimized_distance"]) for r in rows if r["optimized_distance"] != ""]
    reached = _fmt(np.mean([x <= 1e-3 for x in dists])) if dists else ""
    return [
        _fmt(p), n,
        frac(lambda r: r["excluded"] == "1"),
        frac(lambda r: r["det_verdict"] == "fail"),
        frac(lambda r: r["eq5_verdict"] == "fail"),
        frac(lambda r: r["eq6_verdict"] == "fail"),
        frac(lambda r: r["eq7_verdict_n2"] == "fail"),
        len(dists), reached,
    ]


def _lambda_skew(args, out: Path) -> int:
    desc = parse_descriptor(args.drift) if args.drift else {"family": "lambda", "skew": 10.0}
    if desc.get("family") != "lambda" or "skew" not in desc:
        raise InputError("lambda-skew needs a drift like 'lambda:skew=10'")
    drift_skew = float(desc["skew"])
    skews = _float_list(args.skews)
    boundary = majorization_boundary(drift_skew, LAMBDA_T)
    path = out / "lambda_skew.csv"
    done = {float(r["skew"]) for r in _read_rows(path)}
    for k, s in enumerate(skews):
        if s in done:
            continue
        rec = lambda_skew_point(s, drift_skew, LAMBDA_T, n_slices=args.slices, max_iters=args.max_iters,
                                rng_seed=args.seed + k)
        _append_rows(path, LAMBDA_HEADER, [[_fmt(s), rec.eq5_verdict, rec.eq6_verdict,
                                             _fmt(rec.optimized_distance), _fmt(boundary)]])
        log.info("skew %g: distance %.3e", s, rec.optimized_distance)
    return EXIT_OK


def cmd_experiment(args) -> int:
    out = _prepare_out(args.out or ".")
    if args.samples < 0 or args.chunk < 1:
        raise InputError("sample counts must be positive")
    if args.family == "gad-sweep":
        return _gad_sweep(args, out)
    return _lambda_skew(args, out)


# -- entry point --------------------------------------------------------------------


def _positive_float(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); exit 2 is reserved for excluded targets."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reachcert", description="Reachability certificates for controlled open quantum systems.")
    common = _Parser(add_help=False)
    common.add_argument("--drift", help="drift: 'family:key=val,...' or JSON (inline or file)")
    common.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", help="output directory (stdout if omitted)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", parents=[common], help="run the necessary reachability conditions")
    p.add_argument("--target", required=True, help="channel JSON or 'family:params,t=...'")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", parents=[common], help="unital-qubit control synthesis")
    p.add_argument("--target", required=True, help="target generator 'family:params,t=...'")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", parents=[common], help="propagate a drift with optional controls")
    p.add_argument("--time", type=_positive_float)
    p.add_argument("--controls", help="JSON list of {duration, H_real, H_imag}")
    p.add_argument("--dt", type=_positive_float, default=1e-2)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", parents=[common], help="ensemble experiments written as CSV")
    p.add_argument("family", choices=["gad-sweep", "lambda-skew"])
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--purities", default="0.5,0.625,0.75,0.875,1.0")
    p.add_argument("--optimize", type=int, default=0, help="optimizer runs per purity on non-excluded samples")
    p.add_argument("--skews", default=",".join(str(k) for k in range(1, 21)))
    p.add_argument("--slices", type=int, default=64)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--chunk", type=int, default=50, help="samples per appended CSV block")
    p.set_defaults(func=cmd_experiment)
    return parser


def _configure_logging():
    level = os.environ.get("REACH_CERT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (ReachCertError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
