"""Command-line entry point: ``ddisac --experiment KIND [--config PATH] ...``.

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures (a ``failure.json`` with the last solver state is written to the
output directory).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import KINDS, load_config
from .errors import ConfigError, DdIsacError, NonConvergenceError
from .experiments import run_experiment, write_outputs

log = logging.getLogger("ddisac")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddisac", description="Run DD-domain ISAC precoding experiments.")
    p.add_argument("--config", metavar="PATH", help="YAML experiment file (defaults apply when omitted)")
    p.add_argument("--experiment", metavar="KIND", choices=KINDS, help="experiment kind: " + ", ".join(KINDS))
    p.add_argument("--seed", metavar="U64", type=_u64, help="base seed for channels and noise")
    p.add_argument("--output", metavar="DIR", help="directory for CSV files and the manifest")
    p.add_argument("--realizations", metavar="N", type=_positive, help="number of channel realizations")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    return obj


def _dump_failure(out: Path, exc: Exception) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NonConvergenceError):
        payload["state"] = _jsonable(exc.state)
        payload["history"] = _jsonable(exc.history)
    path = out / "failure.json"
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    try:
        spec = load_config(args.config, kind=args.experiment)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.output is not None:
            overrides["output"] = args.output
        if args.realizations is not None:
            overrides["channel_realizations"] = args.realizations
        spec = dataclasses.replace(spec, **overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    out = Path(spec.output)
    log.info("running %s with %d realization(s), seed %d", spec.kind, spec.channel_realizations, spec.seed)
    started = time.time()
    t0 = time.perf_counter()
    try:
        result = run_experiment(spec, log=log.info)
    except (DdIsacError, ArithmeticError, np.linalg.LinAlgError) as exc:
        path = _dump_failure(out, exc)
        log.error("numerical failure: %s (state written to %s)", exc, path)
        return EXIT_NUMERICAL
    manifest = write_outputs(result, spec, out, wall_clock=time.perf_counter() - t0, started=started)
    log.info("wrote %d rows (%d flagged) to %s", manifest["rows"], manifest["flagged_rows"], out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
