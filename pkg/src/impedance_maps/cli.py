"""Command-line experiment runner.

Exit codes: 0 success, 1 invalid configuration (nothing is solved),
2 threshold violation under ``--check``, 3 downstream failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from pathlib import Path
from typing import Sequence

from . import __version__, config, io
from .errors import ConfigInvalid, ImpedanceMapsError
from .experiments import EXPERIMENTS, ExperimentResult

log = logging.getLogger("impedance_maps")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_DOWNSTREAM = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        doc = (EXPERIMENTS[name].__doc__ or "").strip()
        s = sub.add_parser(name, help=doc.splitlines()[0] if doc else None)
        src = s.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="TOML configuration (packaged default if omitted)")
        src.add_argument("--preset", help="packaged configuration by name, e.g. composite-witness")
        s.add_argument("--out", type=Path, help="output directory (default: results/<experiment>)")
        s.add_argument("--check", action="store_true", help="exit 2 if any acceptance threshold fails")
        s.add_argument("--jobs", type=int, default=1, help="worker cap for independent solves")
        s.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    return p


def resolve(experiment: str, path: Path | None, seed: int | None, preset: str | None = None) -> dict:
    if path is not None:
        raw = config.load(path)
    else:
        raw = config.preset(preset or experiment)
    if seed is not None:
        raw["seed"] = seed
    return config.validate(experiment, raw)


def write_outputs(out: Path, cfg: dict, result: ExperimentResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    summary = {
        "experiment": result.experiment,
        "anchor": result.anchor,
        "version": __version__,
        "config": cfg,
        "summary": result.summary,
        "checks": [c.as_dict() for c in result.checks],
        "passed": result.passed,
        "records": result.records,
    }
    io.write_json(out / "summary.json", summary)
    io.write_json(out / "config.json", cfg)
    io.write_csv(out / "records.csv", result.records)
    field = result.artifacts.get("field")
    if field is not None:
        io.write_field(out / "field.impl", field)
        io.write_csv(out / "field.csv", io.field_rows(field))


def _error(out: Path, kind: str, message: str, cfg: dict | None) -> None:
    payload = {"error": kind, "message": message, "version": __version__}
    if cfg is not None:
        payload["config"] = cfg
    try:
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "error.json", payload)
    except OSError:
        pass
    sys.stderr.write(f"error: {kind}: {message}\n")


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("IMPL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or Path("results") / args.experiment
    try:
        cfg = resolve(args.experiment, args.config, args.seed, args.preset)
    except ConfigInvalid as exc:
        _error(out, "ConfigInvalid", str(exc), None)
        return EXIT_CONFIG
    if args.out is None and "out" in cfg:
        out = Path(cfg["out"])
    if args.jobs < 1:
        _error(out, "ConfigInvalid", "--jobs must be >= 1", cfg)
        return EXIT_CONFIG
    try:
        result = EXPERIMENTS[args.experiment](cfg, jobs=args.jobs)
    except ImpedanceMapsError as exc:
        _error(out, type(exc).__name__, str(exc), cfg)
        return EXIT_DOWNSTREAM
    except Exception as exc:  # anything the numerics raise is a downstream failure
        log.debug("%s", traceback.format_exc())
        _error(out, type(exc).__name__, str(exc), cfg)
        return EXIT_DOWNSTREAM
    write_outputs(out, cfg, result)
    for c in result.checks:
        log.info("%s %s: %s", "PASS" if c.passed else "FAIL", c.name, c.detail)
    print(f"{result.experiment}: {sum(c.passed for c in result.checks)}/{len(result.checks)} checks passed -> {out}")
    if args.check and not result.passed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
