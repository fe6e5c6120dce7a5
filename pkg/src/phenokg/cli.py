"""Command-line interface.

Each pipeline stage is a subcommand that reads earlier artifacts from the
output directory; ``run`` executes them all and then writes the report.

Exit codes: 0 success, 1 invalid configuration or input, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import DEFAULT_CONFIG, BACKEND_MODES, PipelineConfig, load_config
from .errors import PhenoKGError, StageError, ValidationError
from .pipeline import (
    STAGES,
    Run,
    make_transport,
    match_records,
    online_context,
    read_states,
    run_pipeline,
    run_stage,
)

logger = logging.getLogger("phenokg")

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=DEFAULT_CONFIG, help="pipeline config (default: bundled synthetic dataset)")
    common.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    common.add_argument("--backend", choices=BACKEND_MODES, default=None, help="literature/LLM backend mode")
    common.add_argument("--fixtures", type=Path, default=None, help="fixture directory; implies --backend fixtures")
    common.add_argument("--record", type=Path, default=None, help="write every backend response into this fixture directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="phenokg", description="Phenotype-driven knowledge-graph expansion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    p = sub.add_parser("run", parents=[common], help="run every stage, then the report")
    p.add_argument("--resume", action="store_true", help="skip stages whose artifacts are intact")
    sub.add_parser("report", parents=[common], help="write tables and charts for a completed run")
    p = sub.add_parser("match", parents=[common], help="match new states against the learned phenotypes")
    p.add_argument("--input", type=Path, required=True, help="CSV of new states with the training columns")
    p.add_argument("--output", type=Path, default=None, help="also write the decisions to this JSONL file")
    return parser


def _configure(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError(f"--seed: expected a nonnegative integer, got {args.seed}")
        cfg.seed = args.seed
        cfg.raw["seed"] = args.seed
    backend = cfg.backend
    if args.fixtures is not None:
        backend = replace(backend, mode="fixtures", fixtures=args.fixtures)
    elif args.backend is not None:
        backend = replace(backend, mode=args.backend)
    cfg.backend = backend
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _run(cfg: PipelineConfig, args: argparse.Namespace) -> Run:
    return Run(cfg, cfg.output_dir, make_transport(cfg, args.record))


def write_report_stage(run: Run) -> None:
    from .report import write_report

    man = run.load_manifest()
    t0 = time.perf_counter()
    paths = write_report(run)
    if man is not None:
        man.stages["report"] = {
            "completed": True,
            "seconds": round(time.perf_counter() - t0, 3),
            "artifacts": run.checksums(paths),
        }
        run.save_manifest(man)


def cmd_match(run: Run, args: argparse.Namespace) -> None:
    ctx = online_context(run)
    records = read_states(args.input)
    rows = match_records(ctx, records, prefix=f"{args.input.stem}:")
    lines = [json.dumps(r, sort_keys=True) + "\n" for r in rows]
    log = run.out / "online" / "decisions.jsonl"
    log.parent.mkdir(parents=True, exist_ok=True)
    with log.open("a", encoding="utf-8") as fh:
        fh.writelines(lines)
    if args.output is not None:
        args.output.write_text("".join(lines), encoding="utf-8")
    sys.stdout.writelines(lines)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _configure(args)
        run = _run(cfg, args)
        if args.command == "run":
            run.out.mkdir(parents=True, exist_ok=True)
            man = run_pipeline(cfg, resume=args.resume, transport=run.transport, out=run.out)
            write_report_stage(run)
            print(f"run complete: {len(man.artifacts())} artifacts in {run.out}")
        elif args.command == "report":
            write_report_stage(run)
        elif args.command == "match":
            cmd_match(run, args)
        else:
            run.out.mkdir(parents=True, exist_ok=True)
            run_stage(run, args.command)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"stage failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except PhenoKGError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
