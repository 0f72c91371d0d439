"""Command-line surface: run, resume, report, export-best."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .evodb import DbConfig, EvolutionDatabase, read_checkpoint
from .orchestrator import (
    RUN_CHECKPOINT_FORMAT,
    RunConfig,
    read_trajectory,
    report,
    resume,
    run,
)
from .research import ResearchConfig


def _load_config_file(path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def _build_run_config(args) -> RunConfig:
    overrides = _load_config_file(args.config) if args.config else {}
    db = DbConfig(**overrides.pop("db", {}))
    research_table = overrides.pop("research", {})
    for key in ("early_weights", "late_weights"):
        if key in research_table:
            research_table[key] = tuple(research_table[key])
    research = ResearchConfig(**research_table)
    routing = overrides.pop("routing", None)

    instructions = args.instructions or overrides.pop("instructions", "")
    if args.instructions_file:
        instructions = Path(args.instructions_file).read_text(encoding="utf-8")

    kwargs = dict(
        problem_dir=args.problem,
        initial_dir=args.initial,
        initial_description=args.initial_desc,
        max_iterations=args.iterations,
        instructions=instructions,
        mode=args.mode,
        fixtures_dir=args.fixtures,
        checkpoint_dir=args.checkpoint_dir,
        db=db,
        research=research,
        routing=routing,
        debug_budget=args.debug_budget,
        seed=args.seed,
    )
    if args.timeout is not None:
        kwargs["timeout_override"] = args.timeout
    for key, value in overrides.items():
        if key in RunConfig.__dataclass_fields__ and key not in kwargs:
            kwargs[key] = value
    return RunConfig(**kwargs)


def _print_result(result) -> None:
    print(report(result.trajectory, result.database,
                 usage=result.gateway.usage_report()))
    print(f"Best program: {result.best.id} "
          f"(score {result.best.score:.4f})")
    print(f"Trajectory written to {result.trajectory_path}")
    print(f"Checkpoint written to {result.checkpoint_path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="evoloop",
        description="Feedback-driven algorithm discovery loop",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the evolution loop from scratch")
    p_run.add_argument("--problem", required=True, help="problem directory")
    p_run.add_argument("--initial", required=True, help="initial algorithm directory")
    p_run.add_argument("--initial-desc", default=None,
                       help="algorithm description file (default: <initial>/algorithm.md)")
    p_run.add_argument("--iterations", type=int, required=True, help="K, number of iterations")
    p_run.add_argument("--mode", choices=("live", "record", "replay"), default="live")
    p_run.add_argument("--checkpoint-dir", default="checkpoints")
    p_run.add_argument("--fixtures", default=None, help="fixture directory (record/replay)")
    p_run.add_argument("--debug-budget", type=int, default=5)
    p_run.add_argument("--config", default=None, help="TOML config with overrides")
    p_run.add_argument("--instructions", default=None, help="user instructions text")
    p_run.add_argument("--instructions-file", default=None)
    p_run.add_argument("--timeout", type=float, default=None,
                       help="override the problem's evaluation timeout (seconds)")
    p_run.add_argument("--seed", type=int, default=0)

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    p_resume.add_argument("--checkpoint", required=True, help="run checkpoint file")

    p_report = sub.add_parser("report", help="summarize a trajectory file")
    p_report.add_argument("--trajectory", required=True)

    p_export = sub.add_parser("export-best", help="write the best program's files")
    p_export.add_argument("--checkpoint", required=True, help="run checkpoint file")
    p_export.add_argument("--out", required=True, help="output directory")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "run":
        result = run(_build_run_config(args))
        _print_result(result)
        return 0

    if args.command == "resume":
        result = resume(args.checkpoint)
        _print_result(result)
        return 0

    if args.command == "report":
        rows = read_trajectory(args.trajectory)
        print(report(rows))
        return 0

    if args.command == "export-best":
        payload = read_checkpoint(args.checkpoint, RUN_CHECKPOINT_FORMAT)
        db = EvolutionDatabase.from_payload(payload["db"])
        best = db.best_program()
        out = Path(args.out)
        for rel, content in best.files.items():
            target = out / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")
        (out / "algorithm.md").write_text(
            f"# Summary\n\n{best.description.summary}\n\n"
            f"# Motivation\n\n{best.description.motivation}\n\n"
            f"# Pseudo-code\n\n{best.description.pseudo_code}\n\n"
            f"# Performance\n\n{best.score}\n",
            encoding="utf-8",
        )
        print(f"Exported {best.id} (score {best.score:.4f}, "
              f"{len(best.files)} files) to {out}")
        return 0

    parser.error(f"unknown command {args.command!r}")  # pragma: no cover
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
