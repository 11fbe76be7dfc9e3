"""Command-line entry points: plan, refine, evaluate, render-prompts."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .config import BACKEND_KINDS, PipelineConfig
from .errors import DexGraspError
from .pipeline import TaskSpec, build_backend, cmd_evaluate, cmd_plan, cmd_refine, cmd_render_prompts

log = logging.getLogger("dexgrasp")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="pipeline config JSON")
    p.add_argument("--backend", choices=BACKEND_KINDS, help="reasoner backend for every stage")
    p.add_argument("--responses", type=Path, help="canned responses or transcript for the fixture backend")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--out-dir", type=Path, help="output directory (default ./out, or the results dir for evaluate)")
    p.add_argument("--force-point-level", action="store_true", help="always run point-level contact inference")
    p.add_argument("--skip-point-level", action="store_true", help="never run point-level contact inference")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dexgrasp", description="Task-oriented dexterous grasp synthesis.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the full pipeline on one or more tasks")
    p.add_argument("tasks", nargs="+", help="task JSON files or fixture:NAME")
    p.add_argument("--jobs", type=int, default=1, help="tasks run in parallel")
    p.add_argument("--no-eval", action="store_true", help="skip metrics")
    _common(p)

    p = sub.add_parser("refine", help="refinement only, from a saved initial grasp")
    p.add_argument("task", help="task JSON file or fixture:NAME")
    p.add_argument("--initial", type=Path, help="initial grasp JSON (a pose or a result file)")
    p.add_argument("--contacts", type=Path, required=True, help="contact set JSON (or a result file)")
    p.add_argument("--ablation-initial", action="store_true",
                   help="ignore --initial: random rotation, contact-region centre, extended fingers")
    _common(p)

    p = sub.add_parser("evaluate", help="recompute metrics for planned tasks and write tables")
    p.add_argument("results_dir", type=Path)
    p.add_argument("tasks", nargs="+")
    p.add_argument("--jobs", type=int, default=1)
    _common(p)

    p = sub.add_parser("render-prompts", help="write the visual prompts for a task")
    p.add_argument("task")
    _common(p)
    return parser


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.backend is not None:
        cfg = replace(cfg, backend=replace(cfg.backend, default=args.backend, stages={}))
    if args.responses is not None:
        cfg = replace(cfg, backend=replace(cfg.backend, fixture_path=str(args.responses)))
    if args.force_point_level or args.skip_point_level:
        cfg = replace(cfg, contact=replace(cfg.contact, force_point_level=args.force_point_level,
                                           skip_point_level=args.skip_point_level))
    return cfg


def _plan_one(task_ref: str, cfg: PipelineConfig, out_dir: Path, evaluate: bool) -> Tuple[int, str]:
    """Exit code and the summary (or error) line for one task."""
    try:
        task = TaskSpec.load(task_ref)
        res = cmd_plan(task, cfg, out_dir / task.name, evaluate=evaluate)
    except DexGraspError as exc:
        return exc.exit_code, f"error: {task_ref}: {exc}"
    line = f"{task.name}: direction={res.selections['direction']} type={res.selections['grasp_type']}"
    line += f" rotation={res.selections['rotation']} energy={res.energy['total']:.4f}"
    if res.metrics is not None:
        line += f" p_dep={res.metrics.p_dep_cm:.3f}cm"
    return 0, line


def _run_plan(args, cfg) -> int:
    n = len(args.tasks)
    if args.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_plan_one, args.tasks, [cfg] * n, [args.out_dir] * n,
                                     [not args.no_eval] * n))
    else:
        outcomes = [_plan_one(t, cfg, args.out_dir, not args.no_eval) for t in args.tasks]
    for code, line in outcomes:
        print(line, file=sys.stderr if code else sys.stdout)
    return next((c for c, _ in outcomes if c), 0)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.out_dir is None and args.command != "evaluate":
        args.out_dir = Path("out")
    try:
        cfg = load_config(args)
        if args.command == "plan":
            return _run_plan(args, cfg)
        if args.command == "refine":
            task = TaskSpec.load(args.task)
            res = cmd_refine(args.initial, args.contacts, task, cfg, args.out_dir, ablation=args.ablation_initial)
            print(f"{task.name}: energy {res.initial_energy['total']:.4f} -> {res.energy['total']:.4f}")
            return 0
        if args.command == "evaluate":
            tasks: List[TaskSpec] = [TaskSpec.load(t) for t in args.tasks]
            csv_path, json_path = cmd_evaluate(args.results_dir, tasks, cfg, args.out_dir)
            print(f"wrote {csv_path} and {json_path}")
            return 0
        if args.command == "render-prompts":
            task = TaskSpec.load(args.task)
            backend = build_backend(cfg)
            for path in cmd_render_prompts(task, cfg, args.out_dir, backend):
                print(path)
            return 0
    except DexGraspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 2


if __name__ == "__main__":
    sys.exit(main())
