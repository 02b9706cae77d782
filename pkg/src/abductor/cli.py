"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (flags, config, scenario or trace
files), 2 runtime failure. Output files are staged and only committed once
the whole command has succeeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

from . import graph as G
from .control import TransitionParams
from .engine import Ablation, RunConfig, replay, run_episode
from .errors import AbductorError, CorruptTrace, ParseError, ValidationError
from .evaluation import audit, findings_json, greedy_baseline, judge, metrics_csv, run_batch, sweep
from .generator import corpus, generate
from .scenario import Scenario, load, load_many
from .trace import EpisodeTrace

log = logging.getLogger("abductor")

CONFIG_KEYS = {
    "seed": int,
    "delta": float,
    "eta": int,
    "max_iterations": int,
    "expert_budget": int,
    "ablate": list,
    "cognition": str,
    "out": str,
    "jobs": int,
    "remote_timeout": float,
    "remote_retries": int,
}
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "delta": 0.2,
    "eta": 2,
    "max_iterations": 3,
    "expert_budget": 3,
    "ablate": [],
    "cognition": "oracle",
    "out": "out",
    "jobs": 1,
    "remote_timeout": 60.0,
    "remote_retries": 2,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


class _Outputs:
    """Collects files to write; nothing touches disk until ``commit``."""

    def __init__(self) -> None:
        self.files: dict[Path, str] = {}

    def add(self, path: Path, text: str) -> None:
        self.files[path] = text

    def commit(self) -> None:
        staged: list[tuple[str, Path]] = []
        try:
            for path, text in self.files.items():
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(text)
                staged.append((tmp, path))
        except OSError:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, path in staged:
            os.replace(tmp, path)


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run options (override --config)")
    g.add_argument("--config", help="JSON file whose keys mirror these flags")
    g.add_argument("--seed", type=int)
    g.add_argument("--delta", type=float, help="confidence gap for drill-down")
    g.add_argument("--eta", type=int, help="minimum supporting evidence for drill-down")
    g.add_argument("--max-iterations", type=int, dest="max_iterations")
    g.add_argument("--expert-budget", type=int, dest="expert_budget")
    g.add_argument("--ablate", action="append", choices=[a.value for a in Ablation])
    g.add_argument("--cognition", choices=["oracle", "remote"])
    g.add_argument("--out", help="output directory")
    g.add_argument("--ignore-scenario-budgets", action="store_true",
                   help="use the flags even when a scenario carries its own budgets")
    g.add_argument("-v", "--verbose", action="store_true")


def _corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenarios", nargs="+", help="scenario files or directories")
    p.add_argument("--generate", type=int, metavar="N", help="generate N scenarios from --seed onward")
    p.add_argument("--misleading", action="store_true")
    p.add_argument("--max-depth", type=int, default=3, dest="max_depth")
    p.add_argument("--max-branching", type=int, default=3, dest="max_branching")
    p.add_argument("--jobs", type=int)
    p.add_argument("--baseline", choices=["greedy"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="abductor", description="Abductive root-cause reasoning engine")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one episode and print its report")
    p.add_argument("--scenario", required=True, help="scenario file or bundled name")
    p.add_argument("--baseline", choices=["greedy"])
    _common(p)

    p = sub.add_parser("batch", help="run many episodes and write a metrics CSV")
    _corpus_args(p)
    p.add_argument("--csv", help="metrics file (default <out>/metrics.csv)")
    _common(p)

    p = sub.add_parser("generate", help="write synthetic scenario files")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--misleading", action="store_true")
    p.add_argument("--count", type=int, default=1)
    _common(p)

    p = sub.add_parser("sweep", help="delta x eta sensitivity grid")
    _corpus_args(p)
    p.add_argument("--deltas", default="0.2", help="comma-separated gap thresholds")
    p.add_argument("--etas", default="1,2,3,4", help="comma-separated support thresholds")
    p.add_argument("--csv", help="metrics file (default <out>/sweep.csv)")
    _common(p)

    p = sub.add_parser("audit", help="run the error-taxonomy detectors over a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--output", help="findings file (default <out>/audit.json)")
    _common(p)

    p = sub.add_parser("replay", help="rebuild the final belief graph from a trace")
    p.add_argument("--trace", required=True)
    _common(p)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    _common(p)
    return parser


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    merged = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in data.items():
            kind = CONFIG_KEYS.get(key)
            if kind is None:
                raise UsageError(f"unknown config key {key!r}")
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, kind) or isinstance(value, bool):
                raise UsageError(f"config key {key!r} must be {kind.__name__}")
            merged[key] = value
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _run_config(st: dict[str, Any], args: argparse.Namespace) -> RunConfig:
    try:
        params = TransitionParams(
            gap_delta=st["delta"],
            min_support=st["eta"],
            max_iterations=st["max_iterations"],
            expert_budget=st["expert_budget"],
        )
        if params.min_support < 1:
            raise ValueError("eta must be >= 1")
        return RunConfig(
            params=params,
            ablations=frozenset(Ablation(a) for a in st["ablate"]),
            seed=st["seed"],
            cognition=st["cognition"],
            honor_scenario_budgets=not args.ignore_scenario_budgets,
            remote_timeout=st["remote_timeout"],
            remote_retries=st["remote_retries"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _scenarios(args: argparse.Namespace, st: dict[str, Any]) -> list[Scenario]:
    if bool(args.scenarios) == bool(args.generate):
        raise UsageError("give exactly one of --scenarios or --generate")
    if args.generate:
        if args.generate < 1:
            raise UsageError("--generate needs a positive count")
        seeds = range(st["seed"], st["seed"] + args.generate)
        return corpus(seeds, args.misleading, args.max_depth, args.max_branching)
    return load_many(args.scenarios)


def _cmd_run(args, st, cfg, out: _Outputs) -> int:
    sc = load(args.scenario)
    result = greedy_baseline(sc, cfg) if args.baseline else run_episode(sc, cfg)
    verdict = judge(result.report, sc)
    outdir = Path(st["out"])
    stem = result.trace.episode_id.replace("#", "_")
    out.add(outdir / f"{stem}.trace.jsonl", result.trace.to_jsonl())
    report = {
        "episode_id": result.trace.episode_id,
        "scenario_id": sc.id,
        "prediction": result.report.prediction,
        "narrative": result.report.narrative,
        "score": verdict.score,
        "terminated": result.terminated,
        "iterations": result.state.iteration,
        "level": result.state.level,
    }
    out.add(outdir / f"{stem}.report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"prediction: {result.report.prediction}")
    print(result.report.narrative)
    print(f"score: {verdict.score}  iterations: {result.state.iteration}  terminated: {result.terminated}")
    return 0


def _cmd_batch(args, st, cfg, out: _Outputs) -> int:
    scenarios = _scenarios(args, st)
    runner = greedy_baseline if args.baseline else run_episode
    label = f"greedy {cfg.label()}" if args.baseline else None
    row = run_batch(scenarios, cfg, parallelism=max(1, st["jobs"]), runner=runner, label=label)
    text = metrics_csv([row])
    out.add(Path(args.csv) if args.csv else Path(st["out"]) / "metrics.csv", text)
    sys.stdout.write(text)
    return 0


def _cmd_sweep(args, st, cfg, out: _Outputs) -> int:
    try:
        deltas = [float(x) for x in args.deltas.split(",") if x.strip()]
        etas = [int(x) for x in args.etas.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid: {exc}") from exc
    if not deltas or not etas:
        raise UsageError("sweep grids must be non-empty")
    rows = sweep(_scenarios(args, st), deltas, etas, cfg, parallelism=max(1, st["jobs"]))
    text = metrics_csv(rows)
    out.add(Path(args.csv) if args.csv else Path(st["out"]) / "sweep.csv", text)
    sys.stdout.write(text)
    return 0


def _cmd_generate(args, st, cfg, out: _Outputs) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    for seed in range(st["seed"], st["seed"] + args.count):
        try:
            sc = generate(seed, args.depth, args.branching, args.misleading)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        path = Path(st["out"]) / f"{sc.id}.json"
        out.add(path, sc.dumps())
        print(path)
    return 0


def _cmd_audit(args, st, cfg, out: _Outputs) -> int:
    trace = EpisodeTrace.read(args.trace)
    findings = audit(trace, load(args.scenario))
    out.add(Path(args.output) if args.output else Path(st["out"]) / "audit.json", findings_json(findings))
    for f in findings:
        print(f"{f.error_type.value}\t{','.join(map(str, f.evidence))}\t{f.detail}")
    print(f"{len(findings)} finding(s)")
    return 0


def _cmd_replay(args, st, cfg, out: _Outputs) -> int:
    sys.stdout.write(G.serialize(replay(EpisodeTrace.read(args.trace))))
    return 0


def _cmd_validate(args, st, cfg, out: _Outputs) -> int:
    sc = load(args.scenario)
    print(f"ok: {sc.id} ({len(sc.taxonomy)} templates, truth leaf {sc.truth_leaf.label!r})")
    return 0


COMMANDS = {
    "run": _cmd_run,
    "batch": _cmd_batch,
    "sweep": _cmd_sweep,
    "generate": _cmd_generate,
    "audit": _cmd_audit,
    "replay": _cmd_replay,
    "validate": _cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        st = _settings(args)
        cfg = _run_config(st, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = _Outputs()
    try:
        code = COMMANDS[args.command](args, st, cfg, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print("invalid scenario:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 1
    except (ParseError, CorruptTrace, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AbductorError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out.commit()
    return code


if __name__ == "__main__":
    raise SystemExit(main())
