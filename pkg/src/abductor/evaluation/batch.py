"""Batch runs, metric aggregation, and threshold sweeps."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from ..engine import EpisodeResult, RunConfig, run_episode
from ..errors import AbductorError
from ..scenario import Scenario
from .judge import EXACT, RELEVANT, judge

METRICS_HEADER = (
    "config",
    "delta",
    "eta",
    "episodes",
    "matches",
    "relevants",
    "match_rate",
    "relevant_rate",
    "mean_actions",
    "mean_iterations",
    "mean_terminal_level",
    "errors",
)

Runner = Callable[[Scenario, RunConfig], EpisodeResult]


@dataclass(frozen=True)
class EpisodeSummary:
    scenario_id: str
    score: int
    prediction: str
    tool_calls: int
    iterations: int
    terminal_level: int
    backtracks: int
    error: str | None = None


@dataclass(frozen=True)
class MetricsRow:
    config: str
    delta: float
    eta: int
    episodes: int
    matches: int
    relevants: int
    match_rate: float
    relevant_rate: float
    mean_actions: float
    mean_iterations: float
    mean_terminal_level: float
    errors: int

    def as_csv_row(self) -> list[str]:
        d = asdict(self)
        return [_fmt(d[k]) for k in METRICS_HEADER]


def _fmt(v: object) -> str:
    if isinstance(v, float):
        return f"{v:.4f}".rstrip("0").rstrip(".") if v != int(v) else f"{v:.1f}"
    return str(v)


def summarize(result: EpisodeResult, scenario: Scenario) -> EpisodeSummary:
    reported = result.trace.events[-1].data
    return EpisodeSummary(
        scenario_id=scenario.id,
        score=judge(result.report, scenario).score,
        prediction=result.report.prediction,
        tool_calls=len(result.trace.of_type("ToolCall")),
        iterations=int(reported["iterations"]),
        terminal_level=int(reported["level"]),
        backtracks=len(result.trace.of_type("Backtracked")),
    )


def _run_one(args: tuple[Scenario, RunConfig, Runner]) -> EpisodeSummary:
    scenario, cfg, runner = args
    try:
        return summarize(runner(scenario, cfg), scenario)
    except AbductorError as exc:
        return EpisodeSummary(scenario.id, 0, "", 0, 0, 0, 0, error=f"{type(exc).__name__}: {exc}")


def run_episodes(
    scenarios: Sequence[Scenario],
    cfg: RunConfig,
    parallelism: int = 1,
    runner: Runner = run_episode,
) -> list[EpisodeSummary]:
    """Per-episode summaries, sorted by scenario id whatever the worker count."""
    jobs = [(sc, cfg, runner) for sc in scenarios]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            out = list(pool.map(_run_one, jobs))
    else:
        out = [_run_one(j) for j in jobs]
    return sorted(out, key=lambda s: s.scenario_id)


def aggregate(summaries: Iterable[EpisodeSummary], cfg: RunConfig, label: str | None = None) -> MetricsRow:
    rows = sorted(summaries, key=lambda s: s.scenario_id)
    n = len(rows)
    if n == 0:
        raise ValueError("cannot aggregate an empty batch")
    matches = sum(1 for r in rows if r.score == EXACT)
    relevants = sum(1 for r in rows if r.score >= RELEVANT)
    return MetricsRow(
        config=label or cfg.label(),
        delta=cfg.params.gap_delta,
        eta=cfg.params.min_support,
        episodes=n,
        matches=matches,
        relevants=relevants,
        match_rate=100.0 * matches / n,
        relevant_rate=100.0 * relevants / n,
        mean_actions=sum(r.tool_calls for r in rows) / n,
        mean_iterations=sum(r.iterations for r in rows) / n,
        mean_terminal_level=sum(r.terminal_level for r in rows) / n,
        errors=sum(1 for r in rows if r.error),
    )


def run_batch(
    scenarios: Sequence[Scenario],
    cfg: RunConfig | None = None,
    parallelism: int = 1,
    runner: Runner = run_episode,
    label: str | None = None,
) -> MetricsRow:
    if not scenarios:
        raise ValueError("run_batch needs at least one scenario")
    cfg = cfg or RunConfig()
    return aggregate(run_episodes(scenarios, cfg, parallelism, runner), cfg, label)


def sweep(
    scenarios: Sequence[Scenario],
    delta_grid: Iterable[float],
    eta_grid: Iterable[int],
    base: RunConfig | None = None,
    parallelism: int = 1,
) -> list[MetricsRow]:
    """Full-factorial delta x eta grid, rows sorted by (delta, eta)."""
    deltas, etas = sorted(set(delta_grid)), sorted(set(eta_grid))
    if not deltas or not etas:
        raise ValueError("sweep grids must be non-empty")
    base = base or RunConfig()
    rows = []
    for d in deltas:
        for e in etas:
            cfg = replace(base, params=replace(base.params, gap_delta=d, min_support=e))
            rows.append(run_batch(scenarios, cfg, parallelism))
    return rows


def metrics_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(r.as_csv_row())
    return buf.getvalue()


def write_csv(rows: Iterable[MetricsRow], path: str | Path) -> None:
    Path(path).write_text(metrics_csv(rows), encoding="utf-8")
