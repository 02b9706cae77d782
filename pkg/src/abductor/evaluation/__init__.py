from .audit import AuditFinding, ErrorType, audit, findings_json
from .baseline import GREEDY_RETRIEVAL_CAP, greedy_baseline
from .batch import (
    METRICS_HEADER,
    EpisodeSummary,
    MetricsRow,
    aggregate,
    metrics_csv,
    run_batch,
    run_episodes,
    sweep,
    write_csv,
)
from .judge import Verdict, judge

__all__ = [
    "AuditFinding",
    "EpisodeSummary",
    "ErrorType",
    "GREEDY_RETRIEVAL_CAP",
    "METRICS_HEADER",
    "MetricsRow",
    "Verdict",
    "aggregate",
    "audit",
    "findings_json",
    "greedy_baseline",
    "judge",
    "metrics_csv",
    "run_batch",
    "run_episodes",
    "sweep",
    "write_csv",
]
