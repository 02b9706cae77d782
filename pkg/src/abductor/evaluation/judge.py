"""Deterministic 3-point judge: 2 exact leaf, 1 ancestor on the truth path, 0 otherwise."""

from __future__ import annotations

from dataclasses import dataclass

from ..cognition.port import Report
from ..scenario import Scenario, normalize_label

EXACT, RELEVANT, OTHERWISE = 2, 1, 0


@dataclass(frozen=True)
class Verdict:
    score: int
    matched_template: str | None = None


def judge(report: Report | str, scenario: Scenario) -> Verdict:
    prediction = report if isinstance(report, str) else report.prediction
    wanted = normalize_label(prediction)
    path = scenario.truth_path
    for depth, tid in enumerate(path):
        if normalize_label(scenario.taxonomy[tid].label) == wanted:
            return Verdict(EXACT if depth == len(path) - 1 else RELEVANT, tid)
    return Verdict(OTHERWISE, None)
