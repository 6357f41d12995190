"""Correlation and classification metrics for utterance- and system-level
scoring, plus the report container shared by evaluation and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAME_THRESHOLD = 2.5  # scores below count as "Same", at or above as "Different"


class MetricError(ValueError):
    pass


def _validated_pair(x, y, name):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"{name}: inputs must be equal-length vectors, "
                          f"got {x.shape} and {y.shape}")
    if x.size < 2:
        raise MetricError(f"{name}: needs at least 2 points, got {x.size}")
    return x, y


def pearson_lcc(x, y) -> float:
    x, y = _validated_pair(x, y, "pearson_lcc")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(np.sum(dx * dx))
    vy = float(np.sum(dy * dy))
    if vx == 0.0 or vy == 0.0:
        raise MetricError("pearson_lcc: zero variance input")
    return float(np.sum(dx * dy) / np.sqrt(vx * vy))


def rank_with_ties(values) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_srcc(x, y) -> float:
    x, y = _validated_pair(x, y, "spearman_srcc")
    return pearson_lcc(rank_with_ties(x), rank_with_ties(y))


def mse(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0:
        raise MetricError("mse: empty input")
    return float(np.mean((x - y) ** 2))


def system_aggregate(scores, system_ids) -> dict:
    """Mean score per system id, keyed in sorted id order."""
    scores = np.asarray(scores, dtype=np.float64)
    ids = list(system_ids)
    if len(ids) != scores.size:
        raise MetricError("system_aggregate: ids and scores differ in length")
    return {sid: float(scores[[i for i, s in enumerate(ids) if s == sid]].mean())
            for sid in sorted(set(ids))}


def is_same(score) -> bool:
    return score < SAME_THRESHOLD


def similarity_accuracy(pred, gt) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.size == 0 or pred.shape != gt.shape:
        raise MetricError("similarity_accuracy: empty or mismatched inputs")
    return float(np.mean((pred < SAME_THRESHOLD) == (gt < SAME_THRESHOLD)))


def system_same_ratio(scores, system_ids) -> dict:
    """Per system, the fraction of pairs classified Same."""
    scores = np.asarray(scores, dtype=np.float64)
    ids = list(system_ids)
    if scores.size == 0 or len(ids) != scores.size:
        raise MetricError("system_same_ratio: empty or mismatched inputs")
    out = {}
    for sid in sorted(set(ids)):
        rows = [i for i, s in enumerate(ids) if s == sid]
        out[sid] = float(np.mean(scores[rows] < SAME_THRESHOLD))
    return out


@dataclass
class MetricsReport:
    task: str
    n_items: int
    n_systems: int
    utt_mse: float
    utt_lcc: float
    utt_srcc: float
    sys_mse: float
    sys_lcc: float
    sys_srcc: float
    acc: float | None = None
    same_ratio_mse: float | None = None
    same_ratio_lcc: float | None = None
    same_ratio_srcc: float | None = None
    notes: list = field(default_factory=list)

    def as_text(self) -> str:
        lines = [f"task = {self.task}", f"n_items = {self.n_items}",
                 f"n_systems = {self.n_systems}"]
        for key in ("utt_mse", "utt_lcc", "utt_srcc",
                    "sys_mse", "sys_lcc", "sys_srcc",
                    "acc", "same_ratio_mse", "same_ratio_lcc", "same_ratio_srcc"):
            value = getattr(self, key)
            if value is not None:
                lines.append(f"{key} = {value!r}")
        for note in self.notes:
            lines.append(f"# {note}")
        return "\n".join(lines) + "\n"
