"""Rating-error and top-N ranking metrics, plus split-averaged reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .errors import DataFormatError

RANKING_COLUMNS = ("MAP", "MRR", "NDCG", "P@5", "P@10", "R@5", "R@10")


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise DataFormatError(f"need equal non-empty lengths, got {pred.shape} and {truth.shape}")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def precision_at(ranked: Sequence[int], relevant: set, n: int) -> float:
    if n < 1:
        raise ValueError("cutoff must be >= 1")
    return sum(1 for x in ranked[:n] if x in relevant) / n


def recall_at(ranked: Sequence[int], relevant: set, n: int) -> float:
    if not relevant:
        raise ValueError("recall needs a non-empty relevant set")
    return sum(1 for x in ranked[:n] if x in relevant) / len(relevant)


def average_precision(ranked: Sequence[int], relevant: set) -> float:
    hits, total = 0, 0.0
    for rank, x in enumerate(ranked, start=1):
        if x in relevant:
            hits += 1
            total += hits / rank
    return total / hits if hits else 0.0


def reciprocal_rank(ranked: Sequence[int], relevant: set) -> float:
    for rank, x in enumerate(ranked, start=1):
        if x in relevant:
            return 1.0 / rank
    return 0.0


mrr = reciprocal_rank


def ndcg(ranked: Sequence[int], relevant: set, cutoff: int | None = None) -> float:
    """Binary-gain NDCG; the gain at rank p is discounted by log2(p + 1)."""
    if not relevant:
        return 0.0
    top = ranked if cutoff is None else ranked[:cutoff]
    dcg = sum(1.0 / math.log2(p + 1) for p, x in enumerate(top, start=1) if x in relevant)
    n_ideal = len(relevant) if cutoff is None else min(len(relevant), cutoff)
    idcg = sum(1.0 / math.log2(p + 1) for p in range(1, n_ideal + 1))
    return dcg / idcg


def metrics_from_ranks(ranks: np.ndarray, cutoffs: Iterable[int] = (5, 10)) -> dict[str, float]:
    """All ranking metrics from the 1-based ranks of a user's relevant items.

    Equivalent to the list-based functions above when every relevant item is
    present in the ranked list, which holds for full candidate rankings.
    """
    ranks = np.sort(np.asarray(ranks, dtype=float))
    n_rel = len(ranks)
    hits = np.arange(1, n_rel + 1)
    out = {
        "MAP": float(np.mean(hits / ranks)),
        "MRR": float(1.0 / ranks[0]),
        "NDCG": float(np.sum(1.0 / np.log2(ranks + 1)) / np.sum(1.0 / np.log2(hits + 1))),
    }
    hits_at = {n: int(np.sum(ranks <= n)) for n in cutoffs}
    for n, got in hits_at.items():
        out[f"P@{n}"] = got / n
    for n, got in hits_at.items():
        out[f"R@{n}"] = got / n_rel
    return out


def ranks_of_relevant(scores: np.ndarray, relevant: np.ndarray, exclude: np.ndarray) -> np.ndarray:
    """1-based positions of ``relevant`` items in the ascending-score ranking
    of all non-excluded items, ties broken by item index."""
    scores = np.asarray(scores, dtype=float)
    keep = np.ones(len(scores), dtype=bool)
    keep[exclude] = False
    order = np.lexsort((np.arange(len(scores)), scores))
    order = order[keep[order]]
    pos = np.empty(len(scores), dtype=np.int64)
    pos[order] = np.arange(1, len(order) + 1)
    return pos[relevant]


def evaluate_rating(model, test: Dataset) -> dict[str, float]:
    if len(test) == 0:
        raise DataFormatError("empty test set")
    pred = model.predict_rating(test.users, test.items)
    return {"RMSE": rmse(pred, test.values), "MAE": mae(pred, test.values)}


def evaluate_ranking(model, train: Dataset, test: Dataset, cutoffs: Iterable[int] = (5, 10), block: int = 256) -> dict[str, float]:
    """Average per-user ranking metrics over users with at least one test positive.

    ``model.score_users(users)`` must return a (len(users), N) array where a
    lower value ranks higher. Train positives are removed from the candidates.
    """
    cutoffs = tuple(cutoffs)
    train_pos = train.positives_by_user()
    test_pos = test.subset(np.flatnonzero(test.values > 0)).positives_by_user()
    users = [u for u in range(test.n_users) if len(test_pos[u])]
    if not users:
        raise DataFormatError("no user has a test positive")
    rows = []
    for start in range(0, len(users), block):
        chunk = users[start : start + block]
        scores = model.score_users(chunk)
        for s, u in zip(scores, chunk):
            rows.append(metrics_from_ranks(ranks_of_relevant(s, test_pos[u], train_pos[u]), cutoffs))
    keys = rows[0].keys()
    return {key: float(np.mean([r[key] for r in rows])) for key in keys}


@dataclass
class EvalReport:
    """Per-metric mean and (population) standard deviation over repeated splits."""

    runs: list[dict[str, float]] = field(default_factory=list)
    cutoffs: tuple = ()

    def add(self, metrics: Mapping[str, float]) -> None:
        self.runs.append(dict(metrics))

    @property
    def n_repeats(self) -> int:
        return len(self.runs)

    def summary(self) -> dict[str, dict[str, float]]:
        keys = list(self.runs[0]) if self.runs else []
        return {
            k: {"mean": float(np.mean([r[k] for r in self.runs])), "std": float(np.std([r[k] for r in self.runs]))}
            for k in keys
        }

    def mean(self, key: str) -> float:
        return self.summary()[key]["mean"]

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def format_table(reports: Mapping[str, EvalReport], digits: int = 4) -> str:
    """Aligned text table: one row per model, ``mean +- std`` per metric."""
    names = list(reports)
    metrics = []
    for rep in reports.values():
        metrics += [m for m in rep.summary() if m not in metrics]
    cells = [["model"] + metrics]
    for name in names:
        s = reports[name].summary()
        cells.append([name] + [f"{s[m]['mean']:.{digits}f} +- {s[m]['std']:.{digits}f}" if m in s else "-" for m in metrics])
    widths = [max(len(row[j]) for row in cells) for j in range(len(cells[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells)
