"""Attention-guided pair selection for localization.

A pair is selected when it is both among the top-k attention weights and
at or above an absolute weight threshold. If nothing clears the
threshold, the single best pair is kept so localization always has one
observation. Ties break toward the smaller flat index, making selection
deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .detection import AttentionReport
from .scenario import PairId


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 10
    sigma_att: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.sigma_att < 1.0:
            raise ValueError(f"sigma_att must be in [0, 1), got {self.sigma_att}")


@dataclass
class SelectedPairs:
    pair_ids: list[PairId]  # descending attention weight
    weights: list[float]
    fallback: bool  # true when nothing cleared the threshold

    def __len__(self) -> int:
        return len(self.pair_ids)

    @property
    def flat(self) -> list[int]:
        return [p.flat for p in self.pair_ids]


def select_pairs(report: AttentionReport, cfg: SelectionConfig) -> SelectedPairs:
    """Pairs in the attention top-k with weight >= sigma_att, ordered by
    descending weight; falls back to the single top-1 pair when the
    intersection is empty."""
    n = len(report.pair_ids)
    if n == 0:
        raise ValueError("cannot select from an empty attention report")
    # sort by (-weight, flat index): deterministic under ties
    order = sorted(range(n), key=lambda i: (-report.weights[i], report.pair_ids[i].flat))
    top_k = order[: cfg.k]
    chosen = [i for i in top_k if report.weights[i] >= cfg.sigma_att]
    fallback = not chosen
    if fallback:
        chosen = [order[0]]
    return SelectedPairs(
        pair_ids=[report.pair_ids[i] for i in chosen],
        weights=[float(report.weights[i]) for i in chosen],
        fallback=fallback,
    )


@dataclass
class ReliabilityCounts:
    """Selected-vs-true-pair-label confusion over a dataset, plus the
    observed range of selection sizes."""

    tp: int
    fp: int
    fn: int
    l_min: int
    l_max: int


def selection_reliability(
    selections: list[SelectedPairs], pair_labels: np.ndarray
) -> ReliabilityCounts:
    """TP = selected and labeled, FP = selected and unlabeled, FN = labeled
    but not selected, aggregated over all samples."""
    if len(selections) != pair_labels.shape[0]:
        raise ValueError(
            f"{len(selections)} selections vs {pair_labels.shape[0]} label rows"
        )
    tp = fp = fn = 0
    l_min, l_max = None, None
    for sel, labels in zip(selections, pair_labels):
        picked = set(sel.flat)
        l_min = len(picked) if l_min is None else min(l_min, len(picked))
        l_max = len(picked) if l_max is None else max(l_max, len(picked))
        for flat in range(1, labels.shape[0] + 1):
            labeled = labels[flat - 1] != 0
            if flat in picked and labeled:
                tp += 1
            elif flat in picked:
                fp += 1
            elif labeled:
                fn += 1
    return ReliabilityCounts(tp=tp, fp=fp, fn=fn, l_min=l_min or 0, l_max=l_max or 0)


def export_reliability_csv(path: str, rows: list[tuple[SelectionConfig, ReliabilityCounts]]) -> None:
    """Table of reliability counts per (sigma_att, k) setting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma_att", "k", "tp", "fp", "fn", "l_min", "l_max"])
        for cfg, counts in rows:
            writer.writerow(
                [cfg.sigma_att, cfg.k, counts.tp, counts.fp, counts.fn, counts.l_min, counts.l_max]
            )
