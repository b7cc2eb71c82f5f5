"""Detection/localization metrics and sensing-region maps.

Missed-detection and false-alarm probabilities come with exact
Clopper-Pearson 95% intervals; ratios with empty denominators are
reported as absent (None), never as zero. Positioning error percentiles
use linear interpolation between order statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass
class DetectionMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    mdp: float | None  # FN / (FN + TP), None when no positives exist
    fap: float | None  # FP / (FP + TN), None when no negatives exist
    mdp_ci: tuple[float, float] | None
    fap_ci: tuple[float, float] | None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
            "mdp": self.mdp,
            "fap": self.fap,
            "mdp_ci": list(self.mdp_ci) if self.mdp_ci else None,
            "fap_ci": list(self.fap_ci) if self.fap_ci else None,
        }


def clopper_pearson(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for k successes in n trials."""
    if n == 0:
        raise ValueError("interval undefined for n = 0")
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def detection_metrics(predictions, labels) -> DetectionMetrics:
    """Confusion tally plus MDP/FAP with 95% Clopper-Pearson intervals."""
    predictions = np.asarray(predictions).astype(int)
    labels = np.asarray(labels).astype(int)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError(
            f"need matching nonempty vectors, got {predictions.shape} vs {labels.shape}"
        )
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    n_pos, n_neg = fn + tp, fp + tn
    mdp = fn / n_pos if n_pos else None
    fap = fp / n_neg if n_neg else None
    return DetectionMetrics(
        tp=tp, tn=tn, fp=fp, fn=fn, mdp=mdp, fap=fap,
        mdp_ci=clopper_pearson(fn, n_pos) if n_pos else None,
        fap_ci=clopper_pearson(fp, n_neg) if n_neg else None,
    )


def ape(estimate, truth) -> float:
    """Euclidean positioning error in meters."""
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != (3,) or truth.shape != (3,):
        raise ValueError(f"need 3-D points, got {estimate.shape} and {truth.shape}")
    return float(np.linalg.norm(estimate - truth))


@dataclass
class ApeStats:
    errors: np.ndarray  # per-sample APE, meters
    mean: float
    p95: float
    cdf_grid: np.ndarray
    cdf: np.ndarray

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.errors, q, method="linear"))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "p95": self.p95, "count": int(self.errors.size)}


def ape_stats(errors, cdf_points: int = 101) -> ApeStats:
    """Mean, linear-interpolation p95, and a CDF table over an even grid
    from 0 to the max error."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("ape_stats needs at least one error value")
    if np.any(errors < 0):
        raise ValueError("APE values must be nonnegative")
    grid = np.linspace(0.0, float(errors.max()), cdf_points)
    cdf = np.array([(errors <= g).mean() for g in grid])
    return ApeStats(
        errors=errors,
        mean=float(errors.mean()),
        p95=float(np.percentile(errors, 95, method="linear")),
        cdf_grid=grid,
        cdf=cdf,
    )


def attention_label_correlation(weights, pair_labels) -> float:
    """Pearson correlation between attention weights and true pair labels,
    flattened over (samples, pairs)."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    y = np.asarray(pair_labels, dtype=np.float64).reshape(-1)
    if w.shape != y.shape:
        raise ValueError(f"shape mismatch {w.shape} vs {y.shape}")
    if w.std() == 0 or y.std() == 0:
        raise ValueError("correlation undefined for zero-variance input")
    return float(np.corrcoef(w, y)[0, 1])


def sensing_region_map(
    positions: np.ndarray,
    labels: np.ndarray,
    half_width: float,
    resolution: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Occupancy grid of UAV x-y positions whose samples carry label 1 for
    some pair. Returns (grid, edges); grid[iy, ix] counts samples, row 0
    is the north (max-y) edge. Total mass equals the label-1 count."""
    positions = np.asarray(positions, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if positions.ndim != 2 or positions.shape[1] < 2:
        raise ValueError(f"positions must be (S, >=2), got {positions.shape}")
    if positions.shape[0] != labels.shape[0]:
        raise ValueError("positions and labels must align")
    if positions.shape[0] == 0:
        raise ValueError("empty dataset")
    if resolution <= 0 or half_width <= 0:
        raise ValueError("resolution and half_width must be positive")
    n_cells = max(1, int(np.ceil(2.0 * half_width / resolution)))
    edges = np.linspace(-half_width, half_width, n_cells + 1)
    grid = np.zeros((n_cells, n_cells), dtype=np.int64)
    for pos in positions[labels]:
        ix = min(int((pos[0] + half_width) / resolution), n_cells - 1)
        iy = min(int((pos[1] + half_width) / resolution), n_cells - 1)
        grid[n_cells - 1 - iy, ix] += 1  # north-up
    return grid, edges


def write_pgm(path: str, grid: np.ndarray) -> None:
    """8-bit binary PGM, linearly scaled so the max cell maps to 255."""
    grid = np.asarray(grid, dtype=np.float64)
    peak = grid.max()
    img = np.zeros(grid.shape, dtype=np.uint8)
    if peak > 0:
        img = np.round(255.0 * grid / peak).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_grid_csv(path: str, grid: np.ndarray, edges: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["# north-up grid", f"x_edges={edges[0]}..{edges[-1]}", f"cells={grid.shape[0]}"])
        for row in grid:
            writer.writerow([int(v) for v in row])
