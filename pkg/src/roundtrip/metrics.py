"""Evaluation metrics and the 2-D grid density renderer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    v = np.asarray(values, dtype=np.float64)
    uniq, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    below = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = below + (counts + 1) / 2.0
    return avg_rank[inverse]


def spearman(a, b) -> float:
    """Pearson correlation of average ranks (exact with ties)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-D and equal length")
    if len(a) < 2:
        raise ValueError("need at least two observations")
    ra, rb = average_ranks(a), average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise ValueError("rank correlation undefined for a constant input")
    return float(da @ db) / denom


def mean_log_likelihood(log_densities) -> float:
    vals = np.asarray(log_densities, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("empty log-density list")
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        raise ValueError(f"non-finite log density at index {int(bad[0])}")
    return float(vals.mean())


def precision_at_k(scores, labels, k: int) -> float:
    """Fraction of true outliers among the k highest outlier scores.

    Scores are 'higher = more outlying' (use negated log density); ties keep
    input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equal length")
    if k < 1 or k > len(scores):
        raise ValueError(f"k must be in [1, {len(scores)}], got {k}")
    order = np.argsort(-scores, kind="stable")
    return float(np.count_nonzero(labels[order[:k]])) / k


def outlier_scores(log_densities) -> np.ndarray:
    """Negated log density: low-density points score as outliers."""
    return -np.asarray(log_densities, dtype=np.float64)


def render_grid(log_density_fn, bounds, resolution: int = 100) -> np.ndarray:
    """Evaluate a 2-D log density on an inclusive rectangular grid.

    bounds = (x1_lo, x1_hi, x2_lo, x2_hi). Returns rows (x1, x2, log_density)
    in row-major order: x1 varies slowest.
    """
    x1_lo, x1_hi, x2_lo, x2_hi = (float(v) for v in bounds)
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if x1_hi <= x1_lo or x2_hi <= x2_lo:
        raise ValueError("bounds must be increasing")
    xs = np.linspace(x1_lo, x1_hi, resolution)
    ys = np.linspace(x2_lo, x2_hi, resolution)
    g1, g2 = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
    vals = np.asarray(log_density_fn(pts), dtype=np.float64).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError("log_density_fn returned the wrong number of values")
    return np.column_stack([pts, vals])


@dataclass
class EvalReport:
    """Per-point estimates plus whichever aggregate metrics apply to the task."""

    task: str
    method: str
    log_densities: np.ndarray
    spearman_to_truth: float | None = None
    mean_ll: float | None = None
    precision_k: float | None = None
    k: int | None = None
    config: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"task={self.task}", f"method={self.method}",
                 f"num_points={len(self.log_densities)}"]
        if self.spearman_to_truth is not None:
            lines.append(f"spearman={self.spearman_to_truth!r}")
        if self.mean_ll is not None:
            lines.append(f"mean_log_likelihood={self.mean_ll!r}")
        if self.precision_k is not None:
            lines.append(f"precision_at_k={self.precision_k!r}")
            lines.append(f"k={self.k}")
        for key in sorted(self.config):
            lines.append(f"config.{key}={self.config[key]}")
        return "\n".join(lines) + "\n"
