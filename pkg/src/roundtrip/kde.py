"""Gaussian kernel density estimation with rule-of-thumb bandwidths.

Product (diagonal) kernels with one bandwidth per dimension: h_j = factor *
sd_j using the sample standard deviation (ddof=1), where the factor is
N^(-1/(d+4)) for Scott's rule and (N (d+2) / 4)^(-1/(d+4)) for Silverman's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import LOG_2PI, as_matrix, logsumexp

RULE_SCOTT = "scott"
RULE_SILVERMAN = "silverman"
RULE_FIXED = "fixed"


def scott_factor(n: int, d: int) -> float:
    return float(n) ** (-1.0 / (d + 4))


def silverman_factor(n: int, d: int) -> float:
    return (n * (d + 2) / 4.0) ** (-1.0 / (d + 4))


@dataclass
class KdeModel:
    train_points: np.ndarray  # (N, d)
    bandwidths: np.ndarray  # (d,)
    rule: str

    def __post_init__(self):
        if np.any(self.bandwidths <= 0):
            raise ValueError("bandwidths must be positive")


def fit_kde(points, rule: str = RULE_SCOTT, fixed_bandwidths=None) -> KdeModel:
    points = as_matrix(points, name="kde training points")
    n, d = points.shape
    if n < 2:
        raise ValueError("need at least two points to fit a KDE")
    if rule == RULE_FIXED:
        bw = np.asarray(fixed_bandwidths, dtype=np.float64).reshape(-1)
        if bw.shape != (d,):
            raise ValueError(f"fixed bandwidths must have length {d}")
        return KdeModel(points, bw, rule)
    sd = points.std(axis=0, ddof=1)
    degenerate = np.nonzero(sd == 0)[0]
    if degenerate.size:
        raise ValueError(f"constant dimension(s) {degenerate.tolist()}: bandwidth undefined")
    if rule == RULE_SCOTT:
        factor = scott_factor(n, d)
    elif rule == RULE_SILVERMAN:
        factor = silverman_factor(n, d)
    else:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    return KdeModel(points, factor * sd, rule)


def kde_log_density(model: KdeModel, x) -> np.ndarray | float:
    """Log of the kernel mixture at x (one point or a batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n, d = model.train_points.shape
    if x.shape[1] != d:
        raise ValueError(f"query dim {x.shape[1]} != training dim {d}")
    log_norm = -0.5 * d * LOG_2PI - float(np.sum(np.log(model.bandwidths)))
    scaled_train = model.train_points / model.bandwidths
    scaled_sq = np.einsum("nd,nd->n", scaled_train, scaled_train)
    out = np.empty(x.shape[0])
    chunk = max(1, 4_000_000 // max(n, 1))
    for i in range(0, x.shape[0], chunk):
        q = x[i : i + chunk] / model.bandwidths
        # |q - t|^2 expanded so the (P, N) cross term is a single matmul
        d2 = (
            np.einsum("pd,pd->p", q, q)[:, None]
            - 2.0 * q @ scaled_train.T
            + scaled_sq[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        out[i : i + chunk] = logsumexp(-0.5 * d2, axis=1)
    out += log_norm - math.log(n)
    return float(out[0]) if single else out
