"""Benchmark distributions with exact density evaluators, plus CSV ingestion,
min-max normalization, and the train/validation/test split protocol.

Three synthetic families are provided:

* ``indep-mixture`` (any dimension): each coordinate i.i.d. from the 1-D
  three-part mixture (1/3)[N(-1, 0.5^2) + N(0, 0.5^2) + N(1, 0.5^2)], so a
  d-dimensional instance has 3^d modes and its log density is additive
  across coordinates.
* ``octagon``: eight equally weighted 2-D Gaussians with means on a circle of
  radius 3 at 45-degree spacing, each elongated radially (sd 1 radial, 0.16
  tangential).
* ``involute``: a noisy spiral; r ~ U(0, 2pi), x1 ~ N(r sin 2r, 0.4^2),
  x2 ~ N(r cos 2r, 0.4^2). The density has no closed form and is evaluated by
  trapezoid quadrature over r.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng as rng_mod
from .numerics import LOG_2PI, as_matrix, log_normal_pdf, logsumexp

MIXTURE_MEANS = np.array([-1.0, 0.0, 1.0])
MIXTURE_SD = 0.5
OCTAGON_RADIUS = 3.0
OCTAGON_MINOR_SD = 0.16
INVOLUTE_SD = 0.4
DEFAULT_QUAD_POINTS = 10_000


@dataclass
class SimTask:
    """A named distribution with a seeded sampler and exact log density."""

    name: str
    dim: int
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    log_density: Callable[[np.ndarray], np.ndarray]
    default_bounds: tuple[float, float]


def sample_indep_mixture(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    comp = rng.integers(0, 3, size=(count, d))
    return MIXTURE_MEANS[comp] + MIXTURE_SD * rng.standard_normal((count, d))


def log_density_indep_mixture(x: np.ndarray) -> np.ndarray:
    """Sum over coordinates of the 1-D mixture log density."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    per_comp = log_normal_pdf(x[:, :, None], MIXTURE_MEANS[None, None, :], MIXTURE_SD)
    per_coord = logsumexp(per_comp, axis=2) - math.log(3.0)
    return np.sum(per_coord, axis=1)


def _octagon_frames():
    angles = np.pi * np.arange(1, 9) / 4.0
    radial = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (8, 2)
    tangent = np.stack([-np.sin(angles), np.cos(angles)], axis=1)
    means = OCTAGON_RADIUS * radial
    return means, radial, tangent


def sample_octagon(count: int, rng: np.random.Generator) -> np.ndarray:
    means, radial, tangent = _octagon_frames()
    comp = rng.integers(0, 8, size=count)
    g = rng.standard_normal((count, 2))
    return (
        means[comp]
        + g[:, :1] * radial[comp]
        + OCTAGON_MINOR_SD * g[:, 1:] * tangent[comp]
    )


def log_density_octagon(x: np.ndarray) -> np.ndarray:
    """Equal-weight mixture; each component has unit variance along its radial
    axis and OCTAGON_MINOR_SD^2 tangentially, so the quadratic form splits over
    the two local axes."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    means, radial, tangent = _octagon_frames()
    diff = x[:, None, :] - means[None, :, :]  # (P, 8, 2)
    along = np.einsum("pkc,kc->pk", diff, radial)
    across = np.einsum("pkc,kc->pk", diff, tangent)
    k = OCTAGON_MINOR_SD
    quad = along**2 + (across / k) ** 2
    comp_log = -LOG_2PI - math.log(k) - 0.5 * quad
    return logsumexp(comp_log, axis=1) - math.log(8.0)


def sample_involute(count: int, rng: np.random.Generator) -> np.ndarray:
    r = rng_mod.uniform(rng, 0.0, 2.0 * np.pi, count)
    g = rng.standard_normal((count, 2))
    x1 = r * np.sin(2.0 * r) + INVOLUTE_SD * g[:, 0]
    x2 = r * np.cos(2.0 * r) + INVOLUTE_SD * g[:, 1]
    return np.stack([x1, x2], axis=1)


def log_density_involute(x: np.ndarray, quad_points: int = DEFAULT_QUAD_POINTS) -> np.ndarray:
    """Trapezoid quadrature of (1/2pi) integral over r of the conditional
    Gaussian product; quad_points grid points over [0, 2pi]."""
    if quad_points < 100:
        raise ValueError("quad_points must be >= 100")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = np.linspace(0.0, 2.0 * np.pi, quad_points)
    mu1 = r * np.sin(2.0 * r)
    mu2 = r * np.cos(2.0 * r)
    h = r[1] - r[0]
    log_w = np.full(quad_points, math.log(h))
    log_w[0] -= math.log(2.0)
    log_w[-1] -= math.log(2.0)
    out = np.empty(x.shape[0])
    chunk = max(1, 2_000_000 // quad_points)
    for i in range(0, x.shape[0], chunk):
        xi = x[i : i + chunk]
        log_f = log_normal_pdf(xi[:, 0:1], mu1[None, :], INVOLUTE_SD) + log_normal_pdf(
            xi[:, 1:2], mu2[None, :], INVOLUTE_SD
        )
        out[i : i + chunk] = logsumexp(log_f + log_w[None, :], axis=1) - math.log(2.0 * np.pi)
    return out


TASK_NAMES = ("indep-mixture", "octagon", "involute")


def make_task(name: str, dim: int | None = None, quad_points: int = DEFAULT_QUAD_POINTS) -> SimTask:
    if name == "indep-mixture":
        d = 2 if dim is None else int(dim)
        return SimTask(
            name,
            d,
            lambda count, rng, d=d: sample_indep_mixture(d, count, rng),
            log_density_indep_mixture,
            default_bounds=(-3.5, 3.5),
        )
    if name == "octagon":
        if dim not in (None, 2):
            raise ValueError("octagon is 2-D only")
        return SimTask(name, 2, sample_octagon, log_density_octagon, default_bounds=(-6.0, 6.0))
    if name == "involute":
        if dim not in (None, 2):
            raise ValueError("involute is 2-D only")
        return SimTask(
            name,
            2,
            sample_involute,
            lambda x: log_density_involute(x, quad_points),
            default_bounds=(-8.0, 8.0),
        )
    raise ValueError(f"unknown task {name!r}; expected one of {TASK_NAMES}")


@dataclass
class OutlierDataset:
    points: np.ndarray
    labels: np.ndarray  # bool, True = outlier
    outlier_fraction: float


def make_outlier_dataset(
    d: int, count: int, outlier_fraction: float, rng: np.random.Generator
) -> OutlierDataset:
    """Inliers from the independent mixture; outliers uniform over the inlier
    bounding box inflated 1.5x about its center; rows shuffled."""
    if not 0.0 < outlier_fraction < 0.5:
        raise ValueError("outlier fraction must be in (0, 0.5)")
    n_out = int(round(count * outlier_fraction))
    n_in = count - n_out
    inliers = sample_indep_mixture(d, n_in, rng)
    lo, hi = inliers.min(axis=0), inliers.max(axis=0)
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    outliers = rng_mod.uniform(rng, 0.0, 1.0, (n_out, d))
    outliers = center + (2.0 * outliers - 1.0) * 1.5 * half
    points = np.concatenate([inliers, outliers], axis=0)
    labels = np.concatenate([np.zeros(n_in, dtype=bool), np.ones(n_out, dtype=bool)])
    perm = rng.permutation(count)
    return OutlierDataset(points[perm], labels[perm], outlier_fraction)


@dataclass
class SplitSpec:
    """Disjoint covering index sets: 10% test, then 10% of the rest as
    validation (81/9/10 of the total)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int


def split_indices(count: int, seed: int) -> SplitSpec:
    perm = rng_mod.stream(seed, "split").permutation(count)
    n_test = int(round(0.1 * count))
    n_val = int(round(0.1 * (count - n_test)))
    test = np.sort(perm[:n_test])
    val = np.sort(perm[n_test : n_test + n_val])
    train = np.sort(perm[n_test + n_val :])
    return SplitSpec(train=train, val=val, test=test, seed=seed)


@dataclass
class NormStats:
    """Per-feature min/max collected on the training split."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64).reshape(-1)
        self.maxs = np.asarray(self.maxs, dtype=np.float64).reshape(-1)
        if self.mins.shape != self.maxs.shape:
            raise ValueError("min/max length mismatch")
        if np.any(self.maxs < self.mins):
            raise ValueError("max < min in normalization stats")

    @property
    def spans(self) -> np.ndarray:
        return self.maxs - self.mins

    def log_volume_factor(self) -> float:
        """Log Jacobian of the [0,1]-scaling map: sum of -log(span) over
        non-degenerate features. Add to normalized-space log densities to get
        original-unit values."""
        spans = self.spans
        return float(-np.sum(np.log(spans[spans > 0])))


def fit_minmax(x: np.ndarray) -> NormStats:
    x = as_matrix(x, name="training features")
    stats = NormStats(x.min(axis=0), x.max(axis=0))
    degenerate = np.nonzero(stats.spans == 0)[0]
    if degenerate.size:
        warnings.warn(
            f"constant feature column(s) {degenerate.tolist()}: normalization maps them to 0.5",
            stacklevel=2,
        )
    return stats


def apply_minmax(x: np.ndarray, stats: NormStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    spans = stats.spans
    safe = np.where(spans == 0, 1.0, spans)
    out = (x - stats.mins) / safe
    if np.any(spans == 0):
        out[..., spans == 0] = 0.5
    return out


def invert_minmax(y: np.ndarray, stats: NormStats) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    spans = stats.spans
    out = y * spans + stats.mins
    if np.any(spans == 0):
        out[..., spans == 0] = stats.mins[spans == 0]
    return out


@dataclass
class IngestResult:
    data: np.ndarray
    header: list[str] | None


def ingest_csv(path) -> IngestResult:
    """Read a rectangular numeric CSV ('.' decimals, ',' separator); a single
    leading non-numeric row is treated as a header."""
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header: list[str] | None = None

    def _numeric(cells: list[str]) -> bool:
        try:
            [float(c) for c in cells]
            return True
        except ValueError:
            return False

    start = 0
    if not _numeric(rows[0]):
        header = [c.strip() for c in rows[0]]
        start = 1
        if len(rows) == 1:
            raise ValueError(f"{path}: header but no data rows")
    width = len(rows[start])
    data = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:]):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row {i + start + 1} (expected {width} cells, got {len(row)})")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric cell at row {i + start + 1}, column {j + 1}: {cell!r}") from None
    return IngestResult(as_matrix(data, name=str(path)), header)


def write_csv(path, data: np.ndarray, header: list[str] | None = None) -> None:
    """Write rows with shortest round-trip float formatting (byte-stable)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
