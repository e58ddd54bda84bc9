"""Density estimation with a pair of jointly trained latent/data mapping
networks, evaluated pointwise by importance sampling or a Laplace-style
closed form, with simulation benchmarks and a KDE baseline."""

from .checkpoint import load_checkpoint, save_checkpoint
from .estimators import batch_estimate, estimate_is, estimate_laplace
from .kde import KdeModel, fit_kde, kde_log_density
from .metrics import EvalReport, mean_log_likelihood, precision_at_k, spearman
from .model import RoundtripConfig, RoundtripModel, TrainLog, train
from .simdata import make_outlier_dataset, make_task, split_indices

__all__ = [
    "EvalReport",
    "KdeModel",
    "RoundtripConfig",
    "RoundtripModel",
    "TrainLog",
    "batch_estimate",
    "estimate_is",
    "estimate_laplace",
    "fit_kde",
    "kde_log_density",
    "load_checkpoint",
    "make_outlier_dataset",
    "make_task",
    "mean_log_likelihood",
    "precision_at_k",
    "save_checkpoint",
    "spearman",
    "split_indices",
    "train",
]

__version__ = "0.1.0"
