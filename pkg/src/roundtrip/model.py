"""The paired-network density model: losses, alternating training with noise
scale selection and early stopping, and the trained-model container.

Four networks are trained jointly: G maps latent to data space, H maps data to
latent space, and least-squares discriminators D_x / D_z push G(z) toward the
data distribution and H(x) toward the latent prior. A squared-error cycle
penalty ties the two mappings together. After a pretraining phase the forward
noise scale sigma is picked from a grid by validation log-likelihood, and
training stops once validation log-likelihood stalls, returning the
best-validation parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .numerics import LOG_2PI, NumericalError, as_matrix, logsumexp
from .rng import SeedBank, stream
from .simdata import NormStats

DEFAULT_SIGMA_GRID = (0.01, 0.05, 0.1, 0.2, 0.4, 0.5)


@dataclass
class RoundtripConfig:
    m: int
    n: int
    alpha: float = 10.0
    beta: float = 10.0
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID
    pretrain_epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    patience_epochs: int = 10
    max_epochs: int = 200
    val_is_samples: int = 2000
    val_points_cap: int | None = None
    proposal_dof: float = 5.0
    proposal_scale: float = 1.0
    leaky_slope: float = 0.2
    g_hidden: tuple[int, ...] = (512,) * 10
    h_hidden: tuple[int, ...] = (256,) * 10
    dx_hidden: tuple[int, ...] = (256,) * 4
    dz_hidden: tuple[int, ...] = (128,) * 2
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("latent and data dimensions must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("cycle-loss weights must be >= 0")
        if not self.sigma_grid or any(s <= 0 for s in self.sigma_grid):
            raise ValueError("sigma grid must be non-empty and positive")
        self.sigma_grid = tuple(sorted(self.sigma_grid))
        if self.batch_size < 1 or self.patience_epochs < 1 or self.max_epochs < 0:
            raise ValueError("batch_size/patience must be >= 1 and max_epochs >= 0")
        if self.val_is_samples < 1:
            raise ValueError("val_is_samples must be >= 1")


@dataclass
class RoundtripModel:
    """Trained mappings plus the noise scale; treat as immutable once built."""

    g_net: nn.Mlp  # latent (m) -> data (n)
    h_net: nn.Mlp  # data (n) -> latent (m)
    sigma: float
    m: int
    n: int
    norm_stats: NormStats | None = None

    def __post_init__(self):
        if self.g_net.input_dim != self.m or self.g_net.output_dim != self.n:
            raise ValueError("G dimensions do not match (m, n)")
        if self.h_net.input_dim != self.n or self.h_net.output_dim != self.m:
            raise ValueError("H dimensions do not match (n, m)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass
class EpochRecord:
    epoch: int
    generator_loss: float
    discriminator_loss: float
    val_log_likelihood: float  # NaN for epochs before sigma selection


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    chosen_sigma: float | None = None
    sigma_grid_scores: dict[float, float] = field(default_factory=dict)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val_log_likelihood: float = math.nan


def _batch_means(*arrays):
    for a in arrays:
        if a.size == 0:
            raise ValueError("empty batch")


def discriminator_losses(dx_on_real, dx_on_fake, dz_on_real, dz_on_fake):
    """Least-squares discriminator objectives: real toward 1, mapped toward 0."""
    dx_r, dx_f = np.ravel(dx_on_real), np.ravel(dx_on_fake)
    dz_r, dz_f = np.ravel(dz_on_real), np.ravel(dz_on_fake)
    _batch_means(dx_r, dx_f, dz_r, dz_f)
    loss_dx = float(np.mean((dx_r - 1.0) ** 2) + np.mean(dx_f**2))
    loss_dz = float(np.mean((dz_r - 1.0) ** 2) + np.mean(dz_f**2))
    return loss_dx, loss_dz


def generator_adv_losses(dx_on_fake, dz_on_fake):
    """Least-squares generator objectives: mapped samples pushed toward 1."""
    dx_f, dz_f = np.ravel(dx_on_fake), np.ravel(dz_on_fake)
    _batch_means(dx_f, dz_f)
    loss_g = float(np.mean((dx_f - 1.0) ** 2))
    loss_h = float(np.mean((dz_f - 1.0) ** 2))
    return loss_g, loss_h


def roundtrip_loss(x_batch, x_cycled, z_batch, z_cycled, alpha: float, beta: float) -> float:
    """alpha * mean squared data-cycle error + beta * mean squared latent-cycle error."""
    x, xc = np.asarray(x_batch), np.asarray(x_cycled)
    z, zc = np.asarray(z_batch), np.asarray(z_cycled)
    if x.shape != xc.shape or z.shape != zc.shape:
        raise ValueError("cycle shapes do not match their sources")
    _batch_means(x, z)
    data_term = float(np.mean(np.sum((x - xc) ** 2, axis=1)))
    latent_term = float(np.mean(np.sum((z - zc) ** 2, axis=1)))
    return alpha * data_term + beta * latent_term


class Trainer:
    """Owns the four networks and their optimizer states.

    `generator_step` touches only G and H parameters, `discriminator_step`
    only D_x and D_z, mirroring the alternating minimization.
    """

    def __init__(self, config: RoundtripConfig):
        self.config = config
        bank = SeedBank(config.seed)
        slope = config.leaky_slope
        act = nn.LEAKY_RELU
        self.g_net = nn.init_mlp([config.m, *config.g_hidden, config.n], act,
                                 bank.stream("init-g"), slope=slope)
        self.h_net = nn.init_mlp([config.n, *config.h_hidden, config.m], act,
                                 bank.stream("init-h"), slope=slope)
        self.dx_net = nn.init_mlp([config.n, *config.dx_hidden, 1], act,
                                  bank.stream("init-dx"), slope=slope)
        self.dz_net = nn.init_mlp([config.m, *config.dz_hidden, 1], act,
                                  bank.stream("init-dz"), slope=slope)
        adam = lambda net: nn.adam_init(  # noqa: E731
            net.params(), config.learning_rate, config.adam_beta1,
            config.adam_beta2, config.adam_epsilon,
        )
        self._g_state = adam(self.g_net)
        self._h_state = adam(self.h_net)
        self._dx_state = adam(self.dx_net)
        self._dz_state = adam(self.dz_net)

    def generator_step(self, x_batch: np.ndarray, z_batch: np.ndarray) -> dict[str, float]:
        """One Adam update of G and H on adversarial + cycle losses."""
        cfg = self.config
        b = x_batch.shape[0]
        gz, cache_g1 = nn.forward_cached(self.g_net, z_batch)
        hx, cache_h1 = nn.forward_cached(self.h_net, x_batch)
        ghx, cache_g2 = nn.forward_cached(self.g_net, hx)
        hgz, cache_h2 = nn.forward_cached(self.h_net, gz)
        dx_fake, cache_dx = nn.forward_cached(self.dx_net, gz)
        dz_fake, cache_dz = nn.forward_cached(self.dz_net, hx)

        loss_g_adv, loss_h_adv = generator_adv_losses(dx_fake, dz_fake)
        loss_cycle = roundtrip_loss(x_batch, ghx, z_batch, hgz, cfg.alpha, cfg.beta)

        _, grad_gz_adv = nn.backward(self.dx_net, cache_dx, 2.0 * (dx_fake - 1.0) / b)
        _, grad_hx_adv = nn.backward(self.dz_net, cache_dz, 2.0 * (dz_fake - 1.0) / b)
        g2_grads, grad_hx_cyc = nn.backward(
            self.g_net, cache_g2, -2.0 * cfg.alpha * (x_batch - ghx) / b
        )
        h2_grads, grad_gz_cyc = nn.backward(
            self.h_net, cache_h2, -2.0 * cfg.beta * (z_batch - hgz) / b
        )
        g1_grads, _ = nn.backward(self.g_net, cache_g1, grad_gz_adv + grad_gz_cyc)
        h1_grads, _ = nn.backward(self.h_net, cache_h1, grad_hx_adv + grad_hx_cyc)

        g_grads = [a + b_ for a, b_ in zip(g1_grads, g2_grads)]
        h_grads = [a + b_ for a, b_ in zip(h1_grads, h2_grads)]
        nn.adam_step(self.g_net.params(), g_grads, self._g_state)
        nn.adam_step(self.h_net.params(), h_grads, self._h_state)
        total = loss_g_adv + loss_h_adv + loss_cycle
        return {
            "generator": total,
            "g_adv": loss_g_adv,
            "h_adv": loss_h_adv,
            "cycle": loss_cycle,
        }

    def discriminator_step(self, x_batch: np.ndarray, z_batch: np.ndarray) -> dict[str, float]:
        """One Adam update of D_x and D_z on the least-squares real/fake split."""
        b = x_batch.shape[0]
        gz = nn.forward(self.g_net, z_batch)
        hx = nn.forward(self.h_net, x_batch)
        dx_real, cache_r = nn.forward_cached(self.dx_net, x_batch)
        dx_fake, cache_f = nn.forward_cached(self.dx_net, gz)
        dz_real, cache_zr = nn.forward_cached(self.dz_net, z_batch)
        dz_fake, cache_zf = nn.forward_cached(self.dz_net, hx)
        loss_dx, loss_dz = discriminator_losses(dx_real, dx_fake, dz_real, dz_fake)

        gr, _ = nn.backward(self.dx_net, cache_r, 2.0 * (dx_real - 1.0) / b)
        gf, _ = nn.backward(self.dx_net, cache_f, 2.0 * dx_fake / b)
        nn.adam_step(self.dx_net.params(), [a + b_ for a, b_ in zip(gr, gf)], self._dx_state)
        zr, _ = nn.backward(self.dz_net, cache_zr, 2.0 * (dz_real - 1.0) / b)
        zf, _ = nn.backward(self.dz_net, cache_zf, 2.0 * dz_fake / b)
        nn.adam_step(self.dz_net.params(), [a + b_ for a, b_ in zip(zr, zf)], self._dz_state)
        return {"discriminator": loss_dx + loss_dz, "dx": loss_dx, "dz": loss_dz}


class ValidationScorer:
    """Validation mean log-likelihood via importance sampling with draws that
    are fixed across epochs (common random numbers), so epoch-to-epoch and
    sigma-to-sigma comparisons are not dominated by Monte Carlo noise."""

    def __init__(self, val_x: np.ndarray, m: int, num_samples: int,
                 dof: float, scale: float, seed: int, points_cap: int | None = None):
        val_x = np.asarray(val_x, dtype=np.float64)
        if points_cap is not None and val_x.shape[0] > points_cap:
            idx = stream(seed, "val-subset").choice(val_x.shape[0], points_cap, replace=False)
            val_x = val_x[np.sort(idx)]
        self.val_x = val_x
        self.m = m
        self.num_samples = int(num_samples)
        self.dof = float(dof)
        self.scale = float(scale)
        self.seed = int(seed)
        self._log_t_const = (
            math.lgamma(0.5 * (self.dof + m))
            - math.lgamma(0.5 * self.dof)
            - 0.5 * m * (math.log(self.dof) + math.log(math.pi))
            - m * math.log(self.scale)
        )

    def mean_log_likelihood(self, g_net: nn.Mlp, h_net: nn.Mlp, sigmas) -> list[float]:
        """Mean validation log-likelihood for each candidate sigma."""
        sigmas = list(sigmas)
        v = self.val_x.shape[0]
        n = self.val_x.shape[1]
        s = self.num_samples
        totals = np.zeros(len(sigmas))
        chunk = max(1, 2_000_000 // (s * max(self.m, n)))
        for ci, start in enumerate(range(0, v, chunk)):
            block = self.val_x[start : start + chunk]
            c = block.shape[0]
            draws = stream(self.seed, "val-draws", ci)
            g = draws.standard_normal((c, s, self.m))
            u = draws.chisquare(self.dof, (c, s))
            offset = self.scale * g * np.sqrt(self.dof / u)[:, :, None]
            log_q = self._log_t_const - 0.5 * (self.dof + self.m) * np.log1p(
                np.einsum("csm,csm->cs", g, g) / u
            )
            z_tilde = nn.forward_chunked(h_net, block)
            z = z_tilde[:, None, :] + offset
            log_p_z = -0.5 * self.m * LOG_2PI - 0.5 * np.einsum("csm,csm->cs", z, z)
            gz = nn.forward_chunked(g_net, z.reshape(c * s, self.m)).reshape(c, s, n)
            r2 = np.einsum("csn,csn->cs", gz - block[:, None, :], gz - block[:, None, :])
            base = log_p_z - log_q
            for k, sigma in enumerate(sigmas):
                summand = base - r2 / (2.0 * sigma * sigma)
                ll = logsumexp(summand, axis=1) - math.log(s) - 0.5 * n * LOG_2PI - n * math.log(sigma)
                totals[k] += float(np.sum(ll))
        return [t / v for t in totals]


def train(
    data,
    config: RoundtripConfig,
    *,
    val_data=None,
    norm_stats: NormStats | None = None,
) -> tuple[RoundtripModel, TrainLog]:
    """Alternating adversarial/cycle training with sigma selection and early
    stopping on validation log-likelihood.

    When `val_data` is None, 10% of `data` (seeded) is held out for
    validation. Returns the parameters from the best validation epoch.
    """
    data = as_matrix(data, name="training data")
    if data.shape[1] != config.n:
        raise ValueError(f"data has {data.shape[1]} columns, config.n = {config.n}")
    bank = SeedBank(config.seed)
    if val_data is None:
        n_val = int(round(0.1 * data.shape[0]))
        if n_val == 0:
            fit_x, val_x = data, data
        else:
            perm = bank.stream("holdout").permutation(data.shape[0])
            val_x, fit_x = data[np.sort(perm[:n_val])], data[np.sort(perm[n_val:])]
    else:
        fit_x = data
        val_x = as_matrix(val_data, name="validation data")
    if fit_x.shape[0] < config.batch_size:
        raise ValueError(
            f"need at least batch_size={config.batch_size} training rows, got {fit_x.shape[0]}"
        )

    trainer = Trainer(config)
    log = TrainLog()
    if config.max_epochs == 0:
        model = RoundtripModel(
            trainer.g_net, trainer.h_net, config.sigma_grid[0], config.m, config.n, norm_stats
        )
        return model, log

    scorer = ValidationScorer(
        val_x, config.m, config.val_is_samples, config.proposal_dof,
        config.proposal_scale, config.seed, config.val_points_cap,
    )
    noise = bank.stream("train-noise")
    pick = bank.stream("train-pick")
    iters_per_epoch = max(1, math.ceil(fit_x.shape[0] / config.batch_size))

    def select_sigma() -> tuple[float, dict[float, float]]:
        scores = scorer.mean_log_likelihood(trainer.g_net, trainer.h_net, config.sigma_grid)
        best_idx = int(np.argmax(scores))  # grid sorted ascending: ties go to smallest
        return config.sigma_grid[best_idx], dict(zip(config.sigma_grid, scores))

    sigma: float | None = None
    best_ll = -math.inf
    best_g = best_h = None
    best_epoch = 0
    stale = 0

    if config.pretrain_epochs == 0:
        sigma, log.sigma_grid_scores = select_sigma()

    for epoch in range(1, config.max_epochs + 1):
        gen_sum = 0.0
        disc_sum = 0.0
        for it in range(iters_per_epoch):
            z_batch = noise.standard_normal((config.batch_size, config.m))
            x_batch = fit_x[pick.integers(0, fit_x.shape[0], config.batch_size)]
            g_losses = trainer.generator_step(x_batch, z_batch)
            d_losses = trainer.discriminator_step(x_batch, z_batch)
            if not math.isfinite(g_losses["generator"]) or not math.isfinite(d_losses["discriminator"]):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, iteration {it + 1}: "
                    f"generator={g_losses['generator']}, discriminator={d_losses['discriminator']}"
                )
            gen_sum += g_losses["generator"]
            disc_sum += d_losses["discriminator"]

        val_ll = math.nan
        stop = False
        if sigma is None and epoch == config.pretrain_epochs:
            sigma, log.sigma_grid_scores = select_sigma()
            val_ll = log.sigma_grid_scores[sigma]
            best_ll, best_epoch, stale = val_ll, epoch, 0
            best_g, best_h = trainer.g_net.copy(), trainer.h_net.copy()
        elif sigma is not None:
            val_ll = scorer.mean_log_likelihood(trainer.g_net, trainer.h_net, [sigma])[0]
            if val_ll > best_ll:
                best_ll, best_epoch, stale = val_ll, epoch, 0
                best_g, best_h = trainer.g_net.copy(), trainer.h_net.copy()
            else:
                stale += 1
                stop = stale >= config.patience_epochs
        log.records.append(EpochRecord(epoch, gen_sum / iters_per_epoch,
                                       disc_sum / iters_per_epoch, val_ll))
        log.stopped_epoch = epoch
        if stop:
            break

    if sigma is None:  # budget ended before the selection epoch
        sigma = config.sigma_grid[0]
    if best_g is None:
        best_g, best_h = trainer.g_net.copy(), trainer.h_net.copy()
        best_epoch = log.stopped_epoch
    log.chosen_sigma = sigma
    log.best_epoch = best_epoch
    log.best_val_log_likelihood = best_ll if best_ll != -math.inf else math.nan
    model = RoundtripModel(best_g, best_h, float(sigma), config.m, config.n, norm_stats)
    return model, log
