"""Pointwise log-density evaluation for a trained model.

The model says x = G(z) + eps with z standard normal in R^m and eps ~ N(0,
sigma^2 I_n), so the density of a point is the integral of p(x|z) p(z) over
the latent space. Two evaluators are provided:

* importance sampling with a spherical Student-t proposal centered at H(x),
  averaging p(x|z_i) p(z_i)/q(z_i) in the log domain;
* a closed form from a quadratic expansion of G around H(x), exact whenever
  G is affine.

Everything stays in log space; densities of high-dimensional points underflow
linear-domain arithmetic long before they stop being meaningful.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import nn, rng as rng_mod
from .numerics import LOG_2PI, NumericalError, as_vector, logsumexp

DEFAULT_IS_SAMPLES = 40_000
DEFAULT_PROPOSAL_DOF = 5.0
DEFAULT_PROPOSAL_SCALE = 1.0


def log_base_density(z) -> float:
    """Log density of the standard Gaussian latent prior at z."""
    z = as_vector(z, name="z")
    return float(-0.5 * len(z) * LOG_2PI - 0.5 * z @ z)


def log_base_density_rows(z: np.ndarray) -> np.ndarray:
    m = z.shape[1]
    return -0.5 * m * LOG_2PI - 0.5 * np.einsum("ij,ij->i", z, z)


def log_conditional(x, z, model) -> float:
    """Log of p(x | z) = N(x; G(z), sigma^2 I)."""
    x = as_vector(x, name="x")
    z = as_vector(z, name="z")
    gz = nn.forward(model.g_net, z[None, :])[0]
    r2 = float(np.sum((x - gz) ** 2))
    n = len(x)
    return -0.5 * n * LOG_2PI - n * math.log(model.sigma) - r2 / (2.0 * model.sigma**2)


@dataclass
class StudentTProposal:
    """Spherical multivariate Student-t; the importance distribution q(z)."""

    center: np.ndarray
    scale: float = DEFAULT_PROPOSAL_SCALE
    dof: float = DEFAULT_PROPOSAL_DOF

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if self.scale <= 0 or self.dof <= 0:
            raise ValueError("proposal scale and dof must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def _log_norm_const(self) -> float:
        m, nu, s = self.dim, self.dof, self.scale
        return (
            math.lgamma(0.5 * (nu + m))
            - math.lgamma(0.5 * nu)
            - 0.5 * m * (math.log(nu) + math.log(math.pi))
            - m * math.log(s)
        )

    def log_density(self, z: np.ndarray) -> np.ndarray:
        """Log q at each row of z."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        d2 = np.sum((z - self.center) ** 2, axis=1)
        nu, s = self.dof, self.scale
        return self._log_norm_const() - 0.5 * (nu + self.dim) * np.log1p(d2 / (nu * s * s))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw rows via the Gaussian over sqrt(chi-squared/dof) ratio."""
        g = rng_mod.gaussian(rng, (count, self.dim))
        u = rng_mod.chi_squared(rng, self.dof, (count,))
        return self.center + self.scale * g / np.sqrt(u / self.dof)[:, None]


_forward_chunked = nn.forward_chunked


def _point_stream(seed: int, x: np.ndarray) -> np.random.Generator:
    """Per-point RNG derived from the query content, so batch order, chunking,
    and parallelism never change which draws a point sees."""
    tag = int.from_bytes(hashlib.sha256(x.tobytes()).digest()[:8], "little")
    return rng_mod.stream(seed, "is-point", tag)


def estimate_is(
    x,
    model,
    num_samples: int = DEFAULT_IS_SAMPLES,
    *,
    proposal_scale: float = DEFAULT_PROPOSAL_SCALE,
    proposal_dof: float = DEFAULT_PROPOSAL_DOF,
    seed: int = 0,
    return_diagnostics: bool = False,
):
    """Importance-sampled log density of a single point.

    Draws num_samples latent points from the Student-t proposal centered at
    H(x) and returns log((1/N) sum_i p(x|z_i) p(z_i) / q(z_i)) via
    log-sum-exp. Deterministic for a given (seed, x).

    With return_diagnostics=True also returns the delta-method standard error
    of the log estimate, computed from the empirical weighted summands.
    """
    x = as_vector(x, name="x")
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    if x.shape[0] != model.n:
        raise ValueError(f"point has dim {x.shape[0]}, model expects {model.n}")
    center = nn.forward(model.h_net, x[None, :])[0]
    proposal = StudentTProposal(center, proposal_scale, proposal_dof)
    z = proposal.sample(_point_stream(seed, x), num_samples)
    log_summands = _log_is_summands(x, z, proposal, model)
    log_p = float(logsumexp(log_summands) - math.log(num_samples))
    if not return_diagnostics:
        return log_p
    m2 = float(logsumexp(2.0 * log_summands) - math.log(num_samples))
    rel_var = math.expm1(m2 - 2.0 * (log_p))
    std_err = math.sqrt(max(rel_var, 0.0) / num_samples)
    return log_p, std_err


def _log_is_summands(x, z, proposal, model) -> np.ndarray:
    gz = _forward_chunked(model.g_net, z)
    r2 = np.sum((x[None, :] - gz) ** 2, axis=1)
    n = len(x)
    log_cond = -0.5 * n * LOG_2PI - n * math.log(model.sigma) - r2 / (2.0 * model.sigma**2)
    log_w = log_base_density_rows(z) - proposal.log_density(z)
    if not np.all(np.isfinite(log_w)):
        raise NumericalError("non-finite importance weight; model output may be corrupt")
    return log_cond + log_w


@dataclass
class LaplaceIntermediates:
    """Pieces of the quadratic-expansion closed form, exposed for inspection."""

    z_tilde: np.ndarray  # H(x)
    jac: np.ndarray  # (n, m) Jacobian of G at z_tilde
    gram: np.ndarray  # J^T J
    lin: np.ndarray  # J^T (x - G(z_tilde))
    lam: float  # sigma^-2
    sigma_mat: np.ndarray  # (I + lam * gram)^-1
    mu: np.ndarray  # sigma_mat @ (lam * lin - z_tilde)
    c1: float  # |z_tilde|^2 + lam * |x - G(z_tilde)|^2
    c: float  # c1 - mu^T sigma_mat^-1 mu
    log_det_sigma: float


def _chol_solve_batched(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (L L^T) y = rhs for batched lower-triangular chol (P, m, m), rhs (P, m)."""
    p, m, _ = chol.shape
    y = np.zeros_like(rhs)
    for i in range(m):
        acc = rhs[:, i].copy()
        for j in range(i):
            acc -= chol[:, i, j] * y[:, j]
        y[:, i] = acc / chol[:, i, i]
    out = np.zeros_like(rhs)
    for i in range(m - 1, -1, -1):
        acc = y[:, i].copy()
        for j in range(i + 1, m):
            acc -= chol[:, j, i] * out[:, j]
        out[:, i] = acc / chol[:, i, i]
    return out


def _laplace_rows(xs: np.ndarray, model) -> tuple[np.ndarray, dict]:
    """Vectorized closed-form log densities for the rows of xs.

    Also returns the intermediates of the last chunk for `laplace_intermediates`.
    """
    sigma = model.sigma
    lam = 1.0 / (sigma * sigma)
    n = model.n
    m = model.m
    z_tilde = _forward_chunked(model.h_net, xs)
    g_at = _forward_chunked(model.g_net, z_tilde)
    jac = nn.jacobian_batch(model.g_net, z_tilde)  # (P, n, m)
    resid = xs - g_at
    gram = np.einsum("pnm,pnk->pmk", jac, jac)
    lin = np.einsum("pnm,pn->pm", jac, resid)
    ipa = lam * gram
    idx = np.arange(m)
    ipa[:, idx, idx] += 1.0
    try:
        chol = np.linalg.cholesky(ipa)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "Cholesky of (I + sigma^-2 J^T J) failed; model weights are likely corrupt"
        ) from exc
    log_det_sigma = -2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    u = lam * lin - z_tilde
    mu = _chol_solve_batched(chol, u)  # = Sigma @ u
    c1 = np.einsum("pm,pm->p", z_tilde, z_tilde) + lam * np.einsum("pn,pn->p", resid, resid)
    c = c1 - np.einsum("pm,pm->p", u, mu)
    log_p = -0.5 * n * LOG_2PI - n * math.log(sigma) + 0.5 * log_det_sigma - 0.5 * c
    last = {
        "z_tilde": z_tilde,
        "jac": jac,
        "gram": gram,
        "lin": lin,
        "lam": lam,
        "chol": chol,
        "mu": mu,
        "c1": c1,
        "c": c,
        "log_det_sigma": log_det_sigma,
    }
    return log_p, last


def estimate_laplace(x, model) -> float:
    """Closed-form log density at a single point (exact for affine G)."""
    x = as_vector(x, name="x")
    if x.shape[0] != model.n:
        raise ValueError(f"point has dim {x.shape[0]}, model expects {model.n}")
    log_p, _ = _laplace_rows(x[None, :], model)
    return float(log_p[0])


def laplace_intermediates(x, model) -> LaplaceIntermediates:
    """All intermediate quantities of the closed form at one point."""
    x = as_vector(x, name="x")
    log_p, raw = _laplace_rows(x[None, :], model)
    eye = np.eye(model.m)
    # Sigma = (I + lam A)^-1 via m triangular solves against the identity.
    sigma_mat = np.column_stack(
        [_chol_solve_batched(raw["chol"], eye[i][None, :])[0] for i in range(model.m)]
    )
    return LaplaceIntermediates(
        z_tilde=raw["z_tilde"][0],
        jac=raw["jac"][0],
        gram=raw["gram"][0],
        lin=raw["lin"][0],
        lam=raw["lam"],
        sigma_mat=sigma_mat,
        mu=raw["mu"][0],
        c1=float(raw["c1"][0]),
        c=float(raw["c"][0]),
        log_det_sigma=float(raw["log_det_sigma"][0]),
    )


METHOD_IS = "is"
METHOD_LP = "lp"


def _estimate_rows_serial(
    xs: np.ndarray,
    model,
    method: str,
    num_samples: int,
    proposal_scale: float,
    proposal_dof: float,
    seed: int,
) -> np.ndarray:
    if method == METHOD_LP:
        out = np.empty(xs.shape[0])
        chunk = max(1, 65_536 // max(model.n * model.m, 1))
        for i in range(0, xs.shape[0], chunk):
            out[i : i + chunk], _ = _laplace_rows(xs[i : i + chunk], model)
        return out
    if method != METHOD_IS:
        raise ValueError(f"unknown estimation method {method!r}")
    out = np.empty(xs.shape[0])
    rows_per_group = max(1, 400_000 // max(num_samples, 1))
    for start in range(0, xs.shape[0], rows_per_group):
        block = xs[start : start + rows_per_group]
        centers = _forward_chunked(model.h_net, block)
        z_parts = []
        proposals = []
        for row, center in zip(block, centers):
            proposal = StudentTProposal(center, proposal_scale, proposal_dof)
            proposals.append(proposal)
            z_parts.append(proposal.sample(_point_stream(seed, row), num_samples))
        z_all = np.concatenate(z_parts, axis=0)
        gz_all = _forward_chunked(model.g_net, z_all)
        n = model.n
        base = -0.5 * n * LOG_2PI - n * math.log(model.sigma)
        inv_two_s2 = 1.0 / (2.0 * model.sigma**2)
        for j, (row, proposal) in enumerate(zip(block, proposals)):
            z = z_parts[j]
            gz = gz_all[j * num_samples : (j + 1) * num_samples]
            r2 = np.sum((row[None, :] - gz) ** 2, axis=1)
            log_cond = base - r2 * inv_two_s2
            log_w = log_base_density_rows(z) - proposal.log_density(z)
            out[start + j] = logsumexp(log_cond + log_w) - math.log(num_samples)
    return out


_WORKER_ARGS: dict = {}


def _worker_init(model, method, num_samples, proposal_scale, proposal_dof, seed):
    _WORKER_ARGS.update(
        model=model, method=method, num_samples=num_samples,
        proposal_scale=proposal_scale, proposal_dof=proposal_dof, seed=seed,
    )


def _worker_run(xs_slice: np.ndarray) -> np.ndarray:
    a = _WORKER_ARGS
    return _estimate_rows_serial(
        xs_slice, a["model"], a["method"], a["num_samples"],
        a["proposal_scale"], a["proposal_dof"], a["seed"],
    )


def batch_estimate(
    xs,
    model,
    method: str = METHOD_IS,
    *,
    num_samples: int = DEFAULT_IS_SAMPLES,
    proposal_scale: float = DEFAULT_PROPOSAL_SCALE,
    proposal_dof: float = DEFAULT_PROPOSAL_DOF,
    seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Log density for every row of xs.

    Results are identical regardless of `workers` because each point's draws
    come from its own content-derived stream; non-finite results are reported
    with the offending row index.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.n:
        raise ValueError(f"points shape {xs.shape} incompatible with model dim {model.n}")
    if not np.all(np.isfinite(xs)):
        bad = int(np.argwhere(~np.all(np.isfinite(xs), axis=1))[0][0])
        raise ValueError(f"non-finite query point at row {bad}")
    if xs.shape[0] == 0:
        return np.empty(0)
    if workers <= 1 or xs.shape[0] < 4:
        out = _estimate_rows_serial(
            xs, model, method, num_samples, proposal_scale, proposal_dof, seed
        )
    else:
        slices = np.array_split(np.arange(xs.shape[0]), workers)
        init_args = (model, method, num_samples, proposal_scale, proposal_dof, seed)
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=init_args) as pool:
            parts = list(pool.map(_worker_run, [xs[s] for s in slices if len(s)]))
        out = np.concatenate(parts, axis=0)
    if not np.all(np.isfinite(out)):
        bad = int(np.argwhere(~np.isfinite(out))[0][0])
        raise NumericalError(f"non-finite log density for row {bad}")
    return out
