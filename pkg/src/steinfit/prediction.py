"""Pooled Monte Carlo predictions from a particle ensemble.

Each particle conditions its own Gaussian process on the training data
(noisy analytic conditioning for the exact marginal model, noise-free
conditioning on f = L nu for whitened models, the projected-process
predictor for sparse models), draws latent samples independently per
query point, pushes them through the likelihood, and the draws of all
particles are pooled into one predictive mean and population variance
per query point. Latent draws are retained so the metrics can evaluate
mixture log-densities sample by sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, logsumexp

from . import kernels, params
from .models import (
    Dataset,
    Likelihood,
    ModelSpec,
    Standardization,
    _unpack,
    safe_cholesky,
    sparse_latent_predictor,
)
from .svgd import ParticleEnsemble

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PredictiveSummary:
    """Pooled predictive moments plus the raw draws behind them.

    ``mean`` and ``variance`` are the sample mean and population
    variance of the pooled outcome draws (observation noise included for
    regression, 0/1 labels for classification). ``prob`` is the pooled
    predictive probability for classification, ``None`` otherwise.
    ``outcome_samples`` and ``latent_samples`` stack the draws of all
    particles in particle-major order (particle j owns rows
    j*n_samples through (j+1)*n_samples - 1); ``noise_variances`` holds
    the drawing particle's noise variance per row (regression only).
    """

    mean: np.ndarray
    variance: np.ndarray
    sample_count: int
    prob: np.ndarray | None
    outcome_samples: np.ndarray
    latent_samples: np.ndarray
    noise_variances: np.ndarray | None


class Metrics(NamedTuple):
    rmse: float
    test_log_likelihood: float


def _conditional(up, model: ModelSpec, data: Dataset, xq: np.ndarray):
    """Per-particle latent predictive mean and diagonal variance at xq."""
    if model.inducing is not None:
        theta = up.c[: up.kernel_dim + (1 if up.noise_var is not None else 0)]
        return sparse_latent_predictor(theta, up.nu, model, xq)
    if model.whitened:
        ladder = (model.jitter, model.jitter * 10.0, model.jitter * 100.0)
        K = kernels.gram(up.spec, data.X, jitter=0.0).values
        L, _ = safe_cholesky(K, ladder)
        f = L @ up.nu
        alpha = cho_solve((L, True), f)
    else:
        K = kernels.gram(up.spec, data.X, jitter=0.0).values
        K = K + up.noise_var * np.eye(data.n)
        L, _ = safe_cholesky(K, (0.0, 1e-6, 1e-5, 1e-4))
        alpha = cho_solve((L, True), data.y)
    Kqx = kernels.gram(up.spec, xq, data.X, jitter=0.0).values
    mean = Kqx @ alpha
    V = solve_triangular(L, Kqx.T, lower=True)
    kqq = np.array([kernels.eval_pair(up.spec, row, row) for row in xq])
    var = np.maximum(kqq - np.sum(V * V, axis=0), 0.0)
    return mean, var


def _substream(rng, index: int) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng.spawn(1)[0]
    base = 0 if rng is None else int(rng)
    return np.random.default_rng([base, index])


def predict(
    ensemble: ParticleEnsemble,
    model: ModelSpec,
    data: Dataset,
    x_query,
    n_samples: int = 20,
    rng=0,
) -> PredictiveSummary:
    """Pool n_samples outcome draws per particle at every query row.

    Query points are sampled independently of each other (diagonal
    covariance). ``rng`` may be an integer seed (per-particle substreams
    are derived from it by particle index, so results do not depend on
    evaluation order) or a Generator.
    """
    if n_samples < 1:
        raise ValueError("need at least one draw per particle")
    xq = np.asarray(x_query, dtype=float)
    if xq.ndim == 1:
        xq = xq.reshape(-1, 1)
    if xq.shape[0] < 1:
        raise ValueError("no query points")
    if xq.shape[1] != data.input_dim:
        raise ValueError(
            f"query dimensionality {xq.shape[1]} does not match data ({data.input_dim})"
        )
    P = ensemble.particles

    outcome_parts = []
    latent_parts = []
    noise_parts = []
    for j, row in enumerate(P):
        up = _unpack(row, model, data)
        mean, var = _conditional(up, model, data, xq)
        sub = _substream(rng, j)
        f = mean + np.sqrt(var) * sub.standard_normal((n_samples, xq.shape[0]))
        latent_parts.append(f)
        if model.likelihood is Likelihood.GAUSSIAN:
            y = f + math.sqrt(up.noise_var) * sub.standard_normal(f.shape)
            noise_parts.append(np.full(n_samples, up.noise_var))
        else:
            y = (sub.random(f.shape) < expit(f)).astype(float)
        outcome_parts.append(y)

    outcomes = np.concatenate(outcome_parts, axis=0)
    latents = np.concatenate(latent_parts, axis=0)
    prob = None
    if model.likelihood is Likelihood.BERNOULLI:
        prob = expit(latents).mean(axis=0)
    return PredictiveSummary(
        mean=outcomes.mean(axis=0),
        variance=outcomes.var(axis=0),
        sample_count=outcomes.shape[0],
        prob=prob,
        outcome_samples=outcomes,
        latent_samples=latents,
        noise_variances=np.concatenate(noise_parts) if noise_parts else None,
    )


def metrics(
    summary: PredictiveSummary,
    y_true,
    model: ModelSpec,
    standardization: Standardization | None = None,
) -> Metrics:
    """Root mean squared error and mixture test log-likelihood.

    ``y_true`` is given on the model's (possibly standardized) scale;
    both metrics are reported after undoing the target standardization.
    The log-likelihood averages, over test points, the log of the mean
    predictive density across all retained draws.
    """
    y = np.asarray(y_true, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("no test targets")
    if y.size != summary.mean.size:
        raise ValueError(
            f"{y.size} targets vs {summary.mean.size} predictions"
        )
    s_y, mu_y = 1.0, 0.0
    if standardization is not None and standardization.y_std is not None:
        s_y, mu_y = float(standardization.y_std), float(standardization.y_mean)

    if model.likelihood is Likelihood.BERNOULLI:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("classification targets must be 0/1")
        p = expit(summary.latent_samples)  # (S, Q)
        mix = p.mean(axis=0)
        point_ll = np.log(np.where(y == 1.0, mix, 1.0 - mix))
        rmse = float(np.sqrt(np.mean((summary.mean - y) ** 2)))
        return Metrics(rmse=rmse, test_log_likelihood=float(np.mean(point_ll)))

    yhat = summary.mean * s_y + mu_y
    yraw = y * s_y + mu_y
    rmse = float(np.sqrt(np.mean((yhat - yraw) ** 2)))
    m = summary.latent_samples * s_y + mu_y  # (S, Q)
    v = summary.noise_variances[:, None] * s_y**2
    log_dens = -0.5 * (_LOG_2PI + np.log(v)) - (yraw[None, :] - m) ** 2 / (2.0 * v)
    point_ll = logsumexp(log_dens, axis=0) - math.log(log_dens.shape[0])
    return Metrics(rmse=rmse, test_log_likelihood=float(np.mean(point_ll)))
