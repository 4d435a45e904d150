"""Target log-densities and analytic scores for Gaussian process models.

Three model classes share one interface. Exact Gaussian regression
integrates the latent function out of a Gaussian likelihood and works
with the marginal directly. Whitened models keep the latent values as
extra coordinates nu with a unit Gaussian prior and map them through the
Cholesky factor of the kernel matrix, f = L nu, so any per-datum
likelihood (Gaussian or Bernoulli with a logistic link) can be attached.
The sparse variant summarizes the latent function at M inducing inputs:
the whitened coordinates live on the inducing set and training latents
are the projection f = K_xz K_zz^{-1} L_zz nu.

Every class exposes the unconstrained-space log target (data likelihood
plus priors plus the transform's log-Jacobian) and its analytic
gradient, which is all the particle optimizer needs. Per-datum
likelihoods additionally support unbiased mini-batch scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit

from . import kernels, params
from .kernels import KernelSpec
from .params import (
    GammaPrior,
    ParamEntry,
    ParamLayout,
    StandardNormalPrior,
    Transform,
)

_LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(RuntimeError):
    """Linear algebra gave up (e.g. Cholesky failed after jitter escalation)."""


@dataclass(frozen=True)
class Standardization:
    """Affine maps that were applied per input column and to the targets."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float | None
    y_std: float | None


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    classification: bool = False
    standardization: Standardization | None = None

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError(f"inputs must form an N x d matrix, got shape {X.shape}")
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} input rows vs {y.size} targets")
        if X.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        if self.classification and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("classification targets must all be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]


class Likelihood(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class ModelSpec:
    """A fully wired target density over one parameter layout.

    ``kernel`` is stored normalized (explicit active dims and
    lengthscales). ``layout`` orders the kernel parameters first, then
    ``noise_variance`` for Gaussian likelihoods, then the ``latent``
    block for whitened models (length N, or M when inducing inputs are
    set).
    """

    kernel: KernelSpec
    likelihood: Likelihood
    layout: ParamLayout
    priors: dict
    inducing: np.ndarray | None = None
    whitened: bool = False
    jitter: float = 1e-6


def build_model(
    kernel: KernelSpec,
    likelihood: Likelihood | str,
    data: Dataset,
    *,
    prior: GammaPrior | None = GammaPrior(1.0, 2.0),
    priors: dict | None = None,
    inducing: np.ndarray | None = None,
    whitened: bool | None = None,
    jitter: float = 1e-6,
) -> ModelSpec:
    """Wire a kernel and likelihood to a dataset.

    ``prior`` is attached to every positive hyperparameter block (pass
    ``priors`` to override the whole map). Bernoulli targets force the
    whitened representation, as do inducing inputs: the latent block
    then lives on the inducing set.
    """
    likelihood = Likelihood(likelihood)
    kern = kernels.normalize(kernel, data.input_dim)
    if likelihood is Likelihood.BERNOULLI:
        if whitened is False:
            raise ValueError("Bernoulli targets require the whitened representation")
        if not np.all(np.isin(data.y, (0.0, 1.0))):
            raise ValueError("Bernoulli likelihood needs 0/1 targets")
        whitened = True
    if inducing is not None:
        if whitened is False:
            raise ValueError("inducing inputs require the whitened representation")
        inducing = np.asarray(inducing, dtype=float)
        if inducing.ndim == 1:
            inducing = inducing.reshape(-1, 1)
        if inducing.shape[1] != data.input_dim:
            raise ValueError("inducing inputs must match the data dimensionality")
        if not (1 <= inducing.shape[0] <= data.n):
            raise ValueError("need between 1 and N inducing inputs")
        if not np.all(np.isfinite(inducing)):
            raise ValueError("inducing inputs must be finite")
        whitened = True
    if whitened is None:
        whitened = False

    entries = [
        ParamEntry(name, length, Transform.SOFTPLUS)
        for name, length in kernels.param_entries(kern, data.input_dim)
    ]
    if likelihood is Likelihood.GAUSSIAN:
        entries.append(ParamEntry("noise_variance", 1, Transform.SOFTPLUS))
    if whitened:
        latent_len = inducing.shape[0] if inducing is not None else data.n
        entries.append(ParamEntry("latent", latent_len, Transform.IDENTITY))
    layout = ParamLayout(tuple(entries))

    if priors is None:
        priors = {
            e.name: (StandardNormalPrior() if e.name == "latent" else prior)
            for e in entries
        }
    return ModelSpec(
        kernel=kern,
        likelihood=likelihood,
        layout=layout,
        priors=dict(priors),
        inducing=inducing,
        whitened=whitened,
        jitter=float(jitter),
    )


def select_inducing(X, m: int, seed: int = 0) -> np.ndarray:
    """Greedy farthest-point subset of the rows of X (seeded start)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= {n}, got {m}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    dist = np.linalg.norm(X - X[chosen[0]], axis=1)
    while len(chosen) < m:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(X - X[nxt], axis=1))
    return X[chosen].copy()


def safe_cholesky(
    matrix: np.ndarray, jitters: tuple[float, ...] = (1e-6, 1e-5, 1e-4)
) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    eye = np.eye(matrix.shape[0])
    for j in jitters:
        try:
            L = np.linalg.cholesky(matrix + j * eye if j > 0 else matrix)
        except np.linalg.LinAlgError:
            continue
        return L, float(j)
    raise NumericalError(
        f"Cholesky failed after escalating jitter to {jitters[-1]:g}"
    )


def _chol_derivative(L: np.ndarray, dK: np.ndarray) -> np.ndarray:
    # directional derivative of the lower Cholesky factor:
    # dL = L Phi(L^{-1} dK L^{-T}), Phi = lower triangle with halved diagonal
    Y = solve_triangular(L, dK, lower=True)
    S = solve_triangular(L, Y.T, lower=True).T
    Phi = np.tril(S)
    Phi[np.diag_indices_from(Phi)] *= 0.5
    return L @ Phi


def _gauss_loglik(y: np.ndarray, f: np.ndarray, noise_var: float) -> np.ndarray:
    return -0.5 * (_LOG_2PI + math.log(noise_var)) - (y - f) ** 2 / (2.0 * noise_var)


def _bernoulli_loglik(y: np.ndarray, f: np.ndarray) -> np.ndarray:
    # log p(y=1|f) = -log(1 + e^{-f}); stable for both labels
    return y * f - np.logaddexp(0.0, f)


@dataclass
class _Unpacked:
    c: np.ndarray
    spec: KernelSpec
    noise_var: float | None
    nu: np.ndarray | None
    kernel_dim: int


def _unpack(lam, model: ModelSpec, data: Dataset) -> _Unpacked:
    lam = np.asarray(lam, dtype=float).ravel()
    c = params.forward(lam, model.layout)
    sl = model.layout.slices()
    kernel_dim = kernels.param_count(model.kernel, data.input_dim)
    spec = kernels.with_values(model.kernel, c[:kernel_dim], data.input_dim)
    noise_var = (
        float(c[sl["noise_variance"]][0])
        if model.likelihood is Likelihood.GAUSSIAN
        else None
    )
    nu = c[sl["latent"]] if model.whitened else None
    return _Unpacked(c, spec, noise_var, nu, kernel_dim)


@dataclass
class _LatentOperator:
    """Pieces of the map nu -> f shared by value and gradient paths."""

    A: np.ndarray  # f = A @ nu
    L: np.ndarray  # Cholesky factor behind A
    w: np.ndarray | None  # L^{-T} nu (sparse only)
    X: np.ndarray
    Z: np.ndarray | None


def _latent_operator(spec: KernelSpec, model: ModelSpec, data: Dataset, nu: np.ndarray) -> _LatentOperator:
    ladder = (model.jitter, model.jitter * 10.0, model.jitter * 100.0)
    if model.inducing is None:
        K = kernels.gram(spec, data.X, jitter=0.0).values
        L, _ = safe_cholesky(K, ladder)
        return _LatentOperator(A=L, L=L, w=None, X=data.X, Z=None)
    Z = model.inducing
    Kzz = kernels.gram(spec, Z, jitter=0.0).values
    Lz, used = safe_cholesky(Kzz, ladder)
    Kxz = kernels.gram(spec, data.X, Z, jitter=used).values
    A = solve_triangular(Lz, Kxz.T, lower=True).T
    w = solve_triangular(Lz, nu, trans="T", lower=True)
    return _LatentOperator(A=A, L=Lz, w=w, X=data.X, Z=Z)


def _marginal_pieces(spec: KernelSpec, noise_var: float, data: Dataset):
    K = kernels.gram(spec, data.X, jitter=0.0).values
    K = K + noise_var * np.eye(data.n)
    L, _ = safe_cholesky(K, (0.0, 1e-6, 1e-5, 1e-4))
    alpha = cho_solve((L, True), data.y)
    return L, alpha


def log_marginal_gaussian(theta, model: ModelSpec, data: Dataset) -> float:
    """Marginal log-likelihood of a Gaussian-noise model at constrained theta.

    ``theta`` stacks the kernel parameters followed by the noise
    variance (the non-latent part of the layout).
    """
    if model.likelihood is not Likelihood.GAUSSIAN:
        raise ValueError("the marginal is only available for Gaussian noise")
    theta = np.asarray(theta, dtype=float).ravel()
    kernel_dim = kernels.param_count(model.kernel, data.input_dim)
    if theta.size != kernel_dim + 1:
        raise ValueError(f"expected {kernel_dim + 1} hyperparameters, got {theta.size}")
    spec = kernels.with_values(model.kernel, theta[:kernel_dim], data.input_dim)
    noise_var = float(theta[-1])
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    L, alpha = _marginal_pieces(spec, noise_var, data)
    return float(
        -0.5 * data.y @ alpha
        - np.sum(np.log(np.diag(L)))
        - 0.5 * data.n * _LOG_2PI
    )


def log_joint_whitened(theta, nu, model: ModelSpec, data: Dataset) -> float:
    """Whitened joint: sum_i log p(y_i | f_i) + N(nu; 0, I) + priors on theta."""
    if not model.whitened:
        raise ValueError("model has no whitened latent block")
    theta = np.asarray(theta, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    c = np.concatenate([theta, nu])
    if c.size != model.layout.dim:
        raise ValueError(f"expected {model.layout.dim} values, got {c.size}")
    up = _Unpacked(
        c=c,
        spec=kernels.with_values(
            model.kernel, theta[: kernels.param_count(model.kernel, data.input_dim)], data.input_dim
        ),
        noise_var=float(theta[-1]) if model.likelihood is Likelihood.GAUSSIAN else None,
        nu=nu,
        kernel_dim=kernels.param_count(model.kernel, data.input_dim),
    )
    ll = _data_loglik(up, model, data)
    pv, _ = params.log_prior(c, model.priors, model.layout)
    return ll + pv


def _data_loglik(up: _Unpacked, model: ModelSpec, data: Dataset) -> float:
    if not model.whitened:
        L, alpha = _marginal_pieces(up.spec, up.noise_var, data)
        return float(
            -0.5 * data.y @ alpha
            - np.sum(np.log(np.diag(L)))
            - 0.5 * data.n * _LOG_2PI
        )
    op = _latent_operator(up.spec, model, data, up.nu)
    f = op.A @ up.nu
    if model.likelihood is Likelihood.GAUSSIAN:
        return float(np.sum(_gauss_loglik(data.y, f, up.noise_var)))
    return float(np.sum(_bernoulli_loglik(data.y, f)))


def log_target(lam, model: ModelSpec, data: Dataset) -> float:
    """The density the particles climb, in unconstrained coordinates.

    Data likelihood plus priors (including the unit Gaussian on the
    latent block) plus the log-Jacobian of the softplus map.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    up = _unpack(lam, model, data)
    ll = _data_loglik(up, model, data)
    pv, _ = params.log_prior(up.c, model.priors, model.layout)
    return ll + pv + params.log_abs_det_jacobian(lam, model.layout)


def score(lam, model: ModelSpec, data: Dataset) -> np.ndarray:
    """Gradient of :func:`log_target` w.r.t. the unconstrained vector."""
    return _score(lam, model, data, batch=None)


def minibatch_score(lam, model: ModelSpec, data: Dataset, batch) -> np.ndarray:
    """Unbiased score estimate from an index subset of the data.

    The prior part is kept whole; the per-datum likelihood part is
    summed over the subset and rescaled by N / |batch|. Only whitened
    (including sparse) models factorize per datum, so only they support
    mini-batching.
    """
    if not model.whitened:
        raise ValueError(
            "mini-batch scores need a per-datum likelihood; "
            "the marginal Gaussian model does not factorize"
        )
    batch = np.asarray(batch, dtype=int).ravel()
    if batch.size == 0:
        raise ValueError("batch is empty")
    if np.any(batch < 0) or np.any(batch >= data.n):
        raise ValueError("batch indices out of range")
    return _score(lam, model, data, batch=batch)


def _score(lam, model: ModelSpec, data: Dataset, batch) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).ravel()
    up = _unpack(lam, model, data)
    sl = model.layout.slices()
    dll_dc = np.zeros(model.layout.dim)

    if not model.whitened:
        L, alpha = _marginal_pieces(up.spec, up.noise_var, data)
        Kinv = cho_solve((L, True), np.eye(data.n))
        Adiff = np.outer(alpha, alpha) - Kinv
        for i in range(up.kernel_dim):
            dK = kernels.gram_grad(up.spec, data.X, i)
            dll_dc[i] = 0.5 * np.sum(Adiff * dK)
        dll_dc[sl["noise_variance"]] = 0.5 * (alpha @ alpha - np.trace(Kinv))
    else:
        op = _latent_operator(up.spec, model, data, up.nu)
        f = op.A @ up.nu
        if model.likelihood is Likelihood.GAUSSIAN:
            g = (data.y - f) / up.noise_var
        else:
            g = data.y - expit(f)
        if batch is None:
            gw = g
            scale = 1.0
        else:
            scale = data.n / batch.size
            gw = np.zeros(data.n)
            gw[batch] = g[batch] * scale
        dll_dc[sl["latent"]] = op.A.T @ gw
        for i in range(up.kernel_dim):
            if op.Z is None:
                dK = kernels.gram_grad(up.spec, data.X, i)
                df = _chol_derivative(op.L, dK) @ up.nu
            else:
                dKzz = kernels.gram_grad(up.spec, op.Z, i)
                dKxz = kernels.gram_grad(up.spec, data.X, i, x2=op.Z)
                dLz = _chol_derivative(op.L, dKzz)
                df = dKxz @ op.w - op.A @ (dLz.T @ op.w)
            dll_dc[i] = gw @ df
        if model.likelihood is Likelihood.GAUSSIAN:
            resid2 = (data.y - f) ** 2
            dnv = -0.5 / up.noise_var + resid2 / (2.0 * up.noise_var**2)
            if batch is None:
                dll_dc[sl["noise_variance"]] = np.sum(dnv)
            else:
                dll_dc[sl["noise_variance"]] = scale * np.sum(dnv[batch])

    _, dprior_dc = params.log_prior(up.c, model.priors, model.layout)
    chain = params.forward_grad(lam, model.layout)
    return (dll_dc + dprior_dc) * chain + params.log_abs_det_jacobian_grad(
        lam, model.layout
    )


def sparse_latent_predictor(theta, nu, model: ModelSpec, x_query) -> tuple[np.ndarray, np.ndarray]:
    """Projected-process predictor from whitened inducing values.

    With u = L_zz nu, returns mean = K_qz K_zz^{-1} u per query row and
    the diagonal of K_qq - K_qz K_zz^{-1} K_zq (clamped at zero).
    """
    if model.inducing is None:
        raise ValueError("model has no inducing inputs")
    theta = np.asarray(theta, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    kernel_dim = kernels.param_count(model.kernel, model.inducing.shape[1])
    spec = kernels.with_values(model.kernel, theta[:kernel_dim], model.inducing.shape[1])
    Z = model.inducing
    if nu.size != Z.shape[0]:
        raise ValueError(f"expected {Z.shape[0]} whitened values, got {nu.size}")
    Xq = np.asarray(x_query, dtype=float)
    if Xq.ndim == 1:
        Xq = Xq.reshape(-1, 1)
    ladder = (model.jitter, model.jitter * 10.0, model.jitter * 100.0)
    Kzz = kernels.gram(spec, Z, jitter=0.0).values
    Lz, used = safe_cholesky(Kzz, ladder)
    Kqz = kernels.gram(spec, Xq, Z, jitter=used).values
    V = solve_triangular(Lz, Kqz.T, lower=True)
    mean = V.T @ nu
    # prior variance at the query points carries no jitter
    kqq = np.array([kernels.eval_pair(spec, row, row) for row in Xq])
    var = np.maximum(kqq - np.sum(V * V, axis=0), 0.0)
    return mean, var
