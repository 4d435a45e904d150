"""Shared helpers: finite differences and random model instances."""

from __future__ import annotations

import numpy as np
import pytest

from steinfit import Dataset, build_model, make, select_inducing
from steinfit.kernels import KernelSpec


class GaussianTarget:
    """Fixed multivariate normal with the particle-loop target interface."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.precision = np.linalg.inv(self.cov)
        sign, logdet = np.linalg.slogdet(self.cov)
        assert sign > 0
        self._log_norm = -0.5 * (
            self.mean.size * np.log(2.0 * np.pi) + logdet
        )

    def initial_particles(self, j, rng):
        return rng.standard_normal((j, self.mean.size))

    def sample_batch(self, rng):
        return None

    def scores(self, particles, batch):
        return -(particles - self.mean) @ self.precision

    def log_densities(self, particles):
        centered = particles - self.mean
        quad = np.einsum("jd,dk,jk->j", centered, self.precision, centered)
        return self._log_norm - 0.5 * quad


def central_difference(f, x, step=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    for i in range(x.size):
        bump = np.zeros(x.size)
        bump[i] = step
        grad[i] = (f(x + bump) - f(x - bump)) / (2.0 * step)
    return grad


def relative_l2(approx, reference):
    """L2 distance scaled by the reference norm (guarded near zero)."""
    ref = np.asarray(reference, dtype=float)
    denom = max(float(np.linalg.norm(ref)), 1e-8)
    return float(np.linalg.norm(np.asarray(approx, dtype=float) - ref)) / denom


def random_kernel(rng, input_dim: int) -> KernelSpec:
    """A random leaf or two-leaf composite over input_dim columns."""
    choice = rng.integers(6)
    if choice == 0:
        return make("se")
    if choice == 1:
        return make("se", lengthscales=tuple(rng.uniform(0.5, 1.5, input_dim)))
    if choice == 2:
        return make("matern12")
    if choice == 3:
        return make("matern52")
    if choice == 4:
        return make("polynomial", degree=int(rng.integers(1, 4)))
    return make("se") + make("white")


def random_instance(rng, model_class: str, max_n: int = 8):
    """A random (model, data, unconstrained particle) triple.

    ``model_class`` is one of "exact", "bernoulli", "sparse",
    "whitened_gaussian".
    """
    n = int(rng.integers(4, max_n + 1))
    d = int(rng.integers(1, 3))
    X = rng.standard_normal((n, d))
    kern = random_kernel(rng, d)
    if model_class == "bernoulli":
        y = (rng.random(n) < 0.5).astype(float)
        data = Dataset(X, y, classification=True)
        model = build_model(kern, "bernoulli", data)
    else:
        y = rng.standard_normal(n)
        data = Dataset(X, y)
        if model_class == "sparse":
            m = int(rng.integers(1, n + 1))
            Z = select_inducing(X, m, seed=int(rng.integers(10_000)))
            model = build_model(kern, "gaussian", data, inducing=Z)
        elif model_class == "whitened_gaussian":
            model = build_model(kern, "gaussian", data, whitened=True)
        elif model_class == "exact":
            model = build_model(kern, "gaussian", data)
        else:
            raise ValueError(model_class)

    lam = rng.uniform(-1.0, 1.5, model.layout.dim)
    slices = model.layout.slices()
    if "latent" in slices:
        block = slices["latent"]
        lam[block] = rng.standard_normal(block.stop - block.start)
    return model, data, lam


@pytest.fixture
def rng():
    return np.random.default_rng(0)
