"""Parameter layouts, positivity transforms, and priors.

The particle optimizer works on unconstrained vectors. A layout maps
contiguous named blocks of such a vector to model parameters; each block
is either passed through unchanged or pushed through a softplus to
enforce positivity. The log-Jacobian of that map is the density
correction a target must carry when optimized in unconstrained space,
and its derivative always uses the raw sigmoid, even where the softplus
output was clipped to its floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.special import expit, gammaln

SOFTPLUS_FLOOR = 1e-6

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class Transform(Enum):
    SOFTPLUS = "softplus"
    IDENTITY = "identity"


@dataclass(frozen=True)
class ParamEntry:
    name: str
    length: int
    transform: Transform

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("parameter block needs a name")
        if self.length < 1:
            raise ValueError(f"block {self.name!r} must have length >= 1")


@dataclass(frozen=True)
class ParamLayout:
    """Ordered, named blocks of one flat parameter vector."""

    entries: tuple[ParamEntry, ...]

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate block names in layout: {names}")

    @property
    def dim(self) -> int:
        return sum(e.length for e in self.entries)

    def slices(self) -> dict[str, slice]:
        out: dict[str, slice] = {}
        pos = 0
        for e in self.entries:
            out[e.name] = slice(pos, pos + e.length)
            pos += e.length
        return out

    def softplus_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for e, sl in zip(self.entries, self.slices().values()):
            if e.transform is Transform.SOFTPLUS:
                mask[sl] = True
        return mask

    def column_names(self) -> list[str]:
        """One name per coordinate, vector blocks suffixed _0, _1, ..."""
        out: list[str] = []
        for e in self.entries:
            if e.length == 1:
                out.append(e.name)
            else:
                out.extend(f"{e.name}_{i}" for i in range(e.length))
        return out


@dataclass(frozen=True)
class GammaPrior:
    """Gamma density in shape/scale form on a positive constrained value."""

    shape: float
    scale: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("Gamma shape and scale must be positive")

    def log_density(self, x: np.ndarray) -> float:
        if np.any(x <= 0):
            raise ValueError("Gamma prior evaluated at a non-positive value")
        k, s = self.shape, self.scale
        return float(
            np.sum((k - 1.0) * np.log(x) - x / s - k * math.log(s) - gammaln(k))
        )

    def grad(self, x: np.ndarray) -> np.ndarray:
        return (self.shape - 1.0) / x - 1.0 / self.scale


@dataclass(frozen=True)
class StandardNormalPrior:
    """Unit Gaussian on every coordinate of a block."""

    def log_density(self, x: np.ndarray) -> float:
        return float(-0.5 * np.dot(x, x) - x.size * _HALF_LOG_2PI)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return -x


PriorSpec = Mapping[str, "GammaPrior | StandardNormalPrior | None"]


def _check_vector(x, layout: ParamLayout) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size != layout.dim:
        raise ValueError(f"expected a vector of length {layout.dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector contains non-finite entries")
    return arr


def forward(x, layout: ParamLayout) -> np.ndarray:
    """Map unconstrained to constrained values.

    Softplus blocks use max(log(1 + e^x), 1e-6); identity blocks pass
    through.
    """
    arr = _check_vector(x, layout)
    out = arr.copy()
    mask = layout.softplus_mask()
    out[mask] = np.maximum(np.logaddexp(0.0, arr[mask]), SOFTPLUS_FLOOR)
    return out


def inverse(c, layout: ParamLayout) -> np.ndarray:
    """Invert :func:`forward` (softplus blocks must be positive)."""
    arr = _check_vector(c, layout)
    out = arr.copy()
    mask = layout.softplus_mask()
    vals = arr[mask]
    if np.any(vals <= 0):
        raise ValueError("softplus blocks must hold positive values")
    small = vals <= 30.0
    inv = np.empty_like(vals)
    inv[small] = np.log(np.expm1(vals[small]))
    inv[~small] = vals[~small] + np.log1p(-np.exp(-vals[~small]))
    out[mask] = inv
    return out


def forward_grad(x, layout: ParamLayout) -> np.ndarray:
    """Elementwise derivative of :func:`forward` (unclipped sigmoid)."""
    arr = _check_vector(x, layout)
    out = np.ones(layout.dim)
    mask = layout.softplus_mask()
    out[mask] = expit(arr[mask])
    return out


def log_abs_det_jacobian(x, layout: ParamLayout) -> float:
    """Log |det d forward / dx|: sum of log sigmoid over softplus coordinates."""
    arr = _check_vector(x, layout)
    mask = layout.softplus_mask()
    return float(np.sum(-np.logaddexp(0.0, -arr[mask])))


def log_abs_det_jacobian_grad(x, layout: ParamLayout) -> np.ndarray:
    arr = _check_vector(x, layout)
    out = np.zeros(layout.dim)
    mask = layout.softplus_mask()
    out[mask] = expit(-arr[mask])
    return out


def log_prior(constrained, priors: PriorSpec, layout: ParamLayout) -> tuple[float, np.ndarray]:
    """Joint prior log-density and its gradient w.r.t. constrained values.

    Blocks with no prior (missing or None) contribute nothing.
    """
    c = _check_vector(constrained, layout)
    total = 0.0
    grad = np.zeros(layout.dim)
    for entry, sl in zip(layout.entries, layout.slices().values()):
        prior = priors.get(entry.name)
        if prior is None:
            continue
        block = c[sl]
        total += prior.log_density(block)
        grad[sl] = prior.grad(block)
    return total, grad


def sample_initial(
    layout: ParamLayout, priors: PriorSpec, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n unconstrained particles.

    Constrained values come from each block's prior where one exists and
    Uniform(0, 1) otherwise, then the transform is inverted. Blocks are
    consumed in layout order so the stream of draws is reproducible.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    out = np.empty((n, layout.dim))
    for entry, sl in zip(layout.entries, layout.slices().values()):
        prior = priors.get(entry.name)
        shape = (n, entry.length)
        if isinstance(prior, GammaPrior):
            vals = rng.gamma(prior.shape, prior.scale, size=shape)
        elif isinstance(prior, StandardNormalPrior):
            vals = rng.standard_normal(shape)
        else:
            vals = rng.uniform(0.0, 1.0, size=shape)
        if entry.transform is Transform.SOFTPLUS:
            vals = np.maximum(vals, SOFTPLUS_FLOOR)
            small = vals <= 30.0
            inv = np.empty_like(vals)
            inv[small] = np.log(np.expm1(vals[small]))
            inv[~small] = vals[~small] + np.log1p(-np.exp(-vals[~small]))
            vals = inv
        out[:, sl] = vals
    return out
