"""Covariance functions for Gaussian process models.

A small kernel algebra: squared exponential, Matern 1/2, Matern 5/2,
polynomial and white-noise families, composable through sums and
products. Besides pointwise evaluation the module assembles Gram
matrices (with diagonal jitter on same-set inputs) and computes analytic
derivatives of a Gram matrix with respect to each positive kernel
parameter, which the model score functions consume.

Conventions
-----------
* ARD: each active input dimension is divided by its own lengthscale
  before any distance is formed, so equal lengthscales reduce exactly to
  the isotropic kernel.
* The squared exponential decays in the squared scaled distance; the
  Matern families decay in the Euclidean scaled distance, which keeps
  their Gram matrices positive semi-definite.
* Flat parameter vectors are ordered depth-first over leaves. Each leaf
  contributes ``sigma``, then one lengthscale per active dimension, then
  ``offset`` (polynomial only). Kernel values scale with ``sigma**2``
  except for the white kernel, which is linear in sigma: its ``variance``
  field stores the diagonal value itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_JITTER = 1e-6

_SQRT5 = math.sqrt(5.0)


class KernelFamily(str, Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"
    MATERN12 = "matern12"
    MATERN52 = "matern52"
    POLYNOMIAL = "polynomial"
    WHITE = "white"
    SUM = "sum"
    PRODUCT = "product"


_LENGTHSCALE_FAMILIES = frozenset(
    {
        KernelFamily.SQUARED_EXPONENTIAL,
        KernelFamily.MATERN12,
        KernelFamily.MATERN52,
    }
)
_COMBINERS = frozenset({KernelFamily.SUM, KernelFamily.PRODUCT})


@dataclass(frozen=True)
class KernelSpec:
    """One node of a kernel expression tree.

    Parameters
    ----------
    family : KernelFamily
        Which covariance function (or ``SUM`` / ``PRODUCT`` for interior
        nodes of a composition tree).
    variance : float
        ``sigma**2`` for the stationary and polynomial families; the
        diagonal value (linear in sigma) for the white kernel.
    lengthscales : tuple of float, optional
        One per active dimension for the stationary families. ``None``
        defers to :func:`normalize`, which fills sqrt(input_dim) per
        dimension.
    offset : float
        Additive constant of the polynomial kernel.
    degree : int
        Degree of the polynomial kernel (a fixed structural choice, not
        an optimized parameter).
    active_dims : tuple of int, optional
        Input columns this node looks at; ``None`` means all of them.
    children : tuple of KernelSpec
        Operands of a ``SUM`` or ``PRODUCT`` node; must be empty on
        leaves.
    """

    family: KernelFamily
    variance: float = 1.0
    lengthscales: tuple[float, ...] | None = None
    offset: float = 1.0
    degree: int = 1
    active_dims: tuple[int, ...] | None = None
    children: tuple["KernelSpec", ...] = ()

    def __post_init__(self) -> None:
        family = KernelFamily(self.family)
        object.__setattr__(self, "family", family)
        if family in _COMBINERS:
            if not self.children:
                raise ValueError(f"{family.value} node needs at least one child")
            return
        if self.children:
            raise ValueError(f"leaf kernel {family.value} cannot have children")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError("kernel variance must be positive and finite")
        if self.lengthscales is not None:
            ells = tuple(float(v) for v in self.lengthscales)
            if not all(np.isfinite(v) and v > 0 for v in ells):
                raise ValueError("every lengthscale must be positive and finite")
            object.__setattr__(self, "lengthscales", ells)
        if family is KernelFamily.POLYNOMIAL:
            if not (isinstance(self.degree, int) and self.degree >= 1):
                raise ValueError("polynomial degree must be an integer >= 1")
            if not np.isfinite(self.offset):
                raise ValueError("polynomial offset must be finite")
        if self.active_dims is not None:
            dims = tuple(int(d) for d in self.active_dims)
            if len(set(dims)) != len(dims) or any(d < 0 for d in dims):
                raise ValueError("active_dims must be distinct non-negative indices")
            object.__setattr__(self, "active_dims", dims)

    def __add__(self, other: "KernelSpec") -> "KernelSpec":
        return KernelSpec(KernelFamily.SUM, children=(self, other))

    def __mul__(self, other: "KernelSpec") -> "KernelSpec":
        return KernelSpec(KernelFamily.PRODUCT, children=(self, other))


@dataclass(frozen=True)
class GramMatrix:
    """Covariance matrix plus the jitter that was added to its diagonal."""

    values: np.ndarray
    jitter_applied: float


def make(family: str, **kwargs) -> KernelSpec:
    """Build a leaf KernelSpec from a family name (aliases allowed)."""
    aliases = {
        "se": KernelFamily.SQUARED_EXPONENTIAL,
        "rbf": KernelFamily.SQUARED_EXPONENTIAL,
        "poly": KernelFamily.POLYNOMIAL,
    }
    key = family.strip().lower()
    if key in aliases:
        fam = aliases[key]
    else:
        try:
            fam = KernelFamily(key)
        except ValueError:
            valid = sorted(f.value for f in KernelFamily if f not in _COMBINERS)
            raise ValueError(f"unknown kernel family {family!r}; choose from {valid}")
    if fam in _COMBINERS:
        raise ValueError("sum/product nodes are built via +, * or KernelSpec(children=...)")
    return KernelSpec(fam, **kwargs)


def normalize(spec: KernelSpec, input_dim: int) -> KernelSpec:
    """Fill in deferred fields so the spec is self-describing.

    ``active_dims`` defaults to all input columns and missing
    lengthscales default to sqrt(input_dim) per dimension. Raises if any
    active dimension falls outside ``input_dim``.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if spec.family in _COMBINERS:
        kids = tuple(normalize(c, input_dim) for c in spec.children)
        return replace(spec, children=kids)
    dims = spec.active_dims if spec.active_dims is not None else tuple(range(input_dim))
    if any(d >= input_dim for d in dims):
        raise ValueError(f"active_dims {dims} exceed input dimensionality {input_dim}")
    out = replace(spec, active_dims=dims)
    if out.family in _LENGTHSCALE_FAMILIES and out.lengthscales is None:
        out = replace(out, lengthscales=(math.sqrt(input_dim),) * len(dims))
    if out.family in _LENGTHSCALE_FAMILIES and len(out.lengthscales) != len(dims):
        raise ValueError(
            f"{out.family.value} has {len(out.lengthscales)} lengthscales "
            f"for {len(dims)} active dimensions"
        )
    return out


def _leaves(spec: KernelSpec) -> list[KernelSpec]:
    if spec.family in _COMBINERS:
        out: list[KernelSpec] = []
        for child in spec.children:
            out.extend(_leaves(child))
        return out
    return [spec]


def param_entries(spec: KernelSpec, input_dim: int) -> list[tuple[str, int]]:
    """Named blocks of the flat constrained parameter vector.

    Leaves are numbered depth-first; each yields ``k{i}_sigma``, then
    ``k{i}_lengthscales`` (stationary families) or ``k{i}_offset``
    (polynomial).
    """
    spec = normalize(spec, input_dim)
    out: list[tuple[str, int]] = []
    for i, leaf in enumerate(_leaves(spec)):
        out.append((f"k{i}_sigma", 1))
        if leaf.family in _LENGTHSCALE_FAMILIES:
            out.append((f"k{i}_lengthscales", len(leaf.active_dims)))
        elif leaf.family is KernelFamily.POLYNOMIAL:
            out.append((f"k{i}_offset", 1))
    return out


def param_count(spec: KernelSpec, input_dim: int) -> int:
    return sum(n for _, n in param_entries(spec, input_dim))


def with_values(spec: KernelSpec, values, input_dim: int) -> KernelSpec:
    """Rebuild the tree with parameters taken from a flat constrained vector.

    ``values`` follows the :func:`param_entries` order: per leaf sigma,
    lengthscales, offset. Sigma is squared into ``variance`` except for
    the white kernel, where it is stored as the diagonal value directly.
    """
    values = np.asarray(values, dtype=float).ravel()
    spec = normalize(spec, input_dim)
    expected = param_count(spec, input_dim)
    if values.size != expected:
        raise ValueError(f"expected {expected} kernel parameter values, got {values.size}")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError("constrained kernel parameters must be positive and finite")

    pos = 0

    def rebuild(node: KernelSpec) -> KernelSpec:
        nonlocal pos
        if node.family in _COMBINERS:
            return replace(node, children=tuple(rebuild(c) for c in node.children))
        sigma = float(values[pos])
        pos += 1
        if node.family is KernelFamily.WHITE:
            return replace(node, variance=sigma)
        if node.family is KernelFamily.POLYNOMIAL:
            offset = float(values[pos])
            pos += 1
            return replace(node, variance=sigma * sigma, offset=offset)
        n_ell = len(node.active_dims)
        ells = tuple(float(v) for v in values[pos : pos + n_ell])
        pos += n_ell
        return replace(node, variance=sigma * sigma, lengthscales=ells)

    return rebuild(spec)


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValueError(f"inputs must be at most 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel inputs must be finite")
    return arr


def _leaf_values(spec: KernelSpec, X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    A = X[:, list(spec.active_dims)]
    B = X2[:, list(spec.active_dims)]
    fam = spec.family
    if fam is KernelFamily.WHITE:
        eq = np.all(A[:, None, :] == B[None, :, :], axis=-1)
        return spec.variance * eq.astype(float)
    if fam is KernelFamily.POLYNOMIAL:
        return (spec.variance * (A @ B.T) + spec.offset) ** spec.degree
    ell = np.asarray(spec.lengthscales, dtype=float)
    if fam is KernelFamily.SQUARED_EXPONENTIAL:
        sq = cdist(A / ell, B / ell, "sqeuclidean")
        return spec.variance * np.exp(-0.5 * sq)
    r = cdist(A / ell, B / ell, "euclidean")
    if fam is KernelFamily.MATERN12:
        return spec.variance * np.exp(-r)
    a = _SQRT5 * r
    return spec.variance * (1.0 + a + a * a / 3.0) * np.exp(-a)


def _values(spec: KernelSpec, X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    if spec.family is KernelFamily.SUM:
        out = _values(spec.children[0], X, X2)
        for child in spec.children[1:]:
            out = out + _values(child, X, X2)
        return out
    if spec.family is KernelFamily.PRODUCT:
        out = _values(spec.children[0], X, X2)
        for child in spec.children[1:]:
            out = out * _values(child, X, X2)
        return out
    return _leaf_values(spec, X, X2)


def _leaf_count(spec: KernelSpec) -> int:
    if spec.family is KernelFamily.WHITE:
        return 1
    if spec.family is KernelFamily.POLYNOMIAL:
        return 2
    return 1 + len(spec.active_dims)


def _node_count(spec: KernelSpec) -> int:
    if spec.family in _COMBINERS:
        return sum(_node_count(c) for c in spec.children)
    return _leaf_count(spec)


def _leaf_grad(spec: KernelSpec, X: np.ndarray, X2: np.ndarray, idx: int) -> np.ndarray:
    A = X[:, list(spec.active_dims)]
    B = X2[:, list(spec.active_dims)]
    fam = spec.family
    if fam is KernelFamily.WHITE:
        # single parameter, linear in sigma
        eq = np.all(A[:, None, :] == B[None, :, :], axis=-1)
        return eq.astype(float)
    if fam is KernelFamily.POLYNOMIAL:
        sigma = math.sqrt(spec.variance)
        inner = A @ B.T
        base = spec.variance * inner + spec.offset
        shell = spec.degree * base ** (spec.degree - 1)
        if idx == 0:
            return shell * (2.0 * sigma * inner)
        return shell
    sigma = math.sqrt(spec.variance)
    ell = np.asarray(spec.lengthscales, dtype=float)
    if idx == 0:
        return 2.0 / sigma * _leaf_values(spec, X, X2)
    i = idx - 1
    diff = A[:, i][:, None] - B[:, i][None, :]
    scale = diff * diff / ell[i] ** 3
    if fam is KernelFamily.SQUARED_EXPONENTIAL:
        return _leaf_values(spec, X, X2) * scale
    r = cdist(A / ell, B / ell, "euclidean")
    if fam is KernelFamily.MATERN12:
        out = np.zeros_like(r)
        mask = r > 0
        out[mask] = spec.variance * np.exp(-r[mask]) * scale[mask] / r[mask]
        return out
    a = _SQRT5 * r
    return spec.variance * np.exp(-a) * (5.0 / 3.0) * (1.0 + a) * scale


def _grad_values(spec: KernelSpec, X: np.ndarray, X2: np.ndarray, idx: int) -> np.ndarray:
    if spec.family is KernelFamily.SUM:
        for child in spec.children:
            n = _node_count(child)
            if idx < n:
                return _grad_values(child, X, X2, idx)
            idx -= n
        raise AssertionError("index routing failed")
    if spec.family is KernelFamily.PRODUCT:
        # exactly one child owns the index; the others contribute their values
        out = None
        for child in spec.children:
            n = _node_count(child)
            term = (
                _grad_values(child, X, X2, idx)
                if 0 <= idx < n
                else _values(child, X, X2)
            )
            out = term if out is None else out * term
            idx -= n
        return out
    return _leaf_grad(spec, X, X2, idx)


def _mirror(values: np.ndarray) -> np.ndarray:
    return np.triu(values) + np.triu(values, 1).T


def gram(spec: KernelSpec, x, x2=None, jitter: float = DEFAULT_JITTER) -> GramMatrix:
    """Covariance matrix between two point sets.

    With ``x2`` omitted or equal (elementwise) to ``x`` the matrix is
    built from its upper triangle and mirrored, so it is symmetric
    exactly as stored, and ``jitter`` is added to the diagonal. Distinct
    point sets produce a plain cross-covariance with no jitter.
    """
    if not (np.isfinite(jitter) and jitter >= 0):
        raise ValueError("jitter must be a finite non-negative value")
    X = _as_matrix(x)
    same = x2 is None
    X2 = X if same else _as_matrix(x2)
    if X.shape[1] != X2.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {X2.shape[1]} columns")
    spec = normalize(spec, X.shape[1])
    if not same:
        same = X.shape == X2.shape and np.array_equal(X, X2)
    K = _values(spec, X, X2)
    if same:
        K = _mirror(K)
        if jitter > 0:
            K = K + jitter * np.eye(K.shape[0])
        return GramMatrix(K, float(jitter))
    return GramMatrix(K, 0.0)


def gram_grad(spec: KernelSpec, x, param_index: int, x2=None) -> np.ndarray:
    """Elementwise derivative of the Gram matrix w.r.t. one constrained parameter.

    ``param_index`` addresses a coordinate of the flat parameter vector
    described by :func:`param_entries` (sigma coordinates differentiate
    through ``variance = sigma**2``). Jitter is a constant so it never
    contributes. Same-set inputs are mirrored exactly like :func:`gram`.
    """
    X = _as_matrix(x)
    same = x2 is None
    X2 = X if same else _as_matrix(x2)
    if X.shape[1] != X2.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {X2.shape[1]} columns")
    spec = normalize(spec, X.shape[1])
    total = _node_count(spec)
    if not (0 <= param_index < total):
        raise ValueError(f"param_index {param_index} out of range for {total} parameters")
    if not same:
        same = X.shape == X2.shape and np.array_equal(X, X2)
    D = _grad_values(spec, X, X2, param_index)
    return _mirror(D) if same else D


def eval_pair(spec: KernelSpec, x, x2) -> float:
    """Kernel value between two single points (no jitter)."""
    a = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(x2, dtype=float))
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("eval_pair expects single points")
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kernel inputs must be finite")
    spec = normalize(spec, a.size)
    return float(_values(spec, a.reshape(1, -1), b.reshape(1, -1))[0, 0])
