"""Dataset loading, standardization, splitting, and synthetic generators.

CSV loading is strict: every cell must parse as a finite float and
errors name the offending row and column. Standardization uses the
population standard deviation and is always computed from training rows
only; the recorded affine maps let predictions be reported on the
original scale.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .models import Dataset, Standardization


class DataError(ValueError):
    """A dataset file or generator request is malformed."""


def neal_mean(x):
    """Smooth one-dimensional test function with a bump and a slow trend."""
    x = np.asarray(x, dtype=float)
    return 0.3 + 0.3 * x + 0.5 * np.sin(2.7 * x) + 1.1 / (1.0 + x * x)


def generate_neal(n: int, seed: int = 0) -> Dataset:
    """Noisy draws of :func:`neal_mean` with occasional large outliers.

    Inputs are standard normal; noise is N(0, 0.1^2) except with
    probability 0.05 where it is N(0, 1).
    """
    if n < 1:
        raise DataError("need at least one sample")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    outlier = rng.random(n) < 0.05
    eps = rng.standard_normal(n) * np.where(outlier, 1.0, 0.1)
    y = neal_mean(x) + eps
    return Dataset(X=x.reshape(-1, 1), y=y)


def generate_sign(n: int, seed: int = 0, flip_prob: float = 0.1) -> Dataset:
    """Binary labels 1{x > 0} on standard normal inputs, with label flips."""
    if n < 1:
        raise DataError("need at least one sample")
    if not 0.0 <= flip_prob < 0.5:
        raise DataError("flip probability must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = (x > 0).astype(float)
    flips = rng.random(n) < flip_prob
    y = np.where(flips, 1.0 - y, y)
    return Dataset(X=x.reshape(-1, 1), y=y, classification=True)


def load_csv(
    path,
    target_column=None,
    has_header: bool = True,
    classification: bool = False,
) -> Dataset:
    """Read a numeric CSV into a Dataset.

    ``target_column`` is a header name (when ``has_header``) or a
    0-based column index; it defaults to the last column. All remaining
    columns become inputs, in file order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise DataError(f"{path}: file has no rows")

    header = None
    if has_header:
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after the header")
    width = len(rows[0])
    if width < 2:
        raise DataError(f"{path}: need at least two columns, got {width}")

    if target_column is None:
        target_idx = width - 1
    elif isinstance(target_column, int) or (
        isinstance(target_column, str) and target_column.lstrip("-").isdigit()
    ):
        target_idx = int(target_column)
        if not 0 <= target_idx < width:
            raise DataError(
                f"{path}: target column index {target_idx} out of range for {width} columns"
            )
    else:
        if header is None:
            raise DataError(
                f"{path}: target column {target_column!r} needs a header row"
            )
        if target_column not in header:
            raise DataError(
                f"{path}: no column named {target_column!r} (have {', '.join(header)})"
            )
        target_idx = header.index(target_column)

    def colname(idx: int) -> str:
        return repr(header[idx]) if header else f"index {idx}"

    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"{path}: row {r + 1} has {len(row)} cells, expected {width}"
            )
        for cidx, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 1}, column {colname(cidx)}: "
                    f"cannot parse {cell.strip()!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{path}: row {r + 1}, column {colname(cidx)}: "
                    f"non-finite value {cell.strip()!r}"
                )
            values[r, cidx] = v

    y = values[:, target_idx]
    X = np.delete(values, target_idx, axis=1)
    if classification and not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError(f"{path}: classification targets must all be 0 or 1")
    return Dataset(X=X, y=y, classification=classification)


def standardize(data: Dataset) -> tuple[Dataset, Standardization]:
    """Center and scale inputs per column; targets too unless classifying.

    Columns with zero variance are passed through unscaled with a
    warning. Statistics use the population standard deviation.
    """
    if data.n < 2:
        raise DataError("standardization needs at least two rows")
    x_mean = data.X.mean(axis=0)
    x_std = data.X.std(axis=0)
    flat = x_std == 0.0
    if np.any(flat):
        cols = ", ".join(str(i) for i in np.flatnonzero(flat))
        warnings.warn(f"input column(s) {cols} have zero variance; left unscaled")
        x_std = np.where(flat, 1.0, x_std)
        x_mean = np.where(flat, 0.0, x_mean)
    X = (data.X - x_mean) / x_std

    if data.classification:
        record = Standardization(x_mean=x_mean, x_std=x_std, y_mean=None, y_std=None)
        return Dataset(X=X, y=data.y, classification=True, standardization=record), record

    y_mean = float(data.y.mean())
    y_std = float(data.y.std())
    if y_std == 0.0:
        warnings.warn("targets have zero variance; left unscaled")
        y_mean, y_std = 0.0, 1.0
    y = (data.y - y_mean) / y_std
    record = Standardization(x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std)
    return Dataset(X=X, y=y, standardization=record), record


_standardize = standardize  # callable under the keyword below


def destandardize_targets(values, record: Standardization | None):
    """Map standardized target values back to the original scale."""
    values = np.asarray(values, dtype=float)
    if record is None or record.y_std is None:
        return values
    return values * record.y_std + record.y_mean


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction <= 1.0:
            raise DataError(
                f"train fraction must lie in (0, 1], got {self.train_fraction}"
            )


def split(
    data: Dataset,
    spec: SplitSpec,
    standardize: bool = True,
    allow_empty_test: bool = False,
) -> tuple[Dataset, Dataset | None, Standardization | None]:
    """Seeded shuffle, prefix split, and train-statistics standardization.

    The test rows (when any) are transformed with the training split's
    statistics. Returns (train, test, record); test is None when the
    training fraction covers every row.
    """
    order = np.arange(data.n)
    if spec.shuffle:
        np.random.default_rng(spec.seed).shuffle(order)
    n_train = max(1, int(round(spec.train_fraction * data.n)))
    n_train = min(n_train, data.n)
    if n_train == data.n and not allow_empty_test:
        raise DataError(
            f"train fraction {spec.train_fraction} leaves no test rows "
            f"(use a holdout or allow an empty test set)"
        )
    tr, te = order[:n_train], order[n_train:]
    train = Dataset(
        X=data.X[tr], y=data.y[tr], classification=data.classification
    )
    record = None
    if standardize:
        train, record = _standardize(train)
    test = None
    if te.size:
        Xte, yte = data.X[te], data.y[te]
        if record is not None:
            Xte = (Xte - record.x_mean) / record.x_std
            if record.y_std is not None:
                yte = (yte - record.y_mean) / record.y_std
        test = Dataset(X=Xte, y=yte, classification=data.classification)
    return train, test, record
