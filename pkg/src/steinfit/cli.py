"""Command line front end.

Four subcommands share one INI configuration format: ``synth`` writes a
synthetic dataset to CSV, ``fit`` transports a particle ensemble and
writes it (with its trace and the fully resolved configuration) to an
output directory, ``predict`` loads a saved ensemble and evaluates it at
new query points, and ``benchmark`` repeats fit-plus-holdout-evaluation
over several seeds and tabulates the scores.

Exit codes: 2 for configuration or data problems, 3 when the linear
algebra gives up, 4 for filesystem errors.
"""

from __future__ import annotations

import configparser
import csv
import functools
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import click
import numpy as np

from . import data as datasets
from . import kernels, models, params, prediction, svgd
from .data import DataError, SplitSpec
from .kernels import KernelFamily, KernelSpec
from .models import Dataset, Likelihood, NumericalError, Standardization
from .params import GammaPrior
from .prediction import Metrics
from .svgd import ParticleEnsemble, SvgdConfig, TRACE_HEADER, format_trace_row


class ConfigError(ValueError):
    """The configuration file or a flag value is unusable."""


_SECTIONS = {
    "model": {"kernel", "likelihood", "priors", "inducing", "whitened", "jitter"},
    "svgd": {
        "particles",
        "iterations",
        "step_size",
        "batch_size",
        "seed",
        "adam",
        "trace_every",
    },
    "data": {
        "source",
        "n",
        "target",
        "has_header",
        "train_fraction",
        "shuffle",
        "standardize",
        "seed",
    },
    "predict": {"samples_per_particle"},
    "benchmark": {"replicates"},
    "output": {"directory"},
}

_GENERATORS = ("neal", "sign")

BENCHMARK_HEADER = (
    "replicate",
    "rmse",
    "test_log_likelihood",
    "wall_time_s",
    "rmse_std",
    "test_log_likelihood_std",
    "wall_time_s_std",
)


@dataclass(frozen=True)
class Resolved:
    """Every option pinned to a concrete value (no 'auto' left)."""

    kernel: str
    likelihood: str
    priors: str
    inducing: int
    whitened: bool
    jitter: float
    particles: int
    iterations: int
    step_size: float
    batch_size: int  # 0 means full batch
    seed: int
    adam: bool
    trace_every: int
    source: str
    n: int
    target: str  # "" means the last column
    has_header: bool
    train_fraction: float
    shuffle: bool
    standardize: bool
    data_seed: int
    samples_per_particle: int
    replicates: int
    directory: str


# ----------------------------------------------------------------- parsing


def _int_value(raw: str, where: str, minimum: int | None = None) -> int:
    try:
        v = int(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}, got {v}")
    return v


def _float_value(raw: str, where: str, positive: bool = False) -> float:
    try:
        v = float(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    if positive and not v > 0:
        raise ConfigError(f"{where}: must be positive, got {v}")
    return v


def _bool_value(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def parse_prior(text: str) -> GammaPrior | None:
    """Parse a prior description: ``gamma(shape, scale)`` or ``none``."""
    low = text.strip().lower()
    if low == "none":
        return None
    if low.startswith("gamma(") and low.endswith(")"):
        inner = low[len("gamma(") : -1]
        parts = inner.split(",")
        if len(parts) == 2:
            shape = _float_value(parts[0], "prior shape", positive=True)
            scale = _float_value(parts[1], "prior scale", positive=True)
            return GammaPrior(shape, scale)
    raise ConfigError(
        f"cannot parse prior {text!r}; use gamma(shape, scale) or none"
    )


class _KernelParser:
    """Recursive-descent parser for kernel expressions.

    Grammar: an expression is a leaf name with optional arguments, e.g.
    ``matern52(dims=0:1)`` or ``polynomial(degree=3, dims=2)``, or a
    combiner ``sum(...)`` / ``product(...)`` of comma-separated
    expressions. ``dims`` takes a single index or an inclusive range
    ``a:b``; ``degree`` applies to polynomial kernels only.
    """

    _ALIASES = {"exponential": "matern12", "noise": "white"}
    _POLY_NAMES = {"polynomial", "poly"}

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self) -> KernelSpec:
        spec = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ConfigError(
                f"kernel expression: unexpected trailing text "
                f"{self.text[self.pos:]!r} at position {self.pos}"
            )
        return spec

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _accept(self, ch: str) -> bool:
        self._skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == ch:
            self.pos += 1
            return True
        return False

    def _expect(self, ch: str) -> None:
        if not self._accept(ch):
            found = self.text[self.pos :][:10] or "end of input"
            raise ConfigError(
                f"kernel expression: expected {ch!r} at position {self.pos}, "
                f"found {found!r}"
            )

    def _ident(self) -> str:
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        if start == self.pos:
            raise ConfigError(
                f"kernel expression: expected a name at position {self.pos}"
            )
        return self.text[start : self.pos].lower()

    def _number_token(self) -> str:
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isdigit() or self.text[self.pos] == ":"
        ):
            self.pos += 1
        if start == self.pos:
            raise ConfigError(
                f"kernel expression: expected a value at position {self.pos}"
            )
        return self.text[start : self.pos]

    def _dims(self, token: str) -> tuple[int, ...]:
        if ":" in token:
            lo_s, _, hi_s = token.partition(":")
            lo = _int_value(lo_s, "kernel dims", minimum=0)
            hi = _int_value(hi_s, "kernel dims", minimum=0)
            if hi < lo:
                raise ConfigError(f"kernel dims: empty range {token!r}")
            return tuple(range(lo, hi + 1))
        return (_int_value(token, "kernel dims", minimum=0),)

    def _expr(self) -> KernelSpec:
        name = self._ident()
        if name in ("sum", "product"):
            self._expect("(")
            children = [self._expr()]
            while self._accept(","):
                children.append(self._expr())
            self._expect(")")
            family = KernelFamily.SUM if name == "sum" else KernelFamily.PRODUCT
            return KernelSpec(family, children=tuple(children))

        kwargs: dict = {}
        if self._accept("("):
            if not self._accept(")"):
                while True:
                    key = self._ident()
                    self._expect("=")
                    token = self._number_token()
                    if key == "dims":
                        kwargs["active_dims"] = self._dims(token)
                    elif key == "degree":
                        if name not in self._POLY_NAMES:
                            raise ConfigError(
                                "kernel expression: degree only applies to "
                                "polynomial kernels"
                            )
                        kwargs["degree"] = _int_value(token, "kernel degree", minimum=1)
                    else:
                        raise ConfigError(
                            f"kernel expression: unknown argument {key!r} "
                            f"(expected dims or degree)"
                        )
                    if self._accept(","):
                        continue
                    self._expect(")")
                    break
        try:
            return kernels.make(self._ALIASES.get(name, name), **kwargs)
        except ValueError as e:
            raise ConfigError(f"kernel expression: {e}") from None


def parse_kernel(text: str) -> KernelSpec:
    if not text.strip():
        raise ConfigError("kernel expression is empty")
    return _KernelParser(text).parse()


# -------------------------------------------------------------- resolution


def resolve_config(
    config_path,
    *,
    directory: str | None = None,
    seed: int | None = None,
    particles: int | None = None,
    iterations: int | None = None,
    batch_size: int | None = None,
    source: str | None = None,
) -> Resolved:
    """Read an INI file, apply flag overrides, and pin every 'auto'."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        read = cp.read(config_path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {config_path}: {e}") from None
    if not read:
        raise ConfigError(f"config file {config_path} not found")
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    def raw(section: str, key: str, default: str) -> str:
        return cp.get(section, key, fallback=default).strip()

    n_particles = (
        particles
        if particles is not None
        else _int_value(raw("svgd", "particles", "20"), "[svgd] particles", 1)
    )
    if n_particles < 1:
        raise ConfigError(f"[svgd] particles: must be at least 1, got {n_particles}")
    n_iterations = (
        iterations
        if iterations is not None
        else _int_value(raw("svgd", "iterations", "500"), "[svgd] iterations", 0)
    )
    if n_iterations < 0:
        raise ConfigError("[svgd] iterations: must be non-negative")
    bsize = (
        batch_size
        if batch_size is not None
        else _int_value(raw("svgd", "batch_size", "0"), "[svgd] batch_size", 0)
    )
    if bsize < 0:
        raise ConfigError("[svgd] batch_size: must be non-negative")
    svgd_seed = (
        seed if seed is not None else _int_value(raw("svgd", "seed", "0"), "[svgd] seed")
    )
    step_raw = raw("svgd", "step_size", "auto")
    if step_raw.lower() == "auto":
        step_size = 0.05 if bsize == 0 else 0.001
    else:
        step_size = _float_value(step_raw, "[svgd] step_size", positive=True)
    adam = _bool_value(raw("svgd", "adam", "true"), "[svgd] adam")
    trace_every = _int_value(raw("svgd", "trace_every", "10"), "[svgd] trace_every", 1)

    src = source if source is not None else raw("data", "source", "")
    if not src:
        raise ConfigError("no dataset: set [data] source or pass --data")
    is_generator = src in _GENERATORS
    n_rows = _int_value(raw("data", "n", "200"), "[data] n", 1)
    target = raw("data", "target", "")
    has_header = _bool_value(raw("data", "has_header", "true"), "[data] has_header")
    frac_raw = raw("data", "train_fraction", "auto")
    if frac_raw.lower() == "auto":
        train_fraction = 0.5 if is_generator else 0.7
    else:
        train_fraction = _float_value(frac_raw, "[data] train_fraction", positive=True)
    if train_fraction > 1.0:
        raise ConfigError(
            f"[data] train_fraction: must lie in (0, 1], got {train_fraction}"
        )
    shuffle_raw = raw("data", "shuffle", "auto")
    if shuffle_raw.lower() == "auto":
        shuffle = not is_generator
    else:
        shuffle = _bool_value(shuffle_raw, "[data] shuffle")
    standardize = _bool_value(raw("data", "standardize", "true"), "[data] standardize")
    dseed_raw = raw("data", "seed", "auto")
    data_seed = (
        svgd_seed if dseed_raw.lower() == "auto" else _int_value(dseed_raw, "[data] seed")
    )

    kernel_text = raw("model", "kernel", "se")
    parse_kernel(kernel_text)  # fail early on syntax errors
    like_raw = raw("model", "likelihood", "auto").lower()
    if like_raw == "auto":
        likelihood = "bernoulli" if src == "sign" else "gaussian"
    elif like_raw in ("gaussian", "bernoulli"):
        likelihood = like_raw
    else:
        raise ConfigError(
            f"[model] likelihood: expected gaussian or bernoulli, got {like_raw!r}"
        )
    priors_text = raw("model", "priors", "gamma(1.0, 2.0)")
    parse_prior(priors_text)  # fail early
    inducing = _int_value(raw("model", "inducing", "0"), "[model] inducing", 0)
    jitter = _float_value(raw("model", "jitter", "1e-06"), "[model] jitter", positive=True)

    needs = []
    if likelihood == "bernoulli":
        needs.append("a Bernoulli likelihood")
    if inducing > 0:
        needs.append("inducing inputs")
    if bsize > 0:
        needs.append("mini-batching")
    whitened_raw = raw("model", "whitened", "auto").lower()
    if whitened_raw == "auto":
        whitened = bool(needs)
    else:
        whitened = _bool_value(whitened_raw, "[model] whitened")
        if not whitened and needs:
            raise ConfigError(
                f"[model] whitened: {' and '.join(needs)} require(s) whitened=true"
            )

    samples = _int_value(
        raw("predict", "samples_per_particle", "20"), "[predict] samples_per_particle", 1
    )
    replicates = _int_value(raw("benchmark", "replicates", "5"), "[benchmark] replicates", 1)
    out_dir = directory if directory is not None else raw("output", "directory", ".")

    return Resolved(
        kernel=kernel_text,
        likelihood=likelihood,
        priors=priors_text,
        inducing=inducing,
        whitened=whitened,
        jitter=jitter,
        particles=n_particles,
        iterations=n_iterations,
        step_size=step_size,
        batch_size=bsize,
        seed=svgd_seed,
        adam=adam,
        trace_every=trace_every,
        source=src,
        n=n_rows,
        target=target,
        has_header=has_header,
        train_fraction=train_fraction,
        shuffle=shuffle,
        standardize=standardize,
        data_seed=data_seed,
        samples_per_particle=samples,
        replicates=replicates,
        directory=out_dir,
    )


def write_resolved(cfg: Resolved, path) -> None:
    """Echo the configuration with every value made explicit.

    Feeding the written file back to ``fit`` reproduces the run (trace
    timings aside).
    """
    cp = configparser.ConfigParser(interpolation=None)
    yes = lambda b: "true" if b else "false"
    cp["model"] = {
        "kernel": cfg.kernel,
        "likelihood": cfg.likelihood,
        "priors": cfg.priors,
        "inducing": str(cfg.inducing),
        "whitened": yes(cfg.whitened),
        "jitter": repr(cfg.jitter),
    }
    cp["svgd"] = {
        "particles": str(cfg.particles),
        "iterations": str(cfg.iterations),
        "step_size": repr(cfg.step_size),
        "batch_size": str(cfg.batch_size),
        "seed": str(cfg.seed),
        "adam": yes(cfg.adam),
        "trace_every": str(cfg.trace_every),
    }
    cp["data"] = {
        "source": cfg.source,
        "n": str(cfg.n),
        "target": cfg.target,
        "has_header": yes(cfg.has_header),
        "train_fraction": repr(cfg.train_fraction),
        "shuffle": yes(cfg.shuffle),
        "standardize": yes(cfg.standardize),
        "seed": str(cfg.data_seed),
    }
    cp["predict"] = {"samples_per_particle": str(cfg.samples_per_particle)}
    cp["benchmark"] = {"replicates": str(cfg.replicates)}
    cp["output"] = {"directory": cfg.directory}
    with open(path, "w") as fh:
        cp.write(fh)


# ---------------------------------------------------------------- pipeline


def _load_full_dataset(cfg: Resolved) -> Dataset:
    if cfg.source == "neal":
        return datasets.generate_neal(cfg.n, cfg.data_seed)
    if cfg.source == "sign":
        return datasets.generate_sign(cfg.n, cfg.data_seed)
    return datasets.load_csv(
        cfg.source,
        target_column=cfg.target or None,
        has_header=cfg.has_header,
        classification=cfg.likelihood == "bernoulli",
    )


def _prepare(cfg: Resolved):
    full = _load_full_dataset(cfg)
    spec = SplitSpec(cfg.train_fraction, seed=cfg.data_seed, shuffle=cfg.shuffle)
    return datasets.split(full, spec, standardize=cfg.standardize, allow_empty_test=True)


def _build_model(cfg: Resolved, train: Dataset):
    kern = parse_kernel(cfg.kernel)
    prior = parse_prior(cfg.priors)
    inducing = None
    if cfg.inducing > 0:
        if cfg.inducing > train.n:
            raise ConfigError(
                f"[model] inducing: asked for {cfg.inducing} inducing inputs "
                f"but the training split has only {train.n} rows"
            )
        inducing = models.select_inducing(train.X, cfg.inducing, seed=cfg.seed)
    return models.build_model(
        kern,
        cfg.likelihood,
        train,
        prior=prior,
        inducing=inducing,
        whitened=cfg.whitened,
        jitter=cfg.jitter,
    )


def _svgd_config(cfg: Resolved) -> SvgdConfig:
    return SvgdConfig(
        n_particles=cfg.particles,
        n_iterations=cfg.iterations,
        step_size=cfg.step_size,
        batch_size=cfg.batch_size or None,
        seed=cfg.seed,
        use_adam=cfg.adam,
        trace_every=cfg.trace_every,
    )


def _write_particles(path, ensemble: ParticleEnsemble, layout) -> None:
    names = layout.column_names()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in ensemble.particles:
            constrained = params.forward(row, layout)
            fh.write(",".join(repr(float(v)) for v in constrained) + "\n")


def read_particles(path, layout) -> np.ndarray:
    """Load a particles CSV back into unconstrained coordinates."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ConfigError(f"{path}: file is empty")
    names = layout.column_names()
    got = [c.strip() for c in rows[0]]
    if got != names:
        missing = [n for n in names if n not in got]
        extra = [c for c in got if c not in names]
        problems = []
        if missing:
            problems.append(f"missing columns: {', '.join(missing)}")
        if extra:
            problems.append(f"unexpected columns: {', '.join(extra)}")
        if not problems:
            problems.append("columns are out of order")
        raise ConfigError(
            f"{path}: header does not match the model ({'; '.join(problems)})"
        )
    body = rows[1:]
    if not body:
        raise ConfigError(f"{path}: no particle rows")
    matrix = np.empty((len(body), len(names)))
    for i, row in enumerate(body):
        if len(row) != len(names):
            raise ConfigError(
                f"{path}: row {i + 1} has {len(row)} cells, expected {len(names)}"
            )
        try:
            matrix[i] = [float(c) for c in row]
        except ValueError:
            raise ConfigError(f"{path}: row {i + 1} has a non-numeric cell") from None
    if not np.all(np.isfinite(matrix)):
        raise ConfigError(f"{path}: particle values must be finite")
    try:
        return np.vstack([params.inverse(c, layout) for c in matrix])
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _write_predictions(path, summary, record: Standardization | None) -> None:
    s_y, mu_y = 1.0, 0.0
    if record is not None and record.y_std is not None:
        s_y, mu_y = record.y_std, record.y_mean
    with_prob = summary.prob is not None
    header = "query_index,mean,variance" + (",prob" if with_prob else "")
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i in range(summary.mean.size):
            cells = [
                str(i),
                repr(float(summary.mean[i] * s_y + mu_y)),
                repr(float(summary.variance[i] * s_y * s_y)),
            ]
            if with_prob:
                cells.append(repr(float(summary.prob[i])))
            fh.write(",".join(cells) + "\n")


def _write_metrics(path, m: Metrics) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("rmse,test_log_likelihood\n")
        fh.write(f"{m.rmse!r},{m.test_log_likelihood!r}\n")


def run_fit(cfg: Resolved) -> Metrics | None:
    """Fit per the resolved configuration and write every output file.

    Returns holdout metrics when the split leaves test rows, else None.
    """
    out = Path(cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    train, test, record = _prepare(cfg)
    model = _build_model(cfg, train)

    with open(out / "trace.csv", "w", newline="") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")

        def stream(row):
            fh.write(format_trace_row(row) + "\n")
            fh.flush()

        ensemble, _ = svgd.run(model, train, _svgd_config(cfg), on_trace=stream)

    _write_particles(out / "particles.csv", ensemble, model.layout)
    write_resolved(cfg, out / "config.resolved.ini")
    if test is None:
        return None
    summary = prediction.predict(
        ensemble,
        model,
        train,
        test.X,
        n_samples=cfg.samples_per_particle,
        rng=cfg.seed,
    )
    m = prediction.metrics(summary, test.y, model, record)
    _write_predictions(out / "predictions.csv", summary, record)
    _write_metrics(out / "metrics.csv", m)
    return m


def _read_matrix(path, has_header: bool):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: file has no rows")
    header = None
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after the header")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {r + 1} has {len(row)} cells, expected {width}")
        for cidx, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                name = repr(header[cidx]) if header else f"index {cidx}"
                raise DataError(
                    f"{path}: row {r + 1}, column {name}: cannot parse "
                    f"{cell.strip()!r} as a number"
                ) from None
            if not np.isfinite(v):
                name = repr(header[cidx]) if header else f"index {cidx}"
                raise DataError(
                    f"{path}: row {r + 1}, column {name}: non-finite value"
                )
            out[r, cidx] = v
    return header, out


def _load_query(path, cfg: Resolved, input_dim: int):
    """Split a query CSV into inputs and (when present) targets.

    A file with exactly ``input_dim`` columns is inputs-only; one extra
    column carries targets (located by the configured name or index,
    defaulting to the last column).
    """
    header, values = _read_matrix(path, cfg.has_header)
    width = values.shape[1]
    if width == input_dim:
        return values, None
    if width != input_dim + 1:
        raise DataError(
            f"{path}: query file has {width} columns; expected {input_dim} "
            f"(inputs only) or {input_dim + 1} (inputs plus target)"
        )
    if not cfg.target:
        idx = width - 1
    elif cfg.target.lstrip("-").isdigit():
        idx = int(cfg.target)
        if not 0 <= idx < width:
            raise DataError(f"{path}: target column index {idx} out of range")
    else:
        if header is None or cfg.target not in header:
            raise DataError(f"{path}: no column named {cfg.target!r}")
        idx = header.index(cfg.target)
    return np.delete(values, idx, axis=1), values[:, idx]


# -------------------------------------------------------------- commands


def _handled(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, DataError) as e:
            _fail(str(e), 2)
        except NumericalError as e:
            _fail(str(e), 3)
        except OSError as e:
            _fail(str(e), 4)
        except ValueError as e:
            _fail(str(e), 2)

    return wrapper


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


_config_opt = click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="INI configuration file.",
)


@click.group()
def main():
    """Particle-based Gaussian process fitting."""


@main.command()
@_config_opt
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the [svgd] seed.")
@click.option("--particles", type=int, default=None, help="Override [svgd] particles.")
@click.option("--iters", type=int, default=None, help="Override [svgd] iterations.")
@click.option("--batch-size", type=int, default=None, help="Override [svgd] batch_size.")
@click.option("--data", "data_path", type=click.Path(), default=None, help="Override [data] source.")
@_handled
def fit(config_path, out, seed, particles, iters, batch_size, data_path):
    """Fit a model and write the particle ensemble plus its trace."""
    cfg = resolve_config(
        config_path,
        directory=out,
        seed=seed,
        particles=particles,
        iterations=iters,
        batch_size=batch_size,
        source=data_path,
    )
    m = run_fit(cfg)
    click.echo(f"wrote particles.csv, trace.csv, config.resolved.ini to {cfg.directory}")
    if m is not None:
        click.echo(
            f"holdout rmse {m.rmse:.6g}, test log likelihood {m.test_log_likelihood:.6g}"
        )


@main.command()
@_config_opt
@click.option(
    "--data",
    "query_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="CSV of query inputs (and optionally targets).",
)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory holding particles.csv; predictions land there too.")
@_handled
def predict(config_path, query_path, out):
    """Evaluate a saved ensemble at new query points."""
    cfg = resolve_config(config_path, directory=out)
    out_dir = Path(cfg.directory)
    train, _, record = _prepare(cfg)
    model = _build_model(cfg, train)
    lam = read_particles(out_dir / "particles.csv", model.layout)
    ensemble = ParticleEnsemble(lam)

    Xq, yq = _load_query(query_path, cfg, train.input_dim)
    if record is not None:
        Xq = (Xq - record.x_mean) / record.x_std
    summary = prediction.predict(
        ensemble, model, train, Xq, n_samples=cfg.samples_per_particle, rng=cfg.seed
    )
    _write_predictions(out_dir / "predictions.csv", summary, record)
    click.echo(f"wrote predictions.csv for {Xq.shape[0]} query points to {cfg.directory}")
    if yq is not None:
        if record is not None and record.y_std is not None:
            yq = (yq - record.y_mean) / record.y_std
        m = prediction.metrics(summary, yq, model, record)
        _write_metrics(out_dir / "metrics.csv", m)
        click.echo(
            f"rmse {m.rmse:.6g}, test log likelihood {m.test_log_likelihood:.6g}"
        )


@main.command()
@click.argument("generator", type=click.Choice(["neal", "sign"]))
@click.option("-n", "--n", "n", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="data.csv", show_default=True)
@_handled
def synth(generator, n, seed, out):
    """Write a synthetic dataset to CSV.

    GENERATOR is the dataset family: 'neal' (noisy 1-D regression with
    outliers) or 'sign' (binary labels with flips).
    """
    ds = datasets.generate_neal(n, seed) if generator == "neal" else datasets.generate_sign(n, seed)
    names = [f"x{i}" for i in range(ds.input_dim)] + ["y"]
    with open(out, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(ds.n):
            cells = [repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))]
            fh.write(",".join(cells) + "\n")
    click.echo(f"wrote {ds.n} rows to {out}")


@main.command()
@_config_opt
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--replicates", type=int, default=None, help="Override [benchmark] replicates.")
@click.option("--seed", type=int, default=None, help="Override the base seed.")
@_handled
def benchmark(config_path, out, replicates, seed):
    """Fit over several seeds and tabulate holdout scores."""
    cfg = resolve_config(config_path, directory=out, seed=seed)
    n_reps = replicates if replicates is not None else cfg.replicates
    if n_reps < 1:
        raise ConfigError(f"replicates must be at least 1, got {n_reps}")
    if cfg.train_fraction >= 1.0:
        raise ConfigError(
            "benchmarking needs a holdout; set [data] train_fraction below 1"
        )
    out_root = Path(cfg.directory)
    out_root.mkdir(parents=True, exist_ok=True)

    scores = []
    for r in range(n_reps):
        rep = replace(
            cfg,
            seed=cfg.seed + r,
            data_seed=cfg.data_seed + r,
            directory=str(out_root / f"rep{r}"),
            replicates=n_reps,
        )
        start = time.perf_counter()
        m = run_fit(rep)
        wall = time.perf_counter() - start
        if m is None:
            raise ConfigError("replicate produced no holdout metrics")
        scores.append((r, m.rmse, m.test_log_likelihood, wall))
        click.echo(
            f"replicate {r}: rmse {m.rmse:.6g}, "
            f"test log likelihood {m.test_log_likelihood:.6g}, {wall:.2f}s"
        )

    cols = np.array([[s[1], s[2], s[3]] for s in scores])
    means = cols.mean(axis=0)
    stds = cols.std(axis=0)
    with open(out_root / "benchmark.csv", "w", newline="") as fh:
        fh.write(",".join(BENCHMARK_HEADER) + "\n")
        for r, rmse, tll, wall in scores:
            fh.write(f"{r},{rmse!r},{tll!r},{wall!r},0.0,0.0,0.0\n")
        fh.write(
            "-1,"
            + ",".join(repr(float(v)) for v in means)
            + ","
            + ",".join(repr(float(v)) for v in stds)
            + "\n"
        )
    click.echo(
        f"aggregate over {n_reps} replicate(s): rmse {means[0]:.6g} "
        f"(std {stds[0]:.6g}), test log likelihood {means[1]:.6g} (std {stds[1]:.6g})"
    )


if __name__ == "__main__":
    main()
