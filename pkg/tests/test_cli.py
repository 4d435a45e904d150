"""Command line interface: configs, outputs, reruns, exit codes."""

import configparser

import numpy as np
import pytest
from click.testing import CliRunner

import steinfit as sf
import steinfit.params as P
from steinfit import data as D
from steinfit.cli import main, read_particles


@pytest.fixture
def runner():
    return CliRunner()


def write_config(path, text):
    path.write_text(text)
    return str(path)


def base_config(tmp_path, out="out", extra=""):
    return write_config(
        tmp_path / "config.ini",
        "[data]\nsource = neal\nn = 40\n\n"
        "[svgd]\nparticles = 3\niterations = 5\n\n"
        f"[output]\ndirectory = {tmp_path / out}\n" + extra,
    )


def test_fit_writes_all_outputs(tmp_path, runner):
    cfg = base_config(tmp_path)
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    for name in (
        "particles.csv",
        "trace.csv",
        "config.resolved.ini",
        "predictions.csv",
        "metrics.csv",
    ):
        assert (out / name).exists(), name
    assert "rmse" in result.output


def test_resolved_config_echoes_every_setting(tmp_path, runner):
    cfg = base_config(tmp_path)
    runner.invoke(main, ["fit", "--config", cfg], catch_exceptions=False)
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(tmp_path / "out" / "config.resolved.ini")
    assert parser["model"]["kernel"] == "se"
    assert parser["model"]["likelihood"] == "gaussian"
    assert parser["svgd"]["particles"] == "3"
    assert parser["svgd"]["step_size"] == "0.05"
    assert parser["data"]["train_fraction"] == "0.5"
    assert parser["data"]["shuffle"] == "false"


def test_fit_rerun_from_resolved_config_is_byte_identical(tmp_path, runner):
    cfg = base_config(tmp_path)
    runner.invoke(main, ["fit", "--config", cfg], catch_exceptions=False)
    resolved = str(tmp_path / "out" / "config.resolved.ini")
    result = runner.invoke(
        main,
        ["fit", "--config", resolved, "--out", str(tmp_path / "out2")],
    )
    assert result.exit_code == 0, result.output
    for name in ("particles.csv", "predictions.csv", "metrics.csv"):
        first = (tmp_path / "out" / name).read_bytes()
        second = (tmp_path / "out2" / name).read_bytes()
        assert first == second, name
    # Trace rows match except for wall-clock timing in the last column.
    a = (tmp_path / "out" / "trace.csv").read_text().splitlines()
    b = (tmp_path / "out2" / "trace.csv").read_text().splitlines()
    assert len(a) == len(b)
    for row_a, row_b in zip(a, b):
        assert row_a.rsplit(",", 1)[0] == row_b.rsplit(",", 1)[0]


def test_cli_overrides_land_in_the_resolved_config(tmp_path, runner):
    cfg = base_config(tmp_path)
    result = runner.invoke(
        main,
        [
            "fit",
            "--config",
            cfg,
            "--seed",
            "7",
            "--particles",
            "2",
            "--iters",
            "3",
            "--batch-size",
            "4",
        ],
    )
    assert result.exit_code == 0, result.output
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(tmp_path / "out" / "config.resolved.ini")
    assert parser["svgd"]["seed"] == "7"
    assert parser["svgd"]["particles"] == "2"
    assert parser["svgd"]["iterations"] == "3"
    assert parser["svgd"]["batch_size"] == "4"
    # Mini-batching flips on the whitened representation and the small
    # default step size.
    assert parser["model"]["whitened"] == "true"
    assert parser["svgd"]["step_size"] == "0.001"


def test_zero_iteration_fit_writes_the_prior_draw(tmp_path, runner):
    cfg = write_config(
        tmp_path / "c.ini",
        "[data]\nsource = neal\nn = 30\n\n"
        "[svgd]\nparticles = 4\niterations = 0\nseed = 5\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 0, result.output
    full = D.generate_neal(30, seed=0)
    train, _, _ = D.split(full, D.SplitSpec(0.5, seed=0, shuffle=False))
    model = sf.build_model(sf.make("se"), "gaussian", train)
    expected = P.sample_initial(
        model.layout, model.priors, 4, np.random.default_rng(5)
    )
    loaded = read_particles(tmp_path / "out" / "particles.csv", model.layout)
    np.testing.assert_allclose(loaded, expected, rtol=1e-12, atol=1e-12)


def test_particles_csv_carries_layout_column_names(tmp_path, runner):
    cfg = base_config(tmp_path)
    runner.invoke(main, ["fit", "--config", cfg], catch_exceptions=False)
    header = (
        (tmp_path / "out" / "particles.csv").read_text().splitlines()[0]
    )
    assert header == "k0_sigma,k0_lengthscales,noise_variance"


def test_synth_writes_loadable_datasets(tmp_path, runner):
    out = tmp_path / "neal.csv"
    result = runner.invoke(
        main, ["synth", "neal", "-n", "200", "--seed", "3", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    data = D.load_csv(out)
    assert data.n == 200 and data.input_dim == 1
    assert out.read_text().splitlines()[0] == "x0,y"
    reference = D.generate_neal(200, seed=3)
    np.testing.assert_allclose(data.X, reference.X, rtol=1e-15)
    np.testing.assert_allclose(data.y, reference.y, rtol=1e-15)

    sign_out = tmp_path / "sign.csv"
    result = runner.invoke(
        main, ["synth", "sign", "-n", "1", "--out", str(sign_out)]
    )
    assert result.exit_code == 0
    assert D.load_csv(sign_out, classification=True).n == 1


def test_synth_rejects_unknown_generator(tmp_path, runner):
    result = runner.invoke(
        main, ["synth", "bogus", "--out", str(tmp_path / "x.csv")]
    )
    assert result.exit_code == 2
    assert "bogus" in result.output


def test_fit_then_predict_on_training_inputs(tmp_path, runner):
    data_csv = tmp_path / "train.csv"
    runner.invoke(
        main,
        ["synth", "neal", "-n", "60", "--seed", "1", "--out", str(data_csv)],
        catch_exceptions=False,
    )
    cfg = write_config(
        tmp_path / "c.ini",
        f"[data]\nsource = {data_csv}\ntrain_fraction = 0.8\n\n"
        "[svgd]\nparticles = 4\niterations = 60\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 0, result.output
    result = runner.invoke(
        main, ["predict", "--config", cfg, "--data", str(data_csv)]
    )
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "out" / "predictions.csv").read_text().splitlines()
    assert lines[0] == "query_index,mean,variance"
    assert len(lines) == 1 + 60
    values = np.array([line.split(",") for line in lines[1:]], dtype=float)
    assert np.all(np.isfinite(values))
    assert np.all(values[:, 2] >= 0.0)
    # The query file carries targets, so metrics are refreshed too.
    metrics_lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert metrics_lines[0] == "rmse,test_log_likelihood"
    rmse, tll = map(float, metrics_lines[1].split(","))
    assert np.isfinite(rmse) and np.isfinite(tll)


def test_classification_pipeline_adds_probability_column(tmp_path, runner):
    data_csv = tmp_path / "sign.csv"
    runner.invoke(
        main,
        ["synth", "sign", "-n", "40", "--out", str(data_csv)],
        catch_exceptions=False,
    )
    cfg = write_config(
        tmp_path / "c.ini",
        f"[data]\nsource = {data_csv}\ntrain_fraction = 0.7\n\n"
        "[model]\nlikelihood = bernoulli\n\n"
        "[svgd]\nparticles = 3\niterations = 20\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "out" / "predictions.csv").read_text().splitlines()
    assert lines[0] == "query_index,mean,variance,prob"
    probs = np.array([line.split(",")[3] for line in lines[1:]], dtype=float)
    assert np.all((probs >= 0.0) & (probs <= 1.0))


def test_composite_kernel_expression(tmp_path, runner):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 3))
    y = X[:, 0] - 0.5 * X[:, 2] + 0.1 * rng.standard_normal(30)
    rows = ["a,b,c,y"] + [
        ",".join(repr(v) for v in row) + "," + repr(t)
        for row, t in zip(X.tolist(), y.tolist())
    ]
    data_csv = tmp_path / "wide.csv"
    data_csv.write_text("\n".join(rows) + "\n")
    cfg = write_config(
        tmp_path / "c.ini",
        "[model]\nkernel = product(matern52(dims=0:1), polynomial(degree=3, dims=2), white)\n\n"
        f"[data]\nsource = {data_csv}\n\n"
        "[svgd]\nparticles = 2\niterations = 3\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 0, result.output
    header = (tmp_path / "out" / "particles.csv").read_text().splitlines()[0]
    assert header == (
        "k0_sigma,k0_lengthscales_0,k0_lengthscales_1,"
        "k1_sigma,k1_offset,k2_sigma,noise_variance"
    )


def test_bad_kernel_expressions_exit_with_config_error(tmp_path, runner):
    for expr, fragment in (
        ("product()", "expected a name"),
        ("se(", "expected a name"),
        ("nosuch()", "unknown kernel family"),
        ("matern52(dims=0:5)", "exceed input dimensionality"),
    ):
        cfg = write_config(
            tmp_path / "k.ini",
            f"[model]\nkernel = {expr}\n\n[data]\nsource = neal\nn = 20\n\n"
            f"[output]\ndirectory = {tmp_path / 'out'}\n",
        )
        result = runner.invoke(main, ["fit", "--config", cfg])
        assert result.exit_code == 2, expr
        assert fragment in result.output, expr


def test_bad_prior_exits_with_config_error(tmp_path, runner):
    cfg = base_config(tmp_path, extra="\n[model]\npriors = nope(1,2)\n")
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 2
    assert "gamma(shape, scale) or none" in result.output


def test_unknown_sections_and_keys_are_rejected(tmp_path, runner):
    cfg = write_config(tmp_path / "a.ini", "[nosuch]\nx = 1\n")
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 2
    assert "unknown config section [nosuch]" in result.output
    cfg = write_config(tmp_path / "b.ini", "[svgd]\nnope = 1\n")
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 2
    assert "unknown key 'nope'" in result.output


def test_explicit_unwhitened_clashes_with_minibatching(tmp_path, runner):
    cfg = base_config(
        tmp_path, extra="\n[model]\nwhitened = false\n"
    )
    result = runner.invoke(main, ["fit", "--config", cfg, "--batch-size", "4"])
    assert result.exit_code == 2
    assert "whitened=true" in result.output


def test_missing_data_file_exits_with_io_error(tmp_path, runner):
    cfg = write_config(
        tmp_path / "c.ini",
        f"[data]\nsource = {tmp_path / 'missing.csv'}\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 4
    assert "No such file" in result.output


def test_predict_before_fit_exits_with_io_error(tmp_path, runner):
    cfg = base_config(tmp_path)
    query = tmp_path / "q.csv"
    query.write_text("x0\n0.0\n")
    result = runner.invoke(main, ["predict", "--config", cfg, "--data", str(query)])
    assert result.exit_code == 4
    assert "particles.csv" in result.output


def test_corrupted_particle_header_names_the_column(tmp_path, runner):
    cfg = base_config(tmp_path)
    runner.invoke(main, ["fit", "--config", cfg], catch_exceptions=False)
    particles = tmp_path / "out" / "particles.csv"
    text = particles.read_text().replace("noise_variance", "mystery")
    particles.write_text(text)
    query = tmp_path / "q.csv"
    query.write_text("x0\n0.0\n")
    result = runner.invoke(
        main, ["predict", "--config", cfg, "--data", str(query)]
    )
    assert result.exit_code == 2
    assert "noise_variance" in result.output


def test_every_emitted_csv_round_trips_through_the_loader(tmp_path, runner):
    cfg = base_config(tmp_path)
    runner.invoke(main, ["fit", "--config", cfg], catch_exceptions=False)
    out = tmp_path / "out"
    for name in ("particles.csv", "trace.csv", "predictions.csv"):
        loaded = D.load_csv(out / name)
        assert loaded.n >= 1, name
    metrics = (out / "metrics.csv").read_text().splitlines()
    assert len(metrics) == 2
    assert all(np.isfinite(float(v)) for v in metrics[1].split(","))


def test_benchmark_single_replicate_composes_with_fit(tmp_path, runner):
    cfg = base_config(tmp_path, out="fit_out")
    runner.invoke(main, ["fit", "--config", cfg], catch_exceptions=False)
    result = runner.invoke(
        main,
        [
            "benchmark",
            "--config",
            cfg,
            "--out",
            str(tmp_path / "bench"),
            "--replicates",
            "1",
        ],
    )
    assert result.exit_code == 0, result.output
    for name in ("particles.csv", "predictions.csv", "metrics.csv"):
        fit_bytes = (tmp_path / "fit_out" / name).read_bytes()
        rep_bytes = (tmp_path / "bench" / "rep0" / name).read_bytes()
        assert fit_bytes == rep_bytes, name


def test_benchmark_aggregates_replicates(tmp_path, runner):
    cfg = base_config(tmp_path, out="unused")
    result = runner.invoke(
        main,
        [
            "benchmark",
            "--config",
            cfg,
            "--out",
            str(tmp_path / "bench"),
            "--replicates",
            "3",
        ],
    )
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "bench" / "benchmark.csv").read_text().splitlines()
    assert lines[0] == (
        "replicate,rmse,test_log_likelihood,wall_time_s,"
        "rmse_std,test_log_likelihood_std,wall_time_s_std"
    )
    assert len(lines) == 1 + 3 + 1
    rows = [line.split(",") for line in lines[1:]]
    assert [r[0] for r in rows] == ["0", "1", "2", "-1"]
    per_rep = np.array([r[1:] for r in rows[:3]], dtype=float)
    aggregate = np.array(rows[3][1:], dtype=float)
    np.testing.assert_allclose(aggregate[:3], per_rep[:, :3].mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(
        aggregate[3:], per_rep[:, :3].std(axis=0, ddof=0), rtol=1e-12
    )
    # Every replicate runs under its own seeds.
    seeds = set()
    for rep in range(3):
        parser = configparser.ConfigParser(interpolation=None)
        parser.read(tmp_path / "bench" / f"rep{rep}" / "config.resolved.ini")
        seeds.add((parser["svgd"]["seed"], parser["data"]["seed"]))
    assert len(seeds) == 3


def test_benchmark_requires_a_holdout(tmp_path, runner):
    cfg = write_config(
        tmp_path / "c.ini",
        "[data]\nsource = neal\nn = 20\ntrain_fraction = 1.0\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(
        main, ["benchmark", "--config", cfg, "--out", str(tmp_path / "b")]
    )
    assert result.exit_code == 2
    assert "holdout" in result.output


def test_sparse_minibatch_fit_runs(tmp_path, runner):
    cfg = write_config(
        tmp_path / "c.ini",
        "[model]\ninducing = 8\n\n"
        "[data]\nsource = neal\nn = 60\n\n"
        "[svgd]\nparticles = 2\niterations = 10\nbatch_size = 16\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 0, result.output
    header = (tmp_path / "out" / "particles.csv").read_text().splitlines()[0]
    # 8 inducing latents alongside the hyperparameters.
    assert header.count("latent") == 8
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(tmp_path / "out" / "config.resolved.ini")
    assert parser["model"]["whitened"] == "true"


def test_too_many_inducing_points_is_a_config_error(tmp_path, runner):
    cfg = write_config(
        tmp_path / "c.ini",
        "[model]\ninducing = 50\n\n"
        "[data]\nsource = neal\nn = 40\n\n"
        f"[output]\ndirectory = {tmp_path / 'out'}\n",
    )
    result = runner.invoke(main, ["fit", "--config", cfg])
    assert result.exit_code == 2


def test_data_override_flag_replaces_the_source(tmp_path, runner):
    data_csv = tmp_path / "alt.csv"
    runner.invoke(
        main,
        ["synth", "neal", "-n", "24", "--out", str(data_csv)],
        catch_exceptions=False,
    )
    cfg = base_config(tmp_path)
    result = runner.invoke(
        main, ["fit", "--config", cfg, "--data", str(data_csv)]
    )
    assert result.exit_code == 0, result.output
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(tmp_path / "out" / "config.resolved.ini")
    assert parser["data"]["source"] == str(data_csv)
    # CSV sources shuffle by default and hold out 30%.
    assert parser["data"]["shuffle"] == "true"
    assert parser["data"]["train_fraction"] == "0.7"
