import json

import numpy as np
import pandas as pd
import pytest

from bivzip import cli, config, data_io, sampler
from bivzip.errors import ChainDivergenceError, SpecError, TableError
from bivzip.model import IntensitySpec, ModelSpec

MODEL_TOML = """
[intensity1]
linear = ["gear", "depth"]

[intensity2]
linear = ["gear", "depth"]

[intensity3]
linear = ["gear"]

[logit]
covariates = ["gear"]

[baselines]
gear = "EF"

[priors]
coefficient_variance = 25.0
spline_variance_mean = 0.01
spline_variance_var = 10.0
"""

SPLINE_MODEL_TOML = """
[intensity1]
linear = ["gear"]
nonlinear = [{name = "depth", knots = 6}]

[intensity2]
linear = ["gear"]
nonlinear = [{name = "depth", knots = 6}]

[intensity3]
linear = ["gear"]

[logit]
covariates = ["gear"]

[baselines]
gear = "EF"
"""

TRUTH_TOML = """
[intensity1]
linear = ["gear", "depth"]

[intensity2]
linear = ["gear", "depth"]

[intensity3]
linear = ["gear"]

[logit]
covariates = ["gear"]

[baselines]
gear = "EF"

[truth]
n = 80
coef1 = {intercept = 0.3, "gear[BS]" = 0.4, depth = 0.2}
coef2 = {intercept = -0.2, "gear[BS]" = -0.3, depth = -0.1}
coef3 = {intercept = -0.9, "gear[BS]" = 0.1}
gamma1 = {intercept = 0.4}
gamma2 = {intercept = -0.2}
gamma3 = {intercept = 0.1}
sigma2_eps = [0.05, 0.05, 0.05]
effort = ["loguniform", 0.5, 3.0]

[truth.covariates]
gear = ["categorical", ["BS", "EF"], [0.5, 0.5]]
depth = ["normal", 0.0, 1.0]
"""


def spec():
    return ModelSpec(
        intensity=(
            IntensitySpec(linear=("gear", "depth")),
            IntensitySpec(linear=("gear", "depth")),
            IntensitySpec(linear=("gear",)),
        ),
        logit=("gear",),
        baselines={"gear": "EF"},
    )


def good_frame(n=30, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            "y1": rng.poisson(1.0, n),
            "y2": rng.poisson(1.0, n),
            "effort": rng.uniform(0.5, 2.0, n),
            "gear": rng.choice(["BS", "EF"], n),
            "depth": rng.normal(0, 1, n),
        }
    )


# -- table validation ---------------------------------------------------------

def test_validate_table_accepts_clean_frame():
    table = data_io.validate_table(good_frame(), spec())
    assert table.n == 30
    assert table.y1.dtype == np.int64


def test_missing_columns_are_named():
    frame = good_frame().drop(columns=["effort"])
    with pytest.raises(TableError, match="effort"):
        data_io.validate_table(frame, spec())
    frame = good_frame().drop(columns=["depth"])
    with pytest.raises(TableError, match="depth"):
        data_io.validate_table(frame, spec())


def test_missing_value_reports_row():
    frame = good_frame()
    frame.loc[7, "gear"] = None
    with pytest.raises(TableError, match="row 7"):
        data_io.validate_table(frame, spec())


def test_bad_counts_rejected():
    frame = good_frame()
    frame["y1"] = frame["y1"].astype(float)
    frame.loc[3, "y1"] = 2.5
    with pytest.raises(TableError, match="integral"):
        data_io.validate_table(frame, spec())
    frame = good_frame()
    frame.loc[0, "y2"] = -1
    with pytest.raises(TableError, match="nonnegative"):
        data_io.validate_table(frame, spec())
    frame = good_frame()
    frame["y1"] = frame["y1"].astype(object)
    frame.loc[5, "y1"] = "three"
    with pytest.raises(TableError, match="row 5"):
        data_io.validate_table(frame, spec())


def test_bad_effort_and_nonfinite_covariates_rejected():
    frame = good_frame()
    frame.loc[2, "effort"] = 0.0
    with pytest.raises(TableError, match="effort"):
        data_io.validate_table(frame, spec())
    frame = good_frame()
    frame.loc[4, "depth"] = np.inf
    with pytest.raises(TableError, match="depth"):
        data_io.validate_table(frame, spec())


def test_load_table_missing_file():
    with pytest.raises(TableError, match="not found"):
        data_io.load_table("/nonexistent/file.csv", spec())


# -- config parsing -----------------------------------------------------------

def test_parse_model_config(tmp_path):
    path = tmp_path / "model.toml"
    path.write_text(MODEL_TOML)
    parsed, priors = config.parse_model_config(path)
    assert parsed == spec()
    assert priors.coefficient_variance == 25.0
    c, d = priors.spline_ig
    # moments reproduce the configured mean/variance
    assert d / (c - 1) == pytest.approx(0.01)
    assert d * d / ((c - 1) ** 2 * (c - 2)) == pytest.approx(10.0)


def test_parse_model_config_spline_terms(tmp_path):
    path = tmp_path / "model.toml"
    path.write_text(SPLINE_MODEL_TOML)
    parsed, _ = config.parse_model_config(path)
    assert parsed.intensity[0].nonlinear[0].name == "depth"
    assert parsed.intensity[0].nonlinear[0].knots == 6


def test_parse_model_config_errors(tmp_path):
    with pytest.raises(SpecError, match="not found"):
        config.parse_model_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[intensity1\n")
    with pytest.raises(SpecError, match="parse"):
        config.parse_model_config(bad)
    partial = tmp_path / "partial.toml"
    partial.write_text("[intensity1]\nlinear = ['gear']\n")
    with pytest.raises(SpecError, match="intensity2"):
        config.parse_model_config(partial)


def test_parse_truth_config(tmp_path):
    path = tmp_path / "truth.toml"
    path.write_text(TRUTH_TOML)
    truth, _ = config.parse_truth_config(path)
    assert truth.n == 80
    assert truth.coef[0]["gear[BS]"] == 0.4
    assert truth.effort == ("loguniform", 0.5, 3.0)
    assert truth.covariates["gear"][0] == "categorical"
    table, record = __import__("bivzip").simulate.simulate_dataset(
        truth, np.random.default_rng(0)
    )
    assert len(table) == 80


def test_parse_truth_config_requires_truth_section(tmp_path):
    path = tmp_path / "truth.toml"
    path.write_text(MODEL_TOML)
    with pytest.raises(SpecError, match="truth"):
        config.parse_truth_config(path)


def test_shape_functions():
    f = config.shape_function({"shape": "sine", "amplitude": 2.0, "frequency": 3.0})
    assert f(0.5) == pytest.approx(2.0 * np.sin(1.5))
    g = config.shape_function({"shape": "quadratic", "scale": 0.5})
    assert g(2.0) == pytest.approx(2.0)
    z = config.shape_function({"shape": "zero"})
    assert np.all(z(np.ones(3)) == 0)
    with pytest.raises(SpecError):
        config.shape_function({"shape": "cubic"})


# -- CLI end to end -----------------------------------------------------------

def write_inputs(tmp_path, n=40):
    model_path = tmp_path / "model.toml"
    model_path.write_text(MODEL_TOML)
    data_path = tmp_path / "data.csv"
    good_frame(n, seed=3).to_csv(data_path, index=False)
    return model_path, data_path


def test_cli_simulate_then_fit(tmp_path):
    truth_path = tmp_path / "truth.toml"
    truth_path.write_text(TRUTH_TOML)
    data_path = tmp_path / "sim.csv"
    rc = cli.main(
        ["simulate", "--truth", str(truth_path), "--out", str(data_path),
         "--seed", "7"]
    )
    assert rc == 0
    record = json.loads((tmp_path / "sim.truth.json").read_text())
    assert record["seed"] == 7 and record["n"] == 80
    assert len(record["labels"]) == 80

    model_path = tmp_path / "model.toml"
    model_path.write_text(MODEL_TOML)
    out_dir = tmp_path / "fit"
    rc = cli.main(
        ["fit", "--data", str(data_path), "--model", str(model_path),
         "--out", str(out_dir), "--iters", "300", "--burn", "100",
         "--thin", "2", "--seed", "1", "--chains", "2"]
    )
    assert rc == 0
    draws0 = pd.read_csv(out_dir / "draws_chain0.csv")
    draws1 = pd.read_csv(out_dir / "draws_chain1.csv")
    assert len(draws0) == 100 and len(draws1) == 100
    assert draws0.columns[0] == "loglik"
    assert not draws0.equals(draws1)  # distinct chain seeds

    summary = json.loads((out_dir / "summary.json").read_text())
    names = {p["name"] for p in summary["parameters"]}
    assert "B1:gear[BS]" in names and "gamma1:intercept" in names
    assert {"dbar", "dhat", "p_d", "dic"} <= set(summary["dic"])
    assert len(summary["acceptance_per_chain"]) == 2

    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["chains"] == 2
    assert manifest["config_hash"]
    assert manifest["versions"]["numpy"] == np.__version__


def test_cli_fit_is_deterministic(tmp_path):
    model_path, data_path = write_inputs(tmp_path)
    for d in ("a", "b"):
        rc = cli.main(
            ["fit", "--data", str(data_path), "--model", str(model_path),
             "--out", str(tmp_path / d), "--iters", "200", "--burn", "100",
             "--thin", "1", "--seed", "5"]
        )
        assert rc == 0
    a = pd.read_csv(tmp_path / "a" / "draws_chain0.csv")
    b = pd.read_csv(tmp_path / "b" / "draws_chain0.csv")
    assert a.equals(b)


def test_cli_fit_writes_curves_for_spline_models(tmp_path):
    model_path = tmp_path / "model.toml"
    model_path.write_text(SPLINE_MODEL_TOML)
    data_path = tmp_path / "data.csv"
    good_frame(50, seed=9).to_csv(data_path, index=False)
    out_dir = tmp_path / "fit"
    rc = cli.main(
        ["fit", "--data", str(data_path), "--model", str(model_path),
         "--out", str(out_dir), "--iters", "200", "--burn", "100",
         "--thin", "2", "--seed", "2"]
    )
    assert rc == 0
    for ell in (1, 2):
        curve = pd.read_csv(out_dir / f"curve_intensity{ell}_depth.csv")
        assert list(curve.columns) == ["grid", "mean", "lower", "upper"]
        assert len(curve) == 50
        assert (curve["lower"] <= curve["upper"]).all()


def test_cli_fit_store_lambda(tmp_path):
    model_path, data_path = write_inputs(tmp_path, n=20)
    out_dir = tmp_path / "fit"
    rc = cli.main(
        ["fit", "--data", str(data_path), "--model", str(model_path),
         "--out", str(out_dir), "--iters", "120", "--burn", "60",
         "--thin", "3", "--seed", "1", "--store-lambda"]
    )
    assert rc == 0
    draws = pd.read_csv(out_dir / "draws_chain0.csv")
    assert "lambda_tilde1[0]" in draws.columns
    assert "lambda_tilde3[19]" in draws.columns


def test_cli_validation_failure_exit_code(tmp_path, capsys):
    model_path, data_path = write_inputs(tmp_path)
    frame = good_frame()
    frame.loc[0, "y1"] = -4
    frame.to_csv(data_path, index=False)
    rc = cli.main(
        ["fit", "--data", str(data_path), "--model", str(model_path),
         "--out", str(tmp_path / "fit")]
    )
    assert rc == cli.EXIT_VALIDATION
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["error"] == "TableError"
    assert "y1" in err["message"]


def test_cli_divergence_exit_code(tmp_path, capsys, monkeypatch):
    model_path, data_path = write_inputs(tmp_path)

    def explode(*args, **kwargs):
        raise ChainDivergenceError(17, "lambda1", "non-finite log intensity")

    monkeypatch.setattr(sampler, "run_chain", explode)
    rc = cli.main(
        ["fit", "--data", str(data_path), "--model", str(model_path),
         "--out", str(tmp_path / "fit"), "--iters", "100", "--burn", "50"]
    )
    assert rc == cli.EXIT_DIVERGENCE
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert err["error"] == "divergence"
    assert err["iteration"] == 17 and err["block"] == "lambda1"


def test_cli_compare_and_summarize(tmp_path, capsys):
    model_path, data_path = write_inputs(tmp_path)
    # a second model without the depth covariate
    alt = tmp_path / "alt.toml"
    alt.write_text(MODEL_TOML.replace('"gear", "depth"', '"gear"'))
    csv_out = tmp_path / "dic.csv"
    rc = cli.main(
        ["compare", "--data", str(data_path),
         "--models", str(model_path), str(alt),
         "--out", str(csv_out), "--iters", "300", "--burn", "150",
         "--thin", "2", "--seed", "4"]
    )
    assert rc == 0
    table = pd.read_csv(csv_out)
    assert set(table.columns) == {"model", "dic", "dbar", "p_d"}
    assert len(table) == 2
    assert table["dic"].is_monotonic_increasing
    printed = capsys.readouterr().out
    assert "dic" in printed

    out_dir = tmp_path / "fit"
    rc = cli.main(
        ["fit", "--data", str(data_path), "--model", str(model_path),
         "--out", str(out_dir), "--iters", "200", "--burn", "100",
         "--thin", "2", "--seed", "1"]
    )
    assert rc == 0
    summ_path = tmp_path / "summary.json"
    rc = cli.main(["summarize", "--draws", str(out_dir), "--out", str(summ_path)])
    assert rc == 0
    payload = json.loads(summ_path.read_text())
    names = [p["name"] for p in payload["parameters"]]
    assert "loglik" not in names
    assert "B1:intercept" in names
    for p in payload["parameters"]:
        assert p["lower"] <= p["mean"] <= p["upper"]


def test_cli_summarize_empty_dir(tmp_path, capsys):
    rc = cli.main(["summarize", "--draws", str(tmp_path)])
    assert rc == cli.EXIT_VALIDATION
    err = json.loads(capsys.readouterr().out.strip())
    assert err["error"] == "BivZipError"
