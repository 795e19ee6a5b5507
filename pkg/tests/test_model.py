import numpy as np
import pandas as pd
import pytest

from bivzip.errors import EncodingError, SpecError
from bivzip.model import (
    IntensitySpec,
    ModelSpec,
    NonlinearTerm,
    PriorConfig,
    build_designs,
    encode_categoricals,
    ig_hyperparams_from_moments,
)


def small_table(n=40, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            "y1": rng.integers(0, 5, n),
            "y2": rng.integers(0, 5, n),
            "effort": rng.uniform(0.5, 3.0, n),
            "gear": rng.choice(["BS", "BT", "EF"], n),
            "year": rng.choice(["y96", "y97", "y98"], n),
            "depth": rng.normal(0, 2, n),
            "lturb": rng.uniform(-1, 4, n),
        }
    )


def linear_spec():
    blocks = IntensitySpec(linear=("gear", "depth"))
    return ModelSpec(
        intensity=(blocks, blocks, IntensitySpec(linear=("gear",))),
        logit=("gear",),
        baselines={"gear": "EF", "year": "y98"},
    )


def spline_spec(knots=6):
    nl = (NonlinearTerm("depth", knots),)
    return ModelSpec(
        intensity=(
            IntensitySpec(linear=("gear",), nonlinear=nl),
            IntensitySpec(linear=("gear",), nonlinear=nl),
            IntensitySpec(linear=("gear",)),
        ),
        logit=("gear", "year"),
        baselines={"gear": "EF", "year": "y98"},
    )


def test_encode_categoricals_hand_example():
    cols, names, levels = encode_categoricals(
        ["BT", "EF", "BS", "BT"], baseline="EF", name="gear"
    )
    assert names == ["gear[BS]", "gear[BT]"]
    assert levels == ["BS", "BT", "EF"]
    assert np.array_equal(cols, [[0, 1], [0, 0], [1, 0], [0, 1]])


def test_encode_categoricals_unseen_baseline():
    with pytest.raises(EncodingError):
        encode_categoricals(["A", "B"], baseline="C", name="x")


def test_baseline_choice_spans_same_space():
    # changing the baseline changes coordinates, not the column space
    vals = ["a", "b", "c", "a", "c", "b", "b"]
    mats = []
    for base in ("a", "b", "c"):
        cols, _, _ = encode_categoricals(vals, baseline=base)
        mats.append(np.column_stack([np.ones(len(vals)), cols]))
    def proj(M):
        return M @ np.linalg.pinv(M)
    for M in mats[1:]:
        assert np.allclose(proj(mats[0]), proj(M), atol=1e-10)


def test_ig_hyperparams_examples():
    c, d = ig_hyperparams_from_moments(0.001, 100.0)
    assert c == pytest.approx(2.0 + 1e-8)
    assert d == pytest.approx(0.001 * (c - 1.0))
    c, d = ig_hyperparams_from_moments(1.0, 1.0)
    assert (c, d) == (3.0, 2.0)
    # moment check: IG(c, d) has mean d/(c-1), var d^2/((c-1)^2 (c-2))
    mean, var = 0.4, 2.5
    c, d = ig_hyperparams_from_moments(mean, var)
    assert d / (c - 1) == pytest.approx(mean)
    assert d * d / ((c - 1) ** 2 * (c - 2)) == pytest.approx(var)
    with pytest.raises(SpecError):
        ig_hyperparams_from_moments(-1.0, 1.0)


def test_prior_config_defaults():
    p = PriorConfig()
    assert p.coefficient_variance == 100.0
    assert p.spline_ig == ig_hyperparams_from_moments(0.001, 100.0)
    assert p.error_ig == p.spline_ig
    with pytest.raises(SpecError):
        PriorConfig(coefficient_variance=0.0)


def test_spec_rejects_overlap_and_bad_shape():
    with pytest.raises(SpecError):
        IntensitySpec(linear=("depth",), nonlinear=(NonlinearTerm("depth"),))
    with pytest.raises(SpecError):
        ModelSpec(intensity=(IntensitySpec(), IntensitySpec()))
    with pytest.raises(SpecError):
        # a categorical covariate cannot take a spline
        ModelSpec(
            intensity=(
                IntensitySpec(nonlinear=(NonlinearTerm("gear"),)),
                IntensitySpec(),
                IntensitySpec(),
            ),
            baselines={"gear": "EF"},
        )


def test_build_designs_linear_shapes():
    table = small_table()
    bundle = build_designs(table, linear_spec())
    d1 = bundle.intensity[0]
    # intercept + 2 gear indicators + standardized depth
    assert d1.x_names == ("intercept", "gear[BS]", "gear[BT]", "depth")
    assert d1.X.shape == (40, 4)
    assert np.all(d1.X[:, 0] == 1.0)
    assert d1.spline_blocks == ()
    assert d1.stacked is d1.X
    # depth standardized to mean zero unit sd
    assert abs(d1.X[:, 3].mean()) < 1e-12
    assert d1.X[:, 3].std() == pytest.approx(1.0)
    m, s = bundle.transforms["depth"]
    assert np.allclose(d1.X[:, 3], (table["depth"] - m) / s)
    assert bundle.X_gamma.shape == (40, 3)
    assert bundle.gamma_names == ("intercept", "gear[BS]", "gear[BT]")


def test_build_designs_spline_shapes():
    table = small_table()
    bundle = build_designs(table, spline_spec(knots=6))
    d1 = bundle.intensity[0]
    # nonlinear covariate appears both as a linear column and a block
    assert "depth" in d1.x_names
    assert len(d1.spline_blocks) == 1
    block = d1.spline_blocks[0]
    assert block.name == "depth"
    assert block.size == 6
    assert d1.stacked.shape == (40, d1.X.shape[1] + 6)
    assert d1.names[-1] == "u:depth[6]"
    # common model stays linear
    assert bundle.intensity[2].spline_blocks == ()


def test_build_designs_caps_knots_at_distinct_values():
    table = small_table()
    table["depth"] = np.tile(np.arange(5.0), 8)  # 5 distinct values
    spec = spline_spec(knots=20)
    bundle = build_designs(table, spec)
    assert bundle.intensity[0].spline_blocks[0].size == 4


def test_build_designs_validation_errors():
    table = small_table()
    spec = linear_spec()
    with pytest.raises(SpecError):
        build_designs(table.drop(columns=["gear"]), spec)
    bad = table.copy()
    bad["depth"] = 1.0
    with pytest.raises(SpecError):
        build_designs(bad, spec)
    bad = table.copy()
    bad.loc[3, "depth"] = np.nan
    with pytest.raises(SpecError):
        build_designs(bad, spec)
    with pytest.raises(SpecError):
        build_designs(table.drop(columns=["effort"]), spec)


def test_bundle_digest_is_deterministic_and_sensitive():
    table = small_table()
    spec = spline_spec()
    b1 = build_designs(table, spec)
    b2 = build_designs(table.copy(), spec)
    assert b1.digest() == b2.digest()
    other = table.copy()
    other.loc[0, "depth"] += 1.0
    assert build_designs(other, spec).digest() != b1.digest()
