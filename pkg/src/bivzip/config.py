"""TOML model-spec and truth-spec configuration parsing.

A model config fully determines one member of the model family:

    [intensity1]
    linear = ["gear", "segment"]
    nonlinear = [{name = "lturb", knots = 20}, {name = "depth", knots = 20}]

    [intensity2]
    ...

    [intensity3]
    linear = ["gear", "segment", "lturb", "depth"]

    [logit]
    covariates = ["gear", "segment"]

    [baselines]
    gear = "EF"
    segment = "s27"

    [priors]
    coefficient_variance = 100.0
    spline_variance_mean = 0.001
    spline_variance_var = 100.0
    error_variance_mean = 0.001
    error_variance_var = 100.0

A truth config used by the `simulate` subcommand adds sections for the
true coefficient values, nonlinear shapes, error variances, and the
covariate/effort recipes.
"""

from __future__ import annotations

import math
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import model, simulate
from .errors import SpecError


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"cannot parse config {path}: {exc}") from exc


def _priors_from(cfg: dict) -> model.PriorConfig:
    p = cfg.get("priors", {})
    kwargs = {}
    if "coefficient_variance" in p:
        kwargs["coefficient_variance"] = float(p["coefficient_variance"])
    if "spline_variance_mean" in p or "spline_variance_var" in p:
        kwargs["spline_ig"] = model.ig_hyperparams_from_moments(
            float(p.get("spline_variance_mean", 0.001)),
            float(p.get("spline_variance_var", 100.0)),
        )
    if "error_variance_mean" in p or "error_variance_var" in p:
        kwargs["error_ig"] = model.ig_hyperparams_from_moments(
            float(p.get("error_variance_mean", 0.001)),
            float(p.get("error_variance_var", 100.0)),
        )
    return model.PriorConfig(**kwargs)


def _model_spec_from(cfg: dict) -> model.ModelSpec:
    intensity = []
    for ell in (1, 2, 3):
        sec = cfg.get(f"intensity{ell}")
        if sec is None:
            raise SpecError(f"config missing [intensity{ell}] section")
        nonlinear = tuple(
            model.NonlinearTerm(t["name"], int(t.get("knots", 20)))
            for t in sec.get("nonlinear", [])
        )
        intensity.append(
            model.IntensitySpec(tuple(sec.get("linear", [])), nonlinear)
        )
    logit = tuple(cfg.get("logit", {}).get("covariates", []))
    baselines = {str(k): str(v) for k, v in cfg.get("baselines", {}).items()}
    return model.ModelSpec(tuple(intensity), logit, baselines)


def parse_model_config(path):
    """(ModelSpec, PriorConfig) from a TOML model configuration file."""
    cfg = _load_toml(path)
    return _model_spec_from(cfg), _priors_from(cfg)


# -- truth configs -----------------------------------------------------------

_SHAPES = {
    "sine": lambda p: (lambda x: p.get("amplitude", 1.0)
                       * np.sin(p.get("frequency", 1.0) * x + p.get("phase", 0.0))),
    "quadratic": lambda p: (lambda x: p.get("scale", 1.0) * x * x),
    "zero": lambda p: (lambda x: np.zeros_like(np.asarray(x, dtype=float))),
}


def shape_function(params: dict):
    """Closed-form nonlinear truth shapes addressable from a truth config."""
    kind = params.get("shape")
    if kind not in _SHAPES:
        raise SpecError(f"unknown truth shape '{kind}'")
    return _SHAPES[kind](params)


def parse_truth_config(path):
    """(TruthSpec, PriorConfig) from a TOML truth configuration file."""
    cfg = _load_toml(path)
    spec = _model_spec_from(cfg)
    t = cfg.get("truth", {})
    if not t:
        raise SpecError("truth config missing [truth] section")
    coef = tuple(dict(t.get(f"coef{ell}", {})) for ell in (1, 2, 3))
    gamma = tuple(dict(t.get(f"gamma{r}", {})) for r in (1, 2, 3))
    funcs = []
    for ell in (1, 2, 3):
        fs = {}
        for item in t.get(f"nonlinear{ell}", []):
            fs[item["name"]] = shape_function(item)
        funcs.append(fs)
    sigma2 = tuple(float(v) for v in t.get("sigma2_eps", [0.1, 0.1, 0.1]))
    effort = tuple(t.get("effort", ["loguniform", 0.5, 5.0]))
    effort = (str(effort[0]),) + tuple(float(v) for v in effort[1:])
    cov = t.get("covariates")
    if cov:
        recipe = {name: tuple(rule) for name, rule in cov.items()}
    else:
        recipe = simulate.default_covariate_recipe()
    truth = simulate.TruthSpec(
        spec=spec,
        n=int(t.get("n", 960)),
        coef=coef,
        gamma_coef=gamma,
        sigma2_eps=sigma2,
        spline_funcs=tuple(funcs),
        covariates=recipe,
        effort=effort,
    )
    return truth, _priors_from(cfg)
