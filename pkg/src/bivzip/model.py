"""Model specification, categorical encoding, and design-matrix assembly.

A ModelSpec says, for each of the three log-intensity models (species 1,
species 2, common process), which covariates enter linearly and which
get a penalized-spline term, plus the covariate list shared by the
three multinomial-logit equations.  Categorical covariates are the ones
with a declared baseline level; everything else is treated as
continuous and standardized before design construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import splines
from .errors import EncodingError, SpecError

INTENSITY_LABELS = ("species1", "species2", "common")


@dataclass(frozen=True)
class NonlinearTerm:
    name: str
    knots: int = splines.DEFAULT_KNOTS


@dataclass(frozen=True)
class IntensitySpec:
    linear: tuple = ()
    nonlinear: tuple = ()   # of NonlinearTerm

    def __post_init__(self):
        nl = tuple(
            t if isinstance(t, NonlinearTerm) else NonlinearTerm(**t)
            for t in self.nonlinear
        )
        object.__setattr__(self, "nonlinear", nl)
        object.__setattr__(self, "linear", tuple(self.linear))
        overlap = set(self.linear) & {t.name for t in nl}
        if overlap:
            raise SpecError(f"covariates both linear and nonlinear: {sorted(overlap)}")


@dataclass(frozen=True)
class ModelSpec:
    intensity: tuple           # three IntensitySpec
    logit: tuple = ()          # covariate names, shared across r = 1,2,3
    baselines: dict = field(default_factory=dict)  # categorical -> baseline level

    def __post_init__(self):
        ints = tuple(
            s if isinstance(s, IntensitySpec) else IntensitySpec(**s)
            for s in self.intensity
        )
        if len(ints) != 3:
            raise SpecError("need exactly three intensity specs")
        object.__setattr__(self, "intensity", ints)
        object.__setattr__(self, "logit", tuple(self.logit))
        for spec in ints:
            for term in spec.nonlinear:
                if term.name in self.baselines:
                    raise SpecError(
                        f"nonlinear covariate '{term.name}' is categorical"
                    )

    def covariates(self):
        names = set(self.logit)
        for s in self.intensity:
            names |= set(s.linear) | {t.name for t in s.nonlinear}
        return sorted(names)

    def is_categorical(self, name: str) -> bool:
        return name in self.baselines


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters for the vague-but-proper priors.

    coefficient_variance is the common N(0, v) variance for the linear
    and logit coefficients.  The inverse-gamma (shape, scale) pairs
    govern the spline-block variances and the per-model error
    variances.
    """

    coefficient_variance: float = 100.0
    spline_ig: tuple = None
    error_ig: tuple = None

    def __post_init__(self):
        default = ig_hyperparams_from_moments(0.001, 100.0)
        if self.spline_ig is None:
            object.__setattr__(self, "spline_ig", default)
        if self.error_ig is None:
            object.__setattr__(self, "error_ig", default)
        if self.coefficient_variance <= 0:
            raise SpecError("coefficient_variance must be positive")
        for c, d in (self.spline_ig, self.error_ig):
            if c <= 0 or d <= 0:
                raise SpecError("inverse-gamma hyperparameters must be positive")


def ig_hyperparams_from_moments(mean: float, variance: float):
    """(shape, scale) of the inverse gamma with the given mean and variance."""
    if mean <= 0 or variance <= 0:
        raise SpecError("mean and variance must be positive")
    c = 2.0 + mean * mean / variance
    d = mean * (c - 1.0)
    return c, d


def encode_categoricals(values, baseline: str, name: str = ""):
    """Baseline-omitted indicator encoding with level-name column order.

    The baseline level maps to the all-zeros row; remaining levels get
    unit indicator columns sorted by level name.
    """
    vals = pd.Series(values).astype(str)
    levels = sorted(vals.unique())
    if baseline not in levels:
        raise EncodingError(
            f"baseline level '{baseline}' of '{name}' not observed in the data"
        )
    others = [lv for lv in levels if lv != baseline]
    cols = np.column_stack([(vals == lv).to_numpy(dtype=float) for lv in others])
    colnames = [f"{name}[{lv}]" for lv in others]
    return cols, colnames, levels


@dataclass(frozen=True)
class SplineBlock:
    name: str
    basis: splines.SplineBasis

    @property
    def size(self) -> int:
        return self.basis.reparam_design.shape[1]


@dataclass(frozen=True)
class IntensityDesign:
    X: np.ndarray
    x_names: tuple
    spline_blocks: tuple  # of SplineBlock

    @property
    def stacked(self) -> np.ndarray:
        """C = [X | Z_1 | ... ], the design for the joint coefficient draw."""
        if not self.spline_blocks:
            return self.X
        return np.hstack([self.X] + [b.basis.reparam_design for b in self.spline_blocks])

    @property
    def names(self) -> tuple:
        out = list(self.x_names)
        for b in self.spline_blocks:
            out += [f"u:{b.name}[{k + 1}]" for k in range(b.size)]
        return tuple(out)


@dataclass(frozen=True)
class DesignBundle:
    intensity: tuple          # three IntensityDesign
    X_gamma: np.ndarray
    gamma_names: tuple
    effort: np.ndarray
    n: int
    transforms: dict          # continuous covariate -> (mean, sd)
    levels: dict              # categorical covariate -> observed levels
    spec: ModelSpec

    def digest(self) -> str:
        h = hashlib.sha256()
        for d in self.intensity:
            h.update(d.stacked.tobytes())
        h.update(self.X_gamma.tobytes())
        h.update(self.effort.tobytes())
        h.update(json.dumps(sorted(self.transforms.items())).encode())
        return h.hexdigest()[:16]


def _standardize(series, name, transforms):
    x = np.asarray(series, dtype=float)
    if not np.all(np.isfinite(x)):
        raise SpecError(f"non-finite values in continuous covariate '{name}'")
    if name not in transforms:
        m, s = float(np.mean(x)), float(np.std(x))
        if s == 0:
            raise SpecError(f"continuous covariate '{name}' is constant")
        transforms[name] = (m, s)
    m, s = transforms[name]
    return (x - m) / s


def _linear_block(table, names, spec, transforms, levels, prefix=""):
    n = len(table)
    cols = [np.ones((n, 1))]
    colnames = ["intercept"]
    for name in names:
        if name not in table.columns:
            raise SpecError(f"covariate '{name}' missing from the data table")
        if spec.is_categorical(name):
            block, bn, lv = encode_categoricals(table[name], spec.baselines[name], name)
            levels.setdefault(name, lv)
            cols.append(block)
            colnames += bn
        else:
            cols.append(_standardize(table[name], name, transforms)[:, None])
            colnames.append(name)
    return np.hstack(cols), colnames


def build_designs(table: pd.DataFrame, spec: ModelSpec) -> DesignBundle:
    """Assemble the three intensity designs, the logit design, and the effort
    vector from a raw observation table.

    Nonlinear covariates contribute both their (standardized) linear
    column in X and a whitened spline block; continuous covariates are
    standardized once, with the transform recorded for reporting.
    """
    transforms: dict = {}
    levels: dict = {}
    designs = []
    for ispec in spec.intensity:
        nl_names = [t.name for t in ispec.nonlinear]
        X, names = _linear_block(
            table, list(ispec.linear) + nl_names, spec, transforms, levels
        )
        blocks = []
        for term in ispec.nonlinear:
            xs = _standardize(table[term.name], term.name, transforms)
            k = min(term.knots, np.unique(xs).size - 1)
            if k < 2:
                raise SpecError(
                    f"covariate '{term.name}' has too few distinct values for a spline"
                )
            knots = splines.place_knots(xs, k)
            blocks.append(SplineBlock(term.name, splines.build_basis(xs, knots)))
        designs.append(IntensityDesign(X, tuple(names), tuple(blocks)))

    Xg, gnames = _linear_block(table, list(spec.logit), spec, transforms, levels)

    if "effort" not in table.columns:
        raise SpecError("data table must contain an 'effort' column")
    effort = np.asarray(table["effort"], dtype=float)
    if not np.all(np.isfinite(effort)) or np.any(effort <= 0):
        raise SpecError("effort must be positive and finite")

    return DesignBundle(
        intensity=tuple(designs),
        X_gamma=Xg,
        gamma_names=tuple(gnames),
        effort=effort,
        n=len(table),
        transforms=transforms,
        levels=levels,
        spec=spec,
    )
