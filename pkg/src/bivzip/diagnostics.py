"""Posterior summaries, DIC, spline-curve reconstruction, and convergence
diagnostics computed from chain output."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiagnosticsError
from .model import DesignBundle
from .sampler import ChainOutput, observation_loglik
from .splines import reparam_rows


@dataclass(frozen=True)
class PosteriorSummary:
    name: str
    mean: float
    lower: float
    upper: float
    significant: bool


@dataclass(frozen=True)
class DicReport:
    dbar: float
    dhat: float
    p_d: float
    dic: float


def summarize(chain: ChainOutput, level: float = 0.95):
    """Posterior mean and equal-tailed credible interval per parameter.

    Quantiles use linear interpolation between order statistics; a
    parameter is flagged significant when its interval excludes zero.
    """
    if chain.n_draws == 0:
        raise DiagnosticsError("empty chain")
    alpha = (1.0 - level) / 2.0
    lo = np.quantile(chain.params, alpha, axis=0)
    hi = np.quantile(chain.params, 1.0 - alpha, axis=0)
    means = chain.params.mean(axis=0)
    return [
        PosteriorSummary(
            name=nm,
            mean=float(means[i]),
            lower=float(lo[i]),
            upper=float(hi[i]),
            significant=bool(lo[i] > 0.0 or hi[i] < 0.0),
        )
        for i, nm in enumerate(chain.param_names)
    ]


def compute_dic(chain: ChainOutput, bundle: DesignBundle, y1, y2) -> DicReport:
    """Deviance information criterion with the plug-in at the posterior
    means of the log intensities and logit coefficients.

    The deviance is -2 times the latent-marginalized BivZIP log
    likelihood summed over observations.
    """
    if chain.n_draws == 0:
        raise DiagnosticsError("empty chain")
    dbar = float(np.mean(-2.0 * chain.loglik))
    gam = np.vstack([
        chain.params[:, [chain.index(f"gamma{r}:{nm}") for nm in bundle.gamma_names]]
        .mean(axis=0)
        for r in (1, 2, 3)
    ])
    ll_hat = observation_loglik(bundle, y1, y2, chain.lambda_mean, gam)
    dhat = float(-2.0 * ll_hat.sum())
    p_d = dbar - dhat
    return DicReport(dbar=dbar, dhat=dhat, p_d=p_d, dic=dbar + p_d)


def spline_curve(chain: ChainOutput, bundle: DesignBundle, ell: int,
                 covariate: str, grid):
    """Posterior mean curve and pointwise 95% band for a nonlinear effect.

    grid is on the original covariate scale.  Per draw the curve is
    beta * x_std plus the whitened-basis contribution, centered to mean
    zero over the grid; intercept placement is not identifiable so only
    the centered shape is reported.

    Returns (grid, mean, lower, upper).
    """
    design = bundle.intensity[ell - 1]
    block = next((b for b in design.spline_blocks if b.name == covariate), None)
    if block is None:
        raise DiagnosticsError(
            f"covariate '{covariate}' is not nonlinear in intensity model {ell}"
        )
    m, s = bundle.transforms[covariate]
    grid = np.asarray(grid, dtype=float)
    x_std = (grid - m) / s
    zg = reparam_rows(block.basis, x_std)
    beta = chain.get(f"B{ell}:{covariate}")
    unames = [f"u{ell}:{covariate}[{k + 1}]" for k in range(block.size)]
    u = chain.params[:, [chain.index(nm) for nm in unames]]
    curves = np.outer(beta, x_std) + u @ zg.T  # draws x grid
    curves -= curves.mean(axis=1, keepdims=True)
    mean = curves.mean(axis=0)
    lower = np.quantile(curves, 0.025, axis=0)
    upper = np.quantile(curves, 0.975, axis=0)
    return grid, mean, lower, upper


def effective_sample_size(x: np.ndarray):
    """ESS from the initial positive sequence of autocovariances.

    Returns NaN for a constant trace (undefined rather than infinite).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float("nan")
    v = np.var(x)
    if v == 0:
        return float("nan")
    xc = x - x.mean()
    # FFT autocovariance
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    rho = acov / acov[0]
    # sum pairs while positive (Geyer initial positive sequence)
    ssum = 0.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        ssum += pair
        t += 2
    tau = 1.0 + 2.0 * ssum
    return float(n / tau)


def geweke_z(x: np.ndarray, first: float = 0.1, last: float = 0.5):
    """Mean-comparison z-score between the first and last chain segments."""
    x = np.asarray(x, dtype=float)
    n = x.size
    a = x[: max(int(first * n), 2)]
    b = x[-max(int(last * n), 2):]
    sa = np.var(a) / a.size
    sb = np.var(b) / b.size
    denom = math.sqrt(sa + sb)
    if denom == 0:
        return float("nan")
    return float((a.mean() - b.mean()) / denom)


def convergence_report(chain: ChainOutput) -> dict:
    """Acceptance rates plus per-parameter ESS and Geweke z-scores."""
    if chain.n_draws == 0:
        raise DiagnosticsError("empty chain")
    ess = {}
    geweke = {}
    for i, nm in enumerate(chain.param_names):
        col = chain.params[:, i]
        ess[nm] = effective_sample_size(col)
        geweke[nm] = geweke_z(col)
    return {
        "acceptance": dict(chain.acceptance),
        "ess": ess,
        "geweke_z": geweke,
        "n_draws": chain.n_draws,
    }
