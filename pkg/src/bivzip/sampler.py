"""Metropolis-within-Gibbs sampler for the semiparametric BivZIP model.

One Gibbs cycle updates, in order: the latent shared counts, the three
log-intensity vectors (elementwise random-walk M-H), the three logit
coefficient blocks (block random-walk M-H with probabilities recomputed
by softmax), the joint linear+spline coefficients for the two species
models, the common-process coefficients, and finally all variance
components from their inverse-gamma full conditionals.

The observation likelihood is the latent-marginalized BivZIP mixture
mass evaluated at effort-scaled intensities exp(lambda_tilde) * a; the
hot per-observation loop is JIT compiled.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from numba import njit
from scipy.linalg.lapack import dpotrf, dpotrs, dtrtrs
from scipy.special import logsumexp

from .errors import ChainDivergenceError, SpecError
from .model import DesignBundle, PriorConfig

LATENT_MODES = ("exact-conditional", "literal-appendix")

# ---------------------------------------------------------------------------
# JIT kernels
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _obs_components(k1, k2, log_a, t1, t2, t3, lfact):
    """Log mass of each mixture component at one observation.

    t1..t3 are the log intensities on the per-unit-effort scale, log_a
    the log effort; lfact a log-factorial table covering the counts.
    Components whose support excludes (k1, k2) get -inf.
    """
    ll1 = t1 + log_a
    ll2 = t2 + log_a
    ll3 = t3 + log_a
    l1 = math.exp(ll1)
    l2 = math.exp(ll2)
    l3 = math.exp(ll3)
    # bivariate Poisson log mass via the convolution sum
    m = k1 if k1 < k2 else k2
    best = -1e308
    acc = 0.0
    for i in range(m + 1):
        t = (
            (k1 - i) * ll1
            + (k2 - i) * ll2
            + i * ll3
            - lfact[k1 - i]
            - lfact[k2 - i]
            - lfact[i]
        )
        if t <= best:
            acc += math.exp(t - best)
        else:
            acc = acc * math.exp(best - t) + 1.0
            best = t
    c3 = best + math.log(acc) - (l1 + l2 + l3)
    c0 = -np.inf
    c1 = -np.inf
    c2 = -np.inf
    if k2 == 0:
        c1 = k1 * math.log(l1 + l3) - (l1 + l3) - lfact[k1]
        if k1 == 0:
            c0 = 0.0
    if k1 == 0:
        c2 = k2 * math.log(l2 + l3) - (l2 + l3) - lfact[k2]
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _mix4(a0, a1, a2, a3):
    """Log-sum-exp of four terms; -inf entries drop out."""
    top = a3
    if a0 > top:
        top = a0
    if a1 > top:
        top = a1
    if a2 > top:
        top = a2
    s = (
        math.exp(a0 - top)
        + math.exp(a1 - top)
        + math.exp(a2 - top)
        + math.exp(a3 - top)
    )
    return top + math.log(s)


@njit(cache=True, inline="always")
def _obs_loglik(k1, k2, log_a, t1, t2, t3, lp0, lp1, lp2, lp3, lfact):
    """Log BivZIP mixture mass for one observation."""
    c0, c1, c2, c3 = _obs_components(k1, k2, log_a, t1, t2, t3, lfact)
    return _mix4(lp0 + c0, lp1 + c1, lp2 + c2, lp3 + c3)


@njit(cache=True)
def _bivzip_loglik_kernel(y1, y2, log_a, lt1, lt2, lt3, logp, lfact):
    """Vectorized per-observation log BivZIP mass."""
    n = y1.shape[0]
    out = np.empty(n)
    for j in range(n):
        out[j] = _obs_loglik(
            int(y1[j]), int(y2[j]), log_a[j],
            lt1[j], lt2[j], lt3[j],
            logp[j, 0], logp[j, 1], logp[j, 2], logp[j, 3], lfact,
        )
    return out


@njit(cache=True)
def _component_kernel(y1, y2, log_a, lt1, lt2, lt3, lfact):
    """n x 4 matrix of per-observation component log masses."""
    n = y1.shape[0]
    lc = np.empty((n, 4))
    for j in range(n):
        c0, c1, c2, c3 = _obs_components(
            int(y1[j]), int(y2[j]), log_a[j], lt1[j], lt2[j], lt3[j], lfact,
        )
        lc[j, 0] = c0
        lc[j, 1] = c1
        lc[j, 2] = c2
        lc[j, 3] = c3
    return lc


@njit(cache=True)
def _mh_lambda_kernel(y1, y2, log_a, lt, col, noise, logu, mean, s2,
                      logp, lc, loglik, lfact):
    """Fused elementwise random-walk M-H sweep over one log-intensity column.

    Mutates lt[:, col], the component-log-mass cache lc, and the cached
    loglik in place; returns the number of accepted moves.
    """
    n = y1.shape[0]
    accepted = 0
    for j in range(n):
        cur = lt[j, col]
        cand = cur + noise[j]
        t1 = lt[j, 0]
        t2 = lt[j, 1]
        t3 = lt[j, 2]
        if col == 0:
            t1 = cand
        elif col == 1:
            t2 = cand
        else:
            t3 = cand
        c0, c1, c2, c3 = _obs_components(
            int(y1[j]), int(y2[j]), log_a[j], t1, t2, t3, lfact,
        )
        ll_cand = _mix4(
            logp[j, 0] + c0, logp[j, 1] + c1, logp[j, 2] + c2, logp[j, 3] + c3,
        )
        d_cur = cur - mean[j]
        d_cand = cand - mean[j]
        logr = (ll_cand - loglik[j]) + (d_cur * d_cur - d_cand * d_cand) / (2.0 * s2)
        if logu[j] < logr:
            lt[j, col] = cand
            loglik[j] = ll_cand
            lc[j, 0] = c0
            lc[j, 1] = c1
            lc[j, 2] = c2
            lc[j, 3] = c3
            accepted += 1
    return accepted


@njit(cache=True)
def _gamma_loglik_kernel(eta, lc, logp_out, ll_out):
    """Mixture probabilities and loglik at candidate logit coefficients.

    eta holds the n x 3 non-baseline linear predictors; the component
    log masses lc are unchanged by a logit move, so only the softmax and
    the four-term mixture combination are redone. Fills logp_out and
    ll_out, returns the summed loglik.
    """
    n = eta.shape[0]
    total = 0.0
    for j in range(n):
        e1 = eta[j, 0]
        e2 = eta[j, 1]
        e3 = eta[j, 2]
        top = 0.0
        if e1 > top:
            top = e1
        if e2 > top:
            top = e2
        if e3 > top:
            top = e3
        logd = top + math.log(
            math.exp(-top) + math.exp(e1 - top)
            + math.exp(e2 - top) + math.exp(e3 - top)
        )
        lp0 = -logd
        lp1 = e1 - logd
        lp2 = e2 - logd
        lp3 = e3 - logd
        logp_out[j, 0] = lp0
        logp_out[j, 1] = lp1
        logp_out[j, 2] = lp2
        logp_out[j, 3] = lp3
        ll = _mix4(lp0 + lc[j, 0], lp1 + lc[j, 1], lp2 + lc[j, 2], lp3 + lc[j, 3])
        ll_out[j] = ll
        total += ll
    return total


@njit(cache=True)
def _latent_exact_kernel(y1, y2, lt1, lt2, lt3, u, lfact):
    """Draw Z3 from its full conditional under the bivariate component.

    P(Z3 = i) is proportional to l1^(y1-i) l2^(y2-i) l3^i /
    ((y1-i)! (y2-i)! i!) on i = 0..min(y1, y2).
    """
    n = y1.shape[0]
    z3 = np.empty(n, dtype=np.int64)
    for j in range(n):
        k1 = int(y1[j])
        k2 = int(y2[j])
        m = k1 if k1 < k2 else k2
        if m == 0:
            z3[j] = 0
            continue
        ll1 = lt1[j]
        ll2 = lt2[j]
        ll3 = lt3[j]
        best = -1e308
        for i in range(m + 1):
            t = (
                (k1 - i) * ll1
                + (k2 - i) * ll2
                + i * ll3
                - lfact[k1 - i]
                - lfact[k2 - i]
                - lfact[i]
            )
            if t > best:
                best = t
        total = 0.0
        for i in range(m + 1):
            t = (
                (k1 - i) * ll1
                + (k2 - i) * ll2
                + i * ll3
                - lfact[k1 - i]
                - lfact[k2 - i]
                - lfact[i]
            )
            total += math.exp(t - best)
        target = u[j] * total
        run = 0.0
        pick = m
        for i in range(m + 1):
            t = (
                (k1 - i) * ll1
                + (k2 - i) * ll2
                + i * ll3
                - lfact[k1 - i]
                - lfact[k2 - i]
                - lfact[i]
            )
            run += math.exp(t - best)
            if run >= target:
                pick = i
                break
        z3[j] = pick
    return z3


def latent_conditional_pmf(y1: int, y2: int, lam1: float, lam2: float, lam3: float):
    """Normalized full conditional of Z3 on 0..min(y1, y2), for oracles."""
    m = min(y1, y2)
    i = np.arange(m + 1)
    from scipy.special import gammaln

    logw = (
        (y1 - i) * math.log(lam1)
        + (y2 - i) * math.log(lam2)
        + i * math.log(lam3)
        - gammaln(y1 - i + 1)
        - gammaln(y2 - i + 1)
        - gammaln(i + 1)
    )
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Probabilities
# ---------------------------------------------------------------------------


def compute_log_probs(gamma: np.ndarray, X_gamma: np.ndarray) -> np.ndarray:
    """n x 4 log mixture probabilities from the multinomial logit.

    gamma is the 3 x q coefficient matrix; column r of the output is
    log p_r with p_0 the softmax baseline.
    """
    eta = X_gamma @ gamma.T  # n x 3
    full = np.concatenate([np.zeros((eta.shape[0], 1)), eta], axis=1)
    top = full.max(axis=1, keepdims=True)
    logd = top + np.log(np.exp(full - top).sum(axis=1, keepdims=True))
    return full - logd


def compute_probs(gamma: np.ndarray, X_gamma: np.ndarray) -> np.ndarray:
    """n x 4 mixture probability rows (p0, p1, p2, p3)."""
    return np.exp(compute_log_probs(gamma, X_gamma))


def _log_factorial_table(y1, y2) -> np.ndarray:
    from scipy.special import gammaln

    top = int(max(np.max(y1), np.max(y2), 1))
    return gammaln(np.arange(1, top + 2, dtype=float))


def observation_loglik(bundle: DesignBundle, y1, y2, lt, gamma) -> np.ndarray:
    """Per-observation BivZIP log likelihood at given log-intensities and
    logit coefficients; used by the sampler and by DIC."""
    logp = compute_log_probs(np.asarray(gamma, dtype=float), bundle.X_gamma)
    lt = np.asarray(lt, dtype=float)
    y1 = np.asarray(y1, dtype=np.int64)
    y2 = np.asarray(y2, dtype=np.int64)
    return _bivzip_loglik_kernel(
        y1, y2, np.log(bundle.effort),
        np.ascontiguousarray(lt[:, 0]),
        np.ascontiguousarray(lt[:, 1]),
        np.ascontiguousarray(lt[:, 2]),
        logp,
        _log_factorial_table(y1, y2),
    )


# ---------------------------------------------------------------------------
# Configuration and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    total_iterations: int = 120_000
    burn_in: int = 20_000
    thin: int = 5
    adapt_window: int = 500
    adapt_cutoff: int = None
    seed: int = 0
    latent_mode: str = "exact-conditional"
    store_lambda: bool = False

    def __post_init__(self):
        if self.adapt_cutoff is None:
            object.__setattr__(self, "adapt_cutoff", self.burn_in)
        if not (0 <= self.burn_in < self.total_iterations):
            raise SpecError("require 0 <= burn_in < total_iterations")
        if self.thin < 1:
            raise SpecError("thin must be >= 1")
        if self.adapt_cutoff > self.burn_in:
            raise SpecError("adaptation must stop at or before burn-in end")
        if self.latent_mode not in LATENT_MODES:
            raise SpecError(f"latent_mode must be one of {LATENT_MODES}")

    @property
    def stored_draws(self) -> int:
        return (self.total_iterations - self.burn_in) // self.thin

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()[:16]


@dataclass
class TuningState:
    theta: np.ndarray          # proposal sd per lambda block
    theta_gamma: np.ndarray    # proposal sd per logit block
    accepts: np.ndarray = None  # window counters, 6 blocks
    proposals: np.ndarray = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        self.theta_gamma = np.asarray(self.theta_gamma, dtype=float).copy()
        if np.any(self.theta <= 0) or np.any(self.theta_gamma <= 0):
            raise SpecError("proposal standard deviations must be positive")
        if self.accepts is None:
            self.accepts = np.zeros(6)
        if self.proposals is None:
            self.proposals = np.zeros(6)


@dataclass
class ChainState:
    z3: np.ndarray                 # latent shared counts
    lt: np.ndarray                 # n x 3 log intensities
    phi: list                      # coefficient vector per intensity model
    gamma: np.ndarray              # 3 x q logit coefficients
    sigma2_eps: np.ndarray         # 3
    sigma2_u: list                 # per model: array of block variances
    log_probs: np.ndarray = None   # n x 4, derived from gamma
    lc: np.ndarray = None          # n x 4 component log masses at lt
    loglik: np.ndarray = None      # cached per-observation log likelihood


ADAPT_SCALE = 1.5
ACCEPT_LOW = 0.20
ACCEPT_HIGH = 0.40


def adapt_tuning(tuning: TuningState, rates: np.ndarray) -> None:
    """Multiplicative proposal-sd adjustment toward the 20-40% band.

    rates has six entries (three lambda blocks then three gamma
    blocks); NaN entries (no proposals in the window) are left alone.
    """
    for b in range(6):
        r = rates[b]
        if not np.isfinite(r):
            continue
        target = tuning.theta if b < 3 else tuning.theta_gamma
        idx = b if b < 3 else b - 3
        if r > ACCEPT_HIGH:
            target[idx] *= ADAPT_SCALE
        elif r < ACCEPT_LOW:
            target[idx] /= ADAPT_SCALE


@dataclass(frozen=True)
class ChainOutput:
    params: np.ndarray
    param_names: tuple
    loglik: np.ndarray             # per-draw total log likelihood
    lambda_mean: np.ndarray        # n x 3 posterior mean of log intensities
    lambda_draws: np.ndarray       # draws x n x 3, or None
    acceptance: dict               # post-adaptation rates per M-H block
    tuning: dict                   # final proposal sds
    seed: int
    config: RunConfig
    bundle_digest: str

    @property
    def n_draws(self) -> int:
        return self.params.shape[0]

    def index(self, name: str) -> int:
        return self.param_names.index(name)

    def get(self, name: str) -> np.ndarray:
        return self.params[:, self.index(name)]

    def block(self, prefix: str) -> tuple:
        """(names, draws) for every parameter whose name starts with prefix."""
        idx = [i for i, nm in enumerate(self.param_names) if nm.startswith(prefix)]
        return tuple(self.param_names[i] for i in idx), self.params[:, idx]


# ---------------------------------------------------------------------------
# The sampler
# ---------------------------------------------------------------------------


class BivZipSampler:
    """Holds the fixed data/design context and implements each update step.

    A single chain is strictly sequential; run several instances with
    independent rng streams for multiple chains.
    """

    def __init__(self, bundle: DesignBundle, y1, y2, priors: PriorConfig,
                 config: RunConfig):
        self.bundle = bundle
        self.y1 = np.asarray(y1, dtype=np.int64)
        self.y2 = np.asarray(y2, dtype=np.int64)
        if self.y1.shape != (bundle.n,) or self.y2.shape != (bundle.n,):
            raise SpecError("count vectors must match the design row count")
        if np.any(self.y1 < 0) or np.any(self.y2 < 0):
            raise SpecError("counts must be nonnegative")
        self.priors = priors
        self.config = config
        self.n = bundle.n
        self.effort = np.ascontiguousarray(bundle.effort)
        self.log_effort = np.log(self.effort)
        self.lfact = _log_factorial_table(self.y1, self.y2)

        # per-model fixed pieces
        self.C = [np.ascontiguousarray(d.stacked) for d in bundle.intensity]
        self.CtC = [c.T @ c for c in self.C]
        self.p_fixed = [d.X.shape[1] for d in bundle.intensity]
        self.block_sizes = [
            [b.size for b in d.spline_blocks] for d in bundle.intensity
        ]
        self.q = bundle.X_gamma.shape[1]
        self.param_names = self._build_names()

    # -- bookkeeping --------------------------------------------------------

    def _build_names(self):
        names = []
        for ell, d in enumerate(self.bundle.intensity, start=1):
            names += [f"B{ell}:{nm}" for nm in d.x_names]
            for b in d.spline_blocks:
                names += [f"u{ell}:{b.name}[{k + 1}]" for k in range(b.size)]
        for r in range(1, 4):
            names += [f"gamma{r}:{nm}" for nm in self.bundle.gamma_names]
        names += [f"sigma2_eps{ell}" for ell in range(1, 4)]
        for ell, d in enumerate(self.bundle.intensity, start=1):
            names += [f"sigma2_u{ell}:{b.name}" for b in d.spline_blocks]
        return tuple(names)

    def _flatten(self, state: ChainState) -> np.ndarray:
        parts = list(state.phi)
        parts.append(state.gamma.ravel())
        parts.append(state.sigma2_eps)
        for s2u in state.sigma2_u:
            if len(s2u):
                parts.append(s2u)
        return np.concatenate(parts)

    # -- initialization -----------------------------------------------------

    def initial_state(self) -> ChainState:
        rate1 = self.y1 / self.effort
        rate2 = self.y2 / self.effort
        r1 = rate1[self.y1 > 0].mean() if np.any(self.y1 > 0) else 0.5
        r2 = rate2[self.y2 > 0].mean() if np.any(self.y2 > 0) else 0.5
        lt = np.column_stack([
            np.full(self.n, math.log(r1 + 0.1)),
            np.full(self.n, math.log(r2 + 0.1)),
            np.full(self.n, math.log(0.1 + 0.1 * (r1 + r2) / 2.0)),
        ])
        state = ChainState(
            z3=np.minimum(self.y1, self.y2) // 2,
            lt=lt,
            phi=[np.zeros(c.shape[1]) for c in self.C],
            gamma=np.zeros((3, self.q)),
            sigma2_eps=np.ones(3),
            sigma2_u=[np.ones(len(bs)) for bs in self.block_sizes],
        )
        self.refresh_probs(state)
        self.refresh_loglik(state)
        return state

    def refresh_probs(self, state: ChainState) -> None:
        state.log_probs = compute_log_probs(state.gamma, self.bundle.X_gamma)

    def refresh_loglik(self, state: ChainState) -> None:
        state.lc = _component_kernel(
            self.y1, self.y2, self.log_effort,
            np.ascontiguousarray(state.lt[:, 0]),
            np.ascontiguousarray(state.lt[:, 1]),
            np.ascontiguousarray(state.lt[:, 2]),
            self.lfact,
        )
        state.loglik = logsumexp(state.log_probs + state.lc, axis=1)

    # -- update steps -------------------------------------------------------

    def update_latent(self, state: ChainState, rng: np.random.Generator,
                      mode: str = None):
        """Redraw Z3 (and implicitly Z1 = Y1 - Z3, Z2 = Y2 - Z3)."""
        mode = mode or self.config.latent_mode
        m = np.minimum(self.y1, self.y2)
        if mode == "literal-appendix":
            state.z3 = rng.integers(0, m + 1)
        else:
            u = rng.uniform(size=self.n)
            la = self.log_effort
            state.z3 = _latent_exact_kernel(
                self.y1, self.y2,
                np.ascontiguousarray(state.lt[:, 0] + la),
                np.ascontiguousarray(state.lt[:, 1] + la),
                np.ascontiguousarray(state.lt[:, 2] + la),
                u,
                self.lfact,
            )
        return state.z3

    def update_lambda_tilde(self, state: ChainState, ell: int,
                            tuning: TuningState, rng: np.random.Generator):
        """Elementwise Gaussian random-walk M-H on one log-intensity vector.

        The acceptance ratio per observation multiplies the BivZIP
        likelihood ratio by the Gaussian process-model ratio around the
        current coefficient fit.
        """
        i = ell - 1
        noise = tuning.theta[i] * rng.standard_normal(self.n)
        logu = np.log(rng.uniform(size=self.n))
        mean = self.C[i] @ state.phi[i]
        accepted = _mh_lambda_kernel(
            self.y1, self.y2, self.log_effort, state.lt, i, noise, logu,
            mean, state.sigma2_eps[i], state.log_probs, state.lc,
            state.loglik, self.lfact,
        )
        tuning.accepts[i] += accepted
        tuning.proposals[i] += self.n
        return accepted

    def update_gamma(self, state: ChainState, r: int, tuning: TuningState,
                     rng: np.random.Generator):
        """Block random-walk M-H on one logit coefficient vector."""
        i = r - 1
        cand = state.gamma.copy()
        cand[i] = state.gamma[i] + tuning.theta_gamma[i] * rng.standard_normal(self.q)
        eta = self.bundle.X_gamma @ cand.T
        logp_cand = np.empty((self.n, 4))
        ll_cand = np.empty(self.n)
        total_cand = _gamma_loglik_kernel(eta, state.lc, logp_cand, ll_cand)
        v = self.priors.coefficient_variance
        log_prior = (state.gamma[i] @ state.gamma[i] - cand[i] @ cand[i]) / (2.0 * v)
        logr = (total_cand - state.loglik.sum()) + log_prior
        accept = math.log(rng.uniform()) < logr
        if accept:
            state.gamma = cand
            state.log_probs = logp_cand
            state.loglik = ll_cand
        tuning.accepts[3 + i] += accept
        tuning.proposals[3 + i] += 1
        return accept

    def _prior_precision(self, state: ChainState, i: int) -> np.ndarray:
        pp = np.full(self.C[i].shape[1], 1.0 / self.priors.coefficient_variance)
        off = self.p_fixed[i]
        for b, k in enumerate(self.block_sizes[i]):
            pp[off:off + k] = 1.0 / state.sigma2_u[i][b]
            off += k
        return pp

    def update_coefficients(self, state: ChainState, ell: int,
                            rng: np.random.Generator):
        """Exact Gaussian full-conditional draw of the stacked coefficients.

        Posterior precision C'C/s2e + prior precision; drawn through a
        Cholesky factorization of the precision.
        """
        i = ell - 1
        s2 = state.sigma2_eps[i]
        prec = self.CtC[i] / s2
        p = prec.shape[0]
        prec.ravel()[:: p + 1] += self._prior_precision(state, i)
        b = self.C[i].T @ state.lt[:, i] / s2
        L, info = dpotrf(prec, lower=1, clean=0, overwrite_a=1)
        if info != 0:
            raise ChainDivergenceError(-1, f"coefficients{ell}",
                                       "precision not positive definite")
        mean, info = dpotrs(L, b, lower=1)
        noise, info = dtrtrs(L, rng.standard_normal(p), lower=1, trans=1)
        state.phi[i] = mean + noise
        return state.phi[i]

    def update_common_coefficients(self, state: ChainState,
                                   rng: np.random.Generator):
        """Conjugate draw for the common-process coefficients (ell = 3)."""
        return self.update_coefficients(state, 3, rng)

    def update_variances(self, state: ChainState, rng: np.random.Generator):
        """Inverse-gamma draws for the error and spline-block variances.

        Standard conjugate updates: shape gains n/2 (or K/2), the rate
        gains half the squared residual (or coefficient) norm.
        """
        c0e, d0e = self.priors.error_ig
        c0u, d0u = self.priors.spline_ig
        for i in range(3):
            resid = state.lt[:, i] - self.C[i] @ state.phi[i]
            shape = c0e + 0.5 * self.n
            rate = d0e + 0.5 * (resid @ resid)
            state.sigma2_eps[i] = rate / rng.gamma(shape)
            off = self.p_fixed[i]
            for b, k in enumerate(self.block_sizes[i]):
                u = state.phi[i][off:off + k]
                shape_u = c0u + 0.5 * k
                rate_u = d0u + 0.5 * (u @ u)
                state.sigma2_u[i][b] = rate_u / rng.gamma(shape_u)
                off += k
        return state.sigma2_eps, state.sigma2_u

    def gibbs_cycle(self, state: ChainState, tuning: TuningState,
                    rng: np.random.Generator):
        """One full update cycle in the fixed order."""
        self.update_latent(state, rng)
        for ell in (1, 2, 3):
            self.update_lambda_tilde(state, ell, tuning, rng)
        for r in (1, 2, 3):
            self.update_gamma(state, r, tuning, rng)
        self.update_coefficients(state, 1, rng)
        self.update_coefficients(state, 2, rng)
        self.update_common_coefficients(state, rng)
        self.update_variances(state, rng)

    # -- driver -------------------------------------------------------------

    def _check_finite(self, state: ChainState, iteration: int):
        if not np.all(np.isfinite(state.lt)):
            raise ChainDivergenceError(iteration, "lambda_tilde")
        if not np.all(np.isfinite(state.gamma)):
            raise ChainDivergenceError(iteration, "gamma")
        if not np.all(state.sigma2_eps > 0) or not np.all(
            np.isfinite(state.sigma2_eps)
        ):
            raise ChainDivergenceError(iteration, "sigma2_eps")
        for i in range(3):
            if not np.all(np.isfinite(state.phi[i])):
                raise ChainDivergenceError(iteration, f"coefficients{i + 1}")

    def run(self, rng: np.random.Generator = None) -> ChainOutput:
        cfg = self.config
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        state = self.initial_state()
        tuning = TuningState(
            theta=np.full(3, 0.5), theta_gamma=np.full(3, 0.2)
        )
        n_store = cfg.stored_draws
        n_par = len(self.param_names)
        params = np.empty((n_store, n_par))
        loglik = np.empty(n_store)
        lam_sum = np.zeros((self.n, 3))
        lam_draws = (
            np.empty((n_store, self.n, 3)) if cfg.store_lambda else None
        )
        post_acc = np.zeros(6)
        post_prop = np.zeros(6)
        stored = 0
        for it in range(1, cfg.total_iterations + 1):
            before_acc = tuning.accepts.copy()
            before_prop = tuning.proposals.copy()
            self.gibbs_cycle(state, tuning, rng)
            if it > cfg.adapt_cutoff:
                post_acc += tuning.accepts - before_acc
                post_prop += tuning.proposals - before_prop
            elif it % cfg.adapt_window == 0:
                with np.errstate(invalid="ignore"):
                    rates = tuning.accepts / np.where(
                        tuning.proposals > 0, tuning.proposals, np.nan
                    )
                adapt_tuning(tuning, rates)
                tuning.accepts[:] = 0.0
                tuning.proposals[:] = 0.0
            if it % 25 == 0 or it == cfg.total_iterations:
                self._check_finite(state, it)
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                params[stored] = self._flatten(state)
                loglik[stored] = state.loglik.sum()
                lam_sum += state.lt
                if lam_draws is not None:
                    lam_draws[stored] = state.lt
                stored += 1

        block_names = ("lambda1", "lambda2", "lambda3", "gamma1", "gamma2", "gamma3")
        with np.errstate(invalid="ignore"):
            rates = post_acc / np.where(post_prop > 0, post_prop, np.nan)
        return ChainOutput(
            params=params,
            param_names=self.param_names,
            loglik=loglik,
            lambda_mean=lam_sum / max(stored, 1),
            lambda_draws=lam_draws,
            acceptance={nm: float(rates[i]) for i, nm in enumerate(block_names)},
            tuning={
                "theta": tuning.theta.tolist(),
                "theta_gamma": tuning.theta_gamma.tolist(),
            },
            seed=cfg.seed,
            config=cfg,
            bundle_digest=self.bundle.digest(),
        )


def run_chain(config: RunConfig, bundle: DesignBundle, priors: PriorConfig,
              y1, y2, rng: np.random.Generator = None) -> ChainOutput:
    """Fit one chain; deterministic given the config seed (or rng)."""
    return BivZipSampler(bundle, y1, y2, priors, config).run(rng)
