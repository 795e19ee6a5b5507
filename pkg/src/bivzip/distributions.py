"""Bivariate Poisson and bivariate zero-inflated Poisson (BivZIP) distributions.

The bivariate Poisson is built by trivariate reduction: Y1 = Z1 + Z3,
Y2 = Z2 + Z3 with Z1, Z2, Z3 independent Poisson(lambda1/2/3).  The
shared component Z3 induces cov(Y1, Y2) = lambda3.  The BivZIP is a
four-component mixture: a point mass at (0,0), two semi-degenerate
univariate Poisson components, and the full bivariate Poisson.

All pmf computations are done in log space.  Log-factorials come from a
lazily extended log-gamma table so repeated evaluations on small counts
avoid lgamma calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import MixtureDomainError, ParameterDomainError

_NEG_INF = float("-inf")

# lazily grown table of log(k!) for k = 0..len-1
_LOG_FACT = gammaln(np.arange(1, 64, dtype=float))


def _log_factorial(k: int) -> float:
    global _LOG_FACT
    if k >= _LOG_FACT.size:
        _LOG_FACT = gammaln(np.arange(1, 2 * k + 2, dtype=float))
    return _LOG_FACT[k]


@dataclass(frozen=True)
class BivPoisParams:
    """Intensity triple of the trivariate-reduction bivariate Poisson.

    lambda3 = 0 is the independence boundary and is accepted; lambda1
    and lambda2 must be strictly positive.
    """

    lambda1: float
    lambda2: float
    lambda3: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterDomainError(f"{name} must be finite, got {v}")
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ParameterDomainError(
                f"lambda1 and lambda2 must be > 0, got "
                f"({self.lambda1}, {self.lambda2})"
            )
        if self.lambda3 < 0:
            raise ParameterDomainError(f"lambda3 must be >= 0, got {self.lambda3}")

    def scaled(self, effort: float) -> "BivPoisParams":
        """Intensities scaled by a multiplicative effort offset."""
        if not (effort > 0) or not math.isfinite(effort):
            raise ParameterDomainError(f"effort must be positive, got {effort}")
        return BivPoisParams(
            self.lambda1 * effort, self.lambda2 * effort, self.lambda3 * effort
        )


@dataclass(frozen=True)
class MixtureProbs:
    """Mixture weights of the BivZIP: point mass, the two semi-degenerate
    components, and the full bivariate Poisson, in that order."""

    p0: float
    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        ps = (self.p0, self.p1, self.p2, self.p3)
        for i, p in enumerate(ps):
            if not (0.0 <= p <= 1.0):
                raise MixtureDomainError(f"p{i} outside [0,1]: {p}")
        if abs(sum(ps) - 1.0) > 1e-12:
            raise MixtureDomainError(f"probabilities sum to {sum(ps)!r}, not 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3])


@dataclass(frozen=True)
class CountPair:
    """One observed count pair with its effort offset (area covered)."""

    y1: int
    y2: int
    effort: float = 1.0

    def __post_init__(self):
        if self.y1 < 0 or self.y2 < 0:
            raise ParameterDomainError(
                f"counts must be nonnegative, got ({self.y1}, {self.y2})"
            )
        if int(self.y1) != self.y1 or int(self.y2) != self.y2:
            raise ParameterDomainError("counts must be integral")
        if not (self.effort > 0) or not math.isfinite(self.effort):
            raise ParameterDomainError(f"effort must be positive, got {self.effort}")


def _poisson_logpmf(y: int, lam: float) -> float:
    return y * math.log(lam) - lam - _log_factorial(y)


def bivpois_logpmf(y1: int, y2: int, params: BivPoisParams) -> float:
    """Log joint pmf of the bivariate Poisson at (y1, y2).

    Evaluates the convolution sum over the shared component via
    log-sum-exp.  With lambda3 = 0 this reduces exactly to the sum of
    two independent Poisson log-pmfs.
    """
    if y1 < 0 or y2 < 0:
        raise ParameterDomainError("counts must be nonnegative")
    l1, l2, l3 = params.lambda1, params.lambda2, params.lambda3
    if l3 == 0.0:
        return _poisson_logpmf(y1, l1) + _poisson_logpmf(y2, l2)
    m = min(y1, y2)
    ll1, ll2, ll3 = math.log(l1), math.log(l2), math.log(l3)
    terms = np.empty(m + 1)
    for i in range(m + 1):
        terms[i] = (
            (y1 - i) * ll1
            + (y2 - i) * ll2
            + i * ll3
            - _log_factorial(y1 - i)
            - _log_factorial(y2 - i)
            - _log_factorial(i)
        )
    return float(logsumexp(terms)) - (l1 + l2 + l3)


def bivpois_sample(params: BivPoisParams, rng: np.random.Generator, size=None):
    """Draw (y1, y2) by trivariate reduction; vectorized when size given."""
    z1 = rng.poisson(params.lambda1, size=size)
    z2 = rng.poisson(params.lambda2, size=size)
    z3 = rng.poisson(params.lambda3, size=size)
    return z1 + z3, z2 + z3


def bivpois_moments(params: BivPoisParams):
    """(mean1, mean2, covariance, correlation) of the bivariate Poisson."""
    m1 = params.lambda1 + params.lambda3
    m2 = params.lambda2 + params.lambda3
    cov = params.lambda3
    corr = cov / math.sqrt(m1 * m2)
    return m1, m2, cov, corr


def bivzip_logpmf(pair: CountPair, params: BivPoisParams, probs: MixtureProbs) -> float:
    """Log mass of the BivZIP mixture at the observed pair.

    Effort enters by scaling all three intensities; the mixture weights
    are unaffected.  Only components whose support contains (y1, y2)
    contribute to the log-sum-exp.
    """
    sp = params.scaled(pair.effort)
    y1, y2 = pair.y1, pair.y2
    comps = []
    if y1 == 0 and y2 == 0 and probs.p0 > 0:
        comps.append(math.log(probs.p0))
    if y2 == 0 and probs.p1 > 0:
        comps.append(math.log(probs.p1) + _poisson_logpmf(y1, sp.lambda1 + sp.lambda3))
    if y1 == 0 and probs.p2 > 0:
        comps.append(math.log(probs.p2) + _poisson_logpmf(y2, sp.lambda2 + sp.lambda3))
    if probs.p3 > 0:
        comps.append(math.log(probs.p3) + bivpois_logpmf(y1, y2, sp))
    if not comps:
        return _NEG_INF
    return float(logsumexp(comps))


def bivzip_sample(
    params: BivPoisParams,
    probs: MixtureProbs,
    effort: float,
    rng: np.random.Generator,
):
    """Draw (y1, y2, component_label) from the BivZIP mixture.

    The component label is returned for test instrumentation.
    """
    sp = params.scaled(effort)
    label = int(rng.choice(4, p=probs.as_array()))
    if label == 0:
        return 0, 0, 0
    if label == 1:
        return int(rng.poisson(sp.lambda1 + sp.lambda3)), 0, 1
    if label == 2:
        return 0, int(rng.poisson(sp.lambda2 + sp.lambda3)), 2
    y1, y2 = bivpois_sample(sp, rng)
    return int(y1), int(y2), 3


def poisson_tail_truncation(total_intensity: float, tol: float = 1e-12) -> int:
    """Smallest truncation point whose Chernoff tail bound is below tol.

    P(Y > t) <= exp(-lam) (e lam / t)^t for t > lam (Poisson Chernoff
    bound); used to make truncated normalization sums provably tight.
    """
    lam = total_intensity
    t = max(int(math.ceil(lam)) + 1, 2)
    while True:
        log_bound = -lam + t * (1.0 + math.log(lam) - math.log(t))
        if log_bound < math.log(tol):
            return t
        t += 1
