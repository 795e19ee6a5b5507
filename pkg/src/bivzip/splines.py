"""Thin-plate penalized-spline bases and their mixed-model reparameterization.

A nonlinear effect f(x) = beta*x + sum_k b_k |x - kappa_k|^3 is fitted
with the quadratic penalty b' Omega b, Omega[k,k'] = |kappa_k -
kappa_k'|^3.  The sampler works in the whitened parameterization
u = Omega^{1/2} b, where the design becomes Z = Z_K Omega^{-1/2} and the
prior on u is iid normal.

Omega for the |.|^3 kernel is symmetric but indefinite (it is only
conditionally positive definite), so the square root uses absolute
eigenvalues, with anything below a relative floor clamped to the floor.
The penalized-criterion oracle uses the same positive-definite surrogate
penalty, keeping the penalized <-> mixed-model equivalence exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BasisDegeneracyError, SingularSystemError

DEFAULT_KNOTS = 20
EIGEN_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class KnotSet:
    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or k.size < 2:
            raise BasisDegeneracyError("need at least 2 knots")
        if not np.all(np.isfinite(k)):
            raise BasisDegeneracyError("knots must be finite")
        if not np.all(np.diff(k) > 0):
            raise BasisDegeneracyError("knots must be strictly increasing")
        object.__setattr__(self, "knots", k)

    @property
    def count(self) -> int:
        return self.knots.size


@dataclass(frozen=True)
class SplineBasis:
    knots: KnotSet
    raw_design: np.ndarray      # n x K, |x_j - kappa_k|^3
    penalty: np.ndarray         # K x K, |kappa_k - kappa_k'|^3 (raw, indefinite)
    penalty_psd: np.ndarray     # floored positive-definite surrogate
    omega_inv_sqrt: np.ndarray  # K x K
    reparam_design: np.ndarray  # n x K, Z = Z_K Omega^{-1/2}
    eigen_floor: float


def place_knots(values, count: int = DEFAULT_KNOTS) -> KnotSet:
    """Equally spaced knots on [min(values), max(values)], endpoints included."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise BasisDegeneracyError("empty covariate vector")
    lo, hi = float(np.min(v)), float(np.max(v))
    if lo == hi:
        raise BasisDegeneracyError(
            "covariate is constant; model it linearly instead of with a spline"
        )
    if count < 2:
        raise BasisDegeneracyError("knot count must be >= 2")
    return KnotSet(np.linspace(lo, hi, count))


def _inv_sqrt(penalty: np.ndarray, floor_rel: float):
    w, v = np.linalg.eigh(penalty)
    wa = np.abs(w)
    floor = floor_rel * wa.max()
    wa = np.maximum(wa, floor)
    psd = (v * wa) @ v.T
    inv_sqrt = (v / np.sqrt(wa)) @ v.T
    return psd, inv_sqrt, floor


def build_basis(values, knots: KnotSet, eigen_floor_rel: float = EIGEN_FLOOR_REL) -> SplineBasis:
    """Raw |.|^3 design, penalty matrix, and whitened design for one covariate."""
    x = np.asarray(values, dtype=float)
    k = knots.knots
    raw = np.abs(x[:, None] - k[None, :]) ** 3
    penalty = np.abs(k[:, None] - k[None, :]) ** 3
    psd, inv_sqrt, floor = _inv_sqrt(penalty, eigen_floor_rel)
    return SplineBasis(
        knots=knots,
        raw_design=raw,
        penalty=penalty,
        penalty_psd=psd,
        omega_inv_sqrt=inv_sqrt,
        reparam_design=raw @ inv_sqrt,
        eigen_floor=floor,
    )


def reparam_rows(basis: SplineBasis, x) -> np.ndarray:
    """Whitened design rows for new covariate values (curve evaluation)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    raw = np.abs(x[:, None] - basis.knots.knots[None, :]) ** 3
    return raw @ basis.omega_inv_sqrt


def penalized_fit_oracle(design_x, basis: SplineBasis, response, delta: float):
    """Exact minimizer of the penalized least-squares criterion.

    Minimizes ||y - X beta - Z_K b||^2 + (1/delta) b' Omega b via its
    normal equations, with Omega the positive-definite surrogate
    penalty.  Used as the reference against the mixed-model fit with
    sigma_u^2 = delta * sigma_eps^2.
    """
    if not (delta > 0):
        raise ValueError("delta must be positive")
    X = np.asarray(design_x, dtype=float)
    Zk = basis.raw_design
    y = np.asarray(response, dtype=float)
    p, K = X.shape[1], Zk.shape[1]
    C = np.hstack([X, Zk])
    A = C.T @ C
    A[p:, p:] += basis.penalty_psd / delta
    rhs = C.T @ y
    try:
        theta = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError(f"penalized normal equations ill conditioned ({cond:.2e})")
    return theta[:p], theta[p:]


def mixed_model_fit(design_x, basis: SplineBasis, response, sigma2_u: float, sigma2_eps: float):
    """Generalized-ridge fit in the whitened parameterization.

    Solves the mixed-model normal equations with identity penalty
    sigma2_eps/sigma2_u on u; returns (beta_hat, u_hat, fitted).
    """
    X = np.asarray(design_x, dtype=float)
    Z = basis.reparam_design
    y = np.asarray(response, dtype=float)
    p, K = X.shape[1], Z.shape[1]
    C = np.hstack([X, Z])
    A = C.T @ C
    A[p:, p:] += (sigma2_eps / sigma2_u) * np.eye(K)
    try:
        theta = np.linalg.solve(A, C.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return theta[:p], theta[p:], C @ theta
