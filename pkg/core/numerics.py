#!/usr/bin/env python3
"""
Numerical Kernels
=================
Complex linear-algebra helpers shared by every design algorithm:
- SVD / Hermitian eigendecomposition with descending ordering
- Inverse square root of a PSD Gram matrix
- Weighted water-filling power allocation
- Seeded circularly symmetric complex Gaussian draws

All functions are pure; random state is always passed in explicitly.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from scipy.optimize import brentq

from .errors import DimensionError, NonHermitianError

logger = logging.getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
RealVector = NDArray[np.float64]

HERMITIAN_TOL = 1e-10
DEFAULT_EIGEN_FLOOR = 1e-12


class SvdResult(NamedTuple):
    left: ComplexMatrix
    singular_values: RealVector
    right: ComplexMatrix  # columns are right singular vectors, A = U diag(s) V^H


class EigResult(NamedTuple):
    eigenvalues: RealVector
    eigenvectors: ComplexMatrix


@dataclass(frozen=True)
class WaterfillResult:
    """Outcome of a weighted water-filling allocation"""
    powers: RealVector
    water_level: float  # 1/lambda
    active_set: tuple

    @property
    def total(self) -> float:
        return float(np.sum(self.powers))


def as_complex_matrix(a, name: str = "matrix") -> ComplexMatrix:
    """Coerce to a 2-D complex array and reject NaN/Inf entries"""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return arr


def hermitian_part(a: ComplexMatrix) -> ComplexMatrix:
    return 0.5 * (a + a.conj().T)


def svd(a) -> SvdResult:
    """Thin SVD with singular values sorted in descending order"""
    arr = as_complex_matrix(a)
    if arr.size == 0:
        raise DimensionError("svd requires a nonempty matrix")
    u, s, vh = scipy.linalg.svd(arr, full_matrices=False, lapack_driver="gesdd")
    return SvdResult(u, s, vh.conj().T)


def herm_eig(a, tol: float = HERMITIAN_TOL) -> EigResult:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending"""
    arr = as_complex_matrix(a)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"herm_eig requires a square matrix, got {arr.shape}")
    scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 1.0)
    if np.max(np.abs(arr - arr.conj().T), initial=0.0) > tol * scale:
        raise NonHermitianError("matrix is not Hermitian within tolerance")

    w, v = scipy.linalg.eigh(hermitian_part(arr))
    # eigh returns ascending order; stable sort keeps ties in input order
    order = np.argsort(-w, kind="stable")
    return EigResult(w[order], v[:, order])


def inv_sqrt_psd(q, eigen_floor: Optional[float] = None) -> ComplexMatrix:
    """Q^{-1/2} for a Hermitian PSD matrix, clamping small eigenvalues"""
    w, v = herm_eig(q)
    largest = float(w[0]) if w.size else 0.0
    floor = eigen_floor if eigen_floor is not None else DEFAULT_EIGEN_FLOOR * max(largest, 0.0)
    floor = max(floor, np.finfo(float).tiny)
    clamped = np.maximum(w, floor)
    return (v * (1.0 / np.sqrt(clamped))) @ v.conj().T


def log2det_eye_plus(x: ComplexMatrix) -> float:
    """log2 |I + X| for X similar to a PSD matrix"""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.size == 0:
        return 0.0
    _, logabs = np.linalg.slogdet(np.eye(arr.shape[0]) + arr)
    return float(logabs / np.log(2.0))


def waterfill(costs: Sequence[float], weights: Sequence[float],
              noise: float, budget: float) -> WaterfillResult:
    """Weighted water-filling.

    Powers follow p_k = max(beta_k * mu - q_k * noise, 0) / q_k with the water
    level mu = 1/lambda chosen so that sum_k q_k p_k equals the budget.
    """
    q = np.asarray(costs, dtype=float)
    beta = np.asarray(weights, dtype=float)
    if q.shape != beta.shape or q.ndim != 1 or q.size == 0:
        raise DimensionError("costs and weights must be nonempty vectors of equal length")
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise DimensionError("water-filling costs must be finite and positive")
    if np.any(beta <= 0):
        raise DimensionError("water-filling weights must be positive")
    if budget < 0:
        raise DimensionError("power budget must be non-negative")

    thresholds = q * noise / beta  # mu below which index k stays dry
    if budget == 0:
        return WaterfillResult(np.zeros_like(q), float(np.min(thresholds)), ())

    def spent(mu: float) -> float:
        return float(np.sum(np.maximum(beta * mu - q * noise, 0.0))) - budget

    lo = float(np.min(thresholds))
    hi = (budget + noise * float(np.sum(q))) / float(np.sum(beta))
    while spent(hi) < 0:
        hi *= 2.0
    mu = brentq(spent, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    # Solve the linear piece exactly once the active set is known
    active = beta * mu - q * noise > 0
    if not active.any():
        active = thresholds <= lo  # budget below resolution, the lowest threshold fills first
    mu = (budget + noise * float(np.sum(q[active]))) / float(np.sum(beta[active]))
    powers = np.where(active, (beta * mu - q * noise) / q, 0.0)
    powers = np.maximum(powers, 0.0)

    logger.debug(f"Water level {mu:.6g} with {int(active.sum())}/{q.size} active")
    return WaterfillResult(powers, float(mu), tuple(int(k) for k in np.flatnonzero(active)))


def waterfill_gains(gains: Sequence[float], noise: float, budget: float) -> RealVector:
    """Classic water-filling over parallel channels with power gains g_i.

    Returns p_i = max(mu - noise/g_i, 0) with sum p_i = budget; zero-gain
    channels receive no power.
    """
    g = np.asarray(gains, dtype=float)
    powers = np.zeros_like(g)
    usable = g > np.finfo(float).eps * max(float(np.max(g, initial=0.0)), 1.0)
    if budget <= 0 or not np.any(usable):
        return powers
    # p_i = q_i * p'_i with costs q_i = 1/g_i and unit weights
    costs = 1.0 / g[usable]
    result = waterfill(costs, np.ones_like(costs), noise, budget)
    powers[usable] = costs * result.powers
    return powers


def complex_gaussian(rng: np.random.Generator, m: int, n: int) -> ComplexMatrix:
    """i.i.d. CN(0, 1) entries"""
    real = rng.standard_normal((m, n))
    imag = rng.standard_normal((m, n))
    return (real + 1j * imag) / np.sqrt(2.0)
