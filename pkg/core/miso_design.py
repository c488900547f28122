#!/usr/bin/env python3
"""
Multi-User MISO Hybrid Design
=============================
Downlink hybrid precoding for K single-antenna users with a zero-forcing
digital stage. The RF stage minimizes the approximate transmit power

    f_hat = N * Tr((H~ V_RF V_RF^H H~^H)^{-1}),   H~ = P^{-1/2} H

one phase shifter at a time using a rank-one (Sherman-Morrison) split of
the trace and a closed-form pair of stationary phases.

Channels are passed as K x N matrices whose k-th row is h_k^H.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .channel import ArrayGeometry, PathSet
from .errors import DesignError, DimensionError, SingularMatrixError
from .hybrid_core import (
    DesignReport, FullyDigitalResult, HybridPrecoder, PhaseSet, SystemConfig,
    quantize_beamformer, rate_miso,
)
from .numerics import ComplexMatrix, RealVector, WaterfillResult, as_complex_matrix, waterfill

logger = logging.getLogger(__name__)

GRAM_COND_LIMIT = 1e12
ASIN_SLACK = 1e-9
DRY_USER_FLOOR = 1e-2  # relative to the strongest user

UpdateHook = Callable[[int, int, float], None]


@dataclass(frozen=True)
class MisoOptions:
    """Stopping rules of the alternating design"""
    max_outer_iters: int = 30
    outer_tol: float = 1e-5
    max_inner_sweeps: int = 50
    inner_tol: float = 1e-6

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.max_inner_sweeps < 1:
            raise DesignError("iteration caps must be at least 1")
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise DesignError("tolerances must be positive")


@dataclass(frozen=True)
class FhatDecomposition:
    """f_hat as a function of a single RF entry V(i, j)"""
    n_antennas: int
    trace_aj_inv: float
    zeta_b: float
    zeta_d: float
    eta_b: complex
    eta_d: complex

    def value(self, entry: complex) -> float:
        num = self.zeta_b + 2.0 * float(np.real(np.conj(entry) * self.eta_b))
        den = 1.0 + self.zeta_d + 2.0 * float(np.real(np.conj(entry) * self.eta_d))
        return self.n_antennas * (self.trace_aj_inv - num / den)


@dataclass(frozen=True)
class ThetaCandidates:
    """The two stationary phases of f_hat(theta) for V(i, j) = exp(-j theta)"""
    theta1: float
    theta2: float
    c: complex
    z: float
    phi: float


class MisoDescentResult(NamedTuple):
    v_rf: ComplexMatrix
    fhat_trace: List[float]


def _gram_inverse(gram: ComplexMatrix, what: str) -> ComplexMatrix:
    if gram.size and np.linalg.cond(gram) > GRAM_COND_LIMIT:
        raise SingularMatrixError(f"{what} is singular")
    return scipy.linalg.inv(gram)


def _check_channel(h, v_rf) -> tuple:
    h = as_complex_matrix(h, "H")
    v_rf = as_complex_matrix(v_rf, "V_RF")
    if h.shape[1] != v_rf.shape[0]:
        raise DimensionError(f"H {h.shape} does not fit V_RF {v_rf.shape}")
    return h, v_rf


def zf_digital(h, v_rf, powers) -> ComplexMatrix:
    """V_D = V_RF^H H^H (H V_RF V_RF^H H^H)^{-1} P^{1/2}"""
    h, v_rf = _check_channel(h, v_rf)
    p = np.asarray(powers, dtype=float)
    if p.shape != (h.shape[0],):
        raise DimensionError(f"expected {h.shape[0]} powers, got shape {p.shape}")
    effective = h @ v_rf
    unit = effective.conj().T @ _gram_inverse(effective @ effective.conj().T, "effective channel Gram")
    return unit * np.sqrt(np.maximum(p, 0.0))[None, :]


def power_alloc_zf(h, v_rf, weights: Sequence[float], noise_power: float, power: float) -> WaterfillResult:
    """Weighted water-filling with costs q_kk from the unit-power ZF precoder"""
    h, v_rf = _check_channel(h, v_rf)
    unit = zf_digital(h, v_rf, np.ones(h.shape[0]))
    transmitted = v_rf @ unit
    costs = np.real(np.sum(transmitted.conj() * transmitted, axis=0))
    return waterfill(costs, weights, noise_power, power)


def effective_channel(h, powers) -> ComplexMatrix:
    """H~ = P^{-1/2} H over users with positive power"""
    h = as_complex_matrix(h, "H")
    p = np.asarray(powers, dtype=float)
    active = p > 0
    if not np.any(active):
        raise DesignError("no user has positive power")
    return h[active] / np.sqrt(p[active])[:, None]


def fhat(h_tilde, v_rf) -> float:
    """N * Tr((H~ V_RF V_RF^H H~^H)^{-1})"""
    h_tilde, v_rf = _check_channel(h_tilde, v_rf)
    effective = h_tilde @ v_rf
    inverse = _gram_inverse(effective @ effective.conj().T, "H~ V_RF V_RF^H H~^H")
    return v_rf.shape[0] * float(np.real(np.trace(inverse)))


def _split_matrices(h_tilde: ComplexMatrix, v_bar: ComplexMatrix):
    """Tr(A_j^{-1}), B_j = H~^H A_j^{-2} H~ and D_j = H~^H A_j^{-1} H~"""
    effective = h_tilde @ v_bar
    a_inv = _gram_inverse(effective @ effective.conj().T, "A_j")
    d = h_tilde.conj().T @ a_inv @ h_tilde
    b = h_tilde.conj().T @ a_inv @ a_inv @ h_tilde
    return float(np.real(np.trace(a_inv))), 0.5 * (b + b.conj().T), 0.5 * (d + d.conj().T)


def _linear_terms(m: ComplexMatrix, v: ComplexMatrix, i: int):
    others = np.arange(v.size) != i
    eta = complex(m[i, others] @ v[others])
    zeta = float(np.real(m[i, i] + v[others].conj() @ m[np.ix_(others, others)] @ v[others]))
    return zeta, eta


def fhat_decompose(h_tilde, v_rf, i: int, j: int) -> FhatDecomposition:
    """Rank-one split of f_hat around entry (i, j)"""
    h_tilde, v_rf = _check_channel(h_tilde, v_rf)
    k, n_rf = h_tilde.shape[0], v_rf.shape[1]
    if n_rf < k + 1:
        raise DesignError(f"entry-wise decomposition needs N_RF >= K+1, got N_RF={n_rf}, K={k}")

    trace_inv, b, d = _split_matrices(h_tilde, np.delete(v_rf, j, axis=1))
    v = v_rf[:, j]
    zeta_b, eta_b = _linear_terms(b, v, i)
    zeta_d, eta_d = _linear_terms(d, v, i)
    return FhatDecomposition(v_rf.shape[0], trace_inv, zeta_b, zeta_d, eta_b, eta_d)


def theta_candidates(dec: FhatDecomposition) -> ThetaCandidates:
    """Solutions of Im{c exp(j theta)} = z over one period"""
    c = (1.0 + dec.zeta_d) * dec.eta_b - dec.zeta_b * dec.eta_d
    z = float(np.imag(2.0 * np.conj(dec.eta_b) * dec.eta_d))
    magnitude = abs(c)
    if magnitude <= np.finfo(float).tiny:
        raise DesignError("degenerate update: c is zero")

    ratio = z / magnitude
    if abs(ratio) > 1.0:
        if abs(ratio) - 1.0 > ASIN_SLACK:
            raise DesignError(f"no stationary phase: |z/c| = {abs(ratio):.12g}")
        ratio = float(np.clip(ratio, -1.0, 1.0))

    sin_phi = float(np.clip(np.imag(c) / magnitude, -1.0, 1.0))
    phi = np.arcsin(sin_phi) if np.real(c) >= 0 else np.pi - np.arcsin(sin_phi)
    offset = np.arcsin(ratio)
    two_pi = 2 * np.pi
    return ThetaCandidates(
        theta1=float(np.mod(-phi + offset, two_pi)),
        theta2=float(np.mod(np.pi - phi - offset, two_pi)),
        c=complex(c),
        z=z,
        phi=float(phi),
    )


def best_theta(dec: FhatDecomposition) -> float:
    """Minimizer of f_hat over theta, the better of the two candidates"""
    cands = theta_candidates(dec)
    first = dec.value(np.exp(-1j * cands.theta1))
    second = dec.value(np.exp(-1j * cands.theta2))
    return cands.theta1 if first <= second else cands.theta2


def rf_channel_phase_match(h) -> ComplexMatrix:
    """Column k co-phases h_k so that h_k^H v_k = sum_i |H(k, i)|"""
    h = as_complex_matrix(h, "H")
    return np.exp(-1j * np.angle(h)).T


def rf_strongest_path(paths: Sequence[PathSet], geom: ArrayGeometry) -> ComplexMatrix:
    """Column k steers toward the departure angle of user k's strongest path"""
    if not paths:
        raise DesignError("path information is unavailable")
    angles = np.array([p.aod[p.strongest] for p in paths])
    return np.exp(1j * np.angle(geom.responses(angles)))


def _initial_rf(h: ComplexMatrix, n_rf: int, phase_set: Optional[PhaseSet]) -> ComplexMatrix:
    k = h.shape[0]
    v_rf = np.ones((h.shape[1], n_rf), dtype=np.complex128)
    v_rf[:, :min(k, n_rf)] = rf_channel_phase_match(h)[:, :n_rf]
    return quantize_beamformer(v_rf, phase_set) if phase_set is not None else v_rf


def rf_descent_miso(h, powers, n_rf: int, opts: Optional[MisoOptions] = None,
                    phase_set: Optional[PhaseSet] = None, initial: Optional[ComplexMatrix] = None,
                    on_update: Optional[UpdateHook] = None) -> MisoDescentResult:
    """Minimize f_hat over the RF precoder for fixed user powers.

    Entries are visited column by column. With infinite resolution each
    entry moves to the better stationary phase; with a phase_set the whole
    alphabet is scanned. An entry only changes when f_hat does not grow, so
    the trace is non-increasing. on_update receives (i, j, f_hat).
    """
    opts = opts or MisoOptions()
    h = as_complex_matrix(h, "H")
    h_tilde = effective_channel(h, powers)
    k, n = h_tilde.shape
    if not k + 1 <= n_rf <= n:
        raise DesignError(f"RF descent needs K+1 <= N_RF <= N, got K={k}, N_RF={n_rf}, N={n}")

    if initial is None:
        v_rf = _initial_rf(h_tilde, n_rf, phase_set)
    else:
        v_rf = np.array(as_complex_matrix(initial, "initial V_RF"), copy=True)
        if v_rf.shape != (n, n_rf):
            raise DimensionError(f"initial V_RF must be {n}x{n_rf}, got {v_rf.shape}")
    alphabet = phase_set.alphabet if phase_set is not None else None

    trace = [fhat(h_tilde, v_rf)]
    for _ in range(opts.max_inner_sweeps):
        for j in range(n_rf):
            try:
                trace_inv, b, d = _split_matrices(h_tilde, np.delete(v_rf, j, axis=1))
            except SingularMatrixError:
                # remaining columns lose rank; column j is held
                logger.debug(f"MISO RF descent: skipping column {j}, A_j is singular")
                continue
            v = v_rf[:, j].copy()
            u_b, u_d = b @ v, d @ v  # B_j v and D_j v, updated per entry
            for i in range(n):
                eta_b = u_b[i] - b[i, i] * v[i]
                eta_d = u_d[i] - d[i, i] * v[i]
                quad_b = float(np.real(np.vdot(v, u_b)))
                quad_d = float(np.real(np.vdot(v, u_d)))
                dec = FhatDecomposition(
                    n, trace_inv,
                    quad_b - 2.0 * float(np.real(np.conj(v[i]) * eta_b)),
                    quad_d - 2.0 * float(np.real(np.conj(v[i]) * eta_d)),
                    complex(eta_b), complex(eta_d),
                )
                current = dec.value(v[i])
                if alphabet is None:
                    c = (1.0 + dec.zeta_d) * eta_b - dec.zeta_b * eta_d
                    candidate = v[i] if abs(c) <= np.finfo(float).tiny else np.exp(-1j * best_theta(dec))
                    accept = dec.value(candidate) <= current
                else:
                    values = [dec.value(a) for a in alphabet]
                    best = int(np.argmin(values))
                    candidate = alphabet[best]
                    accept = values[best] < current
                if accept and candidate != v[i]:
                    delta = candidate - v[i]
                    u_b += b[:, i] * delta
                    u_d += d[:, i] * delta
                    v[i] = candidate
                if on_update is not None:
                    on_update(i, j, dec.value(v[i]))
            v_rf[:, j] = v

        trace.append(fhat(h_tilde, v_rf))
        if trace[-2] - trace[-1] <= opts.inner_tol * abs(trace[-2]):
            break

    logger.debug(f"MISO RF descent: {len(trace) - 1} sweeps, f_hat {trace[-1]:.6g}")
    return MisoDescentResult(v_rf, trace)


def _zero_power_report(h: ComplexMatrix, v_rf: ComplexMatrix, cfg: SystemConfig, method: str) -> DesignReport:
    precoder = HybridPrecoder(v_rf, np.zeros((v_rf.shape[1], h.shape[0]), dtype=np.complex128))
    rates, total = rate_miso(h, precoder, cfg.noise_power, cfg.weights)
    return DesignReport(precoder=precoder, per_user_rates=rates, weighted_sum_rate=total, method=method)


def zf_with_rf(h, v_rf, cfg: SystemConfig, method: str = "") -> DesignReport:
    """ZF digital stage with water-filled powers on a given RF precoder"""
    h, v_rf = _check_channel(h, v_rf)
    if cfg.power == 0:
        return _zero_power_report(h, v_rf, cfg, method)
    allocation = power_alloc_zf(h, v_rf, cfg.weights, cfg.noise_power, cfg.power)
    precoder = HybridPrecoder(v_rf, zf_digital(h, v_rf, allocation.powers))
    rates, total = rate_miso(h, precoder, cfg.noise_power, cfg.weights)
    return DesignReport(precoder=precoder, per_user_rates=rates, weighted_sum_rate=total, method=method)


def design_hybrid_miso(h, cfg: SystemConfig, opts: Optional[MisoOptions] = None) -> DesignReport:
    """Alternate RF descent (fixed powers) and ZF water-filling (fixed RF).

    Starts from unit powers. With exactly K RF chains the entry-wise descent
    is undefined and the channel phase-matched RF precoder is used instead.
    """
    opts = opts or MisoOptions()
    h = as_complex_matrix(h, "H")
    k, n = h.shape
    if (k, n) != (cfg.n_users, cfg.n_bs_antennas):
        raise DimensionError(f"H must be {cfg.n_users}x{cfg.n_bs_antennas}, got {h.shape}")
    phase_set = cfg.phase_set
    method = "hybrid_finite_res" if phase_set is not None else "hybrid_proposed"

    if cfg.n_rf_tx == k:
        logger.debug("N_RF equals K, falling back to phase matching")
        v_rf = rf_channel_phase_match(h)
        if phase_set is not None:
            v_rf = quantize_beamformer(v_rf, phase_set)
        return zf_with_rf(h, v_rf, cfg, method)
    if cfg.power == 0:
        return _zero_power_report(h, _initial_rf(h, cfg.n_rf_tx, phase_set), cfg, method)

    powers = np.ones(k)
    v_rf: Optional[ComplexMatrix] = None
    history: List[float] = []
    inner: List[float] = []
    report: Optional[DesignReport] = None
    for _ in range(opts.max_outer_iters):
        descent = rf_descent_miso(h, powers, cfg.n_rf_tx, opts, phase_set, initial=v_rf)
        v_rf = descent.v_rf
        inner.extend(descent.fhat_trace)
        report = zf_with_rf(h, v_rf, cfg, method)
        history.append(report.weighted_sum_rate)
        powers = descent_powers(received_powers(h, report.precoder))
        if len(history) > 1 and abs(history[-1] - history[-2]) <= opts.outer_tol * max(abs(history[-2]), 1e-300):
            break

    logger.debug(f"MISO design: {len(history)} outer iterations, rate {history[-1]:.6g} bps/Hz")
    report.objective_trace = history
    report.inner_trace = inner
    report.iterations = len(history)
    return report


def design_quantized_after(h, cfg: SystemConfig, opts: Optional[MisoOptions] = None) -> DesignReport:
    """Infinite-resolution design with the RF precoder quantized afterwards"""
    phase_set = cfg.phase_set
    if phase_set is None:
        raise DesignError("quantize-after design needs phase_bits >= 1")
    ideal = design_hybrid_miso(h, replace(cfg, phase_bits=0), opts)
    v_rf = quantize_beamformer(ideal.precoder.v_rf, phase_set)
    report = zf_with_rf(h, v_rf, cfg, "hybrid_proposed_quantized")
    report.objective_trace = ideal.objective_trace
    return report


def fd_zf_baseline(h, weights: Sequence[float], noise_power: float, power: float) -> FullyDigitalResult:
    """Fully digital ZF (pseudo-inverse) precoding with weighted water-filling"""
    h = as_complex_matrix(h, "H")
    k = h.shape[0]
    if np.linalg.matrix_rank(h) < k:
        raise DesignError("fully digital ZF needs H with full row rank")
    unit = h.conj().T @ _gram_inverse(h @ h.conj().T, "H H^H")
    beta = np.asarray(weights, dtype=float)
    if power == 0:
        powers = np.zeros(k)
    else:
        costs = np.real(np.sum(unit.conj() * unit, axis=0))
        powers = waterfill(costs, beta, noise_power, power).powers
    rates = np.log2(1.0 + powers / noise_power)
    return FullyDigitalResult(
        precoder=unit * np.sqrt(powers)[None, :],
        per_user_rates=rates,
        weighted_sum_rate=float(beta @ rates),
        powers=powers,
    )


def approximation_gap(h, v_rf, powers) -> float:
    """|f - f_hat| / f with f the exact transmit power of the ZF precoder"""
    h, v_rf = _check_channel(h, v_rf)
    exact = float(np.linalg.norm(v_rf @ zf_digital(h, v_rf, powers)) ** 2)
    approx = fhat(effective_channel(h, powers), v_rf)
    return abs(exact - approx) / exact


def received_powers(h, precoder: HybridPrecoder) -> RealVector:
    """|h_k^H v_k|^2 per user"""
    h = as_complex_matrix(h, "H")
    return np.abs(np.diag(h @ precoder.effective)) ** 2


def descent_powers(powers) -> RealVector:
    """Powers for the next RF descent, users left dry by water-filling lifted to a floor.

    Every user stays in f_hat, so H V_RF keeps rank K for the ZF stage.
    """
    p = np.asarray(powers, dtype=float)
    top = float(p.max()) if p.size else 0.0
    if top <= 0:
        return np.ones_like(p)
    return np.maximum(p, DRY_USER_FLOOR * top)
