#!/usr/bin/env python3
"""
Point-to-Point Hybrid Design
============================
Hybrid precoder and combiner design for a single large-scale MIMO link:
- RF coordinate descent on log2|I + scale * V^H F V| (infinite or finite resolution)
- Water-filled digital precoder on the effective channel
- MMSE digital combiner
- Fully digital SVD baseline and the exhaustive finite-resolution search
"""

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Callable, List, NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import DesignError, DimensionError, SingularMatrixError
from .hybrid_core import (
    DesignReport, FullyDigitalResult, HybridCombiner, HybridPrecoder, PhaseSet,
    SystemConfig, UserCombiner, quantize_beamformer, rate_general, realize_fully_digital,
)
from .numerics import (
    ComplexMatrix, as_complex_matrix, herm_eig, hermitian_part, inv_sqrt_psd,
    log2det_eye_plus, svd, waterfill_gains,
)

logger = logging.getLogger(__name__)

UpdateHook = Callable[[int, int, float], None]


@dataclass(frozen=True)
class DescentOptions:
    """Stopping rule and starting point of the RF coordinate descent"""
    max_outer_iters: int = 100
    rel_tol: float = 1e-6
    initial: Optional[ComplexMatrix] = None  # None = all-ones

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise DesignError("max_outer_iters must be at least 1")
        if self.rel_tol <= 0:
            raise DesignError("rel_tol must be positive")


@dataclass(frozen=True)
class ObjectiveDecomposition:
    """Contribution of entry (i, j) to log2|I + scale * V^H F V|"""
    logdet_c: float
    eta: complex
    zeta: float
    g_matrix: ComplexMatrix

    def objective(self, value: complex) -> float:
        """Objective with V(i, j) replaced by a unit-modulus value"""
        inner = 1.0 + self.zeta + 2.0 * float(np.real(np.conj(value) * self.eta))
        return self.logdet_c + float(np.log2(inner))


class DescentResult(NamedTuple):
    v_rf: ComplexMatrix
    objective_trace: List[float]


def objective(f: ComplexMatrix, v_rf: ComplexMatrix, scale: float) -> float:
    """log2|I + scale * V^H F V|"""
    return log2det_eye_plus(scale * (v_rf.conj().T @ f @ v_rf))


def _check_psd_input(f, n_rows: int) -> ComplexMatrix:
    f = as_complex_matrix(f, "F")
    if f.shape != (n_rows, n_rows):
        raise DimensionError(f"F must be {n_rows}x{n_rows}, got {f.shape}")
    herm_eig(f)  # raises NonHermitianError
    return hermitian_part(f)


def _g_matrix(f: ComplexMatrix, v_bar: ComplexMatrix, scale: float):
    """C_j and G_j for the RF matrix with column j removed"""
    if v_bar.shape[1] == 0:
        return np.zeros((0, 0), dtype=np.complex128), scale * f
    fv = f @ v_bar
    c = np.eye(v_bar.shape[1]) + scale * (v_bar.conj().T @ fv)
    g = scale * f - scale ** 2 * fv @ scipy.linalg.solve(c, fv.conj().T, assume_a="her")
    return c, hermitian_part(g)


def decompose_objective(f, v_rf, i: int, j: int, scale: float) -> ObjectiveDecomposition:
    """Split the objective into a part free of V(i, j) and a term linear in it"""
    v_rf = as_complex_matrix(v_rf, "V_RF")
    f = _check_psd_input(f, v_rf.shape[0])
    if scale <= 0:
        raise DesignError("objective scale must be positive")

    c, g = _g_matrix(f, np.delete(v_rf, j, axis=1), scale)
    v = v_rf[:, j]
    others = np.arange(v.size) != i
    eta = complex(g[i, others] @ v[others])
    zeta = float(np.real(g[i, i] + v[others].conj() @ g[np.ix_(others, others)] @ v[others]))
    return ObjectiveDecomposition(log2det_eye_plus(c - np.eye(c.shape[0])), eta, zeta, g)


def _entry_update(eta: complex, current: complex, phase_set: Optional[PhaseSet]) -> complex:
    if eta == 0:
        return current if phase_set is not None else 1.0 + 0j
    if phase_set is None:
        return eta / abs(eta)
    return complex(phase_set.quantize(np.array([eta]))[0])


def rf_coordinate_descent(f, scale: float, n_rf: int, opts: Optional[DescentOptions] = None,
                          phase_set: Optional[PhaseSet] = None,
                          on_update: Optional[UpdateHook] = None) -> DescentResult:
    """Maximize log2|I + scale * V^H F V| over unit-modulus V one entry at a time.

    Sweeps run column by column, row by row inside each column. Each entry
    is set to the phase of eta (or its nearest alphabet member when a
    phase_set is given), which never decreases the objective. on_update
    receives (i, j, objective) after every entry update.
    """
    opts = opts or DescentOptions()
    f = as_complex_matrix(f, "F")
    n = f.shape[0]
    f = _check_psd_input(f, n)
    if not 1 <= n_rf <= n:
        raise DimensionError(f"need 1 <= N_RF <= {n}, got {n_rf}")
    if scale < 0:
        raise DesignError("objective scale must be non-negative")

    if opts.initial is None:
        v_rf = np.ones((n, n_rf), dtype=np.complex128)
    else:
        v_rf = np.array(as_complex_matrix(opts.initial, "initial V_RF"), copy=True)
        if v_rf.shape != (n, n_rf):
            raise DimensionError(f"initial V_RF must be {n}x{n_rf}, got {v_rf.shape}")

    trace = [objective(f, v_rf, scale)]
    if scale == 0:
        return DescentResult(v_rf, trace)

    for sweep in range(opts.max_outer_iters):
        for j in range(n_rf):
            c, g = _g_matrix(f, np.delete(v_rf, j, axis=1), scale)
            logdet_c = log2det_eye_plus(c - np.eye(c.shape[0])) if c.size else 0.0
            v = v_rf[:, j].copy()
            u = g @ v  # kept equal to G_j v across the row updates
            for i in range(n):
                eta = u[i] - g[i, i] * v[i]
                new = _entry_update(eta, v[i], phase_set)
                if new != v[i]:
                    u += g[:, i] * (new - v[i])
                    v[i] = new
                if on_update is not None:
                    quad = float(np.real(np.vdot(v, u)))
                    on_update(i, j, logdet_c + float(np.log2(1.0 + quad)))
            v_rf[:, j] = v

        trace.append(objective(f, v_rf, scale))
        gain = trace[-1] - trace[-2]
        if gain <= opts.rel_tol * max(abs(trace[-2]), np.finfo(float).tiny):
            break

    logger.debug(f"RF descent: {len(trace) - 1} sweeps, objective {trace[-1]:.6g}")
    return DescentResult(v_rf, trace)


def digital_precoder_waterfill(h, v_rf, power: float, noise_power: float,
                               n_streams: int) -> ComplexMatrix:
    """V_D = Q^{-1/2} U_e Gamma_e with Gamma_e the water-filled amplitudes"""
    h = as_complex_matrix(h, "H")
    v_rf = as_complex_matrix(v_rf, "V_RF")
    if n_streams > v_rf.shape[1]:
        raise DesignError(f"{n_streams} streams need at least as many RF chains, got {v_rf.shape[1]}")
    if h.shape[1] != v_rf.shape[0]:
        raise DimensionError(f"H {h.shape} does not fit V_RF {v_rf.shape}")

    q_inv_sqrt = inv_sqrt_psd(v_rf.conj().T @ v_rf)
    effective = svd(h @ v_rf @ q_inv_sqrt)
    if effective.singular_values.size < n_streams:
        raise DimensionError(f"effective channel supports at most {effective.singular_values.size} streams")

    gains = effective.singular_values[:n_streams] ** 2
    powers = waterfill_gains(gains, noise_power, power)
    return q_inv_sqrt @ effective.right[:, :n_streams] * np.sqrt(powers)[None, :]


def mmse_digital_combiner(h, v_t, w_rf, noise_power: float, pseudo_inverse: bool = False) -> ComplexMatrix:
    """W_D = J^{-1} W_RF^H H V_t with J = W_RF^H H V_t V_t^H H^H W_RF + noise W_RF^H W_RF"""
    h = as_complex_matrix(h, "H")
    v_t = as_complex_matrix(v_t, "V_t")
    w_rf = as_complex_matrix(w_rf, "W_RF")
    if h.shape != (w_rf.shape[0], v_t.shape[0]):
        raise DimensionError(f"H {h.shape} does not fit W_RF {w_rf.shape} and V_t {v_t.shape}")

    cross = w_rf.conj().T @ h @ v_t
    j_matrix = hermitian_part(cross @ cross.conj().T + noise_power * (w_rf.conj().T @ w_rf))
    if np.linalg.cond(j_matrix) > 1e12:
        if not pseudo_inverse:
            raise SingularMatrixError("MMSE matrix J is singular")
        logger.debug("MMSE matrix J is singular, using its pseudo-inverse")
        return scipy.linalg.pinvh(j_matrix) @ cross
    return scipy.linalg.solve(j_matrix, cross, assume_a="her")


def fd_p2p_baseline(h, power: float, noise_power: float, n_streams: int) -> FullyDigitalResult:
    """Fully digital optimum: SVD precoding with water-filling over the top modes"""
    h = as_complex_matrix(h, "H")
    decomposition = svd(h)
    if decomposition.singular_values.size < n_streams:
        raise DimensionError(f"H {h.shape} supports at most {decomposition.singular_values.size} streams")

    gains = decomposition.singular_values[:n_streams] ** 2
    powers = waterfill_gains(gains, noise_power, power)
    rate = float(np.sum(np.log2(1.0 + powers * gains / noise_power)))
    return FullyDigitalResult(
        precoder=decomposition.right[:, :n_streams] * np.sqrt(powers)[None, :],
        per_user_rates=np.array([rate]),
        weighted_sum_rate=rate,
        powers=powers,
        combiner=decomposition.left[:, :n_streams],
    )


def _report(h, cfg: SystemConfig, precoder: HybridPrecoder, combiner: Optional[UserCombiner],
            method: str, trace: Optional[List[float]] = None,
            inner: Optional[List[float]] = None) -> DesignReport:
    combiners = HybridCombiner((combiner,)) if combiner is not None else None
    rates, total = rate_general([h], precoder, combiners, cfg.noise_power, cfg.weights)
    trace = trace or []
    return DesignReport(
        precoder=precoder,
        combiners=combiners,
        per_user_rates=rates,
        weighted_sum_rate=total,
        objective_trace=trace,
        iterations=max(len(trace) - 1, 0),
        method=method,
        inner_trace=inner or [],
    )


def _design_combiner(h, v_t, cfg: SystemConfig, opts: DescentOptions,
                     phase_set: Optional[PhaseSet]):
    m = h.shape[0]
    hv = h @ v_t
    receive = rf_coordinate_descent(hv @ hv.conj().T, 1.0 / (m * cfg.noise_power),
                                    cfg.n_rf_rx, replace(opts, initial=None), phase_set)
    w_d = mmse_digital_combiner(h, v_t, receive.v_rf, cfg.noise_power, pseudo_inverse=True)
    return UserCombiner(receive.v_rf, w_d), receive.objective_trace


def _realized_optimum(h, cfg: SystemConfig) -> DesignReport:
    ns = cfg.streams_per_user
    fd = fd_p2p_baseline(h, cfg.power, cfg.noise_power, ns)
    precoder = realize_fully_digital(fd.precoder, n_rf=cfg.n_rf_tx)
    if cfg.n_rf_rx >= 2 * ns:
        realized = realize_fully_digital(fd.combiner, n_rf=cfg.n_rf_rx)
        combiner = UserCombiner(realized.v_rf, realized.v_d)
        return _report(h, cfg, precoder, combiner, "fd_realized", [fd.weighted_sum_rate])
    combiner, inner = _design_combiner(h, precoder.effective, cfg, DescentOptions(), cfg.phase_set)
    return _report(h, cfg, precoder, combiner, "fd_realized", [fd.weighted_sum_rate], inner)


def design_hybrid_mimo(h, cfg: SystemConfig, opts: Optional[DescentOptions] = None,
                       allow_exact: bool = True) -> DesignReport:
    """Two-stage hybrid transceiver design for a point-to-point link.

    The precoder comes first: RF stage by coordinate descent on H^H H, then a
    water-filled digital stage. The combiner is designed for the resulting
    V_t. With infinite resolution and at least 2 Ns transmit RF chains the
    fully digital optimum is realized exactly instead.
    """
    opts = opts or DescentOptions()
    h = as_complex_matrix(h, "H")
    if h.shape != (cfg.n_user_antennas, cfg.n_bs_antennas):
        raise DimensionError(f"H must be {cfg.n_user_antennas}x{cfg.n_bs_antennas}, got {h.shape}")
    ns = cfg.streams_per_user
    phase_set = cfg.phase_set

    if allow_exact and phase_set is None and cfg.n_rf_tx >= 2 * ns and cfg.power > 0:
        logger.debug(f"N_RF={cfg.n_rf_tx} >= 2Ns, realizing the fully digital optimum")
        return replace(_realized_optimum(h, cfg), method="hybrid_proposed")

    n, n_rf = cfg.n_bs_antennas, cfg.n_rf_tx
    gamma_sq = cfg.power / (n * n_rf)
    transmit = rf_coordinate_descent(h.conj().T @ h, gamma_sq / cfg.noise_power, n_rf, opts, phase_set)
    v_d = digital_precoder_waterfill(h, transmit.v_rf, cfg.power, cfg.noise_power, ns)
    precoder = HybridPrecoder(transmit.v_rf, v_d)

    combiner, inner = _design_combiner(h, precoder.effective, cfg, opts, phase_set)
    method = "hybrid_finite_res" if phase_set is not None else "hybrid_proposed"
    return _report(h, cfg, precoder, combiner, method, transmit.objective_trace, inner)


def design_quantized_after(h, cfg: SystemConfig, opts: Optional[DescentOptions] = None) -> DesignReport:
    """Infinite-resolution design whose RF stages are quantized afterwards"""
    phase_set = cfg.phase_set
    if phase_set is None:
        raise DesignError("quantize-after design needs phase_bits >= 1")
    h = as_complex_matrix(h, "H")
    ideal = design_hybrid_mimo(h, replace(cfg, phase_bits=0), opts, allow_exact=False)

    v_rf = quantize_beamformer(ideal.precoder.v_rf, phase_set)
    v_d = digital_precoder_waterfill(h, v_rf, cfg.power, cfg.noise_power, cfg.streams_per_user)
    precoder = HybridPrecoder(v_rf, v_d)
    w_rf = quantize_beamformer(ideal.combiners.users[0].w_rf, phase_set)
    w_d = mmse_digital_combiner(h, precoder.effective, w_rf, cfg.noise_power, pseudo_inverse=True)
    return _report(h, cfg, precoder, UserCombiner(w_rf, w_d), "hybrid_proposed_quantized",
                   ideal.objective_trace, ideal.inner_trace)


def exhaustive_rf_search(h, cfg: SystemConfig, limit: int = 16) -> DesignReport:
    """Best finite-resolution RF precoder by enumeration, fully digital receiver.

    The first row is pinned to 1 since a common column phase is absorbed by
    the digital stage.
    """
    phase_set = cfg.phase_set
    if phase_set is None:
        raise DesignError("exhaustive search needs phase_bits >= 1")
    h = as_complex_matrix(h, "H")
    n, n_rf = cfg.n_bs_antennas, cfg.n_rf_tx
    if n * n_rf > limit:
        raise DesignError(f"exhaustive search limited to N*N_RF <= {limit}, got {n * n_rf}")

    alphabet = phase_set.alphabet
    free = (n - 1) * n_rf
    best_rate, best = -np.inf, None
    for exponents in itertools.product(range(phase_set.levels), repeat=free):
        v_rf = np.ones((n, n_rf), dtype=np.complex128)
        v_rf[1:, :] = alphabet[np.array(exponents, dtype=int)].reshape(n - 1, n_rf)
        if np.linalg.matrix_rank(v_rf) < n_rf:
            continue
        v_d = digital_precoder_waterfill(h, v_rf, cfg.power, cfg.noise_power, cfg.streams_per_user)
        candidate = HybridPrecoder(v_rf, v_d)
        rate = transmit_side_rate(h, candidate, cfg.noise_power)
        if rate > best_rate:
            best_rate, best = rate, candidate

    if best is None:
        raise DesignError("no RF matrix in the alphabet supports the requested streams")
    logger.debug(f"Exhaustive search over {phase_set.levels ** free} RF matrices: {best_rate:.6g} bps/Hz")
    return _report(h, cfg, best, None, "exhaustive", [best_rate])


def transmit_side_rate(h, precoder: HybridPrecoder, noise_power: float) -> float:
    """log2|I + H V_t V_t^H H^H / sigma^2|, the rate behind a fully digital receiver"""
    h = as_complex_matrix(h, "H")
    hv = h @ precoder.effective
    return log2det_eye_plus(hv @ hv.conj().T / noise_power)


def with_hybrid_combiner(h, report: DesignReport, cfg: SystemConfig,
                         opts: Optional[DescentOptions] = None) -> DesignReport:
    """Completes a precoder-only design with the two-stage hybrid combiner"""
    h = as_complex_matrix(h, "H")
    combiner, inner = _design_combiner(h, report.precoder.effective, cfg, opts or DescentOptions(), cfg.phase_set)
    return _report(h, cfg, report.precoder, combiner, report.method, report.objective_trace, inner)
