#!/usr/bin/env python3
"""
Hybrid Beamforming Core
=======================
Data model shared by every design algorithm:
- SystemConfig with the scenario dimensions and physical parameters
- HybridPrecoder / HybridCombiner factor pairs with unit-modulus RF stages
- PhaseSet, the finite phase-shifter alphabet, and its quantizer
- Spectral-efficiency evaluators (general, point-to-point, MU-MISO)
- Exact realization of a fully digital precoder with 2x the stream count in RF chains
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import ConfigError, DesignError, DimensionError, SingularMatrixError
from .numerics import ComplexMatrix, RealVector, as_complex_matrix, log2det_eye_plus, svd

logger = logging.getLogger(__name__)

UNIT_MODULUS_TOL = 1e-12
DEFAULT_RANK_TOL = 1e-10
COVARIANCE_RIDGE = 1e-12  # relative to the noise power


@dataclass(frozen=True)
class SystemConfig:
    """Scenario dimensions and physical parameters"""
    n_bs_antennas: int                 # N
    n_user_antennas: int = 1           # M
    n_users: int = 1                   # K
    streams_per_user: int = 1          # d
    n_rf_tx: int = 1
    n_rf_rx: int = 1
    power: float = 1.0                 # P, linear
    noise_power: float = 1.0           # sigma^2, linear
    weights: Tuple[float, ...] = ()    # beta_k, empty means all ones
    phase_bits: int = 0                # 0 = infinite resolution
    n_paths: int = 15
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if not self.weights:
            object.__setattr__(self, "weights", (1.0,) * self.n_users)
        object.__setattr__(self, "weights", tuple(float(b) for b in self.weights))
        self.validate()

    def validate(self) -> None:
        for name in ("n_bs_antennas", "n_user_antennas", "n_users", "streams_per_user",
                     "n_rf_tx", "n_rf_rx", "n_paths"):
            if getattr(self, name) < 1:
                raise ConfigError("must be at least 1", name)
        if not self.n_streams <= self.n_rf_tx <= self.n_bs_antennas:
            raise ConfigError(
                f"need K*d <= N_RF_tx <= N, got {self.n_streams} <= {self.n_rf_tx} <= {self.n_bs_antennas}",
                "n_rf_tx")
        if not self.streams_per_user <= self.n_rf_rx <= self.n_user_antennas:
            raise ConfigError(
                f"need d <= N_RF_rx <= M, got {self.streams_per_user} <= {self.n_rf_rx} <= {self.n_user_antennas}",
                "n_rf_rx")
        if self.power < 0:
            raise ConfigError("must be non-negative", "power")
        if self.noise_power <= 0:
            raise ConfigError("must be positive", "noise_power")
        if len(self.weights) != self.n_users:
            raise ConfigError(f"expected {self.n_users} weights, got {len(self.weights)}", "weights")
        if any(b <= 0 for b in self.weights):
            raise ConfigError("must all be positive", "weights")
        if self.phase_bits < 0:
            raise ConfigError("must be non-negative", "phase_bits")
        if self.spacing_over_wavelength <= 0:
            raise ConfigError("must be positive", "spacing_over_wavelength")

    @property
    def n_streams(self) -> int:
        return self.n_users * self.streams_per_user

    @property
    def snr_db(self) -> float:
        return 10 * np.log10(self.power / self.noise_power) if self.power > 0 else -np.inf

    @property
    def phase_set(self) -> Optional["PhaseSet"]:
        return PhaseSet(self.phase_bits) if self.phase_bits > 0 else None

    def with_power(self, power: float) -> "SystemConfig":
        return replace(self, power=float(power))

    def evolve(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class PhaseSet:
    """Alphabet {w^m} of a b-bit phase shifter, w = exp(j 2pi / 2^b)"""
    bits: int

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError("phase shifters need at least one bit", "phase_bits")

    @property
    def levels(self) -> int:
        return 2 ** self.bits

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.levels

    @property
    def alphabet(self) -> np.ndarray:
        return np.exp(1j * self.spacing * np.arange(self.levels))

    def exponents(self, values) -> np.ndarray:
        """Index m of the nearest alphabet member, ties to the smaller m"""
        z = np.asarray(values, dtype=np.complex128)
        ratio = np.mod(np.angle(z), 2 * np.pi) / self.spacing
        lower = np.floor(ratio)
        frac = ratio - lower
        upper = lower + 1
        tie = np.abs(frac - 0.5) <= 1e-12
        # the upper neighbour only wins a tie when it wraps around to m = 0
        pick_upper = (frac > 0.5 + 1e-12) | (tie & (upper >= self.levels))
        m = np.where(pick_upper, upper, lower).astype(int) % self.levels
        return np.where(z == 0, 0, m)

    def quantize(self, values) -> np.ndarray:
        return np.exp(1j * self.spacing * self.exponents(values))

    def contains(self, values, tol: float = 1e-9) -> bool:
        v = np.asarray(values, dtype=np.complex128)
        return bool(np.all(np.abs(v - self.quantize(v)) <= tol))


def quantize_phase(z: complex, phase_set: PhaseSet) -> complex:
    """Nearest alphabet member to z/|z|; z = 0 maps to 1"""
    return complex(phase_set.quantize(np.array([z]))[0])


def quantize_beamformer(v_rf, phase_set: PhaseSet) -> ComplexMatrix:
    return phase_set.quantize(as_complex_matrix(v_rf, "RF beamformer"))


def check_unit_modulus(v_rf: ComplexMatrix, tol: float = UNIT_MODULUS_TOL) -> bool:
    return bool(np.all(np.abs(np.abs(v_rf) - 1.0) <= tol))


def _frozen(a: ComplexMatrix) -> ComplexMatrix:
    arr = np.array(a, dtype=np.complex128, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HybridPrecoder:
    """x = V_RF V_D s"""
    v_rf: ComplexMatrix  # N x N_RF, unit modulus
    v_d: ComplexMatrix   # N_RF x Ns

    def __post_init__(self):
        v_rf = as_complex_matrix(self.v_rf, "V_RF")
        v_d = as_complex_matrix(self.v_d, "V_D")
        if v_rf.shape[1] != v_d.shape[0]:
            raise DimensionError(f"V_RF {v_rf.shape} and V_D {v_d.shape} do not chain")
        if not check_unit_modulus(v_rf):
            raise DimensionError("V_RF entries must have unit modulus")
        object.__setattr__(self, "v_rf", _frozen(v_rf))
        object.__setattr__(self, "v_d", _frozen(v_d))

    @property
    def n_rf(self) -> int:
        return self.v_rf.shape[1]

    @property
    def effective(self) -> ComplexMatrix:
        return self.v_rf @ self.v_d

    @property
    def transmit_power(self) -> float:
        return float(np.linalg.norm(self.effective) ** 2)

    def satisfies_power(self, budget: float) -> bool:
        return self.transmit_power <= budget * (1 + 1e-9) + 1e-300


@dataclass(frozen=True)
class UserCombiner:
    w_rf: ComplexMatrix  # M x N_RF_rx
    w_d: ComplexMatrix   # N_RF_rx x d

    def __post_init__(self):
        w_rf = as_complex_matrix(self.w_rf, "W_RF")
        w_d = as_complex_matrix(self.w_d, "W_D")
        if w_rf.shape[1] != w_d.shape[0]:
            raise DimensionError(f"W_RF {w_rf.shape} and W_D {w_d.shape} do not chain")
        if not check_unit_modulus(w_rf):
            raise DimensionError("W_RF entries must have unit modulus")
        object.__setattr__(self, "w_rf", _frozen(w_rf))
        object.__setattr__(self, "w_d", _frozen(w_d))

    @property
    def effective(self) -> ComplexMatrix:
        return self.w_rf @ self.w_d


@dataclass(frozen=True)
class HybridCombiner:
    users: Tuple[UserCombiner, ...]

    def effective(self, k: int) -> ComplexMatrix:
        return self.users[k].effective


@dataclass
class DesignReport:
    """Designed beamformers plus the rates they achieve"""
    precoder: HybridPrecoder
    per_user_rates: RealVector
    weighted_sum_rate: float
    combiners: Optional[HybridCombiner] = None
    objective_trace: List[float] = field(default_factory=list)
    iterations: int = 0
    method: str = ""
    inner_trace: List[float] = field(default_factory=list)


@dataclass
class FullyDigitalResult:
    """Fully digital baseline: unconstrained precoder and its rates"""
    precoder: ComplexMatrix
    per_user_rates: RealVector
    weighted_sum_rate: float
    powers: RealVector
    combiner: Optional[ComplexMatrix] = None

    @property
    def rate(self) -> float:
        return self.weighted_sum_rate


def _stream_blocks(v_t: ComplexMatrix, n_users: int) -> List[ComplexMatrix]:
    if v_t.shape[1] % n_users:
        raise DimensionError(f"{v_t.shape[1]} streams cannot be split among {n_users} users")
    d = v_t.shape[1] // n_users
    return [v_t[:, k * d:(k + 1) * d] for k in range(n_users)]


def rate_general(channels: Sequence[ComplexMatrix], precoder, combiners: Optional[Sequence] = None,
                 noise_power: float = 1.0, weights: Optional[Sequence[float]] = None
                 ) -> Tuple[RealVector, float]:
    """Per-user rates with interference-plus-noise covariance C_k and their weighted sum.

    `precoder` is a HybridPrecoder or a fully digital N x Ns matrix;
    `combiners` is a HybridCombiner, a list of per-user W_t matrices, or None
    for identity (all-antenna) reception.
    """
    hs = [as_complex_matrix(h, "H_k") for h in channels]
    k_users = len(hs)
    v_t = precoder.effective if isinstance(precoder, HybridPrecoder) else as_complex_matrix(precoder, "V_t")
    if any(h.shape[1] != v_t.shape[0] for h in hs):
        raise DimensionError("channel columns must match precoder rows")
    blocks = _stream_blocks(v_t, k_users)
    beta = np.ones(k_users) if weights is None else np.asarray(weights, dtype=float)
    if beta.size != k_users:
        raise DimensionError(f"expected {k_users} weights, got {beta.size}")

    rates = np.zeros(k_users)
    for k, h in enumerate(hs):
        if combiners is None:
            w_t = np.eye(h.shape[0], dtype=np.complex128)
        elif isinstance(combiners, HybridCombiner):
            w_t = combiners.effective(k)
        else:
            w_t = as_complex_matrix(combiners[k], "W_t")
        if w_t.shape[0] != h.shape[0]:
            raise DimensionError("combiner rows must match user antennas")

        hw = w_t.conj().T @ h
        signal = hw @ blocks[k]
        interference = np.zeros((w_t.shape[1], w_t.shape[1]), dtype=np.complex128)
        for ell, block in enumerate(blocks):
            if ell != k:
                leak = hw @ block
                interference += leak @ leak.conj().T
        cov = interference + noise_power * (w_t.conj().T @ w_t)
        cov += COVARIANCE_RIDGE * noise_power * np.eye(cov.shape[0])
        # |I_M + W C^-1 W^H H V V^H H^H| = |I + C^-1 (W^H H V)(W^H H V)^H|
        gain = scipy.linalg.solve(cov, signal @ signal.conj().T, assume_a="her")
        rates[k] = max(0.0, log2det_eye_plus(gain))

    return rates, float(beta @ rates)


def rate_p2p(h, v_t, w_t, noise_power: float) -> float:
    """Point-to-point rate with the combiner's projector"""
    h = as_complex_matrix(h, "H")
    v_t = as_complex_matrix(v_t, "V_t")
    w_t = as_complex_matrix(w_t, "W_t")
    if h.shape != (w_t.shape[0], v_t.shape[0]):
        raise DimensionError(f"H {h.shape} does not fit W_t {w_t.shape} and V_t {v_t.shape}")
    gram = w_t.conj().T @ w_t
    if np.linalg.cond(gram) > 1e12:
        raise SingularMatrixError("W_t^H W_t is singular")
    hv = w_t.conj().T @ h @ v_t
    gain = scipy.linalg.solve(gram, hv @ hv.conj().T, assume_a="her") / noise_power
    return max(0.0, log2det_eye_plus(gain))


def rate_miso(h_rows, precoder, noise_power: float,
              weights: Optional[Sequence[float]] = None) -> Tuple[RealVector, float]:
    """Single-antenna users: rows of h_rows are h_k^H"""
    h = as_complex_matrix(h_rows, "H")
    v_t = precoder.effective if isinstance(precoder, HybridPrecoder) else as_complex_matrix(precoder, "V_t")
    if h.shape[1] != v_t.shape[0] or v_t.shape[1] != h.shape[0]:
        raise DimensionError(f"H {h.shape} does not fit precoder {v_t.shape}")
    received = np.abs(h @ v_t) ** 2  # (k, l) = |h_k^H v_l|^2
    desired = np.diag(received)
    interference = received.sum(axis=1) - desired
    rates = np.log2(1.0 + desired / (noise_power + interference))
    beta = np.ones(h.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    return rates, float(beta @ rates)


def _realize_full_rank(a: ComplexMatrix) -> Tuple[ComplexMatrix, ComplexMatrix]:
    """Two unit-modulus phasors per column with equal digital gains"""
    n, cols = a.shape
    nu = np.abs(a)
    phi = np.angle(a)
    nu_max = nu.max(axis=0)
    if np.any(nu_max == 0):
        raise DesignError("cannot realize a zero column with the two-phasor construction")
    delta = np.arccos(np.clip(nu / (2 * nu_max[None, :]), 0.0, 1.0))

    v_rf = np.empty((n, 2 * cols), dtype=np.complex128)
    v_rf[:, 0::2] = np.exp(1j * (phi - delta))
    v_rf[:, 1::2] = np.exp(1j * (phi + delta))
    v_d = np.zeros((2 * cols, cols), dtype=np.complex128)
    for k in range(cols):
        v_d[2 * k, k] = v_d[2 * k + 1, k] = nu_max[k]
    return v_rf, v_d


def realize_fully_digital(v_fd, rank_tol: float = DEFAULT_RANK_TOL,
                          n_rf: Optional[int] = None) -> HybridPrecoder:
    """Exact hybrid factorization of a fully digital precoder with 2r RF chains.

    Rank-deficient inputs are first factored as V_FD = A B with A of full
    column rank r; A is realized and B is folded into the digital stage.
    With `n_rf` larger than 2r the spare RF chains get all-ones columns and
    zero digital weights.
    """
    v_fd = as_complex_matrix(v_fd, "V_FD")
    if not np.any(v_fd):
        raise DesignError("cannot realize an all-zero precoder")

    decomposition = svd(v_fd)
    s = decomposition.singular_values
    rank = int(np.sum(s > rank_tol * s[0]))
    if rank < v_fd.shape[1]:
        a = decomposition.left[:, :rank] * s[:rank]
        b = decomposition.right[:, :rank].conj().T
        v_rf, v_d_inner = _realize_full_rank(a)
        v_d = v_d_inner @ b
        logger.debug(f"Rank-deficient precoder (rank {rank}) realized with {2 * rank} RF chains")
    else:
        v_rf, v_d = _realize_full_rank(v_fd)

    if n_rf is not None:
        if n_rf < v_rf.shape[1]:
            raise DesignError(f"exact realization needs {v_rf.shape[1]} RF chains, got {n_rf}")
        spare = n_rf - v_rf.shape[1]
        v_rf = np.hstack([v_rf, np.ones((v_rf.shape[0], spare), dtype=np.complex128)])
        v_d = np.vstack([v_d, np.zeros((spare, v_d.shape[1]), dtype=np.complex128)])

    return HybridPrecoder(v_rf, v_d)
