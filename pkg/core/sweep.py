#!/usr/bin/env python3
"""
Monte Carlo Sweep Engine
========================
Runs seeded spectral-efficiency experiments over an SNR grid:
- SweepSpec parsed from (and emitted as) canonical JSON
- Method registry mapping identifiers like `hybrid_finite_res_b1_nrf6` to designs
- One channel realization per trial, shared by every SNR point and method
- Trials in worker processes, merged back in trial order
"""

import hashlib
import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
import pandas as pd

from . import __version__
from .channel import ArrayGeometry, ChannelRealization, draw_channel, load_dataset
from .errors import ConfigError, DatasetFormatError, HybridBeamformingError, SweepAbortedError
from .hybrid_core import SystemConfig, quantize_beamformer, rate_general, rate_miso, realize_fully_digital
from .settings import Settings, load_settings
from . import mimo_design, miso_design

logger = logging.getLogger(__name__)

NOISE_POWER = 1.0
GENERATED = "generate"
RESULT_COLUMNS = ["snr_db", "method", "mean_rate", "std_rate", "trials", "failures"]

ProgressHook = Callable[[int], None]


class Scenario(str, Enum):
    P2P_MIMO = "p2p_mimo"
    MU_MISO = "mu_miso"


class Receiver(str, Enum):
    """How point-to-point designs are scored"""
    HYBRID = "hybrid"                # each design with its own hybrid combiner
    FULLY_DIGITAL = "fully_digital"  # transmit side only, optimal receiver


@dataclass(frozen=True)
class MethodFamily:
    name: str
    scenarios: Tuple[Scenario, ...]
    needs_bits: bool = False


_BOTH = (Scenario.P2P_MIMO, Scenario.MU_MISO)
_P2P = (Scenario.P2P_MIMO,)
_MISO = (Scenario.MU_MISO,)

METHOD_FAMILIES: Dict[str, MethodFamily] = {f.name: f for f in [
    MethodFamily("fd_optimal", _P2P),
    MethodFamily("fd_zf", _MISO),
    MethodFamily("hybrid_proposed", _BOTH),
    MethodFamily("hybrid_proposed_quantized", _BOTH, needs_bits=True),
    MethodFamily("hybrid_finite_res", _BOTH, needs_bits=True),
    MethodFamily("phase_match_zf", _MISO),
    MethodFamily("strongest_path_zf", _MISO),
    MethodFamily("phase_match_zf_quantized", _MISO, needs_bits=True),
    MethodFamily("strongest_path_zf_quantized", _MISO, needs_bits=True),
    MethodFamily("exact_realization_2ns", _BOTH),
    MethodFamily("exhaustive", _P2P, needs_bits=True),
]}

METHOD_PATTERN = re.compile(r"^(?P<family>[a-z0-9_]+?)(?:_b(?P<bits>\d+))?(?:_nrf(?P<nrf>\d+))?$")


@dataclass(frozen=True)
class MethodSpec:
    """A parsed method identifier"""
    name: str
    family: str
    bits: int = 0
    n_rf: Optional[int] = None

    def configure(self, cfg: SystemConfig, scenario: Scenario) -> SystemConfig:
        """System config as seen by this method"""
        changes: Dict[str, Any] = {"phase_bits": self.bits}
        if self.n_rf is not None:
            changes["n_rf_tx"] = self.n_rf
            if scenario is Scenario.P2P_MIMO:
                changes["n_rf_rx"] = self.n_rf
        return replace(cfg, **changes)


def parse_method(name: str, scenario: Scenario) -> MethodSpec:
    match = METHOD_PATTERN.match(name)
    if not match or match.group("family") not in METHOD_FAMILIES:
        raise ConfigError(f"unknown method '{name}'", "methods")
    family = METHOD_FAMILIES[match.group("family")]
    bits = int(match.group("bits")) if match.group("bits") else 0
    if family.needs_bits and bits < 1:
        raise ConfigError(f"method '{name}' needs a _b<bits> suffix with bits >= 1", "methods")
    if not family.needs_bits and match.group("bits"):
        raise ConfigError(f"method '{name}' takes no phase resolution", "methods")
    if scenario not in family.scenarios:
        raise ConfigError(f"method '{name}' is not available for {scenario.value}", "methods")
    n_rf = int(match.group("nrf")) if match.group("nrf") else None
    return MethodSpec(name, family.name, bits, n_rf)


@dataclass(frozen=True)
class SweepSpec:
    """One experiment: scenario, system, SNR grid, methods and trial count"""
    scenario: Scenario
    cfg: SystemConfig
    snr_grid_db: Tuple[float, ...]
    methods: Tuple[str, ...]
    trials: int = 100
    master_seed: int = 0
    channel_source: str = GENERATED
    receiver: Receiver = Receiver.HYBRID

    @property
    def method_specs(self) -> List[MethodSpec]:
        return [parse_method(m, self.scenario) for m in self.methods]

    def to_dict(self) -> Dict[str, Any]:
        cfg = self.cfg
        return {
            "scenario": self.scenario.value,
            "system": {
                "n_bs_antennas": cfg.n_bs_antennas,
                "n_user_antennas": cfg.n_user_antennas,
                "n_users": cfg.n_users,
                "streams_per_user": cfg.streams_per_user,
                "n_rf_tx": cfg.n_rf_tx,
                "n_rf_rx": cfg.n_rf_rx,
                "weights": list(cfg.weights),
                "phase_bits": cfg.phase_bits,
                "n_paths": cfg.n_paths,
                "spacing_over_wavelength": cfg.spacing_over_wavelength,
            },
            "snr_grid_db": list(self.snr_grid_db),
            "methods": list(self.methods),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "channel_source": self.channel_source,
            "receiver": self.receiver.value,
        }

    def to_json(self) -> str:
        """Canonical form: sorted keys, two-space indent"""
        return orjson.dumps(self.to_dict(), option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2).decode()

    @property
    def config_hash(self) -> str:
        canonical = orjson.dumps(self.to_dict(), option=orjson.OPT_SORT_KEYS)
        return hashlib.sha256(canonical).hexdigest()

    def with_seed(self, seed: int) -> "SweepSpec":
        if seed < 0:
            raise ConfigError("must be non-negative", "master_seed")
        return replace(self, master_seed=int(seed))


TOP_LEVEL_KEYS = {"scenario", "system", "snr_grid_db", "methods", "trials", "master_seed", "channel_source",
                  "receiver"}
SYSTEM_INT_KEYS = {"n_bs_antennas", "n_user_antennas", "n_users", "streams_per_user",
                   "n_rf_tx", "n_rf_rx", "phase_bits", "n_paths"}
SYSTEM_FLOAT_KEYS = {"spacing_over_wavelength"}


def _require_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", name)
    return value


def _require_number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", name)
    return float(value)


def _parse_snr_grid(raw: Any) -> Tuple[float, ...]:
    if isinstance(raw, dict):
        unknown = set(raw) - {"start", "stop", "step"}
        if unknown or len(raw) != 3:
            raise ConfigError("range form needs exactly start, stop and step", "snr_grid_db")
        start = _require_number(raw["start"], "snr_grid_db.start")
        stop = _require_number(raw["stop"], "snr_grid_db.stop")
        step = _require_number(raw["step"], "snr_grid_db.step")
        if step <= 0 or stop < start:
            raise ConfigError("need step > 0 and stop >= start", "snr_grid_db")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        grid = [round(start + k * step, 12) for k in range(count)]
    elif isinstance(raw, list):
        grid = [_require_number(v, "snr_grid_db") for v in raw]
    else:
        raise ConfigError("expected a list or a {start, stop, step} range", "snr_grid_db")
    if not grid:
        raise ConfigError("must not be empty", "snr_grid_db")
    return tuple(float(v) for v in grid)


def _parse_system(raw: Any, scenario: Scenario) -> SystemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", "system")
    unknown = set(raw) - SYSTEM_INT_KEYS - SYSTEM_FLOAT_KEYS - {"weights"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "system")
    if "n_bs_antennas" not in raw:
        raise ConfigError("is required", "system.n_bs_antennas")

    values: Dict[str, Any] = {}
    for key in SYSTEM_INT_KEYS & set(raw):
        values[key] = _require_int(raw[key], f"system.{key}")
    for key in SYSTEM_FLOAT_KEYS & set(raw):
        values[key] = _require_number(raw[key], f"system.{key}")
    if "weights" in raw:
        if not isinstance(raw["weights"], list):
            raise ConfigError("expected a list", "system.weights")
        values["weights"] = tuple(_require_number(w, "system.weights") for w in raw["weights"])

    if scenario is Scenario.P2P_MIMO:
        if values.get("n_users", 1) != 1:
            raise ConfigError("point-to-point links have exactly one user", "system.n_users")
    else:
        for key in ("n_user_antennas", "streams_per_user", "n_rf_rx"):
            if values.get(key, 1) != 1:
                raise ConfigError("MU-MISO users have a single antenna and stream", f"system.{key}")
        values.setdefault("n_rf_tx", values.get("n_users", 1) + 1)
    return SystemConfig(noise_power=NOISE_POWER, **values)


def parse_config(source: Union[str, Path], base_dir: Optional[Path] = None) -> SweepSpec:
    """Validated SweepSpec from a JSON file path or JSON text"""
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        path = Path(source)
        try:
            text = path.read_bytes()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        base_dir = base_dir or path.parent
    else:
        text = str(source).encode()

    try:
        raw = orjson.loads(text)
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"syntax error: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")

    try:
        scenario = Scenario(raw.get("scenario"))
    except ValueError:
        raise ConfigError(f"expected one of {[s.value for s in Scenario]}", "scenario") from None

    cfg = _parse_system(raw.get("system"), scenario)
    snr_grid = _parse_snr_grid(raw.get("snr_grid_db"))

    methods = raw.get("methods")
    if not isinstance(methods, list) or not methods or not all(isinstance(m, str) for m in methods):
        raise ConfigError("expected a nonempty list of method identifiers", "methods")
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate method identifiers", "methods")

    trials = _require_int(raw.get("trials", 100), "trials")
    if trials < 1:
        raise ConfigError("must be at least 1", "trials")
    master_seed = _require_int(raw.get("master_seed", 0), "master_seed")
    if master_seed < 0:
        raise ConfigError("must be non-negative", "master_seed")

    channel_source = raw.get("channel_source", GENERATED)
    if not isinstance(channel_source, str) or not channel_source:
        raise ConfigError("expected 'generate' or a dataset path", "channel_source")
    if channel_source != GENERATED and base_dir is not None and not Path(channel_source).is_absolute():
        channel_source = str((base_dir / channel_source).resolve())

    try:
        receiver = Receiver(raw.get("receiver", Receiver.HYBRID.value))
    except ValueError:
        raise ConfigError(f"expected one of {[r.value for r in Receiver]}", "receiver") from None
    if receiver is not Receiver.HYBRID and scenario is not Scenario.P2P_MIMO:
        raise ConfigError("only point-to-point links have a receiver choice", "receiver")

    spec = SweepSpec(scenario, cfg, snr_grid, tuple(methods), trials, master_seed, channel_source, receiver)
    for method in spec.method_specs:
        method.configure(cfg, scenario)  # validates RF-chain overrides
    return spec


def child_seed(master_seed: int, trial: int) -> int:
    """Independent per-trial seed"""
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1, np.uint64)[0])


def _p2p_rate(family: str, h, cfg: SystemConfig, exhaustive_limit: int, receiver: Receiver) -> float:
    if family == "fd_optimal":
        return mimo_design.fd_p2p_baseline(h, cfg.power, cfg.noise_power, cfg.streams_per_user).rate
    if family == "exact_realization_2ns":
        fd = mimo_design.fd_p2p_baseline(h, cfg.power, cfg.noise_power, cfg.streams_per_user)
        if cfg.power == 0:
            return 0.0
        return rate_general([h], realize_fully_digital(fd.precoder), None, cfg.noise_power)[1]

    if family in ("hybrid_proposed", "hybrid_finite_res"):
        report = mimo_design.design_hybrid_mimo(h, cfg)
    elif family == "hybrid_proposed_quantized":
        report = mimo_design.design_quantized_after(h, cfg)
    elif family == "exhaustive":
        report = mimo_design.exhaustive_rf_search(h, cfg, exhaustive_limit)
        if receiver is Receiver.HYBRID:
            report = mimo_design.with_hybrid_combiner(h, report, cfg)
    else:
        raise ConfigError(f"method '{family}' is not available for p2p_mimo", "methods")

    if receiver is Receiver.FULLY_DIGITAL:
        return mimo_design.transmit_side_rate(h, report.precoder, cfg.noise_power)
    return report.weighted_sum_rate


def evaluate_method(method: MethodSpec, scenario: Scenario, realization: ChannelRealization,
                    cfg: SystemConfig, exhaustive_limit: int = 16,
                    receiver: Receiver = Receiver.HYBRID) -> float:
    """Weighted sum rate of one method on one channel realization"""
    cfg = method.configure(cfg, scenario)
    family = method.family
    if scenario is Scenario.P2P_MIMO:
        return _p2p_rate(family, realization.matrices[0], cfg, exhaustive_limit, receiver)

    h = realization.stacked_rows()
    if family == "fd_zf":
        return miso_design.fd_zf_baseline(h, cfg.weights, cfg.noise_power, cfg.power).rate
    if family in ("hybrid_proposed", "hybrid_finite_res"):
        return miso_design.design_hybrid_miso(h, cfg).weighted_sum_rate
    if family == "hybrid_proposed_quantized":
        return miso_design.design_quantized_after(h, cfg).weighted_sum_rate
    if family.startswith("phase_match_zf") or family.startswith("strongest_path_zf"):
        if family.startswith("phase_match_zf"):
            v_rf = miso_design.rf_channel_phase_match(h)
        else:
            geom = ArrayGeometry(cfg.n_bs_antennas, cfg.spacing_over_wavelength)
            v_rf = miso_design.rf_strongest_path([u.paths for u in realization.per_user], geom)
        if family.endswith("_quantized"):
            v_rf = quantize_beamformer(v_rf, cfg.phase_set)
        return miso_design.zf_with_rf(h, v_rf, cfg, method.name).weighted_sum_rate
    if family == "exact_realization_2ns":
        fd = miso_design.fd_zf_baseline(h, cfg.weights, cfg.noise_power, cfg.power)
        if cfg.power == 0:
            return 0.0
        return rate_miso(h, realize_fully_digital(fd.precoder), cfg.noise_power, cfg.weights)[1]
    raise ConfigError(f"method '{method.name}' is not available for {scenario.value}", "methods")


@dataclass
class TrialOutcome:
    """Rates of one trial, NaN where a design failed"""
    index: int
    seed: int
    rates: np.ndarray  # (snr, method)
    errors: List[str] = field(default_factory=list)


def run_trial(spec: SweepSpec, index: int, realization: Optional[ChannelRealization] = None,
              exhaustive_limit: int = 16) -> TrialOutcome:
    seed = child_seed(spec.master_seed, index)
    if realization is None:
        realization = draw_channel(spec.cfg, seed)
    elif realization.shape != (spec.cfg.n_user_antennas, spec.cfg.n_bs_antennas) or \
            len(realization.per_user) != spec.cfg.n_users:
        raise DatasetFormatError(f"dataset realization {index} does not match the system dimensions")

    methods = spec.method_specs
    rates = np.full((len(spec.snr_grid_db), len(methods)), np.nan)
    errors = []
    for s, snr_db in enumerate(spec.snr_grid_db):
        cfg = spec.cfg.with_power(NOISE_POWER * 10.0 ** (snr_db / 10.0))
        for m, method in enumerate(methods):
            try:
                rates[s, m] = evaluate_method(method, spec.scenario, realization, cfg, exhaustive_limit,
                                               spec.receiver)
            except (HybridBeamformingError, np.linalg.LinAlgError) as e:
                errors.append(f"trial {index}, {snr_db:g} dB, {method.name}: {e}")
    return TrialOutcome(index, seed, rates, errors)


def _run_trial_job(args) -> TrialOutcome:
    return run_trial(*args)


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    master_seed: int
    version: str


@dataclass
class SweepResult:
    """One row per (snr, method) plus where the numbers came from"""
    table: pd.DataFrame
    provenance: Provenance
    duration_seconds: float = 0.0

    def curve(self, method: str) -> pd.Series:
        rows = self.table[self.table["method"] == method]
        return pd.Series(rows["mean_rate"].to_numpy(), index=rows["snr_db"].to_numpy(), name=method)

    @property
    def methods(self) -> List[str]:
        return list(dict.fromkeys(self.table["method"]))


def _load_realizations(spec: SweepSpec) -> Optional[List[ChannelRealization]]:
    if spec.channel_source == GENERATED:
        return None
    realizations = load_dataset(spec.channel_source)
    if len(realizations) < spec.trials:
        raise DatasetFormatError(
            f"dataset holds {len(realizations)} realizations, sweep needs {spec.trials}")
    return realizations[:spec.trials]


def aggregate(spec: SweepSpec, outcomes: Sequence[TrialOutcome], tolerance: float) -> pd.DataFrame:
    """Mean and std per (snr, method) over successful trials, in trial order"""
    ordered = sorted(outcomes, key=lambda o: o.index)
    rates = np.stack([o.rates for o in ordered])  # (trial, snr, method)
    failures = np.isnan(rates).sum(axis=0)
    worst = failures.max() / spec.trials
    if worst > tolerance:
        s, m = np.unravel_index(int(np.argmax(failures)), failures.shape)
        raise SweepAbortedError(
            f"{int(failures[s, m])}/{spec.trials} trials failed for {spec.methods[m]} "
            f"at {spec.snr_grid_db[s]:g} dB (tolerance {tolerance:.2%})")

    rows = []
    for s, snr_db in enumerate(spec.snr_grid_db):
        for m, method in enumerate(spec.methods):
            column = rates[:, s, m]
            rows.append({
                "snr_db": snr_db,
                "method": method,
                "mean_rate": float(np.nanmean(column)),
                "std_rate": float(np.nanstd(column)),
                "trials": spec.trials,
                "failures": int(failures[s, m]),
            })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def run_sweep(spec: SweepSpec, settings: Optional[Settings] = None, jobs: Optional[int] = None,
              on_trial: Optional[ProgressHook] = None) -> SweepResult:
    """Run every trial of a sweep and aggregate per (snr, method).

    Results do not depend on `jobs`: each trial owns its seed and outcomes
    are merged in trial order.
    """
    settings = settings or load_settings()
    jobs = jobs or settings.default_jobs
    started = time.time()
    realizations = _load_realizations(spec)
    logger.info(f"🚀 Sweep {spec.scenario.value}: {spec.trials} trials x {len(spec.snr_grid_db)} SNRs "
                f"x {len(spec.methods)} methods ({jobs} job{'s' if jobs > 1 else ''})")

    job_args = [
        (spec, t, realizations[t] if realizations is not None else None, settings.exhaustive_limit)
        for t in range(spec.trials)
    ]
    outcomes: List[TrialOutcome] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for outcome in pool.map(_run_trial_job, job_args):
                outcomes.append(outcome)
                if on_trial:
                    on_trial(outcome.index)
    else:
        for args in job_args:
            outcomes.append(_run_trial_job(args))
            if on_trial:
                on_trial(args[1])

    for outcome in outcomes:
        for message in outcome.errors:
            logger.warning(f"⚠️ Design failed, {message}")

    table = aggregate(spec, outcomes, settings.failure_tolerance)
    duration = time.time() - started
    logger.info(f"✅ Sweep finished in {duration:.1f}s")
    provenance = Provenance(spec.config_hash, spec.master_seed, __version__)
    return SweepResult(table, provenance, duration)


def generate_dataset(spec: SweepSpec) -> List[ChannelRealization]:
    """The realizations a generated sweep would draw, one per trial"""
    return [draw_channel(spec.cfg, child_seed(spec.master_seed, t)) for t in range(spec.trials)]
