#!/usr/bin/env python3
"""
Geometric Channel Model
=======================
Narrowband mmWave channels built from L propagation paths between a BS
uniform linear array and each user's uniform linear array:

    H_k = sqrt(N M / L) * sum_l alpha_l a_r(phi_r,l) a_t(phi_t,l)^H

plus a versioned binary dataset format for persisting realizations.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import orjson

from .errors import DatasetFormatError, DimensionError
from .hybrid_core import SystemConfig
from .numerics import ComplexMatrix, complex_gaussian

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"HBFCHAN\x00"
DATASET_VERSION = 1
UNSEEDED = -1


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array"""
    element_count: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.element_count < 1:
            raise DimensionError("array needs at least one element")
        if self.spacing_over_wavelength <= 0:
            raise DimensionError("element spacing must be positive")

    def response(self, phi: float) -> np.ndarray:
        return ula_response(self, phi)

    def responses(self, phis: np.ndarray) -> ComplexMatrix:
        """Steering vectors for several angles, one per column"""
        n = np.arange(self.element_count)[:, None]
        phase = 2 * np.pi * self.spacing_over_wavelength * n * np.sin(np.asarray(phis))[None, :]
        return np.exp(1j * phase) / np.sqrt(self.element_count)


@dataclass(frozen=True)
class PathSet:
    """Complex gains and angles of the L paths of one user"""
    gains: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray

    def __post_init__(self):
        lengths = {np.size(self.gains), np.size(self.aoa), np.size(self.aod)}
        if len(lengths) != 1 or 0 in lengths:
            raise DimensionError("path gains and angles must share a nonzero length")

    @property
    def count(self) -> int:
        return int(np.size(self.gains))

    @property
    def strongest(self) -> int:
        return int(np.argmax(np.abs(self.gains)))


@dataclass(frozen=True)
class UserChannel:
    matrix: ComplexMatrix  # M x N
    paths: PathSet


@dataclass(frozen=True)
class ChannelRealization:
    """Channels of every user for one Monte Carlo trial"""
    per_user: List[UserChannel]
    seed: int = UNSEEDED

    def __post_init__(self):
        if not self.per_user:
            raise DimensionError("a realization needs at least one user")
        shapes = {user.matrix.shape for user in self.per_user}
        if len(shapes) != 1:
            raise DimensionError(f"user channels differ in shape: {sorted(shapes)}")

    @property
    def matrices(self) -> List[ComplexMatrix]:
        return [user.matrix for user in self.per_user]

    @property
    def shape(self):
        return self.per_user[0].matrix.shape

    def stacked_rows(self) -> ComplexMatrix:
        """K x N matrix whose k-th row is h_k^H (single-antenna users)"""
        if self.shape[0] != 1:
            raise DimensionError("row stacking needs single-antenna users")
        return np.vstack([user.matrix for user in self.per_user])


def ula_response(geom: ArrayGeometry, phi: float) -> np.ndarray:
    """a(phi) with n-th entry exp(j 2pi (d/lambda) n sin(phi)) / sqrt(N)"""
    return geom.responses(np.array([phi]))[:, 0]


def assemble_channel(tx: ArrayGeometry, rx: ArrayGeometry, paths: PathSet) -> ComplexMatrix:
    scale = np.sqrt(tx.element_count * rx.element_count / paths.count)
    a_r = rx.responses(paths.aoa)
    a_t = tx.responses(paths.aod)
    return scale * (a_r * paths.gains[None, :]) @ a_t.conj().T


def draw_channel(cfg: SystemConfig, rng: Union[np.random.Generator, int]) -> ChannelRealization:
    """Draw one realization; passing an integer seed records it for regeneration"""
    seed = UNSEEDED
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)

    tx = ArrayGeometry(cfg.n_bs_antennas, cfg.spacing_over_wavelength)
    rx = ArrayGeometry(cfg.n_user_antennas, cfg.spacing_over_wavelength)
    users = []
    for _ in range(cfg.n_users):
        gains = complex_gaussian(rng, cfg.n_paths, 1)[:, 0]
        aoa = rng.uniform(0.0, 2 * np.pi, cfg.n_paths)
        aod = rng.uniform(0.0, 2 * np.pi, cfg.n_paths)
        paths = PathSet(gains, aoa, aod)
        users.append(UserChannel(assemble_channel(tx, rx, paths), paths))
    return ChannelRealization(users, seed)


def regenerate(realization: ChannelRealization, cfg: SystemConfig) -> ChannelRealization:
    """Redraw a realization from its recorded seed"""
    if realization.seed == UNSEEDED:
        raise DatasetFormatError("realization was drawn without a recorded seed")
    return draw_channel(cfg, realization.seed)


def _record_size(users: int, rows: int, cols: int, paths: int) -> int:
    # channel matrix + gains as complex128, two angle vectors as float64
    return users * (16 * rows * cols + 16 * paths + 16 * paths)


def save_dataset(path: Union[str, Path], realizations: Sequence[ChannelRealization]) -> Path:
    """Write realizations as a JSON header followed by little-endian float64 data"""
    if not realizations:
        raise DimensionError("cannot save an empty dataset")
    first = realizations[0]
    users = len(first.per_user)
    rows, cols = first.shape
    paths = first.per_user[0].paths.count
    for real in realizations:
        if len(real.per_user) != users or real.shape != (rows, cols) or \
                any(u.paths.count != paths for u in real.per_user):
            raise DimensionError("all realizations in a dataset must share dimensions")

    header = orjson.dumps({
        "version": DATASET_VERSION,
        "count": len(realizations),
        "users": users,
        "rows": rows,
        "cols": cols,
        "paths": paths,
        "seeds": [int(r.seed) for r in realizations],
    })

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for real in realizations:
            for user in real.per_user:
                f.write(np.ascontiguousarray(user.matrix, dtype="<c16").tobytes())
                f.write(np.ascontiguousarray(user.paths.gains, dtype="<c16").tobytes())
                f.write(np.ascontiguousarray(user.paths.aoa, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(user.paths.aod, dtype="<f8").tobytes())

    logger.info(f"💾 Saved {len(realizations)} channel realizations to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> List[ChannelRealization]:
    """Read a dataset written by save_dataset"""
    data = Path(path).read_bytes()
    prefix = len(DATASET_MAGIC) + 4
    if len(data) < prefix or data[:len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path} is not a channel dataset")
    (header_len,) = struct.unpack("<I", data[len(DATASET_MAGIC):prefix])
    try:
        header = orjson.loads(data[prefix:prefix + header_len])
    except orjson.JSONDecodeError as e:
        raise DatasetFormatError(f"corrupt dataset header: {e}") from e

    if not isinstance(header, dict):
        raise DatasetFormatError("dataset header is not an object")
    if header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {header.get('version')}")
    try:
        count, users = int(header["count"]), int(header["users"])
        rows, cols, paths = int(header["rows"]), int(header["cols"]), int(header["paths"])
        seeds = [int(s) for s in header["seeds"]]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"dataset header missing fields: {e}") from e

    body = data[prefix + header_len:]
    expected = count * _record_size(users, rows, cols, paths)
    if len(body) != expected or len(seeds) != count:
        raise DatasetFormatError(f"dataset body has {len(body)} bytes, expected {expected}")

    offset = 0

    def take(n: int, dtype: str) -> np.ndarray:
        nonlocal offset
        width = np.dtype(dtype).itemsize * n
        chunk = np.frombuffer(body, dtype=dtype, count=n, offset=offset)
        offset += width
        return chunk.astype(np.complex128 if dtype == "<c16" else np.float64)

    realizations = []
    for seed in seeds:
        per_user = []
        for _ in range(users):
            matrix = take(rows * cols, "<c16").reshape(rows, cols)
            gains = take(paths, "<c16")
            aoa = take(paths, "<f8")
            aod = take(paths, "<f8")
            per_user.append(UserChannel(matrix, PathSet(gains, aoa, aod)))
        realizations.append(ChannelRealization(per_user, seed))

    logger.info(f"📂 Loaded {count} channel realizations from {path}")
    return realizations
