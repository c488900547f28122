#!/usr/bin/env python3
"""
Sweep Result Export
===================
Writes sweep tables as CSV (with provenance comment lines) and renders
single-panel SVG line charts, one series per method.
"""

import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import DatasetFormatError  # noqa: E402
from .sweep import RESULT_COLUMNS, Provenance, SweepResult  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6g"
SVG_HASH_SALT = "hybrid-beamforming"
MARKERS = ["o", "s", "^", "v", "D", "x", "+", "*", "<", ">", "p"]


def write_csv(result: SweepResult, path: Union[str, Path]) -> Path:
    """CSV with `# key=value` provenance lines ahead of the header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    prov = result.provenance
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={prov.config_hash}\n")
        f.write(f"# master_seed={prov.master_seed}\n")
        f.write(f"# version={prov.version}\n")
        result.table[RESULT_COLUMNS].to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"💾 Wrote {len(result.table)} rows to {path}")
    return path


def read_csv(path: Union[str, Path]) -> SweepResult:
    """Inverse of write_csv"""
    path = Path(path)
    meta = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value

    table = pd.read_csv(path, comment="#")
    if list(table.columns) != RESULT_COLUMNS:
        raise DatasetFormatError(f"{path} has columns {list(table.columns)}, expected {RESULT_COLUMNS}")
    provenance = Provenance(
        config_hash=meta.get("config_hash", ""),
        master_seed=int(meta.get("master_seed", 0)),
        version=meta.get("version", ""),
    )
    return SweepResult(table, provenance)


def render_chart(result: SweepResult, path: Union[str, Path], title: str = "") -> Path:
    """Spectral efficiency versus SNR, one line per method, as SVG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    # fixed salt and no date keep the SVG byte-stable across runs
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 5))
        try:
            for k, method in enumerate(result.methods):
                curve = result.curve(method)
                (line,) = ax.plot(curve.index, curve.to_numpy(), marker=MARKERS[k % len(MARKERS)],
                                  label=method)
                line.set_gid(f"series-{method}")
            ax.set_xlabel("SNR (dB)")
            ax.set_ylabel("Spectral efficiency (bps/Hz)")
            if title:
                ax.set_title(title)
            ax.grid(True, alpha=0.3)
            ax.legend(loc="upper left")
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)

    logger.info(f"📈 Rendered chart with {len(result.methods)} series to {path}")
    return path
