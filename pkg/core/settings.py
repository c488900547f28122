#!/usr/bin/env python3
"""
Runtime Settings
================
Process-level settings resolved from the environment (and an optional .env
file). Experiment parameters live in sweep config files, not here.
"""

import os
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Dict

from dotenv import load_dotenv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    """Resolved process settings"""
    log_dir: Path = Path("logs")
    log_level: str = "INFO"
    output_dir: Path = Path("results")
    default_jobs: int = 1
    failure_tolerance: float = 0.01  # fraction of trials allowed to fail per cell
    exhaustive_limit: int = 16  # largest N*N_RF accepted by the exhaustive search

    def as_dict(self) -> Dict[str, Any]:
        return {key: str(value) if isinstance(value, Path) else value
                for key, value in asdict(self).items()}


def load_settings(env_file: str = ".env") -> Settings:
    """Load settings from environment variables with documented defaults"""
    if Path(env_file).exists():
        load_dotenv(env_file)
        logger.debug(f"📄 Loaded environment from {env_file}")

    try:
        settings = Settings(
            log_dir=Path(os.getenv("HYBRID_BF_LOG_DIR", "logs")),
            log_level=os.getenv("HYBRID_BF_LOG_LEVEL", "INFO").upper(),
            output_dir=Path(os.getenv("HYBRID_BF_OUTPUT_DIR", "results")),
            default_jobs=int(os.getenv("HYBRID_BF_DEFAULT_JOBS", "1")),
            failure_tolerance=float(os.getenv("HYBRID_BF_FAILURE_TOLERANCE", "0.01")),
            exhaustive_limit=int(os.getenv("HYBRID_BF_EXHAUSTIVE_LIMIT", "16")),
        )
    except ValueError as e:
        logger.error(f"❌ Invalid numeric setting in environment: {e}")
        raise

    if settings.default_jobs < 1:
        raise ValueError("HYBRID_BF_DEFAULT_JOBS must be at least 1")
    return settings
