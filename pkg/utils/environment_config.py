#!/usr/bin/env python3
"""
Environment Configuration

Default locations for a quality-control installation, read from the
process environment (and an optional `.env` file at the project root):

    TPAWS_CONFIG        run configuration used when --config is omitted
    TPAWS_MODEL_STORE   root of the model store      (qc_data/models)
    TPAWS_OUTPUT_DIR    reports and run logs         (qc_data/outputs)
    TPAWS_LOG_DIR       per-run debug logs           (qc_data/logs)

Values set in a run configuration file always win over these defaults.
"""

import os
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

logger = logging.getLogger(__name__)

DATA_DIR = "qc_data"
PROJECT_MARKERS = (".git", "pyproject.toml")


@dataclass(frozen=True)
class EnvironmentConfig:
    """Installation-wide default paths"""
    config_path: Optional[Path]
    model_store: Path
    output_dir: Path
    log_dir: Path

    @classmethod
    def from_environ(cls, environ: Mapping[str, str], data_root: Path) -> "EnvironmentConfig":
        """Defaults under data_root, overridden by the TPAWS_* variables that are set and non-empty."""
        def path(name: str, default: Path) -> Path:
            value = environ.get(name, "").strip()
            return Path(value).expanduser() if value else default

        config = environ.get("TPAWS_CONFIG", "").strip()
        return cls(
            config_path=Path(config).expanduser() if config else None,
            model_store=path("TPAWS_MODEL_STORE", data_root / "models"),
            output_dir=path("TPAWS_OUTPUT_DIR", data_root / "outputs"),
            log_dir=path("TPAWS_LOG_DIR", data_root / "logs"),
        )


def find_project_root(start: Optional[Path] = None) -> Path:
    """Nearest directory at or above start holding a project marker; start itself otherwise."""
    start = Path(start or Path.cwd())
    for candidate in (start, *start.parents):
        if any((candidate / marker).exists() for marker in PROJECT_MARKERS):
            return candidate
    return start


def get_env_config(project_root: Optional[Path] = None, load_dotenv: bool = True) -> EnvironmentConfig:
    """
    Read the environment defaults.

    Args:
        project_root: Directory holding `.env` and the default data
            directory (detected from the working directory if omitted)
        load_dotenv: Load `<project_root>/.env` first when python-dotenv
            is installed; variables already set are not overridden
    """
    root = Path(project_root) if project_root else find_project_root()
    if load_dotenv and (root / ".env").exists():
        try:
            from dotenv import load_dotenv as load_env_file
        except ImportError:
            logger.debug("python-dotenv not installed, ignoring .env")
        else:
            load_env_file(root / ".env", override=False)
            logger.info(f"Loaded environment from {root / '.env'}")

    env = EnvironmentConfig.from_environ(os.environ, root / DATA_DIR)
    logger.debug(f"Environment defaults: config={env.config_path}, models={env.model_store}, "
                 f"outputs={env.output_dir}, logs={env.log_dir}")
    return env


_ENV_CONFIG: Optional[EnvironmentConfig] = None


def get_or_create_env_config() -> EnvironmentConfig:
    """Process-wide defaults, read once."""
    global _ENV_CONFIG
    if _ENV_CONFIG is None:
        _ENV_CONFIG = get_env_config()
    return _ENV_CONFIG


def reset_env_config() -> None:
    global _ENV_CONFIG
    _ENV_CONFIG = None
