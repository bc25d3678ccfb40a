#!/usr/bin/env python3
"""
Run Configuration

Loads a flat `key = value` file (`#` comments) into a validated RunConfig.
Dotted keys fill maps:

    grid.ERA = data/era_windgust.grid
    transform.WindGust = LogSinh
    utc_offset.TP001 = 8

Unknown keys are rejected and every referenced input path must exist.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from contracts import ConfigError, GridProductKind
from processors.core import WeatherVariable
from processors.interfaces import TestId
from processors.quality_tests import DEFAULT_TESTS, CalibrationSettings
from processors.transform import DEFAULT_TRANSFORMS, TransformKind

logger = logging.getLogger(__name__)

PACKAGE_LOGGERS = ("processors", "utils", "cli", "workflows")
MAP_KEYS = ("grid", "transform", "utc_offset")
PATH_FIELDS = ("stations", "official_daily", "tpaws_daily", "tpaws_subdaily", "grid_subdaily", "nwp_forecasts",
               "partner_daily")


class RunConfig(BaseModel):
    """Validated run configuration"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Inputs
    stations: Path
    official_daily: Path
    tpaws_daily: Path
    grid: Dict[GridProductKind, Path] = Field(default_factory=dict)
    tpaws_subdaily: Optional[Path] = None
    grid_subdaily: Optional[Path] = None
    nwp_forecasts: Optional[Path] = None
    partner_daily: Optional[Path] = None
    variable: WeatherVariable = WeatherVariable.TMAX

    # Outputs
    model_store: Optional[Path] = None
    output_dir: Optional[Path] = None
    log_dir: Optional[Path] = None

    # Numerical settings
    radius_km: float = Field(200.0, gt=0)
    max_neighbors: int = Field(20, ge=1)
    cl_threshold: float = Field(0.05, gt=0, lt=1)
    cv_folds: int = Field(5, ge=2)
    n_lambdas: int = Field(30, ge=1)
    lambda_ratio: float = Field(1e-3, gt=0, lt=1)
    min_calibration_days: int = Field(365, ge=1)
    recommended_calibration_days: int = Field(730, ge=1)
    subdaily_samples: int = Field(10_000, ge=100)
    seed: int = 42
    enabled_tests: List[TestId] = Field(default_factory=lambda: list(DEFAULT_TESTS))
    transform: Dict[WeatherVariable, TransformKind] = Field(default_factory=dict)
    utc_offset_hours: float = Field(0.0, ge=-14, le=14)
    utc_offset: Dict[str, float] = Field(default_factory=dict)
    max_workers: int = Field(1, ge=1)

    @field_validator("enabled_tests", mode="before")
    @classmethod
    def _parse_tests(cls, value):
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        return [TestId.parse(v) if isinstance(v, str) else v for v in value]

    def offset_for(self, station_id: str) -> float:
        """Fixed UTC offset of a station in hours."""
        return self.utc_offset.get(station_id, self.utc_offset_hours)

    def input_paths(self) -> List[Tuple[str, Path]]:
        paths = [(name, getattr(self, name)) for name in PATH_FIELDS if getattr(self, name) is not None]
        paths.extend((f"grid.{product.value}", path) for product, path in sorted(
            self.grid.items(), key=lambda item: item[0].value))
        return paths

    def to_settings(self) -> CalibrationSettings:
        transforms = dict(DEFAULT_TRANSFORMS)
        transforms.update(self.transform)
        return CalibrationSettings(
            radius_km=self.radius_km,
            max_neighbors=self.max_neighbors,
            cv_folds=self.cv_folds,
            n_lambdas=self.n_lambdas,
            lambda_ratio=self.lambda_ratio,
            min_calibration_days=self.min_calibration_days,
            recommended_calibration_days=self.recommended_calibration_days,
            subdaily_samples=self.subdaily_samples,
            seed=self.seed,
            transforms=transforms,
        )


# =============================================================================
# LOADING
# =============================================================================

def parse_key_values(text: str, source: str = "<config>") -> Dict[str, object]:
    """
    Parse `key = value` lines; dotted keys become nested maps.

    Raises:
        ConfigError: Malformed lines or repeated keys
    """
    raw: Dict[str, object] = {}
    problems = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            problems.append(f"line {number}: expected key = value")
            continue
        prefix, dot, name = key.partition(".")
        if dot:
            if prefix not in MAP_KEYS:
                problems.append(f"line {number}: unknown map key {prefix!r}")
                continue
            target = raw.setdefault(prefix, {})
            if name in target:
                problems.append(f"line {number}: repeated key {key!r}")
            target[name] = value
        elif key in raw:
            problems.append(f"line {number}: repeated key {key!r}")
        else:
            raw[key] = value
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems), context={"source": source, "problems": problems})
    return raw


def _resolve(raw: Dict[str, object], base: Path) -> Dict[str, object]:
    """Relative paths are taken relative to the config file's directory."""
    resolved = dict(raw)
    for name in PATH_FIELDS + ("model_store", "output_dir", "log_dir"):
        if name in resolved and resolved[name]:
            path = Path(str(resolved[name]))
            resolved[name] = path if path.is_absolute() else base / path
    if "grid" in resolved:
        resolved["grid"] = {k: (Path(v) if Path(v).is_absolute() else base / v) for k, v in resolved["grid"].items()}
    return resolved


def load_run_config(path: Path) -> RunConfig:
    """
    Load and validate a run configuration file.

    Raises:
        ConfigError: Missing file, unknown keys, invalid values, or
            referenced input paths that do not exist
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}", context={"path": str(path)})
    with open(path, 'r', encoding='utf-8') as f:
        raw = parse_key_values(f.read(), str(path))

    try:
        config = RunConfig.model_validate(_resolve(raw, path.parent))
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"{path}: invalid configuration: {e}", context={"path": str(path)}) from e

    missing = [f"{name}={p}" for name, p in config.input_paths() if not Path(p).exists()]
    if missing:
        raise ConfigError(
            f"{path}: referenced paths do not exist: {', '.join(missing)}",
            context={"path": str(path), "missing": missing}
        )
    logger.info(f"Loaded run configuration from {path} ({config.variable.value}, {len(config.enabled_tests)} tests)")
    return config


# =============================================================================
# LOGGING
# =============================================================================

def setup_logging(
    log_dir: Optional[Path],
    run_name: str,
    verbose: bool = False
) -> logging.Logger:
    """
    Setup logging for one run.

    Console output at INFO, full DEBUG detail in `<log_dir>/<run_name>.log`.
    The handlers are attached to the run logger and to the package loggers
    so library messages land in the same file.

    Args:
        log_dir: Directory for the log file (None for console only)
        run_name: Name of the run, e.g. "assess_2020-01-15"
        verbose: Show DEBUG on the console too

    Returns:
        Configured run logger
    """
    run_logger = logging.getLogger(f"tpaws_qc.{run_name}")
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(formatter)
    handlers: List[logging.Handler] = [console_handler]

    # File handler
    log_path = None
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"{run_name}.log"
        file_handler = logging.FileHandler(log_path, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    for name in (run_logger.name,) + PACKAGE_LOGGERS:
        target = logging.getLogger(name)
        target.setLevel(logging.DEBUG)
        # Remove existing handlers
        target.handlers.clear()
        target.propagate = False
        for handler in handlers:
            target.addHandler(handler)

    run_logger.info(f"Logging initialized for {run_name}")
    if log_path is not None:
        run_logger.info(f"Log file: {log_path}")
    return run_logger
