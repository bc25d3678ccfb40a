#!/usr/bin/env python3
"""
Model Store

One JSON record per (station, variable, test) under a root directory:

    <root>/<station_id>/<variable>/<test_slug>.json

Records carry a schema version and the calibration window next to the
serialized model. Writes go to a temporary file that is then renamed
over the record; records are canonical JSON so a load/save cycle is
byte-identical.
"""

import os
import logging
from pathlib import Path
from threading import Lock
from typing import Any, Dict, List, Tuple

from contracts import NotCalibratedError, VersionError
from processors.core import WeatherVariable
from processors.interfaces import TestId
from processors.quality_tests import model_from_dict
from utils import canonical_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ModelStore:
    """
    Filesystem store of calibrated models.

    Features:
    - Atomic whole-file writes (temp file + rename)
    - Schema version checked on every load
    - Canonical serialization (sorted keys, %.17g floats)
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self._file_lock = Lock()

    def record_path(self, station_id: str, variable: WeatherVariable, test_id: TestId) -> Path:
        return self.root / station_id / WeatherVariable(variable).value / f"{test_id.slug}.json"

    # =========================================================================
    # WRITE
    # =========================================================================

    def save(self, station_id: str, variable: WeatherVariable, test_id: TestId, model: Any) -> Path:
        """Write one model record atomically and return its path."""
        window = getattr(model, "calibration_window", None)
        record = {
            "schema_version": SCHEMA_VERSION,
            "station_id": station_id,
            "variable": WeatherVariable(variable).value,
            "test_id": str(test_id),
            "calibration_window": [d.isoformat() for d in window] if window else None,
            "model": model.to_dict(),
        }
        return self._write(self.record_path(station_id, variable, test_id), canonical_json.dumps(record))

    def save_all(self, variable: WeatherVariable, models: Dict[str, Dict[TestId, Any]]) -> List[Path]:
        """Save every model of a calibration run, in (station, test) order."""
        paths = []
        for station_id in sorted(models):
            for test_id in sorted(models[station_id], key=lambda t: t.sort_key):
                paths.append(self.save(station_id, variable, test_id, models[station_id][test_id]))
        logger.info(f"Saved {len(paths)} model records under {self.root}")
        return paths

    def _write(self, path: Path, text: str) -> Path:
        with self._file_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
            with open(tmp, 'w', encoding='utf-8') as f:
                f.write(text)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        return path

    # =========================================================================
    # READ
    # =========================================================================

    def load_record(self, station_id: str, variable: WeatherVariable, test_id: TestId) -> Dict[str, Any]:
        """
        Raw record of one model.

        Raises:
            NotCalibratedError: No record for (station, variable, test)
            VersionError: Record written with another schema version
        """
        path = self.record_path(station_id, variable, test_id)
        if not path.exists():
            raise NotCalibratedError(
                f"No calibrated {test_id} model for {station_id} {WeatherVariable(variable).value}",
                context={"path": str(path)}
            )
        with open(path, 'r', encoding='utf-8') as f:
            record = canonical_json.loads(f.read())
        version = record.get("schema_version")
        if version != SCHEMA_VERSION:
            raise VersionError(
                f"{path} has schema_version {version}, expected {SCHEMA_VERSION}",
                context={"path": str(path), "found": version, "expected": SCHEMA_VERSION}
            )
        return record

    def load(self, station_id: str, variable: WeatherVariable, test_id: TestId) -> Any:
        """Rebuild the stored model object."""
        return model_from_dict(self.load_record(station_id, variable, test_id)["model"])

    def load_station(
        self,
        station_id: str,
        variable: WeatherVariable,
        test_ids: List[TestId]
    ) -> Tuple[Dict[TestId, Any], List[Tuple[TestId, str]]]:
        """Models of one station; tests without a record are returned with the reason."""
        models: Dict[TestId, Any] = {}
        missing: List[Tuple[TestId, str]] = []
        for test_id in test_ids:
            try:
                models[test_id] = self.load(station_id, variable, test_id)
            except NotCalibratedError as e:
                missing.append((test_id, e.message))
        return models, missing

    def resave(self, station_id: str, variable: WeatherVariable, test_id: TestId) -> Path:
        """Load a record and write it back unchanged."""
        record = self.load_record(station_id, variable, test_id)
        return self._write(self.record_path(station_id, variable, test_id), canonical_json.dumps(record))

    def test_ids(self, station_id: str, variable: WeatherVariable) -> List[TestId]:
        """Tests with a stored record for (station, variable)."""
        directory = self.root / station_id / WeatherVariable(variable).value
        if not directory.exists():
            return []
        ids = []
        for path in sorted(directory.glob("*.json")):
            with open(path, 'r', encoding='utf-8') as f:
                ids.append(TestId.parse(canonical_json.loads(f.read())["test_id"]))
        return sorted(ids, key=lambda t: t.sort_key)
