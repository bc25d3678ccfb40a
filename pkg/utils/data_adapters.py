#!/usr/bin/env python3
"""
Data Source Adapters

An adapter turns a source name and a date window into local input files
in the formats utils.data_readers accepts. Two adapters ship:

- LocalDirectoryAdapter: files already on disk, `<root>/<source>/...`
- HttpMirrorAdapter: pre-formatted files downloaded from a mirror URL,
  `<base_url>/<source>/<YYYY>.<ext>`, one file per year in the window

Files are returned in a stable order (by name).
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from datetime import date
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import httpx
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from contracts import ParseError, QualityControlError

logger = logging.getLogger(__name__)

Window = Tuple[date, date]


class TransientHTTPError(QualityControlError):
    """Server-side or connection failure worth retrying"""
    default_code = "SOURCE_UNAVAILABLE"


class DataSourceAdapter(ABC):
    """Fetches the input files of one source for a date window"""

    @abstractmethod
    def fetch(self, source: str, window: Window) -> List[Path]:
        """
        Args:
            source: Source name, e.g. "official_daily" or "era"
            window: Inclusive (start, end) dates

        Returns:
            Local paths of the fetched files

        Raises:
            ParseError: The source has no files for the window
        """
        pass


def _years(window: Window) -> List[int]:
    start, end = window
    if end < start:
        raise ValueError(f"Window end {end} is before start {start}")
    return list(range(start.year, end.year + 1))


class LocalDirectoryAdapter(DataSourceAdapter):
    """
    Files under `<root>/<source>/`.

    A year-split source (`2019.csv`, `2020.csv`, ...) yields the years the
    window touches; any other layout yields every file of the source.
    """

    def __init__(self, root: Path, suffixes: Sequence[str] = (".csv", ".grid")):
        self.root = Path(root)
        self.suffixes = tuple(suffixes)

    def fetch(self, source: str, window: Window) -> List[Path]:
        directory = self.root / source
        if not directory.is_dir():
            raise ParseError(f"No directory for source {source!r} under {self.root}", context={"source": source})
        files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix in self.suffixes)
        yearly = [p for p in files if p.stem.isdigit()]
        if yearly:
            wanted = set(_years(window))
            files = [p for p in yearly if int(p.stem) in wanted]
        if not files:
            raise ParseError(f"Source {source!r} has no files for {window[0]}..{window[1]}", context={"source": source})
        logger.info(f"{source}: {len(files)} local file(s)")
        return files


@retry(
    reraise=True,
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.5, min=0.5, max=5),
    retry=retry_if_exception_type(TransientHTTPError),
)
def get_text(url: str, *, timeout: float = 15.0, headers: dict | None = None) -> Optional[str]:
    """Body of url, or None on 404."""
    try:
        r = httpx.get(url, timeout=timeout, headers=headers)
        if r.status_code >= 500:
            raise TransientHTTPError(
                f"Server error {r.status_code} for {url}", context={"url": url}, recoverable=True
            )
        if r.status_code == 404:
            return None
        r.raise_for_status()
        return r.text
    except (httpx.ConnectError, httpx.ReadTimeout) as e:
        raise TransientHTTPError(f"{url}: {e}", context={"url": url}, recoverable=True) from e
    except httpx.HTTPStatusError as e:
        raise ParseError(f"{url}: HTTP {e.response.status_code}", context={"url": url}) from e


class HttpMirrorAdapter(DataSourceAdapter):
    """
    Downloads yearly files from a mirror into a cache directory.

    Files already in the cache are not downloaded again.
    """

    def __init__(self, base_url: str, cache_dir: Path, extension: str = "csv", timeout: float = 15.0):
        self.base_url = base_url.rstrip("/")
        self.cache_dir = Path(cache_dir)
        self.extension = extension.lstrip(".")
        self.timeout = timeout

    def url_for(self, source: str, year: int) -> str:
        return f"{self.base_url}/{source}/{year}.{self.extension}"

    def fetch(self, source: str, window: Window) -> List[Path]:
        target_dir = self.cache_dir / source
        target_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for year in _years(window):
            path = target_dir / f"{year}.{self.extension}"
            if path.exists():
                files.append(path)
                continue
            url = self.url_for(source, year)
            text = get_text(url, timeout=self.timeout)
            if text is None:
                logger.warning(f"{source}: no file for {year} at {url}")
                continue
            tmp = path.with_suffix(path.suffix + ".part")
            tmp.write_text(text, encoding='utf-8')
            tmp.replace(path)
            logger.info(f"{source}: downloaded {url}")
            files.append(path)
        if not files:
            raise ParseError(f"Mirror has no {source!r} files for {window[0]}..{window[1]}", context={"source": source})
        return files


def merge_csv_files(paths: Sequence[Path], out_path: Path) -> Path:
    """
    Concatenate year-split CSV files into one reader input.

    Headers and unit declarations must agree across files; they are
    written once.

    Raises:
        ParseError: Files with different headers or units
    """
    header: Optional[str] = None
    unit: Optional[str] = None
    rows: List[str] = []
    for path in paths:
        lines = [ln for ln in Path(path).read_text(encoding='utf-8').splitlines() if ln.strip()]
        declared = [ln for ln in lines if ln.lstrip().startswith("#")]
        data = [ln for ln in lines if not ln.lstrip().startswith("#")]
        file_unit = declared[0].strip() if declared else None
        if not data:
            continue
        if header is None:
            header, unit = data[0].strip(), file_unit
        elif data[0].strip() != header or file_unit != unit:
            raise ParseError(f"{path}: header or unit differs from the first file", context={"path": str(path)})
        rows.extend(data[1:])
    if header is None:
        raise ParseError("No rows to merge", context={"paths": [str(p) for p in paths]})
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(([unit] if unit else []) + [header] + rows) + "\n", encoding='utf-8')
    return out_path
