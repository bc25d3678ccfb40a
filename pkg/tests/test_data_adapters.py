from datetime import date

import httpx
import pytest

from contracts import ParseError
from utils import data_adapters
from utils.data_adapters import HttpMirrorAdapter, LocalDirectoryAdapter, TransientHTTPError, merge_csv_files

WINDOW = (date(2019, 6, 1), date(2020, 3, 1))


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


# =============================================================================
# LOCAL
# =============================================================================

def test_local_yearly_files_follow_the_window(tmp_path):
    for year in (2018, 2019, 2020, 2021):
        _write(tmp_path / "official_daily" / f"{year}.csv", "station_id,date,value\n")
    _write(tmp_path / "official_daily" / "notes.txt", "ignored")
    files = LocalDirectoryAdapter(tmp_path).fetch("official_daily", WINDOW)
    assert [p.name for p in files] == ["2019.csv", "2020.csv"]


def test_local_single_file_source(tmp_path):
    _write(tmp_path / "era" / "era_windgust.grid", "product = ERA\n")
    assert [p.name for p in LocalDirectoryAdapter(tmp_path).fetch("era", WINDOW)] == ["era_windgust.grid"]


def test_local_source_without_files(tmp_path):
    _write(tmp_path / "official_daily" / "2015.csv", "station_id,date,value\n")
    with pytest.raises(ParseError):
        LocalDirectoryAdapter(tmp_path).fetch("official_daily", WINDOW)
    with pytest.raises(ParseError):
        LocalDirectoryAdapter(tmp_path).fetch("absent", WINDOW)


# =============================================================================
# HTTP MIRROR
# =============================================================================

@pytest.fixture
def no_retry_wait(monkeypatch):
    monkeypatch.setattr(data_adapters.get_text.retry, "sleep", lambda seconds: None)


def _fake_get(responses, calls):
    def fake_get(url, timeout=None, headers=None):
        calls.append(url)
        status, text = responses[url].pop(0) if isinstance(responses[url], list) else responses[url]
        return httpx.Response(status, text=text, request=httpx.Request("GET", url))
    return fake_get


def test_mirror_downloads_and_caches(tmp_path, monkeypatch, no_retry_wait):
    adapter = HttpMirrorAdapter("https://mirror.example/qc/", tmp_path / "cache")
    url_2019 = adapter.url_for("tpaws_daily", 2019)
    url_2020 = adapter.url_for("tpaws_daily", 2020)
    assert url_2019 == "https://mirror.example/qc/tpaws_daily/2019.csv"
    calls = []
    monkeypatch.setattr(data_adapters.httpx, "get", _fake_get({
        url_2019: (200, "station_id,date,value\nTP001,2019-06-01,30\n"),
        url_2020: (404, ""),
    }, calls))

    files = adapter.fetch("tpaws_daily", WINDOW)
    assert files == [tmp_path / "cache" / "tpaws_daily" / "2019.csv"]
    assert "TP001,2019-06-01,30" in files[0].read_text()

    again = adapter.fetch("tpaws_daily", WINDOW)
    assert again == files
    assert calls == [url_2019, url_2020, url_2020]


def test_server_errors_are_retried(tmp_path, monkeypatch, no_retry_wait):
    adapter = HttpMirrorAdapter("https://mirror.example", tmp_path)
    url = adapter.url_for("era", 2020)
    calls = []
    monkeypatch.setattr(data_adapters.httpx, "get", _fake_get({url: [(503, ""), (200, "product = ERA\n")]}, calls))
    assert data_adapters.get_text(url) == "product = ERA\n"
    assert calls == [url, url]


def test_persistent_server_error_is_raised(tmp_path, monkeypatch, no_retry_wait):
    calls = []
    url = "https://mirror.example/era/2020.csv"
    monkeypatch.setattr(data_adapters.httpx, "get", _fake_get({url: (500, "")}, calls))
    with pytest.raises(TransientHTTPError):
        data_adapters.get_text(url)
    assert len(calls) == 3


def test_mirror_without_any_file(tmp_path, monkeypatch, no_retry_wait):
    adapter = HttpMirrorAdapter("https://mirror.example", tmp_path)
    responses = {adapter.url_for("era", year): (404, "") for year in (2019, 2020)}
    monkeypatch.setattr(data_adapters.httpx, "get", _fake_get(responses, []))
    with pytest.raises(ParseError):
        adapter.fetch("era", WINDOW)


# =============================================================================
# MERGING
# =============================================================================

def test_merge_keeps_one_header_and_unit(tmp_path):
    first = _write(tmp_path / "2019.csv", "# unit: m/s\nstation_id,date,value\nTP001,2019-12-31,10\n")
    second = _write(tmp_path / "2020.csv", "# unit: m/s\nstation_id,date,value\nTP001,2020-01-01,11\n")
    merged = merge_csv_files([first, second], tmp_path / "out" / "tpaws.csv")
    assert merged.read_text().splitlines() == [
        "# unit: m/s", "station_id,date,value", "TP001,2019-12-31,10", "TP001,2020-01-01,11"]


def test_merge_rejects_different_units(tmp_path):
    first = _write(tmp_path / "2019.csv", "# unit: m/s\nstation_id,date,value\nTP001,2019-12-31,10\n")
    second = _write(tmp_path / "2020.csv", "# unit: km/h\nstation_id,date,value\nTP001,2020-01-01,40\n")
    with pytest.raises(ParseError):
        merge_csv_files([first, second], tmp_path / "tpaws.csv")
    with pytest.raises(ParseError):
        merge_csv_files([], tmp_path / "tpaws.csv")
