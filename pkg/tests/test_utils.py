import json
import sqlite3

import numpy as np
import pytest
from numpy.testing import assert_allclose

from config import SWEEP_CACHE_SUBDIR
from errors import ConfigError
from utils import (
    SweepCache, dumps_json, format_float, parallel_map, parse_grid, read_json_file, resolve_workers,
)


def test_parse_grid():
    assert_allclose(parse_grid("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
    assert_allclose(parse_grid("2.5"), [2.5])
    assert_allclose(parse_grid([1, 2, 3]), [1, 2, 3])
    assert_allclose(parse_grid("1:9:1"), [1])
    for bad in ("1:2", "a:b:3", "0:1:0"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_dumps_json_sorts_and_accepts_numpy():
    data = json.loads(dumps_json({"b": np.float64(1.5), "a": np.arange(3)}))
    assert data == {"a": [0, 1, 2], "b": 1.5}
    assert dumps_json({"b": 1, "a": 2}, indent=False) == b'{"a":2,"b":1}'


def test_format_float():
    assert format_float(100.0) == "100"
    assert format_float(0.1) == "0.1"


def test_read_json_file(tmp_path):
    good = tmp_path / "good.json"
    good.write_text('{"N": 3}')
    assert read_json_file(str(good)) == {"N": 3}
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        read_json_file(str(bad))
    with pytest.raises(ConfigError):
        read_json_file(str(tmp_path / "missing.json"))


def test_resolve_workers(monkeypatch):
    assert resolve_workers(3) == 3
    monkeypatch.setenv("ROTOMETRY_THREADS", "2")
    assert resolve_workers() == 2
    monkeypatch.setenv("ROTOMETRY_THREADS", "zero")
    with pytest.raises(ConfigError):
        resolve_workers()


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert parallel_map(lambda x: x * x, items, workers=4) == [x * x for x in items]


def test_sweep_cache_memory_and_disk(tmp_path):
    memory = SweepCache()
    memory.set(("k", 1), [1.0, 2.0])
    assert memory.get(("k", 1)) == [1.0, 2.0]
    assert memory.get("missing") is None

    disk = SweepCache(str(tmp_path / "cache"))
    disk.set(("k", 1), [3.0])
    disk.close()
    reopened = SweepCache(str(tmp_path / "cache"))
    assert reopened.get(("k", 1)) == [3.0]
    reopened.close()


class _BrokenStore:
    def get(self, key, default=None):
        raise sqlite3.DatabaseError("database disk image is malformed")

    def close(self):
        pass


def test_sweep_cache_recreation_keeps_user_files(tmp_path):
    keep = tmp_path / "results.csv"
    keep.write_text("param,E0\n")
    cache = SweepCache(str(tmp_path))
    assert cache.path == str(tmp_path / SWEEP_CACHE_SUBDIR)
    cache.set("a", 1)
    cache.store.close()
    cache.store = _BrokenStore()
    with pytest.warns(UserWarning):
        assert cache.get("a") is None
    assert keep.read_text() == "param,E0\n"
    cache.set("b", 2)
    assert cache.get("b") == 2
    cache.close()
