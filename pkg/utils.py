#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Utility functions for Rotometry.

Helpers shared by the library modules and the command line front end.

Key Features:
- The package-wide `rotometry` logger and a `log_time` milestone helper.
- orjson based (de)serialization with stable key order (`dumps_json`,
  `parse_json_content`, `read_json_file`).
- Grid parsing for the `start:stop:count` syntax used on the command line.
- Worker-count resolution from the ROTOMETRY_THREADS environment variable and
  an index-ordered `parallel_map`.
- A diskcache backed `SweepCache` that falls back to an in-memory dict when
  the SQLite store is unusable.
- tqdm progress bars written to stderr.
"""

import datetime
import logging
import os
import shutil
import sqlite3
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
import orjson as json_parser
from diskcache import Cache
from tqdm import tqdm

from config import FLOAT_FORMAT, SWEEP_CACHE_SUBDIR, THREADS_ENV_VAR
from errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

# initialize logging, default to STDERR and INFO level
logger = logging.getLogger("rotometry")
logger.setLevel(logging.INFO)
if not logger.handlers:
    logger.addHandler(logging.StreamHandler())

SQLITE_ERRORS = (sqlite3.OperationalError, sqlite3.DatabaseError, OSError)


def log_time(message):
    logger.info("--- [{}] {}".format(datetime.datetime.now().time(), message))


def set_verbosity(verbose: bool = False, quiet: bool = False):
    if verbose:
        logger.setLevel(logging.DEBUG)
    elif quiet:
        logger.setLevel(logging.WARNING)
    else:
        logger.setLevel(logging.INFO)


# --- JSON ---

def dumps_json(obj: Any, indent: bool = True) -> bytes:
    """Serializes with sorted keys; numpy scalars and arrays are accepted."""
    option = json_parser.OPT_SORT_KEYS | json_parser.OPT_SERIALIZE_NUMPY
    if indent:
        option |= json_parser.OPT_INDENT_2
    return json_parser.dumps(obj, option=option, default=_json_default)


def _json_default(obj):
    if isinstance(obj, complex) or isinstance(obj, np.complexfloating):
        return complex_pair(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def complex_pair(value) -> List[float]:
    value = complex(value)
    return [float(value.real), float(value.imag)]


def parse_json_content(content):
    return json_parser.loads(content)


def read_json_file(path: str) -> dict:
    try:
        with open(path, "rb") as f:
            data = parse_json_content(f.read())
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}", path=path)
    except json_parser.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}", path=path)
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object", path=path)
    return data


# --- Formatting ---

def format_float(value: float) -> str:
    # repr-free formatting keeps CSV output locale independent
    return format(float(value), FLOAT_FORMAT)


# --- Grids ---

def parse_grid(spec, name: str = "grid") -> np.ndarray:
    """Parses `start:stop:count` (inclusive endpoints) or a single number.

    Lists of numbers (from a JSON config) are accepted as explicit grids.
    """
    if isinstance(spec, (list, tuple)):
        try:
            return np.asarray([float(v) for v in spec], dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: grid list must contain numbers", value=str(spec))
    if isinstance(spec, (int, float)):
        return np.asarray([float(spec)])
    text = str(spec).strip()
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.asarray([float(parts[0])])
        if len(parts) != 3:
            raise ValueError
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"{name}: expected start:stop:count, got '{text}'", value=text)
    if count < 1:
        raise ConfigError(f"{name}: grid count must be >= 1, got {count}", value=text)
    if count == 1:
        return np.asarray([start])
    return np.linspace(start, stop, count)


# --- Concurrency ---

def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got '{raw}'")
        if value < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def progress(iterable: Iterable[T], total: Optional[int] = None, desc: str = "",
             enabled: bool = False) -> Iterable[T]:
    return tqdm(iterable, total=total, desc=desc, file=sys.stderr,
                disable=not enabled, leave=False)


def parallel_map(func: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None,
                 desc: str = "", show_progress: bool = False) -> List[R]:
    """Maps `func` over `items` and returns results in item order."""
    n_workers = min(resolve_workers(workers), max(1, len(items)))
    if n_workers == 1:
        return [func(item) for item in progress(items, len(items), desc, show_progress)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        # executor.map yields in submission order regardless of completion order
        return list(progress(pool.map(func, items), len(items), desc, show_progress))


# --- Sweep Cache ---

class SweepCache:
    """Key-value store for per-point sweep results.

    Backed by diskcache; any SQLite failure switches to an in-memory dict so
    that a broken cache directory never aborts a computation.
    """

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory
        self.path = os.path.join(directory, SWEEP_CACHE_SUBDIR) if directory else None
        self.store: Any = {}
        if directory:
            self._open()

    def _open(self):
        try:
            self.store = Cache(self.path)
            logger.debug("Using disk cache at %s", self.path)
        except SQLITE_ERRORS as e:
            self._fallback(e)

    def _fallback(self, original_error=None):
        if original_error:
            warnings.warn(f"Sweep cache error: {original_error}")
        if isinstance(self.store, dict):
            return
        try:
            # one attempt at recreating a corrupted store
            shutil.rmtree(self.path, ignore_errors=True)
            self.store = Cache(self.path)
            self.store["__write_check__"] = 1
            del self.store["__write_check__"]
            logger.info("Recreated sweep cache at %s", self.path)
        except SQLITE_ERRORS as e:
            warnings.warn(
                f"Unable to use disk cache at {self.path}, falling back to in-memory cache. Error: {e}"
            )
            self.store = {}

    def get(self, key, default=None):
        try:
            return self.store.get(key, default)
        except SQLITE_ERRORS as e:
            self._fallback(e)
            return self.store.get(key, default)

    def set(self, key, value):
        try:
            self.store[key] = value
        except SQLITE_ERRORS as e:
            self._fallback(e)
            self.store[key] = value

    def close(self):
        if isinstance(self.store, Cache):
            self.store.close()
