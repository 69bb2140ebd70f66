"""On-disk cache of area return tables.

File layout (all little-endian)::

    magic     8s   b"IPDSAWT\\0"
    version   u16
    flags     u16  bit 0: excursion table, bit 1: diagonal cut present
    beta      u64  IEEE-754 bits of beta
    n_max     u64
    k_max     u64
    x_cap     u64
    diag      u64  (0 when absent)
    trunc     f64  truncation loss recorded at build time
    digest    32s  sha256 of the payload
    payload        log_ret (n_max+1, k_max+1) then log_mass (n_max+1), float64

The file name carries a hash of the header fields, so a table whose header
was edited (for instance a perturbed beta) no longer matches its own name and
is rejected on load.  Readers take a shared flock, writers an exclusive one
and publish through an atomic rename.
"""
from __future__ import annotations

import contextlib
import fcntl
import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .areadp import AreaTable, build_area_table, default_x_cap
from .law import WalkLaw

MAGIC = b"IPDSAWT\0"
VERSION = 1
FLAG_POSITIVE = 1
FLAG_DIAG = 2
_HEADER = struct.Struct("<8sHHQQQQQd32s")
_LE_F8 = np.dtype("<f8")


class CacheIntegrityError(RuntimeError):
    """A cached table does not match its key or its payload digest."""


def _beta_bits(beta: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(beta)))[0]


def _bits_beta(bits: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


def table_key(beta: float, n_max: int, k_max: int, positive: bool, x_cap: int, diag: int | None) -> str:
    flags = (FLAG_POSITIVE if positive else 0) | (FLAG_DIAG if diag is not None else 0)
    raw = struct.pack("<HHQQQQQ", VERSION, flags, _beta_bits(beta), n_max, k_max, x_cap, diag or 0)
    return hashlib.sha256(raw).hexdigest()[:24]


def default_cache_dir(explicit=None) -> Path | None:
    if explicit:
        return Path(explicit)
    env = os.environ.get("IPDSAW_CACHE")
    return Path(env) if env else None


@contextlib.contextmanager
def _locked(path: Path, exclusive: bool):
    lock_path = path.with_suffix(path.suffix + ".lock")
    with open(lock_path, "a+b") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
        try:
            yield
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def encode_table(tab: AreaTable) -> bytes:
    payload = (np.ascontiguousarray(tab.log_ret, dtype=_LE_F8).tobytes()
               + np.ascontiguousarray(tab.log_mass, dtype=_LE_F8).tobytes())
    flags = (FLAG_POSITIVE if tab.positive else 0) | (FLAG_DIAG if tab.diag is not None else 0)
    head = _HEADER.pack(MAGIC, VERSION, flags, _beta_bits(tab.law.beta), tab.n_max, tab.k_max,
                        tab.x_cap, tab.diag or 0, float(tab.truncation),
                        hashlib.sha256(payload).digest())
    return head + payload


def decode_table(blob: bytes, expected_key: str | None = None) -> AreaTable:
    if len(blob) < _HEADER.size:
        raise CacheIntegrityError("file shorter than the header")
    magic, version, flags, bbits, n_max, k_max, x_cap, diag, trunc, digest = _HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION:
        raise CacheIntegrityError(f"bad magic/version {magic!r}/{version}")
    beta = _bits_beta(bbits)
    positive = bool(flags & FLAG_POSITIVE)
    diag_v = diag if flags & FLAG_DIAG else None
    key = table_key(beta, n_max, k_max, positive, x_cap, diag_v)
    if expected_key is not None and key != expected_key:
        raise CacheIntegrityError(f"header hashes to {key}, file is keyed {expected_key} "
                                  f"(beta in header = {beta!r})")
    payload = blob[_HEADER.size:]
    if hashlib.sha256(payload).digest() != digest:
        raise CacheIntegrityError("payload digest mismatch")
    n_ret = (n_max + 1) * (k_max + 1)
    if len(payload) != 8 * (n_ret + n_max + 1):
        raise CacheIntegrityError("payload size does not match the header")
    arr = np.frombuffer(payload, dtype=_LE_F8).astype(float)
    log_ret = arr[:n_ret].reshape(n_max + 1, k_max + 1)
    log_mass = arr[n_ret:]
    return AreaTable(WalkLaw(beta), n_max, k_max, positive, x_cap, diag_v, log_ret, log_mass, trunc)


class TableCache:
    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.dir / f"table-{key}.bin"

    def load(self, key: str) -> AreaTable | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        with _locked(path, exclusive=False):
            blob = path.read_bytes()
        return decode_table(blob, key)

    def store(self, tab: AreaTable) -> Path:
        key = table_key(tab.law.beta, tab.n_max, tab.k_max, tab.positive, tab.x_cap, tab.diag)
        path = self.path_for(key)
        blob = encode_table(tab)
        with _locked(path, exclusive=True):
            fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, path)
            except BaseException:
                with contextlib.suppress(FileNotFoundError):
                    os.unlink(tmp)
                raise
        return path

    def get_or_build(self, law: WalkLaw, n_max: int, k_max: int, positive: bool = False,
                     x_cap: int | None = None, diag: int | None = None) -> AreaTable:
        X = default_x_cap(k_max) if x_cap is None else int(min(x_cap, k_max))
        key = table_key(law.beta, n_max, k_max, positive, X, diag)
        tab = self.load(key)
        if tab is None:
            tab = build_area_table(law, n_max, k_max, positive=positive, x_cap=X, diag=diag)
            self.store(tab)
        return tab

    def verify_all(self) -> list:
        """(file name, error or None) for every cached table."""
        out = []
        for path in sorted(self.dir.glob("table-*.bin")):
            key = path.stem[len("table-"):]
            try:
                self.load(key)
            except CacheIntegrityError as exc:
                out.append((path.name, str(exc)))
            else:
                out.append((path.name, None))
        return out


def cached_partition_table(law: WalkLaw, L_max: int, positive: bool = False, cache_dir=None) -> AreaTable:
    """partition_table, read from / written to the cache when a directory is configured."""
    from .areadp import partition_table

    directory = default_cache_dir(cache_dir)
    if directory is None:
        return partition_table(law, L_max, positive=positive)
    return TableCache(directory).get_or_build(law, L_max + 1, max(L_max - 1, 0), positive,
                                              diag=L_max + 1)
