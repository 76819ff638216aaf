"""Durable artifact store: write-ahead log, versioned records, spatial index.

Single-node durability model: every mutation is appended to a CRC-framed
WAL and fsynced before it is acknowledged; recovery replays the log and
discards a torn tail. A snapshot (same record encoding, plus a footer
with the max sequence) lets the WAL be truncated without a second
recovery code path: replay simply skips sequences the snapshot covers.
"""

from __future__ import annotations

import errno
import hashlib
import json
import os
import struct
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from zlib import crc32

import numpy as np

WAL_MAGIC = b"TFWAL001"
SNAP_MAGIC = b"TFSNAP01"
SNAP_FOOTER = b"TFSNAPFT"

_OP_PUT = 1
_OP_DELETE = 2

MAX_PAYLOAD = 16 * 1024 * 1024


class StoreError(Exception):
    pass


class NotFound(StoreError):
    pass


class CorruptRecord(StoreError):
    pass


class ChecksumMismatch(StoreError):
    pass


class StorageFull(StoreError):
    pass


class UnreadableLog(StoreError):
    pass


class InvalidRegion(StoreError):
    pass


class Kind(Enum):
    GEOMETRY = 1
    FRAME = 2
    DEFECT = 3
    TAG = 4
    METADATA = 5

    @property
    def wire_name(self):
        return self.name.lower()

    @staticmethod
    def from_name(name: str) -> "Kind":
        try:
            return Kind[name.upper()]
        except KeyError:
            raise StoreError(f"unknown record kind: {name}") from None


def content_hash(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()


def derive_id(*parts) -> bytes:
    """Deterministic 16-byte id from a tuple of identifying parts."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        if isinstance(part, bytes):
            h.update(part)
        else:
            h.update(str(part).encode())
        h.update(b"\x1f")
    return h.digest()


@dataclass(frozen=True)
class ArtifactRecord:
    id: bytes
    kind: Kind
    payload: bytes
    content_hash: bytes
    parent_id: bytes | None = None
    bounds: tuple | None = None       # ((minx,miny,minz), (maxx,maxy,maxz))
    created_at: int = 0               # microseconds since epoch
    version: int = 1

    def __post_init__(self):
        if len(self.id) != 16:
            raise StoreError("record id must be 16 bytes")
        if len(self.content_hash) != 32:
            raise StoreError("content hash must be 32 bytes")
        if self.parent_id is not None and len(self.parent_id) != 16:
            raise StoreError("parent id must be 16 bytes")
        if self.version < 1:
            raise StoreError("version must be >= 1")
        if self.bounds is not None:
            lo, hi = self.bounds
            if len(lo) != 3 or len(hi) != 3 or any(
                    a > b for a, b in zip(lo, hi)):
                raise StoreError("bounds min must be <= max componentwise")
            object.__setattr__(
                self, "bounds",
                (tuple(float(v) for v in lo), tuple(float(v) for v in hi)),
            )


def make_record(id: bytes, kind: Kind, payload: bytes, parent_id=None,
                bounds=None, created_at=None, version=1) -> ArtifactRecord:
    if created_at is None:
        created_at = time.time_ns() // 1000
    return ArtifactRecord(id, kind, payload, content_hash(payload),
                          parent_id, bounds, created_at, version)


def encode_record(rec: ArtifactRecord) -> bytes:
    flags = (1 if rec.parent_id else 0) | (2 if rec.bounds is not None else 0)
    parts = [rec.id, struct.pack(">BB", rec.kind.value, flags)]
    if rec.parent_id:
        parts.append(rec.parent_id)
    parts.append(rec.content_hash)
    parts.append(struct.pack(">QI", rec.created_at, rec.version))
    if rec.bounds is not None:
        parts.append(struct.pack(">6d", *rec.bounds[0], *rec.bounds[1]))
    parts.append(struct.pack(">I", len(rec.payload)))
    parts.append(rec.payload)
    return b"".join(parts)


def decode_record(data: bytes) -> ArtifactRecord:
    try:
        off = 0
        rid = data[off:off + 16]; off += 16
        kind_v, flags = struct.unpack_from(">BB", data, off); off += 2
        parent = None
        if flags & 1:
            parent = data[off:off + 16]; off += 16
        digest = data[off:off + 32]; off += 32
        created_at, version = struct.unpack_from(">QI", data, off); off += 12
        bounds = None
        if flags & 2:
            vals = struct.unpack_from(">6d", data, off); off += 48
            bounds = (vals[:3], vals[3:])
        (plen,) = struct.unpack_from(">I", data, off); off += 4
        payload = data[off:off + plen]; off += plen
        if off != len(data) or len(payload) != plen:
            raise StoreError("record body length mismatch")
        return ArtifactRecord(rid, Kind(kind_v), payload, digest, parent,
                              bounds, created_at, version)
    except (struct.error, ValueError, IndexError) as exc:
        raise StoreError(f"undecodable record: {exc}") from exc


class SpatialIndex:
    """Uniform grid over 3D space; each record sits in every overlapped cell."""

    def __init__(self, cell_size: float = 1.0):
        if cell_size <= 0:
            raise StoreError("cell_size must be positive")
        self.cell_size = cell_size
        self.cells: dict = {}

    def _cells_for(self, bounds):
        lo, hi = bounds
        c0 = [int(np.floor(v / self.cell_size)) for v in lo]
        c1 = [int(np.floor(v / self.cell_size)) for v in hi]
        for cx in range(c0[0], c1[0] + 1):
            for cy in range(c0[1], c1[1] + 1):
                for cz in range(c0[2], c1[2] + 1):
                    yield (cx, cy, cz)

    def insert(self, rid: bytes, bounds):
        for cell in self._cells_for(bounds):
            self.cells.setdefault(cell, set()).add(rid)

    def remove(self, rid: bytes, bounds):
        for cell in self._cells_for(bounds):
            members = self.cells.get(cell)
            if members is not None:
                members.discard(rid)
                if not members:
                    del self.cells[cell]

    def candidates(self, region):
        out = set()
        for cell in self._cells_for(region):
            out |= self.cells.get(cell, set())
        return out


def _boxes_overlap(a, b):
    return all(a[0][i] <= b[1][i] and b[0][i] <= a[1][i] for i in range(3))


def _read_exact(f, n):
    data = f.read(n)
    return data if len(data) == n else None


def replay_wal(path):
    """Replay a WAL file: (entries, max_sequence).

    Entries after the first CRC/framing failure are discarded (torn-write
    rule). A corrupt or missing header raises UnreadableLog.
    """
    path = Path(path)
    if not path.exists():
        raise UnreadableLog(f"no such log: {path}")
    entries = []
    max_seq = 0
    with open(path, "rb") as f:
        header = f.read(len(WAL_MAGIC))
        if header != WAL_MAGIC:
            raise UnreadableLog(f"bad WAL header in {path}")
        while True:
            head = _read_exact(f, 13)
            if head is None:
                break
            seq, op, length = struct.unpack(">QBI", head)
            body = _read_exact(f, length)
            if body is None:
                break
            crc_raw = _read_exact(f, 4)
            if crc_raw is None:
                break
            if crc32(head + body) != struct.unpack(">I", crc_raw)[0]:
                break
            if op not in (_OP_PUT, _OP_DELETE):
                break
            try:
                payload = decode_record(body) if op == _OP_PUT else body
            except StoreError:
                break
            entries.append((seq, op, payload))
            max_seq = max(max_seq, seq)
    return entries, max_seq


class Store:
    """Artifact table with WAL durability and grid-indexed region queries."""

    def __init__(self, directory, cell_size: float = 1.0):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.wal_path = self.dir / "store.wal"
        self.snap_path = self.dir / "store.snapshot"
        self._lock = threading.Lock()
        self._versions: dict = {}        # id -> tuple of ArtifactRecord
        self._sequences: dict = {}       # id -> sequence of latest put
        self._index = SpatialIndex(cell_size)
        self._next_seq = 1
        self._recover()
        self._wal_fd = os.open(
            self.wal_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644
        )

    # -- recovery ---------------------------------------------------------

    def _recover(self):
        snap_seq = 0
        if self.snap_path.exists():
            snap_seq = self._load_snapshot()
        if self.wal_path.exists():
            entries, max_seq = replay_wal(self.wal_path)
            for seq, op, payload in entries:
                if seq <= snap_seq:
                    continue
                if op == _OP_PUT:
                    self._apply_put(payload, seq)
                else:
                    self._apply_delete(payload)
            self._next_seq = max(max_seq, snap_seq) + 1
        else:
            with open(self.wal_path, "wb") as f:
                f.write(WAL_MAGIC)
                f.flush()
                os.fsync(f.fileno())
            self._next_seq = snap_seq + 1

    def _load_snapshot(self):
        data = self.snap_path.read_bytes()
        if not data.startswith(SNAP_MAGIC):
            raise UnreadableLog("bad snapshot header")
        off = len(SNAP_MAGIC)
        footer_at = len(data) - (len(SNAP_FOOTER) + 12)
        if footer_at < off or data[footer_at:footer_at + 8] != SNAP_FOOTER:
            raise UnreadableLog("bad snapshot footer")
        max_seq, crc_expected = struct.unpack_from(">QI", data, footer_at + 8)
        if crc32(data[:footer_at + 16]) != crc_expected:
            raise UnreadableLog("snapshot checksum mismatch")
        while off < footer_at:
            (length,) = struct.unpack_from(">I", data, off)
            off += 4
            rec = decode_record(data[off:off + length])
            off += length
            self._apply_put(rec, 0)
        return max_seq

    def _apply_put(self, rec: ArtifactRecord, seq: int):
        existing = self._versions.get(rec.id, ())
        if existing and existing[-1].bounds is not None:
            self._index.remove(rec.id, existing[-1].bounds)
        self._versions[rec.id] = existing + (rec,)
        if seq:
            self._sequences[rec.id] = seq
        if rec.bounds is not None:
            self._index.insert(rec.id, rec.bounds)

    def _apply_delete(self, rid: bytes):
        existing = self._versions.pop(rid, ())
        self._sequences.pop(rid, None)
        if existing and existing[-1].bounds is not None:
            self._index.remove(rid, existing[-1].bounds)

    # -- WAL --------------------------------------------------------------

    def _append_wal(self, op: int, body: bytes) -> int:
        seq = self._next_seq
        head = struct.pack(">QBI", seq, op, len(body))
        entry = head + body + struct.pack(">I", crc32(head + body))
        try:
            os.write(self._wal_fd, entry)
            os.fsync(self._wal_fd)
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(str(exc)) from exc
            raise
        self._next_seq += 1
        return seq

    # -- operations ---------------------------------------------------------

    def put(self, rec: ArtifactRecord):
        """Durably store a record; returns (id, version, sequence).

        Retransmissions (same id and same content hash as the current
        latest version) are deduplicated and acknowledged idempotently.
        """
        if len(rec.payload) > MAX_PAYLOAD:
            raise StoreError("payload exceeds maximum size")
        if content_hash(rec.payload) != rec.content_hash:
            raise ChecksumMismatch("declared content hash != payload digest")
        with self._lock:
            existing = self._versions.get(rec.id, ())
            if existing and existing[-1].content_hash == rec.content_hash:
                latest = existing[-1]
                return rec.id, latest.version, self._sequences.get(rec.id, 0)
            version = existing[-1].version + 1 if existing else 1
            rec = replace(rec, version=version)
            seq = self._append_wal(_OP_PUT, encode_record(rec))
            self._apply_put(rec, seq)
            return rec.id, version, seq

    def get(self, rid: bytes, version: int | None = None) -> ArtifactRecord:
        with self._lock:
            versions = self._versions.get(rid)
        if not versions:
            raise NotFound(rid.hex())
        if version is None:
            rec = versions[-1]
        else:
            matches = [r for r in versions if r.version == version]
            if not matches:
                raise NotFound(f"{rid.hex()} version {version}")
            rec = matches[0]
        if content_hash(rec.payload) != rec.content_hash:
            raise CorruptRecord(rid.hex())
        return rec

    def delete(self, rid: bytes):
        with self._lock:
            if rid not in self._versions:
                raise NotFound(rid.hex())
            self._append_wal(_OP_DELETE, rid)
            self._apply_delete(rid)

    def query(self, kind: Kind | None = None, time_range=None, region=None):
        """Latest versions matching every given filter, ordered by
        (created_at, id). At least one filter is required."""
        if kind is None and time_range is None and region is None:
            raise StoreError("query requires at least one filter")
        if region is not None:
            lo, hi = region
            if any(a > b for a, b in zip(lo, hi)):
                raise InvalidRegion(f"region min > max: {region}")
        with self._lock:
            if region is not None:
                ids = self._index.candidates(region)
                latest = [self._versions[i][-1] for i in ids
                          if i in self._versions]
            else:
                latest = [v[-1] for v in self._versions.values()]
        out = []
        for rec in latest:
            if kind is not None and rec.kind != kind:
                continue
            if time_range is not None and not (
                    time_range[0] <= rec.created_at <= time_range[1]):
                continue
            if region is not None and (
                    rec.bounds is None
                    or not _boxes_overlap(rec.bounds, region)):
                continue
            out.append(rec)
        out.sort(key=lambda r: (r.created_at, r.id))
        return out

    def ids(self):
        with self._lock:
            return list(self._versions.keys())

    # -- snapshot -----------------------------------------------------------

    def snapshot(self):
        """Write a snapshot atomically, then truncate the WAL."""
        with self._lock:
            records = [v[-1] for v in self._versions.values()]
            all_versions = [r for v in self._versions.values() for r in v]
            max_seq = self._next_seq - 1
            body = [SNAP_MAGIC]
            for rec in all_versions:
                enc = encode_record(rec)
                body.append(struct.pack(">I", len(enc)))
                body.append(enc)
            body.append(SNAP_FOOTER + struct.pack(">Q", max_seq))
            blob = b"".join(body)
            blob += struct.pack(">I", crc32(blob))
            tmp = self.snap_path.with_suffix(".tmp")
            with open(tmp, "wb") as f:
                f.write(blob)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.snap_path)
            dir_fd = os.open(self.dir, os.O_RDONLY)
            try:
                os.fsync(dir_fd)
            finally:
                os.close(dir_fd)
            os.close(self._wal_fd)
            with open(self.wal_path, "wb") as f:
                f.write(WAL_MAGIC)
                f.flush()
                os.fsync(f.fileno())
            self._wal_fd = os.open(
                self.wal_path, os.O_WRONLY | os.O_APPEND, 0o644
            )
        return len(records)

    def close(self):
        with self._lock:
            if self._wal_fd is not None:
                os.close(self._wal_fd)
                self._wal_fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
