import json
import os
import signal
import struct
import subprocess
import sys
import textwrap
import time
from zlib import crc32

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinfuse.store import (ArtifactRecord, ChecksumMismatch, CorruptRecord,
                            InvalidRegion, Kind, NotFound, SpatialIndex, Store,
                            StoreError, UnreadableLog, WAL_MAGIC,
                            content_hash, decode_record, derive_id,
                            encode_record, make_record, replay_wal)


def rec(n, kind=Kind.GEOMETRY, payload=None, bounds=None, created_at=None):
    payload = payload if payload is not None else f"payload-{n}".encode()
    return make_record(derive_id("test", n), kind, payload, bounds=bounds,
                       created_at=created_at)


class TestRecordCodec:
    def test_roundtrip_minimal(self):
        r = rec(1)
        assert decode_record(encode_record(r)) == r

    def test_roundtrip_full(self):
        r = make_record(
            derive_id("a"), Kind.DEFECT, b"\x00\x01\xff" * 100,
            parent_id=derive_id("b"),
            bounds=((-1.0, -2.0, -3.0), (1.0, 2.0, 3.0)),
            created_at=123456789, version=7,
        )
        assert decode_record(encode_record(r)) == r

    def test_rejects_truncation(self):
        data = encode_record(rec(2))
        with pytest.raises(StoreError):
            decode_record(data[:-1])

    def test_degenerate_bounds_allowed(self):
        r = rec(3, bounds=((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)))
        assert decode_record(encode_record(r)).bounds == r.bounds

    def test_inverted_bounds_rejected(self):
        with pytest.raises(StoreError):
            rec(4, bounds=((1.0, 0.0, 0.0), (0.0, 1.0, 1.0)))


class TestPutGet:
    def test_roundtrip(self, tmp_path):
        with Store(tmp_path) as store:
            r = rec(1)
            rid, version, seq = store.put(r)
            assert version == 1 and seq >= 1
            back = store.get(rid)
            assert back.payload == r.payload
            assert back.content_hash == r.content_hash

    def test_versioning(self, tmp_path):
        with Store(tmp_path) as store:
            rid = derive_id("test", "v")
            store.put(make_record(rid, Kind.TAG, b"first"))
            _, v2, _ = store.put(make_record(rid, Kind.TAG, b"second"))
            assert v2 == 2
            assert store.get(rid).payload == b"second"
            assert store.get(rid, version=1).payload == b"first"

    def test_retransmission_dedup(self, tmp_path):
        with Store(tmp_path) as store:
            r = rec(5)
            _, v1, s1 = store.put(r)
            _, v2, s2 = store.put(r)
            assert (v1, s1) == (v2, s2)

    def test_unknown_id(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(NotFound):
                store.get(derive_id("nobody"))

    def test_checksum_mismatch_rejected(self, tmp_path):
        with Store(tmp_path) as store:
            r = rec(6)
            bad = ArtifactRecord(r.id, r.kind, b"tampered", r.content_hash)
            with pytest.raises(ChecksumMismatch):
                store.put(bad)

    def test_delete(self, tmp_path):
        with Store(tmp_path) as store:
            rid, _, _ = store.put(rec(7))
            store.delete(rid)
            with pytest.raises(NotFound):
                store.get(rid)


class TestRecovery:
    def test_empty_log_empty_store(self, tmp_path):
        with Store(tmp_path) as store:
            assert store.ids() == []
        with Store(tmp_path) as store:
            assert store.ids() == []

    def test_reopen_restores_versions(self, tmp_path):
        rid = derive_id("persists")
        with Store(tmp_path) as store:
            store.put(make_record(rid, Kind.FRAME, b"one"))
            store.put(make_record(rid, Kind.FRAME, b"two"))
        with Store(tmp_path) as store:
            assert store.get(rid).version == 2
            assert store.get(rid, version=1).payload == b"one"

    def test_missing_header_unreadable(self, tmp_path):
        path = tmp_path / "store.wal"
        path.write_bytes(b"garbage!")
        with pytest.raises(UnreadableLog):
            replay_wal(path)

    def test_torn_tail_recovers_prefix(self, tmp_path):
        with Store(tmp_path / "a") as store:
            for n in range(20):
                store.put(rec(n))
        wal = (tmp_path / "a" / "store.wal").read_bytes()
        # Cut the log at many byte positions; replay must always produce a
        # clean prefix of the acknowledged puts.
        for cut in range(len(WAL_MAGIC), len(wal), 97):
            trimmed = tmp_path / "trim"
            trimmed.mkdir(exist_ok=True)
            (trimmed / "store.wal").write_bytes(wal[:cut])
            entries, _ = replay_wal(trimmed / "store.wal")
            assert all(e[1] == 1 for e in entries)
            seqs = [e[0] for e in entries]
            assert seqs == list(range(1, len(seqs) + 1))

    def test_bitflip_with_fixed_crc_yields_corrupt_record(self, tmp_path):
        # Disk rot that keeps the framing valid: the WAL entry decodes but
        # the payload no longer matches its content hash.
        with Store(tmp_path) as store:
            rid, _, _ = store.put(rec(1, payload=b"A" * 64))
        wal_path = tmp_path / "store.wal"
        data = bytearray(wal_path.read_bytes())
        idx = data.index(b"A" * 64)
        data[idx] ^= 0xFF
        head_start = len(WAL_MAGIC)
        entry_wo_crc = bytes(data[head_start:-4])
        data[-4:] = struct.pack(">I", crc32(entry_wo_crc))
        wal_path.write_bytes(bytes(data))
        with Store(tmp_path) as store:
            with pytest.raises(CorruptRecord):
                store.get(rid)

    def test_crash_point_sweep(self, tmp_path):
        # After every acked put, the bytes already fsynced to the WAL must
        # recover every acked record (shadow-map oracle).
        store_dir = tmp_path / "live"
        shadow = {}
        with Store(store_dir) as store:
            for n in range(60):
                r = rec(n)
                store.put(r)
                shadow[r.id] = r.payload
                wal_bytes = (store_dir / "store.wal").read_bytes()
                probe = tmp_path / "probe"
                probe.mkdir(exist_ok=True)
                (probe / "store.wal").write_bytes(wal_bytes)
                with Store(probe) as recovered:
                    for rid, payload in shadow.items():
                        assert recovered.get(rid).payload == payload
                (probe / "store.wal").unlink()

    def test_kill_minus_nine_subprocess(self, tmp_path):
        # A real process kill: the child streams acked ids to stdout; all
        # ids the parent observed must survive recovery.
        script = textwrap.dedent("""
            import sys
            from twinfuse.store import Store, Kind, make_record, derive_id
            store = Store(sys.argv[1])
            n = 0
            while True:
                rid = derive_id("kill", n)
                store.put(make_record(rid, Kind.METADATA,
                                      f"payload-{n}".encode()))
                print(n, flush=True)
                n += 1
        """)
        proc = subprocess.Popen(
            [sys.executable, "-c", script, str(tmp_path / "data")],
            stdout=subprocess.PIPE,
        )
        acked = []
        deadline = time.time() + 20
        while len(acked) < 400 and time.time() < deadline:
            line = proc.stdout.readline()
            if not line:
                break
            acked.append(int(line))
        os.kill(proc.pid, signal.SIGKILL)
        proc.wait()
        assert len(acked) >= 100
        with Store(tmp_path / "data") as store:
            for n in acked:
                assert store.get(derive_id("kill", n)).payload == \
                    f"payload-{n}".encode()

    def test_snapshot_then_more_puts(self, tmp_path):
        with Store(tmp_path) as store:
            for n in range(10):
                store.put(rec(n))
            store.snapshot()
            wal_size_after = (tmp_path / "store.wal").stat().st_size
            assert wal_size_after == len(WAL_MAGIC)
            for n in range(10, 15):
                store.put(rec(n))
        with Store(tmp_path) as store:
            assert len(store.ids()) == 15

    def test_recover_is_idempotent(self, tmp_path):
        with Store(tmp_path / "a") as store:
            for n in range(12):
                store.put(rec(n, bounds=((n, n, n), (n + 1.0, n + 1, n + 1))))
            store.snapshot()
        with Store(tmp_path / "a") as store:
            first = {rid: store.get(rid) for rid in store.ids()}
        with Store(tmp_path / "a") as store:
            second = {rid: store.get(rid) for rid in store.ids()}
        assert first == second


def brute_force_query(records, kind=None, time_range=None, region=None):
    out = []
    for r in records:
        if kind is not None and r.kind != kind:
            continue
        if time_range is not None and not (
                time_range[0] <= r.created_at <= time_range[1]):
            continue
        if region is not None:
            if r.bounds is None:
                continue
            (alo, ahi), (blo, bhi) = r.bounds, region
            if not all(alo[i] <= bhi[i] and blo[i] <= ahi[i]
                       for i in range(3)):
                continue
        out.append(r)
    out.sort(key=lambda r: (r.created_at, r.id))
    return out


class TestQuery:
    def test_requires_filter(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(StoreError):
                store.query()

    def test_invalid_region(self, tmp_path):
        with Store(tmp_path) as store:
            with pytest.raises(InvalidRegion):
                store.query(region=((1.0, 0, 0), (0.0, 1, 1)))

    def test_empty_store_empty_result(self, tmp_path):
        with Store(tmp_path) as store:
            assert store.query(kind=Kind.DEFECT) == []

    def test_kind_and_region(self, tmp_path):
        with Store(tmp_path) as store:
            store.put(rec(1, Kind.DEFECT, bounds=((0, 0, 0), (1, 1, 1)),
                          created_at=10))
            store.put(rec(2, Kind.DEFECT, bounds=((5, 5, 5), (6, 6, 6)),
                          created_at=20))
            store.put(rec(3, Kind.TAG, bounds=((0, 0, 0), (1, 1, 1)),
                          created_at=30))
            got = store.query(kind=Kind.DEFECT,
                              region=((-1, -1, -1), (2, 2, 2)))
            assert [r.created_at for r in got] == [10]

    def test_region_query_matches_brute_force(self, tmp_path, rng):
        with Store(tmp_path, cell_size=0.8) as store:
            latest = {}
            for n in range(300):
                lo = rng.uniform(-5, 5, size=3)
                hi = lo + rng.uniform(0.01, 2.0, size=3)
                kind = Kind(int(rng.integers(1, 6)))
                r = rec(n, kind, bounds=(tuple(lo), tuple(hi)),
                        created_at=int(rng.integers(0, 1000)))
                store.put(r)
                latest[r.id] = r
            records = list(latest.values())
            for _ in range(100):
                qlo = rng.uniform(-6, 5, size=3)
                qhi = qlo + rng.uniform(0.01, 4.0, size=3)
                region = (tuple(qlo), tuple(qhi))
                got = store.query(region=region)
                want = brute_force_query(records, region=region)
                assert [r.id for r in got] == [r.id for r in want]

    def test_time_range(self, tmp_path):
        with Store(tmp_path) as store:
            for n, t in enumerate([5, 15, 25]):
                store.put(rec(n, Kind.FRAME, created_at=t))
            got = store.query(kind=Kind.FRAME, time_range=(10, 20))
            assert [r.created_at for r in got] == [15]


class TestSpatialIndex:
    @given(
        boxes=st.lists(
            st.tuples(
                st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10),
                st.floats(0.01, 3.0), st.floats(0.01, 3.0), st.floats(0.01, 3.0),
            ),
            min_size=1, max_size=40,
        ),
        query=st.tuples(
            st.floats(-11, 10), st.floats(-11, 10), st.floats(-11, 10),
            st.floats(0.01, 6.0), st.floats(0.01, 6.0), st.floats(0.01, 6.0),
        ),
    )
    @settings(max_examples=80, deadline=None)
    def test_candidates_superset_of_overlaps(self, boxes, query):
        index = SpatialIndex(cell_size=1.0)
        bounds = {}
        for n, (x, y, z, dx, dy, dz) in enumerate(boxes):
            rid = derive_id("h", n)
            b = ((x, y, z), (x + dx, y + dy, z + dz))
            bounds[rid] = b
            index.insert(rid, b)
        qx, qy, qz, qdx, qdy, qdz = query
        region = ((qx, qy, qz), (qx + qdx, qy + qdy, qz + qdz))
        cands = index.candidates(region)
        for rid, b in bounds.items():
            overlaps = all(
                b[0][i] <= region[1][i] and region[0][i] <= b[1][i]
                for i in range(3)
            )
            if overlaps:
                assert rid in cands

    def test_remove(self):
        index = SpatialIndex(1.0)
        rid = derive_id("x")
        index.insert(rid, ((0, 0, 0), (2, 2, 2)))
        index.remove(rid, ((0, 0, 0), (2, 2, 2)))
        assert index.candidates(((-1, -1, -1), (3, 3, 3))) == set()
        assert index.cells == {}
