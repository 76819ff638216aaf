"""Streaming ingestion service over the twinfuse wire protocol.

Session logic lives in :class:`Session`, a pure state machine from decoded
frames to response frames, so the TCP layer and the protocol fuzzer drive
the exact same code. Ingest messages are acknowledged only after the
store's WAL append is durable; detections additionally flow through a
per-session defect pipeline that geolocates and clusters them into
kind=defect artifacts.
"""

from __future__ import annotations

import collections
import json
import logging
import secrets
import socketserver
import threading

import numpy as np

from . import wire
from .defects import (DEFAULT_CLUSTER_RADIUS, DefectClusterer, Detection2D,
                      NoValidDepth, locate, register)
from .geometry import GeometryError, Pose, default_intrinsics
from .scan_io import ScanIOError, decode_depth_payload, intrinsics_from_dict
from .store import InvalidRegion, Kind, Store, StoreError, derive_id, make_record

log = logging.getLogger(__name__)

_FRAME_CACHE = 128
_PARKED_CAP = 1000


class DefectIngest:
    """Per-session 2D->3D defect pipeline fed by the message stream."""

    def __init__(self, store: Store, intrinsics, namespace: str,
                 radius: float = DEFAULT_CLUSTER_RADIUS):
        self.store = store
        self.intrinsics = intrinsics
        self.namespace = namespace
        self.radius = radius
        self.poses: dict = {}
        self.frames = collections.OrderedDict()
        self.parked: list = []
        self.clusterer = DefectClusterer(radius)

    def on_pose(self, frame_id: int, pose: Pose):
        self.poses[frame_id] = pose
        self._retry()

    def on_frame(self, frame):
        self.frames[frame.frame_id] = frame
        self.frames.move_to_end(frame.frame_id)
        while len(self.frames) > _FRAME_CACHE:
            self.frames.popitem(last=False)
        self._retry()

    def on_detection(self, det: Detection2D):
        if not self._process(det):
            self.parked.append(det)
            del self.parked[:-_PARKED_CAP]

    def _process(self, det: Detection2D) -> bool:
        frame = self.frames.get(det.frame_id)
        pose = self.poses.get(det.frame_id)
        if frame is None or pose is None:
            return False
        try:
            anchor = locate(det, frame, self.intrinsics, pose)
        except NoValidDepth:
            return False
        except GeometryError as exc:
            log.info("detection dropped (geometry): %s", exc)
            return True  # unusable forever; do not retry
        rec = self.clusterer.add(anchor, det.label, det.confidence,
                                 det.frame_id)
        register(rec, self.store, self.radius, self.namespace)
        return True

    def _retry(self):
        still = []
        for det in self.parked:
            if not self._process(det):
                still.append(det)
        self.parked = still


class Session:
    """Wire-protocol state machine for one connection."""

    def __init__(self, store: Store, defect_radius=DEFAULT_CLUSTER_RADIUS):
        self.store = store
        self.session_id = secrets.token_hex(8)
        self.hello = None
        self.intrinsics = default_intrinsics()
        self.defect_radius = defect_radius
        self.defects = None

    # Each handler returns a list of response frames (bytes).

    def handle_frame(self, version: int, kind: int, payload: bytes):
        if version != wire.VERSION:
            return [wire.encode_error(
                wire.E_UNSUPPORTED_VERSION, f"protocol version {version}"
            )]
        if kind not in wire.KNOWN_KINDS:
            return [wire.encode_error(
                wire.E_UNKNOWN_KIND, f"unknown kind 0x{kind:02x}"
            )]
        if self.hello is None and kind != wire.K_HELLO:
            return [wire.encode_error(
                wire.E_NOT_READY, "HELLO required before any other message"
            )]
        try:
            if kind == wire.K_HELLO:
                return self._on_hello(payload)
            if kind == wire.K_POSE:
                return self._on_pose(payload)
            if kind == wire.K_DEPTH_FRAME:
                return self._on_depth_frame(payload)
            if kind == wire.K_DETECTION:
                return self._on_detection(payload)
            if kind == wire.K_QUERY:
                return self._on_query(payload)
        except wire.WireError as exc:
            return [wire.encode_error(exc.code, str(exc))]
        except (StoreError, ScanIOError, GeometryError, ValueError,
                KeyError, TypeError) as exc:
            return [wire.encode_error(wire.E_MALFORMED_PAYLOAD, str(exc))]
        # Client-sent ACK/RESULT/ERROR have no server-side meaning.
        return [wire.encode_error(
            wire.E_MALFORMED_PAYLOAD, f"kind 0x{kind:02x} not valid from client"
        )]

    def _on_hello(self, payload):
        obj = wire.decode_json(payload)
        if not isinstance(obj.get("client"), str) or obj.get("proto") != 1:
            raise wire.WireError(
                wire.E_MALFORMED_PAYLOAD,
                'HELLO must carry {"client": string, "proto": 1}',
            )
        self.hello = obj
        if "intrinsics" in obj:
            self.intrinsics = intrinsics_from_dict(obj["intrinsics"])
        self.defects = DefectIngest(
            self.store, self.intrinsics, obj["client"], self.defect_radius
        )
        return [wire.encode_json(
            wire.K_ACK, {"sequence": 0, "session": self.session_id}
        )]

    def _on_pose(self, payload):
        obj = wire.decode_json(payload)
        frame_id = int(obj["frame_id"])
        rotation = np.array(obj["rotation"], dtype=float).reshape(3, 3)
        translation = np.array(obj["translation"], dtype=float)
        pose = Pose(rotation, translation)
        rec = make_record(
            derive_id("pose", frame_id), Kind.METADATA, payload
        )
        _, _, seq = self.store.put(rec)
        self.defects.on_pose(frame_id, pose)
        return [wire.encode_json(wire.K_ACK, {"sequence": seq})]

    def _on_depth_frame(self, payload):
        try:
            frame = decode_depth_payload(payload)
        except ScanIOError as exc:
            raise wire.WireError(wire.E_MALFORMED_PAYLOAD, str(exc)) from exc
        rec = make_record(
            derive_id("frame", frame.frame_id), Kind.FRAME, payload
        )
        _, _, seq = self.store.put(rec)
        self.defects.on_frame(frame)
        return [wire.encode_json(wire.K_ACK, {"sequence": seq})]

    def _on_detection(self, payload):
        obj = wire.decode_json(payload)
        det = Detection2D(
            int(obj["frame_id"]), tuple(obj["bbox"]), str(obj["label"]),
            float(obj["confidence"]),
        )
        rec = make_record(
            derive_id("detection", det.frame_id, det.bbox, det.label),
            Kind.METADATA, payload,
        )
        _, _, seq = self.store.put(rec)
        self.defects.on_detection(det)
        return [wire.encode_json(wire.K_ACK, {"sequence": seq})]

    def _on_query(self, payload):
        obj = wire.decode_json(payload)
        kind = Kind.from_name(obj["kind"]) if "kind" in obj else None
        time_range = tuple(obj["time_range"]) if "time_range" in obj else None
        region = None
        if "region" in obj:
            lo, hi = obj["region"]
            region = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))
        try:
            records = self.store.query(kind, time_range, region)
        except (InvalidRegion, StoreError) as exc:
            raise wire.WireError(wire.E_MALFORMED_PAYLOAD, str(exc)) from exc
        import base64

        body = [
            {
                "id": r.id.hex(),
                "kind": r.kind.wire_name,
                "parent_id": r.parent_id.hex() if r.parent_id else None,
                "content_hash": r.content_hash.hex(),
                "bounds": ([list(r.bounds[0]), list(r.bounds[1])]
                           if r.bounds else None),
                "created_at": r.created_at,
                "version": r.version,
                "payload_b64": base64.b64encode(r.payload).decode(),
            }
            for r in records
        ]
        return [wire.encode_frame(wire.K_RESULT, json.dumps(body).encode())]


def service_connection(session: Session, reader, writer):
    """Frame loop shared by the TCP handler and in-process harnesses.

    Returns when the peer disconnects or on a fatal framing violation
    (which is answered with one ERROR before the connection drops).
    """
    while True:
        try:
            frame = wire.read_frame(reader)
        except wire.WireError as exc:
            writer.write(wire.encode_error(exc.code, str(exc)))
            writer.flush()
            return
        if frame is None:
            return
        version, kind, payload = frame
        for response in session.handle_frame(version, kind, payload):
            writer.write(response)
        writer.flush()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        session = Session(self.server.store, self.server.defect_radius)
        reader = self.request.makefile("rb")
        writer = self.request.makefile("wb")
        try:
            service_connection(session, reader, writer)
            writer.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            reader.close()
            try:
                writer.close()
            except (BrokenPipeError, ConnectionResetError):
                pass


class FusionServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind, store: Store,
                 defect_radius=DEFAULT_CLUSTER_RADIUS):
        self.store = store
        self.defect_radius = defect_radius
        super().__init__(bind, _Handler)


def serve(bind_address, store: Store, defect_radius=DEFAULT_CLUSTER_RADIUS,
          in_thread: bool = False) -> FusionServer:
    """Start the service; with in_thread=True returns immediately."""
    host, _, port = bind_address.partition(":")
    server = FusionServer((host, int(port)), store, defect_radius)
    if in_thread:
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
    else:
        server.serve_forever()
    return server
