"""Client-side implementation of the fusion-service wire protocol.

Deliberately self-contained: this package talks to the service only over
its published byte format (magic "TF", version 0x01, kind, u32 BE length,
payload) and never imports the server package.
"""

from __future__ import annotations

import json
import socket
import struct

MAGIC = b"TF"
VERSION = 1
MAX_PAYLOAD = 16 * 1024 * 1024

K_ERROR = 0x00
K_HELLO = 0x01
K_POSE = 0x02
K_DEPTH_FRAME = 0x03
K_DETECTION = 0x04
K_ACK = 0x05
K_QUERY = 0x06
K_RESULT = 0x07


class ConnectionLost(Exception):
    pass


class ServerError(Exception):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def encode_frame(kind: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ValueError("payload exceeds 16 MiB")
    return MAGIC + struct.pack(">BBI", VERSION, kind, len(payload)) + payload


def encode_json(kind: int, obj) -> bytes:
    return encode_frame(kind, json.dumps(obj).encode())


def encode_depth_payload(frame_id: int, depths) -> bytes:
    import numpy as np

    depths = np.asarray(depths, dtype=np.uint16)
    h, w = depths.shape
    return struct.pack(">QHH", frame_id, w, h) + depths.astype(">u2").tobytes()


def read_frame(reader):
    header = reader.read(8)
    if not header:
        return None
    if len(header) != 8 or header[:2] != MAGIC:
        raise ConnectionLost("bad framing from server")
    _version, kind, length = struct.unpack(">BBI", header[2:])
    payload = reader.read(length) if length else b""
    if len(payload) != length:
        raise ConnectionLost("truncated frame from server")
    return kind, payload


class DetectClient:
    """Blocking request/response session against the fusion service."""

    def __init__(self, address: str, client_name: str = "twinfuse-detect",
                 intrinsics: dict | None = None, timeout: float = 10.0):
        self.address = address
        self.client_name = client_name
        self.intrinsics = intrinsics
        self.timeout = timeout
        self._sock = None
        self._reader = None
        self._writer = None

    def connect(self):
        host, _, port = self.address.partition(":")
        try:
            self._sock = socket.create_connection(
                (host, int(port)), timeout=self.timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot reach {self.address}: {exc}") from exc
        self._reader = self._sock.makefile("rb")
        self._writer = self._sock.makefile("wb")
        hello = {"client": self.client_name, "proto": 1}
        if self.intrinsics:
            hello["intrinsics"] = self.intrinsics
        self._rpc(encode_json(K_HELLO, hello))

    def close(self):
        for h in (self._reader, self._writer, self._sock):
            if h is not None:
                try:
                    h.close()
                except OSError:
                    pass
        self._sock = self._reader = self._writer = None

    def _rpc(self, frame: bytes):
        if self._sock is None:
            raise ConnectionLost("not connected")
        try:
            self._writer.write(frame)
            self._writer.flush()
            response = read_frame(self._reader)
        except (OSError, ValueError) as exc:
            raise ConnectionLost(str(exc)) from exc
        if response is None:
            raise ConnectionLost("server closed the connection")
        kind, payload = response
        if kind == K_ERROR:
            err = json.loads(payload)
            raise ServerError(err.get("code"), err.get("message"))
        return kind, payload

    def send_pose(self, frame_id: int, rotation9, translation3):
        _, payload = self._rpc(encode_json(K_POSE, {
            "frame_id": int(frame_id),
            "rotation": [float(v) for v in rotation9],
            "translation": [float(v) for v in translation3],
        }))
        return json.loads(payload)["sequence"]

    def send_depth_frame(self, frame_id: int, depths):
        _, payload = self._rpc(encode_frame(
            K_DEPTH_FRAME, encode_depth_payload(frame_id, depths)))
        return json.loads(payload)["sequence"]

    def send_detection(self, frame_id: int, bbox, label: str,
                       confidence: float):
        _, payload = self._rpc(encode_json(K_DETECTION, {
            "frame_id": int(frame_id),
            "bbox": [float(v) for v in bbox],
            "label": label,
            "confidence": float(confidence),
        }))
        return json.loads(payload)["sequence"]

    def query(self, kind: str):
        rkind, payload = self._rpc(encode_json(K_QUERY, {"kind": kind}))
        if rkind != K_RESULT:
            raise ServerError("UnexpectedKind", f"kind {rkind}")
        return json.loads(payload)
