"""Synchronous client for the fusion service wire protocol."""

from __future__ import annotations

import base64
import socket

from . import wire
from .geometry import Pose
from .scan_io import encode_depth_payload, intrinsics_to_dict, pose_to_dict


class ClientError(Exception):
    pass


class ServerRejected(ClientError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


class FusionClient:
    """One session: HELLO handshake, then request/response message pairs."""

    def __init__(self, address: str, client_name: str = "twinfuse",
                 intrinsics=None, timeout: float = 10.0):
        self.address = address
        self.client_name = client_name
        self.intrinsics = intrinsics
        self.timeout = timeout
        self._sock = None
        self._reader = None
        self._writer = None
        self.session_id = None

    def connect(self):
        host, _, port = self.address.partition(":")
        self._sock = socket.create_connection(
            (host, int(port)), timeout=self.timeout
        )
        self._reader = self._sock.makefile("rb")
        self._writer = self._sock.makefile("wb")
        hello = {"client": self.client_name, "proto": 1}
        if self.intrinsics is not None:
            hello["intrinsics"] = intrinsics_to_dict(self.intrinsics)
        ack = self._rpc(wire.encode_json(wire.K_HELLO, hello))
        self.session_id = ack.get("session")
        return self.session_id

    def close(self):
        for h in (self._reader, self._writer, self._sock):
            if h is not None:
                try:
                    h.close()
                except OSError:
                    pass
        self._sock = self._reader = self._writer = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def _rpc(self, frame: bytes):
        self._writer.write(frame)
        self._writer.flush()
        response = wire.read_frame(self._reader)
        if response is None:
            raise ClientError("server closed the connection")
        _version, kind, payload = response
        if kind == wire.K_ERROR:
            err = wire.decode_json(payload)
            raise ServerRejected(err.get("code"), err.get("message"))
        return wire.decode_json(payload) if kind == wire.K_ACK else (
            kind, payload
        )

    def send_pose(self, frame_id: int, pose: Pose) -> int:
        obj = pose_to_dict(pose, frame_id)
        return int(self._rpc(wire.encode_json(wire.K_POSE, obj))["sequence"])

    def send_depth_frame(self, frame) -> int:
        payload = encode_depth_payload(frame)
        return int(self._rpc(
            wire.encode_frame(wire.K_DEPTH_FRAME, payload)
        )["sequence"])

    def send_detection(self, det: dict) -> int:
        return int(self._rpc(
            wire.encode_json(wire.K_DETECTION, det)
        )["sequence"])

    def query(self, kind: str | None = None, time_range=None, region=None):
        obj = {}
        if kind is not None:
            obj["kind"] = kind
        if time_range is not None:
            obj["time_range"] = list(time_range)
        if region is not None:
            obj["region"] = [list(region[0]), list(region[1])]
        result_kind, payload = self._rpc(wire.encode_json(wire.K_QUERY, obj))
        if result_kind != wire.K_RESULT:
            raise ClientError(f"expected RESULT, got kind {result_kind}")
        import json

        rows = json.loads(payload.decode())
        for row in rows:
            row["payload"] = base64.b64decode(row.pop("payload_b64"))
        return rows
