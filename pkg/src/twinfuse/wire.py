"""Length-prefixed binary protocol spoken by the fusion service.

Frame layout (big-endian throughout):

    magic   2 bytes  0x54 0x46 ("TF")
    version 1 byte   0x01
    kind    1 byte
    length  4 bytes  payload byte count (max 16 MiB)
    payload

Kinds 0x01..0x07 plus 0x00 for ERROR. JSON payloads are UTF-8; the
DEPTH_FRAME payload is binary: u64 frame id, u16 width, u16 height, then
width*height u16 depths in millimeters, row-major.
"""

from __future__ import annotations

import json
import struct

MAGIC = b"TF"
VERSION = 1
HEADER_LEN = 8
MAX_PAYLOAD = 16 * 1024 * 1024

K_ERROR = 0x00
K_HELLO = 0x01
K_POSE = 0x02
K_DEPTH_FRAME = 0x03
K_DETECTION = 0x04
K_ACK = 0x05
K_QUERY = 0x06
K_RESULT = 0x07

KNOWN_KINDS = {K_ERROR, K_HELLO, K_POSE, K_DEPTH_FRAME, K_DETECTION,
               K_ACK, K_QUERY, K_RESULT}

E_BAD_MAGIC = "BadMagic"
E_UNSUPPORTED_VERSION = "UnsupportedVersion"
E_UNKNOWN_KIND = "UnknownKind"
E_MALFORMED_PAYLOAD = "MalformedPayload"
E_NOT_READY = "NotReady"
E_OVERSIZE = "OversizePayload"


class WireError(Exception):
    """Framing violation; carries the protocol error code."""

    def __init__(self, code, message, fatal=False):
        super().__init__(message)
        self.code = code
        self.fatal = fatal


def encode_frame(kind: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise WireError(E_OVERSIZE, "payload exceeds 16 MiB", fatal=True)
    return MAGIC + struct.pack(">BBI", VERSION, kind, len(payload)) + payload


def encode_json(kind: int, obj) -> bytes:
    return encode_frame(kind, json.dumps(obj).encode())


def encode_error(code: str, message: str) -> bytes:
    return encode_json(K_ERROR, {"code": code, "message": message})


def parse_header(header: bytes):
    """(version, kind, length) from an 8-byte header; validates framing."""
    if len(header) != HEADER_LEN:
        raise WireError(E_BAD_MAGIC, "truncated header", fatal=True)
    if header[:2] != MAGIC:
        raise WireError(E_BAD_MAGIC, "bad magic bytes", fatal=True)
    version, kind, length = struct.unpack(">BBI", header[2:])
    if length > MAX_PAYLOAD:
        raise WireError(E_OVERSIZE, f"payload length {length} exceeds 16 MiB",
                        fatal=True)
    return version, kind, length


def decode_json(payload: bytes):
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(E_MALFORMED_PAYLOAD, f"bad JSON payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError(E_MALFORMED_PAYLOAD, "JSON payload must be an object")
    return obj


def read_frame(sock_file):
    """Read one frame from a file-like; returns (version, kind, payload).

    Returns None on clean EOF at a frame boundary; raises WireError on
    framing violations (which close the session).
    """
    header = sock_file.read(HEADER_LEN)
    if not header:
        return None
    version, kind, length = parse_header(header)
    payload = sock_file.read(length) if length else b""
    if len(payload) != length:
        raise WireError(E_BAD_MAGIC, "truncated payload", fatal=True)
    return version, kind, payload


def iter_frames(data: bytes):
    """Split a byte buffer into frames (for replay and fuzzing)."""
    import io

    buf = io.BytesIO(data)
    while True:
        frame = read_frame(buf)
        if frame is None:
            return
        yield frame
