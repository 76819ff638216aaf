"""ASCII PLY 1.0 point-cloud export/import.

Coordinates are meters; lines end with LF. Vertices carry float x/y/z and
optionally uchar red/green/blue.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import GeometryError, PointCloud


class PlyError(GeometryError):
    pass


def dumps_ply(cloud: PointCloud) -> bytes:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if cloud.colors is not None:
        lines += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    lines.append("end_header")
    out = ["\n".join(lines)]
    if cloud.colors is None:
        for p in cloud.points:
            out.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}")
    else:
        for p, c in zip(cloud.points, cloud.colors):
            out.append(
                f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]}"
            )
    return ("\n".join(out) + "\n").encode("ascii")


def write_ply(cloud: PointCloud, path):
    Path(path).write_bytes(dumps_ply(cloud))


def loads_ply(data: bytes) -> PointCloud:
    lines = data.decode("ascii").split("\n")
    if not lines or lines[0].strip() != "ply":
        raise PlyError("missing ply magic")
    n = None
    props = []
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if line == "end_header":
            break
        if line.startswith("format"):
            if line.split() != ["format", "ascii", "1.0"]:
                raise PlyError(f"unsupported format line: {line}")
        elif line.startswith("element vertex"):
            n = int(line.split()[2])
        elif line.startswith("element"):
            raise PlyError(f"unsupported element: {line}")
        elif line.startswith("property"):
            props.append(line.split()[2])
    else:
        raise PlyError("missing end_header")
    if n is None:
        raise PlyError("missing element vertex")
    has_color = props[:6] == ["x", "y", "z", "red", "green", "blue"]
    if not has_color and props[:3] != ["x", "y", "z"]:
        raise PlyError(f"unsupported property layout: {props}")
    pts = np.zeros((n, 3))
    colors = np.zeros((n, 3), dtype=np.uint8) if has_color else None
    for k in range(n):
        fields = lines[i + k].split()
        pts[k] = [float(f) for f in fields[:3]]
        if has_color:
            colors[k] = [int(f) for f in fields[3:6]]
    return PointCloud(pts, colors)


def read_ply(path) -> PointCloud:
    return loads_ply(Path(path).read_bytes())
