"""twinfuse command line: simulate, reconstruct, serve, ingest, evaluate."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


def _cmd_simulate(args):
    from .harness import declare_loop_closures, render_scan, scripted_detections
    from .scan_io import load_trajectory, write_scan
    from .scene import load_scene
    from .simulate import NoiseSpec

    scene = load_scene(args.scene)
    traj = load_trajectory(args.trajectory)
    from .geometry import default_intrinsics

    intr = default_intrinsics(args.width, args.height)
    noise = NoiseSpec(args.noise_sigma, args.outliers, args.seed)
    detections_from = scripted_detections if args.with_detections else None
    scan = render_scan(scene, traj, intr, noise, args.seed,
                       detections_from=detections_from)
    write_scan(args.out, scan)
    print(f"wrote {len(scan.frames)} frames, "
          f"{sum(len(o) for o in scan.observations)} observations, "
          f"{len(scan.loop_closures)} loop closures, "
          f"{len(scan.detections)} detections to {args.out}")


def _cmd_reconstruct(args):
    from .pipeline import PipelineConfig, run_pipeline
    from .ply import write_ply
    from .registration import RansacConfig
    from .scan_io import pose_to_dict, read_scan

    scan = read_scan(args.in_dir)
    cfg = PipelineConfig()
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        ransac_keys = {"inlier_threshold", "confidence", "max_iterations",
                       "min_inliers"}
        ransac = RansacConfig(**{k: v for k, v in raw.items()
                                 if k in ransac_keys})
        rest = {k: v for k, v in raw.items() if k not in ransac_keys}
        cfg = PipelineConfig(ransac=ransac, **rest)
    result = run_pipeline(scan, cfg, seed=args.seed)
    write_ply(result.map, args.out)
    if args.trajectory_out:
        Path(args.trajectory_out).write_text(json.dumps([
            pose_to_dict(p, fid)
            for p, fid in zip(result.trajectory, result.frame_ids)
        ]))
    print(f"map: {len(result.map)} points -> {args.out}; "
          f"{len(result.trajectory)} poses"
          + (f" -> {args.trajectory_out}" if args.trajectory_out else "")
          + (f"; {len(result.events)} odometry events" if result.events else ""))


def _cmd_serve(args):
    from .server import serve
    from .store import Store

    data_dir = os.environ.get("TWINFUSE_DATA", args.data)
    store = Store(data_dir)
    print(f"serving on {args.bind}, data in {data_dir}")
    try:
        serve(args.bind, store)
    except KeyboardInterrupt:
        pass
    finally:
        store.close()


def _cmd_ingest(args):
    from .client import FusionClient
    from .scan_io import read_scan

    scan = read_scan(args.in_dir)
    traj_path = Path(args.in_dir) / "trajectory_optimized.json"
    poses = scan.odometry
    if args.trajectory:
        from .scan_io import pose_from_dict

        rows = json.loads(Path(args.trajectory).read_text())
        by_id = {r["frame_id"]: pose_from_dict(r) for r in rows}
        poses = [by_id.get(f.frame_id, p)
                 for f, p in zip(scan.frames, scan.odometry)]
    elif traj_path.exists():
        from .scan_io import pose_from_dict

        rows = json.loads(traj_path.read_text())
        by_id = {r["frame_id"]: pose_from_dict(r) for r in rows}
        poses = [by_id.get(f.frame_id, p)
                 for f, p in zip(scan.frames, scan.odometry)]
    dets_by_frame = {}
    for det in scan.detections:
        dets_by_frame.setdefault(det["frame_id"], []).append(det)
    sent = 0
    with FusionClient(args.server, intrinsics=scan.intrinsics) as client:
        for frame, pose in zip(scan.frames, poses):
            client.send_pose(frame.frame_id, pose)
            client.send_depth_frame(frame)
            sent += 2
            for det in dets_by_frame.get(frame.frame_id, []):
                client.send_detection(det)
                sent += 1
    print(f"ingested {len(scan.frames)} frames ({sent} messages acked)")


def _cmd_evaluate(args):
    from .evaluate import emit_report, load_measurements, rows_from_cloud
    from .ply import read_ply

    cloud = read_ply(args.map)
    specs = load_measurements(args.measurements)
    rows = rows_from_cloud(cloud, specs)
    report = emit_report(rows, args.format)
    if args.out:
        Path(args.out).write_bytes(report)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(report.decode())


def _cmd_fixtures(args):
    from . import fixtures
    from .scan_io import save_trajectory
    from .scene import save_scene

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scene(fixtures.paper_room(), out / "paper_room_scene.json")
    save_trajectory(fixtures.measurement_trajectory(),
                    out / "measurement_trajectory.json")
    save_trajectory(fixtures.defect_trajectory(),
                    out / "defect_trajectory.json")
    (out / "stereo_measurements.json").write_text(
        json.dumps(fixtures.stereo_measurement_specs(), indent=1)
    )
    (out / "lidar_measurements.json").write_text(
        json.dumps(fixtures.lidar_measurement_specs(), indent=1)
    )
    print(f"wrote fixtures to {out}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="twinfuse",
        description="Synthetic drone scanning, reconstruction, and fusion store",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic scan directory")
    s.add_argument("--scene", required=True)
    s.add_argument("--trajectory", required=True)
    s.add_argument("--noise-sigma", type=float, default=0.0,
                   dest="noise_sigma")
    s.add_argument("--outliers", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--width", type=int, default=640)
    s.add_argument("--height", type=int, default=480)
    s.add_argument("--with-detections", action="store_true",
                   dest="with_detections")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("reconstruct", help="run the reconstruction pipeline")
    s.add_argument("--in", required=True, dest="in_dir")
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--trajectory-out", default=None, dest="trajectory_out")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_reconstruct)

    s = sub.add_parser("serve", help="run the fusion store service")
    s.add_argument("--bind", required=True)
    s.add_argument("--data", default="./twinfuse-data")
    s.set_defaults(func=_cmd_serve)

    s = sub.add_parser("ingest", help="replay a scan directory to a server")
    s.add_argument("--server", required=True)
    s.add_argument("--in", required=True, dest="in_dir")
    s.add_argument("--trajectory", default=None,
                   help="optimized trajectory JSON to attach to frames")
    s.set_defaults(func=_cmd_ingest)

    s = sub.add_parser("evaluate", help="measure a map against ground truth")
    s.add_argument("--map", required=True)
    s.add_argument("--measurements", required=True)
    s.add_argument("--format", default="text-table",
                   choices=["text-table", "csv", "json"])
    s.add_argument("--out", default=None)
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("fixtures", help="write the bundled room fixtures")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_fixtures)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
