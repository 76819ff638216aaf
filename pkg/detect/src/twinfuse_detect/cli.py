"""twinfuse-detect command line: train, evaluate, stream."""

from __future__ import annotations

import argparse
import sys


def _load_dataset(args):
    from .dataset import load_sdnet, make_synthetic, split_dataset

    if args.synthetic:
        ds = make_synthetic(args.synthetic, seed=args.seed)
    else:
        if not args.data:
            raise SystemExit("--data or --synthetic required")
        ds = load_sdnet(args.data, limit_per_class=args.limit_per_class)
    splits = split_dataset(ds, seed=args.seed)
    print(f"dataset {ds.name}: {len(ds)} patches, crack fraction "
          f"{ds.balance():.3f}; splits {len(splits.train)}/"
          f"{len(splits.val)}/{len(splits.test)}")
    return splits


def _cmd_train(args):
    from .dataset import DatasetMissing
    from .train import TrainConfig, save_checkpoint, train

    try:
        splits = _load_dataset(args)
    except DatasetMissing as exc:
        raise SystemExit(str(exc))
    cfg = TrainConfig(backbone=args.backbone, epochs=args.epochs,
                      seed=args.seed, image_size=args.image_size)
    clf, history = train(splits.train, cfg, splits.val)
    save_checkpoint(clf, cfg, history, args.out)
    print(f"final loss {history['loss'][-1]:.4f}, train accuracy "
          f"{history['train_accuracy'][-1]:.3f}"
          + (f", val accuracy {history['val_accuracy']:.3f}"
             if "val_accuracy" in history else ""))
    print(f"checkpoint -> {args.out}")


def _cmd_evaluate(args):
    from .dataset import DatasetMissing
    from .evaluate import evaluate
    from .models import VarianceStub
    from .train import load_checkpoint

    try:
        splits = _load_dataset(args)
    except DatasetMissing as exc:
        raise SystemExit(str(exc))
    if args.stub:
        clf = VarianceStub()
    else:
        if not args.checkpoint:
            raise SystemExit("--checkpoint or --stub required")
        clf, _cfg, _hist = load_checkpoint(args.checkpoint)
    report = evaluate(clf, splits.test)
    print(report.to_json())


def _cmd_stream(args):
    from .models import VarianceStub
    from .stream import stream
    from .train import load_checkpoint

    if args.stub:
        clf = VarianceStub(threshold=args.stub_threshold)
    else:
        if not args.checkpoint:
            raise SystemExit("--checkpoint or --stub required")
        clf, _cfg, _hist = load_checkpoint(args.checkpoint)
    summary = stream(clf, args.in_dir, args.server,
                     threshold=args.threshold)
    print(f"frames {summary.frames}, windows {summary.windows}, "
          f"detections {summary.detections_sent}, acked "
          f"{summary.messages_acked}, reconnects {summary.reconnects}, "
          f"defect records on server {summary.defects_on_server}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="twinfuse-detect",
        description="Crack classifier and streaming detection client",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def dataset_args(s):
        s.add_argument("--data", default=None,
                       help="SDNET2018 root (D/, P/, W/ subfolders)")
        s.add_argument("--synthetic", type=int, default=0, metavar="N",
                       help="use N synthetic patches instead of --data")
        s.add_argument("--limit-per-class", type=int, default=None)
        s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("train", help="train a crack classifier")
    dataset_args(s)
    s.add_argument("--backbone", default="small-resnet-18-class",
                   choices=["small-resnet-18-class", "small-resnet-50-class",
                            "vgg-16-class"])
    s.add_argument("--epochs", type=int, default=5)
    s.add_argument("--image-size", type=int, default=64)
    s.add_argument("--out", default="crack_classifier.pt")
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("evaluate", help="confusion-matrix metrics")
    dataset_args(s)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--stub", action="store_true")
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("stream", help="classify a scan and stream detections")
    s.add_argument("--in", required=True, dest="in_dir")
    s.add_argument("--server", required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--stub", action="store_true")
    s.add_argument("--stub-threshold", type=float, default=2.0,
                   help="depth std-dev (mm) where the stub fires")
    s.add_argument("--threshold", type=float, default=0.5)
    s.set_defaults(func=_cmd_stream)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
