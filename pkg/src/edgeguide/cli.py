"""Command-line entry point: train, eval, predict, inspect.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import torch
from PIL import Image

from .config import ConfigError, TrainConfig, parse_config_file
from .data import DataError, load_manifest, load_sample, merge_manifests, normalize_images
from .metrics import binarize
from .models import count_params, gflops
from .harness import NumericalError, evaluate, load_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    # usage problems map to exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    pass


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="plain key = value config file")
    p.add_argument("--data-dir", metavar="NAME=PATH", action="append", default=[],
                   help="dataset root; repeatable; NAME in {train,val} or a test dataset name")
    p.add_argument("--edge-detector", choices=("sobel", "laplacian", "canny"))
    p.add_argument("--canny-low", type=float, metavar="R")
    p.add_argument("--canny-high", type=float, metavar="R")
    p.add_argument("--no-sam", action="store_true", help="disable teacher guidance (baseline)")
    p.add_argument("--no-eg", action="store_true", help="project raw features, skip edge attention")
    p.add_argument("--epochs", type=int, metavar="N")
    p.add_argument("--batch-size", type=int, metavar="N")
    p.add_argument("--lr", type=float, metavar="R")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--teacher", choices=("stub", "sam-adapter"))
    p.add_argument("--student", choices=("tiny", "pvt-b0-adapter"))
    p.add_argument("--out", metavar="DIR", default="runs")
    p.add_argument("--checkpoint", metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgeguide", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the student with teacher guidance")
    _add_common_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on test datasets")
    _add_common_flags(p_eval)

    p_predict = sub.add_parser("predict", help="write mask and overlay PNGs for images")
    p_predict.add_argument("input", help="an image file or a directory of images")
    p_predict.add_argument("--masks", metavar="DIR", help="ground-truth masks for the overlay")
    _add_common_flags(p_predict)

    p_inspect = sub.add_parser("inspect", help="print parameter count, GFLOPs, and shape trace")
    _add_common_flags(p_inspect)
    return parser


def _resolve(args):
    """Apply precedence defaults < config file < flags; return config + roots."""
    overrides = {}
    train_roots: list = []
    val_root = None
    test_roots: dict = {}
    if args.config:
        parsed = parse_config_file(args.config)
        overrides.update(parsed.overrides)
        train_roots = list(parsed.train_data)
        val_root = parsed.val_data
        test_roots = dict(parsed.test_data)

    flag_map = {
        "edge_detector": "detector", "canny_low": "canny_low", "canny_high": "canny_high",
        "epochs": "epochs", "batch_size": "batch_size", "lr": "lr", "seed": "seed",
        "teacher": "teacher", "student": "student",
    }
    for flag, field_name in flag_map.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field_name] = value
    if args.no_sam:
        overrides["use_sam_guiding"] = False
        overrides["use_eg"] = False
    if args.no_eg:
        overrides["use_eg"] = False

    base = TrainConfig().to_dict()
    base.update(overrides)
    config = TrainConfig.from_dict(base).validate()

    flag_train: list = []
    for entry in args.data_dir:
        if "=" in entry:
            name, root = (p.strip() for p in entry.split("=", 1))
        else:
            name, root = os.path.basename(entry.rstrip("/")), entry
        if name == "train":
            flag_train.append(root)
        elif name == "val":
            val_root = root
        else:
            test_roots[name] = root
    if flag_train:
        train_roots = flag_train
    return config, train_roots, val_root, test_roots


def _load_train_manifests(config, train_roots, val_root):
    if not train_roots:
        raise ConfigError("no training data: pass --data-dir train=PATH or train_data in the config")
    manifests = [load_manifest(root, name=f"train{i}") for i, root in enumerate(train_roots)]
    train_manifest = manifests[0] if len(manifests) == 1 else merge_manifests(manifests, "train")
    val_manifest = load_manifest(val_root, name="val", split="test") if val_root else None
    return train_manifest, val_manifest


def cmd_train(args) -> int:
    config, train_roots, val_root, _ = _resolve(args)
    train_manifest, val_manifest = _load_train_manifests(config, train_roots, val_root)
    best_path, record = train(config, train_manifest, val_manifest, out_dir=args.out)
    _write_loss_curve(record, os.path.join(args.out, "loss_curve.png"))
    print(f"checkpoint: {best_path}")
    print(f"record: {os.path.join(args.out, 'record.csv')}")
    return EXIT_OK


def _write_loss_curve(record, path: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [row.epoch for row in record.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [row.total for row in record.epochs], label="total")
    ax.plot(epochs, [row.seg for row in record.epochs], label="seg")
    ax.plot(epochs, [row.guide for row in record.epochs], label="guide")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def metrics_markdown(rows: list[dict]) -> str:
    lines = [
        "| Dataset | mDice | mIoU | Params (M) | FLOPs (G) |",
        "| --- | --- | --- | --- | --- |",
    ]
    for row in rows:
        lines.append(
            f"| {row['dataset']} | {row['mdice']:.3f} | {row['miou']:.3f} "
            f"| {row['params_m']:.2f} | {row['gflops']:.2f} |"
        )
    return "\n".join(lines)


def metrics_csv(rows: list[dict]) -> str:
    lines = ["dataset,mDice,mIoU,params_M,gflops"]
    for row in rows:
        lines.append(
            f"{row['dataset']},{row['mdice']:.6f},{row['miou']:.6f},"
            f"{row['params_m']:.4f},{row['gflops']:.2f}"
        )
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    _, _, _, test_roots = _resolve(args)
    if not args.checkpoint:
        raise ConfigError("eval requires --checkpoint PATH")
    if not test_roots:
        raise ConfigError("eval requires at least one --data-dir NAME=PATH test dataset")
    rows = []
    for name in sorted(test_roots):
        manifest = load_manifest(test_roots[name], name=name, split="test")
        rows.append(evaluate(args.checkpoint, manifest))
    print(metrics_markdown(rows))
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(metrics_csv(rows))
    return EXIT_OK


def _predict_one(student, image_path: str, image_size: int):
    image_np, _ = load_sample(image_path, image_path, image_size)
    images_raw = image_np[None]
    with torch.no_grad():
        _, logits = student(normalize_images(images_raw))
    pred = binarize(torch.sigmoid(logits[-1]))[0, 0]
    return image_np, pred


def _overlay(image_np: np.ndarray, pred: np.ndarray, gt: np.ndarray | None) -> Image.Image:
    panels = [Image.fromarray((image_np * 255).astype(np.uint8))]
    if gt is not None:
        panels.append(Image.fromarray((gt * 255).astype(np.uint8)).convert("RGB"))
    panels.append(Image.fromarray((pred * 255).astype(np.uint8)).convert("RGB"))
    size = panels[0].size
    sheet = Image.new("RGB", (size[0] * len(panels), size[1]))
    for i, panel in enumerate(panels):
        sheet.paste(panel, (i * size[0], 0))
    return sheet


def cmd_predict(args) -> int:
    if not args.checkpoint:
        raise ConfigError("predict requires --checkpoint PATH")
    bundle = load_checkpoint(args.checkpoint)
    student = bundle.student
    student.eval()
    size = bundle.config.image_size

    if os.path.isdir(args.input):
        names = sorted(
            f for f in os.listdir(args.input)
            if os.path.splitext(f)[1].lower() in (".png", ".jpg", ".jpeg")
        )
        paths = [os.path.join(args.input, f) for f in names]
        if not paths:
            raise DataError(f"no images found in {args.input}")
    elif os.path.isfile(args.input):
        paths = [args.input]
    else:
        raise DataError(f"input not found: {args.input}")

    os.makedirs(args.out, exist_ok=True)
    for path in paths:
        stem = os.path.splitext(os.path.basename(path))[0]
        image_np, pred = _predict_one(student, path, size)
        gt = None
        if args.masks:
            gt_path = os.path.join(args.masks, f"{stem}.png")
            if os.path.exists(gt_path):
                _, gt = load_sample(path, gt_path, size)
        Image.fromarray((pred * 255).astype(np.uint8), mode="L").save(
            os.path.join(args.out, f"{stem}_mask.png")
        )
        _overlay(image_np, pred, gt).save(os.path.join(args.out, f"{stem}_overlay.png"))
        print(f"{stem}: mask + overlay written to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    config, _, _, _ = _resolve(args)
    from .harness import _build_all

    student, teacher, eg_sam, eg_seg = _build_all(config)
    size = config.image_size
    print(f"student params: {count_params(student):,} ({count_params(student) / 1e6:.2f} M)")
    print(f"student flops @ {size}x{size}: {gflops(student, size, size):.2f} G")
    if teacher is not None:
        print(f"teacher trainable params: {count_params(teacher)} (frozen)")
    if eg_sam is not None:
        guide_params = count_params(eg_sam) + (count_params(eg_seg) if eg_seg is not eg_sam else 0)
        print(f"guidance params (training only): {guide_params:,}")

    student.eval()
    with torch.no_grad():
        pyramid, logits = student(torch.zeros(1, 3, size, size))
    for i, feat in enumerate(pyramid, start=1):
        h, w, c = feat.shape[-2], feat.shape[-1], feat.shape[1]
        print(f"scale {i}: {h}x{w}x{c}")
    print(f"heads: {len(logits)} x {logits[0].shape[-2]}x{logits[0].shape[-1]}x1")
    if eg_sam is not None:
        print(f"embedding dim: {config.d}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "train": cmd_train,
            "eval": cmd_eval,
            "predict": cmd_predict,
            "inspect": cmd_inspect,
        }[args.command]
        return handler(args)
    except SystemExit_ as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
