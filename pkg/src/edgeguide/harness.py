"""Training loop, checkpointing, and evaluation.

Each step runs the frozen teacher (no gradients), the student, and the two
guidance heads, then minimizes guide + seg with AdamW over the student and
guidance parameters only.  Fixed seed plus single-worker batching makes
the run record fully reproducible; the teacher is byte-frozen.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import ConfigError, TrainConfig, config_digest
from .data import DataError, DatasetManifest, make_batches
from .edge_ops import compute_edge_map
from .eg import EdgeGuide
from .losses import guide_loss, seg_loss
from .metrics import binarize, per_image_dice, per_image_iou
from .models import (
    TEACHER_CHANNELS,
    build_student,
    build_teacher,
    count_params,
    gflops,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
GRAD_CLIP_NORM = 1.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class NumericalError(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass
class StepRow:
    step: int
    guide: float
    seg: float
    total: float


@dataclass
class EpochRow:
    epoch: int
    guide: float
    seg: float
    total: float
    val_mdice: float
    val_miou: float
    wall_time: float


@dataclass
class RunRecord:
    epochs: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    _COLUMNS = ("epoch", "guide", "seg", "total", "val_mdice", "val_miou", "wall_time")

    def deterministic_bytes(self) -> bytes:
        """CSV bytes of all reproducible columns (wall_time excluded)."""
        lines = [",".join(c for c in self._COLUMNS if c != "wall_time")]
        for row in self.epochs:
            lines.append(
                f"{row.epoch},{row.guide!r},{row.seg!r},{row.total!r},"
                f"{row.val_mdice!r},{row.val_miou!r}"
            )
        return ("\n".join(lines) + "\n").encode("utf-8")

    def write_csv(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self._COLUMNS) + "\n")
            for row in self.epochs:
                fh.write(
                    f"{row.epoch},{row.guide!r},{row.seg!r},{row.total!r},"
                    f"{row.val_mdice!r},{row.val_miou!r},{row.wall_time:.3f}\n"
                )


def params_digest(model: torch.nn.Module) -> str:
    """SHA-256 over all named parameters and buffers, order-independent."""
    digest = hashlib.sha256()
    items = list(model.named_parameters()) + list(model.named_buffers())
    for name, tensor in sorted(items, key=lambda kv: kv[0]):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def build_guides(config: TrainConfig, student_last_channels: int):
    """Construct the teacher-side and student-side guidance heads."""
    if not config.use_sam_guiding:
        return None, None
    torch.manual_seed(config.seed + 1)
    eg_sam = EdgeGuide(TEACHER_CHANNELS, embed_dim=config.d, use_attention=config.use_eg)
    if config.share_eg:
        if student_last_channels != TEACHER_CHANNELS:
            raise ConfigError(
                "share_eg requires matching channel counts "
                f"(teacher {TEACHER_CHANNELS}, student {student_last_channels})"
            )
        return eg_sam, eg_sam
    torch.manual_seed(config.seed + 2)
    eg_seg = EdgeGuide(student_last_channels, embed_dim=config.d, use_attention=config.use_eg)
    return eg_sam, eg_seg


def _build_all(config: TrainConfig):
    torch.manual_seed(config.seed)
    student = build_student(
        kind=config.student,
        channels=config.student_channels,
        decoder_width=config.decoder_width,
        heads=config.decoder_heads,
        weights_path=config.student_weights,
    )
    eg_sam, eg_seg = build_guides(config, student.last_channels)
    teacher = None
    if config.use_sam_guiding:
        teacher = build_teacher(config.teacher, config.teacher_weights, seed=config.teacher_seed)
    return student, teacher, eg_sam, eg_seg


def evaluate_model(student, manifest: DatasetManifest, image_size: int, batch_size: int = 8):
    """Student-only inference at threshold 0.5; returns (mDice, mIoU)."""
    was_training = student.training
    student.eval()
    dices, ious = [], []
    with torch.no_grad():
        for batch in make_batches(manifest, batch_size, shuffle=False, image_size=image_size):
            _, logits = student(batch.images)
            pred = binarize(torch.sigmoid(logits[-1]))
            gt = batch.masks.numpy()
            dices.extend(per_image_dice(pred, gt).tolist())
            ious.extend(per_image_iou(pred, gt).tolist())
    student.train(was_training)
    return float(np.mean(dices)), float(np.mean(ious))


def train(
    config: TrainConfig,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest | None = None,
    out_dir: str = "runs",
):
    """Run the full loop; returns (best_checkpoint_path, RunRecord)."""
    config.validate()
    os.makedirs(out_dir, exist_ok=True)

    student, teacher, eg_sam, eg_seg = _build_all(config)
    teacher_digest_start = params_digest(teacher) if teacher is not None else None

    trainable = list(student.parameters())
    if eg_sam is not None:
        trainable += list(eg_sam.parameters())
        if eg_seg is not eg_sam:
            trainable += list(eg_seg.parameters())
    optimizer = torch.optim.AdamW(
        trainable, lr=config.lr, weight_decay=config.weight_decay,
        betas=ADAM_BETAS, eps=ADAM_EPS,
    )

    record = RunRecord()
    best_path = os.path.join(out_dir, "best.pt")
    last_path = os.path.join(out_dir, "last.pt")
    best_mdice = -1.0
    global_step = 0

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        student.train()
        if eg_sam is not None:
            eg_sam.train()
            eg_seg.train()

        guide_sum = 0.0
        seg_sum = 0.0
        total_sum = 0.0
        n_steps = 0
        batches = make_batches(
            train_manifest, config.batch_size, shuffle=True, seed=config.seed + epoch,
            image_size=config.image_size, hflip=config.hflip, vflip=config.vflip,
        )
        for batch in batches:
            global_step += 1
            pyramid, logits = student(batch.images)
            seg_term = seg_loss(logits, batch.masks)

            if config.use_sam_guiding:
                z_teacher = teacher(batch.images)
                edge = None
                if config.use_eg:
                    edge = compute_edge_map(
                        batch.images_raw, config.detector, config.canny_low, config.canny_high
                    )
                e_sam = eg_sam(z_teacher, edge)
                # last encoder scale drives the student-side guidance
                e_seg = eg_seg(pyramid[-1], edge)
                guide_term = guide_loss(e_seg, e_sam)
            else:
                guide_term = torch.zeros((), dtype=seg_term.dtype)

            loss = guide_term + seg_term
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite loss at step {global_step}")

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(trainable, GRAD_CLIP_NORM)
            optimizer.step()

            g = guide_term.detach().item()
            s = seg_term.detach().item()
            t = loss.detach().item()
            record.steps.append(StepRow(step=global_step, guide=g, seg=s, total=t))
            guide_sum += g
            seg_sum += s
            total_sum += t
            n_steps += 1

        guide_avg = guide_sum / n_steps
        seg_avg = seg_sum / n_steps
        total_avg = total_sum / n_steps

        if val_manifest is not None:
            val_mdice, val_miou = evaluate_model(student, val_manifest, config.image_size)
        else:
            val_mdice, val_miou = float("nan"), float("nan")

        wall = time.perf_counter() - t0
        record.epochs.append(EpochRow(
            epoch=epoch, guide=guide_avg, seg=seg_avg, total=total_avg,
            val_mdice=val_mdice, val_miou=val_miou, wall_time=wall,
        ))
        print(
            f"epoch={epoch} guide={guide_avg:.6f} seg={seg_avg:.6f} "
            f"total={total_avg:.6f} val_mdice={val_mdice:.4f}"
        )

        if val_manifest is not None and val_mdice > best_mdice:
            best_mdice = val_mdice
            save_checkpoint(best_path, config, student, eg_sam, eg_seg, epoch)

    save_checkpoint(last_path, config, student, eg_sam, eg_seg, config.epochs)
    if val_manifest is None:
        # without a validation set the last epoch is "best"
        save_checkpoint(best_path, config, student, eg_sam, eg_seg, config.epochs)

    if teacher is not None and params_digest(teacher) != teacher_digest_start:
        raise RuntimeError("frozen-teacher contract violated: parameters changed during training")

    record.write_csv(os.path.join(out_dir, "record.csv"))
    return best_path, record


def save_checkpoint(path: str, config: TrainConfig, student, eg_sam, eg_seg, epoch: int):
    """Versioned container holding config, epoch, and all trained states."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config_json": json.dumps(config.to_dict(), sort_keys=True),
        "config_digest": config_digest(config),
        "epoch": epoch,
        "student": student.state_dict(),
        "eg_sam": eg_sam.state_dict() if eg_sam is not None else None,
        "eg_seg": eg_seg.state_dict() if eg_seg is not None else None,
        "shared_eg": eg_sam is not None and eg_sam is eg_seg,
    }
    torch.save(payload, path)


@dataclass
class CheckpointBundle:
    config: TrainConfig
    student: object
    eg_sam: object
    eg_seg: object
    epoch: int


def load_checkpoint(path: str) -> CheckpointBundle:
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format version mismatch: file has {version}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    config = TrainConfig.from_dict(json.loads(payload["config_json"]))
    if config_digest(config) != payload.get("config_digest"):
        log.warning("checkpoint config digest mismatch in %s", path)

    student, _, eg_sam, eg_seg = _build_all(config)
    student.load_state_dict(payload["student"])
    if eg_sam is not None and payload["eg_sam"] is not None:
        eg_sam.load_state_dict(payload["eg_sam"])
        if payload.get("shared_eg"):
            eg_seg = eg_sam
        elif payload["eg_seg"] is not None:
            eg_seg.load_state_dict(payload["eg_seg"])
    return CheckpointBundle(config=config, student=student, eg_sam=eg_sam, eg_seg=eg_seg,
                            epoch=int(payload["epoch"]))


def evaluate(checkpoint_path: str, test_manifest: DatasetManifest, batch_size: int = 8) -> dict:
    """Metrics row for one dataset: student-only inference from a checkpoint."""
    bundle = load_checkpoint(checkpoint_path)
    size = bundle.config.image_size
    mdice, miou = evaluate_model(bundle.student, test_manifest, size, batch_size)
    return {
        "dataset": test_manifest.name,
        "mdice": mdice,
        "miou": miou,
        "params_m": count_params(bundle.student) / 1e6,
        "gflops": gflops(bundle.student, size, size),
    }
