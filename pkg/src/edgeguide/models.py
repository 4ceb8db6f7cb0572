"""Teacher and student networks plus parameter/FLOP accounting.

The teacher is a frozen encoder emitting a 256-channel feature map; the
student is a four-scale pyramid encoder (strides 4/8/16/32) with a small
top-down decoder emitting D full-resolution logit heads.  Both sides have
a desk-scale built-in implementation and an adapter slot that loads a
TorchScript module from disk for real pretrained weights.
"""

from __future__ import annotations

import logging
import os

import torch
import torch.nn as nn
import torch.nn.functional as F

log = logging.getLogger(__name__)

TEACHER_CHANNELS = 256
DEFAULT_STUDENT_CHANNELS = (64, 128, 320, 512)
DEFAULT_DECODER_WIDTH = 64
DEFAULT_DECODER_HEADS = 2

TEACHER_KINDS = ("stub", "sam-adapter")
STUDENT_KINDS = ("tiny", "pvt-b0-adapter")


def _conv_bn_relu(cin: int, cout: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class StubTeacher(nn.Module):
    """Fixed-seed random conv encoder, permanently frozen.

    Stands in for a pretrained foundation encoder so the full training
    pipeline runs without large weight downloads.  Output is always
    [B, 256, 16, 16] regardless of input resolution.
    """

    def __init__(self, seed: int = 1000, out_size: tuple[int, int] = (16, 16)):
        super().__init__()
        self.out_size = out_size
        self.net = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(64, 128, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(128, TEACHER_CHANNELS, 3, stride=2, padding=1),
        )
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.net.parameters():
                fan_in = p.numel() // p.shape[0] if p.ndim > 1 else p.shape[0]
                bound = (1.0 / max(fan_in, 1)) ** 0.5
                p.uniform_(-bound, bound, generator=gen)
        for p in self.parameters():
            p.requires_grad_(False)
        super().train(False)

    def train(self, mode: bool = True):
        # frozen contract: never leaves eval mode
        return super().train(False)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            feats = self.net(images)
            feats = F.adaptive_avg_pool2d(feats, self.out_size)
        return feats.detach()


class ScriptedTeacher(nn.Module):
    """Adapter around a TorchScript image encoder (e.g. a SAM image encoder).

    The scripted module must map [B,3,H,W] to a [B,256,h,w] feature map;
    spatial dims are whatever the adapter reports.
    """

    def __init__(self, weights_path: str):
        super().__init__()
        if not os.path.exists(weights_path):
            raise FileNotFoundError(f"teacher adapter weights not found: {weights_path}")
        try:
            self.net = torch.jit.load(weights_path, map_location="cpu")
        except Exception as exc:
            raise RuntimeError(f"failed to load teacher adapter from {weights_path}: {exc}") from exc
        for p in self.net.parameters():
            p.requires_grad_(False)
        super().train(False)

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            feats = self.net(images)
        if feats.ndim != 4 or feats.shape[1] != TEACHER_CHANNELS:
            raise RuntimeError(
                f"teacher adapter must emit [B,{TEACHER_CHANNELS},h,w], got {tuple(feats.shape)}"
            )
        return feats.detach()


def build_teacher(kind: str = "stub", weights_path: str | None = None, seed: int = 1000) -> nn.Module:
    if kind == "stub":
        return StubTeacher(seed=seed)
    if kind == "sam-adapter":
        if weights_path is None:
            log.warning("sam-adapter selected without teacher_weights; falling back to stub teacher")
            return StubTeacher(seed=seed)
        return ScriptedTeacher(weights_path)
    raise ValueError(f"unknown teacher kind {kind!r}, expected one of {TEACHER_KINDS}")


class TinyBackbone(nn.Module):
    """Four-scale conv pyramid at strides 4/8/16/32 (ceil on odd sizes)."""

    def __init__(self, channels: tuple[int, int, int, int] = DEFAULT_STUDENT_CHANNELS):
        super().__init__()
        if len(channels) != 4 or any(c < 1 for c in channels):
            raise ValueError(f"need four positive channel counts, got {channels}")
        self.channels = tuple(channels)
        c1, c2, c3, c4 = channels
        self.stage1 = nn.Sequential(_conv_bn_relu(3, c1, 2), _conv_bn_relu(c1, c1, 2))
        self.stage2 = _conv_bn_relu(c1, c2, 2)
        self.stage3 = _conv_bn_relu(c2, c3, 2)
        self.stage4 = _conv_bn_relu(c3, c4, 2)

    def forward(self, images: torch.Tensor):
        f1 = self.stage1(images)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return f1, f2, f3, f4


class ScriptedBackbone(nn.Module):
    """Adapter around a TorchScript pyramid backbone (e.g. PVTv2-B0 weights).

    The scripted module must map [B,3,H,W] to a tuple of four feature maps
    following the stride-4/8/16/32 schedule.
    """

    def __init__(self, weights_path: str):
        super().__init__()
        if not os.path.exists(weights_path):
            raise FileNotFoundError(f"student adapter weights not found: {weights_path}")
        try:
            self.net = torch.jit.load(weights_path, map_location="cpu")
        except Exception as exc:
            raise RuntimeError(f"failed to load student adapter from {weights_path}: {exc}") from exc
        with torch.no_grad():
            probe = self.net(torch.zeros(1, 3, 64, 64))
        if len(probe) != 4:
            raise RuntimeError(f"student adapter must emit four pyramid scales, got {len(probe)}")
        self.channels = tuple(int(f.shape[1]) for f in probe)

    def forward(self, images: torch.Tensor):
        f1, f2, f3, f4 = self.net(images)
        return f1, f2, f3, f4


class TopDownDecoder(nn.Module):
    """Lateral 1x1 reduction plus upsample-and-add fusion with D logit heads.

    Heads are taken from the last `heads` fusion levels (coarse to fine);
    each is upsampled to the requested output resolution.
    """

    def __init__(
        self,
        channels: tuple[int, int, int, int],
        width: int = DEFAULT_DECODER_WIDTH,
        heads: int = DEFAULT_DECODER_HEADS,
    ):
        super().__init__()
        if not 1 <= heads <= 4:
            raise ValueError(f"decoder head count must be in 1..4, got {heads}")
        self.heads = heads
        self.laterals = nn.ModuleList(nn.Conv2d(c, width, kernel_size=1) for c in channels)
        self.refine = _conv_bn_relu(width, width, 1)
        self.head_convs = nn.ModuleList(nn.Conv2d(width, 1, kernel_size=1) for _ in range(heads))

    def forward(self, pyramid, out_size: tuple[int, int]):
        f1, f2, f3, f4 = pyramid
        x = self.laterals[3](f4)
        fused = [x]
        for feat, lateral in ((f3, self.laterals[2]), (f2, self.laterals[1]), (f1, self.laterals[0])):
            x = F.interpolate(x, size=feat.shape[-2:], mode="bilinear", align_corners=False)
            x = x + lateral(feat)
            fused.append(x)
        fused[-1] = self.refine(fused[-1])
        logits = []
        for head, feat in zip(self.head_convs, fused[-self.heads:]):
            out = head(feat)
            logits.append(F.interpolate(out, size=out_size, mode="bilinear", align_corners=False))
        return logits


class StudentNet(nn.Module):
    """Pyramid encoder plus decoder; exposes the last scale for guidance."""

    def __init__(self, backbone: nn.Module, decoder_width: int = DEFAULT_DECODER_WIDTH,
                 heads: int = DEFAULT_DECODER_HEADS):
        super().__init__()
        self.backbone = backbone
        self.channels = tuple(backbone.channels)
        self.decoder = TopDownDecoder(self.channels, decoder_width, heads)

    @property
    def last_channels(self) -> int:
        return self.channels[-1]

    def forward(self, images: torch.Tensor):
        pyramid = self.backbone(images)
        logits = self.decoder(pyramid, images.shape[-2:])
        return pyramid, logits


def build_student(
    kind: str = "tiny",
    channels: tuple[int, int, int, int] = DEFAULT_STUDENT_CHANNELS,
    decoder_width: int = DEFAULT_DECODER_WIDTH,
    heads: int = DEFAULT_DECODER_HEADS,
    weights_path: str | None = None,
) -> StudentNet:
    if kind == "tiny":
        backbone = TinyBackbone(channels)
    elif kind == "pvt-b0-adapter":
        if weights_path is None:
            log.warning("pvt-b0-adapter selected without student_weights; falling back to tiny backbone")
            backbone = TinyBackbone(channels)
        else:
            backbone = ScriptedBackbone(weights_path)
    else:
        raise ValueError(f"unknown student kind {kind!r}, expected one of {STUDENT_KINDS}")
    return StudentNet(backbone, decoder_width, heads)


def count_params(model: nn.Module) -> int:
    """Number of trainable scalar parameters."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def estimate_flops(model: nn.Module, input_h: int, input_w: int) -> int:
    """FLOPs (2x multiply-accumulates) over conv/linear layers, batch 1."""
    if input_h < 1 or input_w < 1:
        raise ValueError(f"input dims must be positive, got {input_h}x{input_w}")

    macs = 0

    def conv_hook(module, args, output):
        nonlocal macs
        out = output[0] if isinstance(output, tuple) else output
        kh, kw = module.kernel_size
        per_position = kh * kw * (module.in_channels // module.groups)
        macs += out.numel() * per_position

    def linear_hook(module, args, output):
        nonlocal macs
        out = output[0] if isinstance(output, tuple) else output
        macs += out.numel() * module.in_features

    handles = []
    for mod in model.modules():
        if isinstance(mod, nn.Conv2d):
            handles.append(mod.register_forward_hook(conv_hook))
        elif isinstance(mod, nn.Linear):
            handles.append(mod.register_forward_hook(linear_hook))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            model(torch.zeros(1, 3, input_h, input_w))
    finally:
        for h in handles:
            h.remove()
        model.train(was_training)
    return int(2 * macs)


def gflops(model: nn.Module, input_h: int, input_w: int) -> float:
    """estimate_flops reported in GFLOPs, rounded to 2 decimals."""
    return round(estimate_flops(model, input_h, input_w) / 1e9, 2)
