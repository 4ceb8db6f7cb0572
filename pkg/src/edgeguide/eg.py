"""Edge-guiding head: fuse edges into features, attend, project to an embedding.

One ``EdgeGuide`` instance sits on each side of the teacher/student pair
(independent weights by default).  The pipeline is: multiply the feature
map by a resized edge map, apply boundary (spatial) attention and channel
attention with additive skip connections, then project to a fixed-width
embedding via global average pooling, a linear layer, batch norm and ReLU.

Feature maps are torch tensors ``[B, C, h, w]``; edge maps enter as numpy
``[B, H, W, 1]`` arrays (they carry no gradients) and are resized to the
feature grid internally.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .edge_ops import compute_edge_map, resize_edge_map

EMBED_DIM = 256
CHANNEL_REDUCTION = 16


def fuse(z: torch.Tensor, edge: torch.Tensor) -> torch.Tensor:
    """Scale every channel of z [B,C,h,w] by the edge map [B,1,h,w]."""
    if edge.shape[1] != 1:
        raise ValueError(f"edge map must have 1 channel, got {edge.shape[1]}")
    if z.shape[-2:] != edge.shape[-2:] or z.shape[0] != edge.shape[0]:
        raise ValueError(
            f"feature/edge shape mismatch: {tuple(z.shape)} vs {tuple(edge.shape)}"
        )
    return z * edge


class BoundaryAttention(nn.Module):
    """Single-channel sigmoid mask from a 3x3 conv, multiplied into the input."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.in_channels = in_channels
        self.conv = nn.Conv2d(in_channels, 1, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        mask = torch.sigmoid(self.conv(x))
        return x * mask


class ChannelAttention(nn.Module):
    """Shared two-layer MLP over avg- and max-pooled channel descriptors."""

    def __init__(self, in_channels: int, reduction: int = CHANNEL_REDUCTION):
        super().__init__()
        self.in_channels = in_channels
        hidden = max(in_channels // reduction, 1)
        self.fc = nn.Sequential(
            nn.Linear(in_channels, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, in_channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        avg = self.fc(x.mean(dim=(2, 3)))
        peak = self.fc(x.amax(dim=(2, 3)))
        attn = torch.sigmoid(avg + peak)
        return x * attn[:, :, None, None]


class ProjectionHead(nn.Module):
    """Global average pool, linear map, batch norm, ReLU -> [B, d]."""

    def __init__(self, in_channels: int, embed_dim: int = EMBED_DIM):
        super().__init__()
        self.linear = nn.Linear(in_channels, embed_dim)
        self.norm = nn.BatchNorm1d(embed_dim, eps=1e-5, momentum=0.1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.training and x.shape[0] < 2:
            raise ValueError("batch statistics need B >= 2 in training mode")
        pooled = x.mean(dim=(2, 3))
        return torch.relu(self.norm(self.linear(pooled)))


class EdgeGuide(nn.Module):
    """Full guidance head producing a [B, d] embedding from a feature map.

    With ``use_attention=False`` the edge fusion and both attention blocks
    are bypassed and the projection runs on the raw feature map (the
    guiding-without-edges ablation).
    """

    def __init__(
        self,
        in_channels: int,
        embed_dim: int = EMBED_DIM,
        reduction: int = CHANNEL_REDUCTION,
        use_attention: bool = True,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.use_attention = use_attention
        if use_attention:
            self.bam = BoundaryAttention(in_channels)
            self.cam = ChannelAttention(in_channels, reduction)
        self.project = ProjectionHead(in_channels, embed_dim)

    def forward(self, z: torch.Tensor, edge: np.ndarray | None = None) -> torch.Tensor:
        if z.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {z.shape[1]}")
        if not self.use_attention:
            return self.project(z)
        if edge is None:
            raise ValueError("edge map required when the attention stack is enabled")
        grid = self._edge_grid(edge, z)
        fused = fuse(z, grid)
        attended = fused + self.bam(fused)
        attended = attended + self.cam(attended)
        return self.project(attended)

    def forward_from_images(
        self,
        images: np.ndarray,
        z: torch.Tensor,
        detector: str = "sobel",
        canny_low: float = 0.1,
        canny_high: float = 0.2,
    ) -> torch.Tensor:
        """Run the detector on raw [B,H,W,3] images, then the guidance head."""
        edge = compute_edge_map(images, detector, canny_low, canny_high)
        return self.forward(z, edge)

    @staticmethod
    def _edge_grid(edge: np.ndarray, z: torch.Tensor) -> torch.Tensor:
        h, w = z.shape[-2:]
        resized = resize_edge_map(np.asarray(edge, dtype=np.float64), h, w)
        grid = torch.from_numpy(resized[..., 0]).unsqueeze(1)
        return grid.to(device=z.device, dtype=z.dtype)
