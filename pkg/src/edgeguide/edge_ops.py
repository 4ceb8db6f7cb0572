"""Classical edge detectors used to build the guidance signal.

All operators work on channels-last numpy batches: images are
``[B, H, W, 3]``, grayscale and edge maps are ``[B, H, W, 1]``.  Every
detector returns values in ``[0, 1]``; Canny maps are strictly binary.
Borders are handled with reflect padding so no artificial edges appear
at image boundaries.  The functions are pure and hold no state.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

# ITU-R BT.601 luma weights
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()
LAPLACIAN = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)

# Per-image maxima below this are treated as zero (flat image).
_FLAT_EPS = 1e-8

DETECTOR_KINDS = ("sobel", "laplacian", "canny")


def _check_gray(gray: np.ndarray) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 4 or gray.shape[-1] != 1:
        raise ValueError(f"expected grayscale batch [B,H,W,1], got shape {gray.shape}")
    if not np.isfinite(gray).all():
        raise ValueError("grayscale batch contains non-finite values")
    return gray


def to_grayscale(images: np.ndarray) -> np.ndarray:
    """Convert an RGB batch [B,H,W,3] in [0,1] to luminance [B,H,W,1]."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ValueError(f"expected image batch [B,H,W,3], got shape {images.shape}")
    if not np.isfinite(images).all():
        raise ValueError("image batch contains non-finite values")
    gray = images @ _GRAY_WEIGHTS
    return np.clip(gray, 0.0, 1.0)[..., None]


def _correlate2d(batch: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """'Same'-size 2-D correlation over [B,H,W] with reflect borders."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    h, w = batch.shape[1], batch.shape[2]
    padded = np.pad(batch, ((0, 0), (ph, ph), (pw, pw)), mode="reflect")
    out = np.zeros_like(batch)
    for di in range(kh):
        for dj in range(kw):
            weight = kernel[di, dj]
            if weight != 0.0:
                out += weight * padded[:, di:di + h, dj:dj + w]
    return out


def _normalize_per_image(mag: np.ndarray) -> np.ndarray:
    """Scale each image by its own max; near-flat images become all zeros."""
    peak = mag.max(axis=(1, 2), keepdims=True)
    scale = np.where(peak < _FLAT_EPS, 0.0, 1.0 / np.maximum(peak, _FLAT_EPS))
    return mag * scale


def sobel_edges(gray: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude, per-image max-normalized to [0,1]."""
    gray = _check_gray(gray)[..., 0]
    gx = _correlate2d(gray, SOBEL_X)
    gy = _correlate2d(gray, SOBEL_Y)
    mag = np.hypot(gx, gy)
    return _normalize_per_image(mag)[..., None]


def laplacian_edges(gray: np.ndarray) -> np.ndarray:
    """Absolute Laplacian response, per-image max-normalized to [0,1]."""
    gray = _check_gray(gray)[..., 0]
    response = np.abs(_correlate2d(gray, LAPLACIAN))
    return _normalize_per_image(response)[..., None]


def _gaussian_kernel(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g1d = np.exp(-0.5 * (coords / sigma) ** 2)
    kernel = np.outer(g1d, g1d)
    return kernel / kernel.sum()


# (dy, dx) neighbor offsets along each quantized gradient direction.
_NMS_OFFSETS = {
    0: (0, 1),    # horizontal gradient: compare left/right
    45: (1, 1),
    90: (1, 0),   # vertical gradient: compare up/down
    135: (1, -1),
}


def _shift(mag: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Neighbor lookup with zero outside the image."""
    h, w = mag.shape[1], mag.shape[2]
    padded = np.pad(mag, ((0, 0), (1, 1), (1, 1)), mode="constant")
    return padded[:, 1 + dy:1 + dy + h, 1 + dx:1 + dx + w]


def _non_max_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros_like(angle)
    bins[(angle >= 22.5) & (angle < 67.5)] = 45
    bins[(angle >= 67.5) & (angle < 112.5)] = 90
    bins[(angle >= 112.5) & (angle < 157.5)] = 135

    keep = np.zeros(mag.shape, dtype=bool)
    for direction, (dy, dx) in _NMS_OFFSETS.items():
        fwd = _shift(mag, dy, dx)
        bwd = _shift(mag, -dy, -dx)
        # Ties break toward the backward side so ridges thin to one pixel.
        local_max = (mag > bwd) & (mag >= fwd)
        keep |= local_max & (bins == direction)
    return np.where(keep, mag, 0.0)


def _hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Keep strong pixels plus weak pixels 8-connected to a strong one."""
    out = np.zeros(strong.shape, dtype=bool)
    eight = np.ones((3, 3), dtype=int)
    for b in range(strong.shape[0]):
        candidates = strong[b] | weak[b]
        labels, count = ndimage.label(candidates, structure=eight)
        if count == 0:
            continue
        anchored = np.unique(labels[strong[b]])
        anchored = anchored[anchored > 0]
        out[b] = np.isin(labels, anchored)
    return out


def canny_edges(gray: np.ndarray, low: float = 0.1, high: float = 0.2) -> np.ndarray:
    """Canny detector: blur, gradient, thin, double-threshold, hysteresis.

    Thresholds apply to the per-image max-normalized gradient magnitude
    and must satisfy 0 <= low < high <= 1.  Output is binary {0, 1}.
    """
    if not (0.0 <= low < high <= 1.0):
        raise ValueError(f"require 0 <= low < high <= 1, got low={low} high={high}")
    nms = canny_nms_magnitude(gray)[..., 0]
    strong = nms >= high
    weak = (nms >= low) & ~strong
    edges = _hysteresis(strong, weak)
    return edges.astype(np.float64)[..., None]


def canny_nms_magnitude(gray: np.ndarray) -> np.ndarray:
    """Thinned, normalized gradient magnitude before thresholding.

    Exposed so the hysteresis stage can be audited independently.
    """
    gray = _check_gray(gray)[..., 0]
    smoothed = _correlate2d(gray, _gaussian_kernel(5, 1.4))
    gx = _correlate2d(smoothed, SOBEL_X)
    gy = _correlate2d(smoothed, SOBEL_Y)
    mag = _normalize_per_image(np.hypot(gx, gy))
    return _non_max_suppress(mag, gx, gy)[..., None]


def resize_edge_map(edge: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an edge map to [B,target_h,target_w,1]."""
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target dims must be >= 1, got {target_h}x{target_w}")
    edge = _check_gray(edge)
    b, h, w, _ = edge.shape
    if (h, w) == (target_h, target_w):
        return edge.copy()

    data = edge[..., 0]

    def axis_positions(src: int, dst: int) -> np.ndarray:
        if dst == 1 or src == 1:
            return np.zeros(dst, dtype=np.float64)
        return np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)

    ys = axis_positions(h, target_h)
    y0 = np.floor(ys).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    fy = (ys - y0)[None, :, None]
    rows = data[:, y0, :] + fy * (data[:, y1, :] - data[:, y0, :])

    xs = axis_positions(w, target_w)
    x0 = np.floor(xs).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    fx = (xs - x0)[None, None, :]
    out = rows[:, :, x0] + fx * (rows[:, :, x1] - rows[:, :, x0])
    return np.clip(out, 0.0, 1.0)[..., None]


def compute_edge_map(
    images: np.ndarray,
    detector: str = "sobel",
    canny_low: float = 0.1,
    canny_high: float = 0.2,
) -> np.ndarray:
    """Full-resolution edge map for an RGB batch using the named detector."""
    gray = to_grayscale(images)
    if detector == "sobel":
        return sobel_edges(gray)
    if detector == "laplacian":
        return laplacian_edges(gray)
    if detector == "canny":
        return canny_edges(gray, canny_low, canny_high)
    raise ValueError(f"unknown edge detector {detector!r}, expected one of {DETECTOR_KINDS}")
