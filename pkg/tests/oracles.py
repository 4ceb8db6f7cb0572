"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written as plain nested loops (or exact
rational arithmetic) so it shares no code path with the package.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def reflect_index(i: int, n: int) -> int:
    """Mirror an out-of-range index without repeating the border pixel."""
    if n == 1:
        return 0
    if i < 0:
        i = -i
    if i >= n:
        i = 2 * n - 2 - i
    return i


def correlate2d_reflect(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """'Same' correlation of a single [H,W] image, reflect borders, loops only."""
    h, w = image.shape
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(kh):
                for dx in range(kw):
                    yy = reflect_index(y + dy - ph, h)
                    xx = reflect_index(x + dx - pw, w)
                    acc += kernel[dy, dx] * image[yy, xx]
            out[y, x] = acc
    return out


def normalize_by_max(mag: np.ndarray) -> np.ndarray:
    peak = float(mag.max())
    if peak < 1e-8:
        return np.zeros_like(mag)
    return mag / peak


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()
LAPLACIAN = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


def sobel_oracle(gray2d: np.ndarray) -> np.ndarray:
    gx = correlate2d_reflect(gray2d, SOBEL_X)
    gy = correlate2d_reflect(gray2d, SOBEL_Y)
    return normalize_by_max(np.sqrt(gx * gx + gy * gy))


def laplacian_oracle(gray2d: np.ndarray) -> np.ndarray:
    return normalize_by_max(np.abs(correlate2d_reflect(gray2d, LAPLACIAN)))


def flood_fill_hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """BFS from strong pixels through 8-connected weak pixels."""
    h, w = strong.shape
    keep = np.zeros((h, w), dtype=bool)
    queue = deque()
    for y in range(h):
        for x in range(w):
            if strong[y, x]:
                keep[y, x] = True
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and not keep[ny, nx]:
                    if weak[ny, nx] or strong[ny, nx]:
                        keep[ny, nx] = True
                        queue.append((ny, nx))
    return keep


def conv3x3_zero_pad(feature: np.ndarray, kernel: np.ndarray, bias: float) -> np.ndarray:
    """[C,h,w] feature, [C,3,3] kernel -> [h,w] single-channel conv, zero pad."""
    c, h, w = feature.shape
    out = np.full((h, w), bias, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for ch in range(c):
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w:
                            acc += kernel[ch, dy + 1, dx + 1] * feature[ch, yy, xx]
            out[y, x] += acc
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def bam_oracle(z: np.ndarray, kernel: np.ndarray, bias: float) -> np.ndarray:
    """[B,C,h,w] boundary attention: per-pixel sigmoid mask times input."""
    out = np.empty_like(z)
    for b in range(z.shape[0]):
        mask = sigmoid(conv3x3_zero_pad(z[b], kernel, bias))
        for ch in range(z.shape[1]):
            out[b, ch] = z[b, ch] * mask
    return out


def cam_oracle(z: np.ndarray, w0, b0, w1, b1) -> np.ndarray:
    """[B,C,h,w] channel attention with the shared two-layer transform.

    w0 is [hidden, C], w1 is [C, hidden] (torch Linear layout).
    """
    bsz, c, h, w = z.shape
    out = np.empty_like(z)
    for b in range(bsz):
        avg = np.array([z[b, ch].mean() for ch in range(c)])
        mx = np.array([z[b, ch].max() for ch in range(c)])

        def shared(desc):
            hidden = np.maximum(w0 @ desc + b0, 0.0)
            return w1 @ hidden + b1

        attn = sigmoid(shared(avg) + shared(mx))
        for ch in range(c):
            out[b, ch] = z[b, ch] * attn[ch]
    return out


def project_oracle(z, lin_w, lin_b, scale, shift, running_mean, running_var,
                   training: bool, eps: float = 1e-5):
    """[B,C,h,w] -> [B,d]: GAP, linear, batch norm, ReLU, loops only."""
    bsz, c = z.shape[0], z.shape[1]
    d = lin_w.shape[0]
    pooled = np.array([[z[b, ch].mean() for ch in range(c)] for b in range(bsz)])
    lin = np.array([lin_w @ pooled[b] + lin_b for b in range(bsz)])
    if training:
        mean = lin.mean(axis=0)
        var = lin.var(axis=0)  # biased, matching batch-norm semantics
    else:
        mean, var = running_mean, running_var
    normed = (lin - mean) / np.sqrt(var + eps)
    return np.maximum(normed * scale + shift, 0.0)


def bce_pixel_oracle(logits: np.ndarray, gt: np.ndarray) -> float:
    total = 0.0
    count = 0
    for x, y in zip(logits.ravel(), gt.ravel()):
        # stable form of -[y log sigma(x) + (1-y) log(1 - sigma(x))]
        total += max(x, 0.0) - x * y + np.log1p(np.exp(-abs(x)))
        count += 1
    return total / count


def dice_pixel_oracle(logits: np.ndarray, gt: np.ndarray, smooth: float = 1.0) -> float:
    bsz = logits.shape[0]
    losses = []
    for b in range(bsz):
        p = sigmoid(logits[b].ravel())
        g = gt[b].ravel()
        inter = float((p * g).sum())
        denom = float(p.sum() + g.sum())
        losses.append(1.0 - (2.0 * inter + smooth) / (denom + smooth))
    return float(np.mean(losses))


def dice_counts(pred2d: np.ndarray, gt2d: np.ndarray) -> tuple[int, int, int]:
    """(intersection, |P|, |G|) via explicit pixel loop."""
    inter = p = g = 0
    for pv, gv in zip(pred2d.ravel(), gt2d.ravel()):
        p += int(pv)
        g += int(gv)
        inter += int(pv) and int(gv)
    return inter, p, g


def finite_difference_gradients(forward, params: list[np.ndarray], step: float = 1e-5):
    """Central differences of a scalar-valued callable w.r.t. torch parameters.

    `forward` must recompute the scalar from current parameter values;
    `params` are torch tensors mutated in place between evaluations.
    """
    grads = []
    for p in params:
        flat = p.detach().view(-1)
        grad = np.zeros(flat.shape[0], dtype=np.float64)
        for i in range(flat.shape[0]):
            orig = flat[i].item()
            flat[i] = orig + step
            f_plus = forward()
            flat[i] = orig - step
            f_minus = forward()
            flat[i] = orig
            grad[i] = (f_plus - f_minus) / (2.0 * step)
        grads.append(grad.reshape(tuple(p.shape)))
    return grads
