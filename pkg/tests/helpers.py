"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np


def make_bordered_frame(phase: float, height: int, width: int, borders_px) -> np.ndarray:
    """One gray frame: black borders around band-limited 16-level content.

    The content is a quantized smooth wave, so its Otsu binarization is a
    single flat region and only the border boundaries produce edges; the
    phase varies it frame to frame.
    """
    top, bottom, left, right = borders_px
    img = np.zeros((height, width), np.uint8)
    ch, cw = height - top - bottom, width - left - right
    yy, xx = np.mgrid[0:ch, 0:cw]
    wave = np.sin(xx / 17.0 + phase) + np.cos(yy / 23.0 + 0.7 * phase)
    levels = np.floor((wave + 2.0) / 4.0 * 16).clip(0, 15)
    img[top : height - bottom, left : width - right] = (110 + 3 * levels).astype(np.uint8)
    return img


def make_clip(borders_px, n_frames: int = 10, height: int = 144, width: int = 192):
    return [make_bordered_frame(0.31 * i, height, width, borders_px) for i in range(n_frames)]


def uniform_histogram_frame(side: int = 128) -> np.ndarray:
    """Every intensity occurs equally often: histogram std is exactly 0."""
    assert (side * side) % 256 == 0
    return np.tile(np.arange(256, dtype=np.uint8), side * side // 256).reshape(side, side)


def otsu_exhaustive(img: np.ndarray) -> int:
    """Independent exhaustive Otsu: python-int arithmetic over all 256
    thresholds, between-class variance compared exactly as rationals."""
    counts = np.bincount(img.ravel(), minlength=256).tolist()
    total = sum(counts)
    total_sum = sum(i * c for i, c in enumerate(counts))
    best_t = 0
    best_num, best_den = 0, 1
    for t in range(256):
        n0 = sum(counts[: t + 1])
        s0 = sum(i * counts[i] for i in range(t + 1))
        n1 = total - n0
        s1 = total_sum - s0
        if n0 == 0 or n1 == 0:
            continue
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t
    return best_t


def sobel_naive(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense 3x3 correlation with replicate padding, plain python loops."""
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    h, w = img.shape
    gx = np.zeros((h, w), np.int64)
    gy = np.zeros((h, w), np.int64)
    for y in range(h):
        for x in range(w):
            sx = sy = 0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    sx += kx[dy + 1][dx + 1] * int(img[yy, xx])
                    sy += ky[dy + 1][dx + 1] * int(img[yy, xx])
            gx[y, x] = sx
            gy[y, x] = sy
    return gx, gy


def topk_full_sort(ids, scores, k: int):
    """Reference top-k: full sort by (-score, id)."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[:k]]
