"""Hot pixel kernels with numba-JIT and pure-numpy implementations.

The two per-pixel loops in the frame pipeline (3x3 Sobel correlation and
256-bin histogramming) dominate runtime on large frames. Both carry an
``@njit`` build and a vectorized numpy fallback; the active path is chosen
once at import time:

  * numba importable and ``AVBINDER_NUMBA`` unset/"1"  -> JIT kernels
  * ``AVBINDER_NUMBA=0`` (or numba missing)            -> numpy kernels

All arithmetic is integer, so the two paths are bit-identical; tests assert
that and ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("AVBINDER_NUMBA", "1").strip().lower()
_want_numba = _flag not in {"0", "false", "no", "off"}

try:
    if not _want_numba:
        raise ImportError("numba disabled via AVBINDER_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):  # signature-compatible no-op decorator
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


@njit(cache=True)
def _sobel_jit(img):
    # img: int32 2D, replicate padding at the border. Gx kernel
    # [[-1,0,1],[-2,0,2],[-1,0,1]], Gy its transpose, applied as correlation.
    h, w = img.shape
    gx = np.empty((h, w), np.int32)
    gy = np.empty((h, w), np.int32)
    for y in range(h):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < h - 1 else h - 1
        for x in range(w):
            xm = x - 1 if x > 0 else 0
            xp = x + 1 if x < w - 1 else w - 1
            tl = img[ym, xm]
            tc = img[ym, x]
            tr = img[ym, xp]
            ml = img[y, xm]
            mr = img[y, xp]
            bl = img[yp, xm]
            bc = img[yp, x]
            br = img[yp, xp]
            gx[y, x] = (tr + 2 * mr + br) - (tl + 2 * ml + bl)
            gy[y, x] = (bl + 2 * bc + br) - (tl + 2 * tc + tr)
    return gx, gy


def _sobel_numpy(img):
    p = np.pad(img, 1, mode="edge")
    tl = p[:-2, :-2]
    tc = p[:-2, 1:-1]
    tr = p[:-2, 2:]
    ml = p[1:-1, :-2]
    mr = p[1:-1, 2:]
    bl = p[2:, :-2]
    bc = p[2:, 1:-1]
    br = p[2:, 2:]
    gx = (tr + 2 * mr + br) - (tl + 2 * ml + bl)
    gy = (bl + 2 * bc + br) - (tl + 2 * tc + tr)
    return gx, gy


@njit(cache=True)
def _hist256_jit(flat):
    counts = np.zeros(256, np.int64)
    for i in range(flat.size):
        counts[flat[i]] += 1
    return counts


def _hist256_numpy(flat):
    return np.bincount(flat, minlength=256).astype(np.int64)


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel correlation with replicate padding; returns (Gx, Gy) int16.

    For 8-bit input the response lies in [-1020, 1020], inside int16.
    """
    work = np.ascontiguousarray(img, dtype=np.int32)
    if NUMBA_ENABLED:
        gx, gy = _sobel_jit(work)
    else:
        gx, gy = _sobel_numpy(work)
    return gx.astype(np.int16), gy.astype(np.int16)


def hist256(img: np.ndarray) -> np.ndarray:
    """Counts of each intensity 0..255 as int64[256]."""
    flat = np.ascontiguousarray(img, dtype=np.uint8).ravel()
    if NUMBA_ENABLED:
        return _hist256_jit(flat)
    return _hist256_numpy(flat)
