"""Cosine similarity and the temperature-scaled contrastive objective.

Cosine is realized as normalize-then-dot so the backward pass through the
normalization lives in one place. The batch loss is the symmetric form:
with S the NxN cosine matrix whose diagonal holds the true pairs,

    L = 1/2 * [ mean_i -log softmax_row(S/tau)[i,i]
              + mean_i -log softmax_col(S/tau)[i,i] ]

Softmaxes are computed with max subtraction, so small temperatures do not
overflow.

The dot products behind every score go through one shape-independent
reduction (:func:`row_dots`); a similarity matrix entry is therefore
bit-identical to the corresponding pairwise cosine call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroNormError
from .projection import ProjectionHead, head_forward

NORM_FLOOR = 1e-12
DEFAULT_TEMPERATURE = 0.07

_DOT_CHUNK_ELEMS = 4_000_000  # cap the (rows x cols x dim) temporary


@dataclass
class BindModel:
    """Two projection heads plus the softmax temperature."""

    video_head: ProjectionHead
    audio_head: ProjectionHead
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.video_head.d_out != self.audio_head.d_out:
            raise ValueError("heads must share their output dimension")


@dataclass
class SimilarityMatrix:
    scores: np.ndarray
    row_ids: tuple[str, ...] | None = None
    col_ids: tuple[str, ...] | None = None


def row_dots(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """All pairwise dot products between rows of u and rows of v.

    Uses an elementwise-product + pairwise-sum reduction whose result does
    not depend on the shapes involved, unlike BLAS matmul; chunking over
    query rows keeps the temporary bounded without changing any bit.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape[1] != v.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape[1]} vs {v.shape[1]}")
    step = max(1, _DOT_CHUNK_ELEMS // max(1, v.shape[0] * v.shape[1]))
    out = np.empty((u.shape[0], v.shape[0]), dtype=np.float64)
    for start in range(0, u.shape[0], step):
        block = u[start : start + step]
        out[start : start + len(block)] = (block[:, None, :] * v[None, :, :]).sum(axis=-1)
    return out


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if (norms <= NORM_FLOOR).any():
        raise ZeroNormError("zero-norm embedding")
    out = x / norms
    return out[0] if squeeze else out


def normalize_backward(x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Gradient of row normalization: for u = x/|x|,
    dx = (du - u * <u, du>) / |x| row-wise."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    u = x / norms
    inner = (u * d_out).sum(axis=-1, keepdims=True)
    return (d_out - u * inner) / norms


def cosine_similarity(a: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if a.shape != v.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {v.shape[0]}")
    na = l2_normalize_rows(a[None, :])
    nv = l2_normalize_rows(v[None, :])
    score = row_dots(na, nv)[0, 0]
    return float(min(1.0, max(-1.0, score)))


def similarity_matrix(
    yv: np.ndarray,
    ya: np.ndarray,
    row_ids: tuple[str, ...] | None = None,
    col_ids: tuple[str, ...] | None = None,
) -> SimilarityMatrix:
    """Cosine scores for every (row of yv) x (row of ya) pair."""
    u = l2_normalize_rows(yv)
    v = l2_normalize_rows(ya)
    scores = np.clip(row_dots(u, v), -1.0, 1.0)
    return SimilarityMatrix(scores=scores, row_ids=row_ids, col_ids=col_ids)


def _as_square_scores(s, tau: float) -> np.ndarray:
    if isinstance(s, SimilarityMatrix):
        s = s.scores
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {s.shape}")
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    return s


def _diag_cross_entropy(logits: np.ndarray) -> float:
    # mean over rows of (logsumexp(row) - row diagonal), max-subtracted
    row_max = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - row_max).sum(axis=1)) + row_max[:, 0]
    return float((lse - np.diag(logits)).mean())


def info_nce_loss(s, tau: float) -> float:
    """Symmetric contrastive loss over a square similarity matrix whose
    diagonal holds the positive pairs."""
    scores = _as_square_scores(s, tau)
    logits = scores / tau
    return 0.5 * (_diag_cross_entropy(logits) + _diag_cross_entropy(logits.T))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def info_nce_backward(s, tau: float) -> np.ndarray:
    """dL/dS for :func:`info_nce_loss`:
    (P_row + P_col - 2I) / (2 N tau) with row/column softmaxes of S/tau."""
    scores = _as_square_scores(s, tau)
    n = scores.shape[0]
    logits = scores / tau
    p_row = _softmax_rows(logits)
    p_col = _softmax_rows(logits.T).T
    eye = np.eye(n)
    return (p_row + p_col - 2.0 * eye) / (2.0 * n * tau)


def project_video(model: BindModel, x: np.ndarray) -> np.ndarray:
    """Eval-mode projection of raw video features."""
    y, _ = head_forward(model.video_head, x, training=False)
    return y


def project_audio(model: BindModel, x: np.ndarray) -> np.ndarray:
    """Eval-mode projection of raw audio features."""
    y, _ = head_forward(model.audio_head, x, training=False)
    return y
