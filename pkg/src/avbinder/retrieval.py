"""Exact cosine top-K retrieval and the Recall@K harness.

Scoring is exhaustive (no approximate index); ties are broken by ascending
id so rankings are a total order and tests can demand exact agreement with
a full-sort oracle. Recall@K over a validation set ranks, for each query,
all validation candidates of the other modality and asks whether the
query's own ground-truth partner landed in the top K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binder import BindModel, l2_normalize_rows, project_audio, project_video, row_dots
from .embedio import EmbeddingMatrix, PairedDataset

DIRECTION_V2A = "video-to-audio"
DIRECTION_A2V = "audio-to-video"
DIRECTIONS = (DIRECTION_V2A, DIRECTION_A2V)


@dataclass(frozen=True)
class RetrievalIndex:
    ids: tuple[str, ...]
    vectors: np.ndarray  # unit rows, float64

    def __post_init__(self) -> None:
        self.vectors.setflags(write=False)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    items: tuple[tuple[str, float], ...]  # (candidate id, score), best first


@dataclass(frozen=True)
class RecallReport:
    direction: str
    query_count: int
    recall: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ks = sorted(self.recall)
        values = [self.recall[k] for k in ks]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("recall fractions must lie in [0, 1]")
        if any(a > b for a, b in zip(values, values[1:])):
            raise ValueError("recall must be non-decreasing in K")

    def to_tsv(self) -> str:
        """One ``K<TAB>percent`` row per K, percentages with one decimal."""
        return "".join(f"{k}\t{self.recall[k] * 100:.1f}\n" for k in sorted(self.recall))

    def to_line(self) -> str:
        """Single-line machine-readable record."""
        cells = [f"direction={self.direction}", f"queries={self.query_count}"]
        cells += [f"R@{k}={self.recall[k] * 100:.1f}" for k in sorted(self.recall)]
        return "\t".join(cells)


def build_index(m: EmbeddingMatrix) -> RetrievalIndex:
    """Normalize projected embeddings into an immutable search index."""
    return RetrievalIndex(ids=m.ids, vectors=l2_normalize_rows(m.data))


def retrieve_topk(
    idx: RetrievalIndex, q: np.ndarray, k: int, query_id: str = ""
) -> RetrievalResult:
    """Top-min(k, count) candidates by cosine, ties broken by ascending id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if idx.count == 0:
        raise ValueError("empty index")
    nq = l2_normalize_rows(np.asarray(q, dtype=np.float64).ravel()[None, :])
    scores = np.clip(row_dots(nq, idx.vectors)[0], -1.0, 1.0)
    ids_arr = np.array(idx.ids)
    order = np.lexsort((ids_arr, -scores))[: min(k, idx.count)]
    return RetrievalResult(
        query_id=query_id,
        items=tuple((idx.ids[i], float(scores[i])) for i in order),
    )


def recall_from_projections(
    y_query: np.ndarray,
    y_candidate: np.ndarray,
    ids: tuple[str, ...],
    ks: list[int],
    direction: str,
) -> RecallReport:
    """Recall@K given already-projected query/candidate batches where row i
    of each side is the ground-truth pair."""
    if len(ids) != y_query.shape[0] or y_query.shape[0] != y_candidate.shape[0]:
        raise ValueError("projections and ids must have matching counts")
    if len(ids) == 0:
        raise ValueError("empty validation set")
    if any(k <= 0 for k in ks):
        raise ValueError("K values must be positive")
    u = l2_normalize_rows(y_query)
    v = l2_normalize_rows(y_candidate)
    scores = np.clip(row_dots(u, v), -1.0, 1.0)
    ids_arr = np.array(ids)
    n = len(ids)
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = scores[i]
        own = row[i]
        # candidate j outranks the true match if it scores higher, or ties
        # with a lexicographically smaller id (same rule as retrieve_topk)
        better = (row > own) | ((row == own) & (ids_arr < ids_arr[i]))
        ranks[i] = 1 + int(better.sum())
    recall = {int(k): float((ranks <= k).mean()) for k in ks}
    return RecallReport(direction=direction, query_count=n, recall=recall)


def recall_at_k(
    model: BindModel,
    val: PairedDataset,
    ks: list[int],
    direction: str = DIRECTION_V2A,
) -> RecallReport:
    """Project the validation pairs in eval mode and score Recall@K."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    yv = project_video(model, val.video.data)
    ya = project_audio(model, val.audio.data)
    if direction == DIRECTION_V2A:
        return recall_from_projections(yv, ya, val.ids, ks, direction)
    return recall_from_projections(ya, yv, val.ids, ks, direction)
