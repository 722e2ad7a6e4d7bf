"""Mini-batch contrastive training, checkpointing, synthetic data.

Each step runs both heads forward in training mode on a paired batch,
normalizes, scores all NxN cosine pairs, applies the symmetric contrastive
loss, backpropagates exactly and Adam-updates both heads. The final partial
batch of an epoch is dropped (batch statistics and in-batch negatives
degenerate on tiny remainders).

Checkpoint format (little-endian)::

    bytes 0-3   magic b"MVBM"
    bytes 4-7   version, uint32 (currently 1)
    bytes 8-11  temperature, float32
    bytes 12-27 four dims, uint32 each: video d_in, audio d_in, d_hid, d_out
    next        video head blocks, float32 row-major:
                  w1, b1, bn_gamma, bn_beta, bn_running_mean, bn_running_var, w2, b2
    next        audio head blocks, same order
    next        Adam first moments for (w1, b1, bn_gamma, bn_beta, w2, b2),
                video head then audio head
    next        Adam second moments, same order
    next        step counter, uint64
    next        seed, uint64
    next        uint32 length + canonical-JSON config echo (carries
                bn_momentum / bn_eps / dropout_p so eval is reproducible)

The writer is byte-deterministic; (seed, config, dataset) fully determine
the final checkpoint bytes.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .binder import BindModel, info_nce_backward, info_nce_loss, l2_normalize_rows, normalize_backward, row_dots
from .embedio import EmbeddingMatrix, PairedDataset
from .errors import (
    BadMagicError,
    DivergenceError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .projection import (
    PARAM_FIELDS,
    AdamState,
    HeadGradients,
    ProjectionHead,
    apply_update,
    head_backward,
    head_forward,
)
from .seeding import spawn_rng

CHECKPOINT_MAGIC = b"MVBM"
CHECKPOINT_VERSION = 1
LOSS_CEILING = 1e4

HEAD_BLOCKS = ("w1", "b1", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var", "w2", "b2")


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 50
    lr: float = 1e-3
    temperature: float = 0.07
    seed: int = 0
    shuffle: bool = True
    eval_every: int = 0  # epochs between eval callbacks; 0 disables

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.eval_every < 0:
            raise ValueError("eval_every must be non-negative")

    def as_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "lr": self.lr,
            "temperature": self.temperature,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "eval_every": self.eval_every,
        }


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    evals: list[tuple[int, object]] = field(default_factory=list)  # (step, report)
    epoch_seconds: list[float] = field(default_factory=list)


@dataclass
class TrainState:
    """Optimizer moments for both heads plus bookkeeping that rides along
    in checkpoints."""

    video_opt: AdamState
    audio_opt: AdamState
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return self.video_opt.t

    @classmethod
    def for_model(cls, model: BindModel, seed: int = 0, config: dict | None = None) -> "TrainState":
        return cls(
            video_opt=AdamState.for_head(model.video_head),
            audio_opt=AdamState.for_head(model.audio_head),
            seed=seed,
            config=dict(config or {}),
        )


def contrastive_loss_and_grads(
    model: BindModel,
    xv: np.ndarray,
    xa: np.ndarray,
    rng: np.random.Generator,
) -> tuple[float, HeadGradients, HeadGradients]:
    """Training-mode forward through both heads and the full exact backward.

    Draws the video dropout mask first, then the audio one, from ``rng``.
    """
    yv, cache_v = head_forward(model.video_head, xv, training=True, rng=rng)
    ya, cache_a = head_forward(model.audio_head, xa, training=True, rng=rng)
    u = l2_normalize_rows(yv)
    v = l2_normalize_rows(ya)
    scores = row_dots(u, v)
    loss = info_nce_loss(scores, model.temperature)

    g_scores = info_nce_backward(scores, model.temperature)
    du = g_scores @ v
    dv = g_scores.T @ u
    d_yv = normalize_backward(yv, du)
    d_ya = normalize_backward(ya, dv)
    grads_v = head_backward(model.video_head, cache_v, d_yv)
    grads_a = head_backward(model.audio_head, cache_a, d_ya)
    return loss, grads_v, grads_a


def train_step(
    model: BindModel,
    xv: np.ndarray,
    xa: np.ndarray,
    state: TrainState,
    lr: float,
    rng: np.random.Generator,
) -> float:
    """One optimization step on a paired batch; returns the pre-update loss."""
    if len(xv) != len(xa):
        raise ValueError("video/audio batches must have equal size")
    if len(xv) < 2:
        raise ValueError("training batches need at least 2 pairs (no negatives otherwise)")
    loss, grads_v, grads_a = contrastive_loss_and_grads(model, xv, xa, rng)
    if not np.isfinite(loss) or loss > LOSS_CEILING:
        raise DivergenceError(
            f"training diverged at step {state.step + 1}: loss={loss!r}"
        )
    apply_update(model.video_head, grads_v, state.video_opt, lr)
    apply_update(model.audio_head, grads_a, state.audio_opt, lr)
    return loss


def train(
    model: BindModel,
    dataset: PairedDataset,
    cfg: TrainConfig,
    state: TrainState | None = None,
    eval_fn: Callable[[BindModel], object] | None = None,
) -> TrainHistory:
    """Train in place for ``cfg.epochs`` epochs of floor(count/batch) steps.

    ``eval_fn`` (if given, together with ``cfg.eval_every``) is called with
    the model every few epochs; train itself never sees validation pairs.
    """
    if dataset.count == 0:
        raise ValueError("empty dataset")
    if cfg.batch_size > dataset.count:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds dataset count {dataset.count}"
        )
    if state is None:
        state = TrainState.for_model(model, seed=cfg.seed, config=cfg.as_dict())
    rng_shuffle = spawn_rng(cfg.seed, "shuffle")
    rng_dropout = spawn_rng(cfg.seed, "dropout")

    history = TrainHistory()
    steps_per_epoch = dataset.count // cfg.batch_size
    xv_all = dataset.video.data
    xa_all = dataset.audio.data
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        if cfg.shuffle:
            order = rng_shuffle.permutation(dataset.count)
        else:
            order = np.arange(dataset.count)
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            loss = train_step(model, xv_all[idx], xa_all[idx], state, cfg.lr, rng_dropout)
            history.losses.append(loss)
        history.epoch_seconds.append(time.perf_counter() - started)
        if eval_fn is not None and cfg.eval_every > 0 and epoch % cfg.eval_every == 0:
            history.evals.append((state.step, eval_fn(model)))
    return history


def gen_synthetic(
    n_pairs: int,
    latent_dim: int,
    noise: float,
    seed: int,
    dim: int = 1024,
) -> PairedDataset:
    """Linearly-bindable paired data: both modalities are fixed random
    linear images of a shared latent, plus isotropic noise."""
    if n_pairs < 1 or latent_dim < 1:
        raise ValueError("n_pairs and latent_dim must be positive")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = spawn_rng(seed, "synthetic")
    z = rng.standard_normal((n_pairs, latent_dim))
    map_v = rng.standard_normal((latent_dim, dim))
    map_a = rng.standard_normal((latent_dim, dim))
    video = z @ map_v + noise * rng.standard_normal((n_pairs, dim))
    audio = z @ map_a + noise * rng.standard_normal((n_pairs, dim))
    ids = tuple(f"syn-{i:05d}" for i in range(n_pairs))
    return PairedDataset(
        video=EmbeddingMatrix(ids=ids, data=video.astype(np.float32)),
        audio=EmbeddingMatrix(ids=ids, data=audio.astype(np.float32)),
    )


def _head_meta(head: ProjectionHead) -> dict:
    return {
        "bn_momentum": head.bn_momentum,
        "bn_eps": head.bn_eps,
        "dropout_p": head.dropout_p,
    }


def save_checkpoint(model: BindModel, state: TrainState, path) -> None:
    """Serialize model + optimizer state; byte-deterministic."""
    for head in (model.video_head, model.audio_head):
        if head.dtype != np.float32:
            raise ValueError("checkpoint format stores float32 heads only")
    if state.video_opt.t != state.audio_opt.t:
        raise ValueError("optimizer step counters out of sync")
    meta = {
        "video_head": _head_meta(model.video_head),
        "audio_head": _head_meta(model.audio_head),
        "config": state.config,
    }
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")

    parts = [
        struct.pack(
            "<4sIfIIII",
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            model.temperature,
            model.video_head.d_in,
            model.audio_head.d_in,
            model.video_head.d_hid,
            model.video_head.d_out,
        )
    ]
    for head in (model.video_head, model.audio_head):
        for name in HEAD_BLOCKS:
            parts.append(np.ascontiguousarray(getattr(head, name), dtype="<f4").tobytes())
    for moments in ("m", "v"):
        for opt in (state.video_opt, state.audio_opt):
            for name in PARAM_FIELDS:
                parts.append(
                    np.ascontiguousarray(getattr(opt, moments)[name], dtype="<f4").tobytes()
                )
    parts.append(struct.pack("<QQ", state.video_opt.t, state.seed))
    parts.append(struct.pack("<I", len(meta_blob)))
    parts.append(meta_blob)
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes, source: str) -> None:
        self.blob = blob
        self.offset = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise TruncatedPayloadError(f"{self.source}: checkpoint truncated")
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(n * 4)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def _block_shapes(d_in: int, d_hid: int, d_out: int) -> dict[str, tuple[int, ...]]:
    return {
        "w1": (d_in, d_hid),
        "b1": (d_hid,),
        "bn_gamma": (d_hid,),
        "bn_beta": (d_hid,),
        "bn_running_mean": (d_hid,),
        "bn_running_var": (d_hid,),
        "w2": (d_hid, d_out),
        "b2": (d_out,),
    }


def load_checkpoint(path) -> tuple[BindModel, TrainState]:
    """Inverse of :func:`save_checkpoint`, bit-exact."""
    source = Path(path).name
    reader = _Reader(Path(path).read_bytes(), source)
    magic, version, tau, d_in_v, d_in_a, d_hid, d_out = struct.unpack(
        "<4sIfIIII", reader.take(28)
    )
    if magic != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported version {version}")

    heads = []
    for d_in in (d_in_v, d_in_a):
        shapes = _block_shapes(d_in, d_hid, d_out)
        heads.append({name: reader.array(shapes[name]) for name in HEAD_BLOCKS})
    moments = {"m": [], "v": []}
    for kind in ("m", "v"):
        for d_in in (d_in_v, d_in_a):
            shapes = _block_shapes(d_in, d_hid, d_out)
            moments[kind].append({name: reader.array(shapes[name]) for name in PARAM_FIELDS})
    step, seed = struct.unpack("<QQ", reader.take(16))
    (meta_len,) = struct.unpack("<I", reader.take(4))
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TruncatedPayloadError(f"{source}: corrupt checkpoint metadata") from exc
    if reader.offset != len(reader.blob):
        raise TruncatedPayloadError(f"{source}: trailing data in checkpoint")

    built_heads = []
    for blocks, key in zip(heads, ("video_head", "audio_head")):
        head_meta = meta.get(key, {})
        built_heads.append(
            ProjectionHead(
                **blocks,
                bn_momentum=float(head_meta.get("bn_momentum", 0.1)),
                bn_eps=float(head_meta.get("bn_eps", 1e-5)),
                dropout_p=float(head_meta.get("dropout_p", 0.5)),
            )
        )
    model = BindModel(video_head=built_heads[0], audio_head=built_heads[1], temperature=tau)
    state = TrainState(
        video_opt=AdamState(m=moments["m"][0], v=moments["v"][0], t=int(step)),
        audio_opt=AdamState(m=moments["m"][1], v=moments["v"][1], t=int(step)),
        seed=int(seed),
        config=meta.get("config", {}),
    )
    return model, state
