"""Per-modality projection network with hand-derived gradients.

Architecture, applied row-wise to a batch::

    linear(d_in -> d_hid) -> batchnorm -> ReLU -> dropout(p) -> linear(d_hid -> d_out)

Batch norm uses biased batch statistics (divisor N) in training and running
statistics at evaluation; dropout is inverted (survivors scaled by 1/(1-p))
so evaluation is the identity. The backward pass is exact, including the
dependence of the batch mean/variance on the inputs.

Parameters are stored in the head's dtype (float32 by default); all forward,
backward and optimizer arithmetic runs in float64 and is cast back on write.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PARAM_FIELDS = ("w1", "b1", "bn_gamma", "bn_beta", "w2", "b2")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ProjectionHead:
    w1: np.ndarray  # (d_in, d_hid)
    b1: np.ndarray  # (d_hid,)
    bn_gamma: np.ndarray  # (d_hid,)
    bn_beta: np.ndarray  # (d_hid,)
    bn_running_mean: np.ndarray  # (d_hid,)
    bn_running_var: np.ndarray  # (d_hid,)
    w2: np.ndarray  # (d_hid, d_out)
    b2: np.ndarray  # (d_out,)
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dropout_p: float = 0.5

    def __post_init__(self) -> None:
        # 0 is admitted (frozen running stats) so the train-mode forward can
        # be a pure function of (head, batch) when dropout is off too
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ValueError("bn_momentum must be in [0, 1)")
        if self.bn_eps <= 0.0:
            raise ValueError("bn_eps must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        for name in (*PARAM_FIELDS, "bn_running_mean", "bn_running_var"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"non-finite values in {name}")
        if (self.bn_running_var < 0).any():
            raise ValueError("bn_running_var must be non-negative")

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def d_hid(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.w1.dtype

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            bn_gamma=self.bn_gamma.copy(),
            bn_beta=self.bn_beta.copy(),
            bn_running_mean=self.bn_running_mean.copy(),
            bn_running_var=self.bn_running_var.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            bn_momentum=self.bn_momentum,
            bn_eps=self.bn_eps,
            dropout_p=self.dropout_p,
        )


@dataclass
class ForwardCache:
    """Everything a training-mode backward pass needs, nothing recomputed."""

    x: np.ndarray
    pre_bn: np.ndarray
    batch_mean: np.ndarray
    batch_var: np.ndarray
    x_hat: np.ndarray
    relu_mask: np.ndarray
    dropout_mask: np.ndarray | None
    dropout_scale: float
    bn_eps: float


@dataclass
class HeadGradients:
    w1: np.ndarray
    b1: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    x: np.ndarray  # gradient with respect to the input batch


def init_head(
    seed: int,
    d_in: int = 1024,
    d_hid: int = 512,
    d_out: int = 256,
    dtype=np.float32,
    dropout_p: float = 0.5,
) -> ProjectionHead:
    """Glorot-uniform weights, zero biases, identity batch-norm state."""
    if min(d_in, d_hid, d_out) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    bound1 = math.sqrt(6.0 / (d_in + d_hid))
    bound2 = math.sqrt(6.0 / (d_hid + d_out))
    return ProjectionHead(
        w1=rng.uniform(-bound1, bound1, (d_in, d_hid)).astype(dtype),
        b1=np.zeros(d_hid, dtype),
        bn_gamma=np.ones(d_hid, dtype),
        bn_beta=np.zeros(d_hid, dtype),
        bn_running_mean=np.zeros(d_hid, dtype),
        bn_running_var=np.ones(d_hid, dtype),
        w2=rng.uniform(-bound2, bound2, (d_hid, d_out)).astype(dtype),
        b2=np.zeros(d_out, dtype),
        dropout_p=dropout_p,
    )


def inverted_dropout(
    x: np.ndarray, p: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float]:
    """Zero each unit with probability p, scale survivors by 1/(1-p).

    Returns (output, keep_mask, scale). E[output] equals x.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    mask = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x * mask * scale, mask, scale


def head_forward(
    head: ProjectionHead,
    x: np.ndarray,
    training: bool,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Project a batch. Training mode updates running stats in place and
    returns a cache for :func:`head_backward`; eval mode returns no cache
    and draws nothing from ``rng``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.d_in:
        raise ValueError(f"expected batch of shape (N, {head.d_in}), got {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("batch must contain at least one row")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input batch")

    w1 = head.w1.astype(np.float64)
    w2 = head.w2.astype(np.float64)
    pre_bn = x @ w1 + head.b1.astype(np.float64)

    if training:
        batch_mean = pre_bn.mean(axis=0)
        batch_var = pre_bn.var(axis=0)  # biased, divisor N
        x_hat = (pre_bn - batch_mean) / np.sqrt(batch_var + head.bn_eps)
        mom = head.bn_momentum
        new_mean = (1.0 - mom) * head.bn_running_mean.astype(np.float64) + mom * batch_mean
        new_var = (1.0 - mom) * head.bn_running_var.astype(np.float64) + mom * batch_var
        head.bn_running_mean[...] = new_mean.astype(head.dtype)
        head.bn_running_var[...] = new_var.astype(head.dtype)
    else:
        batch_mean = head.bn_running_mean.astype(np.float64)
        batch_var = head.bn_running_var.astype(np.float64)
        x_hat = (pre_bn - batch_mean) / np.sqrt(batch_var + head.bn_eps)

    z = head.bn_gamma.astype(np.float64) * x_hat + head.bn_beta.astype(np.float64)
    relu_mask = z > 0
    hidden = z * relu_mask

    if training and head.dropout_p > 0.0:
        if rng is None:
            raise ValueError("training forward with dropout needs an rng")
        dropped, mask, scale = inverted_dropout(hidden, head.dropout_p, rng)
    else:
        dropped, mask, scale = hidden, None, 1.0

    y = dropped @ w2 + head.b2.astype(np.float64)
    if not training:
        return y, None
    cache = ForwardCache(
        x=x,
        pre_bn=pre_bn,
        batch_mean=batch_mean,
        batch_var=batch_var,
        x_hat=x_hat,
        relu_mask=relu_mask,
        dropout_mask=mask,
        dropout_scale=scale,
        bn_eps=head.bn_eps,
    )
    return y, cache


def head_backward(
    head: ProjectionHead, cache: ForwardCache, dy: np.ndarray
) -> HeadGradients:
    """Exact gradients of sum(loss) through the whole stack, replaying the
    dropout mask recorded in the cache."""
    dy = np.asarray(dy, dtype=np.float64)
    n, d_hid = cache.x_hat.shape
    if dy.shape != (n, head.d_out):
        raise ValueError(
            f"gradient shape {dy.shape} does not match cache batch ({n}, {head.d_out})"
        )

    gamma = head.bn_gamma.astype(np.float64)
    # Recompute the cheap elementwise activations from the cache.
    z = gamma * cache.x_hat + head.bn_beta.astype(np.float64)
    hidden = z * cache.relu_mask
    if cache.dropout_mask is not None:
        dropped = hidden * cache.dropout_mask * cache.dropout_scale
    else:
        dropped = hidden

    db2 = dy.sum(axis=0)
    dw2 = dropped.T @ dy
    d_dropped = dy @ head.w2.astype(np.float64).T

    if cache.dropout_mask is not None:
        d_hidden = d_dropped * cache.dropout_mask * cache.dropout_scale
    else:
        d_hidden = d_dropped
    dz = d_hidden * cache.relu_mask

    dgamma = (dz * cache.x_hat).sum(axis=0)
    dbeta = dz.sum(axis=0)

    # Batch-norm backward through the batch statistics.
    dx_hat = dz * gamma
    inv_std = 1.0 / np.sqrt(cache.batch_var + cache.bn_eps)
    d_pre = (inv_std / n) * (
        n * dx_hat
        - dx_hat.sum(axis=0)
        - cache.x_hat * (dx_hat * cache.x_hat).sum(axis=0)
    )

    db1 = d_pre.sum(axis=0)
    dw1 = cache.x.T @ d_pre
    dx = d_pre @ head.w1.astype(np.float64).T
    return HeadGradients(w1=dw1, b1=db1, bn_gamma=dgamma, bn_beta=dbeta, w2=dw2, b2=db2, x=dx)


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_head(cls, head: ProjectionHead) -> "AdamState":
        return cls(
            m={f: np.zeros_like(getattr(head, f)) for f in PARAM_FIELDS},
            v={f: np.zeros_like(getattr(head, f)) for f in PARAM_FIELDS},
        )


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Adam update in float64; returns (param, m, v) as float64 arrays.

    ``t`` is the 1-based step the update belongs to.
    """
    g = np.asarray(grad, dtype=np.float64)
    m = beta1 * np.asarray(m, dtype=np.float64) + (1.0 - beta1) * g
    v = beta2 * np.asarray(v, dtype=np.float64) + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param = np.asarray(param, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


def apply_update(
    head: ProjectionHead, grads: HeadGradients, opt_state: AdamState, lr: float
) -> None:
    """Adam-update every parameter in place; running stats are untouched."""
    opt_state.t += 1
    for name in PARAM_FIELDS:
        param = getattr(head, name)
        new_p, new_m, new_v = adam_step(
            param,
            getattr(grads, name),
            opt_state.m[name],
            opt_state.v[name],
            opt_state.t,
            lr,
        )
        param[...] = new_p.astype(head.dtype)
        opt_state.m[name][...] = new_m.astype(opt_state.m[name].dtype)
        opt_state.v[name][...] = new_v.astype(opt_state.v[name].dtype)
