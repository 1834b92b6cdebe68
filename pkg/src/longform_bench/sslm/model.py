"""Predictive-coding model: feed-forward encoder, GRU context, per-step linear predictors.

Gradients are hand-written reverse mode; ``tests/test_sslm_grad.py`` checks
them against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .. import dsp


class TooShortError(ValueError):
    pass


class BatchTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class SslConfig:
    input_dim: int = 40
    enc_hidden: int = 128
    latent_dim: int = 64
    context_dim: int = 128
    n_steps: int = 12
    negatives: int = 49
    learning_rate: float = 2e-3
    batch_size: int = 16
    window: int = 128
    seed: int = 0
    init_pred_scale: float = 1e-3

    def __post_init__(self):
        dims = (self.input_dim, self.enc_hidden, self.latent_dim, self.context_dim, self.window)
        if min(dims) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.n_steps < 1 or self.negatives < 1:
            raise ValueError("n_steps and negatives must be >= 1")

    @property
    def chance(self) -> float:
        return 1.0 / (1 + self.negatives)

    def to_json(self) -> dict:
        return asdict(self)


PARAM_NAMES = ("enc_W1", "enc_b1", "enc_W2", "enc_b2", "gru_Wi", "gru_bi", "gru_Wh", "gru_bh", "pred_W")


def param_shapes(cfg: SslConfig) -> dict[str, tuple[int, ...]]:
    c3 = 3 * cfg.context_dim
    return {
        "enc_W1": (cfg.enc_hidden, cfg.input_dim),
        "enc_b1": (cfg.enc_hidden,),
        "enc_W2": (cfg.latent_dim, cfg.enc_hidden),
        "enc_b2": (cfg.latent_dim,),
        "gru_Wi": (c3, cfg.latent_dim),
        "gru_bi": (c3,),
        "gru_Wh": (c3, cfg.context_dim),
        "gru_bh": (c3,),
        "pred_W": (cfg.n_steps, cfg.latent_dim, cfg.context_dim),
    }


def init_params(cfg: SslConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, 0x55])
    shapes = param_shapes(cfg)
    g = 1.0 / math.sqrt(cfg.context_dim)
    return {
        "enc_W1": rng.normal(0.0, math.sqrt(2.0 / cfg.input_dim), shapes["enc_W1"]),
        "enc_b1": np.zeros(shapes["enc_b1"]),
        "enc_W2": rng.normal(0.0, math.sqrt(1.0 / cfg.enc_hidden), shapes["enc_W2"]),
        "enc_b2": np.zeros(shapes["enc_b2"]),
        "gru_Wi": rng.uniform(-g, g, shapes["gru_Wi"]),
        "gru_bi": np.zeros(shapes["gru_bi"]),
        "gru_Wh": rng.uniform(-g, g, shapes["gru_Wh"]),
        "gru_bh": np.zeros(shapes["gru_bh"]),
        "pred_W": rng.normal(0.0, cfg.init_pred_scale, shapes["pred_W"]),
    }


@dataclass
class SslModel:
    config: SslConfig
    params: dict
    trained_minutes: float = 0.0

    @classmethod
    def create(cls, config: SslConfig) -> "SslModel":
        return cls(config, init_params(config), 0.0)

    def copy(self) -> "SslModel":
        return SslModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.trained_minutes)


def utterance_frames(samples, sr: int = dsp.SR) -> np.ndarray:
    """Log-mel frames with per-utterance mean/variance normalisation."""
    mel = dsp.logmel_frames(samples, sr=sr)
    if len(mel) == 0:
        return mel
    sd = mel.std(axis=0)
    return (mel - mel.mean(axis=0)) / np.maximum(sd, 1e-3)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class _Cache:
    x: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    z: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    u: np.ndarray
    n: np.ndarray
    gh_n: np.ndarray
    c: np.ndarray


def _forward(params, x: np.ndarray) -> _Cache:
    """x is (B, T, D); returns every intermediate needed for backprop."""
    W1, b1, W2, b2 = params["enc_W1"], params["enc_b1"], params["enc_W2"], params["enc_b2"]
    Wi, bi, Wh, bh = params["gru_Wi"], params["gru_bi"], params["gru_Wh"], params["gru_bh"]
    B, T, _ = x.shape
    C = Wh.shape[1]
    a1 = x @ W1.T + b1
    h1 = np.maximum(a1, 0.0)
    z = h1 @ W2.T + b2
    gi = z @ Wi.T + bi
    h = np.zeros((B, C))
    h_prev = np.empty((B, T, C))
    r_all = np.empty((B, T, C))
    u_all = np.empty((B, T, C))
    n_all = np.empty((B, T, C))
    ghn_all = np.empty((B, T, C))
    c = np.empty((B, T, C))
    for t in range(T):
        gh = h @ Wh.T + bh
        g = gi[:, t]
        r = _sigmoid(g[:, :C] + gh[:, :C])
        u = _sigmoid(g[:, C : 2 * C] + gh[:, C : 2 * C])
        ghn = gh[:, 2 * C :]
        n = np.tanh(g[:, 2 * C :] + r * ghn)
        h_prev[:, t] = h
        h = (1.0 - u) * n + u * h
        r_all[:, t], u_all[:, t], n_all[:, t], ghn_all[:, t] = r, u, n, ghn
        c[:, t] = h
    return _Cache(x, a1, h1, z, h_prev, r_all, u_all, n_all, ghn_all, c)


def forward(model: SslModel, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Latents and contexts for one utterance of (T, D) frames."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] <= model.config.n_steps:
        raise TooShortError(
            f"utterance too short: {frames.shape[0]} frames, need > {model.config.n_steps}"
        )
    cache = _forward(model.params, frames[None])
    return cache.z[0], cache.c[0]


def sample_negatives(rng: np.random.Generator, positives: np.ndarray, pool: int, count: int) -> np.ndarray:
    """``count`` distinct pool indices per event, never the event's positive."""
    if pool - 1 < count:
        raise BatchTooSmallError(
            f"batch too small for negative sampling: {pool} candidate latents, need {count + 1}"
        )
    E = len(positives)
    if pool - 1 <= 4 * count:
        idx = np.stack([rng.choice(pool - 1, count, replace=False) for _ in range(E)]) if E else np.zeros((0, count), np.int64)
    else:
        idx = rng.integers(0, pool - 1, size=(E, count))
        while True:
            idx.sort(axis=1)
            dup = np.zeros(idx.shape, dtype=bool)
            dup[:, 1:] = idx[:, 1:] == idx[:, :-1]
            n_dup = int(dup.sum())
            if n_dup == 0:
                break
            idx[dup] = rng.integers(0, pool - 1, size=n_dup)
    return idx + (idx >= positives[:, None])


def _events(lengths: np.ndarray, T: int, K: int):
    """Flat event arrays (b, t, k) with t + k < length, k in 1..K."""
    b, t, k = np.meshgrid(np.arange(len(lengths)), np.arange(T), np.arange(1, K + 1), indexing="ij")
    valid = t + k < lengths[b]
    return b[valid], t[valid], k[valid]


@dataclass
class LossOutput:
    loss: float
    accuracy: float
    n_events: int
    n_correct: int
    grads: Optional[dict] = None


def infonce(
    params,
    cfg: SslConfig,
    x: np.ndarray,
    lengths: np.ndarray,
    rng: np.random.Generator,
    with_grad: bool = False,
) -> LossOutput:
    """Contrastive loss over a padded batch ``x`` (B, T, D) with true ``lengths``.

    The positive for event (t, k) is z[t+k]; negatives come uniformly
    without replacement from every other valid latent of the batch. An event
    counts as correct only when the positive scores strictly highest.
    """
    x = np.asarray(x, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    B, T, _ = x.shape
    K, Zd = cfg.n_steps, cfg.latent_dim
    cache = _forward(params, x)

    valid = np.arange(T)[None, :] < lengths[:, None]
    flat_of = np.full((B, T), -1, dtype=np.int64)
    flat_of[valid] = np.arange(int(valid.sum()))
    pool_z = cache.z[valid]
    M = len(pool_z)

    eb, et, ek = _events(lengths, T, K)
    E = len(eb)
    if E == 0:
        raise TooShortError(f"no prediction events: lengths must exceed {K}")
    W = params["pred_W"]
    Cd = W.shape[2]
    pred_all = (cache.c.reshape(B * T, Cd) @ W.reshape(K * Zd, Cd).T).reshape(B, T, K, Zd)
    preds = pred_all[eb, et, ek - 1]  # (E, Zd)

    pos = flat_of[eb, et + ek]
    neg = sample_negatives(rng, pos, M, cfg.negatives)
    cand = np.concatenate([pos[:, None], neg], axis=1)  # (E, 1+N)
    cand_z = pool_z[cand]  # (E, 1+N, Zd)
    scores = np.einsum("ez,enz->en", preds, cand_z)
    top = scores.max(axis=1, keepdims=True)
    ex = np.exp(scores - top)
    denom = ex.sum(axis=1, keepdims=True)
    logp_pos = scores[:, 0] - top[:, 0] - np.log(denom[:, 0])
    loss = float(-logp_pos.mean())
    correct = scores[:, 0] > scores[:, 1:].max(axis=1)
    n_correct = int(correct.sum())
    out = LossOutput(loss, n_correct / E, E, n_correct)
    if not with_grad:
        return out

    g = ex / denom
    g[:, 0] -= 1.0
    g /= E
    d_preds = np.einsum("en,enz->ez", g, cand_z)
    events_idx = np.repeat(np.arange(E), cand.shape[1])
    scatter = sparse.csr_matrix((g.ravel(), (cand.ravel(), events_idx)), shape=(M, E))
    d_pool = np.asarray(scatter @ preds)

    grads = {}
    # each (b, t, k) occurs once, so plain fancy assignment is safe
    d_pred_all = np.zeros_like(pred_all)
    d_pred_all[eb, et, ek - 1] = d_preds
    d_pred_all = d_pred_all.reshape(B * T, K * Zd)
    grads["pred_W"] = (d_pred_all.T @ cache.c.reshape(B * T, Cd)).reshape(W.shape)
    dc = (d_pred_all @ W.reshape(K * Zd, Cd)).reshape(B, T, Cd)

    dz = np.zeros_like(cache.z)
    dz[valid] = d_pool
    _backward_gru_encoder(params, cache, dc, dz, grads)
    out.grads = grads
    return out


def _backward_gru_encoder(params, cache: _Cache, dc: np.ndarray, dz: np.ndarray, grads: dict) -> None:
    Wi, Wh, W2 = params["gru_Wi"], params["gru_Wh"], params["enc_W2"]
    B, T, C = cache.c.shape
    dgi = np.zeros((B, T, 3 * C))
    dWh = np.zeros_like(Wh)
    dbh = np.zeros(3 * C)
    dh_next = np.zeros((B, C))
    for t in range(T - 1, -1, -1):
        dh = dc[:, t] + dh_next
        r, u, n, ghn, hp = cache.r[:, t], cache.u[:, t], cache.n[:, t], cache.gh_n[:, t], cache.h_prev[:, t]
        dn = dh * (1.0 - u)
        du = dh * (hp - n)
        da_n = dn * (1.0 - n * n)
        da_r = da_n * ghn * r * (1.0 - r)
        da_u = du * u * (1.0 - u)
        dgh = np.concatenate([da_r, da_u, da_n * r], axis=1)
        dgi[:, t] = np.concatenate([da_r, da_u, da_n], axis=1)
        dWh += dgh.T @ hp
        dbh += dgh.sum(axis=0)
        dh_next = dh * u + dgh @ Wh
    z2 = cache.z.reshape(B * T, -1)
    dgi2 = dgi.reshape(B * T, -1)
    grads["gru_Wi"] = dgi2.T @ z2
    grads["gru_bi"] = dgi2.sum(axis=0)
    grads["gru_Wh"] = dWh
    grads["gru_bh"] = dbh
    dz2 = dz.reshape(B * T, -1) + dgi2 @ Wi
    h1 = cache.h1.reshape(B * T, -1)
    grads["enc_W2"] = dz2.T @ h1
    grads["enc_b2"] = dz2.sum(axis=0)
    da1 = (dz2 @ W2) * (cache.a1.reshape(B * T, -1) > 0)
    grads["enc_W1"] = da1.T @ cache.x.reshape(B * T, -1)
    grads["enc_b1"] = da1.sum(axis=0)


def infonce_loss(model: SslModel, utterances, rng: np.random.Generator) -> tuple[float, float]:
    """(loss, accuracy) for a list of (T, D) frame arrays treated as one batch."""
    x, lengths = pad_batch(utterances, model.config.input_dim)
    out = infonce(model.params, model.config, x, lengths, rng)
    return out.loss, out.accuracy


def pad_batch(utterances, input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(u) for u in utterances], dtype=np.int64)
    x = np.zeros((len(utterances), int(lengths.max()) if len(lengths) else 0, input_dim))
    for i, u in enumerate(utterances):
        x[i, : len(u)] = u
    return x, lengths
