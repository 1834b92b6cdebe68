"""Adam training over a seeded utterance stream with a doubling checkpoint ladder."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .model import PARAM_NAMES, SslConfig, SslModel, infonce, pad_batch, param_shapes

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DEFAULT_SCHEDULE = (2.5, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0)


class DivergenceError(FloatingPointError):
    pass


def doubling_schedule(first_minutes: float = 2.5, count: int = 7) -> list[float]:
    return [first_minutes * 2 ** i for i in range(count)]


def check_schedule(schedule: Sequence[float]) -> list[float]:
    sched = [float(s) for s in schedule]
    if not sched:
        raise ValueError("schedule must not be empty")
    if any(s <= 0 for s in sched) or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError(f"schedule must be positive and strictly increasing: {sched}")
    return sched


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, {k: np.zeros_like(v) for k, v in params.items()})


def adam_update(params: dict, grads: dict, state: AdamState, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for name in PARAM_NAMES:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def backward_and_step(model: SslModel, batch, rng: np.random.Generator,
                      state: Optional[AdamState] = None) -> tuple[SslModel, float, AdamState]:
    """One Adam step on ``batch`` (list of (T, D) arrays). Mutates ``model``."""
    if state is None:
        state = AdamState.zeros_like(model.params)
    x, lengths = pad_batch(batch, model.config.input_dim)
    out = infonce(model.params, model.config, x, lengths, rng, with_grad=True)
    for name in PARAM_NAMES:
        g = out.grads[name]
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"non-finite gradient in {name} at step {state.step + 1} (loss {out.loss})"
            )
    adam_update(model.params, out.grads, state, model.config.learning_rate)
    return model, out.loss, state


@dataclass(frozen=True)
class TrainingItem:
    """One training utterance; ``load`` returns its (T, D) input frames."""

    utterance_id: str
    minutes: float
    load: Callable[[], np.ndarray]


def _chunks(frames: np.ndarray, window: int, min_len: int) -> list[np.ndarray]:
    if len(frames) <= window:
        parts = [frames]
    else:
        parts = np.array_split(frames, math.ceil(len(frames) / window))
    return [p for p in parts if len(p) >= min_len]


def train(
    config: SslConfig,
    items: Sequence[TrainingItem],
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    on_checkpoint: Optional[Callable[[SslModel], None]] = None,
) -> list[SslModel]:
    """Train once through ``items`` in seeded shuffled order.

    Utterances are cut into chunks of at most ``config.window`` frames, each
    run from a zero recurrent state (truncated backpropagation). A checkpoint
    copy is taken whenever cumulative audio minutes cross a schedule point.
    """
    sched = check_schedule(schedule)
    total = sum(it.minutes for it in items)
    if total + 1e-9 < sched[-1]:
        raise ValueError(
            f"insufficient training audio: {total:.2f} min available, schedule needs "
            f"{sched[-1]:.2f} min (short by {sched[-1] - total:.2f} min)"
        )
    rng = np.random.default_rng([config.seed, 0x7A])
    order = rng.permutation(len(items))
    model = SslModel.create(config)
    state = AdamState.zeros_like(model.params)
    checkpoints: list[SslModel] = []
    pending: list[tuple[np.ndarray, float]] = []
    next_point = 0
    min_len = config.n_steps + 1

    consumed: list[float] = []

    def advance(batch_items):
        # exactly rounded running total, so equal shares land on schedule points
        nonlocal next_point
        consumed.extend(m for _, m in batch_items)
        model.trained_minutes = math.fsum(consumed)
        while next_point < len(sched) and model.trained_minutes + 1e-9 >= sched[next_point]:
            ckpt = model.copy()
            checkpoints.append(ckpt)
            if on_checkpoint is not None:
                on_checkpoint(ckpt)
            next_point += 1

    def run_step(batch_items):
        _, loss, _ = backward_and_step(model, [c for c, _ in batch_items], rng, state)
        if state.step % 50 == 0:
            log.info("step %d  minutes %.2f  loss %.4f", state.step, math.fsum(consumed), loss)
        advance(batch_items)

    orphan_minutes = 0.0
    for i in order:
        if next_point >= len(sched):
            break
        item = items[i]
        frames = np.asarray(item.load(), dtype=np.float64)
        parts = _chunks(frames, config.window, min_len)
        if not parts:
            orphan_minutes += item.minutes
            continue
        kept = sum(len(p) for p in parts)
        for p in parts:
            share = item.minutes * len(p) / kept + orphan_minutes
            orphan_minutes = 0.0
            pending.append((p, share))
        while len(pending) >= config.batch_size:
            run_step(pending[: config.batch_size])
            pending = pending[config.batch_size :]
    if next_point < len(sched) and pending:
        if orphan_minutes:
            p, m = pending[-1]
            pending[-1] = (p, m + orphan_minutes)
        total_pending = sum(len(p) for p, _ in pending)
        if total_pending > config.negatives:
            run_step(pending)
        else:
            advance(pending)
    return checkpoints


def params_digest(model: SslModel) -> str:
    h = hashlib.sha256()
    for name in PARAM_NAMES:
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    return h.hexdigest()


def checkpoint_to_json(model: SslModel) -> dict:
    return {
        "format": "longform-bench-ssl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_json(),
        "trained_minutes": model.trained_minutes,
        "params": {
            name: {"shape": list(model.params[name].shape), "data": model.params[name].ravel().tolist()}
            for name in PARAM_NAMES
        },
    }


def save_checkpoint(model: SslModel, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_json(model)), encoding="utf-8")


def checkpoint_from_json(data: dict) -> SslModel:
    if data.get("format") != "longform-bench-ssl-checkpoint":
        raise ValueError("not a longform-bench checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {data.get('version')!r} not supported (expected {CHECKPOINT_VERSION})"
        )
    config = SslConfig(**data["config"])
    shapes = param_shapes(config)
    params = {}
    for name in PARAM_NAMES:
        entry = data["params"][name]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != shapes[name]:
            raise ValueError(f"parameter {name} has shape {arr.shape}, config implies {shapes[name]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name} contains non-finite values")
        params[name] = arr
    return SslModel(config, params, float(data["trained_minutes"]))


def load_checkpoint(path) -> SslModel:
    return checkpoint_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
