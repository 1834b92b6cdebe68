"""Signal builders and shared state for the test suite."""

import json

import numpy as np

from longform_bench import pipeline

SR = 16000

# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def harmonic(f0, duration_s, sr=SR, seed=0, n_harm=12):
    """Harmonic complex at ``f0`` with 1/h amplitudes and random phases."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration_s * sr))) / sr
    x = np.zeros_like(t)
    for h in range(1, n_harm + 1):
        if h * f0 >= 0.45 * sr:
            break
        x += np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
    return x / np.max(np.abs(x)) * 0.5


def pulse_train(f0, duration_s, sr=SR):
    n = int(round(duration_s * sr))
    phase = np.cumsum(np.full(n, f0 / sr))
    x = np.diff(np.floor(phase), prepend=0.0)
    # smooth the clicks slightly so the source is band-limited enough for framing
    return np.convolve(x, np.hanning(9), mode="same")


def add_noise(x, snr_db, seed=0):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(x))
    p = np.mean(x ** 2)
    return x + noise * np.sqrt(p / 10 ** (snr_db / 10))


def small_config(tmp_path, **overrides):
    body = {
        "out_dir": "run",
        "schedule_minutes": [0.5, 1.0],
        "synth": {"count_per_register": 6},
    }
    body.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(body), encoding="utf-8")
    return path


def run_chain(cfg, stages=pipeline.STAGES):
    for stage in stages:
        pipeline.COMMANDS[stage](cfg)


def gradient_check(params, cfg, x, lengths, seed=7, h=1e-4):
    """Max relative error per parameter block: analytic vs central differences.

    The negative sample is held fixed by reseeding the rng for every loss call.
    """
    from longform_bench.sslm.model import infonce

    analytic = infonce(params, cfg, x, lengths, np.random.default_rng(seed), with_grad=True).grads
    errors = {}
    for name, arr in params.items():
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = infonce(params, cfg, x, lengths, np.random.default_rng(seed)).loss
            arr[idx] = old - h
            down = infonce(params, cfg, x, lengths, np.random.default_rng(seed)).loss
            arr[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        a = analytic[name]
        rel = np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), 1e-8)
        errors[name] = float(rel.max())
    return errors


def micro_setup(seed=3, lengths=(8,)):
    from longform_bench.sslm.model import SslConfig, init_params

    cfg = SslConfig(input_dim=4, enc_hidden=6, latent_dim=5, context_dim=6, n_steps=2, negatives=3,
                    seed=seed, init_pred_scale=0.5)
    params = init_params(cfg)
    rng = np.random.default_rng(seed + 1)
    for name in ("enc_b1", "enc_b2", "gru_bi", "gru_bh"):
        # nonzero biases so their gradients are exercised away from the init point
        params[name] = rng.normal(0, 0.3, params[name].shape)
    lengths = np.array(lengths)
    x = rng.normal(size=(len(lengths), int(lengths.max()), 4))
    for i, n in enumerate(lengths):
        x[i, n:] = 0.0
    return cfg, params, x, lengths
