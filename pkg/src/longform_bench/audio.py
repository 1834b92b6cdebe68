"""RIFF/WAVE decoding, windowed-sinc resampling and utterance slicing."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ANALYSIS_RATE = 16000

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        object.__setattr__(self, "samples", samples)
        if not 8000 <= int(self.sample_rate_hz) <= 192000:
            raise ValueError(f"sample rate {self.sample_rate_hz} Hz outside 8000..192000")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate_hz)


@dataclass(frozen=True)
class _WavInfo:
    format_code: int
    channels: int
    sample_rate: int
    bits: int
    data_offset: int
    n_frames: int

    @property
    def block_align(self) -> int:
        return self.channels * self.bits // 8


def _read_info(fh, path) -> _WavInfo:
    head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fh.seek(0, 2)
    file_size = fh.tell()
    pos = 12
    fmt = None
    while True:
        fh.seek(pos)
        chunk = fh.read(8)
        if len(chunk) < 8:
            raise WavFormatError(f"{path}: truncated file (no data chunk found)")
        cid, size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
        body_start = pos + 8
        if cid == b"fmt ":
            body = fh.read(size)
            if len(body) < 16:
                raise WavFormatError(f"{path}: truncated fmt chunk")
            code, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if code == _EXTENSIBLE:
                if len(body) < 40:
                    raise WavFormatError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
                code = struct.unpack("<H", body[24:26])[0]
            fmt = (code, channels, rate, bits)
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError(f"{path}: data chunk before fmt chunk")
            if body_start + size > file_size:
                raise WavFormatError(
                    f"{path}: truncated file ({file_size - body_start} of {size} data bytes present)"
                )
            code, channels, rate, bits = fmt
            if code == _PCM and bits in (16, 24, 32):
                pass
            elif code == _FLOAT and bits == 32:
                pass
            else:
                kind = {_PCM: "PCM", _FLOAT: "IEEE float"}.get(code, f"format code {code:#06x}")
                raise WavFormatError(f"{path}: unsupported encoding {kind} {bits}-bit")
            if channels not in (1, 2):
                raise WavFormatError(f"{path}: unsupported channel count {channels}")
            block = channels * bits // 8
            return _WavInfo(code, channels, rate, bits, body_start, size // block)
        pos = body_start + size + (size & 1)


def _decode(raw: bytes, info: _WavInfo) -> np.ndarray:
    if info.format_code == _FLOAT:
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif info.bits == 16:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif info.bits == 32:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        data = ints.astype(np.float64) / 8388608.0
    if info.channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return data


def read_wav(path) -> AudioBuffer:
    """Decode a whole WAV file to mono float samples in [-1, 1]."""
    with open(path, "rb") as fh:
        info = _read_info(fh, path)
        fh.seek(info.data_offset)
        raw = fh.read(info.n_frames * info.block_align)
    return AudioBuffer(_decode(raw, info), info.sample_rate)


def wav_duration(path) -> float:
    with open(path, "rb") as fh:
        info = _read_info(fh, path)
    return info.n_frames / info.sample_rate


def _sample_index(t: float, sr: int) -> int:
    # tolerate float error like 0.29 * 16000 = 4639.9999999
    return int(math.floor(t * sr + 1e-6))


def read_wav_span(path, onset_s: float, offset_s: float) -> AudioBuffer:
    """Decode only ``[onset_s, offset_s)`` of a file by seeking."""
    with open(path, "rb") as fh:
        info = _read_info(fh, path)
        duration = info.n_frames / info.sample_rate
        _check_span(onset_s, offset_s, duration, info.sample_rate)
        start = _sample_index(onset_s, info.sample_rate)
        stop = min(_sample_index(offset_s, info.sample_rate), info.n_frames)
        fh.seek(info.data_offset + start * info.block_align)
        raw = fh.read((stop - start) * info.block_align)
    return AudioBuffer(_decode(raw, info), info.sample_rate)


def write_wav(path, buffer: AudioBuffer, bits: int = 16) -> None:
    """Write mono PCM (16/24/32-bit) or float (bits=-32)."""
    x = np.asarray(buffer.samples, dtype=np.float64)
    if bits == -32:
        code, width, payload = _FLOAT, 32, x.astype("<f4").tobytes()
    elif bits in (16, 24, 32):
        code, width = _PCM, bits
        full = float(1 << (bits - 1))
        ints = np.clip(np.round(x * full), -full, full - 1).astype(np.int64)
        if bits == 16:
            payload = ints.astype("<i2").tobytes()
        elif bits == 32:
            payload = ints.astype("<i4").tobytes()
        else:
            u = (ints & 0xFFFFFF).astype(np.uint32)
            payload = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
    else:
        raise ValueError(f"unsupported bit depth {bits}")
    block = width // 8
    sr = int(buffer.sample_rate_hz)
    fmt = struct.pack("<HHIIHH", code, 1, sr, sr * block, block, width)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def _kaiser(u: np.ndarray, beta: float) -> np.ndarray:
    inside = np.abs(u) < 1.0
    arg = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    return np.where(inside, np.i0(beta * arg) / np.i0(beta), 0.0)


def resample(buffer: AudioBuffer, target_hz: int, taps: int = 64, beta: float = 8.0) -> AudioBuffer:
    """Band-limited resampling with a Kaiser-windowed sinc kernel.

    The kernel spans ``taps`` samples at the lower of the two rates and cuts
    off at the lower Nyquist frequency. Weights are renormalised per output
    sample, so DC passes exactly even at the buffer edges.
    """
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    src = buffer.sample_rate_hz
    if target_hz == src:
        return AudioBuffer(buffer.samples.copy(), src)
    x = buffer.samples
    ratio = target_hz / src
    n_out = int(round(len(x) * ratio))
    if n_out == 0 or len(x) == 0:
        return AudioBuffer(np.zeros(n_out), target_hz)
    fc = min(1.0, ratio)
    half = (taps / 2) / fc
    reach = int(math.ceil(half))
    offs = np.arange(-reach + 1, reach + 1)
    out = np.empty(n_out)
    step = max(1, 2_000_000 // len(offs))
    for lo in range(0, n_out, step):
        pos = np.arange(lo, min(lo + step, n_out)) / ratio
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offs[None, :]
        u = pos[:, None] - idx
        w = fc * np.sinc(fc * u) * _kaiser(u / half, beta)
        valid = (idx >= 0) & (idx < len(x))
        w = np.where(valid, w, 0.0)
        vals = x[np.clip(idx, 0, len(x) - 1)]
        out[lo : lo + len(pos)] = (w * vals).sum(axis=1) / w.sum(axis=1)
    return AudioBuffer(out, target_hz)


def _check_span(onset_s: float, offset_s: float, duration_s: float, sr: int) -> None:
    # under one sample of slack: rounded manifest times and re-slicing can
    # overshoot the end by a fraction of a sample; the stop index is clipped
    if not (0 <= onset_s < offset_s) or offset_s >= duration_s + 1.0 / sr:
        raise ValueError(
            f"span {onset_s:.3f}-{offset_s:.3f} s outside audio of duration {duration_s:.3f} s"
        )


def slice_utterance(buffer: AudioBuffer, onset_s: float, offset_s: float) -> AudioBuffer:
    """Samples ``[floor(onset*sr), floor(offset*sr))`` at the same rate."""
    sr = buffer.sample_rate_hz
    _check_span(onset_s, offset_s, buffer.duration_s, sr)
    start = _sample_index(onset_s, sr)
    stop = min(_sample_index(offset_s, sr), len(buffer))
    return AudioBuffer(buffer.samples[start:stop].copy(), sr)


def load_utterance(path, onset_s: float, offset_s: float, target_hz: int = ANALYSIS_RATE) -> AudioBuffer:
    """Seek-read an utterance span and bring it to the analysis rate."""
    buf = read_wav_span(path, onset_s, offset_s)
    if buf.sample_rate_hz != target_hz:
        buf = resample(buf, target_hz)
    return buf
