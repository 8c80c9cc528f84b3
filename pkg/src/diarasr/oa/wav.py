"""16-bit PCM WAV I/O and the sample-aligned buffer the mixing code works on."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from ..errors import CorruptHeader, UnsupportedFormat

__all__ = ["WaveBuffer", "read_wav", "write_wav", "channel_sum"]

SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class WaveBuffer:
    samples: np.ndarray  # C x N
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("samples must be a non-empty C x N matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", x)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def mono(self) -> np.ndarray:
        if self.channels != 1:
            raise ValueError(f"expected mono audio, got {self.channels} channels")
        return self.samples[0]

    def __eq__(self, other):
        return (
            isinstance(other, WaveBuffer)
            and self.sample_rate == other.sample_rate
            and np.array_equal(self.samples, other.samples)
        )


def read_wav(path) -> WaveBuffer:
    """Read a PCM16 RIFF/WAVE file (path or binary file object), scaling by 1/32768."""
    src = path if hasattr(path, "read") else str(path)
    try:
        with wave.open(src, "rb") as f:
            width, n_ch, rate, n = f.getsampwidth(), f.getnchannels(), f.getframerate(), f.getnframes()
            if width != 2:
                raise UnsupportedFormat(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
            raw = f.readframes(n)
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(f"{path}: {exc}") from None
        raise CorruptHeader(f"{path}: {exc}") from None
    except EOFError:
        raise CorruptHeader(f"{path}: truncated header") from None
    if n == 0 or len(raw) == 0:
        raise CorruptHeader(f"{path}: empty data chunk")
    data = np.frombuffer(raw, dtype="<i2")
    if data.size % n_ch:
        raise CorruptHeader(f"{path}: data chunk is not a whole number of frames")
    return WaveBuffer(data.reshape(-1, n_ch).T / SCALE, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(samples * SCALE), -32768, 32767).astype("<i2")


def write_wav(buffer: WaveBuffer, path) -> None:
    """Write PCM16 with round-to-nearest and saturation."""
    pcm = to_pcm16(buffer.samples)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(buffer.channels)
        f.setsampwidth(2)
        f.setframerate(int(buffer.sample_rate))
        f.writeframes(pcm.T.tobytes())


def channel_sum(multi: WaveBuffer) -> WaveBuffer:
    """Collapse channels to mono by their sample-wise mean (keeps [-1, 1])."""
    if multi.channels == 1:
        return multi
    return WaveBuffer(multi.samples.mean(axis=0, keepdims=True), multi.sample_rate)
