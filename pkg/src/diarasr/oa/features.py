"""Log-mel filterbank features pooled to one vector per utterance."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import TooShort
from .wav import WaveBuffer

__all__ = ["FbankConfig", "hz_to_mel", "mel_to_hz", "mel_filterbank", "fbank", "pooled_fbank", "bridging_features"]


@dataclass(frozen=True)
class FbankConfig:
    n_mels: int = 40
    win_ms: float = 25.0
    hop_ms: float = 10.0
    floor: float = 1e-10
    fmin: float = 0.0
    fmax: float | None = None

    def to_dict(self):
        return asdict(self)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, cfg: FbankConfig = FbankConfig()) -> np.ndarray:
    """Triangular filters (n_mels x n_fft//2+1) with peaks evenly spaced in mel."""
    fmax = cfg.fmax or sample_rate / 2
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(fmax), cfg.n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(up, down), 0.0, None)


def fbank(signal, sample_rate: int, cfg: FbankConfig = FbankConfig()) -> np.ndarray:
    """Frames x n_mels log-mel energies (Hann window, power spectrum)."""
    x = np.asarray(signal, dtype=np.float64)
    win = int(round(sample_rate * cfg.win_ms / 1000))
    hop = int(round(sample_rate * cfg.hop_ms / 1000))
    if x.size < win:
        raise TooShort(f"{x.size} samples is shorter than one {win}-sample window")
    n_fft = 1 << (win - 1).bit_length()
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hanning(win + 1)[:-1]
    power = np.abs(np.fft.rfft(frames, n_fft)) ** 2
    energies = power @ mel_filterbank(sample_rate, n_fft, cfg).T
    return np.log(np.maximum(energies, cfg.floor))


def pooled_fbank(buf: WaveBuffer, cfg: FbankConfig = FbankConfig()) -> np.ndarray:
    """Mean and standard deviation of the log-mel frames, concatenated."""
    feats = fbank(buf.mono, buf.sample_rate, cfg)
    return np.concatenate([feats.mean(axis=0), feats.std(axis=0)])


def bridging_features(xsum: WaveBuffer, y_sep: WaveBuffer, xgss: WaveBuffer, cfg: FbankConfig = FbankConfig()) -> np.ndarray:
    """Sentence-level vector for the three signals: 3 x (2 x n_mels) values."""
    return np.concatenate([pooled_fbank(b, cfg) for b in (xsum, y_sep, xgss)])
