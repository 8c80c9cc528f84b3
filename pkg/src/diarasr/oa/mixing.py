"""Weighted observation addition of noisy, separated and GSS signals."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatch, RateMismatch
from .wav import WaveBuffer

logger = logging.getLogger(__name__)

__all__ = ["MixWeights", "mix", "mix_with_report", "mix_enhanced"]

_TOL = 1e-12


@dataclass(frozen=True)
class MixWeights:
    """Weights for (noisy sum, separated, GSS); ``w3`` is always ``1 - w1 - w2``."""

    w1: float
    w2: float

    def __post_init__(self):
        for name, v in (("w1", self.w1), ("w2", self.w2), ("w3", self.w3)):
            if not -_TOL <= v <= 1 + _TOL:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def w3(self) -> float:
        w3 = 1.0 - self.w1 - self.w2
        return 0.0 if abs(w3) < _TOL else w3

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w1, self.w2, self.w3)


def _check_aligned(*bufs: WaveBuffer):
    ref = bufs[0]
    for b in bufs[1:]:
        if b.sample_rate != ref.sample_rate:
            raise RateMismatch(f"{b.sample_rate} Hz vs {ref.sample_rate} Hz")
        if b.samples.shape != ref.samples.shape:
            raise LengthMismatch(f"shape {b.samples.shape} vs {ref.samples.shape}")


def mix_with_report(xsum: WaveBuffer, y_sep: WaveBuffer, xgss: WaveBuffer, w: MixWeights) -> tuple[WaveBuffer, int]:
    """Mix and clip to [-1, 1]; also return how many samples were clipped."""
    _check_aligned(xsum, y_sep, xgss)
    out = np.zeros_like(xsum.samples)
    # zero-weight terms are skipped so identity weights reproduce inputs bit-exactly
    for weight, buf in zip(w.as_tuple(), (xsum, y_sep, xgss)):
        if weight != 0:
            out = out + weight * buf.samples
    clipped = int(np.count_nonzero(np.abs(out) > 1.0))
    if clipped:
        logger.warning("mix clipped %d samples", clipped)
        out = np.clip(out, -1.0, 1.0)
    return WaveBuffer(out, xsum.sample_rate), clipped


def mix(xsum: WaveBuffer, y_sep: WaveBuffer, xgss: WaveBuffer, w: MixWeights) -> WaveBuffer:
    return mix_with_report(xsum, y_sep, xgss, w)[0]


def mix_enhanced(original: WaveBuffer, enhanced: WaveBuffer, w_enh: float = 0.7) -> WaveBuffer:
    """Blend an enhanced signal back with the original it came from."""
    if not 0.0 <= w_enh <= 1.0:
        raise ValueError("w_enh must lie in [0, 1]")
    _check_aligned(original, enhanced)
    if w_enh == 1.0:
        return enhanced
    if w_enh == 0.0:
        return original
    return WaveBuffer(w_enh * enhanced.samples + (1.0 - w_enh) * original.samples, original.sample_rate)
