"""Diarization and recognition toolkit for multi-speaker meeting audio.

Submodules: ``timeline`` (RTTM and interval sweeps), ``metrics`` (DER,
CER, cpCER), ``diar_fusion`` and ``asr_fusion`` (system combination),
``clustering`` (AHC, PLDA, VBx), ``oa`` (observation addition) and
``pipeline`` (the recording-level cascade).
"""

from .errors import DiarAsrError
from .metrics import cer, cpcer, der
from .timeline import Annotation, Segment, overlap_ratio, parse_rttm, write_rttm

__version__ = "0.1.0"

__all__ = [
    "DiarAsrError",
    "Annotation",
    "Segment",
    "parse_rttm",
    "write_rttm",
    "overlap_ratio",
    "cer",
    "cpcer",
    "der",
]
