"""Scoring: character error rate, cpCER and diarization error rate."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyReference, RecordingMismatch
from .timeline import Annotation, atomic_regions

__all__ = [
    "CerBreakdown",
    "DerBreakdown",
    "Utterance",
    "Transcript",
    "normalize_text",
    "edit_distance",
    "cer",
    "cpcer",
    "der",
    "read_transcripts",
    "write_transcripts",
]

DEFAULT_COLLAR = 0.25


@dataclass(frozen=True)
class CerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int
    cer: float

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass(frozen=True)
class DerBreakdown:
    missed: float
    false_alarm: float
    confusion: float
    scored_speech: float
    der: float
    mapping: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Utterance:
    speaker: str
    start: float
    text: str


@dataclass(frozen=True)
class Transcript:
    recording_id: str
    utterances: tuple[Utterance, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.utterances, key=lambda u: (u.start, u.speaker)))
        object.__setattr__(self, "utterances", ordered)

    def speaker_texts(self) -> dict[str, str]:
        """Concatenate each speaker's utterances in start-time order."""
        out: dict[str, list[str]] = {}
        for u in self.utterances:
            out.setdefault(u.speaker, []).append(u.text)
        return {spk: "".join(parts) for spk, parts in out.items()}


def read_transcripts(text: str) -> list[Transcript]:
    """Parse JSON lines with keys recording_id, speaker, start, text."""
    by_rec: dict[str, list[Utterance]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        by_rec.setdefault(obj["recording_id"], []).append(
            Utterance(str(obj["speaker"]), float(obj["start"]), obj["text"])
        )
    return [Transcript(rec, tuple(utts)) for rec, utts in by_rec.items()]


def write_transcripts(transcripts: list[Transcript]) -> str:
    lines = []
    for tr in transcripts:
        for u in tr.utterances:
            obj = {"recording_id": tr.recording_id, "speaker": u.speaker, "start": u.start, "text": u.text}
            lines.append(json.dumps(obj, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def normalize_text(text: str, strip_punct: bool = True) -> str:
    """Drop whitespace; optionally drop punctuation and lowercase Latin letters."""
    chars = [c for c in text if not c.isspace()]
    if strip_punct:
        chars = [c.lower() for c in chars if not unicodedata.category(c).startswith("P")]
    return "".join(chars)


def _codes(s: str) -> np.ndarray:
    return np.fromiter((ord(c) for c in s), dtype=np.int64, count=len(s))


def _dp_matrix(ref: str, hyp: str) -> np.ndarray:
    # Row-wise DP; the in-row insertion chain is resolved with a running minimum.
    r, h = _codes(ref), _codes(hyp)
    m = len(h)
    offs = np.arange(m + 1)
    neq = r[:, None] != h[None, :]
    mat = np.empty((len(r) + 1, m + 1), dtype=np.int64)
    mat[0] = offs
    tmp = np.empty(m + 1, dtype=np.int64)
    for i in range(1, len(r) + 1):
        prev = mat[i - 1]
        tmp[0] = i
        np.minimum(prev[:-1] + neq[i - 1], prev[1:] + 1, out=tmp[1:])
        tmp -= offs
        np.minimum.accumulate(tmp, out=tmp)
        np.add(tmp, offs, out=mat[i])
    return mat


def edit_distance(ref: str, hyp: str) -> int:
    """Unit-cost Levenshtein distance (no normalization applied)."""
    if not ref or not hyp:
        return len(ref) + len(hyp)
    r, h = _codes(ref), _codes(hyp)
    m = len(h)
    offs = np.arange(m + 1)
    prev = offs.copy()
    row = np.empty(m + 1, dtype=np.int64)
    for i in range(1, len(r) + 1):
        row[0] = i
        row[1:] = np.minimum(prev[:-1] + (h != r[i - 1]), prev[1:] + 1)
        prev = np.minimum.accumulate(row - offs) + offs
    return int(prev[-1])


def cer(ref: str, hyp: str, normalize: bool = True) -> CerBreakdown:
    """Character error rate with an S/D/I breakdown.

    Whitespace is always removed; ``normalize`` additionally strips
    punctuation and lowercases. Among minimal alignments the backtrace
    prefers substitution (or match), then deletion, then insertion.
    """
    ref = normalize_text(ref, normalize)
    hyp = normalize_text(hyp, normalize)
    if not ref:
        if hyp:
            raise EmptyReference("CER is undefined for an empty reference")
        return CerBreakdown(0, 0, 0, 0, 0.0)
    mat = _dp_matrix(ref, hyp).tolist()
    i, j = len(ref), len(hyp)
    s = d = ins = 0
    while i > 0 or j > 0:
        here = mat[i][j]
        if i > 0 and j > 0:
            miss = ref[i - 1] != hyp[j - 1]
            if here == mat[i - 1][j - 1] + miss:
                s += miss
                i, j = i - 1, j - 1
                continue
        if i > 0 and here == mat[i - 1][j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return CerBreakdown(s, d, ins, len(ref), (s + d + ins) / len(ref))


def cpcer(ref: Transcript, hyp: Transcript, normalize: bool = True) -> dict:
    """Concatenated minimum-permutation CER.

    Speakers are paired by an exact rectangular assignment; an unpaired
    reference speaker costs its full length as deletions and an unpaired
    hypothesis speaker its full length as insertions.
    """
    ref_texts = {k: normalize_text(v, normalize) for k, v in ref.speaker_texts().items()}
    hyp_texts = {k: normalize_text(v, normalize) for k, v in hyp.speaker_texts().items()}
    ref_spk, hyp_spk = sorted(ref_texts), sorted(hyp_texts)
    total_ref = sum(len(t) for t in ref_texts.values())
    if total_ref == 0:
        raise EmptyReference("cpCER needs at least one reference character")

    nr, nh = len(ref_spk), len(hyp_spk)
    n = nr + nh
    big = float(total_ref + sum(len(t) for t in hyp_texts.values()) + 1)
    cost = np.full((n, n), big)
    for a, r in enumerate(ref_spk):
        for b, h in enumerate(hyp_spk):
            cost[a, b] = edit_distance(ref_texts[r], hyp_texts[h])
        cost[a, nh + a] = len(ref_texts[r])
    for b, h in enumerate(hyp_spk):
        cost[nr + b, b] = len(hyp_texts[h])
    cost[nr:, nh:] = 0.0
    rows, cols = linear_sum_assignment(cost)
    total = int(round(cost[rows, cols].sum()))

    mapping = {}
    for a, b in zip(rows, cols):
        if a < nr:
            mapping[ref_spk[a]] = hyp_spk[b] if b < nh else None
    return {
        "cpcer": total / total_ref,
        "errors": total,
        "ref_length": total_ref,
        "mapping": mapping,
    }


def der(
    ref: Annotation,
    hyp: Annotation,
    collar: float = DEFAULT_COLLAR,
    score_overlap: bool = True,
) -> DerBreakdown:
    """Diarization error rate under the overlap-maximizing 1:1 speaker map.

    Scoring uses exact interval arithmetic. ``collar`` seconds either side
    of every reference boundary are excluded; with ``score_overlap`` off,
    regions with two or more reference speakers are excluded too.
    """
    if ref.recording_id != hyp.recording_id:
        raise RecordingMismatch(f"{ref.recording_id!r} != {hyp.recording_id!r}")
    if collar < 0:
        raise ValueError("collar must be non-negative")

    excluded = []
    if collar > 0:
        for s in ref.segments:
            for t in (s.start, s.end):
                excluded.append((max(0.0, t - collar), t + collar))
    extra = [t for iv in excluded for t in iv]
    excluded.sort()

    def is_excluded(t0, t1):
        mid = 0.5 * (t0 + t1)
        return any(a <= mid < b for a, b in excluded)

    regions = []
    for t0, t1, (r, h) in atomic_regions([ref, hyp], extra):
        if t1 <= t0 or (not r and not h):
            continue
        if excluded and is_excluded(t0, t1):
            continue
        if not score_overlap and len(r) >= 2:
            continue
        regions.append((t1 - t0, r, h))

    ref_spk, hyp_spk = ref.speakers, hyp.speakers
    overlap = np.zeros((len(ref_spk), len(hyp_spk)))
    ri = {s: i for i, s in enumerate(ref_spk)}
    hi = {s: i for i, s in enumerate(hyp_spk)}
    for d, r, h in regions:
        for a in r:
            for b in h:
                overlap[ri[a], hi[b]] += d
    mapping = {}
    if overlap.size:
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        mapping = {ref_spk[a]: hyp_spk[b] for a, b in zip(rows, cols) if overlap[a, b] > 0}

    missed = fa = conf = scored = 0.0
    for d, r, h in regions:
        nr, nh = len(r), len(h)
        correct = sum(1 for a in r if mapping.get(a) in h)
        scored += d * nr
        missed += d * max(0, nr - nh)
        fa += d * max(0, nh - nr)
        conf += d * (min(nr, nh) - correct)
    err = missed + fa + conf
    if scored > 0:
        rate = err / scored
    else:
        rate = 0.0 if err == 0 else float("inf")
    return DerBreakdown(missed, fa, conf, scored, rate, mapping)
