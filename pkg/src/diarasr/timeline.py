"""Speaker-segment timelines: RTTM I/O, interval sweeps and overlap statistics."""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import MalformedLine, NonPositiveDuration

__all__ = [
    "Segment",
    "Annotation",
    "OverlapStats",
    "parse_rttm",
    "write_rttm",
    "overlap_ratio",
    "atomic_regions",
    "speaker_intervals",
    "merge_adjacent",
]


@dataclass(frozen=True, order=True)
class Segment:
    start: float
    duration: float
    speaker: str

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"segment duration must be positive, got {self.duration}")
        if self.start < 0:
            raise ValueError(f"segment start must be non-negative, got {self.start}")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class Annotation:
    recording_id: str
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ordered = tuple(sorted(self.segments, key=lambda s: (s.start, s.speaker, s.duration)))
        object.__setattr__(self, "segments", ordered)

    @property
    def speakers(self) -> list[str]:
        return sorted({s.speaker for s in self.segments})

    @property
    def end(self) -> float:
        return max((s.end for s in self.segments), default=0.0)

    def __len__(self):
        return len(self.segments)

    def relabel(self, mapping: dict[str, str]) -> "Annotation":
        return Annotation(
            self.recording_id,
            tuple(Segment(s.start, s.duration, mapping.get(s.speaker, s.speaker)) for s in self.segments),
        )


@dataclass(frozen=True)
class OverlapStats:
    overlap_duration: float
    speech_duration: float
    ratio: float


def parse_rttm(text: str) -> list[Annotation]:
    """Parse RTTM text into one :class:`Annotation` per recording id.

    Only ``SPEAKER`` rows are accepted. The channel field is read past but
    not kept; recordings are keyed by id alone and returned sorted by id.
    """
    by_rec: dict[str, list[Segment]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 9:
            raise MalformedLine(line_no, f"expected at least 9 fields, got {len(fields)}")
        if fields[0] != "SPEAKER":
            raise MalformedLine(line_no, f"unsupported RTTM type {fields[0]!r}")
        try:
            start = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise MalformedLine(line_no, "non-numeric onset or duration") from None
        if not duration > 0:
            raise NonPositiveDuration(line_no)
        if start < 0:
            raise MalformedLine(line_no, "negative onset")
        by_rec.setdefault(fields[1], []).append(Segment(start, duration, fields[7]))
    return [Annotation(rec, tuple(by_rec[rec])) for rec in sorted(by_rec)]


def write_rttm(annotations: list[Annotation]) -> str:
    lines = []
    for ann in annotations:
        for s in ann.segments:
            lines.append(
                f"SPEAKER {ann.recording_id} 1 {s.start:.2f} {s.duration:.2f} <NA> <NA> {s.speaker} <NA> <NA>"
            )
    return "".join(line + "\n" for line in lines)


def speaker_intervals(ann: Annotation) -> dict[str, list[tuple[float, float]]]:
    """Per-speaker union of segments as sorted, disjoint ``(start, end)`` pairs.

    Touching intervals are fused.
    """
    raw: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for s in ann.segments:
        raw[s.speaker].append((s.start, s.end))
    out = {}
    for spk, ivs in raw.items():
        ivs.sort()
        merged = [list(ivs[0])]
        for a, b in ivs[1:]:
            if a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        out[spk] = [(a, b) for a, b in merged]
    return out


def merge_adjacent(ann: Annotation) -> Annotation:
    """Fuse each speaker's touching or overlapping segments."""
    segs = [
        Segment(a, b - a, spk)
        for spk, ivs in speaker_intervals(ann).items()
        for a, b in ivs
        if b > a
    ]
    return Annotation(ann.recording_id, tuple(segs))


def atomic_regions(
    annotations: list[Annotation], extra_boundaries=()
) -> list[tuple[float, float, list[frozenset[str]]]]:
    """Cut the time axis at every segment boundary of every annotation.

    Returns ``(t0, t1, active)`` triples where ``active[k]`` is the set of
    speakers annotation ``k`` marks as speaking throughout ``[t0, t1)``.
    Regions where nobody is active are included.
    """
    bounds = set(extra_boundaries)
    for ann in annotations:
        for s in ann.segments:
            bounds.add(s.start)
            bounds.add(s.end)
    edges = sorted(bounds)
    if len(edges) < 2:
        return []
    active: list[list[set[str]]] = [[set() for _ in annotations] for _ in range(len(edges) - 1)]
    for k, ann in enumerate(annotations):
        for s in ann.segments:
            lo = bisect.bisect_left(edges, s.start)
            hi = bisect.bisect_left(edges, s.end)
            for r in range(lo, hi):
                active[r][k].add(s.speaker)
    return [
        (edges[r], edges[r + 1], [frozenset(a) for a in active[r]])
        for r in range(len(edges) - 1)
    ]


def overlap_ratio(a: Annotation) -> OverlapStats:
    """Exact overlap statistics from a boundary-event sweep.

    Overlap is time with at least two distinct active speakers; the
    denominator is time with at least one.
    """
    overlap = speech = 0.0
    for t0, t1, (spk,) in atomic_regions([a]):
        n = len(spk)
        if n >= 1:
            speech += t1 - t0
        if n >= 2:
            overlap += t1 - t0
    ratio = overlap / speech if speech > 0 else 0.0
    return OverlapStats(overlap, speech, ratio)
