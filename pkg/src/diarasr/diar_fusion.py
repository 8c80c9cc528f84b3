"""Overlap-aware label-voting fusion of diarization hypotheses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyInput, RecordingMismatch
from .timeline import Annotation, Segment, atomic_regions

__all__ = ["FusionInput", "rank_weights", "pairwise_overlap", "map_labels", "dover_lap"]


@dataclass(frozen=True)
class FusionInput:
    hypotheses: tuple[Annotation, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        if not self.hypotheses:
            raise EmptyInput("at least one hypothesis is required")
        recs = {h.recording_id for h in self.hypotheses}
        if len(recs) != 1:
            raise RecordingMismatch(f"hypotheses span several recordings: {sorted(recs)}")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.hypotheses):
                raise ValueError("need one weight per hypothesis")
            if any(not x > 0 for x in w):
                raise ValueError("weights must be positive")
            object.__setattr__(self, "weights", w)

    def resolved_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.hypotheses), 1.0 / len(self.hypotheses))
        w = np.asarray(self.weights)
        return w / w.sum()


def rank_weights(ranks) -> list[float]:
    """1/rank weights normalised to sum to one (rank 1 is best)."""
    w = np.array([1.0 / r for r in ranks])
    return list(w / w.sum())


def pairwise_overlap(a: Annotation, b: Annotation) -> tuple[list[str], list[str], np.ndarray]:
    """Overlap seconds between every speaker of ``a`` and every speaker of ``b``."""
    sa, sb = a.speakers, b.speakers
    ia = {s: i for i, s in enumerate(sa)}
    ib = {s: i for i, s in enumerate(sb)}
    mat = np.zeros((len(sa), len(sb)))
    for t0, t1, (ra, rb) in atomic_regions([a, b]):
        for x in ra:
            for y in rb:
                mat[ia[x], ib[y]] += t1 - t0
    return sa, sb, mat


def map_labels(hypotheses: list[Annotation]) -> list[Annotation]:
    """Relabel every hypothesis onto the label space of the first one.

    Each hypothesis is matched to the anchor by the one-to-one assignment
    maximizing total overlap. Speakers left unmatched, or matched with zero
    overlap, get a fresh label ``"<index>:<label>"``.
    """
    if not hypotheses:
        return []
    anchor = hypotheses[0]
    out = [anchor]
    taken = set(anchor.speakers)
    for k, hyp in enumerate(hypotheses[1:], start=1):
        sa, sh, mat = pairwise_overlap(anchor, hyp)
        mapping = {}
        if mat.size:
            rows, cols = linear_sum_assignment(mat, maximize=True)
            for r, c in zip(rows, cols):
                if mat[r, c] > 0:
                    mapping[sh[c]] = sa[r]
        for spk in sh:
            if spk not in mapping:
                fresh = f"{k}:{spk}"
                while fresh in taken:
                    fresh += "'"
                taken.add(fresh)
                mapping[spk] = fresh
        out.append(hyp.relabel(mapping))
    return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


def dover_lap(inp: FusionInput, relabel: bool = True) -> Annotation:
    """Fuse hypotheses by per-region weighted label voting.

    In every atomic region the expected speaker count is the weighted mean
    of the hypotheses' active-speaker counts, rounded half up, and that many
    labels with the highest accumulated weight are emitted (ties go to the
    lexicographically smaller label).
    """
    hyps = list(inp.hypotheses)
    weights = inp.resolved_weights()
    if relabel and len(hyps) > 1:
        hyps = map_labels(hyps)
    rec = hyps[0].recording_id

    # Winning regions are joined per label in time coordinates; rebuilding
    # them from (start, duration) first can leave ulp-sized gaps.
    spans: dict[str, list[list[float]]] = {}
    for t0, t1, active in atomic_regions(hyps):
        if t1 <= t0:
            continue
        votes: dict[str, float] = {}
        count = 0.0
        for w, labels in zip(weights, active):
            count += w * len(labels)
            for lab in labels:
                votes[lab] = votes.get(lab, 0.0) + w
        n = _round_half_up(count / weights.sum())
        if n == 0 or not votes:
            continue
        ranked = sorted(votes, key=lambda lab: (-round(votes[lab], 12), lab))
        for lab in ranked[:n]:
            runs = spans.setdefault(lab, [])
            if runs and t0 <= runs[-1][1]:
                runs[-1][1] = t1
            else:
                runs.append([t0, t1])
    segs = [Segment(a, b - a, lab) for lab, runs in spans.items() for a, b in runs]
    return Annotation(rec, tuple(segs))
