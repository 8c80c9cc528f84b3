"""Combining several systems' outputs.

Three diarization systems disagree about who speaks between 3 s and 5 s
and whether there is overlap around 6 s. DOVER-Lap first renames each
system's speakers onto the first one's, then votes region by region on
both the number of speakers and their identities.

ROVER does the analogous job for text: hypotheses are aligned into a
network of slots and each slot keeps its most-voted token.
"""

from diarasr import Annotation, Segment, write_rttm
from diarasr.asr_fusion import TokenSequence, rover, tokenize
from diarasr.diar_fusion import FusionInput, dover_lap, rank_weights


def ann(*rows):
    return Annotation("r1", tuple(Segment(s, e - s, spk) for spk, s, e in rows))


systems = [
    ann(("A", 0, 4), ("B", 4, 8), ("C", 6, 7)),
    ann(("x", 0, 5), ("y", 5, 8), ("z", 6, 7)),
    ann(("p", 0, 3), ("q", 3, 8)),
]
print("equal weights:")
print(write_rttm([dover_lap(FusionInput(systems))]), end="")

# Ranking the third system best tips the 3-4 s turn its way and removes
# the overlap it never reported.
w = rank_weights([3, 2, 1])
print(f"rank weights {[round(float(x), 3) for x in w]}:")
print(write_rttm([dover_lap(FusionInput(systems, weights=w))]), end="")

texts = ["今天下雨了", "今天下与了", "金天下雨"]
fused = rover([TokenSequence(tuple(tokenize(t))) for t in texts])
print("ROVER:", " | ".join(texts), "->", "".join(fused))
