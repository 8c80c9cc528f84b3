"""Scoring a diarization and a multi-speaker transcript.

A two-speaker reference is compared with a system output that misses the
start of one turn and swaps labels. DER needs no label agreement: the
scorer finds the speaker map that maximizes overlap. cpCER does the same
for transcripts, concatenating each speaker's text first.
"""

from diarasr import Annotation, Segment, cer, cpcer, der, overlap_ratio, parse_rttm, write_rttm
from diarasr.metrics import Transcript, Utterance

ref = Annotation("meeting1", (
    Segment(0.0, 4.0, "alice"),
    Segment(3.5, 3.0, "bob"),      # half a second of crosstalk
    Segment(7.0, 2.0, "alice"),
))
hyp = Annotation("meeting1", (
    Segment(0.5, 3.5, "spk1"),
    Segment(3.5, 3.0, "spk0"),
    Segment(7.0, 2.5, "spk1"),
))

# RTTM round trip: what a system would write to disk.
print(write_rttm([hyp]), end="")
assert parse_rttm(write_rttm([hyp]))[0] == hyp

stats = overlap_ratio(ref)
print(f"overlap: {stats.overlap_duration:.2f}s of {stats.speech_duration:.2f}s speech ({stats.ratio:.1%})")

for collar in (0.0, 0.25):
    d = der(ref, hyp, collar=collar)
    print(f"DER collar={collar}: {d.der:.2%}  (miss {d.missed:.2f}s, FA {d.false_alarm:.2f}s, "
          f"confusion {d.confusion:.2f}s)  map {d.mapping}")

# Character error rate ignores punctuation and width differences by default.
b = cer("今天天气很好。", "今天天汽很好")
print(f"CER {b.cer:.3f}: {b.substitutions} sub, {b.deletions} del, {b.insertions} ins")

ref_tx = Transcript("meeting1", (
    Utterance("alice", 0.0, "我们开始吧"), Utterance("bob", 3.5, "好的"), Utterance("alice", 7.0, "第一项"),
))
hyp_tx = Transcript("meeting1", (
    Utterance("spk1", 0.5, "我们开始"), Utterance("spk0", 3.5, "好的"), Utterance("spk1", 7.0, "第一项"),
))
res = cpcer(ref_tx, hyp_tx)
print(f"cpCER {res['cpcer']:.3f} ({res['errors']} errors / {res['ref_length']} chars), map {res['mapping']}")
