"""The full cascade on two short recordings.

For each recording the overlap ratio of the end-to-end diarization picks
which system's segmentation to use: below 1% overlap the traditional
(clustering) output is trusted, otherwise the end-to-end one. The audio
is cut per segment, each cut is sent to an external recogniser command,
and the result is scored with cpCER.

The recogniser here is a ten-line Python script that looks its answer up
by file name; any program that prints a transcript for ``{wav}`` works.
Transcripts are cached under the work directory, so a second run costs no
recogniser calls. The same run from a shell is::

    diarasr cascade --config cascade.toml
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from diarasr.oa import WaveBuffer, write_wav
from diarasr.pipeline import load_config, run_cascade

RATE = 8000
ANSWERS = {
    "meet1-t1-0000000-0000100": "今天开会",
    "meet1-t2-0000100-0000200": "讨论预酸",
    "meet2-e1-0000000-0000150": "项目进度好",
    "meet2-e2-0000100-0000200": "同意吗",
}

root = Path(tempfile.mkdtemp(prefix="cascade-demo-"))
rng = np.random.default_rng(0)
for rec in ("meet1", "meet2"):
    write_wav(WaveBuffer(rng.uniform(-0.3, 0.3, 2 * RATE), RATE), root / f"{rec}.wav")

(root / "traditional.rttm").write_text(
    "SPEAKER meet1 1 0.00 1.00 <NA> <NA> t1 <NA> <NA>\n"
    "SPEAKER meet1 1 1.00 1.00 <NA> <NA> t2 <NA> <NA>\n"
    "SPEAKER meet2 1 0.00 2.00 <NA> <NA> t1 <NA> <NA>\n"
)
(root / "e2e.rttm").write_text(
    "SPEAKER meet1 1 0.00 1.00 <NA> <NA> e1 <NA> <NA>\n"
    "SPEAKER meet1 1 1.00 1.00 <NA> <NA> e2 <NA> <NA>\n"
    "SPEAKER meet2 1 0.00 1.50 <NA> <NA> e1 <NA> <NA>\n"   # overlaps e2 for 0.5 s
    "SPEAKER meet2 1 1.00 1.00 <NA> <NA> e2 <NA> <NA>\n"
)
refs = [("meet1", "A", 0.0, "今天开会"), ("meet1", "B", 1.0, "讨论预算"),
        ("meet2", "A", 0.0, "项目进度很好"), ("meet2", "B", 1.0, "同意")]
(root / "ref.jsonl").write_text("".join(
    json.dumps({"recording_id": r, "speaker": s, "start": t, "text": x}, ensure_ascii=False) + "\n"
    for r, s, t, x in refs
), encoding="utf-8")

(root / "answers.json").write_text(json.dumps(ANSWERS, ensure_ascii=False), encoding="utf-8")
(root / "asr.py").write_text(
    "import json, pathlib, sys\n"
    "table = json.loads(pathlib.Path(__file__).with_name('answers.json').read_text(encoding='utf-8'))\n"
    "sys.stdout.buffer.write(table[pathlib.Path(sys.argv[1]).stem].encode('utf-8'))\n"
)
(root / "cascade.toml").write_text(f"""\
audio_root = "."
ref_transcripts = "ref.jsonl"
workdir = "work"
asr_command = "{sys.executable} {root / 'asr.py'} {{wav}}"
parallelism = 2

[rttm_source]
traditional = "traditional.rttm"
e2e = "e2e.rttm"
""")

cfg = load_config(root / "cascade.toml")
out = run_cascade(cfg)
for rec, r in sorted(out["report"]["recordings"].items()):
    print(f"{rec}: overlap {r['overlap_ratio']:.1%} -> {r['system']:11s} cpCER {r['cpcer']:.3f}")
print(f"overall cpCER {out['report']['overall']['cpcer']:.4f}, recogniser calls {out['oracle_calls']}")

again = run_cascade(cfg)
print(f"second run: recogniser calls {again['oracle_calls']}, report unchanged: {again['report'] == out['report']}")
print(f"outputs in {cfg.workdir}: {sorted(p.name for p in cfg.workdir.iterdir())}")
