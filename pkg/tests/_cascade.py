"""Two-recording cascade fixture with hand-scored expectations.

recA: the e2e RTTM has no overlap, so the traditional RTTM is used.
  ref  R1 "今天开会"  R2 "讨论预算"            hyp t1 exact, t2 one substitution  -> 1/8
  a 0.1 s segment (t3) is dropped by min_dur.
recB: 0.5 s of overlap in 2.0 s of speech, so the e2e RTTM is used.
  ref  S1 "项目进度很好"  S2 "同意"           hyp e1 one deletion, e2 one insertion -> 2/8
overall 3/16.
"""

import json
from pathlib import Path

import numpy as np

from diarasr.errors import OracleFailure
from diarasr.oa import WaveBuffer, write_wav

RATE = 8000

TRADITIONAL = """\
SPEAKER recA 1 0.00 1.00 <NA> <NA> t1 <NA> <NA>
SPEAKER recA 1 1.00 1.00 <NA> <NA> t2 <NA> <NA>
SPEAKER recA 1 2.00 0.10 <NA> <NA> t3 <NA> <NA>
SPEAKER recB 1 0.00 2.00 <NA> <NA> t1 <NA> <NA>
"""

E2E = """\
SPEAKER recA 1 0.00 1.00 <NA> <NA> e1 <NA> <NA>
SPEAKER recA 1 1.00 1.00 <NA> <NA> e2 <NA> <NA>
SPEAKER recB 1 0.00 1.50 <NA> <NA> e1 <NA> <NA>
SPEAKER recB 1 1.00 1.00 <NA> <NA> e2 <NA> <NA>
"""

REFS = [
    ("recA", "R1", 0.0, "今天开会"),
    ("recA", "R2", 1.0, "讨论预算。"),
    ("recB", "S1", 0.0, "项目进度很好"),
    ("recB", "S2", 1.0, "同意"),
]

SCRIPT = {
    "recA-t1-0000000-0000100": "今天开会",
    "recA-t2-0000100-0000200": "讨论预酸",
    "recB-e1-0000000-0000150": "项目进度好",
    "recB-e2-0000100-0000200": "同意吗",
    # never requested: these cuts belong to the unselected systems
    "recA-e1-0000000-0000100": "错",
    "recB-t1-0000000-0000200": "错",
}

EXPECTED = {"recA": 1 / 8, "recB": 2 / 8, "overall": 3 / 16}


class TableOracle:
    """Looks the hypothesis up by the segment file name."""

    def __init__(self, table=SCRIPT, fail=()):
        self.table, self.fail, self.calls = table, set(fail), 0

    def run_file(self, path):
        self.calls += 1
        stem = Path(path).stem
        if stem in self.fail:
            raise OracleFailure(stem, "scripted failure")
        return self.table[stem]


def build(root: Path, fmt: str = "json", **overrides) -> Path:
    root = Path(root)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for rec, secs in (("recA", 2.5), ("recB", 2.0)):
        write_wav(WaveBuffer(rng.uniform(-0.3, 0.3, (1, int(secs * RATE))), RATE), root / "audio" / f"{rec}.wav")
    (root / "traditional.rttm").write_text(TRADITIONAL)
    (root / "e2e.rttm").write_text(E2E)
    (root / "ref.jsonl").write_text(
        "".join(
            json.dumps({"recording_id": r, "speaker": s, "start": t, "text": x}, ensure_ascii=False) + "\n"
            for r, s, t, x in REFS
        ),
        encoding="utf-8",
    )
    (root / "table.json").write_text(json.dumps(SCRIPT, ensure_ascii=False), encoding="utf-8")
    cfg = {
        "audio_root": "audio",
        "rttm_source": {"traditional": "traditional.rttm", "e2e": "e2e.rttm"},
        "asr_command": "asr {wav}",
        "ref_transcripts": "ref.jsonl",
        "workdir": "work",
        "parallelism": 2,
    }
    cfg.update(overrides)
    if fmt == "json":
        path = root / "cascade.json"
        path.write_text(json.dumps(cfg, ensure_ascii=False))
    else:
        lines = []
        for k, v in cfg.items():
            if not isinstance(v, dict):
                lines.append(f"{k} = {json.dumps(v, ensure_ascii=False)}")
        for k, v in cfg.items():
            if isinstance(v, dict):
                lines.append(f"[{k}]")
                lines.extend(f"{kk} = {json.dumps(vv)}" for kk, vv in v.items())
        path = root / "cascade.toml"
        path.write_text("\n".join(lines) + "\n")
    return path


TABLE_ASR = """\
import json, sys
from pathlib import Path
table = json.loads(Path(sys.argv[1]).read_text(encoding="utf-8"))
stem = Path(sys.argv[2]).stem
if stem not in table:
    sys.exit(4)
sys.stdout.buffer.write(table[stem].encode("utf-8"))
"""


def table_command(root: Path) -> str:
    """A real subprocess recogniser reading the same table."""
    import sys

    script = Path(root) / "table_asr.py"
    script.write_text(TABLE_ASR)
    return f"{sys.executable} {script} {Path(root) / 'table.json'} {{wav}}"
