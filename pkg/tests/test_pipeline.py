import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import _cascade
from diarasr.errors import EmptyAnnotation
from diarasr.metrics import cpcer, read_transcripts
from diarasr.oa import WaveBuffer
from diarasr.pipeline import (
    CascadeConfig,
    HybridPolicy,
    hybrid_select,
    load_config,
    run_cascade,
    segment_audio,
)
from diarasr.timeline import Annotation, OverlapStats, Segment


def stats(r):
    return OverlapStats(r, 1.0, r)


def test_hybrid_select_examples():
    assert hybrid_select(stats(0.005)) == "traditional"
    assert hybrid_select(stats(0.02)) == "e2e"
    assert hybrid_select(stats(0.01)) == "e2e"
    assert hybrid_select(0.0) == "traditional"


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_hybrid_select_monotone_in_threshold(ratio, t1, t2):
    lo, hi = sorted((t1, t2))
    if hybrid_select(ratio, HybridPolicy(lo)) == "traditional":
        assert hybrid_select(ratio, HybridPolicy(hi)) == "traditional"


def test_policy_validation():
    with pytest.raises(ValueError):
        HybridPolicy(1.5)


def audio(seconds=3.0, rate=16000):
    return WaveBuffer(np.arange(int(seconds * rate), dtype=np.float64)[None, :] / 1e6, rate)


def test_segment_sample_accurate():
    a = audio()
    cuts = segment_audio(a, Annotation("r", (Segment(1.0, 1.0, "A"),)))
    (cut,) = cuts
    assert cut.audio.n_samples == 16000
    assert cut.audio.samples[0, 0] == a.samples[0, 16000]
    assert cut.start == 1.0 and cut.speaker == "A"


def test_segment_rounds_to_nearest_sample():
    a = audio(rate=1000)
    (cut,) = segment_audio(a, Annotation("r", (Segment(0.10049, 0.3, "A"),)))
    assert cut.audio.samples[0, 0] == a.samples[0, 100]


def test_segment_clipped_at_audio_end():
    seg = segment_audio(audio(), Annotation("r", (Segment(2.5, 1.0, "A"),)))
    assert seg.cuts[0].audio.n_samples == 8000
    assert len(seg.warnings) == 1


def test_segment_short_skipped():
    seg = segment_audio(audio(), Annotation("r", (Segment(0.0, 0.1, "A"), Segment(1.0, 0.5, "B"))))
    assert [c.speaker for c in seg] == ["B"]
    assert len(seg.skipped) == 1 and seg.skipped[0]["reason"] == "short"


def test_segment_empty_annotation():
    with pytest.raises(EmptyAnnotation):
        segment_audio(audio(), Annotation("r"))


def test_segment_outside_audio_skipped():
    seg = segment_audio(audio(1.0), Annotation("r", (Segment(5.0, 1.0, "A"),)))
    assert not seg.cuts and seg.skipped[0]["reason"] == "outside audio"


def test_config_json_and_toml_agree(tmp_path):
    a = load_config(_cascade.build(tmp_path / "j", "json"), env={})
    b = load_config(_cascade.build(tmp_path / "t", "toml"), env={})
    assert a.parallelism == b.parallelism == 2
    assert a.rttm_source["e2e"].name == b.rttm_source["e2e"].name == "e2e.rttm"
    assert a.audio_root.is_absolute()


def test_config_env_override(tmp_path):
    cfg = load_config(_cascade.build(tmp_path), env={"DIARASR_PARALLELISM": "7"})
    assert cfg.parallelism == 7


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        load_config(_cascade.build(tmp_path / "a", asr_command="asr"), env={})
    with pytest.raises(ValueError):
        load_config(_cascade.build(tmp_path / "b", rttm_source={"e2e": "e2e.rttm"}), env={})
    with pytest.raises(ValueError):
        load_config(_cascade.build(tmp_path / "c", colour="blue"), env={})


def test_cascade_fixture_scores(tmp_path):
    cfg = load_config(_cascade.build(tmp_path), env={})
    oracle = _cascade.TableOracle()
    out = run_cascade(cfg, oracle)
    rep = out["report"]
    assert rep["recordings"]["recA"]["system"] == "traditional"
    assert rep["recordings"]["recB"]["system"] == "e2e"
    assert rep["recordings"]["recB"]["overlap_ratio"] == pytest.approx(0.25)
    assert rep["recordings"]["recA"]["cpcer"] == _cascade.EXPECTED["recA"]
    assert rep["recordings"]["recB"]["cpcer"] == _cascade.EXPECTED["recB"]
    assert rep["overall"]["cpcer"] == _cascade.EXPECTED["overall"]
    assert rep["recordings"]["recA"]["skipped"] == 1
    assert oracle.calls == 4
    assert sorted(p.name for p in (tmp_path / "work" / "segments" / "recB").iterdir()) == [
        "recB-e1-0000000-0000150.wav",
        "recB-e2-0000100-0000200.wav",
    ]


def test_cascade_is_idempotent(tmp_path):
    cfg = load_config(_cascade.build(tmp_path), env={})
    run_cascade(cfg, _cascade.TableOracle())
    first = (tmp_path / "work" / "report.json").read_bytes()
    again = _cascade.TableOracle()
    run_cascade(cfg, again)
    assert again.calls == 0
    assert (tmp_path / "work" / "report.json").read_bytes() == first


def test_report_matches_persisted_transcripts(tmp_path):
    cfg = load_config(_cascade.build(tmp_path), env={})
    rep = run_cascade(cfg, _cascade.TableOracle())["report"]
    refs = {t.recording_id: t for t in read_transcripts((tmp_path / "ref.jsonl").read_text())}
    for rec in ("recA", "recB"):
        (hyp,) = read_transcripts((tmp_path / "work" / "hyps" / f"{rec}.jsonl").read_text())
        assert cpcer(refs[rec], hyp)["cpcer"] == rep["recordings"][rec]["cpcer"]


def test_cascade_failures_score_empty_and_retry(tmp_path):
    cfg = load_config(_cascade.build(tmp_path), env={})
    bad = "recB-e2-0000100-0000200"
    rep = run_cascade(cfg, _cascade.TableOracle(fail={bad}))["report"]
    assert rep["recordings"]["recB"]["failed"] == [bad]
    # "同意" is now a pair of deletions on top of the e1 deletion
    assert rep["recordings"]["recB"]["cpcer"] == 3 / 8
    retry = _cascade.TableOracle()
    rep2 = run_cascade(cfg, retry)["report"]
    assert retry.calls == 1
    assert rep2["recordings"]["recB"]["cpcer"] == 2 / 8


def test_cascade_echo_and_silent_oracles(tmp_path):
    cfg = load_config(_cascade.build(tmp_path / "s"), env={})

    class Silent:
        def run_file(self, path):
            return ""

    assert run_cascade(cfg, Silent())["report"]["overall"]["cpcer"] == 1.0


def test_cascade_with_command_oracle(tmp_path):
    cmd = _cascade.table_command(tmp_path)
    cfg = load_config(_cascade.build(tmp_path, asr_command=cmd), env={})
    rep = run_cascade(cfg)["report"]
    assert rep["overall"]["cpcer"] == _cascade.EXPECTED["overall"]
    saved = json.loads((tmp_path / "work" / "report.json").read_text())
    assert saved == json.loads(json.dumps(rep))


def test_cascade_config_object_direct(tmp_path):
    _cascade.build(tmp_path)
    cfg = CascadeConfig(
        audio_root=tmp_path / "audio",
        rttm_source={"traditional": tmp_path / "traditional.rttm", "e2e": tmp_path / "e2e.rttm"},
        asr_command="x {wav}",
        ref_transcripts=tmp_path / "ref.jsonl",
        workdir=tmp_path / "w2",
        parallelism=1,
    )
    assert run_cascade(cfg, _cascade.TableOracle())["report"]["overall"]["cpcer"] == 3 / 16
