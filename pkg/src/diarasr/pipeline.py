"""Cascade orchestration: pick a diarization per recording, cut audio, transcribe, score."""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyAnnotation, OracleFailure
from .metrics import Transcript, Utterance, cpcer, read_transcripts
from .oa.grid import CommandAsrOracle
from .oa.wav import WaveBuffer, channel_sum, read_wav, write_wav
from .timeline import Annotation, OverlapStats, overlap_ratio, parse_rttm

logger = logging.getLogger(__name__)

__all__ = [
    "HybridPolicy",
    "hybrid_select",
    "Cut",
    "Segmentation",
    "segment_audio",
    "CascadeConfig",
    "load_config",
    "run_cascade",
]

PARALLELISM_ENV = "DIARASR_PARALLELISM"


@dataclass(frozen=True)
class HybridPolicy:
    overlap_threshold: float = 0.01
    low_overlap_system: str = "traditional"
    high_overlap_system: str = "e2e"

    def __post_init__(self):
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in [0, 1]")


def hybrid_select(stats: OverlapStats | float, policy: HybridPolicy = HybridPolicy()) -> str:
    """Low-overlap system iff the overlap ratio is strictly below the threshold."""
    ratio = stats.ratio if isinstance(stats, OverlapStats) else float(stats)
    return policy.low_overlap_system if ratio < policy.overlap_threshold else policy.high_overlap_system


@dataclass(frozen=True, eq=False)
class Cut:
    utt_id: str
    speaker: str
    start: float
    audio: WaveBuffer


@dataclass
class Segmentation:
    cuts: list[Cut] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.cuts)

    def __len__(self):
        return len(self.cuts)


def _utt_id(rec: str, speaker: str, s0: int, s1: int, rate: int) -> str:
    # centisecond stamps keep ids stable and sortable
    return f"{rec}-{speaker}-{round(s0 * 100 / rate):07d}-{round(s1 * 100 / rate):07d}"


def segment_audio(audio: WaveBuffer, ann: Annotation, min_dur: float = 0.2) -> Segmentation:
    """Cut one utterance per segment.

    Boundaries are rounded to the nearest sample. Segments shorter than
    ``min_dur`` are listed in ``skipped``; segments running past the end of
    the audio are clipped and a warning is kept.
    """
    if not ann.segments:
        raise EmptyAnnotation(f"{ann.recording_id}: no segments to cut")
    rate, n = audio.sample_rate, audio.n_samples
    out = Segmentation()
    for seg in ann.segments:
        if seg.duration < min_dur - 1e-9:
            out.skipped.append({"speaker": seg.speaker, "start": seg.start, "duration": seg.duration, "reason": "short"})
            continue
        s0, s1 = int(round(seg.start * rate)), int(round(seg.end * rate))
        if s1 > n:
            msg = f"{ann.recording_id}: segment {seg.speaker}@{seg.start:.2f} ends past the audio; clipped"
            logger.warning(msg)
            out.warnings.append(msg)
            s1 = n
        if s1 <= s0:
            out.skipped.append({"speaker": seg.speaker, "start": seg.start, "duration": seg.duration, "reason": "outside audio"})
            continue
        uid = _utt_id(ann.recording_id, seg.speaker, s0, s1, rate)
        out.cuts.append(Cut(uid, seg.speaker, s0 / rate, WaveBuffer(audio.samples[:, s0:s1], rate)))
    return out


@dataclass(frozen=True)
class CascadeConfig:
    audio_root: Path | dict[str, Path]
    rttm_source: dict[str, Path]
    asr_command: str
    ref_transcripts: Path
    workdir: Path
    parallelism: int = 4
    overlap_threshold: float = 0.01
    min_dur: float = 0.2
    normalize: bool = True

    def __post_init__(self):
        if "{wav}" not in self.asr_command:
            raise ValueError("asr_command must contain the {wav} placeholder")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        policy = HybridPolicy(self.overlap_threshold)
        missing = {policy.low_overlap_system, policy.high_overlap_system} - set(self.rttm_source)
        if missing:
            raise ValueError(f"rttm_source lacks entries for {sorted(missing)}")

    @property
    def policy(self) -> HybridPolicy:
        return HybridPolicy(self.overlap_threshold)

    def audio_dir(self, system: str) -> Path:
        if isinstance(self.audio_root, dict):
            return Path(self.audio_root[system])
        return Path(self.audio_root)


def _parse_config_text(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


def load_config(path, env=None) -> CascadeConfig:
    """Read a JSON (``.json``) or TOML config file.

    Relative paths resolve against the config file's directory. The
    ``DIARASR_PARALLELISM`` environment variable overrides ``parallelism``.
    """
    path = Path(path)
    raw = _parse_config_text(path)
    env = os.environ if env is None else env
    base = path.parent

    def p(v):
        v = Path(v)
        return v if v.is_absolute() else base / v

    known = {"audio_root", "rttm_source", "asr_command", "ref_transcripts", "workdir",
             "parallelism", "overlap_threshold", "min_dur", "normalize"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    audio = raw["audio_root"]
    parallelism = int(env.get(PARALLELISM_ENV, raw.get("parallelism", 4)))
    return CascadeConfig(
        audio_root={k: p(v) for k, v in audio.items()} if isinstance(audio, dict) else p(audio),
        rttm_source={k: p(v) for k, v in raw["rttm_source"].items()},
        asr_command=raw["asr_command"],
        ref_transcripts=p(raw["ref_transcripts"]),
        workdir=p(raw["workdir"]),
        parallelism=parallelism,
        overlap_threshold=float(raw.get("overlap_threshold", 0.01)),
        min_dur=float(raw.get("min_dur", 0.2)),
        normalize=bool(raw.get("normalize", True)),
    )


def _load_rttms(paths: dict[str, Path]) -> dict[str, dict[str, Annotation]]:
    return {
        system: {a.recording_id: a for a in parse_rttm(Path(p).read_text(encoding="utf-8"))}
        for system, p in paths.items()
    }


def _read_hyp_cache(path: Path) -> dict[str, dict]:
    if not path.exists():
        return {}
    rows = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            rows[row["utt_id"]] = row
    return rows


def _write_hyp_cache(path: Path, rows: dict[str, dict]):
    ordered = sorted(rows.values(), key=lambda r: (r["start"], r["speaker"], r["utt_id"]))
    path.write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in ordered), encoding="utf-8")


def _transcribe_file(oracle, wav_path: Path, audio: WaveBuffer) -> str:
    if hasattr(oracle, "run_file"):
        return oracle.run_file(wav_path)
    return oracle.transcribe(audio)


def run_cascade(cfg: CascadeConfig, oracle=None) -> dict:
    """Run selection, segmentation, recognition and scoring for every reference recording.

    ``oracle`` defaults to the configured command. Results are cached in
    ``hyps/<rec>.jsonl``; only successful transcriptions are cached, so a
    rerun retries failures and otherwise calls the recogniser zero times.
    The report is also written to ``report.json``.
    """
    oracle = oracle if oracle is not None else CommandAsrOracle(cfg.asr_command)
    refs = {t.recording_id: t for t in read_transcripts(Path(cfg.ref_transcripts).read_text(encoding="utf-8"))}
    rttms = _load_rttms(cfg.rttm_source)
    policy = cfg.policy
    work = Path(cfg.workdir)
    (work / "hyps").mkdir(parents=True, exist_ok=True)

    calls = 0
    lock = threading.Lock()
    hyps: dict[str, Transcript] = {}
    per_rec: dict[str, dict] = {}
    tot_err = tot_len = 0

    for rec in sorted(refs):
        probe = rttms[policy.high_overlap_system].get(rec) or rttms[policy.low_overlap_system].get(rec)
        stats = overlap_ratio(probe) if probe is not None else OverlapStats(0.0, 0.0, 0.0)
        system = hybrid_select(stats, policy)
        ann = rttms[system].get(rec) or Annotation(rec)

        cache_path = work / "hyps" / f"{rec}.jsonl"
        cache = _read_hyp_cache(cache_path)
        failed: list[str] = []
        seg = Segmentation()
        if ann.segments:
            audio = read_wav(cfg.audio_dir(system) / f"{rec}.wav")
            if audio.channels > 1:
                audio = channel_sum(audio)
            seg = segment_audio(audio, ann, cfg.min_dur)
        seg_dir = work / "segments" / rec
        seg_dir.mkdir(parents=True, exist_ok=True)

        def work_one(cut: Cut):
            nonlocal calls
            wav_path = seg_dir / f"{cut.utt_id}.wav"
            if not wav_path.exists():
                write_wav(cut.audio, wav_path)
            with lock:
                calls += 1
            try:
                text = _transcribe_file(oracle, wav_path, cut.audio)
            except OracleFailure as exc:
                logger.warning("%s: recogniser failed: %s", cut.utt_id, exc)
                return cut, None
            row = {"recording_id": rec, "utt_id": cut.utt_id, "speaker": cut.speaker, "start": cut.start, "text": text}
            with lock:
                cache[cut.utt_id] = row
                with open(cache_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            return cut, row

        todo = [c for c in seg.cuts if c.utt_id not in cache]
        if todo:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                for cut, row in pool.map(work_one, todo):
                    if row is None:
                        failed.append(cut.utt_id)
        wanted = {c.utt_id for c in seg.cuts}
        _write_hyp_cache(cache_path, {k: v for k, v in cache.items() if k in wanted})

        utts = [
            Utterance(c.speaker, c.start, cache[c.utt_id]["text"] if c.utt_id in cache else "")
            for c in seg.cuts
        ]
        hyp = Transcript(rec, tuple(utts))
        hyps[rec] = hyp
        score = cpcer(refs[rec], hyp, cfg.normalize)
        tot_err += score["errors"]
        tot_len += score["ref_length"]
        per_rec[rec] = {
            "system": system,
            "overlap_ratio": stats.ratio,
            "cpcer": score["cpcer"],
            "errors": score["errors"],
            "ref_length": score["ref_length"],
            "mapping": score["mapping"],
            "utterances": len(seg.cuts),
            "skipped": len(seg.skipped),
            "failed": sorted(failed),
        }

    report = {
        "recordings": per_rec,
        "overall": {
            "cpcer": tot_err / tot_len if tot_len else 0.0,
            "errors": tot_err,
            "ref_length": tot_len,
        },
        "overlap_threshold": policy.overlap_threshold,
    }
    (work / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return {"hyp": hyps, "report": report, "oracle_calls": calls}
