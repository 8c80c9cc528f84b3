"""Command-line entry point: every operation as a subcommand printing JSON.

Exit status 0 means success, 1 a validation or scoring error (a JSON
``{"error", "message"}`` object is printed), 2 a usage error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import clustering as cl
from .asr_fusion import TokenSequence, rover, tokenize
from .diar_fusion import FusionInput, dover_lap, rank_weights
from .errors import DegenerateClasses, DiarAsrError
from .metrics import DEFAULT_COLLAR, Transcript, Utterance, cer, cpcer, der, read_transcripts, write_transcripts
from .oa import (
    BridgingModel,
    CerCache,
    CerVector,
    CommandAsrOracle,
    MixWeights,
    OAUtterance,
    TrainConfig,
    bridging_features,
    build_grid,
    cer_vector,
    mix_enhanced,
    mix_with_report,
    predict_oa,
    read_wav,
    train_bridging,
    write_wav,
)
from .pipeline import HybridPolicy, hybrid_select, load_config, run_cascade
from .timeline import Annotation, overlap_ratio, parse_rttm, write_rttm


class UsageError(Exception):
    pass


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _read_wav(path: str):
    if path == "-":
        return read_wav(io.BytesIO(sys.stdin.buffer.read()))
    return read_wav(path)


def _rttm(path: str) -> dict:
    return {a.recording_id: a for a in parse_rttm(_read_text(path))}


# --- subcommands ---------------------------------------------------------


def cmd_score_der(args):
    refs, hyps = _rttm(args.ref), _rttm(args.hyp)
    per, err, scored = {}, 0.0, 0.0
    for rec in sorted(refs):
        if rec not in hyps:
            hyps[rec] = Annotation(rec)
        b = der(refs[rec], hyps[rec], args.collar, not args.no_score_overlap)
        per[rec] = {
            "der": b.der,
            "missed": b.missed,
            "false_alarm": b.false_alarm,
            "confusion": b.confusion,
            "scored_speech": b.scored_speech,
        }
        err += b.missed + b.false_alarm + b.confusion
        scored += b.scored_speech
    return {"der": err / scored if scored else 0.0, "collar": args.collar, "recordings": per}


def cmd_score_cer(args):
    b = cer(_read_text(args.ref).strip(), _read_text(args.hyp).strip(), not args.no_normalize)
    return {
        "cer": b.cer,
        "substitutions": b.substitutions,
        "deletions": b.deletions,
        "insertions": b.insertions,
        "ref_length": b.ref_length,
    }


def cmd_score_cpcer(args):
    refs = {t.recording_id: t for t in read_transcripts(_read_text(args.ref))}
    hyps = {t.recording_id: t for t in read_transcripts(_read_text(args.hyp))}

    per, err, length = {}, 0, 0
    for rec in sorted(refs):
        r = cpcer(refs[rec], hyps.get(rec, Transcript(rec)), not args.no_normalize)
        per[rec] = r
        err += r["errors"]
        length += r["ref_length"]
    return {"cpcer": err / length if length else 0.0, "errors": err, "ref_length": length, "recordings": per}


def cmd_overlap(args):
    policy = HybridPolicy(args.threshold)
    out = {}
    for rec, ann in sorted(_rttm(args.rttm).items()):
        s = overlap_ratio(ann)
        out[rec] = {
            "overlap": s.overlap_duration,
            "speech": s.speech_duration,
            "ratio": s.ratio,
            "system": hybrid_select(s, policy),
        }
    return {"threshold": args.threshold, "recordings": out}


def _inputs(args) -> list[str]:
    paths = list(args.hyp or []) + list(args.files)
    if not paths:
        raise UsageError("give at least one hypothesis file")
    return paths


def _weight_list(values, n):
    """Weights may be space- or comma-separated."""
    if not values:
        return None
    try:
        w = [float(x) for v in values for x in v.split(",") if x]
    except ValueError:
        raise UsageError(f"bad --weights value: {' '.join(values)}") from None
    if len(w) != n:
        raise UsageError(f"need one weight per hypothesis ({n}), got {len(w)}")
    return w


def cmd_fuse_diar(args):
    paths = _inputs(args)
    systems = [_rttm(p) for p in paths]
    args.weights = _weight_list(args.weights, len(systems))
    if args.weights and args.ranks:
        raise UsageError("give either --weights or --ranks, not both")
    weights = args.weights or (rank_weights(args.ranks) if args.ranks else None)
    recs = sorted(set().union(*systems))
    fused = []
    for rec in recs:
        hyps = [s.get(rec, Annotation(rec)) for s in systems]
        fused.append(dover_lap(FusionInput(hyps, weights)))
    text = write_rttm(fused)
    if args.out:
        Path(args.out).write_text(text)
    return {"recordings": recs, "n_systems": len(systems), "rttm": text}


def _is_jsonl(text: str) -> bool:
    return text.lstrip().startswith("{")


def cmd_fuse_asr(args):
    paths = _inputs(args)
    texts = [_read_text(p) for p in paths]
    weights = _weight_list(args.weights, len(texts)) or [1.0] * len(texts)
    sep = "" if args.unit == "char" else " "

    def fuse(items):
        seqs = [TokenSequence(tuple(tokenize(t, args.unit)), w) for t, w in items]
        return rover(seqs)

    if not all(_is_jsonl(t) for t in texts):
        tokens = fuse(zip((t.strip() for t in texts), weights))
        return {"text": sep.join(tokens), "tokens": tokens, "unit": args.unit}

    # transcript mode: utterances are matched across systems by (recording_id, start)
    slots: dict[tuple[str, float], dict] = {}
    for w, text in zip(weights, texts):
        for tr in read_transcripts(text):
            for u in tr.utterances:
                slot = slots.setdefault((tr.recording_id, u.start), {"speaker": u.speaker, "items": []})
                slot["items"].append((u.text, w))
    fused = {}
    for (rec, start), slot in sorted(slots.items()):
        utt = Utterance(slot["speaker"], start, sep.join(fuse(slot["items"])))
        fused.setdefault(rec, []).append(utt)
    out_text = write_transcripts([Transcript(rec, tuple(u)) for rec, u in fused.items()])
    if args.out:
        Path(args.out).write_text(out_text, encoding="utf-8")
    return {"unit": args.unit, "utterances": len(slots), "n_systems": len(texts), "jsonl": out_text}


def _self_plda(x, threshold):
    labels = cl.ahc(cl.cosine_matrix(x), threshold)
    try:
        return cl.plda_fit(x, labels), "self-fit"
    except DegenerateClasses:
        d = x.shape[1]
        return cl.PldaModel(np.zeros(d), np.eye(d), np.eye(d)), "unit"


def cmd_cluster(args):
    seq, mean, cov = cl.read_embeddings(args.emb)
    x = cl.preprocess(seq.vectors, mean, cov)
    seq = cl.EmbeddingSequence(seq.recording_id, x, seq.timestamps)
    header = {"method": args.method, "threshold": args.threshold}
    if args.method == "ahc":
        labels = cl.ahc(cl.cosine_matrix(x), args.threshold)
        extra = {}
    else:
        cfg = cl.VbxConfig(Fa=args.fa, Fb=args.fb, loopP=args.loop_p, max_iters=args.max_iters)
        if args.plda:
            plda, source = cl.PldaModel.load(args.plda), "file"
        else:
            plda, source = _self_plda(x, args.threshold)
        init = cl.ahc(cl.plda_llr_matrix(plda, x), args.init_threshold)
        res = cl.vbx(seq, init, plda, cfg)
        labels = res.labels
        header.update(fa=cfg.Fa, fb=cfg.Fb, loop_p=cfg.loopP, max_iters=cfg.max_iters,
                      init_threshold=args.init_threshold, plda=source)
        extra = {"elbo_trace": res.elbo_trace, "speaker_priors": res.speaker_priors.tolist()}
    ann = cl.labels_to_annotation(seq, labels)
    text = write_rttm([ann])
    if args.out:
        Path(args.out).write_text(text)
    return {
        "header": header,
        "recording_id": seq.recording_id,
        "labels": [int(v) for v in labels],
        "n_speakers": len(set(int(v) for v in labels)),
        "rttm": text,
        **extra,
    }


def _manifest(path):
    base = Path(path).parent
    rows = [json.loads(line) for line in _read_text(path).splitlines() if line.strip()]

    def p(v):
        v = Path(v)
        return v if v.is_absolute() else base / v

    return [
        OAUtterance(r["utt_id"], read_wav(p(r["xsum"])), read_wav(p(r["y_sep"])), read_wav(p(r["xgss"])), r["ref_text"])
        for r in rows
    ]


def cmd_oa_grid(args):
    grid = build_grid(args.k, args.w2_step)
    out = {"k": grid.k, "w2_step": grid.w2_step, "size": len(grid),
           "candidates": [list(c.as_tuple()) for c in grid.candidates]}
    if args.manifest:
        if not args.asr_cmd or not args.out:
            raise UsageError("--manifest needs --asr-cmd and --out")
        oracle = CommandAsrOracle(args.asr_cmd)
        cache = CerCache(args.cache) if args.cache else None
        rows, partial = [], []
        for utt in _manifest(args.manifest):
            cv = cer_vector(utt, grid, oracle, cache=cache, workers=args.workers)
            rows.append({"utt_id": utt.utt_id, "cers": [None if np.isnan(v) else v for v in cv.cers],
                         "failed": list(cv.failed)})
            if cv.partial:
                partial.append(utt.utt_id)
        Path(args.out).write_text("".join(json.dumps(r) + "\n" for r in rows))
        out.update(utterances=len(rows), partial=partial)
        del out["candidates"]
    return out


def cmd_oa_train(args):
    grid = build_grid(args.k, args.w2_step)
    cers = {}
    for line in _read_text(args.cers).splitlines():
        if line.strip():
            r = json.loads(line)
            cers[r["utt_id"]] = CerVector(
                np.array([np.nan if v is None else v for v in r["cers"]], dtype=np.float64),
                tuple(r.get("failed", ())),
            )
    data = []
    for utt in _manifest(args.manifest):
        if utt.utt_id not in cers:
            raise DiarAsrError(f"no CER vector for {utt.utt_id}")
        data.append((bridging_features(utt.xsum, utt.y_sep, utt.xgss), cers[utt.utt_id]))
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, tau=args.tau, target_transform=args.target,
                      optimizer=args.optimizer, batch_size=args.batch_size, seed=args.seed)
    model = train_bridging(data, grid, cfg)
    model.save(args.out)
    return {"items": len(data), "grid_size": len(grid), "loss_trace": model.loss_trace, "model": str(args.out),
            "config": {"lr": cfg.lr, "epochs": cfg.epochs, "tau": cfg.tau, "target": cfg.target_transform,
                       "optimizer": cfg.optimizer, "batch_size": cfg.batch_size, "seed": cfg.seed}}


def cmd_oa_predict(args):
    model = BridgingModel.load(args.model)
    xsum, ysep, xgss = _read_wav(args.xsum), read_wav(args.y_sep), read_wav(args.xgss)
    res = predict_oa(model, xsum, ysep, xgss)
    w = res["chosen"]
    out = {"chosen": {"w1": w.w1, "w2": w.w2, "w3": w.w3}, "index": res["index"], "scores": res["scores"].tolist()}
    if args.out:
        buf, clipped = mix_with_report(xsum, ysep, xgss, w)
        write_wav(buf, args.out)
        out["clipped"] = clipped
    return out


def cmd_mix(args):
    if args.enhanced:
        if not args.original:
            raise UsageError("--enhanced needs --original")
        buf = mix_enhanced(_read_wav(args.original), read_wav(args.enhanced), args.w_enh)
        write_wav(buf, args.out)
        return {"mode": "enhanced", "w_enh": args.w_enh, "samples": buf.n_samples, "out": args.out}
    if not (args.xsum and args.y_sep and args.xgss):
        raise UsageError("give --xsum, --y-sep and --xgss (or --original/--enhanced)")
    w = MixWeights(args.w1, args.w2)
    buf, clipped = mix_with_report(_read_wav(args.xsum), read_wav(args.y_sep), read_wav(args.xgss), w)
    write_wav(buf, args.out)
    return {"mode": "oa", "w1": w.w1, "w2": w.w2, "w3": w.w3, "clipped": clipped,
            "samples": buf.n_samples, "out": args.out}


def cmd_cascade(args):
    cfg = load_config(args.config)
    res = run_cascade(cfg)
    return {"report": res["report"], "oracle_calls": res["oracle_calls"], "workdir": str(cfg.workdir)}


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", help="print a human-readable table")

    ap = argparse.ArgumentParser(prog="diarasr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("score-der", cmd_score_der, "diarization error rate between two RTTM files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=DEFAULT_COLLAR)
    p.add_argument("--no-score-overlap", action="store_true")

    p = add("score-cer", cmd_score_cer, "character error rate between two text files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--no-normalize", action="store_true")

    p = add("score-cpcer", cmd_score_cpcer, "cpCER between two transcript JSONL files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--no-normalize", action="store_true")

    p = add("overlap", cmd_overlap, "overlap ratio and hybrid choice per recording")
    p.add_argument("--rttm", required=True)
    p.add_argument("--threshold", type=float, default=0.01)

    p = add("fuse-diar", cmd_fuse_diar, "label-voting fusion of RTTM hypotheses")
    p.add_argument("files", nargs="*", help="RTTM hypotheses")
    p.add_argument("--hyp", action="append")
    p.add_argument("--weights", nargs="+", help="one per hypothesis, space- or comma-separated")
    p.add_argument("--ranks", type=int, nargs="+")
    p.add_argument("--out")

    p = add("fuse-asr", cmd_fuse_asr, "ROVER fusion of text or transcript-JSONL hypotheses")
    p.add_argument("files", nargs="*", help="plain text files, or transcript JSONL files")
    p.add_argument("--hyp", action="append")
    p.add_argument("--weights", nargs="+", help="one per hypothesis, space- or comma-separated")
    p.add_argument("--unit", choices=("char", "word"), default="char")
    p.add_argument("--out", help="write fused transcript JSONL here")

    p = add("cluster", cmd_cluster, "AHC or VBx clustering of an embedding file")
    p.add_argument("--emb", required=True)
    p.add_argument("--method", choices=("ahc", "vbx"), default="ahc")
    p.add_argument("--threshold", type=float, default=0.65)
    p.add_argument("--init-threshold", type=float, default=0.0)
    p.add_argument("--fa", type=float, default=0.15)
    p.add_argument("--fb", type=float, default=5.5)
    p.add_argument("--loop-p", type=float, default=0.99)
    p.add_argument("--max-iters", type=int, default=40)
    p.add_argument("--plda")
    p.add_argument("--out")

    p = add("oa-grid", cmd_oa_grid, "list the weight grid, or build CER vectors with --manifest")
    p.add_argument("--k", type=float, default=0.05)
    p.add_argument("--w2-step", type=float, default=0.1)
    p.add_argument("--manifest")
    p.add_argument("--asr-cmd")
    p.add_argument("--cache")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out")

    p = add("oa-train", cmd_oa_train, "train the weight predictor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=float, default=0.05)
    p.add_argument("--w2-step", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--target", choices=("negated", "verbatim"), default="negated")
    p.add_argument("--optimizer", choices=("adam", "gd"), default="adam")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = add("oa-predict", cmd_oa_predict, "pick mixing weights for one utterance")
    p.add_argument("--model", required=True)
    p.add_argument("--xsum", required=True)
    p.add_argument("--y-sep", required=True)
    p.add_argument("--xgss", required=True)
    p.add_argument("--out", help="also write the chosen mixture here")

    p = add("mix", cmd_mix, "weighted mixture of WAV files")
    p.add_argument("--xsum")
    p.add_argument("--y-sep")
    p.add_argument("--xgss")
    p.add_argument("--w1", type=float, default=1 / 3)
    p.add_argument("--w2", type=float, default=1 / 3)
    p.add_argument("--original")
    p.add_argument("--enhanced")
    p.add_argument("--w-enh", type=float, default=0.7)
    p.add_argument("--out", required=True)

    p = add("cascade", cmd_cascade, "run the diarization + recognition cascade")
    p.add_argument("--config", required=True)
    return ap


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}{k}.")
    else:
        yield prefix[:-1], obj


def _pretty(result) -> str:
    rows = []
    for k, v in _flatten(result):
        if isinstance(v, str) and "\n" in v:
            v = f"<{v.count(chr(10))} lines>"
        elif isinstance(v, list):
            v = json.dumps(v) if len(v) <= 8 else f"[{len(v)} values]"
        elif isinstance(v, float):
            v = f"{v:.6g}"
        rows.append((k, str(v)))
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _emit(obj, stream):
    stream.write(obj if obj.endswith("\n") else obj + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (DiarAsrError, ValueError, KeyError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        _emit(json.dumps(err, ensure_ascii=False), sys.stdout)
        return 1
    if args.pretty:
        _emit(_pretty(result), sys.stdout)
    else:
        _emit(json.dumps(result, ensure_ascii=False, sort_keys=True), sys.stdout)
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
