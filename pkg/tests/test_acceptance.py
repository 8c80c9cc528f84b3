"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest, or directly with ``python tests/test_acceptance.py``.
"""

import itertools
import random
import struct
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import _cascade  # noqa: E402
import _synthetic  # noqa: E402
from _oracles import dp_cer, frame_sets, plain_levenshtein  # noqa: E402

from diarasr.asr_fusion import NULL, TokenSequence, WordTransitionNetwork, align_wtn, rover  # noqa: E402
from diarasr.clustering import EmbeddingSequence, PldaModel, VbxConfig, ahc, plda_llr_matrix, vbx  # noqa: E402
from diarasr.diar_fusion import FusionInput, dover_lap  # noqa: E402
from diarasr.metrics import Transcript, Utterance, cer, cpcer, der  # noqa: E402
from diarasr.oa import (  # noqa: E402
    MixWeights,
    TrainConfig,
    build_grid,
    mix,
    oa_loss,
    oa_loss_grad,
    predict_oa,
    read_wav,
    train_bridging,
    write_wav,
)
from diarasr.pipeline import hybrid_select, load_config, run_cascade  # noqa: E402
from diarasr.timeline import Annotation, OverlapStats, Segment, speaker_intervals  # noqa: E402


def _line(ok, name, detail):
    return f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"


# --- 1. CER ---------------------------------------------------------------


def check_cer_oracle():
    rng = random.Random(11)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        ref = "".join(rng.choice("abcd") for _ in range(rng.randint(1, 10)))
        hyp = "".join(rng.choice("abcd") for _ in range(rng.randint(0, 10)))
        b = cer(ref, hyp)
        s, d, i = dp_cer(ref, hyp)
        if (b.substitutions, b.deletions, b.insertions) != (s, d, i) or b.cer != (s + d + i) / len(ref):
            mismatches += 1
    dt = time.perf_counter() - t0
    return mismatches == 0 and dt < 5.0, f"{mismatches} mismatches / 1000 pairs, {dt:.2f}s (limit 5s)"


# --- 2. cpCER -------------------------------------------------------------


def _brute_cpcer_errors(ref_texts, hyp_texts):
    r, h = list(ref_texts), list(hyp_texts)
    n = max(len(r), len(h))
    r += [""] * (n - len(r))
    h += [""] * (n - len(h))
    cost = [[plain_levenshtein(a, b) for b in h] for a in r]
    return min(sum(cost[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def check_cpcer_oracle():
    rng = random.Random(12)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        nr, nh = rng.randint(1, 6), rng.randint(1, 6)
        refs = ["".join(rng.choice("abc") for _ in range(rng.randint(1, 6))) for _ in range(nr)]
        hyps = ["".join(rng.choice("abc") for _ in range(rng.randint(0, 6))) for _ in range(nh)]
        ref = Transcript("r", tuple(Utterance(f"R{k}", 0.0, t) for k, t in enumerate(refs)))
        hyp = Transcript("r", tuple(Utterance(f"H{k}", 0.0, t) for k, t in enumerate(hyps)))
        got = cpcer(ref, hyp)
        want = _brute_cpcer_errors(refs, hyps)
        if got["errors"] != want or got["cpcer"] != want / sum(map(len, refs)):
            bad += 1
    dt = time.perf_counter() - t0
    return bad == 0 and dt < 30.0, f"{bad} mismatches / 200 instances, {dt:.2f}s (limit 30s)"


# --- 3. DER ---------------------------------------------------------------


def _grid_annotation(rng, n_spk, n_seg, names):
    segs = []
    for _ in range(n_seg):
        start = rng.randint(0, 1500)
        segs.append(Segment(start / 100, rng.randint(1, 400) / 100, rng.choice(names[:n_spk])))
    return Annotation("r", tuple(segs))


def frame_der_exhaustive(ref, hyp, step=0.01):
    """Frame counting with every injective ref->hyp map (unmapped allowed)."""
    n = int(np.ceil(max(ref.end, hyp.end) / step)) + 1
    rf, hf = frame_sets(ref, n, step), frame_sets(hyp, n, step)
    rs, hs = ref.speakers, hyp.speakers
    rm = np.array([[a in f for f in rf] for a in rs])
    hm = np.array([[b in f for f in hf] for b in hs]) if hs else np.zeros((0, n), bool)
    both = (rm[:, None, :] & hm[None, :, :]).sum(axis=2)
    nr, nh = rm.sum(axis=0), hm.sum(axis=0)
    worst = np.maximum(nr, nh).sum()
    best_correct = 0
    for perm in itertools.permutations(list(range(len(hs))) + [None] * len(rs), len(rs)):
        best_correct = max(best_correct, sum(both[a, b] for a, b in enumerate(perm) if b is not None))
    return (worst - best_correct) / nr.sum()


def check_der_frame_oracle():
    rng = random.Random(13)
    worst = 0.0
    for _ in range(100):
        ref = _grid_annotation(rng, rng.randint(1, 4), rng.randint(1, 20), "ABCD")
        hyp = _grid_annotation(rng, rng.randint(1, 4), rng.randint(1, 20), "wxyz")
        worst = max(worst, abs(der(ref, hyp, collar=0.0).der - frame_der_exhaustive(ref, hyp)))
    return worst <= 0.001, f"max |DER - frame DER| = {100 * worst:.4f} pp over 100 pairs (limit 0.1 pp)"


# --- 4. DOVER-Lap ---------------------------------------------------------


def _ann(*rows):
    return Annotation("r", tuple(Segment(s, e - s, spk) for spk, s, e in rows))


def _random_ann(rng):
    rows = []
    for _ in range(rng.randint(1, 10)):
        s = rng.randint(0, 2000) / 100
        rows.append((rng.choice("ABCD"), s, s + rng.randint(10, 500) / 100))
    return _ann(*rows)


def check_dover_lap():
    rng = random.Random(14)
    failures = 0
    for _ in range(100):
        a = _random_ann(rng)
        target = speaker_intervals(a)
        if speaker_intervals(dover_lap(FusionInput([a]))) != target:
            failures += 1
            continue
        names = a.speakers
        shuffled = names[:]
        rng.shuffle(shuffled)
        copies = [a, a.relabel(dict(zip(names, shuffled))), a.relabel({n: n.lower() for n in names})]
        if speaker_intervals(dover_lap(FusionInput(copies))) != target:
            failures += 1
    hyps = [
        _ann(("A", 0, 4), ("B", 4, 8), ("C", 6, 7)),
        _ann(("A", 0, 5), ("B", 5, 8), ("D", 6, 7)),
        _ann(("A", 0, 3), ("C", 3, 8)),
    ]
    fused = dover_lap(FusionInput(hyps))
    hand = {"A": [(0, 4)], "B": [(4, 8)], "C": [(6, 7)]}
    fixture_ok = speaker_intervals(fused) == hand
    return failures == 0 and fixture_ok, f"{failures} identity/unanimity failures / 100, majority fixture {'matches' if fixture_ok else 'differs'}"


# --- 5. ROVER -------------------------------------------------------------


def _slot_table(rng, one_deviant):
    """Three systems from a slot table where two rows agree in every column.

    With ``one_deviant`` the same system carries every disagreement, so the
    agreeing pair is fixed and the designed columns survive alignment.
    Otherwise deviations are spread over all systems and only the slots of
    the built network are meaningful.
    """
    vocab = "甲乙丙丁戊"
    n = rng.randint(1, 8)
    majority = [rng.choice(vocab + NULL) for _ in range(n)]
    rows = [list(majority), list(majority), list(majority)]
    odd_fixed = rng.randrange(3)
    for j in range(n):
        odd = odd_fixed if one_deviant else rng.randrange(3)
        if rng.random() < 0.5:
            rows[odd][j] = rng.choice(vocab + NULL)
    strip = lambda r: [t for t in r if t != NULL]
    return [strip(r) for r in rows], strip(majority)


def _wtn_majority_holds(seqs):
    wtn = WordTransitionNetwork()
    for s in seqs:
        wtn = align_wtn(wtn, TokenSequence(tuple(s)))
    paths = wtn.paths()
    out = []
    for j, slot in enumerate(wtn.slots):
        col = [p[j] for p in paths]
        top = max(set(col), key=col.count)
        if col.count(top) >= 2 and slot.winner() != top:
            return False, None
        if slot.winner() != NULL:
            out.append(slot.winner())
    return True, out


def check_rover():
    rng = random.Random(15)
    slot_fail = designed_fail = unanimity_fail = 0
    n = 500
    for _ in range(n):
        seqs, _ = _slot_table(rng, one_deviant=False)
        ok, out = _wtn_majority_holds(seqs)
        if not ok or out != rover([TokenSequence(tuple(s)) for s in seqs]):
            slot_fail += 1
        seqs, expected = _slot_table(rng, one_deviant=True)
        if rover([TokenSequence(tuple(s)) for s in seqs]) != expected:
            designed_fail += 1
        if rover([TokenSequence(tuple(seqs[0]))] * 3) != list(seqs[0]):
            unanimity_fail += 1
    hand = [
        (["我们", "我门", "我们"], "我们"),
        (["今天下雨", "今天雨", "今天下雨了"], "今天下雨"),
        (["好", "好", ""], "好"),
    ]
    hand_fail = sum(
        "".join(rover([TokenSequence(tuple(s)) for s in sys3])) != want for sys3, want in hand
    )
    ok = slot_fail == hand_fail == designed_fail == unanimity_fail == 0
    return ok, (f"{n} fixtures each: network-slot majority violations {slot_fail}, "
                f"fixed-pair majority mismatches {designed_fail}, unanimity failures {unanimity_fail}; "
                f"hand fixtures wrong {hand_fail}/{len(hand)}")


# --- 6. VBx ---------------------------------------------------------------


def _plda(rng, dim):
    a = rng.normal(size=(dim, dim))
    within = a @ a.T / dim + np.eye(dim)
    b = rng.normal(size=(dim, dim))
    between = 4.0 * (b @ b.T / dim + 0.1 * np.eye(dim))
    return PldaModel(rng.normal(size=dim), within, between)


def _seq(x):
    return EmbeddingSequence("r", x, tuple((float(i), float(i + 1)) for i in range(len(x))))


def check_vbx():
    rng = np.random.default_rng(16)
    t0 = time.perf_counter()
    decreases = 0
    for _ in range(100):
        dim = int(rng.integers(2, 10))
        model = _plda(rng, dim)
        t_len = int(rng.integers(5, 80))
        x = model.mean + rng.normal(scale=rng.uniform(0.5, 3), size=(t_len, dim))
        init = rng.integers(0, rng.integers(1, 5), size=t_len)
        cfg = VbxConfig(Fa=rng.uniform(0.05, 1), Fb=rng.uniform(0.5, 10), loopP=rng.uniform(0.5, 0.995),
                        epsilon=-np.inf, max_iters=20)
        if np.any(np.diff(vbx(_seq(x), init, model, cfg).elbo_trace) < -1e-8):
            decreases += 1

    dim, t_len = 16, 200
    model = _plda(rng, dim)
    sigma = np.sqrt(np.trace(model.within_cov) / dim)
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    truth = np.repeat(np.arange(8) % 2, t_len // 8)
    centres = np.array([model.mean + 5 * sigma * u, model.mean - 5 * sigma * u])
    x = centres[truth] + rng.normal(size=(t_len, dim)) @ np.linalg.cholesky(model.within_cov).T
    init = ahc(plda_llr_matrix(model, x), 0.0)
    res = vbx(_seq(x), init, model, VbxConfig(Fa=0.15, Fb=5.5, loopP=0.99))
    k = max(truth.max(), res.labels.max()) + 1
    acc = max(np.mean(np.array(p)[res.labels] == truth) for p in itertools.permutations(range(k)))
    dt = time.perf_counter() - t0
    ok = decreases == 0 and acc >= 0.99 and dt < 60
    return ok, f"ELBO decreases on {decreases}/100 inputs, 10-sigma accuracy {acc:.3f} (>= 0.99), {dt:.1f}s (limit 60s)"


# --- 7. loss gradient -----------------------------------------------------


def check_loss_gradient():
    rng = np.random.default_rng(17)
    h = 1e-5
    worst_rel = worst_scale = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 40))
        logits, cers, tau = rng.normal(size=n), rng.uniform(0, 1, n), float(rng.uniform(0.1, 5))
        mode = "verbatim" if trial % 2 == 0 else "negated"
        g = oa_loss_grad(logits, cers, tau, mode)
        num = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            num[i] = (oa_loss(logits + e, cers, tau, mode) - oa_loss(logits - e, cers, tau, mode)) / (2 * h)
        worst_rel = max(worst_rel, np.linalg.norm(g - num) / np.linalg.norm(num))
        base = oa_loss(logits, cers, tau, mode)
        for c in (0.5, 2.0, 10.0):
            worst_scale = max(worst_scale, abs(oa_loss(c * logits, cers, tau, mode) - base))
    ok = worst_rel <= 1e-5 and worst_scale <= 1e-10
    return ok, f"max relative gradient error {worst_rel:.2e} (<= 1e-5), max scale drift {worst_scale:.1e} (<= 1e-10)"


# --- 8. mixing identities -------------------------------------------------


def check_mix_identities():
    rng = np.random.default_rng(18)
    with tempfile.TemporaryDirectory() as d:
        bufs = []
        for k in range(3):
            p = Path(d) / f"in{k}.wav"
            pcm = rng.integers(-32768, 32768, 4000).astype("<i2")
            header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + pcm.nbytes, b"WAVE", b"fmt ", 16, 1, 1,
                                 16000, 32000, 2, 16, b"data", pcm.nbytes)
            p.write_bytes(header + pcm.tobytes())
            bufs.append((p, read_wav(p)))
        ok = True
        for k, w in enumerate([MixWeights(1, 0), MixWeights(0, 1), MixWeights(0, 0)]):
            out = mix(bufs[0][1], bufs[1][1], bufs[2][1], w)
            q = Path(d) / f"out{k}.wav"
            write_wav(out, q)
            ok &= out == bufs[k][1] and q.read_bytes() == bufs[k][0].read_bytes()
    return ok, "weights (1,0,0)/(0,1,0)/(0,0,1) " + ("reproduce" if ok else "do not reproduce") + " inputs bit-exactly"


# --- 9. grid --------------------------------------------------------------


def check_grid():
    rng = np.random.default_rng(19)
    bad = 0
    for _ in range(20):
        k, step = float(rng.uniform(0.02, 1.0)), float(rng.uniform(0.05, 1.0))
        n1 = int(np.floor(1 / k + 1e-9))
        n2 = int(np.ceil(1 / step - 1e-9))
        brute = [(round(i * k, 9), round(j * step, 9)) for i in range(n1 + 1) for j in range(n2)
                 if i * k + j * step <= 1 + 1e-12]
        got = [(round(c.w1, 9), round(c.w2, 9)) for c in build_grid(k, step).candidates]
        bad += got != brute
    g = build_grid(0.05, 0.1)
    invalid = sum(1 for i in range(21) for j in range(10) if 5 * i + 10 * j > 100)
    count_ok = len(g) == 21 * 10 - invalid
    return bad == 0 and count_ok, f"{bad}/20 random grids differ from enumeration; k=0.05 gives {len(g)} = 210 - {invalid}"


# --- 10. end-to-end OA ----------------------------------------------------


def check_oa_end_to_end():
    t0 = time.perf_counter()
    grid, train = _synthetic.make_dataset(400, seed=1)
    _, held = _synthetic.make_dataset(200, seed=2, grid=grid)
    model = train_bridging([(f, cv) for _, _, f, cv in train], grid, TrainConfig(lr=0.001, epochs=30))
    hits = 0
    for utt, oracle, _, _ in held:
        chosen = predict_oa(model, utt.xsum, utt.y_sep, utt.xgss)["index"]
        hits += grid.step_distance(chosen, _synthetic.true_optimum(grid, oracle.a, oracle.b)) <= 1
    dt = time.perf_counter() - t0
    rate = hits / len(held)
    return rate >= 0.8 and dt < 120, f"{hits}/200 held-out choices within one step ({rate:.1%}, need 80%), {dt:.1f}s (limit 120s)"


# --- 11. hybrid selection -------------------------------------------------


def check_hybrid():
    got = {r: hybrid_select(OverlapStats(r, 1.0, r)) for r in (0.005, 0.02, 0.01)}
    ok = got == {0.005: "traditional", 0.02: "e2e", 0.01: "e2e"}
    return ok, ", ".join(f"{r} -> {s}" for r, s in got.items())


# --- 12. cascade ----------------------------------------------------------


def check_cascade():
    with tempfile.TemporaryDirectory() as d:
        cfg = load_config(_cascade.build(Path(d)), env={})
        first = run_cascade(cfg, _cascade.TableOracle())["report"]
        work = Path(d) / "work"
        snapshot = {p: p.read_bytes() for p in sorted(work.rglob("*")) if p.is_file()}
        again = _cascade.TableOracle()
        run_cascade(cfg, again)
        after = {p: p.read_bytes() for p in sorted(work.rglob("*")) if p.is_file()}
    scores = {r: first["recordings"][r]["cpcer"] for r in ("recA", "recB")}
    scores["overall"] = first["overall"]["cpcer"]
    exact = scores == _cascade.EXPECTED
    idem = again.calls == 0 and after == snapshot
    return exact and idem, (f"cpCER {scores} vs hand-scored {_cascade.EXPECTED}; "
                            f"rerun oracle calls {again.calls}, workdir {'identical' if after == snapshot else 'changed'}")


CHECKS = [
    ("CER oracle equivalence", check_cer_oracle),
    ("cpCER permutation oracle", check_cpcer_oracle),
    ("DER frame oracle", check_der_frame_oracle),
    ("DOVER-Lap identity, unanimity, majority", check_dover_lap),
    ("ROVER majority and unanimity", check_rover),
    ("VBx ELBO and separation", check_vbx),
    ("loss gradient and scale invariance", check_loss_gradient),
    ("mixing identities", check_mix_identities),
    ("grid enumeration", check_grid),
    ("end-to-end synthetic OA training", check_oa_end_to_end),
    ("hybrid selection boundary", check_hybrid),
    ("cascade fixture and idempotence", check_cascade),
]


@pytest.mark.parametrize("name,check", CHECKS, ids=[c[0] for c in CHECKS])
def test_criterion(name, check, request):
    ok, detail = check()
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    line = _line(ok, name, detail)
    if reporter is not None:
        reporter.write_line("\n" + line)
    else:
        print(line)
    assert ok, line


if __name__ == "__main__":
    results = []
    for name, check in CHECKS:
        ok, detail = check()
        print(_line(ok, name, detail), flush=True)
        results.append(ok)
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
