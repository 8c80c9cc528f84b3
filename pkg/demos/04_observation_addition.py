"""Learning how to mix original and enhanced audio before recognition.

Observation addition feeds the recogniser a weighted sum of the summed
microphone signal, a separated stream and a guided-source-separation
stream. The best weights differ per utterance, so a small predictor is
trained to pick them from the audio alone.

Supervision comes from running the recogniser on every candidate mixture
in the weight grid and recording the CER. A real setup would plug in
``CommandAsrOracle("my_asr {wav}")``. Here a stand-in recogniser degrades
its output the further the mixture is from a hidden per-utterance
optimum, and that optimum is audible as the pitch of the first two
streams, so it can be learned.
"""

import tempfile
from pathlib import Path

import numpy as np

from diarasr.oa import (
    BridgingModel, CerCache, OAUtterance, TrainConfig, WaveBuffer, bridging_features, build_grid, cer_vector,
    mix_with_report, predict_oa, train_bridging, write_wav,
)

SR, N = 16000, 4800
TEXT = "会议记录今天下午讨论项目进度预算安排结束会议记录今天下午讨论"


class StandInRecogniser:
    """Recovers the weights of a mixture and makes mistakes in proportion
    to the squared distance from the utterance's best weights."""

    def __init__(self, streams, best):
        self.pinv = np.linalg.pinv(np.vstack(streams).T)
        self.best = np.asarray(best)

    def transcribe(self, audio):
        w1, w2, _ = self.pinv @ audio.mono
        err = min(1.0, 0.05 + 4.0 * float(np.sum((np.array([w1, w2]) - self.best) ** 2)))
        n_bad = round(err * len(TEXT))
        return "错" * n_bad + TEXT[n_bad:]


def utterance(rng, i):
    a = rng.uniform(0.1, 0.6)
    b = rng.uniform(0.05, min(0.4, 0.95 - a))
    t = np.arange(N) / SR

    def voiced(x):
        f0 = 300 + 2000 * x
        return 0.05 * sum(np.sin(2 * np.pi * h * f0 * t) for h in range(1, 6)) + rng.normal(scale=0.01, size=N)

    streams = [voiced(a), voiced(b), rng.normal(scale=0.05, size=N)]
    utt = OAUtterance(f"u{i:03d}", *(WaveBuffer(s, SR) for s in streams), TEXT)
    return utt, StandInRecogniser(streams, (a, b))


grid = build_grid(k=0.05, w2_step=0.1)
print(f"{len(grid)} candidate weightings, e.g. {grid.candidates[:3]}")

rng = np.random.default_rng(0)
cache = CerCache()  # pass a path to persist CERs across runs
train, held_out = [], []
for i in range(260):
    utt, asr = utterance(rng, i)
    feats = bridging_features(utt.xsum, utt.y_sep, utt.xgss)
    cv = cer_vector(utt, grid, asr, cache=cache, workers=1)
    (train if i < 200 else held_out).append((utt, feats, cv))
print(f"CER table filled: {len(cache)} recogniser runs")

model = train_bridging([(f, cv) for _, f, cv in train], grid, TrainConfig(seed=0))

with tempfile.TemporaryDirectory() as d:
    model.save(Path(d) / "oa.npz")
    model = BridgingModel.load(Path(d) / "oa.npz")

    gains, near = [], 0
    for utt, feats, cv in held_out:
        pick = predict_oa(model, utt.xsum, utt.y_sep, utt.xgss, features=feats)
        best = int(np.argmin(cv.cers))
        near += grid.step_distance(pick["index"], best) <= 1
        gains.append(cv.cers[grid.index(0.0, 0.0)] - cv.cers[pick["index"]])
    print(f"held-out: {near}/{len(held_out)} picks within one grid step of the best weighting")
    print(f"mean CER gain over using the GSS stream alone: {np.mean(gains):.3f}")

    utt, _, _ = held_out[0]
    w = predict_oa(model, utt.xsum, utt.y_sep, utt.xgss)["chosen"]
    mixed, clipped = mix_with_report(utt.xsum, utt.y_sep, utt.xgss, w)
    write_wav(mixed, Path(d) / "mixed.wav")
    print(f"{utt.utt_id}: mixing with w1={w.w1:.2f} w2={w.w2:.2f} w3={w.w3:.2f}, {clipped} samples clipped")
