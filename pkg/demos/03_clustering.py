"""Clustering speaker embeddings.

Embeddings for a recording with two alternating speakers are drawn from
a known PLDA model. Cosine AHC gives a first partition; VBx refines it
with an HMM that discourages rapid speaker switching and drops speakers
that end up with no frames.
"""

import numpy as np

from diarasr import write_rttm
from diarasr.clustering import (
    EmbeddingSequence, PldaModel, VbxConfig, ahc, cosine_matrix, labels_to_annotation, plda_llr_matrix, vbx,
)

rng = np.random.default_rng(0)
dim, frames = 16, 120
plda = PldaModel(mean=np.zeros(dim), within_cov=np.eye(dim), between_cov=4 * np.eye(dim))

speakers = rng.normal(scale=2.0, size=(2, dim))
truth = np.repeat([0, 1, 0, 1], frames // 4)
x = speakers[truth] + rng.normal(size=(frames, dim))
seq = EmbeddingSequence("r1", x, tuple((0.75 * i, 0.75 * (i + 1)) for i in range(frames)))

coarse = ahc(cosine_matrix(x), threshold=0.3)
print(f"cosine AHC at 0.3: {len(set(coarse))} clusters")

init = ahc(plda_llr_matrix(plda, x), threshold=0.0)
res = vbx(seq, init, plda, VbxConfig())
agree = max(np.mean(res.labels == truth), np.mean(res.labels == 1 - truth))
print(f"VBx: {res.posteriors.shape[1]} speakers, {agree:.1%} frames correct, "
      f"ELBO {res.elbo_trace[0]:.1f} -> {res.elbo_trace[-1]:.1f} in {len(res.elbo_trace)} iterations")
print(write_rttm([labels_to_annotation(seq, res.labels)]), end="")
