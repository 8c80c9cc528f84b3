"""Speaker clustering over precomputed embeddings: cosine/PLDA scores, AHC and VBx."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.special import logsumexp, softmax

from .errors import (
    CorruptHeader,
    DegenerateClasses,
    EmptyInit,
    NonSquareMatrix,
    NumericalFailure,
    ZeroVector,
)
from .timeline import Annotation, Segment, merge_adjacent

logger = logging.getLogger(__name__)

__all__ = [
    "EmbeddingSequence",
    "PldaModel",
    "VbxConfig",
    "ClusterResult",
    "cosine_score",
    "cosine_matrix",
    "ahc",
    "plda_fit",
    "plda_llr_matrix",
    "preprocess",
    "vbx",
    "labels_to_annotation",
    "read_embeddings",
    "write_embeddings",
]

MAGIC = b"EMB1"


@dataclass(frozen=True)
class EmbeddingSequence:
    recording_id: str
    vectors: np.ndarray
    timestamps: tuple[tuple[float, float], ...]

    def __post_init__(self):
        x = np.asarray(self.vectors, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("vectors must be a non-empty T x D matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("vectors contain non-finite entries")
        ts = tuple((float(a), float(b)) for a, b in self.timestamps)
        if len(ts) != x.shape[0]:
            raise ValueError("need one timestamp span per vector")
        for (a0, b0), (a1, _) in zip(ts, ts[1:]):
            if a1 < a0 or a1 < b0 - 1e-9:
                raise ValueError("timestamps must be sorted and non-overlapping")
        object.__setattr__(self, "vectors", x)
        object.__setattr__(self, "timestamps", ts)


@dataclass(frozen=True)
class PldaModel:
    mean: np.ndarray
    within_cov: np.ndarray
    between_cov: np.ndarray

    def diagonalize(self) -> tuple[np.ndarray, np.ndarray]:
        """Transform ``T`` with ``T W T' = I`` and ``T B T' = diag(phi)``."""
        phi, vecs = eigh(self.between_cov, self.within_cov)
        order = np.argsort(phi)[::-1]
        return vecs[:, order].T, np.clip(phi[order], 0.0, None)

    def project(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t, phi = self.diagonalize()
        return (np.asarray(x) - self.mean) @ t.T, phi

    def save(self, path):
        np.savez(path, mean=self.mean, within_cov=self.within_cov, between_cov=self.between_cov)

    @classmethod
    def load(cls, path) -> "PldaModel":
        with np.load(path) as z:
            return cls(z["mean"], z["within_cov"], z["between_cov"])


@dataclass(frozen=True)
class VbxConfig:
    Fa: float = 0.15
    Fb: float = 5.5
    loopP: float = 0.99
    max_iters: int = 40
    epsilon: float = 1e-6
    init_smoothing: float = 7.0
    min_speaker_mass: float = 1.0

    def __post_init__(self):
        if not (self.Fa > 0 and self.Fb > 0):
            raise ValueError("Fa and Fb must be positive")
        if not 0 < self.loopP < 1:
            raise ValueError("loopP must lie in (0, 1)")


@dataclass
class ClusterResult:
    labels: np.ndarray
    posteriors: np.ndarray
    elbo_trace: list[float] = field(default_factory=list)
    speaker_priors: np.ndarray | None = None


def cosine_score(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroVector("cosine similarity of a zero vector")
    u = x / norms
    return np.clip(u @ u.T, -1.0, 1.0)


def ahc(similarity, threshold: float) -> np.ndarray:
    """Average-linkage agglomerative clustering on a similarity matrix.

    Clusters keep merging while the best pair's average similarity is at
    least ``threshold``. Ties go to the smallest ``(i, j)`` pair, where a
    cluster is indexed by its smallest member. Labels are numbered by first
    appearance.
    """
    sim = np.array(similarity, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise NonSquareMatrix(f"expected a square matrix, got shape {sim.shape}")
    n = sim.shape[0]
    if not np.all(np.isfinite(sim)):
        raise ValueError("similarity matrix must be finite")
    if not np.allclose(sim, sim.T):
        raise ValueError("similarity matrix must be symmetric")
    parent = np.arange(n)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    link = sim.copy()
    link[np.tril_indices(n)] = -np.inf
    while active.sum() > 1:
        flat = int(np.argmax(link))
        i, j = divmod(flat, n)
        if link[i, j] < threshold:
            break
        # Lance-Williams update for average linkage; cluster i absorbs j
        merged = (sizes[i] * _sym(link, i) + sizes[j] * _sym(link, j)) / (sizes[i] + sizes[j])
        sizes[i] += sizes[j]
        active[j] = False
        parent[parent == j] = i
        link[j, :] = -np.inf
        link[:, j] = -np.inf
        upper = np.arange(n) > i
        lower = np.arange(n) < i
        link[i, upper & active] = merged[upper & active]
        link[lower & active, i] = merged[lower & active]
    _, labels = np.unique(parent, return_inverse=True)
    return labels


def _sym(link: np.ndarray, i: int) -> np.ndarray:
    row = np.where(np.isfinite(link[i, :]), link[i, :], link[:, i])
    return row


def plda_fit(vectors, labels) -> PldaModel:
    """Two-covariance PLDA from labelled vectors."""
    x = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2 or np.any(counts < 2):
        raise DegenerateClasses("need at least two classes with two samples each")
    n, d = x.shape
    mean = x.mean(axis=0)
    within = np.zeros((d, d))
    between = np.zeros((d, d))
    for c, cnt in zip(classes, counts):
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        dev = xc - mc
        within += dev.T @ dev
        diff = (mc - mean)[:, None]
        between += cnt * (diff @ diff.T)
    within /= n
    between /= n
    tr = np.trace(within)
    if tr <= 0:
        raise DegenerateClasses("within-class scatter is zero")
    within += np.eye(d) * 1e-6 * tr / d
    return PldaModel(mean, within, between)


def plda_llr_matrix(plda: PldaModel, x) -> np.ndarray:
    """Same-vs-different speaker log-likelihood ratio for every pair of rows."""
    y, phi = plda.project(x)
    q = 1.0 / (phi + 1.0) - (phi + 1.0) / (2 * phi + 1.0)
    r = phi / (2 * phi + 1.0)
    const = np.sum(np.log(phi + 1.0) - 0.5 * np.log(2 * phi + 1.0))
    sq = 0.5 * (y**2) @ q
    return const + sq[:, None] + sq[None, :] + (y * r) @ y.T


def preprocess(vectors, mean=None, cov=None) -> np.ndarray:
    """Centre, whiten and length-normalise embeddings to norm sqrt(D)."""
    x = np.asarray(vectors, dtype=np.float64)
    if mean is not None:
        x = x - mean
    if cov is not None:
        w, v = np.linalg.eigh(cov)
        x = x @ (v / np.sqrt(np.clip(w, 1e-12, None)))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return x / norms * np.sqrt(x.shape[1])


def _forward_backward(lls, tr, ip):
    with np.errstate(divide="ignore"):
        ltr = np.log(tr)
        lip = np.log(ip)
    n, s = lls.shape
    lfw = np.empty_like(lls)
    lbw = np.zeros_like(lls)
    lfw[0] = lls[0] + lip
    for t in range(1, n):
        lfw[t] = lls[t] + logsumexp(lfw[t - 1][:, None] + ltr, axis=0)
    for t in range(n - 2, -1, -1):
        lbw[t] = logsumexp(ltr + lls[t + 1] + lbw[t + 1], axis=1)
    tll = logsumexp(lfw[-1])
    post = np.exp(lfw + lbw - tll)
    return post, tll, lfw, lbw


def vbx(seq: EmbeddingSequence, init_labels, plda: PldaModel, cfg: VbxConfig = VbxConfig()) -> ClusterResult:
    """Bayesian HMM clustering of an embedding sequence.

    Embeddings are projected into the PLDA space where the within-speaker
    covariance is identity and the between-speaker covariance is diagonal.
    Each iteration updates the speaker-variable posteriors, runs
    forward-backward for the frame-to-speaker posteriors, then re-estimates
    the speaker priors. Speakers whose posterior mass ends below
    ``cfg.min_speaker_mass`` frames are dropped.
    """
    init = np.asarray(init_labels)
    if init.size == 0 or init.shape[0] != seq.vectors.shape[0]:
        raise EmptyInit("need one initial label per embedding")
    _, init = np.unique(init, return_inverse=True)
    x, phi = plda.project(seq.vectors)
    t_len, dim = x.shape
    n_spk = int(init.max()) + 1

    onehot = np.zeros((t_len, n_spk))
    onehot[np.arange(t_len), init] = 1.0
    gamma = softmax(onehot * cfg.init_smoothing, axis=1)
    pi = np.full(n_spk, 1.0 / n_spk)

    fa, fb, loop = cfg.Fa, cfg.Fb, cfg.loopP
    g = -0.5 * (np.sum(x**2, axis=1, keepdims=True) + dim * np.log(2 * np.pi))
    rho = x * np.sqrt(phi)
    trace = []
    for it in range(cfg.max_iters):
        inv_l = 1.0 / (1.0 + fa / fb * gamma.sum(axis=0, keepdims=True).T * phi)
        alpha = fa / fb * inv_l * (gamma.T @ rho)
        log_p = fa * (rho @ alpha.T - 0.5 * (inv_l + alpha**2) @ phi + g)
        tr = np.eye(n_spk) * loop + (1 - loop) * pi
        gamma, log_px, lfw, lbw = _forward_backward(log_p, tr, pi)
        elbo = log_px + fb * 0.5 * np.sum(np.log(inv_l) - inv_l - alpha**2 + 1)
        if not np.isfinite(elbo):
            raise NumericalFailure(f"non-finite ELBO at iteration {it}")
        if t_len > 1:
            jumps = np.exp(logsumexp(lfw[:-1], axis=1, keepdims=True) + log_p[1:] + lbw[1:] - log_px)
            pi = gamma[0] + (1 - loop) * pi * jumps.sum(axis=0)
        else:
            pi = gamma[0].copy()
        pi = pi / pi.sum()
        trace.append(float(elbo))
        if it > 0:
            gain = trace[-1] - trace[-2]
            if gain < -1e-8:
                logger.warning("VBx ELBO decreased by %g at iteration %d", -gain, it)
            if gain < cfg.epsilon:
                break

    mass = gamma.sum(axis=0)
    keep = mass >= cfg.min_speaker_mass
    if not keep.any():
        keep[np.argmax(mass)] = True
    post = gamma[:, keep]
    rows = post.sum(axis=1, keepdims=True)
    empty = rows[:, 0] <= 0
    if empty.any():
        post[empty] = 1.0 / post.shape[1]
        rows = post.sum(axis=1, keepdims=True)
    post = post / rows
    return ClusterResult(post.argmax(axis=1), post, trace, pi[keep] / pi[keep].sum())


def labels_to_annotation(seq: EmbeddingSequence, labels, prefix: str = "spk") -> Annotation:
    """Turn per-window labels into an annotation, fusing touching windows."""
    segs = [
        Segment(a, b - a, f"{prefix}{int(lab)}")
        for (a, b), lab in zip(seq.timestamps, labels)
        if b > a
    ]
    return merge_adjacent(Annotation(seq.recording_id, tuple(segs)))


def write_embeddings(path, seq: EmbeddingSequence, mean=None, cov=None) -> None:
    """Write the binary matrix file plus the ``<path>.json`` timestamp sidecar.

    Layout (little-endian): 4-byte magic ``EMB1``, uint32 D, uint32 T,
    uint8 whitening flag, 3 pad bytes; if the flag is set a D-vector mean and
    a D x D covariance follow; then T rows of D float32 values.
    """
    path = Path(path)
    t, d = seq.vectors.shape
    has_white = mean is not None and cov is not None
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<IIB3x", d, t, int(has_white)))
        if has_white:
            f.write(np.asarray(mean, dtype="<f4").reshape(d).tobytes())
            f.write(np.asarray(cov, dtype="<f4").reshape(d, d).tobytes())
        f.write(seq.vectors.astype("<f4").tobytes())
    sidecar = {"recording_id": seq.recording_id, "timestamps": [list(ts) for ts in seq.timestamps]}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def read_embeddings(path, sidecar=None):
    """Read an embedding file; returns ``(EmbeddingSequence, mean, cov)``."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CorruptHeader(f"{path}: bad magic")
    d, t, flag = struct.unpack("<IIB3x", raw[4:16])
    off = 16
    mean = cov = None
    need = 4 * (t * d + (d + d * d if flag else 0))
    if len(raw) - off != need:
        raise CorruptHeader(f"{path}: expected {need} payload bytes, found {len(raw) - off}")
    if flag:
        mean = np.frombuffer(raw, "<f4", d, off).astype(np.float64)
        off += 4 * d
        cov = np.frombuffer(raw, "<f4", d * d, off).reshape(d, d).astype(np.float64)
        off += 4 * d * d
    vectors = np.frombuffer(raw, "<f4", t * d, off).reshape(t, d).astype(np.float64)
    meta = json.loads(Path(sidecar or str(path) + ".json").read_text())
    seq = EmbeddingSequence(meta["recording_id"], vectors, tuple(tuple(x) for x in meta["timestamps"]))
    return seq, mean, cov
