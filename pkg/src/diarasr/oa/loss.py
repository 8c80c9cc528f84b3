"""Cosine-similarity objective between predicted scores and a CER-derived target."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import LengthMismatch, ZeroVector

__all__ = ["cer_target", "oa_loss", "oa_loss_grad", "batch_loss_and_grad"]

TRANSFORMS = ("verbatim", "negated")


def cer_target(cers, transform: str = "negated") -> np.ndarray:
    """Squash a CER vector into the target the scores are aligned with.

    ``verbatim`` is ``sigmoid(cers)``. ``negated`` z-normalises the CERs and
    flips the sign first, so low-CER candidates get the largest target.
    """
    c = np.asarray(getattr(cers, "cers", cers), dtype=np.float64)
    if transform == "verbatim":
        return expit(c)
    if transform == "negated":
        sd = c.std(axis=-1, keepdims=True)
        z = np.divide(c - c.mean(axis=-1, keepdims=True), sd, out=np.zeros_like(c), where=sd > 0)
        return expit(-z)
    raise ValueError(f"unknown target transform {transform!r}")


def batch_loss_and_grad(logits: np.ndarray, target: np.ndarray, tau: float):
    """Row-wise ``-log sigmoid(cos(logits, target) / tau)`` and its gradient."""
    ln = np.linalg.norm(logits, axis=-1, keepdims=True)
    tn = np.linalg.norm(target, axis=-1, keepdims=True)
    cos = np.sum(logits * target, axis=-1, keepdims=True) / (ln * tn)
    loss = np.logaddexp(0.0, -cos / tau)
    dcos = -expit(-cos / tau) / tau
    grad = dcos * (target / (ln * tn) - cos * logits / ln**2)
    return loss[..., 0], grad


def _prepare(logits, cers, tau):
    l = np.asarray(logits, dtype=np.float64)
    c = np.asarray(getattr(cers, "cers", cers), dtype=np.float64)
    if l.shape != c.shape or l.ndim != 1 or l.size < 2:
        raise LengthMismatch(f"logits {l.shape} vs cers {c.shape}")
    if not tau > 0:
        raise ValueError("temperature must be positive")
    if not np.any(l):
        raise ZeroVector("logits are all zero")
    return l, c


def oa_loss(logits, cers, tau: float = 1.0, target_transform: str = "negated") -> float:
    l, c = _prepare(logits, cers, tau)
    loss, _ = batch_loss_and_grad(l, cer_target(c, target_transform), tau)
    return float(loss)


def oa_loss_grad(logits, cers, tau: float = 1.0, target_transform: str = "negated") -> np.ndarray:
    l, c = _prepare(logits, cers, tau)
    _, grad = batch_loss_and_grad(l, cer_target(c, target_transform), tau)
    return grad
