"""Trainable predictor from pooled Fbank features to per-candidate scores."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInput, GridMismatch, LengthMismatch, PartialCerVector
from .features import FbankConfig, bridging_features
from .grid import CerVector, OAGrid, build_grid
from .loss import TRANSFORMS, batch_loss_and_grad, cer_target
from .mixing import MixWeights
from .wav import WaveBuffer

__all__ = ["TrainConfig", "BridgingModel", "train_bridging", "predict_oa"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    epochs: int = 30
    tau: float = 1.0
    target_transform: str = "negated"
    optimizer: str = "adam"  # or "gd": full-batch plain gradient descent
    batch_size: int = 32
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.target_transform not in TRANSFORMS:
            raise ValueError(f"target_transform must be one of {TRANSFORMS}")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError("optimizer must be 'adam' or 'gd'")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass
class BridgingModel:
    grid: OAGrid
    weight: np.ndarray  # candidates x features
    bias: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    tau: float = 1.0
    target_transform: str = "negated"
    feature_config: FbankConfig = field(default_factory=FbankConfig)
    loss_trace: list[float] = field(default_factory=list)

    def scores(self, features) -> np.ndarray:
        z = (np.asarray(features, dtype=np.float64) - self.feat_mean) / self.feat_std
        return z @ self.weight.T + self.bias

    def save(self, path):
        meta = {
            "k": self.grid.k,
            "w2_step": self.grid.w2_step,
            "tau": self.tau,
            "target_transform": self.target_transform,
            "feature_config": self.feature_config.to_dict(),
            "loss_trace": self.loss_trace,
        }
        with open(path, "wb") as f:
            np.savez(f, weight=self.weight, bias=self.bias, feat_mean=self.feat_mean,
                     feat_std=self.feat_std, meta=np.array(json.dumps(meta)))

    @classmethod
    def load(cls, path) -> "BridgingModel":
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            return cls(
                build_grid(meta["k"], meta["w2_step"]),
                z["weight"], z["bias"], z["feat_mean"], z["feat_std"],
                meta["tau"], meta["target_transform"],
                FbankConfig(**meta["feature_config"]), list(meta["loss_trace"]),
            )


def _mean_loss(model, z, targets):
    logits = z @ model.weight.T + model.bias
    loss, _ = batch_loss_and_grad(logits, targets, model.tau)
    return float(loss.mean())


def train_bridging(
    dataset: list[tuple[np.ndarray, CerVector]],
    grid: OAGrid,
    cfg: TrainConfig = TrainConfig(),
    feature_config: FbankConfig = FbankConfig(),
) -> BridgingModel:
    """Fit the linear scoring head by minimising the mean cosine loss.

    Features are standardised with dataset statistics stored in the model
    and the bias starts at the mean target, so training fits the residual.
    ``adam`` takes shuffled minibatch steps; ``gd`` takes one full-batch
    plain gradient step per epoch. Shuffling is seeded.
    """
    if not dataset:
        raise EmptyInput("training set is empty")
    feats = np.array([np.asarray(f, dtype=np.float64) for f, _ in dataset])
    for i, (_, cv) in enumerate(dataset):
        if cv.partial or not np.all(np.isfinite(cv.cers)):
            raise PartialCerVector(f"item {i} has failed grid cells")
        if len(cv) != len(grid):
            raise GridMismatch(f"item {i} has {len(cv)} CERs for a {len(grid)}-candidate grid")
    targets = np.array([cer_target(cv.cers, cfg.target_transform) for _, cv in dataset])

    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std < 1e-8] = 1.0
    z = (feats - mean) / std

    rng = np.random.default_rng(cfg.seed)
    n_out, n_in = len(grid), z.shape[1]
    model = BridgingModel(
        grid,
        rng.normal(scale=cfg.init_scale, size=(n_out, n_in)),
        targets.mean(axis=0),
        mean, std, cfg.tau, cfg.target_transform, feature_config,
    )
    params = [model.weight, model.bias]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    def grads(idx):
        logits = z[idx] @ model.weight.T + model.bias
        _, g = batch_loss_and_grad(logits, targets[idx], cfg.tau)
        g /= len(idx)
        return [g.T @ z[idx], g.sum(axis=0)]

    for _ in range(cfg.epochs):
        if cfg.optimizer == "gd":
            for p, g in zip(params, grads(np.arange(len(z)))):
                p -= cfg.lr * g
        else:
            order = rng.permutation(len(z))
            for start in range(0, len(z), cfg.batch_size):
                step += 1
                for p, g, a, b in zip(params, grads(order[start:start + cfg.batch_size]), m1, m2):
                    a *= beta1
                    a += (1 - beta1) * g
                    b *= beta2
                    b += (1 - beta2) * g * g
                    p -= cfg.lr * (a / (1 - beta1**step)) / (np.sqrt(b / (1 - beta2**step)) + eps)
        model.loss_trace.append(_mean_loss(model, z, targets))
    return model


def predict_oa(
    model: BridgingModel,
    xsum: WaveBuffer,
    y_sep: WaveBuffer,
    xgss: WaveBuffer,
    grid: OAGrid | None = None,
    features: np.ndarray | None = None,
) -> dict:
    """Score every grid candidate and pick the best one.

    Ties resolve to the lexicographically smallest (w1, w2), i.e. the first
    candidate in grid order.
    """
    if grid is not None and (grid.k, grid.w2_step, len(grid)) != (model.grid.k, model.grid.w2_step, len(model.grid)):
        raise GridMismatch("model was trained on a different candidate grid")
    if features is None:
        features = bridging_features(xsum, y_sep, xgss, model.feature_config)
    if features.shape[-1] != model.weight.shape[1]:
        raise LengthMismatch("feature dimension does not match the model")
    scores = model.scores(features)
    best = int(np.argmax(scores))
    chosen: MixWeights = model.grid.candidates[best]
    return {"scores": scores, "index": best, "chosen": chosen}
