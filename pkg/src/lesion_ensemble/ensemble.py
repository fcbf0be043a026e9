"""Fusion of three opinions through a weighted sum and an activation.

A model is three weights, an activation and a fixed (untrained) offset added
to the weighted sum. The offset is 0 for SinAct and Step; ``initial_model``
sets it to -0.5 for Sigmoid so that the sigmoid's midpoint sits on the 0.5
decision threshold instead of mapping every empty voxel to 0.5.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .activation import ActivationKind, activate, activate_deriv
from .dice import soft_dice, soft_dice_grad
from .errors import NoTrainingData, ShapeMismatch
from .volume import as_array, check_same_shape, like

INITIAL_WEIGHT = 1.0 / 3.0
# ten full-batch steps at 0.01 move the weights by only a few hundredths
DEFAULT_LEARNING_RATE = 0.1


class FusionOverlapWarning(UserWarning):
    """Small- and large-group predictions claimed the same voxel."""


@dataclass(frozen=True)
class OpinionSet:
    x1: object
    x2: object
    x3: object
    gt: object = None

    def __post_init__(self):
        vols = [v for v in (self.x1, self.x2, self.x3, self.gt) if v is not None]
        check_same_shape(*vols)
        spacings = {getattr(v, "spacing") for v in vols if hasattr(v, "spacing")}
        if len(spacings) > 1:
            raise ShapeMismatch(f"opinions disagree on spacing: {sorted(spacings)}")

    def stack(self) -> np.ndarray:
        """Opinions as an array of shape (3, nx, ny, nz)."""
        return np.stack([as_array(self.x1), as_array(self.x2), as_array(self.x3)])

    def swapped(self, i: int, j: int) -> "OpinionSet":
        xs = [self.x1, self.x2, self.x3]
        xs[i], xs[j] = xs[j], xs[i]
        return OpinionSet(*xs, gt=self.gt)


@dataclass(frozen=True)
class EnsembleModel:
    weights: tuple
    activation: ActivationKind = ActivationKind.SINACT
    offset: float = 0.0

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != 3 or not all(np.isfinite(w)):
            raise ValueError(f"need three finite weights, got {self.weights}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))

    def to_dict(self) -> dict:
        return {
            "activation": self.activation.value,
            # repr round-trips a float exactly
            "weights": [repr(w) for w in self.weights],
            "offset": repr(self.offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        return cls(tuple(float(w) for w in d["weights"]), d["activation"], float(d.get("offset", 0.0)))


def initial_model(activation=ActivationKind.SINACT) -> EnsembleModel:
    kind = ActivationKind.parse(activation)
    offset = -0.5 if kind is ActivationKind.SIGMOID else 0.0
    return EnsembleModel((INITIAL_WEIGHT,) * 3, kind, offset)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 0

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def _preactivation(xs: np.ndarray, m: EnsembleModel) -> np.ndarray:
    w1, w2, w3 = m.weights
    return w1 * xs[0] + w2 * xs[1] + w3 * xs[2] + m.offset


def fuse(o: OpinionSet, m: EnsembleModel):
    z = _preactivation(o.stack(), m)
    p = np.clip(activate(m.activation, z), 0.0, 1.0)
    return like(o.x1, p)


def loss(o: OpinionSet, m: EnsembleModel) -> float:
    """Negative soft Dice of the fused map against ``o.gt``."""
    return -soft_dice(as_array(fuse(o, m)), as_array(o.gt))


def _forward(xs, m):
    z = _preactivation(xs, m)
    return z, np.clip(activate(m.activation, z), 0.0, 1.0)


def _backward(xs, z, p, gt, m) -> np.ndarray:
    upstream = -soft_dice_grad(p, gt) * activate_deriv(m.activation, z)
    return np.array([float(np.sum(upstream * xs[k])) for k in range(3)])


def grad_weights(o: OpinionSet, m: EnsembleModel) -> np.ndarray:
    """Gradient of ``loss`` with respect to the three weights.

    Raises NonDifferentiable for Step models and DegenerateInput when both
    the fused map and the ground truth are empty.
    """
    xs = o.stack()
    z, p = _forward(xs, m)
    return _backward(xs, z, p, as_array(o.gt), m)


def _subject_grad(o: OpinionSet, m: EnsembleModel):
    xs = o.stack()
    gt = as_array(o.gt)
    z, p = _forward(xs, m)
    if not gt.any() and not p.any():
        # empty group and empty prediction: perfect, nothing to learn
        return -1.0, np.zeros(3)
    return -soft_dice(p, gt), _backward(xs, z, p, gt, m)


def train_ensemble(data, cfg: TrainConfig = TrainConfig(), activation=ActivationKind.SINACT):
    """Full-batch gradient descent on the mean per-subject Dice loss.

    Returns ``(model, history)`` where ``history[e]`` is the mean loss at
    the weights used during epoch ``e``.
    """
    data = list(data)
    if not data:
        raise NoTrainingData("train_ensemble needs at least one OpinionSet")
    model = initial_model(activation)
    history = []
    n = len(data)
    for _ in range(int(cfg.epochs)):
        total_loss = 0.0
        total_grad = np.zeros(3)
        for o in data:  # fixed-order reduction across subjects
            l, g = _subject_grad(o, model)
            total_loss += l
            total_grad += g
        history.append(total_loss / n)
        w = np.array(model.weights) - cfg.learning_rate * (total_grad / n)
        model = EnsembleModel(tuple(w), model.activation, model.offset)
    return model, history


def majority_vote(o: OpinionSet):
    votes = (o.stack() >= 0.5).sum(axis=0)
    return like(o.x1, (votes >= 2).astype(np.float64))


def merge_groups(small_pred, large_pred):
    """Union of the two groups' predictions thresholded at 0.5."""
    s = as_array(small_pred) >= 0.5
    l = as_array(large_pred) >= 0.5
    check_same_shape(s, l)
    overlap = int(np.count_nonzero(s & l))
    if overlap:
        warnings.warn(f"{overlap} voxels predicted by both lesion groups", FusionOverlapWarning, stacklevel=2)
    return like(small_pred, (s | l).astype(np.float64))


def save_model(path, model: EnsembleModel, cfg: TrainConfig = None, history=None) -> None:
    rec = model.to_dict()
    if cfg is not None:
        rec["config"] = {"epochs": cfg.epochs, "learning_rate": cfg.learning_rate, "seed": cfg.seed}
    if history is not None:
        rec["loss_history"] = [repr(h) for h in history]
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2)
        fh.write("\n")


def load_model(path) -> EnsembleModel:
    with open(path) as fh:
        return EnsembleModel.from_dict(json.load(fh))
