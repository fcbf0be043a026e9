"""Discrete Dice similarity, soft Dice and the soft Dice gradient.

``soft_dice`` is positive; the training loss is its negation and is formed
by the caller.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateInput
from .volume import as_array, check_same_shape


def _sum(a: np.ndarray) -> float:
    # fixed-order sequential reduction; np.sum uses pairwise blocks whose
    # layout depends only on the array shape, which is stable across runs
    return float(np.sum(a, dtype=np.float64))


def dsc(S, R) -> float:
    """2|S n R| / (|S| + |R|) for binary masks; 1.0 when both are empty."""
    s = as_array(S) != 0
    r = as_array(R) != 0
    check_same_shape(s, r)
    denom = int(s.sum()) + int(r.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(s, r).sum()) / denom


def soft_dice(s, r) -> float:
    s = as_array(s)
    r = as_array(r)
    check_same_shape(s, r)
    denom = _sum(s) + _sum(r)
    if denom == 0.0:
        return 1.0
    return 2.0 * _sum(s * r) / denom


def soft_dice_grad(s, r) -> np.ndarray:
    """d soft_dice / d s_j for every voxel, shaped like ``s``.

    Raises DegenerateInput when sum(s) + sum(r) == 0.
    """
    s = as_array(s)
    r = as_array(r)
    check_same_shape(s, r)
    denom = _sum(s) + _sum(r)
    if denom == 0.0:
        raise DegenerateInput("soft Dice gradient undefined when both maps are empty")
    inter = _sum(s * r)
    return (2.0 * r * denom - 2.0 * inter) / (denom * denom)
