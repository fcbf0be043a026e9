"""Step, Sigmoid and SinAct activations with their derivatives.

All functions are vectorized: scalars in, floats out; arrays in, arrays out.
"""
from __future__ import annotations

import enum

import numpy as np

from .errors import NonDifferentiable

TWO_PI = 2.0 * np.pi


class ActivationKind(str, enum.Enum):
    STEP = "Step"
    SIGMOID = "Sigmoid"
    SINACT = "SinAct"

    @classmethod
    def parse(cls, name) -> "ActivationKind":
        if isinstance(name, cls):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).lower():
                return kind
        raise ValueError(f"unknown activation {name!r}; choose from {[k.value for k in cls]}")


def _out(x, y):
    return float(y) if np.ndim(x) == 0 else y


def step(x):
    x = np.asarray(x, dtype=np.float64)
    return _out(x, (x >= 0.5).astype(np.float64))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _out(x, y)


def sinact(x):
    """x - sin(2 pi x) / (2 pi) on [0, 1], clamped to exactly 0 and 1 outside."""
    x = np.asarray(x, dtype=np.float64)
    inner = np.clip(x, 0.0, 1.0)
    y = inner - np.sin(TWO_PI * inner) / TWO_PI
    y = np.where(x < 0.0, 0.0, np.where(x > 1.0, 1.0, y))
    # the endpoints are exact by definition; sin(2 pi) is not 0 in floating point
    y = np.where(x == 1.0, 1.0, y)
    return _out(x, np.clip(y, 0.0, 1.0))


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def sinact_deriv(x):
    x = np.asarray(x, dtype=np.float64)
    inside = (x >= 0.0) & (x <= 1.0)
    y = np.where(inside, 1.0 - np.cos(TWO_PI * x), 0.0)
    return _out(x, y)


_FUNCS = {
    ActivationKind.STEP: step,
    ActivationKind.SIGMOID: sigmoid,
    ActivationKind.SINACT: sinact,
}

_DERIVS = {
    ActivationKind.SIGMOID: sigmoid_deriv,
    ActivationKind.SINACT: sinact_deriv,
}


def activate(kind, x):
    return _FUNCS[ActivationKind.parse(kind)](x)


def activate_deriv(kind, x):
    kind = ActivationKind.parse(kind)
    if kind not in _DERIVS:
        raise NonDifferentiable(f"{kind.value} has no usable derivative")
    return _DERIVS[kind](x)
