"""Hyper-dual numbers carrying d/dx, d/dT and d^2/dx^2 through elementwise arithmetic.

Fields may be scalars or numpy arrays; ``d1`` has a leading axis of length 2
(x direction first, then T).
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class Seed(Enum):
    X = 0
    T = 1
    NONE = None


class HyperDual:
    __slots__ = ("val", "d1", "d2")

    def __init__(self, val, d1, d2):
        self.val = np.asarray(val, dtype=float)
        self.d1 = np.asarray(d1, dtype=float)
        self.d2 = np.asarray(d2, dtype=float)

    @property
    def dx(self):
        return self.d1[0]

    @property
    def dT(self):
        return self.d1[1]

    def __repr__(self) -> str:
        return f"HyperDual(val={self.val!r}, d1={self.d1!r}, d2_xx={self.d2!r})"

    def __add__(self, other):
        if not isinstance(other, HyperDual):
            val = self.val + np.asarray(other, dtype=float)
            return HyperDual(val, np.broadcast_to(self.d1, (2,) + val.shape),
                             np.broadcast_to(self.d2, val.shape))
        return HyperDual(self.val + other.val, self.d1 + other.d1, self.d2 + other.d2)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.val, -self.d1, -self.d2)

    def __sub__(self, other):
        if not isinstance(other, HyperDual):
            return self + (-np.asarray(other, dtype=float))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, HyperDual):
            c = np.asarray(other, dtype=float)
            val = self.val * c
            return HyperDual(val, np.broadcast_to(self.d1, (2,) + val.shape) * c, self.d2 * c)
        u, v = self, other
        return HyperDual(
            u.val * v.val,
            u.val * v.d1 + v.val * u.d1,
            u.val * v.d2 + v.val * u.d2 + 2.0 * u.d1[0] * v.d1[0],
        )

    __rmul__ = __mul__

    def tanh(self) -> HyperDual:
        t = np.tanh(self.val)
        s = 1.0 - t * t
        return HyperDual(t, s * self.d1, s * self.d2 - 2.0 * t * s * self.d1[0] ** 2)

    def affine(self, weight: np.ndarray, bias: np.ndarray) -> HyperDual:
        """``weight @ u + bias`` along the last axis of a vector-valued hyper-dual."""
        wt = np.asarray(weight, dtype=float).T
        return HyperDual(self.val @ wt + bias, self.d1 @ wt, self.d2 @ wt)


def constant(c) -> HyperDual:
    c = np.asarray(c, dtype=float)
    return HyperDual(c, np.zeros((2,) + c.shape), np.zeros(c.shape))


def lift(x, seed: Seed = Seed.NONE) -> HyperDual:
    h = constant(x)
    if seed is not Seed.NONE:
        h.d1[seed.value] = 1.0
    return h


def tanh(u: HyperDual) -> HyperDual:
    return u.tanh()


def stack(parts: list[HyperDual]) -> HyperDual:
    """Stack scalar(-array) hyper-duals along a new last axis."""
    return HyperDual(
        np.stack([p.val for p in parts], axis=-1),
        np.stack([p.d1 for p in parts], axis=-1),
        np.stack([p.d2 for p in parts], axis=-1),
    )
