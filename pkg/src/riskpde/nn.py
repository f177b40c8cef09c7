"""Plain tanh MLP with Glorot init and Adam, evaluable on floats and hyper-duals."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ad

DEFAULT_LAYERS = (3, 32, 32, 32, 1)


@dataclass
class MlpParams:
    """Weights ``W[l]`` have shape (fan_out, fan_in).

    Inputs are mapped by ``(u - in_shift) * in_scale`` before the first layer;
    the defaults leave them unchanged.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    in_shift: np.ndarray = None
    in_scale: np.ndarray = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        n_in = self.layer_sizes[0]
        if self.in_shift is None:
            self.in_shift = np.zeros(n_in)
        if self.in_scale is None:
            self.in_scale = np.ones(n_in)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if w.shape != want or b.shape != (want[0],):
                raise ValueError(f"layer {l}: shapes {w.shape}, {b.shape} do not match {want}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    def with_flat(self, vec: np.ndarray) -> MlpParams:
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[i:i + w.size].reshape(w.shape))
            i += w.size
            biases.append(vec[i:i + b.size].copy())
            i += b.size
        return MlpParams(self.layer_sizes, weights, biases, self.in_shift.copy(), self.in_scale.copy())

    def zeros_like(self) -> MlpParams:
        return self.with_flat(np.zeros(self.n_params))

    def coordinate(self, k: int) -> str:
        """Human-readable name of flat coordinate ``k``."""
        i = 0
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if k < i + w.size:
                return f"W[{l}]{np.unravel_index(k - i, w.shape)}"
            i += w.size
            if k < i + b.size:
                return f"b[{l}][{k - i}]"
            i += b.size
        raise IndexError(k)


def init(layer_sizes=DEFAULT_LAYERS, seed: int = 0) -> MlpParams:
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise ValueError("need at least two layers of positive size")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(layer_sizes), weights, biases)


def input_scaling(p: MlpParams, lo, hi) -> MlpParams:
    """Copy of ``p`` that maps the box [lo, hi] affinely onto [-1, 1]."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    span = np.where(hi > lo, hi - lo, 1.0)
    q = p.with_flat(p.flat())
    q.in_shift = 0.5 * (lo + hi)
    q.in_scale = 2.0 / span
    return q


def _check_input(p: MlpParams, n: int) -> None:
    if n != p.layer_sizes[0]:
        raise ValueError(f"input has {n} features, network expects {p.layer_sizes[0]}")


def forward(p: MlpParams, inputs) -> np.ndarray:
    """Network output for inputs of shape (..., n_in); returns shape (...)."""
    h = np.asarray(inputs, dtype=float)
    _check_input(p, h.shape[-1])
    h = (h - p.in_shift) * p.in_scale
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ w.T + b
        if l < last:
            h = np.tanh(h)
    return h[..., 0] if p.layer_sizes[-1] == 1 else h


def forward_hd(p: MlpParams, x: ad.HyperDual, T: ad.HyperDual, lam) -> ad.HyperDual:
    """Output together with d/dx, d/dT and d^2/dx^2 (``lam`` is never seeded)."""
    _check_input(p, 3)
    lam = lam if isinstance(lam, ad.HyperDual) else ad.constant(lam)
    x, T, lam = (v if isinstance(v, ad.HyperDual) else ad.constant(v) for v in (x, T, lam))
    shape = np.broadcast_shapes(x.val.shape, T.val.shape, lam.val.shape)
    parts = [_broadcast(v, shape) for v in (x, T, lam)]
    h = (ad.stack(parts) - p.in_shift) * p.in_scale
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = h.affine(w, b)
        if l < last:
            h = h.tanh()
    return ad.HyperDual(h.val[..., 0], h.d1[..., 0], h.d2[..., 0])


def _broadcast(v: ad.HyperDual, shape) -> ad.HyperDual:
    shape = tuple(shape)
    # Left-pad the value axes of d1 so they align with ``shape``, not with the seed axis.
    d1 = v.d1.reshape((2,) + (1,) * (len(shape) - v.val.ndim) + v.val.shape)
    return ad.HyperDual(
        np.broadcast_to(v.val, shape),
        np.broadcast_to(d1, (2,) + shape),
        np.broadcast_to(v.d2, shape),
    )


@dataclass
class AdamState:
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(p: MlpParams, grads: MlpParams, s: AdamState) -> tuple[MlpParams, AdamState]:
    g = grads.flat()
    bad = np.nonzero(~np.isfinite(g))[0]
    if len(bad):
        raise FloatingPointError(f"non-finite gradient at {p.coordinate(int(bad[0]))}")
    m = np.zeros_like(g) if s.m is None else s.m
    v = np.zeros_like(g) if s.v is None else s.v
    t = s.step + 1
    m = s.beta1 * m + (1 - s.beta1) * g
    v = s.beta2 * v + (1 - s.beta2) * g * g
    m_hat = m / (1 - s.beta1**t)
    v_hat = v / (1 - s.beta2**t)
    theta = p.flat() - s.lr * m_hat / (np.sqrt(v_hat) + s.eps)
    return p.with_flat(theta), AdamState(t, m, v, s.lr, s.beta1, s.beta2, s.eps)


def save_checkpoint(path: str | Path, p: MlpParams, adam: AdamState | None = None,
                    seed: int | None = None, config_hash: str | None = None) -> None:
    obj = {
        "layer_sizes": list(p.layer_sizes),
        "weights": [w.ravel().tolist() for w in p.weights],
        "biases": [b.tolist() for b in p.biases],
        "in_shift": p.in_shift.tolist(),
        "in_scale": p.in_scale.tolist(),
        "seed": seed,
        "config_hash": config_hash,
    }
    if adam is not None:
        obj["adam"] = {
            "step": adam.step,
            "m": None if adam.m is None else adam.m.tolist(),
            "v": None if adam.v is None else adam.v.tolist(),
            "lr": adam.lr,
        }
    Path(path).write_text(json.dumps(obj))


def load_checkpoint(path: str | Path) -> tuple[MlpParams, AdamState | None, dict]:
    obj = json.loads(Path(path).read_text())
    sizes = obj["layer_sizes"]
    weights = [np.array(w, dtype=float).reshape(o, i) for w, i, o in zip(obj["weights"], sizes[:-1], sizes[1:])]
    biases = [np.array(b, dtype=float) for b in obj["biases"]]
    p = MlpParams(tuple(sizes), weights, biases,
                  np.array(obj.get("in_shift", [0.0] * sizes[0])), np.array(obj.get("in_scale", [1.0] * sizes[0])))
    adam = None
    if obj.get("adam"):
        a = obj["adam"]
        adam = AdamState(
            a["step"],
            None if a["m"] is None else np.array(a["m"]),
            None if a["v"] is None else np.array(a["v"]),
            a["lr"],
        )
    return p, adam, {"seed": obj.get("seed"), "config_hash": obj.get("config_hash")}
