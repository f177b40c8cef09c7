"""Controlled SDE models, barrier functions, augmented dynamics and Euler-Maruyama paths.

All model callables are batched: they take states of shape ``(..., n)`` and
return arrays with the leading batch dimensions preserved.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

Array = np.ndarray


class NonFiniteStateError(FloatingPointError):
    """Raised when an integrated state stops being finite."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    Streams for different keys are statistically independent, so results do
    not depend on the order in which paths or grid nodes are processed.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class SdeModel:
    """dX = (f(X) + g(X) K(X)) dt + sigma(X) dW."""

    dim: int
    drift: Callable[[Array], Array]
    noise: Callable[[Array], Array]
    gain: Callable[[Array], Array] | None = None
    controller: Callable[[Array], Array] | None = None
    param: float = 0.0
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def closed_loop_drift(self, x: Array) -> Array:
        f = self.drift(x)
        if self.gain is not None and self.controller is not None:
            f = f + np.einsum("...ij,...j->...i", self.gain(x), self.controller(x))
        return f

    def noise_dim(self) -> int:
        return self.noise(self._probe()).shape[-1]

    def _probe(self) -> Array:
        if self.box is None:
            return np.zeros(self.dim)
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        return 0.5 * (lo + hi)

    def check_inside(self, x: Array) -> None:
        """Raise ValueError if any state lies outside the model's domain box."""
        if self.box is None:
            return
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        x = np.asarray(x, dtype=float)
        if np.any(x < lo) or np.any(x > hi):
            raise ValueError(f"state outside the model domain box {self.box}")


@dataclass(frozen=True)
class BarrierSpec:
    """Safe set {x : phi(x) >= level}, with analytic first and second derivatives."""

    phi: Callable[[Array], Array]
    grad_phi: Callable[[Array], Array]
    hess_phi: Callable[[Array], Array]
    level: float = 0.0


@dataclass(frozen=True)
class AugmentedDynamics:
    """Ito dynamics of Z = [phi(X), X]: dZ = rho(Z) dt + zeta(Z) dW."""

    dim: int
    model: SdeModel
    barrier: BarrierSpec

    def lift(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.concatenate([self.barrier.phi(x)[..., None], x], axis=-1)

    def rho(self, z: Array) -> Array:
        x = np.asarray(z, dtype=float)[..., 1:]
        b = self.model.closed_loop_drift(x)
        s = self.model.noise(x)
        grad = self.barrier.grad_phi(x)
        hess = self.barrier.hess_phi(x)
        ito = 0.5 * np.einsum("...ik,...jk,...ij->...", s, s, hess)
        dphi = np.einsum("...i,...i->...", grad, b) + ito
        return np.concatenate([dphi[..., None], b], axis=-1)

    def zeta(self, z: Array) -> Array:
        x = np.asarray(z, dtype=float)[..., 1:]
        s = self.model.noise(x)
        top = np.einsum("...i,...ik->...k", self.barrier.grad_phi(x), s)
        return np.concatenate([top[..., None, :], s], axis=-2)

    def dmat(self, z: Array) -> Array:
        zt = self.zeta(z)
        return zt @ np.swapaxes(zt, -1, -2)

    def as_model(self) -> SdeModel:
        """The augmented process as a plain SdeModel, e.g. for `simulate`."""
        return SdeModel(dim=self.dim, drift=self.rho, noise=self.zeta, param=self.model.param)


def augment(model: SdeModel, barrier: BarrierSpec) -> AugmentedDynamics:
    x = model._probe()
    g = np.asarray(barrier.grad_phi(x))
    h = np.asarray(barrier.hess_phi(x))
    if g.shape != (model.dim,) or h.shape != (model.dim, model.dim):
        raise ValueError(
            f"barrier derivatives have shapes {g.shape}, {h.shape}; model dimension is {model.dim}"
        )
    return AugmentedDynamics(dim=model.dim + 1, model=model, barrier=barrier)


def benchmark_model(lam: float, box: float = 1e3) -> SdeModel:
    """dX = lam dt + dW in one dimension."""
    lam = float(lam)
    return SdeModel(
        dim=1,
        drift=lambda x: np.full(np.shape(x), lam),
        noise=lambda x: np.ones(np.shape(x) + (1,)),
        param=lam,
        box=((-box,), (box,)),
    )


def linear_barrier(shift: float = 2.0, level: float = 0.0) -> BarrierSpec:
    """phi(x) = x - shift on a scalar state."""
    return BarrierSpec(
        phi=lambda x: np.asarray(x, dtype=float)[..., 0] - shift,
        grad_phi=lambda x: np.ones(np.shape(x)),
        hess_phi=lambda x: np.zeros(np.shape(x) + (1,)),
        level=level,
    )


MODEL_FAMILIES: dict[str, Callable[[float], SdeModel]] = {"benchmark-drift": benchmark_model}


def make_model(name: str, lam: float) -> SdeModel:
    try:
        return MODEL_FAMILIES[name](lam)
    except KeyError:
        raise ValueError(f"unknown model family {name!r}; known: {sorted(MODEL_FAMILIES)}") from None


@dataclass(frozen=True)
class Trajectory:
    times: Array
    states: Array
    seed: int

    def to_csv(self, path: str | Path) -> None:
        n = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def n_steps(dt: float, horizon: float) -> int:
    if dt <= 0 or horizon < 0:
        raise ValueError("need dt > 0 and horizon >= 0")
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    return steps


def em_step(model: SdeModel, x: Array, dt: float, xi: Array) -> Array:
    """One Euler-Maruyama step; ``xi`` holds standard normals of shape (..., k)."""
    diffusion = np.einsum("...ik,...k->...i", model.noise(x), xi)
    return x + model.closed_loop_drift(x) * dt + diffusion * np.sqrt(dt)


def simulate(model: SdeModel, x0, dt: float, horizon: float, seed: int) -> Trajectory:
    if dt > horizon:
        raise ValueError("dt must not exceed the horizon")
    steps = n_steps(dt, horizon)
    x = np.asarray(x0, dtype=float).reshape(model.dim)
    model.check_inside(x)
    rng = stream(seed, 0)
    k = model.noise_dim()
    states = np.empty((steps + 1, model.dim))
    states[0] = x
    for i in range(steps):
        x = em_step(model, x, dt, rng.standard_normal(k))
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(i + 1)
        states[i + 1] = x
    return Trajectory(times=dt * np.arange(steps + 1), states=states, seed=seed)
