"""Monte Carlo estimates of the four barrier-event probabilities.

Events are read off Euler-Maruyama paths of phi(X_t) - level:

    F  phi stays >= level on [0, T]         (no exit)
    G  phi drops below level by time T      (exit)
    Q  phi stays below level on [0, T]      (no entry)
    N  phi reaches level by time T          (entry / recovery)

Between grid times the path is treated as a Brownian bridge with the
local barrier-coordinate volatility, and a crossing inside a step is drawn
with the bridge hitting probability. For constant coefficients this makes
the estimator unbiased for the continuous-time event; with ``bridge=False``
only the sampled times are checked, which biases F/Q up and G/N down by
O(sqrt(dt)).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .fields import KINDS, GridSpec, ProbabilityField
from .sde import BarrierSpec, NonFiniteStateError, SdeModel, em_step, n_steps, stream

BLOCK = 8192

__all__ = ["McEstimate", "GridSpec", "ProbabilityField", "estimate_point", "estimate_field", "denoise"]


@dataclass(frozen=True)
class McEstimate:
    value: float
    samples: int
    count: int

    @property
    def std_err(self) -> float:
        p = self.value
        return float(np.sqrt(p * (1.0 - p) / self.samples))


def _exit_kind(kind: str) -> bool:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    return kind in ("F", "G")


def _event_flags(model, barrier, kind, x0, n_per, rngs, steps, dt, bridge):
    """Boolean event indicator for every path.

    ``x0`` has shape (nodes, n); node ``r`` gets ``n_per[r]`` paths driven by
    ``rngs[r]``. Each generator is consumed in a fixed order (per step: normals,
    then uniforms) so results do not depend on how nodes are batched.
    """
    x = np.repeat(np.asarray(x0, dtype=float), n_per, axis=0)
    k = model.noise_dim()
    exit_kind = _exit_kind(kind)
    d = barrier.phi(x) - barrier.level
    crossed = d < 0 if exit_kind else d >= 0
    for step in range(steps):
        xi = np.concatenate([g.standard_normal((m, k)) for g, m in zip(rngs, n_per)])
        if bridge:
            u = np.concatenate([g.random(m) for g, m in zip(rngs, n_per)])
            vol = np.einsum("...i,...ik->...k", barrier.grad_phi(x), model.noise(x))
            var = np.sum(vol * vol, axis=-1) * dt
        x = em_step(model, x, dt, xi)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(step + 1)
        d_new = barrier.phi(x) - barrier.level
        if exit_kind:
            crossed |= d_new < 0
        else:
            crossed |= d_new >= 0
        if bridge:
            same_side = ~crossed & (var > 0)
            p = np.zeros_like(d)
            p[same_side] = np.exp(-2.0 * d[same_side] * d_new[same_side] / var[same_side])
            crossed |= u < p
        d = d_new
    hit = crossed if kind in ("G", "N") else ~crossed
    return hit


def _blocks(n_paths: int) -> list[int]:
    sizes = [BLOCK] * (n_paths // BLOCK)
    if n_paths % BLOCK:
        sizes.append(n_paths % BLOCK)
    return sizes


def estimate_point(
    model: SdeModel,
    barrier: BarrierSpec,
    kind: str,
    x0,
    horizon: float,
    n_paths: int,
    dt: float = 0.1,
    seed: int = 0,
    bridge: bool = True,
    _key: tuple[int, ...] = (),
) -> McEstimate:
    """Fraction of ``n_paths`` simulated paths on which the ``kind`` event occurs by ``horizon``."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    _exit_kind(kind)
    x0 = np.asarray(x0, dtype=float).reshape(1, model.dim)
    model.check_inside(x0)
    steps = n_steps(dt, horizon)
    count = 0
    for b, m in enumerate(_blocks(n_paths)):
        rng = stream(seed, *_key, b)
        count += int(_event_flags(model, barrier, kind, x0, [m], [rng], steps, dt, bridge).sum())
    return McEstimate(value=count / n_paths, samples=n_paths, count=count)


def estimate_field(
    model: SdeModel,
    barrier: BarrierSpec,
    kind: str,
    grid: GridSpec,
    n_paths: int,
    dt: float = 0.1,
    seed: int = 0,
    bridge: bool = True,
    threads: int = 1,
) -> ProbabilityField:
    """Independent MC estimate at every (x, T) node of a 1-D state grid.

    Node ``(i, j)`` draws from its own stream keyed by ``(seed, i, j, block)``;
    nodes sharing a horizon are simulated together for speed.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if model.dim != 1:
        raise ValueError("estimate_field needs a scalar state")
    _exit_kind(kind)
    xs, ts = grid.xs, grid.ts
    model.check_inside(xs[:, None])
    blocks = _blocks(n_paths)

    def column(j: int) -> np.ndarray:
        steps = n_steps(dt, ts[j])
        x0, n_per, rngs, owner = [], [], [], []
        for i, x in enumerate(xs):
            for b, m in enumerate(blocks):
                x0.append([x])
                n_per.append(m)
                rngs.append(stream(seed, i, j, b))
                owner.append(i)
        hit = _event_flags(model, barrier, kind, np.array(x0), n_per, rngs, steps, dt, bridge)
        counts = np.bincount(np.repeat(owner, n_per), weights=hit, minlength=len(xs))
        return counts / n_paths

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            cols = list(pool.map(column, range(len(ts))))
    else:
        cols = [column(j) for j in range(len(ts))]
    values = np.stack(cols, axis=1)
    return ProbabilityField(
        grid, values, kind, "MC", model.param,
        diagnostics={"n_paths": n_paths, "dt": dt, "seed": seed, "bridge": bridge},
    )


def denoise(fld: ProbabilityField) -> ProbabilityField:
    """3x3 moving average with edge replication."""
    if fld.provenance != "MC":
        raise ValueError("denoise expects a raw MC field")
    smooth = uniform_filter(fld.values, size=3, mode="nearest")
    return fld.replace(values=np.clip(smooth, 0.0, 1.0), provenance="MC-denoised")
