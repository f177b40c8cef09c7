"""Physics-informed probability estimator for the recovery PDE

    dF/dT = lam * dF/dx + diffusion * d2F/dx2

trained on MC data plus the PDE residual at collocation points.

Parameter gradients are exact: the derivative-carrying forward pass is
differentiated by hand (reverse accumulation through value, d/dx, d/dT and
d2/dx2 channels of every layer).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ad
from ._kernels import tanh_backward, tanh_forward
from .fields import GridSpec, ProbabilityField
from .nn import AdamState, MlpParams, adam_step, forward, forward_hd, init, input_scaling, save_checkpoint

log = logging.getLogger(__name__)

BARRIER = 2.0


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class CollocationSets:
    """Physics points ``(x, T, lam)`` and data points with MC targets."""

    physics: np.ndarray
    data: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.physics = np.asarray(self.physics, dtype=float).reshape(-1, 3)
        self.data = np.asarray(self.data, dtype=float).reshape(-1, 3)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if len(self.targets) != len(self.data):
            raise ValueError("one target per data point required")
        if np.any((self.targets < 0) | (self.targets > 1)):
            raise ValueError("targets must lie in [0, 1]")

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.physics, self.data, self.targets):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


@dataclass
class PipeConfig:
    omega_p: float = 1.0
    omega_d: float = 1.0
    epochs: int = 20000
    lr: float = 1e-3
    seed: int = 0
    layer_sizes: tuple = (3, 32, 32, 32, 1)
    diffusion: float = 0.5
    input_scaling: bool = False
    history_every: int = 100
    checkpoint_every: int = 10000
    checkpoint_dir: str | None = None
    max_loss: float = 1e6
    # Collocation layout (benchmark defaults: sub-region data, dense physics).
    domain: GridSpec = field(default_factory=lambda: GridSpec(-10.0, 2.0, 0.2, 0.0, 10.0, 0.2))
    data_grid: GridSpec = field(default_factory=lambda: GridSpec(-10.0, -4.0, 0.4, 0.0, 8.0, 1.0))
    lambdas: tuple = (1.0,)
    physics_lambdas: tuple | None = None
    n_paths: int = 1000
    mc_dt: float = 0.1

    def __post_init__(self):
        if self.omega_p < 0 or self.omega_d < 0 or self.omega_p + self.omega_d <= 0:
            raise ValueError("loss weights must be nonnegative with a positive sum")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = self.domain.to_dict()
        d["data_grid"] = self.data_grid.to_dict()
        d["layer_sizes"] = list(self.layer_sizes)
        d["lambdas"] = list(self.lambdas)
        d["physics_lambdas"] = None if self.physics_lambdas is None else list(self.physics_lambdas)
        d.pop("checkpoint_dir")
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def grid_points(grid: GridSpec, lam: float) -> np.ndarray:
    X, T = grid.mesh()
    return np.stack([X.ravel(), T.ravel(), np.full(X.size, float(lam))], axis=1)


def boundary_points(domain: GridSpec, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact data on the barrier column F(2, T) = 1 and the T = 0 row F(x, 0) = 1(x >= 2)."""
    ts = domain.ts
    xs = domain.xs[domain.xs < BARRIER - 1e-12]
    col = np.stack([np.full(len(ts), BARRIER), ts, np.full(len(ts), lam)], axis=1)
    row = np.stack([xs, np.zeros(len(xs)), np.full(len(xs), lam)], axis=1)
    return np.vstack([col, row]), np.concatenate([np.ones(len(ts)), np.zeros(len(xs))])


def sets_from_fields(fields: list[ProbabilityField], cfg: PipeConfig) -> CollocationSets:
    """Collocation sets from MC fields (one per training lambda) plus boundary data."""
    phys_lams = cfg.physics_lambdas if cfg.physics_lambdas is not None else [f.param for f in fields]
    physics = np.vstack([grid_points(cfg.domain, lam) for lam in phys_lams])
    data, targets = [], []
    for f in fields:
        data.append(grid_points(f.grid, f.param))
        targets.append(f.values.ravel())
        bp, bv = boundary_points(cfg.domain, f.param)
        data.append(bp)
        targets.append(bv)
    return CollocationSets(physics, np.vstack(data), np.concatenate(targets))


def build_sets(cfg: PipeConfig, seed: int | None = None, threads: int = 1) -> CollocationSets:
    """Simulate MC data on ``cfg.data_grid`` for every training lambda."""
    from .mc import estimate_field
    from .sde import benchmark_model, linear_barrier

    seed = cfg.seed if seed is None else seed
    fields = [
        estimate_field(benchmark_model(lam), linear_barrier(BARRIER), "N", cfg.data_grid,
                       cfg.n_paths, cfg.mc_dt, seed=seed + 7919 * k, threads=threads)
        for k, lam in enumerate(cfg.lambdas)
    ]
    return sets_from_fields(fields, cfg)


def _pde_residual(out: ad.HyperDual, lam, diffusion: float):
    return out.dT - lam * out.dx - diffusion * out.d2


def residual(p: MlpParams, x, T, lam, diffusion: float = 0.5):
    """dF/dT - lam dF/dx - diffusion d2F/dx2 of the network at the given points."""
    out = forward_hd(p, ad.lift(x, ad.Seed.X), ad.lift(T, ad.Seed.T), lam)
    return _pde_residual(out, np.asarray(lam, dtype=float), diffusion)


def _check_sets(sets: CollocationSets, cfg: PipeConfig) -> None:
    if cfg.omega_p > 0 and len(sets.physics) == 0:
        raise ValueError("physics set is empty but omega_p > 0")
    if cfg.omega_d > 0 and len(sets.data) == 0:
        raise ValueError("data set is empty but omega_d > 0")


def loss(p: MlpParams, sets: CollocationSets, cfg: PipeConfig) -> tuple[float, float, float]:
    _check_sets(sets, cfg)
    lp = ld = 0.0
    if len(sets.physics):
        r = residual(p, sets.physics[:, 0], sets.physics[:, 1], sets.physics[:, 2], cfg.diffusion)
        lp = float(np.mean(r * r))
    if len(sets.data):
        e = forward(p, sets.data) - sets.targets
        ld = float(np.mean(e * e))
    return cfg.omega_p * lp + cfg.omega_d * ld, lp, ld


# --- reverse accumulation -------------------------------------------------


def _hd_trace(p: MlpParams, pts: np.ndarray):
    """Derivative-carrying forward pass on channel-stacked arrays (4, P, n).

    Channels are [value, d/dx, d/dT, d2/dx2]; every layer input and
    pre-activation is kept for the reverse sweep.
    """
    m = len(pts)
    h = np.zeros((4, m, 3))
    h[0] = (pts - p.in_shift) * p.in_scale
    h[1, :, 0] = p.in_scale[0]
    h[2, :, 1] = p.in_scale[1]
    inputs, pre = [], []
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(h)
        a = (h.reshape(-1, w.shape[1]) @ w.T).reshape(4, m, w.shape[0])
        a[0] += b
        pre.append(a)
        if l < last:
            h = np.empty_like(a)
            tanh_forward(a, np.tanh(a[0]), h)
    return inputs, pre, a


def _plain_trace(p: MlpParams, pts: np.ndarray):
    h = (pts - p.in_shift) * p.in_scale
    inputs = []
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(h)
        h = h @ w.T + b
        if l < last:
            h = np.tanh(h)
    return inputs, h


def _backprop_hd(p, inputs, pre, g, gW, gb):
    """Accumulate parameter gradients from output cotangents ``g`` of shape (4, P, 1)."""
    m = g.shape[1]
    for l in range(len(p.weights) - 1, -1, -1):
        w = p.weights[l]
        n_out, n_in = w.shape
        gW[l] += g.reshape(-1, n_out).T @ inputs[l].reshape(-1, n_in)
        gb[l] += g[0].sum(axis=0)
        if l == 0:
            break
        gh = (g.reshape(-1, n_out) @ w).reshape(4, m, n_in)
        g = np.empty_like(gh)
        tanh_backward(gh, pre[l - 1], inputs[l], g)


def _backprop_plain(p, inputs, g, gW, gb):
    for l in range(len(p.weights) - 1, -1, -1):
        gW[l] += g.T @ inputs[l]
        gb[l] += g.sum(axis=0)
        if l == 0:
            break
        h = inputs[l]
        g = (g @ p.weights[l]) * (1.0 - h * h)


def loss_and_grads(p: MlpParams, sets: CollocationSets, cfg: PipeConfig):
    """Total loss, its two parts and the exact parameter gradient."""
    _check_sets(sets, cfg)
    gW = [np.zeros_like(w) for w in p.weights]
    gb = [np.zeros_like(b) for b in p.biases]
    lp = ld = 0.0
    if len(sets.physics):
        inputs, pre, out = _hd_trace(p, sets.physics)
        lam = sets.physics[:, 2:3]
        r = out[2] - lam * out[1] - cfg.diffusion * out[3]
        lp = float(np.mean(r * r))
        if cfg.omega_p > 0:
            c = 2.0 * cfg.omega_p * r / len(r)
            _backprop_hd(p, inputs, pre, np.stack([np.zeros_like(c), -lam * c, c, -cfg.diffusion * c]), gW, gb)
    if len(sets.data):
        inputs, out = _plain_trace(p, sets.data)
        e = out - sets.targets[:, None]
        ld = float(np.mean(e * e))
        if cfg.omega_d > 0:
            _backprop_plain(p, inputs, 2.0 * cfg.omega_d * e / len(e), gW, gb)
    grads = MlpParams(p.layer_sizes, gW, gb, p.in_shift, p.in_scale)
    return cfg.omega_p * lp + cfg.omega_d * ld, lp, ld, grads


def param_grads(p: MlpParams, sets: CollocationSets, cfg: PipeConfig) -> MlpParams:
    grads = loss_and_grads(p, sets, cfg)[3]
    bad = np.nonzero(~np.isfinite(grads.flat()))[0]
    if len(bad):
        raise FloatingPointError(f"non-finite gradient at {p.coordinate(int(bad[0]))}")
    return grads


# --- training -------------------------------------------------------------


@dataclass
class TrainResult:
    params: MlpParams
    history: list[tuple[int, float, float, float]]
    adam: AdamState
    config_hash: str
    data_digest: str


def initial_params(cfg: PipeConfig, sets: CollocationSets | None = None) -> MlpParams:
    p = init(cfg.layer_sizes, cfg.seed)
    if cfg.input_scaling:
        d = cfg.domain
        lams = [] if sets is None else list(sets.physics[:, 2]) + list(sets.data[:, 2])
        lam_lo, lam_hi = (min(lams), max(lams)) if lams else (0.0, 0.0)
        p = input_scaling(p, [d.x_lo, d.t_lo, lam_lo], [d.x_hi, d.t_hi, lam_hi])
    return p


def train(cfg: PipeConfig, sets: CollocationSets, params: MlpParams | None = None) -> TrainResult:
    """Full-batch Adam on omega_p * L_p + omega_d * L_d for ``cfg.epochs`` epochs."""
    p = initial_params(cfg, sets) if params is None else params
    state = AdamState(lr=cfg.lr)
    history = []
    ckdir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckdir:
        ckdir.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    for epoch in range(1, cfg.epochs + 1):
        total, lp, ld, grads = loss_and_grads(p, sets, cfg)
        if not np.isfinite(total) or total > cfg.max_loss:
            raise TrainingDiverged(f"loss {total!r} at epoch {epoch}")
        if epoch == 1 or epoch % cfg.history_every == 0:
            history.append((epoch, total, lp, ld))
            if epoch % (50 * cfg.history_every) == 0:
                log.info("epoch %d  total %.3e  Lp %.3e  Ld %.3e", epoch, total, lp, ld)
        p, state = adam_step(p, grads, state)
        if ckdir and epoch % cfg.checkpoint_every == 0 and epoch != cfg.epochs:
            save_checkpoint(ckdir / f"checkpoint_{epoch:06d}.json", p, state, cfg.seed, chash)
    if ckdir:
        save_checkpoint(ckdir / "checkpoint.json", p, state, cfg.seed, chash)
        write_history(history, ckdir / "history.csv")
    return TrainResult(p, history, state, chash, sets.digest())


def write_history(history, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "total", "Lp", "Ld"])
        for row in history:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# --- prediction -----------------------------------------------------------


def predict_field(p: MlpParams, grid: GridSpec, lam: float, kind: str = "N") -> ProbabilityField:
    raw = forward(p, grid_points(grid, lam)).reshape(grid.shape)
    outside = int(np.count_nonzero((raw < 0) | (raw > 1)))
    return ProbabilityField(grid, np.clip(raw, 0.0, 1.0), kind, "PINN", float(lam),
                            diagnostics={"clamped": outside})


@dataclass(frozen=True)
class GradientField:
    """dF/dx on a grid: grid finite differences (``fd``) and exact autodiff (``exact``)."""

    grid: GridSpec
    fd: np.ndarray
    exact: np.ndarray
    param: float


def fd_gradient(values: np.ndarray, dx: float) -> np.ndarray:
    """Central differences along x, one-sided at the ends."""
    return np.gradient(values, dx, axis=0)


def predict_gradient_field(p: MlpParams, grid: GridSpec, lam: float) -> GradientField:
    pts = grid_points(grid, lam)
    out = forward_hd(p, ad.lift(pts[:, 0], ad.Seed.X), ad.lift(pts[:, 1], ad.Seed.T), pts[:, 2])
    raw = out.val.reshape(grid.shape)
    return GradientField(grid, fd_gradient(raw, grid.dx), out.dx.reshape(grid.shape), float(lam))
