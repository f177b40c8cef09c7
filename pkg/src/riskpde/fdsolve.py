"""Crank-Nicolson reference solver for the scalar barrier-probability PDEs.

In one dimension with phi(x) = x - shift every kind reduces to

    du/dT = diffusion * u_xx + convection * u_x

on one side of the boundary x_b = shift + level, with a constant value on
the other side and an indicator initial condition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .fields import KINDS, GridSpec, ProbabilityField

# PDE side of the boundary, value held outside it, initial value at the boundary node.
_KIND_TABLE = {
    "F": ("above", 0.0, 1.0),
    "G": ("above", 1.0, 0.0),
    "Q": ("below", 0.0, 0.0),
    "N": ("below", 1.0, 1.0),
}


class TridiagonalBreakdown(ArithmeticError):
    pass


@dataclass(frozen=True)
class RiskPdeSpec:
    kind: str
    level: float
    convection: float
    diffusion: float
    domain: GridSpec
    phi_shift: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.diffusion > 0:
            raise ValueError("diffusion must be positive")

    @property
    def boundary(self) -> float:
        return self.phi_shift + self.level

    @classmethod
    def benchmark(cls, kind: str, lam: float, grid: GridSpec, level: float = 0.0) -> RiskPdeSpec:
        return cls(kind=kind, level=level, convection=float(lam), diffusion=0.5, domain=grid)

    def pde_side(self, xs: np.ndarray) -> np.ndarray:
        """Mask of nodes where the PDE holds (boundary node excluded)."""
        side = _KIND_TABLE[self.kind][0]
        return xs > self.boundary + 1e-12 if side == "above" else xs < self.boundary - 1e-12

    def initial(self, xs: np.ndarray) -> np.ndarray:
        safe = xs >= self.boundary - 1e-12
        return (safe if self.kind in ("F", "N") else ~safe).astype(float)


def peclet(spec: RiskPdeSpec) -> float:
    return abs(spec.convection) * spec.domain.dx / (2.0 * spec.diffusion)


def _operator(spec: RiskPdeSpec, m: int, toward_boundary: int):
    """Tridiagonal bands of D u_xx + c u_x on m unknowns.

    Unknowns are ordered from the far (Neumann) end to the node next to the
    boundary; ``toward_boundary`` is +1 if that ordering runs in +x.
    """
    h = spec.domain.dx
    c = spec.convection * toward_boundary
    lower_c = spec.diffusion / h**2 - c / (2 * h)
    upper_c = spec.diffusion / h**2 + c / (2 * h)
    diag = np.full(m, -2.0 * spec.diffusion / h**2)
    lower = np.full(m, lower_c)  # coefficient of u[i-1] in row i
    upper = np.full(m, upper_c)  # coefficient of u[i+1] in row i
    # Homogeneous Neumann at the far end via the mirrored ghost node.
    upper[0] = lower_c + upper_c
    lower[0] = 0.0
    # Row m-1 couples to the Dirichlet node with weight upper_c.
    dirichlet_weight = upper_c
    upper[m - 1] = 0.0
    return lower, diag, upper, dirichlet_weight


def _apply(lower, diag, upper, u):
    out = diag * u
    out[1:] += lower[1:] * u[:-1]
    out[:-1] += upper[:-1] * u[1:]
    return out


def _implicit_solve(lower, diag, upper, k, rhs):
    """Solve (I - k A) u = rhs."""
    m = len(diag)
    ab = np.zeros((3, m))
    ab[0, 1:] = -k * upper[:-1]
    ab[1] = 1.0 - k * diag
    ab[2, :-1] = -k * lower[1:]
    off = k * (np.abs(lower) + np.abs(upper))
    if np.any(np.abs(ab[1]) < off - 1e-12):
        bad = int(np.argmax(off - np.abs(ab[1])))
        raise TridiagonalBreakdown(f"system not diagonally dominant at row {bad}")
    return solve_banded((1, 1), ab, rhs)


def far_padding(spec: RiskPdeSpec) -> float:
    """Width added beyond the far end so its Neumann condition cannot reach the grid.

    The truncated problem is not flux-free at the far end of the benchmark
    domain (F(-10, 10) is about 0.31 for lam = 1), so the zero-gradient
    condition is moved out by several diffusion lengths plus the drift
    distance over the horizon.
    """
    g = spec.domain
    return 8.0 * np.sqrt(2.0 * spec.diffusion * g.t_hi) + abs(spec.convection) * g.t_hi


def solve(
    spec: RiskPdeSpec,
    startup_steps: int = 64,
    startup_grid_steps: int = 8,
    pad: float | None = None,
) -> ProbabilityField:
    """March the PDE over the spec's grid with Crank-Nicolson.

    Each of the first ``startup_grid_steps`` grid steps is replaced by
    ``startup_steps`` implicit-Euler substeps. This damps the discontinuous
    initial data (Rannacher-style) and resolves the incompatible corner at
    the boundary, where plain CN at large dT/dx^2 rings for several steps.
    The domain is extended by ``pad`` (default `far_padding`) on the side
    away from the boundary. The raw extremes before clamping to [0, 1] are
    kept in ``diagnostics["min_raw"]`` / ``["max_raw"]``.
    """
    requested = spec.domain
    if pad is None:
        pad = far_padding(spec)
    n_pad = int(np.ceil(pad / requested.dx))
    side = _KIND_TABLE[spec.kind][0]
    lo, hi = requested.x_lo, requested.x_hi
    if side == "below":
        lo -= n_pad * requested.dx
    else:
        hi += n_pad * requested.dx
    g = GridSpec(lo, hi, requested.dx, requested.t_lo, requested.t_hi, requested.dt_grid)
    keep = slice(n_pad, None) if side == "below" else slice(0, requested.nx)
    fld = _solve_on(spec, g, startup_steps, startup_grid_steps)
    return ProbabilityField(requested, fld.values[keep], spec.kind, "FD", spec.convection,
                            diagnostics=dict(fld.diagnostics, pad=n_pad * requested.dx))


def _solve_on(spec: RiskPdeSpec, g: GridSpec, startup_steps: int, startup_grid_steps: int) -> ProbabilityField:
    pe = peclet(spec)
    if pe >= 5:
        raise ValueError(f"grid Peclet number {pe:.3g} >= 5; refine dx")
    if pe > 1:
        warnings.warn(f"grid Peclet number {pe:.3g} > 1; expect oscillations", RuntimeWarning)
    if g.t_lo != 0:
        raise ValueError("time grid must start at T = 0")
    xs = g.xs
    hit = np.nonzero(np.abs(xs - spec.boundary) < 1e-9 * max(1.0, abs(spec.boundary)))[0]
    side = _KIND_TABLE[spec.kind][0]
    outside_value = _KIND_TABLE[spec.kind][1]
    pde = spec.pde_side(xs)
    if len(hit) == 0 and not (pde.all() or not pde.any()):
        raise ValueError(f"boundary x = {spec.boundary} must be a grid node")
    if len(hit) == 0:
        raise ValueError(f"boundary x = {spec.boundary} lies outside the grid")

    idx = np.nonzero(pde)[0]
    toward = 1 if side == "below" else -1
    if toward == -1:
        idx = idx[::-1]
    values = np.empty(g.shape)
    values[:, 0] = spec.initial(xs)
    values[~pde, 1:] = outside_value
    if len(idx) == 0:
        return ProbabilityField(g, np.clip(values, 0, 1), spec.kind, "FD", spec.convection)

    lower, diag, upper, w = _operator(spec, len(idx), toward)
    bvec = np.zeros(len(idx))
    bvec[-1] = w * outside_value
    u = values[idx, 0].copy()
    dt = g.dt_grid
    lo_raw, hi_raw = u.min(), u.max()
    for j in range(1, g.nt):
        if j <= startup_grid_steps:
            k = dt / startup_steps
            for _ in range(startup_steps):
                u = _implicit_solve(lower, diag, upper, k, u + k * bvec)
        else:
            rhs = u + 0.5 * dt * _apply(lower, diag, upper, u) + dt * bvec
            u = _implicit_solve(lower, diag, upper, 0.5 * dt, rhs)
        lo_raw, hi_raw = min(lo_raw, u.min()), max(hi_raw, u.max())
        values[idx, j] = u
    return ProbabilityField(
        g, np.clip(values, 0.0, 1.0), spec.kind, "FD", spec.convection,
        diagnostics={"min_raw": float(lo_raw), "max_raw": float(hi_raw), "peclet": pe},
    )


def residual_check(fld: ProbabilityField, spec: RiskPdeSpec) -> float:
    """Largest |du/dT - diffusion u_xx - convection u_x| over interior PDE-side nodes."""
    g = fld.grid
    if g.nx < 3 or g.nt < 3:
        raise ValueError("residual check needs at least a 3x3 grid")
    u = fld.values
    h, k = g.dx, g.dt_grid
    ut = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * k)
    uxx = (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / h**2
    ux = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * h)
    r = ut - spec.diffusion * uxx - spec.convection * ux
    mask = spec.pde_side(g.xs)[1:-1]
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(r[mask])))
