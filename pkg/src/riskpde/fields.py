"""Grids and gridded probability fields shared by the MC, FD, PINN and analytic routes."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("F", "G", "Q", "N")
PROVENANCES = ("MC", "MC-denoised", "FD", "PINN", "ANALYTIC")

_GRID_TOL = 1e-9


def _count(lo: float, hi: float, step: float) -> int:
    n = int(round((hi - lo) / step)) + 1
    if abs(lo + (n - 1) * step - hi) > _GRID_TOL * max(1.0, abs(hi), abs(lo)):
        raise ValueError(f"[{lo}, {hi}] is not an integer multiple of step {step}")
    return n


@dataclass(frozen=True)
class GridSpec:
    """Rectangular state-time grid. Both ends are included."""

    x_lo: float
    x_hi: float
    dx: float
    t_lo: float
    t_hi: float
    dt_grid: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.t_lo < self.t_hi):
            raise ValueError("grid needs x_lo < x_hi and t_lo < t_hi")
        if self.dx <= 0 or self.dt_grid <= 0:
            raise ValueError("grid steps must be positive")
        if self.nx < 2 or self.nt < 2:
            raise ValueError("grid needs at least two points per axis")

    @property
    def nx(self) -> int:
        return _count(self.x_lo, self.x_hi, self.dx)

    @property
    def nt(self) -> int:
        return _count(self.t_lo, self.t_hi, self.dt_grid)

    @property
    def xs(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.nx)

    @property
    def ts(self) -> np.ndarray:
        return self.t_lo + self.dt_grid * np.arange(self.nt)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx, self.nt

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, T) arrays of shape (nx, nt)."""
        return np.meshgrid(self.xs, self.ts, indexing="ij")

    def contains(self, other: GridSpec) -> bool:
        return (
            self.x_lo - _GRID_TOL <= other.x_lo
            and other.x_hi <= self.x_hi + _GRID_TOL
            and self.t_lo - _GRID_TOL <= other.t_lo
            and other.t_hi <= self.t_hi + _GRID_TOL
        )

    def to_dict(self) -> dict:
        return {
            "x_lo": self.x_lo,
            "x_hi": self.x_hi,
            "dx": self.dx,
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
            "dt_grid": self.dt_grid,
        }


@dataclass(frozen=True)
class ProbabilityField:
    """Values on a GridSpec, indexed ``values[ix, it]``.

    ``diagnostics`` carries route-specific extras (FD overshoot before
    clamping, number of clamped PINN outputs, ...).
    """

    grid: GridSpec
    values: np.ndarray
    kind: str
    provenance: str
    param: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("probability values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    def replace(self, **changes) -> ProbabilityField:
        kw = dict(
            grid=self.grid,
            values=self.values,
            kind=self.kind,
            provenance=self.provenance,
            param=self.param,
            diagnostics=dict(self.diagnostics),
        )
        kw.update(changes)
        return ProbabilityField(**kw)


CSV_HEADER = ["x", "T", "lambda", "kind", "provenance", "value"]


def write_csv(fld: ProbabilityField, path: str | Path) -> None:
    xs, ts = fld.grid.xs, fld.grid.ts
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i, x in enumerate(xs):
            for j, t in enumerate(ts):
                w.writerow([repr(float(x)), repr(float(t)), repr(float(fld.param)),
                            fld.kind, fld.provenance, repr(float(fld.values[i, j]))])


def read_csv(path: str | Path) -> ProbabilityField:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or list(rows[0].keys()) != CSV_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
    xs = np.array([float(r["x"]) for r in rows])
    ts = np.array([float(r["T"]) for r in rows])
    ux, ut = np.unique(xs), np.unique(ts)
    if len(ux) * len(ut) != len(rows):
        raise ValueError(f"{path}: rows do not form a full grid")
    grid = GridSpec(ux[0], ux[-1], float(np.diff(ux).mean()), ut[0], ut[-1], float(np.diff(ut).mean()))
    values = np.empty(grid.shape)
    ix = np.searchsorted(ux, xs)
    it = np.searchsorted(ut, ts)
    values[ix, it] = [float(r["value"]) for r in rows]
    return ProbabilityField(grid, values, rows[0]["kind"], rows[0]["provenance"], float(rows[0]["lambda"]))


def to_json(fld: ProbabilityField) -> dict:
    return {
        "grid": fld.grid.to_dict(),
        "kind": fld.kind,
        "provenance": fld.provenance,
        "lambda": fld.param,
        "values": fld.values.tolist(),
    }


def from_json(obj: dict) -> ProbabilityField:
    return ProbabilityField(
        GridSpec(**obj["grid"]), np.array(obj["values"], dtype=float),
        obj["kind"], obj["provenance"], float(obj["lambda"]),
    )


def write_json(fld: ProbabilityField, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_json(fld)))


def read_json(path: str | Path) -> ProbabilityField:
    return from_json(json.loads(Path(path).read_text()))


def read_field(path: str | Path) -> ProbabilityField:
    """Load a field from ``.json`` or CSV depending on the suffix."""
    if str(path).endswith(".json"):
        return read_json(path)
    return read_csv(path)


def write_field(fld: ProbabilityField, path: str | Path) -> None:
    if str(path).endswith(".json"):
        write_json(fld, path)
    else:
        write_csv(fld, path)
