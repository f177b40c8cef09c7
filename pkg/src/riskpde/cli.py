"""Command-line entry point.

    riskpde <command> [--config file.toml] [--seed N] [--threads N] --out PATH

Config files are flat TOML with ``schema_version = 1``; unknown keys are
errors. stdout carries a one-line JSON summary, logs go to stderr.
Exit codes: 0 success, 1 domain error (including a failed ``verify``),
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analytic, bench, fdsolve, mc, pinn, sde
from .fields import GridSpec, read_field, write_field
from .nn import load_checkpoint

log = logging.getLogger("riskpde")

SCHEMA_VERSION = 1

# key -> (type, default)
SCHEMA = {
    "schema_version": (int, SCHEMA_VERSION),
    "model": (str, "benchmark-drift"),
    "lambda": (float, 1.0),
    "kind": (str, "N"),
    "level": (float, 0.0),
    "seed": (int, None),
    # output / evaluation grid
    "x_lo": (float, -10.0),
    "x_hi": (float, 2.0),
    "dx": (float, 0.2),
    "t_lo": (float, 0.0),
    "t_hi": (float, 10.0),
    "dt_grid": (float, 0.1),
    # Monte Carlo
    "paths": (int, 1000),
    "mc_dt": (float, 0.1),
    "bridge": (bool, True),
    "x0": (float, 0.0),
    "horizon": (float, 10.0),
    # training
    "epochs": (int, 20000),
    "omega_p": (float, 1.0),
    "omega_d": (float, 1.0),
    "lr": (float, 1e-3),
    "input_scaling": (bool, False),
    "history_every": (int, 100),
    "checkpoint_every": (int, 10000),
    "phys_dx": (float, 0.2),
    "phys_dt": (float, 0.2),
    "data_x_lo": (float, -10.0),
    "data_x_hi": (float, -4.0),
    "data_dx": (float, 0.4),
    "data_t_lo": (float, 0.0),
    "data_t_hi": (float, 8.0),
    "data_dt": (float, 1.0),
    "lambdas": (list, [1.0]),
    "physics_lambdas": (list, None),
    # bench
    "seeds": (list, [0, 1, 2]),
    "counts": (list, [10, 100, 1000, 10000]),
    "pipe_counts": (list, [100]),
    "gen_paths": (int, 1000),
    "grad_paths": (int, 1000),
    "adapt_paths": (int, 10000),
    "lam_train": (list, [0.1, 0.5, 0.8, 1.0]),
    "lam_test": (list, [0.3, 0.7, 1.2, 1.5, 2.0]),
}


class UsageError(Exception):
    pass


def load_config(path: str | Path | None) -> dict:
    cfg = {k: v for k, (_, v) in SCHEMA.items()}
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {p} not found")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise UsageError(f"malformed config {p}: {e}") from e
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise UsageError(f"unknown config keys in {p}: {', '.join(unknown)} (allowed: {', '.join(SCHEMA)})")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"{p}: schema_version must be {SCHEMA_VERSION}")
    for key, value in raw.items():
        typ = SCHEMA[key][0]
        ok = isinstance(value, typ) and not (typ is int and isinstance(value, bool))
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value, ok = float(value), True
        if not ok:
            raise UsageError(f"{p}: key {key!r} must be {typ.__name__}, got {value!r}")
        cfg[key] = value
    return cfg


def _grid(cfg: dict) -> GridSpec:
    return GridSpec(cfg["x_lo"], cfg["x_hi"], cfg["dx"], cfg["t_lo"], cfg["t_hi"], cfg["dt_grid"])


def _pipe_config(cfg: dict, seed: int, out: Path | None) -> pinn.PipeConfig:
    return pinn.PipeConfig(
        omega_p=cfg["omega_p"], omega_d=cfg["omega_d"], epochs=cfg["epochs"], lr=cfg["lr"], seed=seed,
        input_scaling=cfg["input_scaling"], history_every=cfg["history_every"],
        checkpoint_every=cfg["checkpoint_every"], checkpoint_dir=None if out is None else str(out),
        domain=GridSpec(cfg["x_lo"], cfg["x_hi"], cfg["phys_dx"], cfg["t_lo"], cfg["t_hi"], cfg["phys_dt"]),
        data_grid=GridSpec(cfg["data_x_lo"], cfg["data_x_hi"], cfg["data_dx"],
                           cfg["data_t_lo"], cfg["data_t_hi"], cfg["data_dt"]),
        lambdas=tuple(float(v) for v in cfg["lambdas"]),
        physics_lambdas=None if cfg["physics_lambdas"] is None else tuple(float(v) for v in cfg["physics_lambdas"]),
        n_paths=cfg["paths"], mc_dt=cfg["mc_dt"],
    )


def _bench_config(cfg: dict, seed: int, threads: int) -> bench.BenchConfig:
    ints = lambda v: tuple(int(x) for x in v)  # noqa: E731
    floats = lambda v: tuple(float(x) for x in v)  # noqa: E731
    return bench.BenchConfig(
        epochs=cfg["epochs"], seed=seed, seeds=ints(cfg["seeds"]), lam=cfg["lambda"], mc_dt=cfg["mc_dt"],
        threads=threads, input_scaling=cfg["input_scaling"],
        physics_grid=GridSpec(cfg["x_lo"], cfg["x_hi"], cfg["phys_dx"], cfg["t_lo"], cfg["t_hi"], cfg["phys_dt"]),
        eval_grid=_grid(cfg),
        gen_data_grid=GridSpec(cfg["data_x_lo"], cfg["data_x_hi"], cfg["data_dx"],
                               cfg["data_t_lo"], cfg["data_t_hi"], cfg["data_dt"]),
        gen_paths=cfg["gen_paths"], grad_paths=cfg["grad_paths"], counts=ints(cfg["counts"]),
        pipe_counts=ints(cfg["pipe_counts"]), lam_train=floats(cfg["lam_train"]),
        lam_test=floats(cfg["lam_test"]), adapt_paths=cfg["adapt_paths"],
    )


# --- commands -------------------------------------------------------------


def cmd_simulate(a, cfg, seed):
    model = sde.make_model(cfg["model"], cfg["lambda"])
    traj = sde.simulate(model, [cfg["x0"]], cfg["mc_dt"], cfg["horizon"], seed)
    traj.to_csv(a.out)
    return {"steps": len(traj.times) - 1, "final": traj.states[-1].tolist()}


def cmd_mc_field(a, cfg, seed):
    fld = mc.estimate_field(sde.make_model(cfg["model"], cfg["lambda"]), sde.linear_barrier(2.0, cfg["level"]),
                            cfg["kind"], _grid(cfg), cfg["paths"], cfg["mc_dt"], seed=seed,
                            bridge=cfg["bridge"], threads=a.threads)
    if a.denoise:
        fld = mc.denoise(fld)
    write_field(fld, a.out)
    return {"nodes": int(fld.values.size), "mean": float(fld.values.mean())}


def cmd_fd_solve(a, cfg, seed):
    spec = fdsolve.RiskPdeSpec.benchmark(cfg["kind"], cfg["lambda"], _grid(cfg), cfg["level"])
    fld = fdsolve.solve(spec)
    write_field(fld, a.out)
    return {"nodes": int(fld.values.size), "min_raw": fld.diagnostics["min_raw"],
            "max_raw": fld.diagnostics["max_raw"]}


def cmd_analytic_field(a, cfg, seed):
    fld = analytic.analytic_field(_grid(cfg), cfg["lambda"], cfg["kind"])
    write_field(fld, a.out)
    return {"nodes": int(fld.values.size), "mean": float(fld.values.mean())}


def cmd_train(a, cfg, seed):
    out = Path(a.out)
    pcfg = _pipe_config(cfg, seed, out)
    sets = pinn.build_sets(pcfg, threads=a.threads)
    res = pinn.train(pcfg, sets)
    _, total, lp, ld = res.history[-1]
    return {"config_hash": res.config_hash, "data_digest": res.data_digest, "total": total, "Lp": lp, "Ld": ld,
            "checkpoint": str(out / "checkpoint.json")}


def _checkpoint(a):
    if a.checkpoint is None:
        raise UsageError("--checkpoint is required")
    if not Path(a.checkpoint).is_file():
        raise UsageError(f"checkpoint {a.checkpoint} not found")
    return load_checkpoint(a.checkpoint)[0]


def cmd_predict(a, cfg, seed):
    fld = pinn.predict_field(_checkpoint(a), _grid(cfg), cfg["lambda"], cfg["kind"])
    write_field(fld, a.out)
    return {"nodes": int(fld.values.size), "clamped": fld.diagnostics["clamped"]}


def cmd_grad(a, cfg, seed):
    gf = pinn.predict_gradient_field(_checkpoint(a), _grid(cfg), cfg["lambda"])
    X, T = gf.grid.mesh()
    rows = np.column_stack([X.ravel(), T.ravel(), np.full(X.size, gf.param), gf.fd.ravel(), gf.exact.ravel()])
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "T", "lambda", "fd", "exact"])
        w.writerows([repr(float(v)) for v in row] for row in rows)
    return {"nodes": int(X.size), "max_fd_vs_exact": float(np.abs(gf.fd - gf.exact).max())}


def cmd_bench(a, cfg, seed):
    bcfg = _bench_config(cfg, seed, a.threads)
    result = bench.EXPERIMENTS[a.name](bcfg)
    path = bench.write_report(result, a.out)
    return {"experiment": a.name, "report": str(path), "config_hash": result.config_hash,
            "metrics": _scalars(result.metrics)}


def _scalars(d: dict) -> dict:
    return {k: v for k, v in d.items() if isinstance(v, (int, float))}


def corner_mask(grid: GridSpec, cells: int, barrier: float = 2.0) -> np.ndarray:
    """Nodes within ``cells`` grid steps of the (x = barrier, T = 0) corner."""
    X, T = grid.mesh()
    return (np.abs(X - barrier) <= cells * grid.dx + 1e-9) & (T - grid.t_lo <= cells * grid.dt_grid + 1e-9)


def cmd_verify(a, cfg, seed):
    for path in (a.a, a.b):
        if path is None or not Path(path).is_file():
            raise UsageError(f"field file {path} not found")
    fa, fb = read_field(a.a), read_field(a.b)
    if fa.grid != fb.grid:
        raise ValueError("fields live on different grids")
    diff = np.abs(fa.values - fb.values)
    keep = ~corner_mask(fa.grid, a.corner_cells)
    worst = float(diff[keep].max()) if keep.any() else 0.0
    return {"max_abs": worst, "mean_abs": float(diff[keep].mean()) if keep.any() else 0.0,
            "tol": a.tol, "passed": worst < a.tol, "excluded": int((~keep).sum())}


COMMANDS = {
    "simulate": cmd_simulate,
    "mc-field": cmd_mc_field,
    "fd-solve": cmd_fd_solve,
    "analytic-field": cmd_analytic_field,
    "train": cmd_train,
    "predict": cmd_predict,
    "grad": cmd_grad,
    "bench": cmd_bench,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskpde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat TOML config file")
        sp.add_argument("--seed", type=int, help="RNG seed (fallback: $RISKPDE_SEED, then config)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "bench":
            sp.add_argument("name", choices=sorted(bench.EXPERIMENTS))
        if name != "verify":
            sp.add_argument("--out", required=True, help="output file (directory for train/bench)")
        sp.add_argument("--lambda", dest="lam", type=float)
        if name in ("simulate", "mc-field", "train", "bench"):
            sp.add_argument("--paths", type=int)
            sp.add_argument("--dt", type=float, help="Euler-Maruyama step")
        if name in ("train", "bench"):
            sp.add_argument("--epochs", type=int)
        if name == "mc-field":
            sp.add_argument("--denoise", action="store_true")
        if name in ("predict", "grad"):
            sp.add_argument("--checkpoint")
        if name == "verify":
            sp.add_argument("--a", required=True)
            sp.add_argument("--b", required=True)
            sp.add_argument("--tol", type=float, required=True)
            sp.add_argument("--corner-cells", type=int, default=3,
                            help="exclude nodes this many cells from the (2, 0) corner (0 keeps all)")
    return parser


def _resolve_seed(flag, cfg) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("RISKPDE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"RISKPDE_SEED must be an integer, got {env!r}") from None
    return cfg["seed"] if cfg["seed"] is not None else 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(a.config)
        for flag, key in (("lam", "lambda"), ("paths", "paths"), ("dt", "mc_dt"), ("epochs", "epochs")):
            value = getattr(a, flag, None)
            if value is not None:
                cfg[key] = value
        if cfg["paths"] < 1:
            raise UsageError("--paths must be >= 1")
        if a.threads < 1:
            raise UsageError("--threads must be >= 1")
        seed = _resolve_seed(a.seed, cfg)
        summary = COMMANDS[a.command](a, cfg, seed)
    except UsageError as e:
        print(f"riskpde {a.command}: {e}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError, KeyError) as e:
        print(f"riskpde {a.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    summary = dict(command=a.command, seed=seed, out=getattr(a, "out", None), **summary)
    print(json.dumps(summary, default=float))
    return 0 if summary.get("passed", True) else 1


if __name__ == "__main__":
    sys.exit(main())
