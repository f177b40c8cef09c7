import json

import numpy as np
import pytest

from riskpde.analytic import analytic_field, closed_form_recovery_array, recovery_gradient_array
from riskpde.bench import (
    NORMAL,
    PUBLISHED_REFS,
    RARE,
    BenchConfig,
    BenchResult,
    ErrorReport,
    RegionSpec,
    error_report,
    percentage_error,
    run_efficiency,
    write_report,
)
from riskpde.fields import GridSpec
from riskpde.pinn import fd_gradient

EVAL = GridSpec(-10.0, 2.0, 0.2, 0.0, 10.0, 0.1)


def test_region_truth_means():
    truth = analytic_field(EVAL, 1.0).values
    assert truth[NORMAL.mask(EVAL)].mean() == pytest.approx(PUBLISHED_REFS["efficiency"]["normal_truth_mean"], abs=0.01)
    assert truth[RARE.mask(EVAL)].mean() == pytest.approx(PUBLISHED_REFS["efficiency"]["rare_truth_mean"], abs=0.01)


def test_region_validation():
    with pytest.raises(ValueError):
        RegionSpec("out", (-12.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        RegionSpec("empty", (1.0, 0.0), (0.0, 1.0))
    assert NORMAL.mask(EVAL).sum() == 21 * 21


def test_error_report_fields():
    truth = np.full(EVAL.shape, 0.5)
    est = truth.copy()
    est[0, 0] = 0.9
    rep = error_report(est, truth, EVAL, (NORMAL,))
    assert isinstance(rep, ErrorReport)
    assert rep.max_abs == pytest.approx(0.4)
    assert rep.max_abs >= rep.mean_abs >= 0
    assert rep.mean_pct == pytest.approx(100 * rep.mean_abs / 0.5)
    assert rep.regions["normal"].mean_abs == 0.0
    with pytest.raises(ValueError):
        error_report(est[:-1], truth[:-1], EVAL)


def test_percentage_error_definition():
    assert percentage_error(np.array([1.0, 2.0]), np.array([2.0, 2.0])) == pytest.approx(25.0)


def test_gradient_of_closed_form_at_reference_point():
    g = float(recovery_gradient_array(np.array(0.0), np.array(4.0), 0.0))
    assert g == pytest.approx(0.2420, abs=5e-5)
    h = 1e-6
    fd = (closed_form_recovery_array(h, 4.0, 0.0) - closed_form_recovery_array(-h, 4.0, 0.0)) / (2 * h)
    assert float(fd) == pytest.approx(g, abs=1e-6)


def test_analytic_gradient_vs_fine_differences():
    grid = GridSpec(-10.0, 1.0, 0.01, 1.0, 10.0, 0.5)
    X, T = grid.mesh()
    fd = fd_gradient(analytic_field(grid, 1.0).values, grid.dx)
    exact = recovery_gradient_array(X, T, 1.0)
    assert np.abs(fd - exact).max() < 1e-3


def test_efficiency_mc_only_sweep():
    cfg = BenchConfig(counts=(10, 100, 1000), pipe_counts=(), seeds=(0, 1, 2), threads=1)
    res = run_efficiency(cfg)
    med = res.metrics["median_pct"]
    for region in ("normal", "rare"):
        mc = med[region]["mc"]
        assert mc["10"] > mc["100"] > mc["1000"]
        assert med[region]["mc_denoised"]["100"] <= mc["100"]
    assert res.metrics["truth_mean"]["normal"] == pytest.approx(0.412, abs=0.01)


def test_report_files(tmp_path):
    res = BenchResult("demo", "abc123", 0, "d1", {"x": 1.0}, [{"a": 1, "b": 2.5}], {"ref": 0.1})
    out = write_report(res, tmp_path)
    assert out == tmp_path / "demo" / "abc123"
    data = json.loads((out / "report.json").read_text())
    assert data["config_hash"] == "abc123" and data["reference"] == {"ref": 0.1}
    assert (out / "report.csv").read_text().splitlines() == ["a,b", "1,2.5"]


def test_config_hash_tracks_settings():
    assert BenchConfig().config_hash() == BenchConfig(threads=4).config_hash()
    assert BenchConfig().config_hash() != BenchConfig(epochs=10).config_hash()
