import numpy as np
import pytest

from riskpde.fields import GridSpec, ProbabilityField, read_field, write_field


@pytest.fixture
def grid():
    return GridSpec(-1.0, 1.0, 0.5, 0.0, 2.0, 1.0)


def test_grid_counts_and_mesh(grid):
    assert grid.shape == (5, 3)
    X, T = grid.mesh()
    assert X.shape == T.shape == (5, 3)
    assert X[0, 2] == -1.0 and T[4, 2] == 2.0


@pytest.mark.parametrize("args", [(0, 1, 0.3, 0, 1, 0.5), (1, 0, 0.1, 0, 1, 0.5), (0, 1, 0.1, 0, 1, -0.5)])
def test_grid_rejects_bad_specs(args):
    with pytest.raises(ValueError):
        GridSpec(*args)


def test_field_validation(grid):
    with pytest.raises(ValueError):
        ProbabilityField(grid, np.full(grid.shape, 1.5), "N", "MC", 1.0)
    with pytest.raises(ValueError):
        ProbabilityField(grid, np.zeros(grid.shape), "Z", "MC", 1.0)
    with pytest.raises(ValueError):
        ProbabilityField(grid, np.zeros((2, 2)), "N", "MC", 1.0)


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_roundtrip_is_exact(grid, tmp_path, suffix):
    vals = np.random.default_rng(0).uniform(size=grid.shape)
    fld = ProbabilityField(grid, vals, "F", "FD", 0.5)
    path = tmp_path / f"f{suffix}"
    write_field(fld, path)
    back = read_field(path)
    assert back.grid == grid
    assert back.kind == "F" and back.provenance == "FD" and back.param == 0.5
    np.testing.assert_array_equal(back.values, vals)


def test_csv_header(grid, tmp_path):
    write_field(ProbabilityField(grid, np.zeros(grid.shape), "N", "MC", 1.0), tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,T,lambda,kind,provenance,value"
