"""Grid containers, discrete norms, and the perturbation primitive."""

import numpy as np
import pytest

from convstab import CellGrid, LineGrid, Profile, norm, primitive


def test_cell_grid_centers_are_midpoints():
    grid = CellGrid(8, 2.0)
    assert grid.h == 0.25
    expected = (np.arange(8) + 0.5) * 0.25
    assert np.array_equal(grid.centers(), expected)


def test_cell_grid_refined_doubles_cells():
    grid = CellGrid(16, 1.0)
    fine = grid.refined()
    assert fine.n_cells == 32
    assert fine.period == grid.period
    assert fine.h == grid.h / 2


@pytest.mark.parametrize("n_cells", [0, 4, 7, 8.5])
def test_cell_grid_rejects_bad_cell_counts(n_cells):
    with pytest.raises(ValueError):
        CellGrid(n_cells, 1.0)


@pytest.mark.parametrize("period", [0.0, -1.0])
def test_cell_grid_rejects_bad_periods(period):
    with pytest.raises(ValueError):
        CellGrid(8, period)


def test_profile_caches_mean_and_freezes_values():
    grid = CellGrid(8, 1.0)
    values = np.linspace(-1.0, 1.0, 8)
    prof = Profile(grid, values)
    assert prof.mean == pytest.approx(values.mean(), abs=0.0)
    with pytest.raises(ValueError):
        prof.values[0] = 3.0  # read-only array
    prof.validate_mean()


def test_profile_validate_mean_catches_staleness():
    grid = CellGrid(8, 1.0)
    prof = Profile(grid, np.ones(8), mean=2.0)
    with pytest.raises(ValueError):
        prof.validate_mean()


def test_profile_rejects_wrong_shape_and_nonfinite():
    grid = CellGrid(8, 1.0)
    with pytest.raises(ValueError):
        Profile(grid, np.ones(9))
    bad = np.ones(8)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        Profile(grid, bad)


def test_line_grid_tiles_cell_centers():
    cell = CellGrid(8, 1.0)
    line = LineGrid(cell, 4, "periodic")
    assert line.n_total == 32
    assert line.length == 4.0
    assert line.h == cell.h
    assert np.array_equal(line.centers(), (np.arange(32) + 0.5) * cell.h)
    assert np.array_equal(line.interfaces(), np.arange(33) * cell.h)


def test_line_grid_tile_repeats_profile_exactly():
    cell = CellGrid(8, 1.0)
    line = LineGrid(cell, 3, "pinned_to_wp")
    prof = Profile(cell, np.arange(8.0))
    tiled = line.tile(prof)
    assert tiled.shape == (24,)
    assert np.array_equal(tiled[8:16], prof.values)


def test_line_grid_tile_rejects_mismatched_profile():
    line = LineGrid(CellGrid(8, 1.0), 2, "periodic")
    with pytest.raises(ValueError):
        line.tile(Profile(CellGrid(16, 1.0), np.zeros(16)))


def test_line_grid_rejects_unknown_boundary_and_bad_periods():
    cell = CellGrid(8, 1.0)
    with pytest.raises(ValueError):
        LineGrid(cell, 2, "reflecting")
    with pytest.raises(ValueError):
        LineGrid(cell, 0, "periodic")


def test_norms_match_midpoint_formulas():
    v = np.array([1.0, -2.0, 0.5])
    h = 0.1
    assert norm(v, h, "L1") == pytest.approx(0.35, abs=1e-15)
    assert norm(v, h, "L2") == pytest.approx(np.sqrt(0.525), abs=1e-15)
    assert norm(v, h, "Linf") == 2.0


def test_norm_rejects_unknown_kind_and_empty_input():
    with pytest.raises(ValueError):
        norm(np.ones(3), 0.1, "L3")
    with pytest.raises(ValueError):
        norm(np.array([]), 0.1, "L1")


def test_primitive_is_h_times_cumsum():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(17)
    h = 0.25
    V = primitive(u, h)
    assert np.allclose(V, h * np.cumsum(u), atol=0.0), "primitive must be h * cumsum"
    assert V[-1] == pytest.approx(h * u.sum(), abs=1e-15)


def test_primitive_of_zero_mean_field_returns_to_zero():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(64)
    u -= u.mean()
    V = primitive(u, 0.1)
    assert abs(V[-1]) < 1e-13, f"primitive of zero-sum data should close, got {V[-1]:.2e}"
