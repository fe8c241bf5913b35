import math

import numpy as np
import pytest

from adcloud.errors import EmptyInput, MalformedLabelSpec
from adcloud.mapgen import GridMap, add_labels, rasterize, rasterize_partitions
from adcloud.mapgen.mapfile import decode_mapfile, encode_mapfile, read_mapfile, write_mapfile


def sequential_rasterizer(points, cell_size):
    """Independent reference: dict-based accumulation in input order."""
    cells = {}
    for x, y, z, refl in points:
        key = (math.floor(y / cell_size), math.floor(x / cell_size))
        cell = cells.setdefault(key, {"max_z": -math.inf, "sum": 0.0, "hits": 0})
        cell["max_z"] = max(cell["max_z"], z)
        cell["sum"] += min(max(refl, 0.0), 1.0)
        cell["hits"] += 1
    return cells


def grid_cells(grid: GridMap):
    base_row = round(grid.origin_y / grid.cell_size)
    base_col = round(grid.origin_x / grid.cell_size)
    out = {}
    for row in range(grid.height):
        for col in range(grid.width):
            if grid.hits[row, col]:
                out[(base_row + row, base_col + col)] = {
                    "max_z": grid.elevation[row, col],
                    "mean": grid.reflectance[row, col],
                    "hits": int(grid.hits[row, col]),
                }
    return out


def test_single_point():
    grid = rasterize(np.array([[0.01, 0.02, 1.5, 0.7]]))
    assert grid.width == grid.height == 1
    assert grid.cell_size == 0.05
    assert grid.elevation[0, 0] == 1.5
    assert grid.reflectance[0, 0] == 0.7
    assert grid.hits[0, 0] == 1


def test_two_points_same_cell_mean_and_max():
    points = np.array([
        [0.01, 0.01, 1.0, 0.2],
        [0.02, 0.02, 2.0, 0.4],
    ])
    grid = rasterize(points)
    assert grid.elevation[0, 0] == 2.0
    assert grid.reflectance[0, 0] == pytest.approx(0.3)
    assert grid.hits[0, 0] == 2


def test_empty_input():
    with pytest.raises(EmptyInput):
        rasterize(np.zeros((0, 4)))


def test_matches_sequential_reference_exactly():
    rng = np.random.default_rng(12)
    n = 100_000
    points = np.column_stack([
        rng.uniform(-5, 5, n),
        rng.uniform(-5, 5, n),
        rng.uniform(0, 3, n),
        rng.uniform(0, 1, n),
    ])
    grid = rasterize(points, 0.05)
    reference = sequential_rasterizer(points, 0.05)
    cells = grid_cells(grid)
    assert set(cells) == set(reference)
    for key, ref in reference.items():
        assert cells[key]["max_z"] == ref["max_z"]
        assert cells[key]["hits"] == ref["hits"]
        assert cells[key]["mean"] == pytest.approx(ref["sum"] / ref["hits"], abs=1e-12)


def test_partitioned_rasterization_merges_to_identical_cells():
    rng = np.random.default_rng(13)
    n = 20_000
    points = np.column_stack([
        rng.uniform(-3, 3, n), rng.uniform(-3, 3, n),
        rng.uniform(0, 2, n), rng.uniform(0, 1, n),
    ])
    whole = rasterize(points, 0.05)
    split = rasterize_partitions(np.array_split(points, 4), 0.05)
    assert whole.width == split.width and whole.height == split.height
    assert np.array_equal(whole.hits, split.hits)
    assert np.array_equal(whole.elevation, split.elevation, equal_nan=True)
    occupied = whole.hits > 0
    assert np.allclose(whole.reflectance[occupied], split.reflectance[occupied], atol=1e-12)


def test_permutation_invariance():
    rng = np.random.default_rng(14)
    points = np.column_stack([
        rng.uniform(-1, 1, 5000), rng.uniform(-1, 1, 5000),
        rng.uniform(0, 2, 5000), rng.uniform(0, 1, 5000),
    ])
    grid_a = rasterize(points, 0.05)
    grid_b = rasterize(points[rng.permutation(5000)], 0.05)
    assert np.array_equal(grid_a.elevation, grid_b.elevation, equal_nan=True)
    occupied = grid_a.hits > 0
    assert np.allclose(grid_a.reflectance[occupied], grid_b.reflectance[occupied], atol=1e-12)


# --- labels -----------------------------------------------------------------------------

def flat_grid(width=20, height=20, cell=0.05):
    shape = (height, width)
    return GridMap(
        origin_x=0.0, origin_y=0.0, cell_size=cell, width=width, height=height,
        elevation=np.zeros(shape), reflectance=np.full(shape, 0.5),
        hits=np.ones(shape, dtype=np.uint32),
    )


def test_empty_label_spec_changes_nothing():
    grid = flat_grid()
    labeled = add_labels(grid, {})
    assert labeled.labels == {}
    assert np.array_equal(labeled.elevation, grid.elevation)


def test_straight_lane_labels_hand_enumerated_rectangle():
    grid = flat_grid()
    # lane along y = 0.5 (row 9/10 boundary), width 0.2 => centers within 0.1
    spec = {"lanes": [{"id": 7, "width": 0.2,
                       "polyline": [[0.25, 0.5], [0.75, 0.5]]}]}
    labeled = add_labels(grid, spec)

    expected = set()
    for row in range(grid.height):
        for col in range(grid.width):
            cx, cy = grid.cell_center(row, col)
            if 0.25 <= cx <= 0.75 and abs(cy - 0.5) <= 0.1:
                expected.add(grid.cell_index(row, col))
            elif cx < 0.25 and math.hypot(cx - 0.25, cy - 0.5) <= 0.1:
                expected.add(grid.cell_index(row, col))
            elif cx > 0.75 and math.hypot(cx - 0.75, cy - 0.5) <= 0.1:
                expected.add(grid.cell_index(row, col))
    assert set(labeled.labels) == expected
    assert all(v == [("LANE", 7)] for v in labeled.labels.values())


def test_sign_outside_bounds_is_clipped_with_warning():
    grid = flat_grid()
    labeled = add_labels(grid, {"signs": [{"x": 50.0, "y": 50.0, "kind": "stop"}]})
    assert labeled.labels == {}
    assert len(labeled.warnings) == 1


def test_speed_limit_sign_lands_in_containing_cell():
    grid = flat_grid()
    labeled = add_labels(grid, {"signs": [{"x": 0.12, "y": 0.07, "kind": "speed_limit",
                                           "value": 30.0}]})
    row, col = 1, 2
    assert labeled.labels == {grid.cell_index(row, col): [("SPEED_LIMIT", 30.0)]}


def test_malformed_specs_rejected():
    grid = flat_grid()
    with pytest.raises(MalformedLabelSpec):
        add_labels(grid, {"lanes": [{"id": 1, "width": 0.2, "polyline": [[0, 0]]}]})
    with pytest.raises(MalformedLabelSpec):
        add_labels(grid, {"signs": [{"x": 0.1, "kind": "stop"}]})
    with pytest.raises(MalformedLabelSpec):
        add_labels(grid, {"signs": [{"x": 0.1, "y": 0.1, "kind": "speed_limit"}]})


# --- map file ------------------------------------------------------------------------------

def test_mapfile_roundtrip(tmp_path):
    rng = np.random.default_rng(15)
    points = np.column_stack([
        rng.uniform(0, 2, 500), rng.uniform(0, 2, 500),
        rng.uniform(0, 3, 500), rng.uniform(0, 1, 500),
    ])
    grid = rasterize(points, 0.05)
    grid = add_labels(grid, {
        "lanes": [{"id": 3, "width": 0.2, "polyline": [[0.2, 1.0], [1.8, 1.0]]}],
        "signs": [{"x": 1.0, "y": 0.5, "kind": "speed_limit", "value": 40.0},
                  {"x": 0.5, "y": 0.5, "kind": "yield"}],
        "reference_lines": [{"polyline": [[0.2, 0.3], [1.8, 0.3]]}],
    })
    path = str(tmp_path / "m.adhm")
    write_mapfile(grid, path)
    loaded = read_mapfile(path)

    assert loaded.cell_size == 0.05
    assert (loaded.width, loaded.height) == (grid.width, grid.height)
    assert np.array_equal(loaded.elevation, grid.elevation, equal_nan=True)
    assert np.array_equal(loaded.reflectance, grid.reflectance, equal_nan=True)
    assert np.array_equal(loaded.hits, grid.hits)
    assert loaded.labels == grid.labels
    # deterministic encoding
    assert encode_mapfile(loaded) == encode_mapfile(grid)


def test_mapfile_magic_checked(tmp_path):
    from adcloud.errors import ParseError

    with pytest.raises(ParseError):
        decode_mapfile(b"NOPE" + b"\x00" * 100)
