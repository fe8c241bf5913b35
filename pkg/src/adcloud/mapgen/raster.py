"""Grid rasterization of world-frame LiDAR points plus semantic labels.

Cells are indexed on a global lattice (col = floor(x / cell_size)), so
partial grids built from different partitions align exactly when merged.
Per cell: elevation = max z, reflectance = mean of hits (accumulated as
(sum, count) and divided once at finalize), hit count. Partials merge in
ascending-partition halving-tree order, which keeps cross-worker results
deterministic; elevation max is order-free and reflectance means agree to
1e-12 under input permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInput, MalformedLabelSpec
from ..detsum import tree_reduce

DEFAULT_CELL_SIZE = 0.05


@dataclass
class GridPartial:
    """Accumulators over this partial's bounding cell window."""

    cell_size: float
    min_row: int
    min_col: int
    elevation: np.ndarray   # max z, -inf where unseen
    refl_sum: np.ndarray
    hits: np.ndarray        # uint32

    @property
    def height(self) -> int:
        return self.elevation.shape[0]

    @property
    def width(self) -> int:
        return self.elevation.shape[1]


@dataclass
class GridMap:
    origin_x: float
    origin_y: float
    cell_size: float
    width: int
    height: int
    elevation: np.ndarray       # max z per cell, NaN = empty
    reflectance: np.ndarray     # mean per cell, NaN = empty
    hits: np.ndarray            # uint32
    labels: dict[int, list[tuple]] = field(default_factory=dict)  # cell index -> records
    warnings: list[str] = field(default_factory=list)

    def cell_index(self, row: int, col: int) -> int:
        return row * self.width + col

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        col = math.floor(x / self.cell_size) - round(self.origin_x / self.cell_size)
        row = math.floor(y / self.cell_size) - round(self.origin_y / self.cell_size)
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.cell_size,
            self.origin_y + (row + 0.5) * self.cell_size,
        )


def rasterize_partial(points: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE) -> GridPartial:
    """Accumulate one partition's points (n, 4: x, y, z, reflectance)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 4 or len(points) == 0:
        raise EmptyInput("rasterize needs a non-empty (n, 4) point array")
    cols = np.floor(points[:, 0] / cell_size).astype(np.int64)
    rows = np.floor(points[:, 1] / cell_size).astype(np.int64)
    min_row, min_col = int(rows.min()), int(cols.min())
    height = int(rows.max()) - min_row + 1
    width = int(cols.max()) - min_col + 1

    elevation = np.full((height, width), -np.inf)
    refl_sum = np.zeros((height, width))
    hits = np.zeros((height, width), dtype=np.uint32)
    r, c = rows - min_row, cols - min_col
    np.maximum.at(elevation, (r, c), points[:, 2])
    np.add.at(refl_sum, (r, c), np.clip(points[:, 3], 0.0, 1.0))
    np.add.at(hits, (r, c), 1)
    return GridPartial(cell_size, min_row, min_col, elevation, refl_sum, hits)


def merge_partials(a: GridPartial, b: GridPartial) -> GridPartial:
    if a.cell_size != b.cell_size:
        raise ValueError("cell sizes differ")
    min_row = min(a.min_row, b.min_row)
    min_col = min(a.min_col, b.min_col)
    height = max(a.min_row + a.height, b.min_row + b.height) - min_row
    width = max(a.min_col + a.width, b.min_col + b.width) - min_col

    elevation = np.full((height, width), -np.inf)
    refl_sum = np.zeros((height, width))
    hits = np.zeros((height, width), dtype=np.uint32)
    for part in (a, b):
        r0, c0 = part.min_row - min_row, part.min_col - min_col
        window = (slice(r0, r0 + part.height), slice(c0, c0 + part.width))
        np.maximum(elevation[window], part.elevation, out=elevation[window])
        refl_sum[window] += part.refl_sum
        hits[window] += part.hits
    return GridPartial(a.cell_size, min_row, min_col, elevation, refl_sum, hits)


def finalize_partial(partial: GridPartial) -> GridMap:
    empty = partial.hits == 0
    elevation = partial.elevation.copy()
    elevation[empty] = np.nan
    reflectance = np.full(partial.hits.shape, np.nan)
    occupied = ~empty
    reflectance[occupied] = partial.refl_sum[occupied] / partial.hits[occupied]
    return GridMap(
        origin_x=partial.min_col * partial.cell_size,
        origin_y=partial.min_row * partial.cell_size,
        cell_size=partial.cell_size,
        width=partial.width,
        height=partial.height,
        elevation=elevation,
        reflectance=reflectance,
        hits=partial.hits.copy(),
    )


def rasterize(points: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE) -> GridMap:
    return finalize_partial(rasterize_partial(points, cell_size))


def rasterize_partitions(
    partitions: list[np.ndarray], cell_size: float = DEFAULT_CELL_SIZE
) -> GridMap:
    partials = [rasterize_partial(p, cell_size) for p in partitions if len(p)]
    if not partials:
        raise EmptyInput("no points in any partition")
    return finalize_partial(tree_reduce(partials, merge_partials))


# --- semantic labels --------------------------------------------------------------


def _segment_distance(px: np.ndarray, py: np.ndarray, ax, ay, bx, by) -> np.ndarray:
    """Distance from points (px, py) to segment (a, b)."""
    abx, aby = bx - ax, by - ay
    ab_sq = abx * abx + aby * aby
    if ab_sq == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * abx + (py - ay) * aby) / ab_sq, 0.0, 1.0)
    return np.hypot(px - (ax + t * abx), py - (ay + t * aby))


def _cells_near_polyline(grid: GridMap, polyline, radius: float) -> set[int]:
    rows, cols = np.indices((grid.height, grid.width))
    cx = grid.origin_x + (cols + 0.5) * grid.cell_size
    cy = grid.origin_y + (rows + 0.5) * grid.cell_size
    near = np.zeros((grid.height, grid.width), dtype=bool)
    for (ax, ay), (bx, by) in zip(polyline, polyline[1:]):
        near |= _segment_distance(cx, cy, ax, ay, bx, by) <= radius
    return {grid.cell_index(r, c) for r, c in zip(*np.nonzero(near))}


def _validate_polyline(obj, what: str):
    if not isinstance(obj, (list, tuple)) or len(obj) < 2:
        raise MalformedLabelSpec(f"{what}: polyline needs >= 2 vertices")
    for vertex in obj:
        if not isinstance(vertex, (list, tuple)) or len(vertex) != 2:
            raise MalformedLabelSpec(f"{what}: vertex {vertex!r} is not [x, y]")
    return [(float(x), float(y)) for x, y in obj]


def add_labels(grid: GridMap, spec: dict) -> GridMap:
    """Attach semantic labels from a label-spec dict; base layers untouched.

    Spec: {"lanes": [{"id", "width", "polyline"}],
           "reference_lines": [{"polyline"}],
           "signs": [{"x", "y", "kind", "value"?}]}
    Signs outside the grid are clipped with a warning.
    """
    if not isinstance(spec, dict):
        raise MalformedLabelSpec("label spec must be a JSON object")
    labeled = GridMap(
        grid.origin_x, grid.origin_y, grid.cell_size, grid.width, grid.height,
        grid.elevation, grid.reflectance, grid.hits,
        labels={k: list(v) for k, v in grid.labels.items()},
        warnings=list(grid.warnings),
    )

    def attach(cell: int, record: tuple) -> None:
        labeled.labels.setdefault(cell, []).append(record)

    for lane in spec.get("lanes", ()):
        if "id" not in lane or "width" not in lane:
            raise MalformedLabelSpec("lane needs id and width")
        polyline = _validate_polyline(lane.get("polyline"), f"lane {lane['id']}")
        if float(lane["width"]) <= 0:
            raise MalformedLabelSpec(f"lane {lane['id']}: width must be > 0")
        for cell in sorted(_cells_near_polyline(labeled, polyline, float(lane["width"]) / 2.0)):
            attach(cell, ("LANE", int(lane["id"])))

    for line in spec.get("reference_lines", ()):
        polyline = _validate_polyline(line.get("polyline"), "reference line")
        for cell in sorted(_cells_near_polyline(labeled, polyline, labeled.cell_size / 2.0)):
            attach(cell, ("REFERENCE_LINE",))

    for sign in spec.get("signs", ()):
        if "x" not in sign or "y" not in sign or "kind" not in sign:
            raise MalformedLabelSpec("sign needs x, y, kind")
        row, col = labeled.cell_of(float(sign["x"]), float(sign["y"]))
        if not (0 <= row < labeled.height and 0 <= col < labeled.width):
            labeled.warnings.append(
                f"sign {sign['kind']!r} at ({sign['x']}, {sign['y']}) outside map bounds"
            )
            continue
        if sign["kind"] == "speed_limit":
            if "value" not in sign:
                raise MalformedLabelSpec("speed_limit sign needs value")
            attach(labeled.cell_index(row, col), ("SPEED_LIMIT", float(sign["value"])))
        else:
            attach(labeled.cell_index(row, col), ("TRAFFIC_SIGN", str(sign["kind"])))

    return labeled
