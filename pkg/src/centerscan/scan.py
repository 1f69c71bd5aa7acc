"""Region partitioning and scan-order construction for 2-D feature grids.

A grid is tiled into small local regions; each region is serialized into
one or more cell orderings. The center-priority strategy ranks cells by
a radial/axis score so the region center outranks the on-axis cells,
which outrank the corners. Baseline strategies (raster, snake,
bidirectional, cross-scan) are provided for comparison and ignore the
priority parameters entirely.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

Coord = tuple[int, int]


class Strategy(str, Enum):
    CENTER_PRIORITY = "center-priority"
    RASTER = "raster"
    SNAKE = "snake"
    BIDIRECTIONAL = "bidirectional"
    CROSS_SCAN = "cross-scan"


@dataclass(frozen=True)
class PriorityParams:
    """Hyperparameters of the cell-priority score.

    ``alpha * (dist(p, center) + epsilon) ** -beta + gamma * axis_align(p)``
    with ``epsilon`` regularizing the singularity at the exact center and
    ``lambda_decay`` reserved for kernel decay analysis.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    epsilon: float = 0.5
    lambda_decay: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "epsilon", "lambda_decay"):
            if getattr(self, name) <= 0:
                raise ValueError(f"PriorityParams.{name} must be strictly positive")


@dataclass(frozen=True)
class RegionPartition:
    grid_h: int
    grid_w: int
    region_size: int
    regions: tuple[tuple[Coord, ...], ...]


@dataclass(frozen=True)
class ScanPath:
    """Cell orderings for one region.

    Single-direction strategies carry one permutation; bidirectional
    carries two and cross-scan four. Every permutation covers each cell
    of the region exactly once.
    """

    strategy: Strategy
    orders: tuple[tuple[Coord, ...], ...]

    @property
    def order(self) -> tuple[Coord, ...]:
        """Primary (first) direction."""
        return self.orders[0]


def partition(grid_h: int, grid_w: int, region_size: int) -> RegionPartition:
    """Tile the grid into row-major regions; boundary regions may be ragged."""
    if grid_h < 1 or grid_w < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {grid_h}x{grid_w}")
    if region_size not in (1, 2, 3):
        raise ValueError(f"region_size must be one of 1, 2, 3, got {region_size}")
    regions = []
    for r0 in range(0, grid_h, region_size):
        for c0 in range(0, grid_w, region_size):
            cells = tuple(
                (r, c)
                for r in range(r0, min(r0 + region_size, grid_h))
                for c in range(c0, min(c0 + region_size, grid_w))
            )
            regions.append(cells)
    return RegionPartition(grid_h, grid_w, region_size, tuple(regions))


def region_centroid(region) -> tuple[float, float]:
    rs = [r for r, _ in region]
    cs = [c for _, c in region]
    return sum(rs) / len(rs), sum(cs) / len(cs)


def center_cell(region) -> Coord:
    """Member cell nearest the centroid; row-major order breaks ties."""
    cy, cx = region_centroid(region)
    return min(sorted(region), key=lambda p: (p[0] - cy) ** 2 + (p[1] - cx) ** 2)


def priority(p: Coord, region, params: PriorityParams) -> float:
    """Scan priority of cell ``p`` within its region (higher scans earlier)."""
    cells = tuple(region)
    if p not in cells:
        raise ValueError(f"cell {p} is not a member of the region")
    cy, cx = region_centroid(cells)
    dist = math.hypot(p[0] - cy, p[1] - cx)
    center = center_cell(cells)
    axis = 1.0 if (p[0] == center[0] or p[1] == center[1]) else 0.0
    return params.alpha * (dist + params.epsilon) ** (-params.beta) + params.gamma * axis


def _raster(cells):
    return tuple(sorted(cells))


def _snake(cells):
    rows = {}
    for r, c in cells:
        rows.setdefault(r, []).append(c)
    out = []
    for i, r in enumerate(sorted(rows)):
        cols = sorted(rows[r], reverse=(i % 2 == 1))
        out.extend((r, c) for c in cols)
    return tuple(out)


def _column_major(cells):
    return tuple(sorted(cells, key=lambda p: (p[1], p[0])))


def scan_order(region, strategy: Strategy, params: PriorityParams | None = None) -> ScanPath:
    """Build the scan path(s) for one region.

    Center-priority sorts by descending priority (ties row-major), so
    the order reads center, then axis-aligned cells, then corners.
    Baselines never consult ``params``.
    """
    cells = tuple(region)
    if not cells:
        raise ValueError("scan_order: region must be nonempty")
    strategy = Strategy(strategy)
    if strategy is Strategy.CENTER_PRIORITY:
        params = params or PriorityParams()
        order = tuple(sorted(cells, key=lambda p: (-priority(p, cells, params), p)))
        return ScanPath(strategy, (order,))
    if strategy is Strategy.RASTER:
        return ScanPath(strategy, (_raster(cells),))
    if strategy is Strategy.SNAKE:
        return ScanPath(strategy, (_snake(cells),))
    if strategy is Strategy.BIDIRECTIONAL:
        fwd = _raster(cells)
        return ScanPath(strategy, (fwd, fwd[::-1]))
    if strategy is Strategy.CROSS_SCAN:
        fwd = _raster(cells)
        col = _column_major(cells)
        return ScanPath(strategy, (fwd, col, fwd[::-1], col[::-1]))
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class PathListing:
    """Deterministic listing of every region's scan path for one grid."""

    grid_h: int
    grid_w: int
    region_size: int
    strategy: Strategy
    params: PriorityParams
    paths: tuple[ScanPath, ...] = field(default_factory=tuple)


def build_listing(part: RegionPartition, strategy: Strategy, params: PriorityParams | None = None) -> PathListing:
    params = params or PriorityParams()
    paths = tuple(scan_order(region, strategy, params) for region in part.regions)
    return PathListing(part.grid_h, part.grid_w, part.region_size, Strategy(strategy), params, paths)


def serialize_paths(part: RegionPartition, strategy: Strategy, params: PriorityParams | None = None) -> str:
    """Round-trippable text dump of every region's scan path."""
    listing = build_listing(part, strategy, params)
    p = listing.params
    lines = [
        "scan-listing v1",
        f"grid {listing.grid_h}x{listing.grid_w} region-size {listing.region_size} "
        f"strategy {listing.strategy.value}",
        f"params alpha={p.alpha!r} beta={p.beta!r} gamma={p.gamma!r} "
        f"epsilon={p.epsilon!r} lambda={p.lambda_decay!r}",
    ]
    for k, path in enumerate(listing.paths):
        dirs = " | ".join(" ".join(f"({r},{c})" for r, c in order) for order in path.orders)
        lines.append(f"region {k}: {dirs}")
    return "\n".join(lines) + "\n"


_GRID_RE = re.compile(
    r"grid (\d+)x(\d+) region-size (\d+) strategy (\S+)")
_PARAMS_RE = re.compile(
    r"params alpha=(\S+) beta=(\S+) gamma=(\S+) epsilon=(\S+) lambda=(\S+)")
_CELL_RE = re.compile(r"\((\d+),(\d+)\)")


def parse_paths(text: str) -> PathListing:
    """Inverse of :func:`serialize_paths`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "scan-listing v1":
        raise ValueError("parse_paths: missing 'scan-listing v1' header")
    m = _GRID_RE.fullmatch(lines[1])
    if not m:
        raise ValueError(f"parse_paths: bad grid line {lines[1]!r}")
    grid_h, grid_w, region_size = int(m.group(1)), int(m.group(2)), int(m.group(3))
    strategy = Strategy(m.group(4))
    pm = _PARAMS_RE.fullmatch(lines[2])
    if not pm:
        raise ValueError(f"parse_paths: bad params line {lines[2]!r}")
    params = PriorityParams(*(float(v) for v in pm.groups()))
    paths = []
    for ln in lines[3:]:
        _, _, body = ln.partition(": ")
        orders = tuple(
            tuple((int(r), int(c)) for r, c in _CELL_RE.findall(chunk))
            for chunk in body.split(" | ")
        )
        paths.append(ScanPath(strategy, orders))
    return PathListing(grid_h, grid_w, region_size, strategy, params, tuple(paths))
