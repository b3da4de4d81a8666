"""
Source trajectories: navigation at walkable height, constant-speed
parameterization, RIR sampling positions and placement-distance checks.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from acoustics import kernels
from acoustics.scene import Scene, as_vec3, segment_crossings
from core.errors import DomainError, UnreachableError, ValidationError

logger = logging.getLogger("sonicforge.trajectory")

DEFAULT_CELL = 0.25
DEFAULT_CLEARANCE_HALF_HEIGHT = 0.5
MIN_SEGMENT = 1e-9

_grid_lock = threading.Lock()


@dataclass
class Trajectory:
    """Polyline of source positions; duration is None until with_duration."""

    waypoints: np.ndarray
    duration: Optional[float] = None
    total_length: float = field(init=False)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if len(self.waypoints) < 2:
            raise ValidationError("trajectory needs at least 2 waypoints")
        if not np.all(np.isfinite(self.waypoints)):
            raise ValidationError("trajectory waypoints must be finite")
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        if np.any(seg <= MIN_SEGMENT):
            raise ValidationError("consecutive waypoints must be distinct")
        if self.duration is not None and self.duration <= 0:
            raise ValidationError("duration must be positive")
        self.total_length = float(seg.sum())

    @property
    def cumulative(self) -> np.ndarray:
        """Arc length at each waypoint."""
        seg = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def speed(self) -> float:
        if self.duration is None:
            raise DomainError("trajectory has no duration")
        return self.total_length / self.duration

    def point_at_arc(self, s: float) -> np.ndarray:
        """Position at arc length s, clamped to the path."""
        cum = self.cumulative
        s = min(max(float(s), 0.0), cum[-1])
        k = int(np.searchsorted(cum, s, side="right")) - 1
        k = min(max(k, 0), len(cum) - 2)
        frac = (s - cum[k]) / (cum[k + 1] - cum[k])
        return self.waypoints[k] + frac * (self.waypoints[k + 1] - self.waypoints[k])

    def to_dict(self) -> Dict:
        return {
            "waypoints": self.waypoints.tolist(),
            "total_length": self.total_length,
            "duration": self.duration,
        }


class RirPosition(NamedTuple):
    position: np.ndarray
    arc_length: float


@dataclass
class PlacementReport:
    """Result of validate_placement; falsy when any constraint is violated."""

    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


# ----------------------------------------------------------------------
# Occupancy grid
# ----------------------------------------------------------------------

@dataclass
class OccupancyGrid:
    """Horizontal (x, z) grid of blocked cells at one height."""

    origin: np.ndarray        # (x, z) of the grid corner
    cell: float
    height: float
    blocked: np.ndarray       # (nx, nz) bool

    @property
    def shape(self) -> Tuple[int, int]:
        return self.blocked.shape

    def cell_of(self, point: Sequence[float]) -> Tuple[int, int]:
        p = np.asarray(point, dtype=float)
        i = int(np.floor((p[0] - self.origin[0]) / self.cell))
        j = int(np.floor((p[2] - self.origin[1]) / self.cell))
        nx, nz = self.shape
        return min(max(i, 0), nx - 1), min(max(j, 0), nz - 1)

    def center(self, i: int, j: int) -> np.ndarray:
        return np.array([
            self.origin[0] + (i + 0.5) * self.cell,
            self.height,
            self.origin[1] + (j + 0.5) * self.cell,
        ])

    def free_cells(self) -> np.ndarray:
        """(K, 2) indices of unblocked cells in row-major order."""
        return np.argwhere(~self.blocked)


def _ray_blocked(scene: Scene, origin: np.ndarray, direction: Tuple[float, float, float], length: float) -> bool:
    _, tri = kernels.closest_hit(origin[0], origin[1], origin[2],
                                 direction[0], direction[1], direction[2], length,
                                 *scene.geometry_arrays())
    return tri >= 0


def build_grid(scene: Scene, height: float, cell: float = DEFAULT_CELL,
               clearance_half_height: float = DEFAULT_CLEARANCE_HALF_HEIGHT) -> OccupancyGrid:
    """Block cells whose vertical clearance ray or half-cell horizontal rays meet a surface."""
    origin = np.array([scene.bounds_min[0], scene.bounds_min[2]])
    extent = np.array([scene.bounds_max[0], scene.bounds_max[2]]) - origin
    nx = max(1, int(math.ceil(extent[0] / cell - 1e-9)))
    nz = max(1, int(math.ceil(extent[1] / cell - 1e-9)))
    grid = OccupancyGrid(origin=origin, cell=cell, height=height, blocked=np.zeros((nx, nz), dtype=bool))
    reach = cell / 2.0 + 1e-6
    horizontal = ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0))
    for i in range(nx):
        for j in range(nz):
            c = grid.center(i, j)
            bottom = c - np.array([0.0, clearance_half_height, 0.0])
            if _ray_blocked(scene, bottom, (0.0, 1.0, 0.0), 2.0 * clearance_half_height):
                grid.blocked[i, j] = True
                continue
            grid.blocked[i, j] = any(_ray_blocked(scene, c, d, reach) for d in horizontal)
    logger.debug("Occupancy grid %dx%d at %.2f m: %d blocked", nx, nz, height, int(grid.blocked.sum()))
    return grid


def occupancy_grid(scene: Scene, height: Optional[float] = None, cell: float = DEFAULT_CELL,
                   clearance_half_height: float = DEFAULT_CLEARANCE_HALF_HEIGHT) -> OccupancyGrid:
    """Cached grid per (scene, height, cell, clearance)."""
    height = scene.walkable_height if height is None else float(height)
    key = (height, cell, clearance_half_height)
    with _grid_lock:
        cache = scene.__dict__.setdefault("_grid_cache", {})
        grid = cache.get(key)
    if grid is None:
        grid = build_grid(scene, height, cell, clearance_half_height)
        with _grid_lock:
            cache[key] = grid
    return grid


def _grid_graph(blocked: np.ndarray) -> csr_matrix:
    """8-connected graph over free cells; diagonals need both orthogonal neighbours free."""
    nx, nz = blocked.shape
    free = ~blocked
    rows, cols, weights = [], [], []
    steps = [(1, 0, 1.0), (0, 1, 1.0), (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0))]
    for di, dj, w in steps:
        for i in range(nx):
            for j in range(nz):
                a, b = i + di, j + dj
                if not (0 <= a < nx and 0 <= b < nz):
                    continue
                if not (free[i, j] and free[a, b]):
                    continue
                if di and dj and not (free[a, j] and free[i, b]):
                    continue
                u, v = i * nz + j, a * nz + b
                rows.extend((u, v))
                cols.extend((v, u))
                weights.extend((w, w))
    n = nx * nz
    return csr_matrix((weights, (rows, cols)), shape=(n, n))


def _segment_clear(scene: Scene, a: np.ndarray, b: np.ndarray) -> bool:
    if np.linalg.norm(b - a) <= MIN_SEGMENT:
        return True
    return not segment_crossings(scene, a, b)


def _smooth(scene: Scene, points: List[np.ndarray]) -> List[np.ndarray]:
    """Greedy line-of-sight shortcutting."""
    out = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = len(points) - 1
        while j > i + 1 and not _segment_clear(scene, points[i], points[j]):
            j -= 1
        out.append(points[j])
        i = j
    return out


def plan_path(scene: Scene, start: Sequence[float], end: Sequence[float],
              cell: float = DEFAULT_CELL, clearance_half_height: float = DEFAULT_CLEARANCE_HALF_HEIGHT) -> Trajectory:
    """Straight segment when unobstructed, otherwise a smoothed grid shortest path."""
    a = as_vec3(start, "start")
    b = as_vec3(end, "end")
    if np.linalg.norm(b - a) <= MIN_SEGMENT:
        raise ValidationError("start and end coincide")
    if not (scene.contains(a) and scene.contains(b)):
        raise ValidationError("path endpoints must lie inside the scene")
    if _segment_clear(scene, a, b):
        return Trajectory(np.vstack([a, b]))

    grid = occupancy_grid(scene, a[1], cell, clearance_half_height)
    blocked = grid.blocked.copy()
    s_cell = grid.cell_of(a)
    e_cell = grid.cell_of(b)
    blocked[s_cell] = False
    blocked[e_cell] = False
    nz = blocked.shape[1]
    s_idx = s_cell[0] * nz + s_cell[1]
    e_idx = e_cell[0] * nz + e_cell[1]

    dist, pred = dijkstra(_grid_graph(blocked), directed=False, indices=s_idx, return_predecessors=True)
    if not np.isfinite(dist[e_idx]):
        raise UnreachableError(f"no path from {a.tolist()} to {b.tolist()}")

    chain = []
    node = e_idx
    while node != s_idx and node >= 0:
        chain.append(node)
        node = pred[node]
    chain.reverse()
    points = [a]
    for node in chain[:-1]:
        c = grid.center(node // nz, node % nz)
        c[1] = a[1]
        points.append(c)
    points.append(b)
    smoothed = _smooth(scene, points)
    deduped = [smoothed[0]]
    for p in smoothed[1:]:
        if np.linalg.norm(p - deduped[-1]) > MIN_SEGMENT:
            deduped.append(p)
    if len(deduped) < 2:
        deduped = [a, b]
    traj = Trajectory(np.vstack(deduped))
    logger.debug("Planned path with %d waypoints, %.2f m", len(deduped), traj.total_length)
    return traj


# ----------------------------------------------------------------------
# Parameterization
# ----------------------------------------------------------------------

def with_duration(traj: Trajectory, duration: float) -> Trajectory:
    """Same path traversed at constant speed over `duration` seconds."""
    if duration <= 0:
        raise ValidationError("duration must be positive")
    return Trajectory(traj.waypoints.copy(), duration=float(duration))


def position_at(traj: Trajectory, t: float) -> np.ndarray:
    """Arc-length-uniform position at time t."""
    if traj.duration is None:
        raise DomainError("trajectory has no duration")
    if t < 0.0 or t > traj.duration:
        raise DomainError(f"t={t} outside [0, {traj.duration}]")
    return traj.point_at_arc(traj.total_length * t / traj.duration)


def sample_rir_positions(traj: Trajectory, spacing: float) -> List[RirPosition]:
    """Positions every `spacing` metres of arc length plus the endpoint."""
    if spacing <= 0:
        raise ValidationError("spacing must be positive")
    length = traj.total_length
    n = int(math.floor(length / spacing + 1e-9))
    arcs = [k * spacing for k in range(n + 1)]
    if length - arcs[-1] > 1e-9:
        arcs.append(length)
    else:
        arcs[-1] = length
    if len(arcs) < 2:
        arcs = [0.0, length]
    return [RirPosition(traj.point_at_arc(s), float(s)) for s in arcs]


def validate_placement(
    mic: Sequence[float],
    src_start: Sequence[float],
    src_end: Sequence[float],
    noise: Sequence[Sequence[float]] = (),
    min_distance: float = 1.0,
    max_distance: float = 8.0,
) -> PlacementReport:
    """Check every 1-8 m distance constraint and report each violated pair."""
    m = as_vec3(mic, "mic")
    pairs = [
        ("mic-start", m, as_vec3(src_start, "src_start")),
        ("mic-end", m, as_vec3(src_end, "src_end")),
        ("start-end", as_vec3(src_start, "src_start"), as_vec3(src_end, "src_end")),
    ]
    for k, p in enumerate(noise):
        pairs.append((f"mic-noise{k}", m, as_vec3(p, "noise")))

    report = PlacementReport()
    for label, a, b in pairs:
        d = float(np.linalg.norm(a - b))
        if d < min_distance:
            report.violations.append(f"{label} below {min_distance:g} m ({d:.3f} m)")
        elif d > max_distance:
            report.violations.append(f"{label} above {max_distance:g} m ({d:.3f} m)")
    return report
