"""
Scene loading and geometric queries.

A Scene is an immutable triangle mesh with one material per surface and a
flat-array bounding-volume hierarchy built once at construction. Queries
delegate to the compiled kernels in `acoustics.kernels`.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from acoustics import kernels
from core.config import NUM_BANDS
from core.errors import ConfigurationError, FormatError, ValidationError

logger = logging.getLogger("sonicforge.scene")

Vec3 = Tuple[float, float, float]

DEFAULT_MATERIAL = "default"
LEAF_SIZE = 4
AREA_EPSILON = 1e-12
# Hits closer than this along one segment are the same crossing (shared edges)
COINCIDENT_HIT = 1e-7


def as_vec3(point: Sequence[float], name: str = "point") -> np.ndarray:
    """Coerce to a finite float64 3-vector."""
    arr = np.asarray(point, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValidationError(f"{name} must have 3 components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite components: {arr.tolist()}")
    return arr


@dataclass(frozen=True)
class BandCoefficients:
    """Per-band absorption, scattering and transmission coefficients."""

    absorption: Tuple[float, ...]
    scattering: Tuple[float, ...] = (0.0,) * NUM_BANDS
    transmission: Tuple[float, ...] = (0.0,) * NUM_BANDS

    def __post_init__(self):
        for label in ("absorption", "scattering", "transmission"):
            values = getattr(self, label)
            if len(values) != NUM_BANDS:
                raise ValidationError(f"{label} needs {NUM_BANDS} bands, got {len(values)}")
            for v in values:
                if not (0.0 <= v <= 1.0):
                    raise ValidationError(f"{label} coefficient {v} outside [0, 1]")
        for a, t in zip(self.absorption, self.transmission):
            if a + t > 1.0 + 1e-12:
                raise ValidationError(f"absorption + transmission exceeds 1 ({a} + {t})")

    @classmethod
    def flat(cls, absorption: float, scattering: float = 0.0,
             transmission: float = 0.0) -> "BandCoefficients":
        return cls(
            absorption=(float(absorption),) * NUM_BANDS,
            scattering=(float(scattering),) * NUM_BANDS,
            transmission=(float(transmission),) * NUM_BANDS,
        )


@dataclass(frozen=True)
class Material:
    name: str
    coefficients: BandCoefficients


class Surface(NamedTuple):
    vertices: Tuple[int, int, int]
    material_id: int


class Hit(NamedTuple):
    distance: float
    surface_id: int
    normal: Tuple[float, float, float]


@dataclass
class BVH:
    """Flat bounding-volume hierarchy arrays (see acoustics.kernels)."""

    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    tri_order: np.ndarray

    def arrays(self) -> tuple:
        return (self.node_min, self.node_max, self.node_left, self.node_right,
                self.node_start, self.node_count, self.tri_order)

    @property
    def n_nodes(self) -> int:
        return len(self.node_left)


def build_bvh(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> BVH:
    """Median-split BVH over triangle centroids, leaves hold at most LEAF_SIZE triangles."""
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    centroids = (v0 + v1 + v2) / 3.0
    n_tri = len(v0)

    node_min: List[np.ndarray] = []
    node_max: List[np.ndarray] = []
    node_left: List[int] = []
    node_right: List[int] = []
    node_start: List[int] = []
    node_count: List[int] = []
    order: List[int] = []

    def new_node(idx: np.ndarray) -> int:
        node_min.append(tri_min[idx].min(axis=0))
        node_max.append(tri_max[idx].max(axis=0))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_left) - 1

    stack = [(new_node(np.arange(n_tri)), np.arange(n_tri))]
    while stack:
        node, idx = stack.pop()
        if len(idx) <= LEAF_SIZE:
            node_start[node] = len(order)
            node_count[node] = len(idx)
            order.extend(idx.tolist())
            continue
        extent = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
        axis = int(np.argmax(extent))
        # stable sort keeps the build deterministic for equal centroids
        sorted_idx = idx[np.argsort(centroids[idx, axis], kind="stable")]
        mid = len(sorted_idx) // 2
        left_idx, right_idx = sorted_idx[:mid], sorted_idx[mid:]
        left = new_node(left_idx)
        right = new_node(right_idx)
        node_left[node] = left
        node_right[node] = right
        stack.append((right, right_idx))
        stack.append((left, left_idx))

    return BVH(
        node_min=np.array(node_min, dtype=np.float64),
        node_max=np.array(node_max, dtype=np.float64),
        node_left=np.array(node_left, dtype=np.int64),
        node_right=np.array(node_right, dtype=np.int64),
        node_start=np.array(node_start, dtype=np.int64),
        node_count=np.array(node_count, dtype=np.int64),
        tri_order=np.array(order, dtype=np.int64),
    )


class Scene:
    """Immutable triangle-mesh room with per-surface materials and a BVH."""

    def __init__(
        self,
        vertices: np.ndarray,
        triangles: np.ndarray,
        material_ids: np.ndarray,
        materials: List[Material],
        walkable_height: float = 1.5,
    ):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        material_ids = np.ascontiguousarray(material_ids, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValidationError("vertices must be an (N, 3) array")
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("vertices contain non-finite values")
        if len(triangles) == 0:
            raise ValidationError("scene has no surfaces")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise ValidationError("triangle vertex index out of range")
        if material_ids.min() < 0 or material_ids.max() >= len(materials):
            raise ValidationError("surface references an unknown material")

        self.vertices = vertices
        self.triangles = triangles
        self.material_ids = material_ids
        self.materials = list(materials)
        self.walkable_height = float(walkable_height)

        v0 = vertices[triangles[:, 0]]
        v1 = vertices[triangles[:, 1]]
        v2 = vertices[triangles[:, 2]]
        self.tri_v0 = np.ascontiguousarray(v0)
        self.tri_e1 = np.ascontiguousarray(v1 - v0)
        self.tri_e2 = np.ascontiguousarray(v2 - v0)
        cross = np.cross(self.tri_e1, self.tri_e2)
        area2 = np.linalg.norm(cross, axis=1)
        degenerate = np.flatnonzero(area2 <= AREA_EPSILON)
        if len(degenerate):
            raise ValidationError(f"surface {int(degenerate[0])} has zero area")
        self.tri_normal = np.ascontiguousarray(cross / area2[:, None])
        self.tri_area = 0.5 * area2

        coeffs = [m.coefficients for m in self.materials]
        absorption = np.array([c.absorption for c in coeffs], dtype=np.float64)
        scattering = np.array([c.scattering for c in coeffs], dtype=np.float64)
        transmission = np.array([c.transmission for c in coeffs], dtype=np.float64)
        self.tri_absorption = np.ascontiguousarray(absorption[material_ids])
        self.tri_scatter = np.ascontiguousarray(scattering[material_ids].mean(axis=1))
        self.tri_transmission = np.ascontiguousarray(transmission[material_ids])

        self.bounds_min = vertices[np.unique(triangles)].min(axis=0)
        self.bounds_max = vertices[np.unique(triangles)].max(axis=0)
        self.bvh = build_bvh(v0, v1, v2)
        logger.debug(
            "Scene built: %d surfaces, %d materials, %d BVH nodes",
            len(triangles), len(materials), self.bvh.n_nodes,
        )

    @property
    def surfaces(self) -> List[Surface]:
        return [
            Surface(tuple(int(i) for i in tri), int(mid))
            for tri, mid in zip(self.triangles, self.material_ids)
        ]

    @property
    def n_surfaces(self) -> int:
        return len(self.triangles)

    def material_of(self, surface_id: int) -> Material:
        return self.materials[int(self.material_ids[surface_id])]

    def geometry_arrays(self) -> tuple:
        """BVH and triangle arrays in kernel argument order."""
        return self.bvh.arrays() + (self.tri_v0, self.tri_e1, self.tri_e2)

    def contains(self, point: Sequence[float]) -> bool:
        """True if point is strictly inside the scene's bounding box."""
        p = as_vec3(point)
        return bool(np.all(p > self.bounds_min) and np.all(p < self.bounds_max))

    def box_dimensions(self) -> Optional[np.ndarray]:
        """Room dimensions if the mesh is an axis-aligned box, else None."""
        dims = self.bounds_max - self.bounds_min
        if np.any(dims <= 0):
            return None
        axis_aligned = np.isclose(np.abs(self.tri_normal).max(axis=1), 1.0, atol=1e-9)
        if not np.all(axis_aligned):
            return None
        used = self.vertices[np.unique(self.triangles)]
        on_face = np.isclose(used, self.bounds_min, atol=1e-9) | np.isclose(used, self.bounds_max, atol=1e-9)
        if not np.all(on_face.any(axis=1)):
            return None
        total_area = float(self.tri_area.sum())
        box_area = 2.0 * (dims[0] * dims[1] + dims[1] * dims[2] + dims[0] * dims[2])
        if not math.isclose(total_area, box_area, rel_tol=1e-6):
            return None
        return dims


def ray_intersect(scene: Scene, origin: Sequence[float], direction: Sequence[float],
                  t_max: float = math.inf) -> Optional[Hit]:
    """Nearest surface hit along a unit direction within t_max."""
    o = as_vec3(origin, "origin")
    d = as_vec3(direction, "direction")
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
        raise ValidationError("direction must be a unit vector")
    limit = float(t_max) if math.isfinite(t_max) else 1e30
    t, tri = kernels.closest_hit(o[0], o[1], o[2], d[0], d[1], d[2], limit,
                                 *scene.geometry_arrays())
    if tri < 0:
        return None
    normal = scene.tri_normal[tri]
    if float(np.dot(normal, d)) > 0.0:
        normal = -normal
    return Hit(float(t), int(tri), tuple(float(x) for x in normal))


def segment_crossings(scene: Scene, a: Sequence[float], b: Sequence[float]) -> List[Tuple[float, int]]:
    """Surfaces crossed by segment a->b as sorted (distance, surface_id), shared edges merged."""
    a = as_vec3(a, "a")
    b = as_vec3(b, "b")
    delta = b - a
    length = float(np.linalg.norm(delta))
    if length <= 0.0:
        raise ValidationError("segment endpoints coincide")
    d = delta / length
    out_t = np.empty(scene.n_surfaces, dtype=np.float64)
    out_tri = np.empty(scene.n_surfaces, dtype=np.int64)
    count = kernels.segment_hits(a[0], a[1], a[2], d[0], d[1], d[2], length,
                                 *scene.geometry_arrays(), out_t, out_tri)
    hits = sorted(zip(out_t[:count].tolist(), out_tri[:count].tolist()))
    merged: List[Tuple[float, int]] = []
    for t, tri in hits:
        if merged and t - merged[-1][0] < COINCIDENT_HIT:
            continue
        merged.append((t, tri))
    return merged


def occlusion_factor(scene: Scene, a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """Per-band product of transmission coefficients of surfaces between a and b."""
    factor = np.ones(NUM_BANDS)
    for _, tri in segment_crossings(scene, a, b):
        factor = factor * scene.tri_transmission[tri]
    return factor


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------

def load_materials(path: Path) -> Dict[str, BandCoefficients]:
    """Read a materials JSON table; a "default" entry is required."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Materials file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=str(path), line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise FormatError("materials file must contain a JSON object", path=str(path))
    table: Dict[str, BandCoefficients] = {}
    for name, spec in raw.items():
        if not isinstance(spec, dict) or "absorption" not in spec:
            raise ConfigurationError(f"material '{name}' needs an 'absorption' list")
        zeros = [0.0] * NUM_BANDS
        table[name] = BandCoefficients(
            absorption=tuple(float(x) for x in spec["absorption"]),
            scattering=tuple(float(x) for x in spec.get("scattering", zeros)),
            transmission=tuple(float(x) for x in spec.get("transmission", zeros)),
        )
    if DEFAULT_MATERIAL not in table:
        raise ConfigurationError(f"materials file {path} has no '{DEFAULT_MATERIAL}' entry")
    return table


def _obj_index(token: str, n_vertices: int, path: Path, line_no: int) -> int:
    try:
        idx = int(token.split("/")[0])
    except ValueError as exc:
        raise FormatError(f"bad face index '{token}'", path=str(path), line=line_no) from exc
    idx = idx - 1 if idx > 0 else n_vertices + idx
    if idx < 0 or idx >= n_vertices:
        raise FormatError(f"face index {token} out of range", path=str(path), line=line_no)
    return idx


def parse_obj(path: Path) -> Tuple[np.ndarray, np.ndarray, List[Optional[str]], List[bool]]:
    """Parse the v/f/usemtl/g subset of OBJ.

    Returns (vertices, triangles, binding name per triangle, strict flag per
    triangle). Polygons are fan-triangulated. `usemtl` names must exist in the
    materials table; `g` names bind only when a material of that name exists.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Mesh file not found: {path}")
    vertices: List[List[float]] = []
    triangles: List[Tuple[int, int, int]] = []
    names: List[Optional[str]] = []
    strict: List[bool] = []
    current: Optional[str] = None
    current_strict = False

    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw_line in enumerate(f, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError("vertex needs 3 coordinates", path=str(path), line=line_no)
                try:
                    xyz = [float(p) for p in parts[1:4]]
                except ValueError as exc:
                    raise FormatError(f"bad vertex: {line}", path=str(path), line=line_no) from exc
                if not all(math.isfinite(c) for c in xyz):
                    raise ValidationError(f"{path}, line {line_no}: non-finite vertex {xyz}")
                vertices.append(xyz)
            elif tag == "f":
                if len(parts) < 4:
                    raise FormatError("face needs at least 3 vertices", path=str(path), line=line_no)
                idx = [_obj_index(p, len(vertices), path, line_no) for p in parts[1:]]
                for k in range(1, len(idx) - 1):
                    triangles.append((idx[0], idx[k], idx[k + 1]))
                    names.append(current)
                    strict.append(current_strict)
            elif tag == "usemtl":
                current = parts[1] if len(parts) > 1 else None
                current_strict = True
            elif tag in ("g", "o"):
                if not (current_strict and current):
                    current = parts[1] if len(parts) > 1 else None
                    current_strict = False
            # vt / vn / s / mtllib records are ignored

    if not triangles:
        raise FormatError("mesh has no faces", path=str(path))
    return np.array(vertices, dtype=np.float64), np.array(triangles, dtype=np.int64), names, strict


def bind_materials(
    names: List[Optional[str]], strict: List[bool], table: Dict[str, BandCoefficients]
) -> Tuple[np.ndarray, List[Material]]:
    """Map per-triangle binding names to material indices."""
    materials: List[Material] = [Material(DEFAULT_MATERIAL, table[DEFAULT_MATERIAL])]
    index = {DEFAULT_MATERIAL: 0}
    ids = np.zeros(len(names), dtype=np.int64)
    for i, (name, is_strict) in enumerate(zip(names, strict)):
        if name is None or (not is_strict and name not in table):
            key = DEFAULT_MATERIAL
        elif name not in table:
            raise ConfigurationError(f"mesh references material '{name}' missing from materials file")
        else:
            key = name
        if key not in index:
            index[key] = len(materials)
            materials.append(Material(key, table[key]))
        ids[i] = index[key]
    return ids, materials


def load_scene(mesh_path: Path, materials_path: Path, walkable_height: float = 1.5) -> Scene:
    """Load an OBJ mesh and bind its surfaces to a materials table."""
    table = load_materials(materials_path)
    vertices, triangles, names, strict = parse_obj(mesh_path)
    ids, materials = bind_materials(names, strict, table)
    scene = Scene(vertices, triangles, ids, materials, walkable_height=walkable_height)
    logger.info("Loaded scene %s: %d surfaces", Path(mesh_path).name, scene.n_surfaces)
    return scene


# ----------------------------------------------------------------------
# Programmatic geometry
# ----------------------------------------------------------------------

def box_mesh(dims: Sequence[float], origin: Sequence[float] = (0.0, 0.0, 0.0)) -> Tuple[np.ndarray, np.ndarray]:
    """Vertices and 12 triangles of an axis-aligned box."""
    lx, ly, lz = (float(v) for v in dims)
    ox, oy, oz = (float(v) for v in origin)
    vertices = np.array([
        [ox, oy, oz], [ox + lx, oy, oz], [ox + lx, oy + ly, oz], [ox, oy + ly, oz],
        [ox, oy, oz + lz], [ox + lx, oy, oz + lz], [ox + lx, oy + ly, oz + lz], [ox, oy + ly, oz + lz],
    ])
    quads = [
        (0, 3, 2, 1), (4, 5, 6, 7),  # z faces
        (0, 1, 5, 4), (3, 7, 6, 2),  # y faces
        (0, 4, 7, 3), (1, 2, 6, 5),  # x faces
    ]
    triangles = []
    for a, b, c, d in quads:
        triangles.append((a, b, c))
        triangles.append((a, c, d))
    return vertices, np.array(triangles, dtype=np.int64)


def panel_mesh(center: Sequence[float], axis: int, size: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Two-triangle rectangle perpendicular to `axis`, spanning `size` on the other two axes."""
    c = as_vec3(center, "center")
    u_axis, v_axis = [k for k in range(3) if k != axis]
    hu, hv = float(size[0]) / 2.0, float(size[1]) / 2.0
    corners = []
    for du, dv in ((-hu, -hv), (hu, -hv), (hu, hv), (-hu, hv)):
        p = c.copy()
        p[u_axis] += du
        p[v_axis] += dv
        corners.append(p)
    return np.array(corners), np.array([(0, 1, 2), (0, 2, 3)], dtype=np.int64)


@dataclass
class SceneBuilder:
    """Accumulates meshes with named materials into a Scene."""

    walkable_height: float = 1.5
    materials: Dict[str, BandCoefficients] = field(default_factory=dict)
    _vertices: List[np.ndarray] = field(default_factory=list)
    _triangles: List[np.ndarray] = field(default_factory=list)
    _names: List[str] = field(default_factory=list)

    def add(self, vertices: np.ndarray, triangles: np.ndarray, material: str,
            coefficients: Optional[BandCoefficients] = None) -> "SceneBuilder":
        if coefficients is not None:
            self.materials[material] = coefficients
        if material not in self.materials:
            raise ConfigurationError(f"material '{material}' not registered")
        offset = sum(len(v) for v in self._vertices)
        self._vertices.append(np.asarray(vertices, dtype=float))
        self._triangles.append(np.asarray(triangles, dtype=np.int64) + offset)
        self._names.extend([material] * len(triangles))
        return self

    def build(self) -> Scene:
        if DEFAULT_MATERIAL not in self.materials:
            first = self._names[0] if self._names else None
            if first is None:
                raise ConfigurationError("no geometry added")
            self.materials[DEFAULT_MATERIAL] = self.materials[first]
        ids, materials = bind_materials(self._names, [True] * len(self._names), self.materials)
        return Scene(
            np.vstack(self._vertices), np.vstack(self._triangles), ids, materials,
            walkable_height=self.walkable_height,
        )


def shoebox_scene(dims: Sequence[float], coefficients: BandCoefficients,
                  walkable_height: float = 1.5) -> Scene:
    """Axis-aligned box room with a single material, corner at the origin."""
    vertices, triangles = box_mesh(dims)
    return SceneBuilder(walkable_height=walkable_height).add(
        vertices, triangles, DEFAULT_MATERIAL, coefficients
    ).build()
