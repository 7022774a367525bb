"""Untextured city models: procedural synthesis, mesh file I/O, and
footprint containment queries.

A scene is a triangle mesh of building walls and rooftops (no ground plane,
no bottom faces) plus one 2D footprint polygon per building. 1 unit = 1 meter.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ConfigurationError, DataIntegrityError, EmptyModelError, MeshParseError

WALL = 0
ROOF = 1
_KIND_NAMES = {WALL: "wall", ROOF: "roof"}
_KIND_IDS = {v: k for k, v in _KIND_NAMES.items()}


@dataclass
class Footprint:
    """Closed 2D outline of one building: CCW polygon (K, 2), height in meters."""

    polygon: np.ndarray
    height: float
    building_id: int

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=np.float64)
        if self.polygon.ndim != 2 or self.polygon.shape[1] != 2 or len(self.polygon) < 3:
            raise DataIntegrityError(
                f"footprint {self.building_id}: polygon must be (K>=3, 2), "
                f"got shape {self.polygon.shape}"
            )
        if self.height <= 0:
            raise DataIntegrityError(
                f"footprint {self.building_id}: height must be > 0, got {self.height}"
            )
        self.polygon.setflags(write=False)

    def bbox(self):
        return (
            self.polygon[:, 0].min(),
            self.polygon[:, 1].min(),
            self.polygon[:, 0].max(),
            self.polygon[:, 1].max(),
        )


@dataclass(eq=False)
class SceneModel:
    """Immutable triangle mesh of a city area.

    vertices:     (N, 3) float64, meters
    triangles:    (M, 3) int32 vertex indices
    tri_building: (M,) int32 building id per triangle
    tri_kind:     (M,) uint8, WALL or ROOF
    footprints:   list of Footprint, one per building
    bounds:       (x0, y0, x1, y1) axis-aligned xy extent
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_building: np.ndarray
    tri_kind: np.ndarray
    footprints: list
    bounds: tuple
    _edge_table: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        self.tri_building = np.ascontiguousarray(self.tri_building, dtype=np.int32)
        self.tri_kind = np.ascontiguousarray(self.tri_kind, dtype=np.uint8)
        for arr in (self.vertices, self.triangles, self.tri_building, self.tri_kind):
            arr.setflags(write=False)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def validate(self):
        """Check all structural invariants; raises DataIntegrityError on violation."""
        if len(self.triangles) == 0:
            raise EmptyModelError("scene contains no triangles")
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= len(self.vertices):
            raise DataIntegrityError("triangle references a vertex index out of range")
        known = {fp.building_id for fp in self.footprints}
        missing = set(np.unique(self.tri_building)) - known
        if missing:
            raise DataIntegrityError(f"triangles reference unknown building ids {sorted(missing)}")
        x0, y0, x1, y1 = self.bounds
        xy = self.vertices[:, :2]
        if (xy[:, 0].min() < x0 - 1e-9 or xy[:, 0].max() > x1 + 1e-9
                or xy[:, 1].min() < y0 - 1e-9 or xy[:, 1].max() > y1 + 1e-9):
            raise DataIntegrityError("bounds do not contain all vertices")
        for fp in self.footprints:
            if not _polygon_is_simple(fp.polygon):
                raise DataIntegrityError(f"footprint {fp.building_id} self-intersects")
        return self


@dataclass(frozen=True)
class SynthCityConfig:
    """Parameters of the procedural street-grid city."""

    extent_x: float = 200.0
    extent_y: float = 200.0
    block: float = 40.0
    street: float = 10.0
    height_min: float = 8.0
    height_max: float = 24.0
    jitter: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.street <= 0:
            raise ConfigurationError(f"street width must be > 0, got {self.street}")
        if self.block <= 0:
            raise ConfigurationError(f"block size must be > 0, got {self.block}")
        if self.height_min <= 0 or self.height_max < self.height_min:
            raise ConfigurationError(
                f"invalid height range [{self.height_min}, {self.height_max}]"
            )
        if not 0.0 <= self.jitter < 1.0:
            raise ConfigurationError(f"jitter fraction must be in [0, 1), got {self.jitter}")


def synth_city(config: SynthCityConfig) -> SceneModel:
    """Deterministic procedural city: one extruded box per street-grid block.

    Blocks tile from the origin; a block fits every (block + street) meters,
    so floor((extent + street) / (block + street)) blocks per axis.
    """
    pitch = config.block + config.street
    nx = int(math.floor((config.extent_x + config.street) / pitch + 1e-9))
    ny = int(math.floor((config.extent_y + config.street) / pitch + 1e-9))
    if nx < 1 or ny < 1:
        raise ConfigurationError(
            f"extent {config.extent_x} x {config.extent_y} too small for one "
            f"{config.block} m block"
        )

    rng = np.random.default_rng(config.seed)
    vertices = []
    triangles = []
    tri_building = []
    tri_kind = []
    footprints = []

    building_id = 0
    for i in range(nx):
        for j in range(ny):
            bx0, by0 = i * pitch, j * pitch
            # insets (left, right, bottom, top), capped at block/4 so the
            # footprint never collapses
            l, r, b, t = rng.uniform(0.0, config.jitter * config.block / 4.0, size=4)
            height = rng.uniform(config.height_min, config.height_max)
            x0, x1 = bx0 + l, bx0 + config.block - r
            y0, y1 = by0 + b, by0 + config.block - t
            corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])  # CCW

            base = len(vertices)
            for cx, cy in corners:
                vertices.append((cx, cy, 0.0))
            for cx, cy in corners:
                vertices.append((cx, cy, height))

            # walls: outward winding for a CCW footprint
            for k in range(4):
                k1 = (k + 1) % 4
                bk, bk1, tk, tk1 = base + k, base + k1, base + 4 + k, base + 4 + k1
                triangles.append((bk, bk1, tk1))
                triangles.append((bk, tk1, tk))
                tri_building += [building_id, building_id]
                tri_kind += [WALL, WALL]
            # flat roof, normal up
            t0, t1, t2, t3 = base + 4, base + 5, base + 6, base + 7
            triangles.append((t0, t1, t2))
            triangles.append((t0, t2, t3))
            tri_building += [building_id, building_id]
            tri_kind += [ROOF, ROOF]

            footprints.append(Footprint(corners, float(height), building_id))
            building_id += 1

    scene = SceneModel(
        vertices=np.array(vertices, dtype=np.float64),
        triangles=np.array(triangles, dtype=np.int32),
        tri_building=np.array(tri_building, dtype=np.int32),
        tri_kind=np.array(tri_kind, dtype=np.uint8),
        footprints=footprints,
        bounds=(0.0, 0.0, float(config.extent_x), float(config.extent_y)),
    )
    return scene.validate()


def _point_on_segment(px, py, ax, ay, bx, by, eps=1e-12):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > eps * max(1.0, abs(bx - ax) + abs(by - ay)):
        return False
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    return -eps <= dot <= (bx - ax) ** 2 + (by - ay) ** 2 + eps


def _point_in_polygon(px, py, poly) -> bool:
    """Strict interior test: points on the boundary count as outside."""
    n = len(poly)
    for k in range(n):
        ax, ay = poly[k]
        bx, by = poly[(k + 1) % n]
        if _point_on_segment(px, py, ax, ay, bx, by):
            return False
    inside = False
    for k in range(n):
        ax, ay = poly[k]
        bx, by = poly[(k + 1) % n]
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


def is_inside_building(scene: SceneModel, point) -> bool:
    """True iff the point is strictly inside some footprint (boundary = outside)."""
    px, py = float(point[0]), float(point[1])
    for fp in scene.footprints:
        x0, y0, x1, y1 = fp.bbox()
        if not (x0 <= px <= x1 and y0 <= py <= y1):
            continue
        if _point_in_polygon(px, py, fp.polygon):
            return True
    return False


def _segments_properly_intersect(p1, p2, p3, p4):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def _polygon_is_simple(poly) -> bool:
    n = len(poly)
    for a in range(n):
        for b in range(a + 1, n):
            # skip adjacent segments (they share an endpoint)
            if b == a + 1 or (a == 0 and b == n - 1):
                continue
            if _segments_properly_intersect(
                poly[a], poly[(a + 1) % n], poly[b], poly[(b + 1) % n]
            ):
                return False
    return True


def _derive_footprints(vertices, triangles, tri_building):
    """One footprint per building: xy convex hull of the building's vertices,
    height = vertical extent of the building group."""
    footprints = []
    for bid in sorted(set(int(b) for b in tri_building)):
        vids = np.unique(triangles[tri_building == bid])
        pts = vertices[vids]
        xy = np.unique(pts[:, :2], axis=0)
        height = float(pts[:, 2].max() - pts[:, 2].min())
        try:
            hull = ConvexHull(xy)
        except QhullError as exc:
            raise DataIntegrityError(
                f"building {bid} has a degenerate (collinear) footprint"
            ) from exc
        footprints.append(Footprint(xy[hull.vertices], height, bid))
    return footprints


def load_mesh(path) -> SceneModel:
    """Parse the documented plain-text mesh format (OBJ subset).

    Recognized lines: comments (#), `o`/`g` named groups (one group = one
    building), `usemtl wall|roof`, `v x y z`, `f i j k` (triangles only,
    1-based global indices; `i/...` forms accepted). Buildings without an
    explicit `building_<id>` group name get sequential ids; surface kind
    falls back to the face normal when no usemtl is active.
    """
    vertices = []
    triangles = []
    tri_building = []
    tri_kind = []

    current_building = None
    current_kind = None
    next_building_id = 0
    seen_names = {}

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag in ("o", "g"):
                name = parts[1] if len(parts) > 1 else f"group_{line_no}"
                if name in seen_names:
                    current_building = seen_names[name]
                else:
                    if name.startswith("building_") and name[9:].isdigit():
                        current_building = int(name[9:])
                    else:
                        current_building = next_building_id
                    seen_names[name] = current_building
                    next_building_id = max(next_building_id, current_building + 1)
            elif tag == "usemtl":
                if len(parts) < 2 or parts[1] not in _KIND_IDS:
                    raise MeshParseError(path, line_no, f"unknown material in {line!r}")
                current_kind = _KIND_IDS[parts[1]]
            elif tag == "v":
                if len(parts) < 4:
                    raise MeshParseError(path, line_no, f"vertex needs 3 coordinates: {line!r}")
                try:
                    vertices.append(tuple(float(p) for p in parts[1:4]))
                except ValueError:
                    raise MeshParseError(path, line_no, f"bad vertex coordinate in {line!r}")
            elif tag == "f":
                if len(parts) != 4:
                    raise MeshParseError(
                        path, line_no, f"faces must be triangles (3 indices): {line!r}"
                    )
                try:
                    idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
                except ValueError:
                    raise MeshParseError(path, line_no, f"bad face index in {line!r}")
                for i in idx:
                    if i < 0 or i >= len(vertices):
                        raise MeshParseError(
                            path, line_no, f"face index {i + 1} out of range (have {len(vertices)} vertices)"
                        )
                if current_building is None:
                    current_building = 0
                    next_building_id = max(next_building_id, 1)
                triangles.append(tuple(idx))
                tri_building.append(current_building)
                if current_kind is not None:
                    tri_kind.append(current_kind)
                else:
                    a, b, c = (np.array(vertices[i]) for i in idx)
                    n = np.cross(b - a, c - a)
                    norm = np.linalg.norm(n)
                    nz = abs(n[2] / norm) if norm > 0 else 0.0
                    tri_kind.append(ROOF if nz > 0.5 else WALL)
            # unknown tags are ignored (mtllib, vn, vt, s, ...)

    if not triangles:
        raise EmptyModelError(f"{path}: no triangles found")

    vertices = np.array(vertices, dtype=np.float64)
    triangles = np.array(triangles, dtype=np.int32)
    tri_building = np.array(tri_building, dtype=np.int32)
    xy = vertices[:, :2]
    bounds = (float(xy[:, 0].min()), float(xy[:, 1].min()),
              float(xy[:, 0].max()), float(xy[:, 1].max()))
    scene = SceneModel(
        vertices=vertices,
        triangles=triangles,
        tri_building=tri_building,
        tri_kind=np.array(tri_kind, dtype=np.uint8),
        footprints=_derive_footprints(vertices, triangles, tri_building),
        bounds=bounds,
    )
    return scene.validate()


def write_mesh(scene: SceneModel, path):
    """Write a SceneModel in the documented format; inverse of load_mesh."""
    written = 0  # vertices emitted so far (indices are global and 1-based)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# leanloc mesh v1 (units: meters)\n")
        for bid in sorted(fp.building_id for fp in scene.footprints):
            sel = scene.tri_building == bid
            if not sel.any():
                continue
            fh.write(f"o building_{bid}\n")
            vids = np.unique(scene.triangles[sel])
            remap = {int(v): i for i, v in enumerate(vids)}
            for v in scene.vertices[vids]:
                fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
            last_kind = None
            for tri, kind in zip(scene.triangles[sel], scene.tri_kind[sel]):
                if kind != last_kind:
                    fh.write(f"usemtl {_KIND_NAMES[int(kind)]}\n")
                    last_kind = kind
                a, b, c = (remap[int(t)] + written + 1 for t in tri)
                fh.write(f"f {a} {b} {c}\n")
            written += len(vids)
