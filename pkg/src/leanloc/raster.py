"""Software rendering of lean images: depth maps, facade masks, and visible
mesh-edge wireframes, plus a brute-force ray-casting oracle.

Camera model: pinhole, horizontal FOV, square pixels, image origin top-left,
pixel centers at half-integer coordinates. Depth is measured along the camera
ray (not the optical axis); sky pixels carry the sentinel value `far`.
Surfaces closer than `near` (perpendicular distance) are clipped away, by the
rasterizer and the ray-casting oracle alike.

Everything here is a pure function of immutable inputs, so renders may run in
parallel over poses without coordination.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError
from .pose import Pose
from .scene import SceneModel

# hidden-line tolerances, recorded in dataset manifests
CREASE_ANGLE_DEG = 30.0   # dihedral angle beyond which a mesh edge is a crease
DEPTH_BIAS_ABS = 0.01     # meters
DEPTH_BIAS_REL = 1e-3
EDGE_MIN_PIXELS = 3       # distinct visible pixels for an edge to count


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 160
    height: int = 120
    hfov_deg: float = 60.0
    near: float = 0.1
    far: float = 2000.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigurationError(f"image size must be positive, got {self.width}x{self.height}")
        if not 0.0 < self.hfov_deg < 180.0:
            raise ConfigurationError(f"horizontal FOV must be in (0, 180), got {self.hfov_deg}")
        if not 0.0 < self.near < self.far:
            raise ConfigurationError(f"need 0 < near < far, got near={self.near} far={self.far}")

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


@dataclass
class EdgeImage:
    """Binary mask of visible mesh edges plus the count of source edges that
    produced at least EDGE_MIN_PIXELS visible pixels."""

    mask: np.ndarray
    visible_edge_count: int


@dataclass
class LeanTriplet:
    """The three co-registered lean images for one pose."""

    edge: EdgeImage
    face: np.ndarray   # (H, W) uint8 0/1, building surface is nearest hit
    depth: np.ndarray  # (H, W) float64 ray depth in meters, sky = far
    pose: Pose


def camera_basis(pose: Pose):
    """World-space camera frame. Returns (origin (3,), R (3, 3)) where the
    rows of R are the right / down / forward axes (x right, y down, z forward)."""
    t = math.radians(pose.yaw)
    p = math.radians(pose.pitch)
    ct, st, cp, sp = math.cos(t), math.sin(t), math.cos(p), math.sin(p)
    forward = np.array([cp * ct, cp * st, sp])
    right = np.array([st, -ct, 0.0])
    down = np.cross(forward, right)
    origin = np.array([pose.x, pose.y, pose.z], dtype=np.float64)
    return origin, np.stack([right, down, forward])


@lru_cache(maxsize=8)
def _ray_norms(cam: CameraIntrinsics) -> np.ndarray:
    """Per-pixel ratio of ray length to camera-z depth, at pixel centers."""
    u = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
    v = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fx
    n = np.sqrt(1.0 + u[None, :] ** 2 + v[:, None] ** 2)
    n.setflags(write=False)
    return n


def _clip_near(tri_cam: np.ndarray, near: float):
    """Clip one camera-space triangle against z >= near.

    Returns a list of triangles (each (3, 3)); exact plane membership is
    preserved, so interpolated depth stays exact.
    """
    z = tri_cam[:, 2]
    inside = z >= near
    n_in = int(inside.sum())
    if n_in == 3:
        return [tri_cam]
    if n_in == 0:
        return []
    poly = []
    for k in range(3):
        a, b = tri_cam[k], tri_cam[(k + 1) % 3]
        if inside[k]:
            poly.append(a)
        if inside[k] != inside[(k + 1) % 3]:
            s = (near - a[2]) / (b[2] - a[2])
            poly.append(a + s * (b - a))
    out = [np.stack([poly[0], poly[k], poly[k + 1]]) for k in range(1, len(poly) - 1)]
    return out


def _zbuffer(scene: SceneModel, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """Camera-z depth buffer (H, W) float64; sky pixels are +inf."""
    origin, rot = camera_basis(pose)
    verts_cam = (scene.vertices - origin) @ rot.T
    fx, cx, cy = cam.fx, cam.cx, cam.cy
    w, h = cam.width, cam.height
    zbuf = np.full((h, w), np.inf)

    for tri in scene.triangles:
        tc = verts_cam[tri]
        if tc[:, 2].max() < cam.near:
            continue
        for t in _clip_near(tc, cam.near) if tc[:, 2].min() < cam.near else (tc,):
            z = t[:, 2]
            u = cx + fx * t[:, 0] / z
            v = cy + fx * t[:, 1] / z
            # pixel centers at col + 0.5: columns intersecting [min_u, max_u]
            px0 = max(0, int(math.ceil(u.min() - 0.5)))
            px1 = min(w - 1, int(math.floor(u.max() - 0.5)))
            py0 = max(0, int(math.ceil(v.min() - 0.5)))
            py1 = min(h - 1, int(math.floor(v.max() - 0.5)))
            if px0 > px1 or py0 > py1:
                continue

            area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
            if area == 0.0:
                continue  # edge-on triangle, zero screen coverage
            if area < 0.0:
                u, v, z = u[[0, 2, 1]], v[[0, 2, 1]], z[[0, 2, 1]]
                area = -area

            pu = np.arange(px0, px1 + 1) + 0.5
            pv = (np.arange(py0, py1 + 1) + 0.5)[:, None]
            # inclusive edge functions; double-covered shared edges are
            # harmless under the min-update
            e0 = (u[1] - u[0]) * (pv - v[0]) - (v[1] - v[0]) * (pu - u[0])
            e1 = (u[2] - u[1]) * (pv - v[1]) - (v[2] - v[1]) * (pu - u[1])
            e2 = (u[0] - u[2]) * (pv - v[2]) - (v[0] - v[2]) * (pu - u[2])
            mask = (e0 >= 0) & (e1 >= 0) & (e2 >= 0)
            if not mask.any():
                continue

            # perspective-correct depth: 1/z is affine on the screen plane
            zinv = (e1 / area) / z[0] + (e2 / area) / z[1] + (e0 / area) / z[2]
            zpix = 1.0 / zinv
            sub = zbuf[py0:py1 + 1, px0:px1 + 1]
            np.copyto(sub, zpix, where=mask & (zpix < sub))
    return zbuf


def render_depth(scene: SceneModel, pose: Pose, cam: CameraIntrinsics = CameraIntrinsics()) -> np.ndarray:
    """Nearest-surface depth along the camera ray per pixel; sky = far."""
    return _depth_from_zbuffer(_zbuffer(scene, pose, cam), cam)


def _depth_from_zbuffer(zbuf: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    depth = zbuf * _ray_norms(cam)
    np.minimum(depth, cam.far, out=depth)
    depth[~np.isfinite(depth)] = cam.far
    return depth


def render_faces(scene: SceneModel, pose: Pose, cam: CameraIntrinsics = CameraIntrinsics()) -> np.ndarray:
    """Binary facade mask: 1 where a building surface is the nearest hit."""
    return _faces_from_depth(render_depth(scene, pose, cam), cam)


def _faces_from_depth(depth: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    return (depth < cam.far).astype(np.uint8)


def _edge_table(scene: SceneModel):
    """Unique mesh edges with adjacency and view-independent candidacy.

    Returns (edges (E, 2) int, adj (E, 2) int with -1 for open sides,
    static_candidate (E,) bool, tri_normals (M, 3), tri_offsets (M,)).
    Cached on the scene (idempotent, so benign under parallel first use).
    """
    if scene._edge_table is not None:
        return scene._edge_table

    v = scene.vertices
    tris = scene.triangles
    a, b, c = v[tris[:, 0]], v[tris[:, 1]], v[tris[:, 2]]
    normals = np.cross(b - a, c - a)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    lens[lens == 0] = 1.0
    normals = normals / lens
    offsets = np.einsum("ij,ij->i", normals, a)

    adjacency = {}
    for ti, tri in enumerate(tris):
        for k in range(3):
            p, q = int(tri[k]), int(tri[(k + 1) % 3])
            key = (p, q) if p < q else (q, p)
            adjacency.setdefault(key, []).append(ti)

    edges = np.array(sorted(adjacency.keys()), dtype=np.int64).reshape(-1, 2)
    adj = np.full((len(edges), 2), -1, dtype=np.int64)
    for i, key in enumerate(map(tuple, edges)):
        ts = adjacency[key]
        adj[i, : min(2, len(ts))] = ts[:2]  # non-manifold extras ignored

    boundary = adj[:, 1] < 0
    cos_crease = math.cos(math.radians(CREASE_ANGLE_DEG))
    n0 = normals[adj[:, 0]]
    n1 = normals[np.where(boundary, 0, adj[:, 1])]
    crease = ~boundary & (np.einsum("ij,ij->i", n0, n1) < cos_crease)
    static_candidate = boundary | crease

    table = (edges, adj, static_candidate, normals, offsets)
    scene._edge_table = table
    return table


def render_edges(scene: SceneModel, pose: Pose, cam: CameraIntrinsics = CameraIntrinsics()) -> EdgeImage:
    """Visible-edge wireframe; see render_triplet for the shared-buffer path."""
    zbuf = _zbuffer(scene, pose, cam)
    depth = _depth_from_zbuffer(zbuf, cam)
    face = _faces_from_depth(depth, cam)
    return _edges_from_depth(scene, pose, cam, depth, face)


def _dilate3x3(mask: np.ndarray) -> np.ndarray:
    out = mask.astype(bool).copy()
    out[1:, :] |= mask[:-1, :] > 0
    out[:-1, :] |= mask[1:, :] > 0
    tmp = out.copy()
    out[:, 1:] |= tmp[:, :-1]
    out[:, :-1] |= tmp[:, 1:]
    return out


def _edges_from_depth(scene, pose, cam, depth, face) -> EdgeImage:
    """Hidden-line pass: sample candidate edges along their screen length and
    keep samples whose ray depth matches the depth buffer within the bias."""
    edges, adj, static_candidate, normals, offsets = _edge_table(scene)
    origin, rot = camera_basis(pose)
    fx, cx, cy = cam.fx, cam.cx, cam.cy
    w, h = cam.width, cam.height

    # silhouettes: the two adjacent faces lie on opposite sides of the viewpoint
    side = np.where(normals @ origin - offsets >= 0.0, 1, -1)
    two_sided = adj[:, 1] >= 0
    silhouette = np.zeros(len(edges), dtype=bool)
    silhouette[two_sided] = side[adj[two_sided, 0]] != side[adj[two_sided, 1]]
    candidates = np.flatnonzero(static_candidate | silhouette)

    mask = np.zeros((h, w), dtype=np.uint8)
    if len(candidates) == 0:
        return EdgeImage(mask, 0)

    p0 = (scene.vertices[edges[candidates, 0]] - origin) @ rot.T
    p1 = (scene.vertices[edges[candidates, 1]] - origin) @ rot.T

    # clip segments to z >= near
    z0, z1 = p0[:, 2].copy(), p1[:, 2].copy()
    keep = (z0 >= cam.near) | (z1 >= cam.near)
    s = np.clip((cam.near - z0) / np.where(z1 == z0, 1.0, z1 - z0), 0.0, 1.0)
    clip0 = np.where((z0 < cam.near)[:, None], p0 + s[:, None] * (p1 - p0), p0)
    s2 = np.clip((cam.near - z1) / np.where(z0 == z1, 1.0, z0 - z1), 0.0, 1.0)
    clip1 = np.where((z1 < cam.near)[:, None], p1 + s2[:, None] * (p0 - p1), p1)

    candidates = candidates[keep]
    clip0, clip1 = clip0[keep], clip1[keep]
    if len(candidates) == 0:
        return EdgeImage(mask, 0)

    u0 = cx + fx * clip0[:, 0] / clip0[:, 2]
    v0 = cy + fx * clip0[:, 1] / clip0[:, 2]
    u1 = cx + fx * clip1[:, 0] / clip1[:, 2]
    v1 = cy + fx * clip1[:, 1] / clip1[:, 2]

    # two samples per pixel of screen length, capped for the degenerate case
    # of segments vastly larger than the viewport
    seg_len = np.hypot(u1 - u0, v1 - v0)
    n_samples = np.clip(np.ceil(2.0 * seg_len).astype(np.int64) + 1, 2, 8 * (w + h))

    face_near = _dilate3x3(face)
    ray_norm = _ray_norms(cam)

    total = int(n_samples.sum())
    edge_of_sample = np.repeat(np.arange(len(candidates)), n_samples)
    # per-sample parameter in [0, 1], uniform in screen space
    starts = np.concatenate(([0], np.cumsum(n_samples)[:-1]))
    t = (np.arange(total) - starts[edge_of_sample]) / (n_samples[edge_of_sample] - 1)

    su = u0[edge_of_sample] + t * (u1 - u0)[edge_of_sample]
    sv = v0[edge_of_sample] + t * (v1 - v0)[edge_of_sample]
    # perspective-correct: 1/z is affine along the projected segment
    zinv = (1.0 - t) / clip0[edge_of_sample, 2] + t / clip1[edge_of_sample, 2]
    sz = 1.0 / zinv

    cols = np.floor(su).astype(np.int64)
    rows = np.floor(sv).astype(np.int64)
    inb = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    cols, rows = cols[inb], rows[inb]
    sz = sz[inb]
    edge_of_sample = edge_of_sample[inb]

    ray_depth = sz * ray_norm[rows, cols]
    bias = np.maximum(DEPTH_BIAS_ABS, DEPTH_BIAS_REL * ray_depth)
    visible = (ray_depth <= depth[rows, cols] + bias) & face_near[rows, cols]

    cols, rows = cols[visible], rows[visible]
    edge_of_sample = edge_of_sample[visible]
    mask[rows, cols] = 1

    # count edges with >= EDGE_MIN_PIXELS distinct pixels
    pix_key = edge_of_sample * (h * w) + rows * w + cols
    uniq = np.unique(pix_key)
    per_edge = np.bincount((uniq // (h * w)).astype(np.int64), minlength=len(candidates))
    count = int((per_edge >= EDGE_MIN_PIXELS).sum())
    return EdgeImage(mask, count)


def render_triplet(scene: SceneModel, pose: Pose, cam: CameraIntrinsics = CameraIntrinsics()) -> LeanTriplet:
    """All three lean images from one shared z-buffer pass."""
    zbuf = _zbuffer(scene, pose, cam)
    depth = _depth_from_zbuffer(zbuf, cam)
    face = _faces_from_depth(depth, cam)
    edge = _edges_from_depth(scene, pose, cam, depth, face)
    return LeanTriplet(edge=edge, face=face, depth=depth, pose=pose)


def pixel_ray(pose: Pose, cam: CameraIntrinsics, pixel):
    """World-space unit ray through a pixel center. Returns (origin, direction)."""
    col, row = pixel
    origin, rot = camera_basis(pose)
    d_cam = np.array([(col + 0.5 - cam.cx) / cam.fx, (row + 0.5 - cam.cy) / cam.fx, 1.0])
    d_cam /= np.linalg.norm(d_cam)
    return origin, d_cam @ rot


def ray_cast_depth(scene: SceneModel, pose: Pose, cam: CameraIntrinsics, pixel) -> float:
    """Brute-force nearest ray-triangle intersection along one pixel ray.

    Independent of the rasterizer; applies the same near/far conventions
    (hits with camera-z below near are ignored, anything at or beyond far
    reports far).
    """
    col, row = pixel
    if not (0 <= col < cam.width and 0 <= row < cam.height):
        raise ValueError(f"pixel {pixel} outside {cam.width}x{cam.height} image")
    origin, direction = pixel_ray(pose, cam, pixel)
    _, rot = camera_basis(pose)
    dir_z = float(direction @ rot[2])  # camera-z component of the unit ray

    t = _moller_trumbore(scene, origin, direction)
    t = t[t * dir_z >= cam.near]
    if len(t) == 0:
        return float(cam.far)
    return float(min(t.min(), cam.far))


def _moller_trumbore(scene: SceneModel, origin, direction) -> np.ndarray:
    """Ray parameters t >= 0 of all triangle intersections (vectorized)."""
    v = scene.vertices
    tris = scene.triangles
    a = v[tris[:, 0]]
    e1 = v[tris[:, 1]] - a
    e2 = v[tris[:, 2]] - a
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - a
    u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    vv = qvec @ direction * inv_det
    t = np.einsum("ij,ij->i", e2, qvec) * inv_det
    hit = ok & (u >= 0.0) & (vv >= 0.0) & (u + vv <= 1.0) & (t > 0.0)
    return t[hit]
