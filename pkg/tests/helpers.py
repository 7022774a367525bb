"""Shared test fixtures and independent oracle implementations.

The geometry oracles here are written from scratch (plain numpy, no reuse of
the package's rasterization internals) so that agreement tests actually
compare two code paths.
"""

import math

import numpy as np

from leanloc.pose import Pose
from leanloc.raster import CameraIntrinsics, camera_basis
from leanloc.scene import WALL, ROOF, Footprint, SceneModel


def make_box_scene(boxes, bounds=None) -> SceneModel:
    """Hand-built scene from (x0, y0, x1, y1, height) axis-aligned boxes:
    four walls plus a flat roof per box, no bottom face."""
    vertices, triangles, tri_building, tri_kind, footprints = [], [], [], [], []
    for bid, (x0, y0, x1, y1, h) in enumerate(boxes):
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]  # CCW
        base = len(vertices)
        vertices += [(cx, cy, 0.0) for cx, cy in corners]
        vertices += [(cx, cy, h) for cx, cy in corners]
        for k in range(4):
            k1 = (k + 1) % 4
            triangles += [
                (base + k, base + k1, base + 4 + k1),
                (base + k, base + 4 + k1, base + 4 + k),
            ]
            tri_building += [bid, bid]
            tri_kind += [WALL, WALL]
        triangles += [(base + 4, base + 5, base + 6), (base + 4, base + 6, base + 7)]
        tri_building += [bid, bid]
        tri_kind += [ROOF, ROOF]
        footprints.append(Footprint(np.array(corners, dtype=float), float(h), bid))
    vertices = np.array(vertices, dtype=np.float64)
    if bounds is None:
        xy = vertices[:, :2]
        bounds = (xy[:, 0].min(), xy[:, 1].min(), xy[:, 0].max(), xy[:, 1].max())
    return SceneModel(
        vertices=vertices,
        triangles=np.array(triangles, dtype=np.int32),
        tri_building=np.array(tri_building, dtype=np.int32),
        tri_kind=np.array(tri_kind, dtype=np.uint8),
        footprints=footprints,
        bounds=bounds,
    )


def empty_scene() -> SceneModel:
    return SceneModel(
        vertices=np.zeros((0, 3)),
        triangles=np.zeros((0, 3), dtype=np.int32),
        tri_building=np.zeros(0, dtype=np.int32),
        tri_kind=np.zeros(0, dtype=np.uint8),
        footprints=[],
        bounds=(0.0, 0.0, 1.0, 1.0),
    )


def raycast_image(scene: SceneModel, pose: Pose, cam: CameraIntrinsics,
                  row_chunk: int = 16) -> np.ndarray:
    """Full-image brute-force ray-cast depth, chunked over rows.

    Independent reimplementation of the ray/triangle math; applies the same
    near/far conventions as the renderer contract (camera-z below near is
    ignored, beyond far reports far).
    """
    origin, rot = camera_basis(pose)
    v = scene.vertices
    tris = scene.triangles
    if len(tris) == 0:
        return np.full((cam.height, cam.width), cam.far)
    a = v[tris[:, 0]]
    e1 = v[tris[:, 1]] - a
    e2 = v[tris[:, 2]] - a

    cols = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
    out = np.full((cam.height, cam.width), cam.far)
    for r0 in range(0, cam.height, row_chunk):
        r1 = min(cam.height, r0 + row_chunk)
        rows = (np.arange(r0, r1) + 0.5 - cam.cy) / cam.fx
        d_cam = np.stack(
            [
                np.broadcast_to(cols[None, :], (r1 - r0, cam.width)),
                np.broadcast_to(rows[:, None], (r1 - r0, cam.width)),
                np.ones((r1 - r0, cam.width)),
            ],
            axis=-1,
        ).reshape(-1, 3)
        norms = np.linalg.norm(d_cam, axis=1, keepdims=True)
        d_world = (d_cam / norms) @ rot  # unit rays, (P, 3)
        dir_z = 1.0 / norms[:, 0]       # camera-z component of each unit ray

        # Moller-Trumbore, rays x triangles
        pvec = np.cross(d_world[:, None, :], e2[None, :, :])
        det = np.einsum("ptk,tk->pt", pvec, e1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = origin[None, :] - a
        u = np.einsum("tk,ptk->pt", tvec, pvec) * inv
        qvec = np.cross(tvec[None, :, :], e1[None, :, :])
        vv = np.einsum("pk,ptk->pt", d_world, qvec) * inv
        t = np.einsum("tk,ptk->pt", e2, qvec) * inv
        hit = ok & (u >= 0) & (vv >= 0) & (u + vv <= 1) & (t > 0)
        zc = t * dir_z[:, None]
        hit &= zc >= cam.near
        t = np.where(hit, t, np.inf)
        best = t.min(axis=1)
        out[r0:r1] = np.minimum(best, cam.far).reshape(r1 - r0, cam.width)
    return out


def _project_clipped_segments(scene, pose, cam, segments):
    """Project world segments to screen space, clipped at the near plane.
    Returns (n, 4) rows of (u0, v0, u1, v1) for the surviving parts."""
    origin, rot = camera_basis(pose)
    p0 = (segments[:, 0] - origin) @ rot.T
    p1 = (segments[:, 1] - origin) @ rot.T
    z0, z1 = p0[:, 2], p1[:, 2]
    keep = (z0 >= cam.near) | (z1 >= cam.near)
    p0, p1, z0, z1 = p0[keep], p1[keep], z0[keep], z1[keep]
    s0 = np.clip((cam.near - z0) / np.where(z1 == z0, 1.0, z1 - z0), 0.0, 1.0)
    s1 = np.clip((cam.near - z1) / np.where(z0 == z1, 1.0, z0 - z1), 0.0, 1.0)
    c0 = np.where((z0 < cam.near)[:, None], p0 + s0[:, None] * (p1 - p0), p0)
    c1 = np.where((z1 < cam.near)[:, None], p1 + s1[:, None] * (p0 - p1), p1)
    u0 = cam.cx + cam.fx * c0[:, 0] / c0[:, 2]
    v0 = cam.cy + cam.fx * c0[:, 1] / c0[:, 2]
    u1 = cam.cx + cam.fx * c1[:, 0] / c1[:, 2]
    v1 = cam.cy + cam.fx * c1[:, 1] / c1[:, 2]
    return np.stack([u0, v0, u1, v1], axis=1)


def all_triangle_segments(scene) -> np.ndarray:
    """Every triangle edge as a (n, 2, 3) world-segment array (deduplicated)."""
    tris = scene.triangles
    pairs = set()
    for tri in tris:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            pairs.add((a, b) if a < b else (b, a))
    pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return np.stack([scene.vertices[pairs[:, 0]], scene.vertices[pairs[:, 1]]], axis=1)


def edge_grazing_mask(scene, pose, cam, radius: float = 0.5) -> np.ndarray:
    """Pixels whose center lies within `radius` px of a projected triangle
    edge (the rays the rasterizer and the ray-caster may legitimately
    disagree on)."""
    segs = _project_clipped_segments(scene, pose, cam, all_triangle_segments(scene))
    mask = np.zeros((cam.height, cam.width), dtype=bool)
    for u0, v0, u1, v1 in segs:
        lo_u = int(math.floor(min(u0, u1) - radius - 1))
        hi_u = int(math.ceil(max(u0, u1) + radius + 1))
        lo_v = int(math.floor(min(v0, v1) - radius - 1))
        hi_v = int(math.ceil(max(v0, v1) + radius + 1))
        lo_u, hi_u = max(0, lo_u), min(cam.width - 1, hi_u)
        lo_v, hi_v = max(0, lo_v), min(cam.height - 1, hi_v)
        if lo_u > hi_u or lo_v > hi_v:
            continue
        pu = np.arange(lo_u, hi_u + 1) + 0.5
        pv = (np.arange(lo_v, hi_v + 1) + 0.5)[:, None]
        du, dv = u1 - u0, v1 - v0
        len2 = du * du + dv * dv
        if len2 == 0:
            d2 = (pu - u0) ** 2 + (pv - v0) ** 2
        else:
            t = np.clip(((pu - u0) * du + (pv - v0) * dv) / len2, 0.0, 1.0)
            d2 = (pu - (u0 + t * du)) ** 2 + (pv - (v0 + t * dv)) ** 2
        mask[lo_v:hi_v + 1, lo_u:hi_u + 1] |= d2 <= radius * radius
    return mask


def random_street_poses(scene, rng, n, bounds=None, pitch_range=(0.0, 15.0)):
    """Uniform random poses over the scene bounds (any validity)."""
    x0, y0, x1, y1 = bounds or scene.bounds
    poses = []
    for _ in range(n):
        poses.append(
            Pose(
                x=rng.uniform(x0, x1),
                y=rng.uniform(y0, y1),
                yaw=rng.uniform(0, 360),
                pitch=rng.uniform(*pitch_range),
            )
        )
    return poses
