"""Vectorized numpy ray-cast renderer (pure-Python fallback backend)."""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def render_rays(origin, dirs, spheres, boxes, plane, background):
    """Nearest-hit shading of spheres, axis-aligned cubes and a checker ground.

    origin: [3]; dirs: [H, W, 3] (need not be normalized);
    spheres: [ns, 7] rows (cx, cy, cz, r, R, G, B);
    boxes:   [nb, 7] rows (cx, cy, cz, half, R, G, B);
    plane:   [7] (cell, R1, G1, B1, R2, G2, B2) checker at y = 0;
    background: [3]. Returns float32 [H, W, 3].
    """
    H, W, _ = dirs.shape
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = d.shape[0]
    best_t = np.full(n, np.inf)
    color = np.broadcast_to(np.asarray(background, dtype=np.float64), (n, 3)).copy()

    for sx, sy, sz, r, cr, cg, cb in np.asarray(spheres, dtype=np.float64).reshape(-1, 7):
        oc = o - np.array([sx, sy, sz])
        a = np.sum(d * d, axis=1)
        b = 2.0 * d @ oc
        c = oc @ oc - r * r
        disc = b * b - 4 * a * c
        hit = disc > 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(t0 > _EPS, t0, t1)
        hit &= (t > _EPS) & (t < best_t)
        best_t[hit] = t[hit]
        color[hit] = (cr, cg, cb)

    for bx, by, bz, h, cr, cg, cb in np.asarray(boxes, dtype=np.float64).reshape(-1, 7):
        lo = np.array([bx, by, bz]) - h
        hi = np.array([bx, by, bz]) + h
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t_lo = (lo - o) * inv
            t_hi = (hi - o) * inv
        t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=1)
        t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=1)
        t = np.where(t_near > _EPS, t_near, t_far)
        hit = (t_far >= t_near) & (t > _EPS) & (t < best_t)
        best_t[hit] = t[hit]
        color[hit] = (cr, cg, cb)

    cell = float(plane[0])
    if cell > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -o[1] / d[:, 1]
        hit = np.isfinite(t) & (t > _EPS) & (t < best_t)
        px = o[0] + t * d[:, 0]
        pz = o[2] + t * d[:, 2]
        parity = (np.floor(px / cell) + np.floor(pz / cell)).astype(np.int64) % 2
        c1 = np.asarray(plane[1:4], dtype=np.float64)
        c2 = np.asarray(plane[4:7], dtype=np.float64)
        checker = np.where(parity[:, None] == 0, c1, c2)
        best_t[hit] = t[hit]
        color[hit] = checker[hit]

    return color.reshape(H, W, 3).astype(np.float32)
