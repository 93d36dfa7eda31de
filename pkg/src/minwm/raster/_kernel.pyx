# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ray-cast kernel: per-pixel nearest-hit loop over the primitive list."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, floor, sqrt

cnp.import_array()

cdef double EPS = 1e-9


def render_rays(origin, dirs, spheres, boxes, plane, background):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] o = np.ascontiguousarray(origin, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sp = np.ascontiguousarray(spheres, dtype=np.float64).reshape(-1, 7)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 7)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pl = np.ascontiguousarray(plane, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bg = np.ascontiguousarray(background, dtype=np.float64)

    cdef int H = d.shape[0]
    cdef int W = d.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((H, W, 3), dtype=np.float64)

    cdef int i, j, k, ax
    cdef int ns = sp.shape[0]
    cdef int nb = bx.shape[0]
    cdef double dx, dy, dz, best, cr, cg, cb
    cdef double ocx, ocy, ocz, a, b, c, disc, sq, t0, t1, t
    cdef double lo, hi, inv, tn, tf, t_near, t_far, oa, da
    cdef double cell, px, pz
    cdef long parity

    cell = pl[0]
    for i in range(H):
        for j in range(W):
            dx = d[i, j, 0]; dy = d[i, j, 1]; dz = d[i, j, 2]
            best = INFINITY
            cr = bg[0]; cg = bg[1]; cb = bg[2]
            for k in range(ns):
                ocx = o[0] - sp[k, 0]; ocy = o[1] - sp[k, 1]; ocz = o[2] - sp[k, 2]
                a = dx * dx + dy * dy + dz * dz
                b = 2.0 * (dx * ocx + dy * ocy + dz * ocz)
                c = ocx * ocx + ocy * ocy + ocz * ocz - sp[k, 3] * sp[k, 3]
                disc = b * b - 4.0 * a * c
                if disc <= 0.0:
                    continue
                sq = sqrt(disc)
                t0 = (-b - sq) / (2.0 * a)
                t1 = (-b + sq) / (2.0 * a)
                t = t0 if t0 > EPS else t1
                if t > EPS and t < best:
                    best = t
                    cr = sp[k, 4]; cg = sp[k, 5]; cb = sp[k, 6]
            for k in range(nb):
                t_near = -INFINITY
                t_far = INFINITY
                for ax in range(3):
                    lo = bx[k, ax] - bx[k, 3]
                    hi = bx[k, ax] + bx[k, 3]
                    oa = o[ax]
                    da = dx if ax == 0 else (dy if ax == 1 else dz)
                    if da == 0.0:
                        if oa < lo or oa > hi:
                            t_near = INFINITY
                            break
                        continue
                    inv = 1.0 / da
                    tn = (lo - oa) * inv
                    tf = (hi - oa) * inv
                    if tn > tf:
                        tn, tf = tf, tn
                    if tn > t_near:
                        t_near = tn
                    if tf < t_far:
                        t_far = tf
                if t_far >= t_near:
                    t = t_near if t_near > EPS else t_far
                    if t > EPS and t < best:
                        best = t
                        cr = bx[k, 4]; cg = bx[k, 5]; cb = bx[k, 6]
            if cell > 0.0 and dy != 0.0:
                t = -o[1] / dy
                if t > EPS and t < best:
                    best = t
                    px = o[0] + t * dx
                    pz = o[2] + t * dz
                    parity = (<long>(floor(px / cell) + floor(pz / cell))) % 2
                    if parity == 0:
                        cr = pl[1]; cg = pl[2]; cb = pl[3]
                    else:
                        cr = pl[4]; cg = pl[5]; cb = pl[6]
            out[i, j, 0] = cr; out[i, j, 1] = cg; out[i, j, 2] = cb
    return out.astype(np.float32)
