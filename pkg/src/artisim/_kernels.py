"""Ray-cast kernels behind the renderer.

Two implementations of the same box-slab intersection loop: a numba-compiled
one and a vectorized numpy fallback. Both take the per-box quantities already
rotated into each box frame, so they perform identical scalar arithmetic and
produce bit-equal outputs.

Selection: numba is used when importable unless ARTISIM_DISABLE_NUMBA is set
to a non-empty value.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func
        if args and callable(args[0]):
            return args[0]
        return wrap

_DISABLED = bool(os.environ.get("ARTISIM_DISABLE_NUMBA"))

PARALLEL_EPS = 1e-12


def raycast_numpy(box_base, box_du, box_dv, box_dir, halfs, part_ids, height, width):
    """Slab-test every pixel ray against every box; nearest hit wins.

    box_base[b] is the pixel-(0,0) ray origin in box b's frame, box_du/box_dv
    the per-pixel steps, box_dir the (shared) ray direction, halfs the box half
    extents. Returns (depth float64, part_id int32); background is +inf / -1.
    """
    depth = np.full((height, width), np.inf, dtype=np.float64)
    pid = np.full((height, width), -1, dtype=np.int32)
    us = np.arange(width, dtype=np.float64)[None, :]
    vs = np.arange(height, dtype=np.float64)[:, None]
    for b in range(len(part_ids)):
        near = np.full((height, width), -np.inf)
        far = np.full((height, width), np.inf)
        miss = np.zeros((height, width), dtype=bool)
        for i in range(3):
            o = box_base[b, i] + us * box_du[b, i] + vs * box_dv[b, i]
            d = box_dir[b, i]
            h = halfs[b, i]
            if abs(d) < PARALLEL_EPS:
                miss |= np.abs(o) > h
            else:
                t1 = (-h - o) / d
                t2 = (h - o) / d
                near = np.maximum(near, np.minimum(t1, t2))
                far = np.minimum(far, np.maximum(t1, t2))
        hit = ~miss & (far >= near) & (near < depth)
        depth[hit] = near[hit]
        pid[hit] = part_ids[b]
    return depth, pid


@njit(cache=True)
def _raycast_numba(box_base, box_du, box_dv, box_dir, halfs, part_ids, height, width):
    depth = np.full((height, width), np.inf, dtype=np.float64)
    pid = np.full((height, width), -1, dtype=np.int32)
    n_boxes = len(part_ids)
    for v in range(height):
        for u in range(width):
            for b in range(n_boxes):
                near = -np.inf
                far = np.inf
                miss = False
                for i in range(3):
                    o = box_base[b, i] + u * box_du[b, i] + v * box_dv[b, i]
                    d = box_dir[b, i]
                    h = halfs[b, i]
                    if abs(d) < PARALLEL_EPS:
                        if abs(o) > h:
                            miss = True
                            break
                    else:
                        t1 = (-h - o) / d
                        t2 = (h - o) / d
                        lo = min(t1, t2)
                        hi = max(t1, t2)
                        if lo > near:
                            near = lo
                        if hi < far:
                            far = hi
                if not miss and far >= near and near < depth[v, u]:
                    depth[v, u] = near
                    pid[v, u] = part_ids[b]
    return depth, pid


def raycast_numba(box_base, box_du, box_dv, box_dir, halfs, part_ids, height, width):
    if not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    return _raycast_numba(box_base, box_du, box_dv, box_dir, halfs, part_ids,
                          height, width)


if HAS_NUMBA and not _DISABLED:
    raycast = raycast_numba
else:
    raycast = raycast_numpy


def active_backend() -> str:
    return "numba" if raycast is raycast_numba else "numpy"
