"""Time the renderer's numba kernel against the numpy fallback.

Runs the same frames through both kernels, checks they agree bit for bit,
and prints a timing table. Usage:

    python3 benchmarks/render_bench.py [--frames N] [--sizes 96,192]
"""

import argparse
import time

import numpy as np

from artisim import _kernels
from artisim.objects import front_camera, generate_suite
from artisim.scene import render


def time_backend(kernel, objects, camera, frames: int) -> float:
    original = _kernels.raycast
    _kernels.raycast = kernel
    try:
        render(objects[0], camera)  # warm-up (jit compilation, caches)
        started = time.perf_counter()
        for i in range(frames):
            render(objects[i % len(objects)], camera)
        return (time.perf_counter() - started) / frames
    finally:
        _kernels.raycast = original


def check_bit_equal(objects, camera) -> bool:
    original = _kernels.raycast
    try:
        frames = []
        for kernel in (_kernels.raycast_numba, _kernels.raycast_numpy):
            _kernels.raycast = kernel
            frames.append([render(obj, camera) for obj in objects])
        numba_frames, numpy_frames = frames
        for a, b in zip(numba_frames, numpy_frames):
            if not (np.array_equal(a.depth, b.depth)
                    and np.array_equal(a.part_id, b.part_id)):
                return False
        return True
    finally:
        _kernels.raycast = original


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=200,
                        help="frames per backend per camera size")
    parser.add_argument("--sizes", default="96,192",
                        help="comma-separated square frame sizes")
    args = parser.parse_args()

    objects = generate_suite(8, seed=5)
    sizes = [int(s) for s in args.sizes.split(",")]

    if not _kernels.HAS_NUMBA:
        print("numba not installed; timing the numpy kernel only")

    print(f"{'size':>6}  {'numpy ms':>10}  {'numba ms':>10}  {'speedup':>8}")
    for size in sizes:
        camera = front_camera(width=size, height=size,
                              pixel_size=0.0075 * 96 / size)
        numpy_ms = 1e3 * time_backend(_kernels.raycast_numpy, objects, camera,
                                      args.frames)
        if _kernels.HAS_NUMBA:
            numba_ms = 1e3 * time_backend(_kernels.raycast_numba, objects,
                                          camera, args.frames)
            agree = check_bit_equal(objects, camera)
            print(f"{size:>6}  {numpy_ms:>10.3f}  {numba_ms:>10.3f}  "
                  f"{numpy_ms / numba_ms:>7.1f}x"
                  + ("" if agree else "  OUTPUTS DIFFER"))
            if not agree:
                return 1
        else:
            print(f"{size:>6}  {numpy_ms:>10.3f}  {'-':>10}  {'-':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
