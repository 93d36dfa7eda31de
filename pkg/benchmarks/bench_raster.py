"""Compare the compiled raster kernel against the numpy fallback.

Renders the same set of frames through both backends, checks they agree to
float32 precision, and reports wall-clock timings.

Usage: python3 benchmarks/bench_raster.py [--height 128] [--width 128]
       [--frames 20] [--repeats 3]
"""

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np


def render_all(H, W, n_frames, repeats):
    from minwm import scenes
    from minwm.raster import BACKEND

    scene = scenes.generate_scene(0)
    traj = scenes.sample_trajectory("orbit", n_frames, 0, scene)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        frames = scenes.render_trajectory(scene, traj, H, W)
        best = min(best, time.perf_counter() - t0)
    return BACKEND, best, frames


def run_child(pure, args):
    """Render in a subprocess so the backend choice is made at import time."""
    env = dict(os.environ)
    if pure:
        env["MINWM_PURE_PYTHON"] = "1"
    else:
        env.pop("MINWM_PURE_PYTHON", None)
    code = (
        "import sys, numpy as np; sys.path.insert(0, {root!r});"
        "from benchmarks.bench_raster import render_all;"
        "b, t, f = render_all({H}, {W}, {n}, {r});"
        "np.save({out!r}, f); print(b, t)"
    ).format(root=os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
             H=args.height, W=args.width, n=args.frames, r=args.repeats,
             out=("/tmp/bench_raster_pure.npy" if pure
                  else "/tmp/bench_raster_ext.npy"))
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    backend, secs = out.stdout.split()[-2:]
    return backend, float(secs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--height", type=int, default=128)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    b_ext, t_ext = run_child(False, args)
    b_np, t_np = run_child(True, args)
    if b_ext != "cython":
        print("warning: compiled kernel unavailable, comparing numpy to itself")

    ext = np.load("/tmp/bench_raster_ext.npy")
    pure = np.load("/tmp/bench_raster_pure.npy")
    diff = float(np.abs(ext - pure).max())
    assert diff < 1e-5, f"backends disagree: max abs diff {diff}"

    px = args.height * args.width * args.frames
    print(f"{args.frames} frames at {args.width}x{args.height} "
          f"({px / 1e6:.2f} MPix), best of {args.repeats}")
    print(f"  {b_ext:>6}: {t_ext:.3f}s  ({px / t_ext / 1e6:.2f} MPix/s)")
    print(f"  {b_np:>6}: {t_np:.3f}s  ({px / t_np / 1e6:.2f} MPix/s)")
    print(f"  speedup: {t_np / t_ext:.2f}x   max abs diff: {diff:.2e}")


if __name__ == "__main__":
    main()
