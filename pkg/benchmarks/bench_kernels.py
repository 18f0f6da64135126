"""Time the numba kernels against their numpy/scipy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is called once to trigger compilation, checked against the other
backend, then timed with ``timeit`` (best of ``--repeat``).  With
``--pipeline`` a full fw_esprit run is also timed in a subprocess per backend,
since the backend is fixed when the package is imported.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
from scipy.signal import butter

from modalwarp import _kernels as k

PIPELINE = """
import time
from modalwarp.core import generate, piano_like_spec
from modalwarp.esprit import KneePoint
from modalwarp.warp import WarpConfig, bark_rho, fw_esprit
x = generate(piano_like_spec(220.0, 20), {T}, 44100.0)
t0 = time.perf_counter()
fw_esprit(x, WarpConfig(bark_rho(44100.0)), {N}, KneePoint())
print(time.perf_counter() - t0)
"""


def cases(quick: bool):
    rng = np.random.default_rng(0)
    n = 4096 if quick else 16384
    out_len = 513 if quick else 2049
    x = rng.standard_normal(n)
    z = x + 1j * rng.standard_normal(n)
    sos = butter(8, 0.05, output="sos")
    m = 60 if quick else 200
    r = rng.uniform(0.99, 1.0, m)
    w = rng.uniform(0, np.pi, m)
    bank = (rng.standard_normal(m), rng.standard_normal(m), -2 * r * np.cos(w), r * r, n)
    return [
        (f"warp_chain real  n={n} out={out_len}", "warp_chain", (x, 0.7564, out_len)),
        (f"warp_chain cplx  n={n} out={out_len}", "warp_chain", (z, 0.7564, out_len)),
        (f"sosfilt real     n={n} order=8", "sosfilt", (sos, x)),
        (f"sosfilt cplx     n={n} order=8", "sosfilt", (sos, z)),
        (f"biquad_bank      n={n} sections={m}", "biquad_bank", bank),
    ]


def bench(repeat: int, quick: bool) -> None:
    print(f"{'kernel':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>9s}")
    for label, name, args in cases(quick):
        fast = getattr(k, f"{name}_numba")
        slow = getattr(k, f"{name}_numpy")
        ref = slow(*args)
        diff = float(np.max(np.abs(fast(*args) - ref)))  # first call compiles
        t_np = min(timeit.repeat(lambda: slow(*args), number=1, repeat=repeat))
        t_nb = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
        print(f"{label:40s} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:7.1f}x {diff:9.1e}")


def pipeline(quick: bool) -> None:
    T, N = (8192, 256) if quick else (32768, 1024)
    print(f"\nfw_esprit end to end, T={T}, N={N}")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, MODALWARP_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", PIPELINE.format(T=T, N=N)], env=env,
                             capture_output=True, text=True, check=True)
        print(f"  {backend:6s} {float(out.stdout.split()[-1]):8.2f} s")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--quick", action="store_true", help="smaller problem sizes")
    p.add_argument("--pipeline", action="store_true", help="also time fw_esprit per backend")
    a = p.parse_args()
    if not k.HAS_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    bench(a.repeat, a.quick)
    if a.pipeline:
        pipeline(a.quick)


if __name__ == "__main__":
    main()
