"""Hot inner loops, compiled with numba when available.

Every kernel has a numba implementation and a numpy/scipy implementation with
identical semantics.  The active backend is chosen once at import time:

* ``MODALWARP_BACKEND=numpy`` forces the vectorized fallback.
* ``MODALWARP_BACKEND=numba`` (or unset) uses numba if it imports cleanly.

Both implementations stay importable as ``<name>_numba`` / ``<name>_numpy`` so
tests and the benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np
from scipy import signal as sps

_requested = os.environ.get("MODALWARP_BACKEND", "numba").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

BACKEND = "numba" if (HAS_NUMBA and _requested != "numpy") else "numpy"


# --------------------------------------------------------------------------
# allpass chain (frequency warping)
# --------------------------------------------------------------------------

def warp_chain_numpy(h, rho, out_len):
    """Horner evaluation of sum_t h[t] * A^t(delta), one lfilter per input sample.

    A(z) = (z^-1 + rho) / (1 + rho z^-1).
    """
    h = np.asarray(h)
    acc = np.zeros(out_len, dtype=np.result_type(h.dtype, np.float64))
    b = np.array([rho, 1.0])
    a = np.array([1.0, rho])
    for t in range(h.shape[0] - 1, -1, -1):
        acc = sps.lfilter(b, a, acc)
        acc[0] += h[t]
    return acc


if HAS_NUMBA:

    @numba.njit(cache=True)
    def _warp_chain_real(h, rho, out_len):
        acc = np.zeros(out_len)
        for t in range(h.shape[0] - 1, -1, -1):
            px = 0.0
            py = 0.0
            for k in range(out_len):
                x = acc[k]
                y = rho * x + px - rho * py
                px = x
                py = y
                acc[k] = y
            acc[0] += h[t]
        return acc

    @numba.njit(cache=True)
    def _warp_chain_complex(h, rho, out_len):
        acc = np.zeros(out_len, dtype=np.complex128)
        for t in range(h.shape[0] - 1, -1, -1):
            px = 0.0j
            py = 0.0j
            for k in range(out_len):
                x = acc[k]
                y = rho * x + px - rho * py
                px = x
                py = y
                acc[k] = y
            acc[0] += h[t]
        return acc

    def warp_chain_numba(h, rho, out_len):
        h = np.ascontiguousarray(h)
        if np.iscomplexobj(h):
            return _warp_chain_complex(h.astype(np.complex128), float(rho), int(out_len))
        return _warp_chain_real(h.astype(np.float64), float(rho), int(out_len))


# --------------------------------------------------------------------------
# second-order-section cascade
# --------------------------------------------------------------------------

def sosfilt_numpy(sos, x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return sps.sosfilt(sos, x.real) + 1j * sps.sosfilt(sos, x.imag)
    return sps.sosfilt(sos, x)


if HAS_NUMBA:

    @numba.njit(cache=True)
    def _sosfilt_kernel(sos, x):
        # transposed direct form II, section by section
        y = x.copy()
        n = y.shape[0]
        for s in range(sos.shape[0]):
            b0 = sos[s, 0] / sos[s, 3]
            b1 = sos[s, 1] / sos[s, 3]
            b2 = sos[s, 2] / sos[s, 3]
            a1 = sos[s, 4] / sos[s, 3]
            a2 = sos[s, 5] / sos[s, 3]
            z1 = y[0] * 0.0
            z2 = y[0] * 0.0
            for i in range(n):
                xi = y[i]
                yi = b0 * xi + z1
                z1 = b1 * xi - a1 * yi + z2
                z2 = b2 * xi - a2 * yi
                y[i] = yi
        return y

    def sosfilt_numba(sos, x):
        x = np.ascontiguousarray(x)
        if x.shape[0] == 0:
            return x.copy()
        dtype = np.complex128 if np.iscomplexobj(x) else np.float64
        return _sosfilt_kernel(np.ascontiguousarray(sos, dtype=np.float64), x.astype(dtype))


# --------------------------------------------------------------------------
# parallel resonator bank (recursive rendering)
# --------------------------------------------------------------------------

def biquad_bank_numpy(b0, b1, a1, a2, n):
    out = np.zeros(n)
    impulse = np.zeros(n)
    impulse[0] = 1.0
    for k in range(len(b0)):
        out += sps.lfilter([b0[k], b1[k]], [1.0, a1[k], a2[k]], impulse)
    return out


if HAS_NUMBA:

    @numba.njit(cache=True)
    def _biquad_bank_kernel(b0, b1, a1, a2, n):
        out = np.zeros(n)
        for k in range(b0.shape[0]):
            y1 = 0.0
            y2 = 0.0
            for i in range(n):
                x0 = 1.0 if i == 0 else 0.0
                x1 = 1.0 if i == 1 else 0.0
                y = b0[k] * x0 + b1[k] * x1 - a1[k] * y1 - a2[k] * y2
                y2 = y1
                y1 = y
                out[i] += y
        return out

    def biquad_bank_numba(b0, b1, a1, a2, n):
        arrs = [np.ascontiguousarray(v, dtype=np.float64) for v in (b0, b1, a1, a2)]
        return _biquad_bank_kernel(*arrs, int(n))


if BACKEND == "numba":
    warp_chain = warp_chain_numba
    sosfilt = sosfilt_numba
    biquad_bank = biquad_bank_numba
else:
    warp_chain = warp_chain_numpy
    sosfilt = sosfilt_numpy
    biquad_bank = biquad_bank_numpy
