"""Resynthesis: parallel resonator bank, closed-form rendering, frequency response."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import DB_FLOOR, InputError, Mode, ModeSet, Signal, to_db

EDGE_TOL = 1e-15  # |sin(omega)| below this means a mode sits at DC or Nyquist


@dataclass(frozen=True)
class BiquadCoeffs:
    """``(b0 + b1 z^-1) / (1 + a1 z^-1 + a2 z^-2)``."""

    b0: float
    b1: float
    a1: float
    a2: float

    def is_stable(self, tol: float = 1e-9) -> bool:
        """Inside the stability triangle, boundary included up to ``tol``."""
        return self.a2 <= 1 + tol and abs(self.a1) <= 1 + self.a2 + tol


def biquad_coeffs(mode: Mode) -> BiquadCoeffs:
    """Second-order section whose impulse response is ``Re(gamma p^t)``.

    Modes at DC or Nyquist have a real pole and need only a first-order
    section (``a2 = b1 = 0``).
    """
    r = float(np.exp(-mode.alpha))
    if abs(np.sin(mode.omega)) <= EDGE_TOL:
        sign = 1.0 if np.cos(mode.omega) > 0 else -1.0
        return BiquadCoeffs(mode.gamma_c, 0.0, -sign * r, 0.0)
    c, s = float(np.cos(mode.omega)), float(np.sin(mode.omega))
    return BiquadCoeffs(
        b0=mode.gamma_c,
        b1=-r * (mode.gamma_c * c - mode.gamma_s * s),
        a1=-2 * r * c,
        a2=r * r,
    )


def _coeff_arrays(modes: ModeSet):
    cs = [biquad_coeffs(m) for m in modes]
    return tuple(np.array([getattr(c, k) for c in cs], dtype=float)
                 for k in ("b0", "b1", "a1", "a2"))


def render(modes: ModeSet, T: int, chunk: int = 4096) -> Signal:
    """Closed-form sum of ``Re(gamma e^{(j w - a) t})`` over t = 0..T-1.

    Per-sample sums over modes use numpy's pairwise reduction.
    """
    if T < 1:
        raise InputError("T must be >= 1")
    out = np.zeros(T)
    if len(modes) == 0:
        return Signal(out, modes.sample_rate)
    s = modes.omegas * 1j - modes.alphas
    g = modes.gamma_c - 1j * modes.gamma_s
    for start in range(0, T, chunk):
        t = np.arange(start, min(T, start + chunk), dtype=float)[:, None]
        out[start:start + t.shape[0]] = (g[None, :] * np.exp(s[None, :] * t)).real.sum(axis=1)
    return Signal(out, modes.sample_rate)


def render_recursive(modes: ModeSet, T: int) -> Signal:
    """Impulse response of the resonator bank, run sample by sample."""
    if T < 1:
        raise InputError("T must be >= 1")
    if len(modes) == 0:
        return Signal(np.zeros(T), modes.sample_rate)
    b0, b1, a1, a2 = _coeff_arrays(modes)
    return Signal(_kernels.biquad_bank(b0, b1, a1, a2, int(T)), modes.sample_rate)


def magnitude_response(modes: ModeSet, n_points: int = 4096):
    """``(freqs_hz, db)`` of the summed sections on a uniform grid from 0 to Nyquist."""
    if n_points < 2:
        raise InputError("n_points must be >= 2")
    w = np.linspace(0.0, np.pi, n_points)
    freqs = w * modes.sample_rate / (2 * np.pi)
    if len(modes) == 0:
        return freqs, np.full(n_points, DB_FLOOR)
    b0, b1, a1, a2 = _coeff_arrays(modes)
    z1 = np.exp(-1j * w)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        H = ((b0 + b1 * z1) / (1 + a1 * z1 + a2 * z1 * z1)).sum(axis=1)
    mag2 = np.abs(H) ** 2
    # an undamped mode exactly on a grid point divides by zero
    mag2 = np.where(np.isfinite(mag2), mag2, np.finfo(float).max)
    return freqs, to_db(mag2)
