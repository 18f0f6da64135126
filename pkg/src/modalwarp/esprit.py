"""Matrix-pencil (ESPRIT) estimation of damped sinusoids."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    ALPHA_TOL,
    InputError,
    ModeSet,
    NumericalError,
    Signal,
    Source,
    fit_real_amplitudes,
)

log = logging.getLogger(__name__)

DEFAULT_HANKEL = 2048


# --------------------------------------------------------------------------
# model-order rules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KneePoint:
    """Knee of the log singular-value curve (max distance to its end-to-end chord)."""

    def __str__(self):
        return "knee"


@dataclass(frozen=True)
class ThresholdDb:
    """Keep singular values within ``level`` dB of the largest one."""

    level: float = -18.0

    def __str__(self):
        return f"db:{self.level:g}"


@dataclass(frozen=True)
class Fixed:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise InputError("fixed model order must be >= 1")

    def __str__(self):
        return f"fixed:{self.m}"


OrderSelection = KneePoint | ThresholdDb | Fixed


def parse_order(text: str) -> OrderSelection:
    """Parse ``knee``, ``db:<level>`` or ``fixed:<M>``."""
    text = text.strip().lower()
    if text == "knee":
        return KneePoint()
    kind, _, arg = text.partition(":")
    try:
        if kind == "db":
            return ThresholdDb(float(arg))
        if kind == "fixed":
            return Fixed(int(arg))
    except ValueError:
        pass
    raise InputError(f"bad order rule {text!r}; expected knee, db:<L> or fixed:<M>")


# --------------------------------------------------------------------------
# Hankel pencil
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HankelPair:
    """``H[i, j] = h[i + j]`` and ``K[i, j] = h[i + j + 1]``, both N x N.

    The matrices are strided read-only views onto one buffer of 2N samples.
    """

    H: np.ndarray
    K: np.ndarray
    N: int


def build_hankel(signal: Signal | np.ndarray, N: int, start: int = 0) -> HankelPair:
    x = signal.samples if isinstance(signal, Signal) else np.asarray(signal)
    if N < 2:
        raise InputError(f"Hankel size must be >= 2, got {N}")
    if x.shape[0] - start < 2 * N:
        raise InputError(
            f"Hankel size {N} needs at least 2N = {2 * N} samples, got {x.shape[0] - start}"
        )
    win = sliding_window_view(x[start:start + 2 * N], N)
    return HankelPair(H=win[:N], K=win[1:N + 1], N=N)


# --------------------------------------------------------------------------
# order selection
# --------------------------------------------------------------------------

def knee_index(singular_values) -> int:
    """1-based index of the knee of the log10 singular-value curve.

    The candidate is the point farthest from the chord joining the first and
    last points.  If that point lies below the chord the curve has fallen off
    a cliff there, and the knee is the last point before the fall.
    """
    s = np.asarray(singular_values, dtype=float)
    n = s.shape[0]
    y = np.log10(np.maximum(s, s[0] * 1e-300))
    x = np.arange(1, n + 1, dtype=float)
    chord = y[0] + (y[-1] - y[0]) * (x - 1) / (n - 1)
    # perpendicular distance is proportional to the vertical gap for a fixed chord
    gap = y - chord
    i = int(np.argmax(np.abs(gap)))
    if gap[i] < 0:
        i -= 1
    return max(i + 1, 1)


def select_order(singular_values, method: OrderSelection) -> int:
    s = np.asarray(singular_values, dtype=float)
    if s.shape[0] < 2:
        raise InputError("order selection needs at least two singular values")
    if np.any(s < 0):
        raise InputError("singular values must be nonnegative")
    if s[0] <= 0:
        raise NumericalError("all singular values are zero (empty signal)")
    n = s.shape[0]
    if isinstance(method, Fixed):
        return min(method.m, n)
    if isinstance(method, ThresholdDb):
        with np.errstate(divide="ignore"):
            rel = 20 * np.log10(s / s[0])
        return max(1, int(np.count_nonzero(rel > method.level)))
    if isinstance(method, KneePoint):
        return min(knee_index(s), n)
    raise InputError(f"unknown order rule {method!r}")


# --------------------------------------------------------------------------
# poles
# --------------------------------------------------------------------------

def hankel_svd(pair: HankelPair):
    """Thin SVD of H; returns (U, s, Wh)."""
    return scipy.linalg.svd(pair.H, full_matrices=False, lapack_driver="gesdd",
                            check_finite=False)


def estimate_poles(pair: HankelPair, M: int, svd=None) -> np.ndarray:
    """Eigenvalues of the signal-subspace pencil ``S^-1 U^H K W`` (M x M)."""
    if not 1 <= M <= pair.N:
        raise InputError(f"model order {M} outside [1, {pair.N}]")
    U, s, Wh = hankel_svd(pair) if svd is None else svd
    sM = s[:M]
    if sM[-1] <= 0 or not np.all(np.isfinite(sM)):
        raise NumericalError(f"Hankel matrix has rank below the requested order {M}")
    UM = U[:, :M]
    WM = Wh[:M].conj().T
    phi = (UM.conj().T @ (pair.K @ WM)) / sM[:, None]
    return np.linalg.eigvals(phi)


def poles_to_modes(poles, real: bool = True, alpha_max: float | None = None):
    """Convert poles to (omega, alpha) arrays plus a count of dropped poles.

    For real signals only the upper half-plane member of each conjugate pair is
    kept and omega lies in [0, pi].  For complex signals omega is in (-pi, pi].
    Poles at the origin, unstable poles and poles decaying faster than
    ``alpha_max`` are dropped.
    """
    p = np.asarray(poles, dtype=complex)
    mag = np.abs(p)
    with np.errstate(divide="ignore"):
        alpha = -np.log(mag)
    omega = np.angle(p)
    valid = (mag > 0) & (alpha >= -ALPHA_TOL)
    if alpha_max is not None:
        valid &= alpha <= alpha_max
    dropped = int(np.count_nonzero(~valid))
    keep = valid
    if real:
        is_real = np.abs(p.imag) <= 1e-12 * np.maximum(mag, 1e-300)
        keep = valid & ((p.imag > 0) | is_real)
        omega = np.where(is_real, np.where(p.real >= 0, 0.0, np.pi), np.abs(omega))
    if dropped:
        log.debug("dropped %d poles (origin, unstable or dead)", dropped)
    order = np.lexsort((alpha[keep], omega[keep]))
    return omega[keep][order], alpha[keep][order], dropped


def _dedupe(omegas, alphas, h, real=True, tol=1e-12):
    """Collapse near-identical eigenvalues, keeping the larger LS amplitude."""
    if omegas.shape[0] < 2:
        return omegas, alphas
    close = (np.abs(np.diff(omegas)) <= tol) & (np.abs(np.diff(alphas)) <= tol)
    if not close.any():
        return omegas, alphas
    n = min(h.shape[0], max(4 * omegas.shape[0], 64))
    t = np.arange(n, dtype=float)
    V = np.exp(np.outer(t, 1j * omegas - alphas))
    amp = np.abs(np.linalg.lstsq(V, h[:n].astype(complex), rcond=None)[0])
    keep = np.ones(omegas.shape[0], dtype=bool)
    i = 0
    while i < omegas.shape[0]:
        j = i
        while j + 1 < omegas.shape[0] and close[j]:
            j += 1
        if j > i:
            group = np.arange(i, j + 1)
            keep[group] = False
            keep[group[np.argmax(amp[group])]] = True
        i = j + 1
    return omegas[keep], alphas[keep]


# --------------------------------------------------------------------------
# amplitudes and the full estimator
# --------------------------------------------------------------------------

def estimate_amplitudes(signal: Signal, omegas, alphas, source=Source.PLAIN,
                        meta=None) -> ModeSet:
    """Least-squares amplitudes of known (omega, alpha) modes on a real signal."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.shape[0] == 0:
        raise InputError("no modes to fit")
    if not signal.is_real:
        raise InputError("amplitude fitting into a ModeSet needs a real signal")
    gs, gc = fit_real_amplitudes(omegas, alphas, signal.samples)
    return ModeSet.from_arrays(omegas, alphas, gs, gc, source=source,
                               sample_rate=signal.sample_rate, meta=meta)


def default_alpha_max(N: int) -> float:
    return math.log(1e6) / N


def esprit_poles(x: np.ndarray, N: int, order: OrderSelection, start: int = 0,
                 max_order: int | None = None):
    """Hankel -> SVD -> order -> pencil eigenvalues.

    Returns ``(poles, singular_values, M)``.  ``max_order`` caps the selected
    order (band mode budgets).
    """
    pair = build_hankel(x, N, start)
    svd = hankel_svd(pair)
    M = select_order(svd[1], order)
    if max_order is not None:
        M = max(1, min(M, max_order))
    # an exactly rank-deficient noise-free H cannot support more than its rank
    tiny = svd[1] <= svd[1][0] * np.finfo(float).eps * N
    if tiny.any():
        M = min(M, max(1, int(np.argmax(tiny))))
    return estimate_poles(pair, M, svd), svd[1], M


def esprit(signal: Signal, N: int = DEFAULT_HANKEL, order: OrderSelection = KneePoint(),
           alpha_max: float | None = None) -> ModeSet:
    """Plain ESPRIT on the first 2N samples, amplitudes fitted on the whole signal.

    Complex (heterodyned) signals go through :func:`esprit_poles` instead.
    """
    if not signal.is_real:
        raise InputError("esprit() expects a real signal; use esprit_poles() for complex data")
    poles, sv, M = esprit_poles(signal.samples, N, order)
    amax = default_alpha_max(N) if alpha_max is None else alpha_max
    w, a, dropped = poles_to_modes(poles, real=True, alpha_max=amax)
    w, a = _dedupe(w, a, signal.samples, True)
    if w.shape[0] == 0:
        raise NumericalError("no stable modes survived pole filtering")
    meta = {"order": M, "dropped": dropped, "singular_values": sv, "hankel": N}
    return estimate_amplitudes(signal, w, a, Source.PLAIN, meta)
