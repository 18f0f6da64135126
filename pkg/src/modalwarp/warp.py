"""Allpass frequency warping and the warped/plain two-branch estimator.

Convention: a positive warping factor ``rho`` stretches the low end of the
spectrum.  A pole ``p`` maps to ``(p - rho) / (1 - rho p)`` on the warped axis,
so a frequency near DC is multiplied by ``(1 + rho) / (1 - rho)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import InputError, ModeSet, NumericalError, Signal, Source
from .esprit import (
    DEFAULT_HANKEL,
    KneePoint,
    OrderSelection,
    _dedupe,
    default_alpha_max,
    esprit_poles,
    estimate_amplitudes,
    poles_to_modes,
)

log = logging.getLogger(__name__)

UNSTABLE_TOL = 1e-6


@dataclass(frozen=True)
class WarpConfig:
    rho: float
    omega_c: float | None = None
    pre_damp_sigma: float = 0.0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise InputError(f"warping factor must satisfy |rho| < 1, got {self.rho}")
        if self.pre_damp_sigma < 0:
            raise InputError("pre-damping sigma must be >= 0")
        if self.omega_c is None:
            object.__setattr__(self, "omega_c", cutoff(self.rho))


def bark_rho(sample_rate: float) -> float:
    """Allpass coefficient that best approximates the Bark scale (fs in Hz)."""
    fs_khz = sample_rate / 1000.0
    return 1.0674 * math.sqrt(2.0 / math.pi * math.atan(0.06583 * fs_khz)) - 0.1916


def rho_for_zoom(zoom: float) -> float:
    """Warping factor whose low-frequency stretch equals ``zoom``."""
    if zoom < 1:
        raise InputError(f"zoom factor must be >= 1, got {zoom}")
    return (zoom - 1.0) / (zoom + 1.0)


def cutoff(rho: float) -> float:
    """Frequency where the warping map has unit slope."""
    return math.acos(abs(rho))


def warp_frequency(omega, rho):
    """Phase of the allpass at ``omega``, continuous and increasing on [0, pi]."""
    omega = np.asarray(omega, dtype=float)
    num = (1 - rho * rho) * np.sin(omega)
    den = (1 + rho * rho) * np.cos(omega) - 2 * rho
    out = np.arctan2(num, den)
    # sin(pi) rounds to a tiny positive number, arctan2 then gives pi; keep exact ends
    out = np.where(omega <= 0, 0.0, np.where(omega >= np.pi, np.pi, out))
    return out if out.ndim else float(out)


def unwarp_frequency(omega_tilde, rho):
    return warp_frequency(omega_tilde, -rho)


def warp_pole(pole, rho):
    pole = np.asarray(pole, dtype=complex)
    return (pole - rho) / (1 - rho * pole)


def unwarp_pole(pole_tilde, rho):
    """Inverse of :func:`warp_pole` (a Blaschke factor, so the unit circle is kept)."""
    pole_tilde = np.asarray(pole_tilde, dtype=complex)
    return (pole_tilde + rho) / (1 + rho * pole_tilde)


def warp_signal(signal: Signal, rho: float, out_len: int | None = None) -> Signal:
    """Feed the signal through a chain of first-order allpass sections.

    Output sample k is ``sum_t h[t] a_t[k]`` where ``a_t`` is the impulse
    response of t cascaded sections ``(z^-1 + rho) / (1 + rho z^-1)``.  A mode
    with pole p comes out with pole ``warp_pole(p, rho)`` from sample 1 on;
    sample 0 carries an extra direct term.  Cost is O(len * out_len).
    """
    n = len(signal) if out_len is None else int(out_len)
    if n < 1:
        raise InputError("out_len must be >= 1")
    y = _kernels.warp_chain(signal.samples, float(rho), n)
    return signal.with_samples(y)


def pre_damp(signal: Signal, sigma: float) -> Signal:
    """Multiply sample n by ``exp(-sigma n / fs)``."""
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    if sigma == 0:
        return signal
    n = np.arange(len(signal))
    return signal.with_samples(signal.samples * np.exp(-sigma * n / signal.sample_rate))


def undamp_poles(poles, sigma: float, sample_rate: float):
    """Undo :func:`pre_damp` on estimated poles; returns (poles, n_unstable_dropped)."""
    poles = np.asarray(poles, dtype=complex)
    if sigma == 0:
        return poles, 0
    out = poles * math.exp(sigma / sample_rate)
    ok = np.abs(out) <= 1 + UNSTABLE_TOL
    bad = int(np.count_nonzero(~ok))
    if bad:
        log.info("undamping pushed %d poles outside the unit circle; dropped", bad)
    return out[ok], bad


def unwarp_poles(poles_tilde, rho):
    """Vectorized unwarp with instability filtering; returns (poles, n_dropped)."""
    p = unwarp_pole(poles_tilde, rho)
    ok = np.abs(p) <= 1 + UNSTABLE_TOL
    bad = int(np.count_nonzero(~ok))
    if bad:
        log.info("unwarping produced %d unstable poles; dropped", bad)
    return p[ok], bad


def merge_modes(warped: ModeSet, plain: ModeSet, omega_c: float) -> ModeSet:
    """Warped modes below ``omega_c`` plus plain modes at or above it.

    Amplitudes are carried over unchanged; callers re-fit them jointly.
    """
    if warped.sample_rate != plain.sample_rate:
        raise InputError("mode sets have different sample rates")
    low = tuple(m for m in warped.modes if m.omega < omega_c)
    high = tuple(m for m in plain.modes if m.omega >= omega_c)
    meta = {"omega_c": omega_c, "from_warped": len(low), "from_plain": len(high)}
    return ModeSet(low + high, Source.MERGED, warped.sample_rate, meta)


WARP_SKIP = 1  # warped sample 0 holds the chain's direct term, not a mode


def min_warp_length(N: int, rho: float) -> int:
    """Input length below which the cut-off tail reaches the warped window.

    The fastest allpass group delay is ``(1 - |rho|) / (1 + |rho|)`` samples
    per section, so the truncation edge of a length-T input lands near output
    sample ``T (1 - |rho|) / (1 + |rho|)``; it must fall past sample 2N.
    """
    r = abs(rho)
    return int(math.ceil((2 * N + WARP_SKIP) * (1 + r) / (1 - r)))


def fw_esprit(signal: Signal, cfg: WarpConfig, N: int = DEFAULT_HANKEL,
              order: OrderSelection = KneePoint(), alpha_max: float | None = None) -> ModeSet:
    """Two-branch estimate: warped ESPRIT for the low band, plain for the rest.

    The warped branch sees ``warp_signal`` output, its poles are unwarped; the
    plain branch optionally runs on a pre-damped copy and its poles are
    undamped.  The branches are merged at ``cfg.omega_c`` and the amplitudes
    re-fitted jointly on the original signal.
    """
    if not signal.is_real:
        raise InputError("fw_esprit expects a real signal")
    if len(signal) < 2 * N:
        raise InputError(f"Hankel size {N} needs at least {2 * N} samples, got {len(signal)}")
    amax = default_alpha_max(N) if alpha_max is None else alpha_max
    fs = signal.sample_rate
    need = min_warp_length(N, cfg.rho)
    if len(signal) < need:
        log.warning("signal has %d samples; the warped branch may pick up truncation "
                    "artifacts below %d samples", len(signal), need)

    y = warp_signal(signal, cfg.rho, out_len=2 * N + WARP_SKIP)
    wp, wsv, wM = esprit_poles(y.samples, N, order, start=WARP_SKIP)
    winfo = {"order": wM, "singular_values": wsv}
    wp, bad_w = unwarp_poles(wp, cfg.rho)
    ww, wa, drop_w = poles_to_modes(wp, real=True, alpha_max=amax)
    ww, wa = _dedupe(ww, wa, signal.samples)

    damped = pre_damp(signal, cfg.pre_damp_sigma)
    pp, psv, pM = esprit_poles(damped.samples, N, order)
    pinfo = {"order": pM, "singular_values": psv}
    pp, bad_p = undamp_poles(pp, cfg.pre_damp_sigma, fs)
    pw, pa, drop_p = poles_to_modes(pp, real=True, alpha_max=amax)
    pw, pa = _dedupe(pw, pa, signal.samples)

    warped = ModeSet.from_arrays(ww, wa, source=Source.WARPED, sample_rate=fs,
                                 meta={**winfo, "dropped": drop_w + bad_w})
    plain = ModeSet.from_arrays(pw, pa, source=Source.PLAIN, sample_rate=fs,
                                meta={**pinfo, "dropped": drop_p + bad_p})
    merged = merge_modes(warped, plain, cfg.omega_c)
    if len(merged) == 0:
        raise NumericalError("no modes survived the warped/plain merge")
    meta = {
        **merged.meta,
        "rho": cfg.rho,
        "pre_damp_sigma": cfg.pre_damp_sigma,
        "hankel": N,
        "warped_order": winfo["order"],
        "plain_order": pinfo["order"],
        "warped_branch": warped,
        "plain_branch": plain,
    }
    return estimate_amplitudes(signal, merged.omegas, merged.alphas, Source.MERGED, meta)
