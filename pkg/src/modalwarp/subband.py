"""Frequency-zoomed estimation: heterodyne, lowpass, decimate, estimate per band."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from . import _kernels
from .core import InputError, ModeSet, NumericalError, Signal, Source, fit_real_amplitudes
from .esprit import (
    KneePoint,
    OrderSelection,
    build_hankel,
    default_alpha_max,
    estimate_poles,
    hankel_svd,
    poles_to_modes,
    select_order,
)
from .warp import warp_frequency

log = logging.getLogger(__name__)


class FilterFamily(enum.Enum):
    BUTTERWORTH = "butterworth"
    # sharp-stopband spec realized as a Butterworth of whatever order reaches it
    ELLIPTIC_LIKE = "elliptic-like"


@dataclass(frozen=True)
class FilterSpec:
    """Lowpass applied to a heterodyned band; ``cutoff`` is the band half-width in Hz."""

    family: FilterFamily = FilterFamily.BUTTERWORTH
    order: int = 4
    cutoff: float = 100.0
    stopband_db: float | None = None
    passband_ripple_db: float | None = None
    max_order: int = 24

    def __post_init__(self):
        if self.order < 1:
            raise InputError("filter order must be >= 1")
        if not self.cutoff > 0:
            raise InputError("filter cutoff must be positive")
        object.__setattr__(self, "family", FilterFamily(self.family))


@dataclass(frozen=True)
class Band:
    center: float
    bandwidth: float  # lowpass cutoff (half-width), Hz
    decimation: int
    filter: FilterSpec
    max_modes: int
    lo: float = 0.0  # ownership region [lo, hi) in Hz
    hi: float = math.inf


class Scheme(enum.Enum):
    HARMONIC = "harmonic-inharmonic"
    BARK = "bark-spaced"
    UNIFORM = "uniform-grid"


@dataclass(frozen=True)
class BandPlan:
    bands: tuple[Band, ...]
    sample_rate: float
    scheme: Scheme
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        centers = [b.center for b in self.bands]
        if any(b >= a for a, b in zip(centers[1:], centers)):
            raise InputError("band centers must be strictly increasing")
        nyq = self.sample_rate / 2
        for i, b in enumerate(self.bands):
            if not 0 <= b.center < nyq:
                raise InputError(f"band {i} center {b.center} Hz not below Nyquist {nyq}")
            if b.bandwidth * b.decimation >= nyq:
                raise InputError(
                    f"band {i}: bandwidth {b.bandwidth} Hz x decimation {b.decimation} "
                    f"aliases (must stay below {nyq} Hz)"
                )

    def owner(self, freq_hz: float) -> int | None:
        for i, b in enumerate(self.bands):
            if b.lo <= freq_hz < b.hi:
                return i
        return None


def _ownership(centers, nyq):
    mids = [(a + b) / 2 for a, b in zip(centers, centers[1:])]
    return [0.0] + mids, mids + [nyq + 1e-9]


def _cap_decimation(bw, r, nyq):
    """Largest factor <= r that keeps ``bw * factor`` below Nyquist."""
    limit = math.ceil(nyq / bw) - 1
    return max(1, min(int(r), limit))


def _make_plan(centers, widths, sample_rate, r, filt, max_modes, scheme, params):
    nyq = sample_rate / 2
    lo, hi = _ownership(centers, nyq)
    bands = []
    capped = 0
    for c, w, l, h in zip(centers, widths, lo, hi):
        d = _cap_decimation(w, r, nyq)
        capped += d < r
        bands.append(Band(float(c), float(w), d, replace(filt, cutoff=float(w)), int(max_modes),
                          float(l), float(h)))
    if capped:
        log.info("decimation reduced below %d in %d bands to avoid aliasing", r, capped)
    return BandPlan(tuple(bands), float(sample_rate), scheme, dict(params, decimation=r))


def plan_harmonic(f0: float, inharmonicity: float, n_partials: int, sample_rate: float,
                  decimation: int = 8, bw_fraction: float = 0.1, max_modes: int = 12,
                  filt: FilterSpec | None = None) -> BandPlan:
    """One band per stiff-string partial ``n f0 sqrt(1 + B n^2)``."""
    if f0 <= 0:
        raise InputError("f0 must be positive")
    nyq = sample_rate / 2
    n = np.arange(1, n_partials + 1)
    centers = n * f0 * np.sqrt(1 + inharmonicity * n * n)
    centers = centers[centers < nyq]
    if len(centers) < n_partials:
        log.info("dropped %d partials above Nyquist", n_partials - len(centers))
    bw = bw_fraction * f0
    filt = filt or FilterSpec(FilterFamily.BUTTERWORTH, 4, bw)
    return _make_plan(centers, [bw] * len(centers), sample_rate, decimation, filt, max_modes,
                      Scheme.HARMONIC, {"f0": f0, "B": inharmonicity, "bw_fraction": bw_fraction})


def _widths(centers, overlap):
    gaps = np.diff(centers)
    gaps = np.append(gaps, gaps[-1]) if len(gaps) else np.array([centers[0]])
    return overlap * gaps / 2


def plan_bark(n_bands: int, sample_rate: float, rho: float, overlap: float = 1.2,
              decimation: int = 8, max_modes: int = 100,
              filt: FilterSpec | None = None) -> BandPlan:
    """Uniform centers ``(2n - 1) fs / (4 N_b)`` pulled onto a Bark-like axis.

    The uniform grid is mapped through the inverse of the warping used by
    :func:`~modalwarp.warp.warp_signal`, which packs bands densely at low
    frequencies for positive ``rho``.  Half-widths are ``overlap`` times half
    the spacing to the next center.
    """
    if n_bands < 2:
        raise InputError("need at least two bands")
    uni = uniform_centers(n_bands, sample_rate)
    w = warp_frequency(2 * np.pi * uni / sample_rate, -rho)
    centers = np.asarray(w) * sample_rate / (2 * np.pi)
    filt = filt or FilterSpec(FilterFamily.ELLIPTIC_LIKE, 7, 1.0, stopband_db=80.0,
                              passband_ripple_db=1.5)
    return _make_plan(centers, _widths(centers, overlap), sample_rate, decimation, filt,
                      max_modes, Scheme.BARK, {"rho": rho, "overlap": overlap})


def uniform_centers(n_bands, sample_rate):
    n = np.arange(1, n_bands + 1)
    return (2 * n - 1) * sample_rate / (4 * n_bands)


def plan_uniform(n_bands: int, sample_rate: float, overlap: float = 1.2, decimation: int = 8,
                 max_modes: int = 100, filt: FilterSpec | None = None) -> BandPlan:
    centers = uniform_centers(n_bands, sample_rate)
    filt = filt or FilterSpec(FilterFamily.BUTTERWORTH, 8, 1.0)
    return _make_plan(centers, _widths(centers, overlap), sample_rate, decimation, filt,
                      max_modes, Scheme.UNIFORM, {"overlap": overlap})


# --------------------------------------------------------------------------
# filtering
# --------------------------------------------------------------------------

def design_lowpass(spec: FilterSpec, sample_rate: float, decimation: int = 1) -> np.ndarray:
    """Butterworth lowpass as second-order sections (analog prototype + bilinear).

    For the sharp family the order is raised until the response is
    ``stopband_db`` down at the first frequency that aliases onto the passband
    after decimation, ``fs / r - cutoff`` (or ``2 * cutoff`` without decimation).
    """
    nyq = sample_rate / 2
    if spec.cutoff >= nyq / decimation:
        raise InputError(
            f"cutoff {spec.cutoff} Hz is not below the decimated Nyquist {nyq / decimation} Hz"
        )
    order = spec.order
    if spec.family is FilterFamily.ELLIPTIC_LIKE and spec.stopband_db:
        stop = sample_rate / decimation - spec.cutoff if decimation > 1 else 2 * spec.cutoff
        stop = min(stop, nyq * 0.999)
        n, _ = sps.buttord(spec.cutoff, stop, spec.passband_ripple_db or 3.0,
                           spec.stopband_db, fs=sample_rate)
        order = int(min(max(order, n), spec.max_order))
    sos = sps.butter(order, spec.cutoff, btype="low", output="sos", fs=sample_rate)
    poles = np.concatenate([np.roots(s[3:]) for s in sos])
    if np.any(np.abs(poles) >= 1):
        raise NumericalError(f"designed lowpass is unstable (max |pole| {np.abs(poles).max()})")
    return sos


def settle_samples(sos: np.ndarray, level_db: float = 100.0) -> int:
    """Samples until the slowest filter pole has decayed by ``level_db``."""
    poles = np.concatenate([np.roots(s[3:]) for s in sos])
    rmax = float(np.abs(poles).max())
    if rmax <= 0:
        return 0
    return int(math.ceil(level_db / 20 * math.log(10) / -math.log(rmax)))


def heterodyne(signal: Signal, f_n: float) -> Signal:
    """Shift ``f_n`` to DC: ``h(t) exp(-j 2 pi f_n t / fs)``."""
    t = np.arange(len(signal))
    shift = np.exp(-2j * np.pi * f_n * t / signal.sample_rate)
    return Signal(signal.samples * shift, signal.sample_rate)


def lowpass_decimate(signal: Signal, spec: FilterSpec, r: int, sos=None) -> Signal:
    """IIR lowpass (SOS cascade) then keep every r-th sample."""
    if r < 1:
        raise InputError("decimation factor must be >= 1")
    if sos is None:
        sos = design_lowpass(spec, signal.sample_rate, r)
    y = _kernels.sosfilt(sos, signal.samples)
    return Signal(y[::r], signal.sample_rate / r)


# --------------------------------------------------------------------------
# band estimation and recombination
# --------------------------------------------------------------------------

def band_modes_to_global(omegas, alphas, f_n: float, r: int, sample_rate: float):
    """Map band-rate (omega, alpha) back to the full rate.

    Returns ``(omegas, alphas, n_dropped)``; modes landing outside [0, pi) are
    dropped.
    """
    omegas = np.asarray(omegas, dtype=float) / r + 2 * np.pi * f_n / sample_rate
    alphas = np.asarray(alphas, dtype=float) / r
    ok = (omegas >= 0) & (omegas < np.pi)
    return omegas[ok], alphas[ok], int(np.count_nonzero(~ok))


@dataclass
class BandResult:
    index: int
    omegas: np.ndarray
    alphas: np.ndarray
    used: int
    cap: int
    discarded: int = 0
    error: str | None = None

    def report(self) -> dict:
        return {"band": self.index, "modes": int(self.omegas.shape[0]), "order": self.used,
                "cap": self.cap, "discarded": self.discarded, "error": self.error}


@dataclass
class _Prepared:
    x: np.ndarray
    N: int
    svd: tuple
    error: str | None = None


def _prepare_band(signal: Signal, band: Band, hankel: int, settle_db: float) -> _Prepared:
    """Heterodyne, filter, decimate, drop the filter transient and take the SVD."""
    fs = signal.sample_rate
    r = band.decimation
    try:
        sos = design_lowpass(band.filter, fs, r)
        skip = -(-settle_samples(sos, settle_db) // r)
        x = lowpass_decimate(heterodyne(signal, band.center), band.filter, r, sos).samples[skip:]
        N = min(hankel, x.shape[0] // 2)
        if N < 2:
            raise InputError(f"only {x.shape[0]} settled samples left after decimation")
        pair = build_hankel(x, N)
        return _Prepared(x, N, hankel_svd(pair))
    except (InputError, NumericalError, np.linalg.LinAlgError) as exc:
        return _Prepared(np.zeros(0, complex), 0, (), str(exc))


def _band_modes(prep: _Prepared, plan: BandPlan, index: int, order: OrderSelection,
                cap: int, floor: float) -> BandResult:
    band = plan.bands[index]
    fs = plan.sample_rate
    if prep.error is not None:
        log.warning("band %d failed: %s", index, prep.error)
        return BandResult(index, np.zeros(0), np.zeros(0), 0, cap, error=prep.error)
    sv = prep.svd[1]
    n_above = int(np.count_nonzero(sv > floor))
    if n_above == 0:
        return BandResult(index, np.zeros(0), np.zeros(0), 0, cap)
    M = min(select_order(sv, order), cap, prep.N, n_above)
    try:
        poles = estimate_poles(build_hankel(prep.x, prep.N), M, prep.svd)
    except NumericalError as exc:
        log.warning("band %d failed: %s", index, exc)
        return BandResult(index, np.zeros(0), np.zeros(0), 0, cap, error=str(exc))
    # complex band signal: both half-planes are meaningful
    w, a, _ = poles_to_modes(poles, real=False, alpha_max=default_alpha_max(prep.N))
    w, a, dropped = band_modes_to_global(w, a, band.center, band.decimation, fs)
    f = w * fs / (2 * np.pi)
    own = (f >= band.lo) & (f < band.hi)
    return BandResult(index, w[own], a[own], M, cap, int(np.count_nonzero(~own)) + dropped)


def redistribute(caps, used):
    """Share the unused budget of under-full bands equally among the full ones.

    ``used`` counts the modes each band kept after the ownership discard, so a
    band whose order was spent on a neighbour's leakage still donates.
    """
    caps = list(caps)
    spare = sum(c - u for c, u in zip(caps, used) if u < c)
    full = [i for i, (c, u) in enumerate(zip(caps, used)) if u >= c]
    if not full or spare <= 0:
        return caps
    extra, rem = divmod(spare, len(full))
    for k, i in enumerate(full):
        caps[i] += extra + (1 if k < rem else 0)
    return caps


def fz_esprit(signal: Signal, plan: BandPlan, order: OrderSelection = KneePoint(),
              hankel: int = 512, settle_db: float = 100.0, floor_db: float = -60.0) -> ModeSet:
    """Band-by-band ESPRIT with ownership discard and budget redistribution.

    Every band is estimated with its own cap; bands that stop short of their
    cap donate the remainder, which is split equally among bands that hit
    theirs, and those bands are estimated again.  Singular values more than
    ``floor_db`` below the strongest band's largest one are treated as
    stopband leakage and never become modes.  Amplitudes are fitted jointly on
    the full-rate signal at the end.
    """
    if not signal.is_real:
        raise InputError("fz_esprit expects a real signal")
    if plan.sample_rate != signal.sample_rate:
        raise InputError("band plan and signal sample rates differ")
    preps = [_prepare_band(signal, b, hankel, settle_db) for b in plan.bands]
    peak = max((p.svd[1][0] / p.N for p in preps if p.error is None), default=0.0)
    if peak <= 0:
        raise NumericalError("no band produced a usable decimated signal")
    caps = [b.max_modes for b in plan.bands]

    def run(i, cap):
        p = preps[i]
        floor = peak * p.N * 10 ** (floor_db / 20) if p.error is None else 0.0
        return _band_modes(p, plan, i, order, cap, floor)

    results = [run(i, caps[i]) for i in range(len(plan.bands))]
    new_caps = redistribute(caps, [r.omegas.shape[0] for r in results])
    for i, (old, new) in enumerate(zip(caps, new_caps)):
        if new > old and results[i].error is None:
            results[i] = run(i, new)
    w = np.concatenate([r.omegas for r in results])
    a = np.concatenate([r.alphas for r in results])
    if w.shape[0] == 0:
        raise NumericalError("no band produced any modes")
    srt = np.lexsort((a, w))
    w, a = w[srt], a[srt]
    gs, gc = fit_real_amplitudes(w, a, signal.samples)
    meta = {"bands": [r.report() for r in results], "caps": new_caps,
            "budget": int(sum(caps))}
    return ModeSet.from_arrays(w, a, gs, gc, source=Source.SUBBAND,
                               sample_rate=signal.sample_rate, meta=meta)
