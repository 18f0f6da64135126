"""Domain types, synthetic signal generation and error metrics."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ALPHA_TOL = 1e-9
DB_FLOOR = -300.0


class ModalError(Exception):
    """Base class for estimation failures."""


class InputError(ModalError, ValueError):
    """Caller supplied data that cannot be processed."""


class NumericalError(ModalError, ArithmeticError):
    """A numerical step failed (singular basis, unstable filter, ...)."""


# --------------------------------------------------------------------------
# Signal
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled time series.

    Real signals are stored as float64, complex ones as complex128.  The
    sample buffer is made read-only so the value can be shared freely.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 1 or x.shape[0] < 1:
            raise InputError("signal needs at least one sample in a 1-D array")
        if not self.sample_rate > 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        x = np.array(x, dtype=np.complex128 if np.iscomplexobj(x) else np.float64)
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def with_samples(self, samples, sample_rate=None) -> "Signal":
        return Signal(samples, self.sample_rate if sample_rate is None else sample_rate)


# --------------------------------------------------------------------------
# Mode / ModeSet
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Mode:
    """One exponentially damped sinusoid.

    ``omega`` is in rad/sample, ``alpha`` in nepers/sample.  The sample at time
    t is ``exp(-alpha t) * (gamma_s sin(omega t) + gamma_c cos(omega t))``,
    which equals ``Re(gamma * pole**t)`` with ``gamma = gamma_c - 1j*gamma_s``.
    """

    omega: float
    alpha: float
    gamma_s: float = 0.0
    gamma_c: float = 0.0

    def __post_init__(self):
        for name in ("omega", "alpha", "gamma_s", "gamma_c"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0.0 <= self.omega <= math.pi):
            raise InputError(f"mode frequency {self.omega} outside [0, pi]")
        if not (self.alpha >= -ALPHA_TOL) or not math.isfinite(self.alpha):
            raise InputError(f"mode decay {self.alpha} below -{ALPHA_TOL} (unstable)")

    @property
    def pole(self) -> complex:
        return complex(np.exp(1j * self.omega - self.alpha))

    @property
    def gamma(self) -> complex:
        return complex(self.gamma_c, -self.gamma_s)

    @classmethod
    def from_complex(cls, omega, alpha, gamma: complex) -> "Mode":
        return cls(omega, alpha, gamma_s=-gamma.imag, gamma_c=gamma.real)

    def freq_hz(self, sample_rate: float) -> float:
        return self.omega * sample_rate / (2 * math.pi)

    def t60(self, sample_rate: float) -> float:
        """Seconds for the envelope to fall by 60 dB (inf when undamped)."""
        if self.alpha <= 0:
            return math.inf
        return math.log(1000.0) / self.alpha / sample_rate


class Source(enum.Enum):
    PLAIN = "plain"
    WARPED = "warped"
    MERGED = "merged"
    SUBBAND = "subband"
    OPTIMIZED = "optimized"


@dataclass(frozen=True)
class ModeSet:
    """Frequency-ordered modes plus provenance.

    ``meta`` holds free-form diagnostics (dropped-mode counts, singular values,
    per-band reports); it does not take part in equality.
    """

    modes: tuple[Mode, ...]
    source: Source
    sample_rate: float
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        modes = sorted(self.modes, key=lambda m: (m.omega, m.alpha))
        for a, b in zip(modes, modes[1:]):
            if abs(a.omega - b.omega) <= 1e-12 and abs(a.alpha - b.alpha) <= 1e-12:
                raise InputError(
                    f"duplicate mode (omega={a.omega!r}, alpha={a.alpha!r}) in mode set"
                )
        object.__setattr__(self, "modes", tuple(modes))
        object.__setattr__(self, "source", Source(self.source))
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @classmethod
    def from_arrays(cls, omegas, alphas, gamma_s=None, gamma_c=None, *, source,
                    sample_rate, meta=None) -> "ModeSet":
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        gs = np.zeros_like(omegas) if gamma_s is None else np.asarray(gamma_s, dtype=float)
        gc = np.zeros_like(omegas) if gamma_c is None else np.asarray(gamma_c, dtype=float)
        modes = tuple(Mode(w, a, s, c) for w, a, s, c in zip(omegas, alphas, gs, gc))
        return cls(modes, source, sample_rate, dict(meta or {}))

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([m.alpha for m in self.modes])

    @property
    def gamma_s(self) -> np.ndarray:
        return np.array([m.gamma_s for m in self.modes])

    @property
    def gamma_c(self) -> np.ndarray:
        return np.array([m.gamma_c for m in self.modes])

    @property
    def freqs_hz(self) -> np.ndarray:
        return self.omegas * self.sample_rate / (2 * np.pi)

    def replace(self, **kw) -> "ModeSet":
        args = dict(modes=self.modes, source=self.source, sample_rate=self.sample_rate,
                    meta=dict(self.meta))
        args.update(kw)
        return ModeSet(**args)


# --------------------------------------------------------------------------
# real sine/cosine basis and least-squares amplitudes
# --------------------------------------------------------------------------

def real_basis(omegas, alphas, t) -> np.ndarray:
    """Columns ``[e^{-a t} sin(w t) ... | e^{-a t} cos(w t) ...]`` (T x 2M)."""
    t = np.asarray(t, dtype=float)[:, None]
    env = np.exp(-np.asarray(alphas, dtype=float)[None, :] * t)
    ph = np.asarray(omegas, dtype=float)[None, :] * t
    return np.hstack([env * np.sin(ph), env * np.cos(ph)])


def fit_real_amplitudes(omegas, alphas, h, t=None):
    """Least-squares (gamma_s, gamma_c) for a real signal.

    Sine columns that vanish identically (modes at DC or Nyquist) are left out
    of the solve and get gamma_s = 0.  Raises NumericalError when two modes
    collide and make the basis singular.
    """
    omegas = np.asarray(omegas, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    h = np.asarray(h, dtype=float)
    m = omegas.shape[0]
    if t is None:
        t = np.arange(h.shape[0])
    if m == 0:
        return np.zeros(0), np.zeros(0)
    if h.shape[0] < 2 * m:
        raise InputError(f"need at least {2 * m} samples to fit {m} modes, got {h.shape[0]}")
    B = real_basis(omegas, alphas, t)
    edge = np.isclose(np.sin(omegas), 0.0, atol=1e-15)
    keep = np.concatenate([~edge, np.ones(m, dtype=bool)])
    coef, _, rank, _ = np.linalg.lstsq(B[:, keep], h, rcond=None)
    if rank < keep.sum():
        _raise_collisions(omegas, alphas)
    full = np.zeros(2 * m)
    full[keep] = coef
    return full[:m], full[m:]


def fit_complex_amplitudes(omegas, alphas, h, t=None) -> np.ndarray:
    """Least-squares complex gammas for ``h(t) = sum gamma e^{(jw - a)t}``."""
    omegas = np.asarray(omegas, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    h = np.asarray(h, dtype=complex)
    if t is None:
        t = np.arange(h.shape[0])
    V = np.exp(np.outer(np.asarray(t, dtype=float), 1j * omegas - alphas))
    coef, _, rank, _ = np.linalg.lstsq(V, h, rcond=None)
    if rank < omegas.shape[0]:
        _raise_collisions(omegas, alphas)
    return coef


def _raise_collisions(omegas, alphas, tol=1e-8):
    pairs = []
    order = np.argsort(omegas, kind="stable")
    for i, j in zip(order, order[1:]):
        if abs(omegas[i] - omegas[j]) + abs(alphas[i] - alphas[j]) < tol:
            pairs.append((int(i), int(j)))
    if pairs:
        raise NumericalError(f"singular mode basis; colliding mode indices {pairs}")
    log.warning("mode basis is numerically rank deficient; using minimum-norm amplitudes")


# --------------------------------------------------------------------------
# synthetic generator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Partial:
    """A partial made of 1-3 detuned modes (single, pair or triplet string).

    Give either ``freq_hz`` or ``harmonic`` (partial number, resolved against
    the owning spec's ``f0`` and inharmonicity).  ``alpha`` (nepers/sample) and
    the amplitudes are scalars or one value per cluster member.  Members sit at
    ``freq + detune_hz * (k - (cluster - 1) / 2)``.
    """

    freq_hz: float | None = None
    harmonic: int | None = None
    alpha: float | Sequence[float] = 0.0
    gamma_c: float | Sequence[float] = 1.0
    gamma_s: float | Sequence[float] = 0.0
    detune_hz: float = 0.0
    cluster: int = 1

    def __post_init__(self):
        if (self.freq_hz is None) == (self.harmonic is None):
            raise InputError("a partial needs exactly one of freq_hz / harmonic")
        if self.cluster not in (1, 2, 3):
            raise InputError(f"cluster size must be 1, 2 or 3, got {self.cluster}")


@dataclass(frozen=True)
class SyntheticSpec:
    partials: tuple[Partial, ...]
    f0: float | None = None
    inharmonicity: float = 0.0
    noise_snr_db: float | None = None
    seed: int = 0

    def __or__(self, other: "SyntheticSpec") -> "SyntheticSpec":
        """Union of partials; harmonic settings come from whichever side has an f0.

        Noise settings are taken from the left operand.
        """
        if self.f0 is not None and other.f0 is not None and (
                self.f0, self.inharmonicity) != (other.f0, other.inharmonicity):
            raise InputError("cannot combine specs with different f0 or inharmonicity")
        harm = self if self.f0 is not None else other
        return SyntheticSpec(tuple(self.partials) + tuple(other.partials), harm.f0,
                             harm.inharmonicity, self.noise_snr_db, self.seed)

    def partial_frequency(self, p: Partial) -> float:
        if p.freq_hz is not None:
            return float(p.freq_hz)
        if self.f0 is None:
            raise InputError("harmonic partials need f0")
        n = p.harmonic
        return n * self.f0 * math.sqrt(1.0 + self.inharmonicity * n * n)

    def modes(self, sample_rate: float) -> ModeSet:
        """Ground-truth modes at ``sample_rate``; rejects anything at or above Nyquist."""
        rows = []
        for idx, p in enumerate(self.partials):
            f = self.partial_frequency(p)
            k = np.arange(p.cluster)
            freqs = f + p.detune_hz * (k - (p.cluster - 1) / 2.0)
            alphas = np.broadcast_to(np.asarray(p.alpha, dtype=float), (p.cluster,))
            gc = np.broadcast_to(np.asarray(p.gamma_c, dtype=float), (p.cluster,))
            gs = np.broadcast_to(np.asarray(p.gamma_s, dtype=float), (p.cluster,))
            for fk, ak, sk, ck in zip(freqs, alphas, gs, gc):
                if fk >= sample_rate / 2 or fk < 0:
                    raise InputError(
                        f"partial {idx}: frequency {fk} Hz outside [0, {sample_rate / 2}) Hz"
                    )
                rows.append(Mode(2 * math.pi * fk / sample_rate, ak, sk, ck))
        return ModeSet(tuple(rows), Source.PLAIN, sample_rate, {"synthetic": True})


def evaluate_modes(omegas, alphas, gamma_s, gamma_c, n: int, chunk: int = 8192) -> np.ndarray:
    """Direct sine/cosine evaluation of a sum of modes over t = 0..n-1."""
    out = np.zeros(n)
    omegas = np.asarray(omegas, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    gs = np.asarray(gamma_s, dtype=float)
    gc = np.asarray(gamma_c, dtype=float)
    for start in range(0, n, chunk):
        t = np.arange(start, min(n, start + chunk), dtype=float)[:, None]
        env = np.exp(-alphas[None, :] * t)
        ph = omegas[None, :] * t
        out[start:start + t.shape[0]] = (env * (gs * np.sin(ph) + gc * np.cos(ph))).sum(axis=1)
    return out


def generate(spec: SyntheticSpec, duration_samples: int, sample_rate: float) -> Signal:
    """Render a synthetic impulse response, with optional white Gaussian noise."""
    if duration_samples < 1:
        raise InputError("duration must be at least one sample")
    ms = spec.modes(sample_rate)
    x = evaluate_modes(ms.omegas, ms.alphas, ms.gamma_s, ms.gamma_c, int(duration_samples))
    if spec.noise_snr_db is not None:
        rng = np.random.default_rng(spec.seed)
        p = np.mean(x ** 2)
        x = x + rng.standard_normal(x.shape[0]) * math.sqrt(p * 10 ** (-spec.noise_snr_db / 10))
    return Signal(x, sample_rate)


def piano_like_spec(f0=220.0, n_partials=60, inharmonicity=1e-4, sample_rate=44100.0,
                    t60_prompt=0.4, t60_after=3.0, detune_range=(0.2, 0.4), seed=0,
                    noise_snr_db=None) -> SyntheticSpec:
    """Inharmonic note with detuned triplets and two-stage decay.

    Each triplet gets one fast-decaying and two slowly decaying strings, so the
    summed partial shows a prompt sound followed by an aftersound.  Partial
    amplitudes roll off as 1/n; detunings are drawn uniformly from
    ``detune_range`` with a fixed seed.
    """
    rng = np.random.default_rng(seed)
    nyq = sample_rate / 2
    parts = []
    for n in range(1, n_partials + 1):
        f = n * f0 * math.sqrt(1 + inharmonicity * n * n)
        d = float(rng.uniform(*detune_range))
        if f + d >= nyq:
            break
        scale = 1.0 + 0.02 * n  # higher partials die faster
        fast = math.log(1000) / (t60_prompt * sample_rate) * scale
        slow = math.log(1000) / (t60_after * sample_rate) * scale
        phase = rng.uniform(0, 2 * np.pi, 3)
        amp = 1.0 / n
        parts.append(Partial(harmonic=n, alpha=(fast, slow, slow * 1.3),
                             gamma_c=tuple(amp * np.cos(phase) * (1.0, 0.5, 0.4)),
                             gamma_s=tuple(amp * np.sin(phase) * (1.0, 0.5, 0.4)),
                             detune_hz=d, cluster=3))
    return SyntheticSpec(tuple(parts), f0=f0, inharmonicity=inharmonicity,
                         noise_snr_db=noise_snr_db, seed=seed)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def to_db(power_ratio, floor=DB_FLOOR):
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(power_ratio), floor)


def mse_db(measured: Signal, modeled: Signal) -> float:
    """Energy-normalized squared error in dB, floored at -300 dB."""
    if len(measured) != len(modeled):
        raise InputError(f"length mismatch: {len(measured)} vs {len(modeled)}")
    if measured.sample_rate != modeled.sample_rate:
        raise InputError("sample-rate mismatch")
    h = measured.samples
    e = np.sum(np.abs(h - modeled.samples) ** 2)
    ref = np.sum(np.abs(h) ** 2)
    if ref == 0:
        raise InputError("measured signal is all zeros; NMSE is undefined")
    return float(to_db(e / ref))
