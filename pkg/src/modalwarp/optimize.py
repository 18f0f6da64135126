"""Time-domain refinement of mode frequencies and decays under box constraints.

The parameter vector is ``theta = [alpha_1..alpha_M, omega_1..omega_M]``.  For
fixed amplitudes the model is linear in (gamma_s, gamma_c), so every accepted
step is followed by a least-squares refit of the amplitudes; the cost can only
go down across both.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    InputError,
    ModeSet,
    NumericalError,
    Signal,
    Source,
    fit_real_amplitudes,
    real_basis,
)
from .subband import BandPlan, design_lowpass, heterodyne, settle_samples

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptConfig:
    """Search windows and stopping rules.

    ``delta_omega_hz`` is the half-width of the frequency window, and
    ``delta_alpha_rel`` the decay window relative to each initial decay.
    ``cost_tol`` applies to J = 0.5 ||h - h_hat||^2 in signal units;
    ``step_tol`` to the largest parameter change (rad/sample, nepers/sample).
    """

    delta_omega_hz: float = 0.5
    delta_alpha_rel: float = 0.1
    max_fevals: int = 500
    cost_tol: float = 1e-4
    step_tol: float = 1e-9
    max_band_iters: int = 100
    settle_db: float = 60.0

    def __post_init__(self):
        if self.delta_omega_hz < 0 or self.delta_alpha_rel < 0:
            raise InputError("optimization windows must be >= 0")
        if min(self.max_fevals, self.max_band_iters) < 1:
            raise InputError("iteration budgets must be >= 1")
        if not (self.cost_tol > 0 and self.step_tol > 0):
            raise InputError("tolerances must be positive")


# --------------------------------------------------------------------------
# model, cost, gradient
# --------------------------------------------------------------------------

def _split(theta):
    theta = np.asarray(theta, dtype=float)
    m = theta.shape[0] // 2
    return theta[:m], theta[m:]


def _times(n_or_t):
    if np.ndim(n_or_t) == 0:
        return np.arange(int(n_or_t), dtype=float)
    return np.asarray(n_or_t, dtype=float)


def model_signal(theta, gamma_s, gamma_c, T) -> np.ndarray:
    """``sum_m e^{-a t} (gs sin(w t) + gc cos(w t))`` for t = 0..T-1 (or given times)."""
    alphas, omegas = _split(theta)
    B = real_basis(omegas, alphas, _times(T))
    return B @ np.concatenate([gamma_s, gamma_c])


def jacobian(theta, gamma_s, gamma_c, T) -> np.ndarray:
    """d h_hat / d theta, shape (T, 2M); columns ordered like theta."""
    alphas, omegas = _split(theta)
    t = _times(T)[:, None]
    env = np.exp(-alphas[None, :] * t)
    s = np.sin(omegas[None, :] * t)
    c = np.cos(omegas[None, :] * t)
    gs = np.asarray(gamma_s, dtype=float)[None, :]
    gc = np.asarray(gamma_c, dtype=float)[None, :]
    d_alpha = -t * env * (gs * s + gc * c)
    d_omega = t * env * (gs * c - gc * s)
    return np.hstack([d_alpha, d_omega])


def cost(theta, gamma_s, gamma_c, h, t=None) -> float:
    h = np.asarray(h, dtype=float)
    r = h - model_signal(theta, gamma_s, gamma_c, h.shape[0] if t is None else t)
    with np.errstate(over="ignore"):  # callers check for a non-finite cost
        return 0.5 * float(r @ r)


def gradient(theta, gamma_s, gamma_c, h, t=None) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    tt = h.shape[0] if t is None else t
    r = model_signal(theta, gamma_s, gamma_c, tt) - h
    return jacobian(theta, gamma_s, gamma_c, tt).T @ r


def refit_amplitudes(theta, h, t=None):
    """Least-squares (gamma_s, gamma_c) for fixed theta."""
    alphas, omegas = _split(theta)
    return fit_real_amplitudes(omegas, alphas, h, t)


# --------------------------------------------------------------------------
# box + ordering
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def project(self, theta):
        """Clip to the box, then sort the frequencies.

        The frequency bounds are ascending, so the sorted vector stays inside
        the box: the k-th smallest value is bounded by the k-th bounds.
        """
        x = np.clip(theta, self.lo, self.hi)
        m = x.shape[0] // 2
        x[m:] = np.sort(x[m:])
        return x

    def contains(self, theta) -> bool:
        m = theta.shape[0] // 2
        return bool(np.all(theta >= self.lo) and np.all(theta <= self.hi)
                    and np.all(np.diff(theta[m:]) >= 0))


def make_box(init: ModeSet, cfg: OptConfig) -> Box:
    a0, w0 = init.alphas, init.omegas
    dw = 2 * np.pi * cfg.delta_omega_hz / init.sample_rate
    da = cfg.delta_alpha_rel * np.abs(a0)
    lo = np.concatenate([np.maximum(a0 - da, np.minimum(a0, 0.0)), np.maximum(w0 - dw, 0.0)])
    hi = np.concatenate([a0 + da, np.minimum(w0 + dw, np.pi)])
    return Box(lo, hi)


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

@dataclass
class OptTrace:
    history: list  # J after every accepted step (and the start)
    iterates: list  # theta at the start and after every accepted step
    fevals: int = 0
    iterations: int = 0
    reason: str = ""


def _lm(h, t, theta, box: Box, cfg: OptConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, OptTrace]:
    gs, gc = refit_amplitudes(theta, h, t)
    J = cost(theta, gs, gc, h, t)
    if not math.isfinite(J):
        raise NumericalError("cost is not finite at the initial point")
    tr = OptTrace([J], [theta.copy()], fevals=1)
    lam = 1e-3
    while True:
        if J <= cfg.cost_tol:
            tr.reason = "cost"
            break
        if tr.fevals >= cfg.max_fevals:
            tr.reason = "fevals"
            break
        if tr.iterations >= cfg.max_band_iters:
            tr.reason = "iterations"
            break
        D = jacobian(theta, gs, gc, t)
        r = model_signal(theta, gs, gc, t) - h
        g = D.T @ r
        A = D.T @ D
        scale = np.maximum(np.diag(A), 1e-300)
        accepted = False
        while tr.fevals < cfg.max_fevals:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = box.project(theta + step)
            taken = trial - theta
            if np.max(np.abs(taken)) <= cfg.step_tol:
                tr.reason = "step"
                break
            J_try = cost(trial, gs, gc, h, t)
            tr.fevals += 1
            if J_try < J:
                accepted = True
                lam = max(lam / 3, 1e-12)
                break
            lam *= 4
            if lam > 1e16:
                tr.reason = "stalled"
                break
        if not accepted:
            tr.reason = tr.reason or "fevals"
            break
        theta = trial
        gs, gc = refit_amplitudes(theta, h, t)
        J_new = cost(theta, gs, gc, h, t)
        tr.fevals += 1
        # refit is a least-squares solve, so it cannot raise J beyond rounding
        J = min(J_new, J_try) if J_new > J_try * (1 + 1e-12) else J_new
        tr.iterations += 1
        tr.history.append(J)
        tr.iterates.append(theta.copy())
        if np.max(np.abs(taken)) <= cfg.step_tol:
            tr.reason = "step"
            break
    return theta, gs, gc, tr


def optimize_band(h: Signal, init: ModeSet, cfg: OptConfig = OptConfig(),
                  start: int = 0) -> ModeSet:
    """Refine ``init`` against ``h[start:]`` (times keep their absolute index)."""
    if len(init) == 0:
        raise InputError("nothing to optimize: empty initial mode set")
    if not h.is_real:
        raise InputError("optimize_band expects a real signal")
    x = h.samples[start:]
    t = np.arange(start, len(h), dtype=float)
    theta0 = np.concatenate([init.alphas, init.omegas])
    box = make_box(init, cfg)
    theta0 = box.project(theta0)
    theta, gs, gc, tr = _lm(x, t, theta0, box, cfg)
    meta = {"history": tr.history, "iterates": tr.iterates, "fevals": tr.fevals,
            "iterations": tr.iterations, "reason": tr.reason, "box": box,
            "initial_cost": tr.history[0], "final_cost": tr.history[-1]}
    a, w = _split(theta)
    return ModeSet.from_arrays(w, a, gs, gc, source=Source.OPTIMIZED,
                               sample_rate=h.sample_rate, meta=meta)


def band_signal(h: Signal, plan: BandPlan, index: int, sos=None) -> tuple[Signal, np.ndarray]:
    """Real band-limited copy of ``h`` using the band's lowpass around its center.

    Heterodyne down, lowpass, heterodyne back up and keep twice the real part:
    the positive-frequency content of the band passes, everything else is
    suppressed by the lowpass stopband.  Returns ``(signal, sos)``.
    """
    band = plan.bands[index]
    if sos is None:
        sos = design_lowpass(band.filter, h.sample_rate, band.decimation)
    low = _kernels.sosfilt(sos, heterodyne(h, band.center).samples)
    n = np.arange(len(h))
    up = low * np.exp(2j * np.pi * band.center * n / h.sample_rate)
    return Signal(2 * up.real, h.sample_rate), sos


def optimize_all(h: Signal, modes: ModeSet, plan: BandPlan | None = None,
                 cfg: OptConfig = OptConfig()) -> ModeSet:
    """Band-wise refinement followed by one joint amplitude fit on ``h``.

    Without a plan the whole signal is one band.  With a plan, each mode goes
    to the band that owns its frequency; modes outside that band's passband
    and bands that fail keep their initial parameters.
    """
    if len(modes) == 0:
        raise InputError("nothing to optimize: empty mode set")
    fs = h.sample_rate
    if plan is None:
        out = optimize_band(h, modes, cfg)
        return out.replace(meta={**out.meta, "bands": [_band_report(0, out)]})

    w = modes.omegas.copy()
    a = modes.alphas.copy()
    f = modes.freqs_hz
    reports = []
    for i, band in enumerate(plan.bands):
        sel = (f >= band.lo) & (f < band.hi) & (np.abs(f - band.center) <= band.bandwidth)
        if not sel.any():
            continue
        sub = ModeSet.from_arrays(w[sel], a[sel], source=modes.source, sample_rate=fs)
        try:
            hb, sos = band_signal(h, plan, i)
            skip = min(settle_samples(sos, cfg.settle_db), len(h) // 2)
            res = optimize_band(hb, sub, cfg, start=skip)
        except (InputError, NumericalError, np.linalg.LinAlgError) as exc:
            log.warning("band %d optimization failed, keeping initial modes: %s", i, exc)
            reports.append({"band": i, "modes": int(sel.sum()), "error": str(exc)})
            continue
        idx = np.flatnonzero(sel)
        w[idx], a[idx] = res.omegas, res.alphas
        reports.append(_band_report(i, res))
    order = np.lexsort((a, w))
    w, a = w[order], a[order]
    gs, gc = fit_real_amplitudes(w, a, h.samples)
    return ModeSet.from_arrays(w, a, gs, gc, source=Source.OPTIMIZED, sample_rate=fs,
                               meta={"bands": reports})


def _band_report(i, res: ModeSet) -> dict:
    m = res.meta
    return {"band": i, "modes": len(res), "iterations": m["iterations"], "fevals": m["fevals"],
            "reason": m["reason"], "initial_cost": m["initial_cost"],
            "final_cost": m["final_cost"]}
