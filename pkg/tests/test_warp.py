import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import lfilter

from modalwarp.core import InputError, ModeSet, Signal, Source, mse_db
from modalwarp.esprit import Fixed, KneePoint, esprit_poles
from modalwarp.synth import render
from modalwarp.warp import (
    WARP_SKIP,
    WarpConfig,
    bark_rho,
    cutoff,
    min_warp_length,
    fw_esprit,
    merge_modes,
    pre_damp,
    rho_for_zoom,
    undamp_poles,
    unwarp_frequency,
    unwarp_pole,
    unwarp_poles,
    warp_frequency,
    warp_pole,
    warp_signal,
)

from _helpers import make_modes, signal_of


def bark_oracle(fs_hz):
    fs_khz = fs_hz / 1000.0
    return 1.0674 * (2.0 / math.pi * math.atan(0.06583 * fs_khz)) ** 0.5 - 0.1916


# --------------------------------------------------------------------------
# factors
# --------------------------------------------------------------------------

def test_bark_rho_values():
    assert bark_rho(44100) == pytest.approx(0.7564, abs=1e-4)
    # hand evaluation: atan(3.15984) = 1.264318, sqrt(0.804886) = 0.897154
    assert bark_rho(48000) == pytest.approx(0.76602, abs=1e-4)
    assert bark_rho(1e-9) == pytest.approx(-0.1916, abs=1e-6)
    for fs in (8000, 16000, 22050, 96000):
        assert bark_rho(fs) == pytest.approx(bark_oracle(fs), rel=1e-14)


def test_rho_for_zoom():
    assert rho_for_zoom(1) == 0
    assert rho_for_zoom(7) == 0.75
    assert rho_for_zoom(3) == 0.5
    with pytest.raises(InputError):
        rho_for_zoom(0.5)


def test_warp_config():
    cfg = WarpConfig(0.75)
    assert cfg.omega_c == pytest.approx(0.72273, abs=1e-5)
    assert cutoff(-0.75) == cfg.omega_c
    with pytest.raises(InputError):
        WarpConfig(1.0)
    with pytest.raises(InputError):
        WarpConfig(0.5, pre_damp_sigma=-1)


# --------------------------------------------------------------------------
# frequency map
# --------------------------------------------------------------------------

@given(st.floats(-0.99, 0.99))
def test_warp_frequency_fixes_ends(rho):
    assert warp_frequency(0.0, rho) == 0.0
    assert warp_frequency(np.pi, rho) == np.pi


def test_warp_frequency_examples():
    assert warp_frequency(0.01, 0.75) == pytest.approx(0.0699, abs=1e-4)
    w = np.linspace(0, np.pi, 101)
    np.testing.assert_allclose(warp_frequency(w, 0.0), w, atol=1e-15)


@given(st.floats(-0.95, 0.95))
def test_warp_frequency_increasing_and_dc_slope(rho):
    w = np.linspace(0, np.pi, 10_000)
    assert np.all(np.diff(warp_frequency(w, rho)) > 0)
    # the map is odd about DC, so the central difference is warp(h) / h
    h = 1e-6
    slope = warp_frequency(h, rho) / h
    assert slope == pytest.approx((1 + rho) / (1 - rho), rel=1e-6)


@given(st.floats(0, np.pi), st.floats(-0.95, 0.95))
def test_unwarp_frequency_inverts(w, rho):
    assert unwarp_frequency(warp_frequency(w, rho), rho) == pytest.approx(w, abs=1e-12)


# --------------------------------------------------------------------------
# pole maps
# --------------------------------------------------------------------------

def test_pole_round_trip_on_disk():
    rng = np.random.default_rng(0)
    r = np.sqrt(rng.uniform(0, 1, 1000))
    p = r * np.exp(1j * rng.uniform(-np.pi, np.pi, 1000))
    for rho in (-0.8, 0.0, 0.3, 0.7564):
        np.testing.assert_allclose(unwarp_pole(warp_pole(p, rho), rho), p, atol=1e-12)


def test_unwarp_keeps_unit_circle_and_identity_at_zero():
    th = np.linspace(-np.pi, np.pi, 257)
    p = np.exp(1j * th)
    np.testing.assert_allclose(np.abs(unwarp_pole(p, 0.7564)), 1.0, atol=1e-12)
    np.testing.assert_array_equal(unwarp_pole(p, 0.0), p)


def test_pole_map_matches_frequency_map():
    w = np.linspace(0.01, 3.1, 50)
    np.testing.assert_allclose(np.angle(warp_pole(np.exp(1j * w), 0.6)),
                               warp_frequency(w, 0.6), atol=1e-12)


def test_unwarp_poles_drops_unstable():
    p, bad = unwarp_poles(np.array([0.5, 1.2]), 0.3)
    assert bad == 1 and p.shape == (1,)


# --------------------------------------------------------------------------
# signal warping
# --------------------------------------------------------------------------

def cascade_oracle(h, rho, out_len):
    """sum_t h[t] * (impulse response of t allpass sections), by repeated filtering."""
    a = np.zeros(out_len)
    a[0] = 1.0
    y = np.zeros(out_len)
    for v in h:
        y += v * a
        a = lfilter([rho, 1.0], [1.0, rho], a)
    return y


@pytest.mark.parametrize("rho", [0.75, -0.4])
def test_warp_signal_matches_cascade_oracle(rho):
    x = np.random.default_rng(2).standard_normal(40)
    y = warp_signal(Signal(x, 1.0), rho, 60).samples
    np.testing.assert_allclose(y, cascade_oracle(x, rho, 60), atol=1e-12)


def test_warp_signal_delayed_impulse_is_section_response():
    y = warp_signal(Signal(np.array([0.0, 1.0]), 1.0), 0.75, 4).samples
    # (z^-1 + rho) / (1 + rho z^-1): rho, 1 - rho^2, -rho (1 - rho^2), ...
    np.testing.assert_allclose(y, [0.75, 0.4375, -0.328125, 0.24609375], atol=1e-15)


def test_warp_signal_identity_at_zero():
    x = np.random.default_rng(5).standard_normal(30)
    np.testing.assert_allclose(warp_signal(Signal(x, 1.0), 0.0).samples, x, atol=1e-15)
    y = warp_signal(Signal(x, 1.0), 0.0, 40).samples
    np.testing.assert_allclose(y[:30], x, atol=1e-15)
    assert np.all(y[30:] == 0)
    np.testing.assert_allclose(warp_signal(Signal(x, 1.0), 0.0, 10).samples, x[:10], atol=1e-15)


def test_warp_signal_complex_input():
    x = np.random.default_rng(6).standard_normal(20) + 1j * np.random.default_rng(7).standard_normal(20)
    y = warp_signal(Signal(x, 1.0), 0.5, 25).samples
    re = warp_signal(Signal(x.real, 1.0), 0.5, 25).samples
    im = warp_signal(Signal(x.imag, 1.0), 0.5, 25).samples
    np.testing.assert_allclose(y, re + 1j * im, atol=1e-13)


def test_warp_signal_moves_spectral_peak():
    fs, rho, n = 44100.0, 0.7564, 8192
    t = np.arange(n)
    x = np.exp(-2e-4 * t) * np.cos(2 * np.pi * 100 * t / fs)
    y = warp_signal(Signal(x, fs), rho, n).samples
    bins = np.fft.rfftfreq(n, 1 / fs)
    peak = bins[np.argmax(np.abs(np.fft.rfft(y)))]
    expected = warp_frequency(2 * np.pi * 100 / fs, rho) * fs / (2 * np.pi)
    assert expected == pytest.approx(720.4, abs=0.1)
    assert abs(peak - expected) <= fs / n


def test_warped_estimate_unwarps_to_true_pole():
    fs, rho, N = 44100.0, 0.7564, 128
    w, a = 2 * np.pi * 100 / fs, 1e-4
    t = np.arange(250_000)
    x = np.exp(-a * t) * np.cos(w * t)
    y = warp_signal(Signal(x, fs), rho, 2 * N + WARP_SKIP).samples
    poles, _, M = esprit_poles(y, N, Fixed(2), start=WARP_SKIP)
    p = unwarp_pole(poles[np.argmax(poles.imag)], rho)
    assert abs(p - np.exp(1j * w - a)) < 1e-5


# --------------------------------------------------------------------------
# damping and merging
# --------------------------------------------------------------------------

def test_pre_damp_identity_and_scaling():
    s = Signal(np.ones(5), 48000.0)
    assert pre_damp(s, 0.0) is s
    np.testing.assert_allclose(pre_damp(s, 1.5).samples, np.exp(-1.5 * np.arange(5) / 48000))
    p = np.array([0.5 + 0.1j])
    q, bad = undamp_poles(p, 0.0, 48000.0)
    assert bad == 0 and np.array_equal(q, p)


def test_undamp_adds_sigma_over_fs():
    q, _ = undamp_poles(np.array([np.exp(-0.001)]), 1.5, 48000.0)
    assert -np.log(abs(q[0])) == pytest.approx(0.001 - 1.5 / 48000, rel=1e-12)


def test_undamp_drops_pushed_out_poles():
    q, bad = undamp_poles(np.array([1.0, 0.5]), 1.5, 48000.0)
    assert bad == 1 and q.shape == (1,)


def test_pre_damp_round_trip_alpha():
    fs, sigma = 48000.0, 1.5
    truth = make_modes([700.0, 3000.0], [2e-4, 5e-4], [0.2, 0.0], [1.0, 0.5], fs=fs)
    h = signal_of(truth, 1024)
    poles, _, _ = esprit_poles(pre_damp(h, sigma).samples, 256, Fixed(4))
    poles, _ = undamp_poles(poles, sigma, fs)
    up = poles[poles.imag > 0]
    alphas = np.sort(-np.log(np.abs(up)))
    np.testing.assert_allclose(alphas, np.sort(truth.alphas), atol=1e-8)


def _set(ws):
    return ModeSet.from_arrays(ws, np.zeros(len(ws)), source=Source.PLAIN, sample_rate=1000.0)


def test_merge_modes_rule():
    m = merge_modes(_set([0.1, 0.5, 1.0]), _set([0.6, 1.2]), 0.7227)
    np.testing.assert_allclose(m.omegas, [0.1, 0.5, 1.2])
    assert m.source is Source.MERGED
    assert len(merge_modes(_set([0.1, 3.0]), _set([0.6, 1.2]), np.pi)) == 2
    with pytest.raises(InputError):
        merge_modes(_set([0.1]), ModeSet((), Source.PLAIN, 2000.0), 0.5)


# --------------------------------------------------------------------------
# two-branch estimator
# --------------------------------------------------------------------------

def test_fw_esprit_high_mode_only_once():
    fs = 44100.0
    truth = make_modes([10000.0], [3e-4], [0.0], [1.0])
    h = signal_of(truth, 4096)
    ms = fw_esprit(h, WarpConfig(bark_rho(fs)), N=256)
    assert len(ms) == 1 and ms.meta["from_plain"] == 1 and ms.meta["from_warped"] == 0
    assert ms.freqs_hz[0] == pytest.approx(10000.0, abs=1e-6)
    assert ms.source is Source.MERGED


def test_fw_esprit_dc_decay_from_warped_branch():
    h = Signal(np.exp(-1e-3 * np.arange(4096)), 44100.0)
    ms = fw_esprit(h, WarpConfig(0.7564), N=256)
    assert len(ms) == 1 and ms.meta["from_warped"] == 1
    assert ms.omegas[0] == 0.0
    assert ms.alphas[0] == pytest.approx(1e-3, rel=1e-6)


def test_fw_esprit_partition_and_fit(five_modes):
    h = signal_of(five_modes, 8192)
    cfg = WarpConfig(0.7564)
    ms = fw_esprit(h, cfg, N=512, order=KneePoint())
    low = [m for m in ms.meta["warped_branch"] if m.omega < cfg.omega_c]
    high = [m for m in ms.meta["plain_branch"] if m.omega >= cfg.omega_c]
    assert len(ms) == len(low) + len(high) == 5
    assert all(m.omega < cfg.omega_c for m in ms.modes[:len(low)])
    assert all(m.omega >= cfg.omega_c for m in ms.modes[len(low):])
    np.testing.assert_allclose(ms.freqs_hz, five_modes.freqs_hz, atol=1e-6)
    assert mse_db(h, render(ms, len(h))) < -100


def test_min_warp_length():
    assert min_warp_length(512, 0.0) == 1025
    assert min_warp_length(512, 0.75) == min_warp_length(512, -0.75) == 7175


def test_fw_esprit_input_checks():
    with pytest.raises(InputError):
        fw_esprit(Signal(np.ones(100), 1.0), WarpConfig(0.5), N=64)
    with pytest.raises(InputError):
        fw_esprit(Signal(np.ones(300) * 1j, 1.0), WarpConfig(0.5), N=64)
