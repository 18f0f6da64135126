import math

import numpy as np
import pytest
from scipy.signal import find_peaks
from hypothesis import given
from hypothesis import strategies as st

from modalwarp.core import (
    ALPHA_TOL,
    InputError,
    Mode,
    ModeSet,
    NumericalError,
    Partial,
    Signal,
    Source,
    SyntheticSpec,
    fit_real_amplitudes,
    generate,
    mse_db,
    piano_like_spec,
)


def test_signal_rejects_empty_and_bad_rate():
    with pytest.raises(InputError):
        Signal(np.zeros(0), 44100.0)
    with pytest.raises(InputError):
        Signal(np.ones(3), 0.0)


def test_signal_real_flag_and_immutability():
    s = Signal(np.array([1.0, 2.0]), 8000.0)
    assert s.is_real
    assert not Signal(np.array([1j, 2.0]), 8000.0).is_real
    with pytest.raises(ValueError):
        s.samples[0] = 3.0


def test_mode_validation():
    with pytest.raises(InputError):
        Mode(-0.1, 0.0)
    with pytest.raises(InputError):
        Mode(math.pi + 1e-9, 0.0)
    with pytest.raises(InputError):
        Mode(1.0, -2 * ALPHA_TOL)
    Mode(1.0, -0.5 * ALPHA_TOL)  # marginal poles are admitted


def test_mode_complex_amplitude_round_trip():
    m = Mode.from_complex(0.3, 0.01, complex(0.7, -0.2))
    assert m.gamma == complex(0.7, -0.2)
    assert abs(m.pole) <= 1 + 1e-9
    t = np.arange(20)
    direct = np.exp(-m.alpha * t) * (m.gamma_s * np.sin(m.omega * t) + m.gamma_c * np.cos(m.omega * t))
    np.testing.assert_allclose((m.gamma * m.pole ** t).real, direct, atol=1e-14)


def test_modeset_sorted_with_alpha_tiebreak():
    ms = ModeSet((Mode(0.5, 0.2), Mode(0.1, 0.0), Mode(0.5, 0.1)), Source.PLAIN, 1000.0)
    assert [(m.omega, m.alpha) for m in ms] == [(0.1, 0.0), (0.5, 0.1), (0.5, 0.2)]


def test_modeset_rejects_duplicates():
    with pytest.raises(InputError):
        ModeSet((Mode(0.5, 0.1), Mode(0.5 + 1e-13, 0.1)), Source.PLAIN, 1000.0)


def _spec(*partials, **kw):
    return SyntheticSpec(tuple(partials), **kw)


def test_generate_pure_cosine():
    x = generate(_spec(Partial(freq_hz=1.0, gamma_c=1.0)), 4, 4.0).samples
    np.testing.assert_allclose(x, [1, 0, -1, 0], atol=1e-15)


def test_generate_pure_decay():
    x = generate(_spec(Partial(freq_hz=0.0, alpha=0.1)), 10, 1000.0).samples
    np.testing.assert_allclose(x, np.exp(-0.1 * np.arange(10)), rtol=1e-15)


def test_generate_rejects_nyquist_with_index():
    spec = _spec(Partial(freq_hz=100.0), Partial(freq_hz=22050.0))
    with pytest.raises(InputError, match="partial 1"):
        generate(spec, 10, 44100.0)


def test_triplet_beating_period():
    # equal-amplitude triplet spaced 0.3 Hz: envelope 1 + 2cos(2 pi 0.3 t) peaks every 1/0.3 s
    fs = 44100.0
    spec = _spec(Partial(freq_hz=220.0, detune_hz=0.3, cluster=3))
    x = generate(spec, int(8 * fs), fs).samples
    period = int(fs / 220.0)
    frames = np.abs(x[: x.shape[0] // period * period]).reshape(-1, period).max(axis=1)
    t = (np.arange(frames.shape[0]) + 0.5) * period / fs
    peaks, _ = find_peaks(frames, height=2.5, distance=int(1.0 * fs / period))
    gaps = np.diff(t[peaks])
    np.testing.assert_allclose(gaps, 1 / 0.3, rtol=0.01)
    # troughs sit halfway, at envelope minimum |1 + 2cos| = 0 when cos = -1/2 -> two per period
    assert frames.min() < 0.05


def test_generate_linear_in_spec_union():
    a = _spec(Partial(freq_hz=300.0, alpha=1e-3, gamma_c=0.4, gamma_s=0.2))
    b = _spec(Partial(freq_hz=900.0, alpha=2e-3, gamma_c=-0.3, detune_hz=1.0, cluster=2))
    n, fs = 500, 8000.0
    np.testing.assert_allclose(generate(a | b, n, fs).samples,
                               generate(a, n, fs).samples + generate(b, n, fs).samples,
                               atol=1e-14)


def test_generate_noise_is_seeded_and_at_requested_snr():
    spec = _spec(Partial(freq_hz=300.0, gamma_c=1.0), noise_snr_db=20.0, seed=7)
    x1 = generate(spec, 20000, 8000.0).samples
    x2 = generate(spec, 20000, 8000.0).samples
    np.testing.assert_array_equal(x1, x2)
    clean = generate(_spec(Partial(freq_hz=300.0, gamma_c=1.0)), 20000, 8000.0).samples
    snr = 10 * np.log10(np.mean(clean ** 2) / np.mean((x1 - clean) ** 2))
    assert abs(snr - 20.0) < 0.3


def test_piano_like_spec_shape():
    spec = piano_like_spec()
    ms = spec.modes(44100.0)
    assert len(ms) == 180
    assert np.all(ms.freqs_hz < 22050.0)
    p10 = spec.partial_frequency(spec.partials[9])
    assert p10 == pytest.approx(2200 * math.sqrt(1.01))


def test_mse_db_examples():
    h = Signal(np.array([1.0, 0, 0, 0]), 10.0)
    assert mse_db(h, h) == -300.0
    assert mse_db(h, Signal(np.zeros(4), 10.0)) == pytest.approx(0.0)
    assert mse_db(h, Signal(np.array([0.9, 0, 0, 0]), 10.0)) == pytest.approx(-20.0)


def test_mse_db_errors():
    z = Signal(np.zeros(4), 10.0)
    with pytest.raises(InputError):
        mse_db(z, z)
    with pytest.raises(InputError):
        mse_db(Signal(np.ones(4), 10.0), Signal(np.ones(5), 10.0))


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=30),
       st.floats(0.01, 1e3) | st.floats(-1e3, -0.01))
def test_mse_db_scale_invariant(vals, c):
    h = np.array(vals) + 1.0
    hh = h * 0.9 + 0.01
    a = mse_db(Signal(h, 1.0), Signal(hh, 1.0))
    b = mse_db(Signal(c * h, 1.0), Signal(c * hh, 1.0))
    assert a == pytest.approx(b, abs=1e-9)


def test_fit_real_amplitudes_names_colliding_modes():
    with pytest.raises(NumericalError, match=r"\(0, 1\)"):
        fit_real_amplitudes([0.3, 0.3], [0.01, 0.01], np.random.default_rng(0).standard_normal(50))
