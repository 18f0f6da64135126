import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import lfilter

from modalwarp.core import Mode, ModeSet, Source, evaluate_modes, generate
from modalwarp.core import Partial, SyntheticSpec
from modalwarp.synth import (
    BiquadCoeffs,
    biquad_coeffs,
    magnitude_response,
    render,
    render_recursive,
)

from _helpers import FS, make_modes


def random_modes(m, seed, fs=FS):
    rng = np.random.default_rng(seed)
    return ModeSet.from_arrays(np.sort(rng.uniform(0, np.pi, m)), rng.uniform(0, 2e-3, m),
                               rng.standard_normal(m), rng.standard_normal(m),
                               source=Source.PLAIN, sample_rate=fs)


def impulse_response(c: BiquadCoeffs, n):
    x = np.zeros(n)
    x[0] = 1.0
    return lfilter([c.b0, c.b1], [1.0, c.a1, c.a2], x)


def test_biquad_pure_cosine():
    c = biquad_coeffs(Mode(np.pi / 2, 0.0, 0.0, 1.0))
    assert (c.b0, c.b1, c.a1, c.a2) == pytest.approx((1.0, 0.0, 0.0, 1.0), abs=1e-15)
    np.testing.assert_allclose(impulse_response(c, 6), [1, 0, -1, 0, 1, 0], atol=1e-15)


def test_biquad_dc_and_nyquist_first_order():
    c = biquad_coeffs(Mode(0.0, 0.1, 0.0, 1.0))
    assert c.a2 == 0 and c.b1 == 0
    np.testing.assert_allclose(impulse_response(c, 20), np.exp(-0.1 * np.arange(20)), rtol=1e-14)
    c = biquad_coeffs(Mode(np.pi, 0.1, 0.0, 2.0))
    t = np.arange(20)
    np.testing.assert_allclose(impulse_response(c, 20), 2 * (-1.0) ** t * np.exp(-0.1 * t),
                               rtol=1e-14)


@given(st.floats(1e-3, np.pi - 1e-3), st.floats(0, 0.01), st.floats(-2, 2), st.floats(-2, 2))
def test_biquad_matches_closed_form(w, a, gs, gc):
    m = Mode(w, a, gs, gc)
    c = biquad_coeffs(m)
    t = np.arange(1000)
    np.testing.assert_allclose(impulse_response(c, 1000), (m.gamma * m.pole ** t).real,
                               atol=1e-10)
    assert c.is_stable()
    assert c.a2 == pytest.approx(np.exp(-2 * a)) and c.a1 == pytest.approx(-2 * np.exp(-a) * np.cos(w))


def test_render_empty_and_single():
    empty = ModeSet((), Source.PLAIN, FS)
    assert not np.any(render(empty, 10).samples)
    m = Mode(0.3, 0.01, 0.4, -0.2)
    single = ModeSet((m,), Source.PLAIN, FS)
    np.testing.assert_allclose(render(single, 300).samples,
                               impulse_response(biquad_coeffs(m), 300), atol=1e-12)


def test_render_hundred_modes_matches_direct_evaluation():
    ms = random_modes(100, 0)
    T = 5000
    direct = evaluate_modes(ms.omegas, ms.alphas, ms.gamma_s, ms.gamma_c, T)
    y = render(ms, T).samples
    assert np.max(np.abs(y - direct)) <= 1e-9 * np.max(np.abs(direct))
    for c in map(biquad_coeffs, ms):
        assert c.is_stable()


def test_render_matches_generate():
    spec = SyntheticSpec((Partial(freq_hz=440.0, alpha=1e-3, gamma_c=0.5, gamma_s=0.2),
                          Partial(freq_hz=0.0, alpha=1e-2),
                          Partial(freq_hz=3000.0, alpha=5e-4, detune_hz=0.5, cluster=3)))
    x = generate(spec, 4000, FS).samples
    np.testing.assert_allclose(render(spec.modes(FS), 4000).samples, x, atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_render_linear_in_union(seed):
    a, b = random_modes(7, seed), random_modes(5, seed + 100)
    both = ModeSet(a.modes + b.modes, Source.PLAIN, FS)
    np.testing.assert_allclose(render(both, 500).samples,
                               render(a, 500).samples + render(b, 500).samples, atol=1e-12)


def test_render_recursive_matches_closed_form():
    ms = random_modes(40, 3)
    np.testing.assert_allclose(render_recursive(ms, 3000).samples, render(ms, 3000).samples,
                               atol=1e-9)
    assert not np.any(render_recursive(ModeSet((), Source.PLAIN, FS), 5).samples)


def test_magnitude_response_peak_and_floor():
    f = 1000.0
    ms = make_modes([f], [0.0], [0.0], [1.0])
    freqs, db = magnitude_response(ms, 2049)
    assert abs(freqs[np.argmax(db)] - f) <= freqs[1] - freqs[0]
    freqs, db = magnitude_response(ModeSet((), Source.PLAIN, FS), 16)
    assert np.all(db == -300.0) and freqs[-1] == FS / 2


def test_magnitude_response_peaks_agree_with_fft():
    ms = make_modes([500.0, 2500.0, 9000.0], [1e-4, 1e-4, 1e-4], [0, 0, 0], [1.0, 0.8, 0.6])
    n = 2 ** 17
    spec = np.abs(np.fft.rfft(render(ms, n).samples))
    bins = np.fft.rfftfreq(n, 1 / FS)
    freqs, db = magnitude_response(ms, n // 2 + 1)
    for f in ms.freqs_hz:
        near = np.abs(bins - f) < 100
        fft_peak = bins[near][np.argmax(spec[near])]
        resp_peak = freqs[near][np.argmax(db[near])]
        assert abs(fft_peak - resp_peak) <= bins[1]
