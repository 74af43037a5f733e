import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from rydberg_mixer.atoms import RydbergTransition, at_splitting
from rydberg_mixer.exceptions import DomainError
from rydberg_mixer.fields import TimeSeries
from rydberg_mixer.transducer import (EitModel, PhotodiodeModel, PhotodiodeTransducer,
                                      eit_spectrum, if_gain, photodiode_trace,
                                      photodiode_voltage, transmission_at_resonance)

M = EitModel()
E_AT = M.e_at


def test_zero_field_single_peak_at_resonance():
    det = np.linspace(-20e6, 20e6, 4001)
    t = eit_spectrum(M, det, 0.0)
    peaks, _ = find_peaks(t)
    assert len(peaks) == 1 and det[peaks[0]] == 0.0
    assert np.allclose(t, t[::-1])
    assert t.max() == pytest.approx(M.background_transmission + M.contrast)


def _separation(e):
    det = np.linspace(-30e6, 30e6, 60001)
    t = eit_spectrum(M, det, e)
    p, _ = find_peaks(t)
    return det[p].max() - det[p].min() if len(p) == 2 else 0.0


def test_split_peaks():
    gamma = M.transition.eit_linewidth
    assert _separation(E_AT) == pytest.approx(0.910 * gamma, rel=0.01)
    assert _separation(2 * E_AT) == pytest.approx(1.986 * gamma, rel=0.01)
    assert _separation(0.5 * E_AT) == 0.0


def test_resonance_closed_form_matches_spectrum():
    for e in (0.0, 0.2, E_AT, 3.0):
        assert transmission_at_resonance(M, e) == pytest.approx(eit_spectrum(M, 0.0, e), rel=1e-12)


@given(st.floats(1e-4, 5.0))
def test_if_gain_is_derivative(e):
    h = min(1e-4 * E_AT, e / 2)
    num = (transmission_at_resonance(M, e - h) - transmission_at_resonance(M, e + h)) / (2 * h)
    assert if_gain(M, e) == pytest.approx(num, rel=1e-5)


def test_if_gain_peak_location():
    best = minimize_scalar(lambda x: -if_gain(M, x), bounds=(1e-3, 3.0), method="bounded",
                           options={"xatol": 1e-9})
    assert best.x == pytest.approx(E_AT / np.sqrt(3), rel=1e-5)


@given(st.floats(0, 10.0), st.floats(0, 10.0))
def test_transmission_monotone(a, b):
    lo, hi = sorted((a, b))
    assert transmission_at_resonance(M, hi) <= transmission_at_resonance(M, lo) + 1e-15


def test_model_validation():
    with pytest.raises(DomainError):
        EitModel(contrast=0.0)
    with pytest.raises(DomainError):
        EitModel(contrast=0.8, background_transmission=0.5)
    with pytest.raises(DomainError):
        transmission_at_resonance(M, -0.1)
    with pytest.raises(DomainError):
        PhotodiodeModel(noise_density=-1.0)


def test_linewidth_sets_threshold():
    m = EitModel(RydbergTransition(eit_linewidth=2e6))
    assert at_splitting(m.e_at) == pytest.approx(2e6)


def test_photodiode_needs_field_trace():
    volts = TimeSeries(1e6, np.ones(8), unit_tag="volts")
    with pytest.raises(TypeError):
        photodiode_trace(M, PhotodiodeModel(), volts)
    with pytest.raises(TypeError):
        photodiode_trace(M, PhotodiodeModel(), np.ones(8))


def test_photodiode_noise_statistics_and_seed():
    env = TimeSeries(1e6, np.full(200_000, 0.72), unit_tag="volts_per_meter")
    pd = PhotodiodeModel(gain := 2.0, 0.1, 1e-6, rng_seed=7)
    a = photodiode_trace(M, pd, env)
    b = photodiode_trace(M, pd, env)
    assert a.unit_tag == "volts"
    assert np.array_equal(a.samples, b.samples)
    mean = 0.1 + gain * transmission_at_resonance(M, 0.72)
    assert a.samples.mean() == pytest.approx(mean, abs=1e-5)
    assert a.samples.std() == pytest.approx(1e-6 * np.sqrt(1e6 / 2), rel=0.01)


def test_streamed_noise_equals_whole_trace():
    env = np.full(1000, 0.5)
    pd = PhotodiodeModel(noise_density=1e-5, rng_seed=3)
    whole = photodiode_voltage(M, pd, env, 1e6, np.random.default_rng(3))
    rng = np.random.default_rng(3)
    parts = np.concatenate([photodiode_voltage(M, pd, env[i:i + 250], 1e6, rng)
                            for i in range(0, 1000, 250)])
    assert np.array_equal(whole, parts)


def test_transducer_estimator():
    X = np.tile(np.linspace(0, 1, 50), (3, 1))
    tr = PhotodiodeTransducer(noise_density=1e-6, sample_rate=1e6, seed=5)
    out = tr.fit_transform(X)
    assert out.shape == X.shape
    assert not np.array_equal(out[0], out[1])
    assert np.array_equal(out, PhotodiodeTransducer(**tr.get_params()).fit_transform(X))
    clean = PhotodiodeTransducer().fit_transform(X[0])
    assert np.allclose(clean, transmission_at_resonance(M, X[0]))


@given(st.floats(0, 3.0), st.floats(0, 5e7))
def test_spectrum_symmetric(e, d):
    assert eit_spectrum(M, d, e) == eit_spectrum(M, -d, e)


def _if_amplitude(e_sig, e_lo=0.72):
    from rydberg_mixer.fields import TonePair, synthesize_envelope_trace
    p = TonePair.from_values(e_lo, e_sig)
    v = photodiode_trace(M, PhotodiodeModel(), synthesize_envelope_trace(p, 2e6, 1e-3)).samples
    spec = np.fft.rfft(v - v.mean())
    return 2 * np.abs(spec[90]) / v.size  # 1 kHz bins


def test_small_signal_if_linear():
    ref = _if_amplitude(1e-4) / 1e-4
    for e in np.linspace(0.001, 0.05 * 0.72, 6):
        assert _if_amplitude(e) / e == pytest.approx(ref, rel=0.01)
    assert ref == pytest.approx(if_gain(M, 0.72), rel=1e-3)


@given(st.floats(np.sqrt(3) * E_AT, 20 * E_AT))
def test_if_gain_rolls_off(e_lo):
    h = 1e-6 * e_lo
    assert if_gain(M, e_lo + h) < if_gain(M, e_lo)

