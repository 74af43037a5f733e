import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import freqz, lfilter
from scipy.stats import poisson

from rydberg_mixer.exceptions import ConfigurationError, DomainError
from rydberg_mixer.fields import TimeSeries
from rydberg_mixer.lockin import (LockInAmplifier, LockInConfig, cascade_gain, cutoff_frequency,
                                  demodulate, noise_floor, pole_count, rejection_db,
                                  step_residual)

FS, FREF, TAU = 100e3, 10e3, 2e-3


def tone(amp, freq, n, phase=0.0, fs=FS):
    t = np.arange(n) / fs
    return amp * np.cos(2 * np.pi * freq * t + phase)


def cfg(**kw):
    base = dict(f_ref=FREF, time_constant=TAU, sample_rate=FS)
    base.update(kw)
    return LockInConfig(**base)


def test_pole_count():
    assert [pole_count(s) for s in (6, 12, 18, 24)] == [1, 2, 3, 4]
    for bad in (0, 30, 13, 24.5, "x"):
        with pytest.raises(ConfigurationError):
            pole_count(bad)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        cfg(sample_rate=3 * FREF)
    with pytest.raises(ConfigurationError):
        cfg(time_constant=0.0)
    with pytest.raises(ConfigurationError):
        cfg(cutoff_convention="inv-pi-tau")


def test_cutoff_conventions():
    c = cfg(time_constant=3.0)
    assert cutoff_frequency(c) == pytest.approx(1 / (6 * math.pi))
    assert cutoff_frequency(c, "inv-tau") == pytest.approx(1 / 3)
    # the convention only relabels; the realized filter is identical
    assert cfg(cutoff_convention="inv-tau").alpha == cfg().alpha


def test_on_tune_recovery_and_phase():
    for phase in (0.0, 0.7, -2.0):
        out = demodulate(tone(1.0, FREF, int(20 * TAU * FS), phase), cfg())
        assert out.r == pytest.approx(0.5, rel=1e-3)
        assert out.theta == pytest.approx(phase, abs=1e-3)
        assert math.hypot(out.x, out.y) == pytest.approx(out.r)
        assert out.settled


def test_dc_offset_is_rejected():
    sig = 3.0 + tone(0.2, FREF, int(20 * TAU * FS))
    assert demodulate(sig, cfg()).r == pytest.approx(0.1, rel=1e-3)


def test_cascade_gain_matches_freqz():
    c = cfg()
    b, a = [1 - c.alpha], [1, -c.alpha]
    for df in (0.0, 10.0, 500.0, 5000.0):
        _, h = freqz(b, a, worN=[2 * np.pi * df / FS])
        assert cascade_gain(c, df) == pytest.approx(complex(h[0] ** 4), rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
def test_detuned_attenuation_matches_cascade(k):
    c = cfg()
    df = k * cutoff_frequency(c)
    out = demodulate(tone(1.0, FREF + df, int(30 * TAU * FS)), c)
    measured = 20 * math.log10(out.r / 0.5)
    assert measured == pytest.approx(20 * math.log10(abs(cascade_gain(c, df))), abs=0.05)
    assert measured == pytest.approx(rejection_db(c, df), abs=0.5)


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_rejection_monotone(a, b):
    c = cfg()
    lo, hi = sorted((a, b))
    assert rejection_db(c, hi) <= rejection_db(c, lo) <= 0.0


@given(st.sampled_from([6, 12, 18, 24]))
def test_rejection_slope_per_octave(slope):
    c = cfg(slope_db_per_octave=slope, time_constant=1.0)
    fc = cutoff_frequency(c)
    drop = rejection_db(c, 2000 * fc) - rejection_db(c, 4000 * fc)
    # nominal 6 dB/octave per pole is 20 log10(2) = 6.02 dB exactly
    assert drop == pytest.approx(slope / 6 * 20 * math.log10(2), rel=1e-4)


def test_rejection_rejects_negative():
    with pytest.raises(DomainError):
        rejection_db(cfg(), -1.0)


def test_step_residual_is_poisson_tail():
    for n in (1, 2, 3, 4):
        x = np.array([1.0, 5.0, 10.0, 20.0])
        assert np.allclose(step_residual(n, x), poisson.cdf(n - 1, x), rtol=1e-12)


def test_step_residual_simulated():
    # drive one real cascade with a unit step and compare
    c = cfg()
    n = int(10 * TAU * FS)
    y = np.ones(n)
    for _ in range(4):
        y = lfilter([1 - c.alpha], [1, -c.alpha], y)
    assert 1 - y[-1] == pytest.approx(float(step_residual(4, 10.0)), rel=1e-2)
    assert float(step_residual(4, 10.0)) == pytest.approx(0.01034, rel=1e-3)


@pytest.mark.xfail(strict=True, reason="a 4-pole cascade keeps 1.03 % of a step after 10 tau")
def test_settles_below_one_percent_at_ten_tau():
    assert float(step_residual(4, 10.0)) < 0.01


def test_twenty_tau_settles():
    assert float(step_residual(4, 20.0)) < 1e-4


def test_short_input_warns_unsettled():
    out = demodulate(tone(1.0, FREF, int(3 * TAU * FS)), cfg())
    assert not out.settled
    assert out.warnings and "settle" in out.warnings[0]


def test_stream_equals_whole():
    sig = tone(1.0, FREF + 37.0, int(12 * TAU * FS), 0.4)
    li = LockInAmplifier(FREF, TAU, sample_rate=FS).fit()
    whole = li.demodulate(sig)
    chunks = (sig[i:i + 777] for i in range(0, sig.size, 777))
    streamed = li.demodulate_stream(chunks, sig.size)
    assert streamed.r == pytest.approx(whole.r, rel=1e-12)
    assert streamed.theta == pytest.approx(whole.theta, abs=1e-12)


def test_stream_length_mismatch():
    li = LockInAmplifier(FREF, TAU, sample_rate=FS)
    with pytest.raises(ConfigurationError):
        li.demodulate_stream([np.zeros(10)], 20)
    with pytest.raises(ConfigurationError):
        li.demodulate_stream([np.zeros(30)], 20)


def test_rejects_field_traces_and_rate_mismatch():
    li = LockInAmplifier(FREF, TAU, sample_rate=FS)
    with pytest.raises(TypeError):
        li.demodulate(TimeSeries(FS, np.zeros(10), unit_tag="volts_per_meter"))
    with pytest.raises(ConfigurationError):
        li.demodulate(TimeSeries(2 * FS, np.zeros(10), unit_tag="volts"))


def test_trace_output():
    out = demodulate(tone(1.0, FREF, 4000), cfg(), trace_decimation=100)
    assert out.trace_r.size == 40
    assert out.trace_r[-1] == pytest.approx(0.5, rel=0.05)


def test_estimator_api():
    li = LockInAmplifier(f_ref=FREF, time_constant=TAU, sample_rate=FS)
    params = li.get_params()
    assert params["slope_db_per_octave"] == 24
    X = np.vstack([tone(a, FREF, int(20 * TAU * FS)) for a in (1.0, 2.0)])
    out = li.fit(X).transform(X)
    assert out.shape == (2, 4)
    assert out[:, 2] == pytest.approx([0.5, 1.0], rel=1e-3)
    assert li.n_poles_ == 4 and li.cutoff_hz_ == pytest.approx(1 / (2 * math.pi * TAU))
    assert li.set_params(slope_db_per_octave=12).fit().n_poles_ == 2


def test_noise_floor_monte_carlo():
    c = cfg()
    rho = 1e-3
    n = int(10 * TAU * FS)
    rng = np.random.default_rng(11)
    sigma = rho * math.sqrt(FS / 2)
    rs = [demodulate(rng.normal(0, sigma, n), c).r for _ in range(300)]
    assert np.mean(rs) == pytest.approx(noise_floor(c, rho), rel=0.04)
    assert noise_floor(c, 0.0) == 0.0
    assert noise_floor(cfg(time_constant=4 * TAU), rho) == pytest.approx(noise_floor(c, rho) / 2)


def test_tabulated_values():
    c = cfg(time_constant=3.0)
    assert cutoff_frequency(c, "inv-tau") == pytest.approx(0.333, abs=1e-3)
    assert cutoff_frequency(c) == pytest.approx(0.0531, abs=1e-4)
    assert rejection_db(c, 0.0) == 0.0
    fc = cutoff_frequency(c)
    assert rejection_db(c, fc) == pytest.approx(-12.04, abs=0.01)
    assert rejection_db(c, 10 * fc) == pytest.approx(-80.1, abs=0.1)
    assert cutoff_frequency(cfg(time_constant=6.0), "inv-tau") == pytest.approx(1 / 6)


def test_zero_input_reads_zero():
    out = demodulate(np.zeros(int(10 * TAU * FS)), cfg())
    assert out.r == 0.0 and out.x == 0.0 and out.y == 0.0


def test_unity_dc_gain_per_stage():
    c = cfg()
    assert abs(cascade_gain(c, 0.0)) == pytest.approx(1.0, abs=1e-15)
    y = np.ones(int(40 * TAU * FS))
    for _ in range(4):
        y = lfilter([1 - c.alpha], [1, -c.alpha], y)
    assert y[-1] == pytest.approx(1.0, abs=1e-12)


_BASE = tone(1.0, FREF, int(20 * TAU * FS), 0.2)


@given(st.floats(-math.pi, math.pi))
def test_phase_shift_invariance(psi):
    a = demodulate(_BASE, cfg())
    b = demodulate(tone(1.0, FREF, _BASE.size, 0.2 + psi), cfg())
    assert b.r == pytest.approx(a.r, rel=1e-6)


@given(st.floats(1e-6, 1e6))
def test_linearity(k):
    a = demodulate(_BASE, cfg())
    b = demodulate(k * _BASE, cfg())
    assert b.r == pytest.approx(k * a.r, rel=1e-9)


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
def test_detuned_attenuation_after_twenty_tau(k):
    c = cfg()
    df = k * cutoff_frequency(c)
    out = demodulate(tone(1.0, FREF + df, int(20 * TAU * FS)), c)
    assert 20 * math.log10(out.r / 0.5) == pytest.approx(rejection_db(c, df), abs=0.5)


@pytest.mark.xfail(strict=True, reason="at 100 fc the switch-on transient (~ -150 dB) still "
                   "exceeds the -160 dB steady state after 20 tau; 30 tau is needed")
def test_hundred_fc_after_twenty_tau():
    c = cfg()
    df = 100 * cutoff_frequency(c)
    out = demodulate(tone(1.0, FREF + df, int(20 * TAU * FS)), c)
    assert 20 * math.log10(out.r / 0.5) == pytest.approx(rejection_db(c, df), abs=0.5)


def test_hundred_fc_after_thirty_tau():
    c = cfg()
    df = 100 * cutoff_frequency(c)
    out = demodulate(tone(1.0, FREF + df, int(30 * TAU * FS)), c)
    assert 20 * math.log10(out.r / 0.5) == pytest.approx(rejection_db(c, df), abs=0.5)
