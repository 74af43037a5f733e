import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import c, epsilon_0

from rydberg_mixer.exceptions import DomainError
from rydberg_mixer.linkbudget import (AntennaLink, CellFactor, PowerChain, chain_output_dbm,
                                      dbm_to_watts, e_cell, e_far_field, far_field_distance,
                                      power_for_e_cell, watts_to_dbm)

LINK = AntennaLink()
CF = CellFactor()


def test_far_field_distance():
    assert far_field_distance(LINK) == pytest.approx(0.305, rel=5e-3)


def test_far_field_constant_is_free_space():
    # E = sqrt(eta0 P G / (2 pi)) / R with eta0 = 1 / (eps0 c)
    eta0 = 1 / (epsilon_0 * c)
    p = 1e-7
    oracle = math.sqrt(eta0 * p * LINK.gain_linear / (2 * math.pi)) / LINK.distance_r
    assert e_far_field(p, LINK) == pytest.approx(oracle, rel=1e-5)


def test_reference_values():
    assert e_far_field(dbm_to_watts(-40.0)) == pytest.approx(0.0381, rel=2e-3)
    assert watts_to_dbm(power_for_e_cell(46e-6)) == pytest.approx(-97.45, abs=0.01)
    assert watts_to_dbm(power_for_e_cell(181e-6)) == pytest.approx(-85.55, abs=0.01)


def test_units():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert watts_to_dbm(1e-3) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        watts_to_dbm(0.0)
    with pytest.raises(DomainError):
        e_far_field(-1.0)


def test_chain():
    assert chain_output_dbm(PowerChain(-40.0, (10.0, 20.0, 15.55))) == pytest.approx(-85.55)
    assert chain_output_dbm(PowerChain(-40.0)) == -40.0
    with pytest.raises(DomainError):
        PowerChain(0.0, (-1.0,))


def test_near_field_warning():
    with pytest.warns(RuntimeWarning):
        e_far_field(1e-3, AntennaLink(distance_r=0.2))


def test_gain_uncertainty():
    # 0.4 dB gain tolerance is ~4.7 % in field
    assert LINK.gain_rel_uncertainty == pytest.approx(0.0470, abs=5e-4)


@given(st.floats(-200, 40))
def test_dbm_roundtrip(p):
    assert watts_to_dbm(dbm_to_watts(p)) == pytest.approx(p, abs=1e-9)


@given(st.floats(1e-9, 1e3))
def test_power_field_roundtrip(e):
    assert e_cell(power_for_e_cell(e, LINK, CF), LINK, CF) == pytest.approx(e, rel=1e-12)


@given(st.floats(1e-15, 1.0), st.floats(0, 60))
def test_field_scales_with_sqrt_power(p, db):
    ratio = e_far_field(p * 10 ** (db / 10)) / e_far_field(p)
    assert ratio == pytest.approx(10 ** (db / 20), rel=1e-9)


def test_vectorized():
    p = dbm_to_watts(np.array([-60.0, -40.0]))
    assert e_cell(p).shape == (2,)
    assert e_cell(p) == pytest.approx(0.9 * e_far_field(p))


@given(st.floats(-200, 30))
def test_dbm_roundtrip_tight(p):
    assert watts_to_dbm(dbm_to_watts(p)) == pytest.approx(p, rel=1e-12, abs=1e-12)


@given(st.floats(1e-12, 1.0), st.floats(0.31, 100.0))
def test_field_times_distance_invariant(p, r):
    other = AntennaLink(distance_r=r)
    assert e_far_field(p, other) * r == pytest.approx(e_far_field(p, LINK) * LINK.distance_r,
                                                      rel=1e-12)


@given(st.floats(0, 1.0), st.floats(0.01, 5.0))
def test_cell_ratio_exact(p, cf):
    ff = e_far_field(p)
    if ff > 0:
        assert e_cell(p, LINK, CellFactor(cf)) / ff == pytest.approx(cf, rel=1e-15)


@given(st.floats(1e-15, 1.0), st.floats(1e-6, 1e6))
def test_half_degree_homogeneous(p, k):
    assert e_far_field(k * p) == pytest.approx(math.sqrt(k) * e_far_field(p), rel=1e-12)
