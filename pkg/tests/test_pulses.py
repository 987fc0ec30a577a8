"""Pulse shape identities: derivatives, integrals, support, drift."""
import numpy as np
import pytest
from scipy.integrate import quad

from xuvatom.pulses import SineSquaredPulse, pulse_from_quiver


def test_quiver_round_trip():
    p = pulse_from_quiver(alpha0=0.8, omega=5.0, n_cycles=6)
    assert p.alpha0 == pytest.approx(0.8, rel=1e-15)
    assert p.e0 == pytest.approx(0.8 * 25.0, rel=1e-15)
    assert p.a0 == pytest.approx(0.8 * 5.0, rel=1e-15)
    assert p.ponderomotive_energy == pytest.approx(p.e0**2 / (4 * 25.0), rel=1e-15)


def test_duration_counts_cycles():
    p = SineSquaredPulse(e0=1.0, omega=2.0, n_cycles=3)
    assert p.duration == pytest.approx(3 * np.pi, rel=1e-15)


def test_electric_field_is_minus_da_dt():
    p = SineSquaredPulse(e0=2.5, omega=1.7, n_cycles=4)
    t = np.linspace(0.05, p.duration - 0.05, 200)
    h = 1e-6
    fd = -(p.vector_potential(t + h) - p.vector_potential(t - h)) / (2 * h)
    assert np.max(np.abs(fd - p.electric_field(t))) < 1e-7


def test_excursion_is_integral_of_a():
    for n_cycles in (1, 2, 6):
        p = SineSquaredPulse(e0=1.3, omega=2.2, n_cycles=n_cycles)
        for t in (0.3 * p.duration, 0.71 * p.duration, p.duration):
            ref = quad(p.vector_potential, 0.0, t, limit=400)[0]
            assert p.excursion(t) == pytest.approx(ref, abs=1e-10)


def test_support_is_the_pulse_window():
    p = SineSquaredPulse(e0=1.0, omega=3.0, n_cycles=2)
    for t in (-1.0, -1e-9, p.duration + 1e-9, p.duration + 5.0):
        assert p.vector_potential(t) == 0.0
        assert p.electric_field(t) == 0.0
    assert p.vector_potential(0.0) == 0.0
    assert p.vector_potential(p.duration) == pytest.approx(0.0, abs=1e-15)
    assert p.electric_field(0.0) == pytest.approx(0.0, abs=1e-15)


def test_peak_vector_potential_at_midpulse():
    p = SineSquaredPulse(e0=2.0, omega=4.0, n_cycles=6)
    assert abs(p.vector_potential(0.5 * p.duration)) == pytest.approx(p.a0, rel=1e-12)


def test_net_excursion_drift():
    # a single-cycle pulse leaves a net displacement; longer pulses do not
    one = SineSquaredPulse(e0=1.0, omega=2.0, n_cycles=1)
    assert one.excursion(one.duration) == pytest.approx(-one.a0 * one.duration / 4.0, rel=1e-12)
    assert one.excursion(one.duration + 3.0) == one.excursion(one.duration)
    for n_cycles in (2, 5):
        p = SineSquaredPulse(e0=1.0, omega=2.0, n_cycles=n_cycles)
        assert p.excursion(p.duration) == pytest.approx(0.0, abs=1e-14)


def test_parameter_validation():
    with pytest.raises(ValueError):
        SineSquaredPulse(e0=-0.1, omega=1.0, n_cycles=2)
    with pytest.raises(ValueError):
        SineSquaredPulse(e0=1.0, omega=0.0, n_cycles=2)
    with pytest.raises(ValueError):
        SineSquaredPulse(e0=1.0, omega=1.0, n_cycles=0)
    with pytest.raises(ValueError):
        pulse_from_quiver(alpha0=-0.5, omega=5.0, n_cycles=6)


def test_as_dict_round_trip():
    p = SineSquaredPulse(e0=1.25, omega=5.0, n_cycles=6)
    assert SineSquaredPulse(**p.as_dict()) == p
