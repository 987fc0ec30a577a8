"""Clebsch-Gordan values, channel enumeration, multipole couplings."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sympy.physics.wigner import clebsch_gordan as sympy_cg

from xuvatom.angular import (
    Channel,
    clebsch_gordan,
    enumerate_channels,
    multipole_coupling,
    one_electron_channels,
)


def test_cg_hand_values():
    assert clebsch_gordan(0, 0, 0, 0, 0, 0) == pytest.approx(1.0)
    assert clebsch_gordan(1, 0, 1, 0, 0, 0) == pytest.approx(-1.0 / math.sqrt(3.0))
    assert clebsch_gordan(1, 0, 1, 0, 2, 0) == pytest.approx(math.sqrt(2.0 / 3.0))
    assert clebsch_gordan(1, 1, 1, -1, 0, 0) == pytest.approx(1.0 / math.sqrt(3.0))
    # parity-forbidden and triangle-violating cases vanish
    assert clebsch_gordan(1, 0, 1, 0, 1, 0) == 0.0
    assert clebsch_gordan(0, 0, 1, 0, 3, 0) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    l1=st.integers(0, 4),
    l2=st.integers(0, 4),
    m1=st.integers(-4, 4),
    m2=st.integers(-4, 4),
    L=st.integers(0, 8),
)
def test_cg_matches_sympy(l1, l2, m1, m2, L):
    if abs(m1) > l1 or abs(m2) > l2:
        return
    ours = clebsch_gordan(l1, m1, l2, m2, L, m1 + m2)
    ref = float(sympy_cg(l1, l2, L, m1, m2, m1 + m2))
    assert ours == pytest.approx(ref, abs=1e-13)


@given(l1=st.integers(0, 3), l2=st.integers(0, 3))
@settings(max_examples=16, deadline=None)
def test_cg_rows_orthonormal(l1, l2):
    # sum_m1 <l1 m1 l2 -m1|L 0><l1 m1 l2 -m1|L' 0> = delta_LL' at fixed M = 0
    for L in range(abs(l1 - l2), l1 + l2 + 1):
        for Lp in range(abs(l1 - l2), l1 + l2 + 1):
            acc = sum(
                clebsch_gordan(l1, m1, l2, -m1, L, 0)
                * clebsch_gordan(l1, m1, l2, -m1, Lp, 0)
                for m1 in range(-min(l1, l2), min(l1, l2) + 1)
            )
            assert acc == pytest.approx(1.0 if L == Lp else 0.0, abs=1e-12)


def test_channel_counts_frozen():
    assert len(enumerate_channels(1, 1)) == 4
    assert len(enumerate_channels(2, 2)) == 11
    assert len(enumerate_channels(5, 6)) == 78


def test_channels_natural_parity_and_triangle():
    cs = enumerate_channels(3, 3)
    for c in cs:
        assert (-1) ** c.L == c.parity
        assert abs(c.l1 - c.l2) <= c.L <= c.l1 + c.l2


def test_exchange_map_is_involution():
    cs = enumerate_channels(2, 2)
    for k, c in enumerate(cs.channels):
        km = cs.exchange_map[k]
        assert cs.channels[km] == Channel(c.L, c.l2, c.l1)
        assert cs.exchange_map[km] == k


def test_one_electron_ladder():
    cs = one_electron_channels(3)
    assert tuple(cs.channels) == (0, 1, 2, 3)
    assert not cs.two_electron


def test_multipole_coupling_vs_gaunt_contraction():
    # assumption-free oracle: expand P_lam by the addition theorem and
    # contract sympy Gaunt integrals with sympy Clebsch-Gordan weights
    from sympy.physics.wigner import clebsch_gordan as scg
    from sympy.physics.wigner import gaunt

    def oracle(lam, L, l1f, l2f, l1i, l2i):
        total = 0.0
        for m1i in range(-l1i, l1i + 1):
            m2i = -m1i
            if abs(m2i) > l2i:
                continue
            ci = float(scg(l1i, l2i, L, m1i, m2i, 0))
            if ci == 0.0:
                continue
            for m1f in range(-l1f, l1f + 1):
                m2f = -m1f
                if abs(m2f) > l2f:
                    continue
                cf = float(scg(l1f, l2f, L, m1f, m2f, 0))
                if cf == 0.0:
                    continue
                for mu in range(-lam, lam + 1):
                    g1 = (-1) ** (m1f + mu) * float(gaunt(l1f, lam, l1i, -m1f, -mu, m1i))
                    if g1 == 0.0:
                        continue
                    g2 = (-1) ** m2f * float(gaunt(l2f, lam, l2i, -m2f, mu, m2i))
                    total += cf * ci * g1 * g2
        return total * 4.0 * math.pi / (2 * lam + 1)

    for lam, ci, cf in [
        (1, Channel(0, 0, 0), Channel(0, 1, 1)),
        (1, Channel(1, 0, 1), Channel(1, 1, 0)),
        (2, Channel(0, 1, 1), Channel(0, 1, 1)),
        (2, Channel(0, 0, 0), Channel(0, 2, 2)),
        (3, Channel(2, 1, 1), Channel(2, 2, 2)),
        (1, Channel(1, 1, 2), Channel(1, 2, 1)),
        (2, Channel(2, 0, 2), Channel(2, 2, 2)),
    ]:
        ref = oracle(lam, ci.L, cf.l1, cf.l2, ci.l1, ci.l2)
        assert multipole_coupling(lam, ci, cf) == pytest.approx(ref, abs=1e-12)


def test_multipole_coupling_symmetric():
    ci, cf = Channel(0, 0, 0), Channel(0, 1, 1)
    assert multipole_coupling(1, ci, cf) == pytest.approx(multipole_coupling(1, cf, ci))
