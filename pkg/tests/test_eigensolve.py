"""Eigensolver checks: analytic spectra, residual gates, exchange symmetry."""
import numpy as np
import pytest

from xuvatom.angular import enumerate_channels, one_electron_channels
from xuvatom.bsplines import build_radial_basis, overlap_matrix
from xuvatom.eigensolve import (
    bound_states,
    eigensolve_dense,
    eigensolve_shift_invert,
    exchange_character,
    radial_eigenbasis,
)
from xuvatom.iemodel import sae_potential
from xuvatom.operators import (
    assemble_atomic,
    assemble_ee,
    assemble_overlap,
    coulomb_potential,
)
from xuvatom.propagation import ChannelFactorization


@pytest.fixture(scope="module")
def he_tiny():
    basis = build_radial_basis(r_max=10.0, n_splines=12, order=4, grading="exp_then_linear")
    cs = enumerate_channels(lmax=1, Lmax=1, symmetry="singlet")
    h = assemble_atomic(basis, cs, coulomb_potential(2.0)).plus(assemble_ee(basis, cs, lam_max=2))
    s = assemble_overlap(basis, cs)
    return basis, cs, h, s


def test_hydrogen_bound_spectrum(small_basis, channels_1e):
    h = assemble_atomic(small_basis, channels_1e, coulomb_potential(1.0))
    s = assemble_overlap(small_basis, channels_1e)
    res = bound_states(h, s, sigma0=-0.6, n_states=3, threshold=0.0)
    assert res.energies[0] == pytest.approx(-0.5, abs=1e-6)
    # 2s and 2p are degenerate at -1/8
    assert res.energies[1] == pytest.approx(-0.125, abs=1e-6)
    assert res.energies[2] == pytest.approx(-0.125, abs=1e-6)
    assert res.residuals.max() < 1e-10


def test_hydrogenic_ion_bound_spectrum(small_basis, channels_1e):
    h = assemble_atomic(small_basis, channels_1e, coulomb_potential(2.0))
    s = assemble_overlap(small_basis, channels_1e)
    res = bound_states(h, s, sigma0=-2.2, n_states=4, threshold=0.0)
    assert res.energies[0] == pytest.approx(-2.0, abs=1e-6)
    assert res.energies[1] == pytest.approx(-0.5, abs=1e-6)
    assert res.energies[2] == pytest.approx(-0.5, abs=1e-6)
    assert res.energies[3] == pytest.approx(-2.0 / 9.0, abs=1e-6)
    assert res.residuals.max() < 1e-10


def test_model_atom_ground_state(small_basis, channels_1e):
    h = assemble_atomic(small_basis, channels_1e, sae_potential)
    s = assemble_overlap(small_basis, channels_1e)
    res = bound_states(h, s, sigma0=-1.2, n_states=1, threshold=0.0)
    assert res.energies[0] == pytest.approx(-0.9036, abs=2e-3)
    assert res.residuals[0] < 1e-10


def test_radial_eigenbasis_orthonormal(small_basis):
    energies, vecs = radial_eigenbasis(small_basis, coulomb_potential(1.0), l=0)
    s = overlap_matrix(small_basis).to_dense()
    gram = vecs.T @ s @ vecs
    assert np.max(np.abs(gram - np.eye(len(energies)))) < 1e-12
    assert energies[0] == pytest.approx(-0.5, abs=1e-6)


def test_shift_invert_matches_dense(he_tiny):
    basis, cs, h, s = he_tiny
    fact = ChannelFactorization(basis, cs, coulomb_potential(2.0))
    it = eigensolve_shift_invert(h, s, sigma=-3.5, k=4, factorization=fact)
    de = eigensolve_dense(h, s)
    assert it.energies == pytest.approx(de.energies[:4], abs=1e-9)
    assert it.residuals.max() < 1e-10


def test_shift_invert_states_overlap_orthonormal(he_tiny):
    basis, cs, h, s = he_tiny
    fact = ChannelFactorization(basis, cs, coulomb_potential(2.0))
    res = eigensolve_shift_invert(h, s, sigma=-3.5, k=4, factorization=fact)
    gram = np.empty((4, 4), dtype=np.complex128)
    for i in range(4):
        si = s.apply(res.states[i])
        for j in range(4):
            gram[i, j] = np.vdot(res.states[j].reshape(-1), si.reshape(-1))
    assert np.max(np.abs(gram - np.eye(4))) < 1e-8


def test_shift_invert_deterministic(he_tiny):
    basis, cs, h, s = he_tiny
    fact = ChannelFactorization(basis, cs, coulomb_potential(2.0))
    a = eigensolve_shift_invert(h, s, sigma=-3.5, k=4, factorization=fact)
    b = eigensolve_shift_invert(h, s, sigma=-3.5, k=4, factorization=fact)
    assert np.array_equal(a.energies, b.energies)
    assert np.array_equal(a.states, b.states)


def test_exchange_symmetry_sectors(he_tiny):
    basis, _, _, _ = he_tiny
    cs = enumerate_channels(lmax=1, Lmax=1, symmetry="none")
    h = assemble_atomic(basis, cs, coulomb_potential(2.0)).plus(assemble_ee(basis, cs, lam_max=2))
    s = assemble_overlap(basis, cs)
    singlet = bound_states(h, s, sigma0=-3.5, n_states=2, threshold=0.0, symmetry="singlet")
    triplet = bound_states(h, s, sigma0=-3.5, n_states=1, threshold=0.0, symmetry="triplet")
    for x in singlet.states:
        assert exchange_character(x, cs) == pytest.approx(1.0, abs=1e-8)
    for x in triplet.states:
        assert exchange_character(x, cs) == pytest.approx(-1.0, abs=1e-8)
    # the lowest triplet (1s2s) lies above the singlet ground state and below
    # the first excited singlet
    assert singlet.energies[0] < triplet.energies[0] < singlet.energies[1]


def test_bound_states_respects_threshold(small_basis, channels_1e):
    h = assemble_atomic(small_basis, channels_1e, coulomb_potential(1.0))
    s = assemble_overlap(small_basis, channels_1e)
    res = bound_states(h, s, sigma0=-0.6, n_states=50, threshold=-0.05)
    assert np.all(res.energies < -0.05)
