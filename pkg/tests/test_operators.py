"""Block operator assembly: dense equivalence, hermiticity, physics anchors."""
import numpy as np
import pytest

from xuvatom.angular import enumerate_channels, one_electron_channels
from xuvatom.bsplines import build_radial_basis, overlap_matrix
from xuvatom.eigensolve import radial_eigenbasis
from xuvatom.operators import (
    assemble_absorber,
    assemble_atomic,
    assemble_dipole_velocity,
    assemble_ee,
    assemble_overlap,
    to_dense_matrix,
)


@pytest.fixture(scope="module")
def tiny_2e():
    basis = build_radial_basis(r_max=10.0, n_splines=10, order=4, grading="exp_then_linear")
    cs = enumerate_channels(lmax=1, Lmax=1, symmetry="singlet")
    return basis, cs


def _rand_state(shape, rng):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_matrix_free_apply_matches_dense(tiny_2e, rng):
    basis, cs = tiny_2e
    h = assemble_atomic(basis, cs, lambda r: -2.0 / r).plus(assemble_ee(basis, cs, lam_max=2))
    hd = to_dense_matrix(h)
    for _ in range(3):
        v = _rand_state(h.state_shape(), rng)
        ref = (hd @ v.reshape(-1)).reshape(h.state_shape())
        got = h.apply(v)
        assert np.max(np.abs(got - ref)) < 1e-13 * max(1.0, np.max(np.abs(ref)))


def test_operators_hermitian(tiny_2e, rng):
    basis, cs = tiny_2e
    for op in (
        assemble_atomic(basis, cs, lambda r: -2.0 / r),
        assemble_ee(basis, cs, lam_max=2),
        assemble_overlap(basis, cs),
        assemble_dipole_velocity(basis, cs),
    ):
        u = _rand_state(op.state_shape(), rng)
        v = _rand_state(op.state_shape(), rng)
        left = np.vdot(u.reshape(-1), op.apply(v).reshape(-1))
        right = np.vdot(op.apply(u).reshape(-1), v.reshape(-1))
        assert left == pytest.approx(right, abs=1e-11 * max(1.0, abs(left)))


def test_ee_slater_screening(small_basis):
    # <1s 1s| 1/r12 |1s 1s> = 5 Z / 8 for hydrogenic Z orbitals
    z = 2.0
    cs = enumerate_channels(lmax=0, Lmax=0, symmetry="singlet")
    ee = assemble_ee(small_basis, cs, lam_max=0)
    s = overlap_matrix(small_basis).to_dense()
    energies, vecs = radial_eigenbasis(small_basis, lambda r: -z / r, l=0)
    u0 = vecs[:, 0]
    assert energies[0] == pytest.approx(-z * z / 2.0, abs=1e-6)
    psi = np.einsum("a,b->ab", u0, u0)[None, :, :].astype(np.complex128)
    val = np.vdot(psi.reshape(-1), ee.apply(psi).reshape(-1)).real
    norm = np.vdot(psi.reshape(-1), (s @ psi[0] @ s.T).reshape(-1)).real
    assert val / norm == pytest.approx(5.0 * z / 8.0, abs=2e-4)


def test_ee_multipole_vs_brute_quadrature():
    # lambda=1 block (0,1)->(1,0) against direct 2D quadrature; the mirror
    # block receives only the odd multipole, isolating one kernel.  The
    # r_< / r_>^2 kernel has a derivative kink along r1 = r2, which caps a
    # tensor-product Gauss rule at second order in the subdivision width,
    # so the reference is Richardson extrapolated from three refinements.
    basis = build_radial_basis(r_max=6.0, n_splines=8, order=4, grading="linear")
    cs = enumerate_channels(lmax=1, Lmax=1, symmetry="singlet")
    ee = assemble_ee(basis, cs, lam_max=2)
    k01 = cs.index(next(c for c in cs.channels if (c.L, c.l1, c.l2) == (1, 0, 1)))
    k10 = cs.exchange_map[k01]

    from xuvatom.bsplines import eval_spline

    rng = np.random.default_rng(3)
    c1 = rng.standard_normal((basis.n_splines, basis.n_splines))
    c2 = rng.standard_normal((basis.n_splines, basis.n_splines))

    def brute(m):
        x, w = np.polynomial.legendre.leggauss(6)
        nodes, weights = [], []
        for a, b in zip(basis.breakpoints[:-1], basis.breakpoints[1:]):
            sub = np.linspace(a, b, m + 1)
            for lo_, hi_ in zip(sub[:-1], sub[1:]):
                nodes.append(0.5 * (hi_ - lo_) * x + 0.5 * (hi_ + lo_))
                weights.append(0.5 * (hi_ - lo_) * w)
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights)
        bvals = np.array([eval_spline(basis, a, nodes) for a in range(basis.n_splines)])
        kern = np.minimum.outer(nodes, nodes) / np.maximum.outer(nodes, nodes) ** 2
        g1 = np.einsum("ab,ar,bs->rs", c1, bvals, bvals)
        g2 = np.einsum("ab,ar,bs->rs", c2, bvals, bvals)
        return np.einsum("rs,r,s,rs->", g1 * kern, weights, weights, g2)

    e1, e2, e3 = brute(8), brute(16), brute(32)
    r1, r2 = (4 * e2 - e1) / 3, (4 * e3 - e2) / 3
    ref = (8 * r2 - r1) / 7

    psi = np.zeros((len(cs), basis.n_splines, basis.n_splines), dtype=np.complex128)
    psi[k01] = c2
    out = ee.apply(psi)
    from xuvatom.angular import multipole_coupling

    ang = multipole_coupling(1, cs.channels[k01], cs.channels[k10])
    got = np.einsum("ab,ab->", c1, out[k10].real)
    assert got == pytest.approx(ang * ref, rel=5e-7)


def test_dipole_couples_adjacent_l_only(tiny_2e, rng):
    basis, cs = tiny_2e
    d = assemble_dipole_velocity(basis, cs)
    for k, c in enumerate(cs.channels):
        psi = np.zeros(d.state_shape(), dtype=np.complex128)
        psi[k] = _rand_state(psi[k].shape, rng)
        out = d.apply(psi)
        for kp, cp in enumerate(cs.channels):
            block = np.max(np.abs(out[kp]))
            touched = (
                abs(cp.L - c.L) == 1
                and (
                    (abs(cp.l1 - c.l1) == 1 and cp.l2 == c.l2)
                    or (abs(cp.l2 - c.l2) == 1 and cp.l1 == c.l1)
                )
            )
            if not touched:
                assert block < 1e-14


def test_absorber_negative_imaginary(small_basis, rng):
    cs = one_electron_channels(lmax=1)
    w = assemble_absorber(small_basis, cs, r_abs=18.0, eta=0.4)
    v = _rand_state(w.state_shape(), rng)
    expect = np.vdot(v.reshape(-1), w.apply(v).reshape(-1))
    assert expect.imag < 0.0
    assert abs(expect.real) < 1e-10 * abs(expect.imag)


def test_with_field_scales_linearly(tiny_2e, rng):
    basis, cs = tiny_2e
    h0 = assemble_atomic(basis, cs, lambda r: -2.0 / r)
    d = assemble_dipole_velocity(basis, cs)
    ht = h0.plus(d).with_field(lambda t: 0.25 * t)
    v = _rand_state(ht.state_shape(), rng)
    at2 = ht.apply(v, t=2.0)
    ref = h0.apply(v) + 0.5 * d.apply(v)
    assert np.max(np.abs(at2 - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_overlap_norm_positive(tiny_2e, rng):
    basis, cs = tiny_2e
    s = assemble_overlap(basis, cs)
    v = _rand_state(s.state_shape(), rng)
    assert s.norm(v) > 0.0
