"""Radial basis construction, quadrature-built matrices, banded storage."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from xuvatom.bsplines import (
    BandedSymMatrix,
    BasisError,
    build_radial_basis,
    derivative_matrix,
    eval_spline,
    kinetic_matrix,
    overlap_matrix,
    potential_matrix,
)


def test_construction_validation():
    with pytest.raises(BasisError):
        build_radial_basis(r_max=-1.0, n_splines=10, order=4)
    with pytest.raises(BasisError):
        build_radial_basis(r_max=10.0, n_splines=1, order=6)
    with pytest.raises(BasisError):
        build_radial_basis(r_max=10.0, n_splines=10, order=4, grading="cubic")


def test_breakpoints_cover_box():
    for grading in ("linear", "exp_then_linear"):
        b = build_radial_basis(r_max=20.0, n_splines=30, order=5, grading=grading)
        assert b.breakpoints[0] == 0.0
        assert b.breakpoints[-1] == pytest.approx(20.0)
        assert np.all(np.diff(b.breakpoints) > 0)


def test_graded_breakpoints_grow_then_saturate():
    b = build_radial_basis(r_max=30.0, n_splines=50, order=6, grading="exp_then_linear")
    steps = np.diff(b.breakpoints)
    assert steps[0] < steps[-1]
    # the near-origin region resolves the nuclear scale
    assert steps[0] < 0.1


def test_dirichlet_boundaries(tiny_basis):
    r_edges = np.array([1e-12, tiny_basis.r_max - 1e-12])
    for a in range(tiny_basis.n_splines):
        vals = eval_spline(tiny_basis, a, r_edges)
        assert np.all(np.abs(vals) < 1e-9)


def test_overlap_vs_adaptive_quadrature(tiny_basis):
    s = overlap_matrix(tiny_basis).to_dense()
    for a, b in ((0, 0), (0, 1), (3, 5), (7, 7)):
        ref, err = quad(
            lambda r: float(eval_spline(tiny_basis, a, np.array([r]))[0])
            * float(eval_spline(tiny_basis, b, np.array([r]))[0]),
            0.0,
            tiny_basis.r_max,
            limit=200,
        )
        assert s[a, b] == pytest.approx(ref, abs=max(1e-12, 20 * err))


def test_potential_vs_adaptive_quadrature(tiny_basis):
    # 1/r is not polynomial, so the fixed rule carries a small error in the
    # first cell; the check guards assembly wiring, not quadrature exactness
    v = potential_matrix(tiny_basis, lambda r: -2.0 / r).to_dense()
    for a, b in ((0, 0), (2, 3)):
        ref, err = quad(
            lambda r: float(eval_spline(tiny_basis, a, np.array([r]))[0])
            * (-2.0 / r)
            * float(eval_spline(tiny_basis, b, np.array([r]))[0]),
            0.0,
            tiny_basis.r_max,
            limit=400,
            points=[0.0],
        )
        assert v[a, b] == pytest.approx(ref, rel=1e-4)
    # smooth potentials integrate to near-exactness
    vs = potential_matrix(tiny_basis, lambda r: r * np.exp(-r)).to_dense()
    ref, err = quad(
        lambda r: float(eval_spline(tiny_basis, 2, np.array([r]))[0])
        * r
        * np.exp(-r)
        * float(eval_spline(tiny_basis, 3, np.array([r]))[0]),
        0.0,
        tiny_basis.r_max,
        limit=400,
    )
    assert vs[2, 3] == pytest.approx(ref, rel=1e-7)


def test_kinetic_symmetric_positive(tiny_basis):
    t = kinetic_matrix(tiny_basis, l=0).to_dense()
    assert np.allclose(t, t.T, atol=1e-13)
    assert np.all(np.linalg.eigvalsh(t) > 0)


def test_centrifugal_raises_energy(tiny_basis):
    t0 = kinetic_matrix(tiny_basis, l=0).to_dense()
    t1 = kinetic_matrix(tiny_basis, l=1).to_dense()
    diff = t1 - t0
    assert np.all(np.linalg.eigvalsh(diff) >= -1e-12)


def test_overlap_banded_and_spd(small_basis):
    s = overlap_matrix(small_basis)
    dense = s.to_dense()
    hb = small_basis.halfband
    for i in range(dense.shape[0]):
        for j in range(dense.shape[1]):
            if abs(i - j) > hb:
                assert dense[i, j] == 0.0
    assert np.all(np.linalg.eigvalsh(dense) > 0)


def test_derivative_matrix_antisymmetric(tiny_basis):
    # int B_a B_b' dr = -int B_a' B_b dr for functions vanishing at both ends
    d = derivative_matrix(tiny_basis)
    assert np.allclose(d, -d.T, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_banded_matvec_matches_dense(seed):
    rng = np.random.default_rng(seed)
    n, hb = 9, 3
    a = rng.standard_normal((n, n))
    a = a + a.T
    for i in range(n):
        for j in range(n):
            if abs(i - j) > hb:
                a[i, j] = 0.0
    banded = BandedSymMatrix.from_dense(a, hb)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert np.allclose(banded.matvec(x), a @ x, atol=1e-13)
    assert np.allclose(banded.to_dense(), a, atol=1e-15)


def test_basis_roundtrip_dict(small_basis):
    from xuvatom.bsplines import RadialBasis

    d = small_basis.to_dict()
    again = RadialBasis.from_dict(d)
    assert np.allclose(again.breakpoints, small_basis.breakpoints)
    assert again.n_splines == small_basis.n_splines
    with pytest.raises(BasisError):
        RadialBasis.from_dict({"format": "other", "version": 1})


def test_quadrature_integrates_splines_exactly(tiny_basis):
    # Gauss-Legendre with order+1 points is exact for products of splines:
    # overlap row sums equal the integral of B_a times the unit partition
    s = overlap_matrix(tiny_basis).to_dense()
    for a in (1, 4):
        ref, err = quad(
            lambda r: float(eval_spline(tiny_basis, a, np.array([r]))[0]),
            0.0,
            tiny_basis.r_max,
            limit=200,
        )
        # sum over retained splines misses the two boundary splines; their
        # support only touches the first/last cells, so compare there loosely
        assert abs(s[a].sum() - ref) < 0.05 * abs(ref) + 1e-9
