"""Radial B-spline basis on [0, R_max] with Gauss-Legendre cell quadrature.

Reduced radial functions u(r) = r*R(r) are expanded in B-splines of order k
(polynomial degree k-1) on a breakpoint sequence with k-fold endpoint knots.
The first and last splines are dropped so every retained function satisfies
u(0) = u(R_max) = 0.  All one-dimensional matrix elements are banded with
half-bandwidth k-1 and are integrated cell by cell with a Gauss-Legendre
rule that is exact for the polynomial integrands (overlap, kinetic).

Atomic units throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import BSpline

logger = logging.getLogger(__name__)


class BasisError(ValueError):
    """Invalid basis construction parameters."""


class QuadratureError(ArithmeticError):
    """Non-finite values encountered while integrating a matrix element."""


# =====================================================================
# Breakpoint grading
# =====================================================================

def _linear_breakpoints(r_max: float, n_intervals: int) -> NDArray[np.float64]:
    return np.linspace(0.0, r_max, n_intervals + 1)


def _exp_then_linear_breakpoints(
    r_max: float, n_intervals: int, h0: float, growth: float
) -> NDArray[np.float64]:
    """Geometric interval widths h0*growth**i until they reach the uniform
    width needed to finish the box exactly, then constant spacing."""
    if h0 <= 0 or growth <= 1.0:
        raise BasisError(f"exp_then_linear needs h0 > 0 and growth > 1, got {h0}, {growth}")
    widths = []
    pos = 0.0
    for i in range(n_intervals):
        remaining = n_intervals - len(widths)
        h_uniform = (r_max - pos) / remaining
        h_geom = h0 * growth ** i
        if h_geom >= h_uniform:
            widths.extend([h_uniform] * remaining)
            break
        widths.append(h_geom)
        pos += h_geom
    else:
        # Geometric part never caught up; rescale so the box still closes.
        scale = r_max / pos
        widths = [w * scale for w in widths]
        logger.warning("exp_then_linear grading never reached uniform spacing; rescaled by %.3g", scale)
    bp = np.concatenate([[0.0], np.cumsum(widths)])
    bp[-1] = r_max
    return bp


# =====================================================================
# Basis
# =====================================================================

@dataclass
class RadialBasis:
    """Retained B-spline set plus its quadrature grid.

    Treat instances as immutable after construction; shared use from several
    threads is safe because nothing here mutates.

    Attributes
    ----------
    r_max : float
        Box radius.
    n_splines : int
        Number of retained splines (boundary splines already removed).
    order : int
        Spline order k (degree k-1).
    breakpoints : (n_intervals+1,) array
    knots : full clamped knot vector with k-fold endpoints
    quad_nodes, quad_weights : (n_intervals, nq) arrays
        Gauss-Legendre rule per cell, nq = order + 1 by default.
    """

    r_max: float
    n_splines: int
    order: int
    grading: str
    breakpoints: NDArray[np.float64]
    knots: NDArray[np.float64]
    quad_nodes: NDArray[np.float64]
    quad_weights: NDArray[np.float64]
    grading_params: dict = field(default_factory=dict)

    # populated lazily
    _splines: list = field(default_factory=list, repr=False)
    _dsplines: list = field(default_factory=list, repr=False)

    @property
    def n_intervals(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def n_all(self) -> int:
        """Spline count before boundary removal."""
        return self.n_intervals + self.order - 1

    @property
    def halfband(self) -> int:
        return self.order - 1

    def _ensure_spline_objects(self) -> None:
        if self._splines:
            return
        k = self.order
        d = k - 1
        for a in range(self.n_all):
            t = self.knots[a : a + k + 1]
            self._splines.append(BSpline.basis_element(t, extrapolate=False))
            # dB/dr via the lower-order recurrence; terms with coincident
            # knots are identically zero and dropped (their denominator is 0).
            terms = []
            if d > 0:
                den1 = self.knots[a + k - 1] - self.knots[a]
                if den1 > 0:
                    terms.append((d / den1, BSpline.basis_element(self.knots[a : a + k], extrapolate=False)))
                den2 = self.knots[a + k] - self.knots[a + 1]
                if den2 > 0:
                    terms.append((-d / den2, BSpline.basis_element(self.knots[a + 1 : a + k + 1], extrapolate=False)))
            self._dsplines.append(terms)

    def to_dict(self) -> dict:
        """JSON-serializable construction record (debug dump format v1)."""
        return {
            "format": "xuvatom-radial-basis",
            "version": 1,
            "r_max": self.r_max,
            "n_splines": self.n_splines,
            "order": self.order,
            "grading": self.grading,
            "grading_params": dict(self.grading_params),
        }

    @staticmethod
    def from_dict(d: dict) -> "RadialBasis":
        if d.get("format") != "xuvatom-radial-basis" or d.get("version") != 1:
            raise BasisError(f"unrecognized basis dump: {d.get('format')!r} v{d.get('version')!r}")
        return build_radial_basis(
            d["r_max"], d["n_splines"], d["order"], d["grading"], **d.get("grading_params", {})
        )


def build_radial_basis(
    r_max: float,
    n_splines: int,
    order: int,
    grading: str = "linear",
    h0: float = 0.02,
    growth: float = 1.25,
    quad_points: int | None = None,
) -> RadialBasis:
    """Construct the retained radial basis.

    n_splines counts the functions kept after dropping the first and last
    spline, so the underlying breakpoint count is n_splines + 3 - order.
    """
    if order < 1:
        raise BasisError(f"order must be >= 1, got {order}")
    if r_max <= 0:
        raise BasisError(f"r_max must be positive, got {r_max}")
    if n_splines < 1:
        raise BasisError(f"need at least one retained spline, got {n_splines}")
    n_intervals = n_splines + 3 - order
    if n_intervals < 1:
        raise BasisError(
            f"n_splines={n_splines} too small for order={order} (needs n >= order - 2)"
        )
    if grading == "linear":
        bp = _linear_breakpoints(r_max, n_intervals)
        gp = {}
    elif grading == "exp_then_linear":
        bp = _exp_then_linear_breakpoints(r_max, n_intervals, h0, growth)
        gp = {"h0": h0, "growth": growth}
    else:
        raise BasisError(f"unknown grading {grading!r}")
    if np.any(np.diff(bp) <= 0):
        raise BasisError("breakpoints are not strictly increasing")

    k = order
    knots = np.concatenate([np.full(k, bp[0]), bp[1:-1], np.full(k, bp[-1])])

    nq = quad_points if quad_points is not None else k + 1
    if nq < 1:
        raise BasisError(f"quad_points must be >= 1, got {nq}")
    x, w = np.polynomial.legendre.leggauss(nq)
    a = bp[:-1][:, None]
    b = bp[1:][:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]

    return RadialBasis(
        r_max=float(r_max),
        n_splines=int(n_splines),
        order=int(order),
        grading=grading,
        breakpoints=bp,
        knots=knots,
        quad_nodes=nodes,
        quad_weights=weights,
        grading_params=gp,
    )


# =====================================================================
# Evaluation
# =====================================================================

def _eval_full(basis: RadialBasis, a: int, r: NDArray, deriv: bool = False) -> NDArray:
    """Value of full-index spline a (0..n_all-1) at points r, zero outside support."""
    basis._ensure_spline_objects()
    x = np.asarray(r, dtype=float)
    if deriv:
        out = np.zeros_like(x)
        for coeff, fn in basis._dsplines[a]:
            out = out + coeff * np.nan_to_num(fn(x), nan=0.0)
        return out
    return np.nan_to_num(basis._splines[a](x), nan=0.0)


def eval_spline(
    basis: RadialBasis, i: int, r: float | NDArray, deriv: bool = False
) -> float | NDArray:
    """Evaluate retained spline i (or its derivative) at radius r.

    Points outside [0, r_max] raise; points outside the spline's support give 0.
    """
    if not 0 <= i < basis.n_splines:
        raise IndexError(f"spline index {i} out of range [0, {basis.n_splines})")
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(arr > basis.r_max):
        raise ValueError("evaluation point outside [0, r_max]")
    out = _eval_full(basis, i + 1, arr, deriv=deriv)
    if np.isscalar(r):
        return float(out)
    return out


def spline_values_on_quad(basis: RadialBasis, deriv: bool = False) -> NDArray[np.float64]:
    """Values of all n_all splines on the quadrature grid.

    Returns array of shape (n_intervals, order, nq): entry [m, j, q] is spline
    with full index m + j evaluated at quad_nodes[m, q].  Only the `order`
    splines supported on cell m are stored.
    """
    m_tot, nq = basis.quad_nodes.shape
    k = basis.order
    out = np.zeros((m_tot, k, nq))
    for m in range(m_tot):
        for j in range(k):
            out[m, j] = _eval_full(basis, m + j, basis.quad_nodes[m], deriv=deriv)
    return out


# =====================================================================
# Banded symmetric matrices
# =====================================================================

@dataclass
class BandedSymMatrix:
    """Symmetric banded matrix in upper-diagonal storage.

    bands[d, i] holds entry (i, i+d) for 0 <= d <= halfband, zero-padded at
    the right edge.  Entries with |i-j| > halfband are exactly zero.
    """

    dim: int
    halfband: int
    bands: NDArray[np.float64]

    def to_dense(self) -> NDArray[np.float64]:
        a = np.zeros((self.dim, self.dim))
        for d in range(self.halfband + 1):
            idx = np.arange(self.dim - d)
            a[idx, idx + d] = self.bands[d, : self.dim - d]
            a[idx + d, idx] = self.bands[d, : self.dim - d]
        return a

    @staticmethod
    def from_dense(a: NDArray, halfband: int) -> "BandedSymMatrix":
        dim = a.shape[0]
        bands = np.zeros((halfband + 1, dim))
        for d in range(halfband + 1):
            bands[d, : dim - d] = np.diagonal(a, d)
        return BandedSymMatrix(dim=dim, halfband=halfband, bands=bands)

    def matvec(self, x: NDArray) -> NDArray:
        return self.to_dense() @ x

    def __matmul__(self, x):
        return self.matvec(x)


def _banded_from_products(
    basis: RadialBasis,
    left: NDArray[np.float64],
    right: NDArray[np.float64],
    weight: NDArray[np.float64],
) -> BandedSymMatrix:
    """Banded matrix with entries sum_{m,q} w[m,q] left[m,i_loc,q] right[m,j_loc,q]."""
    if not np.all(np.isfinite(weight)):
        raise QuadratureError("non-finite quadrature weights or potential values")
    k = basis.order
    full = np.zeros((basis.n_all, basis.n_all))
    lw = left * weight[:, None, :]
    for m in range(basis.n_intervals):
        g = lw[m] @ right[m].T  # (k, k) local block
        full[m : m + k, m : m + k] += g
    sym = 0.5 * (full + full.T)
    trimmed = sym[1:-1, 1:-1][: basis.n_splines, : basis.n_splines]
    return BandedSymMatrix.from_dense(trimmed, basis.halfband)


def overlap_matrix(basis: RadialBasis) -> BandedSymMatrix:
    """S_ij = int B_i B_j dr."""
    v = spline_values_on_quad(basis)
    return _banded_from_products(basis, v, v, basis.quad_weights)


def kinetic_matrix(basis: RadialBasis, l: int) -> BandedSymMatrix:
    """T_ij = 1/2 int B_i' B_j' dr + l(l+1)/2 int B_i B_j / r^2 dr."""
    if l < 0:
        raise ValueError(f"l must be >= 0, got {l}")
    dv = spline_values_on_quad(basis, deriv=True)
    t = _banded_from_products(basis, dv, dv, 0.5 * basis.quad_weights)
    if l > 0:
        v = spline_values_on_quad(basis)
        w = 0.5 * l * (l + 1) * basis.quad_weights / basis.quad_nodes**2
        cent = _banded_from_products(basis, v, v, w)
        t.bands = t.bands + cent.bands
    return t


def potential_matrix(basis: RadialBasis, f: Callable[[NDArray], NDArray]) -> BandedSymMatrix:
    """V_ij = int B_i f(r) B_j dr for a radial multiplicative potential.

    f is evaluated on the quadrature nodes and must return finite values
    there (nodes are strictly inside (0, r_max), so Coulomb-like 1/r is fine).
    """
    v = spline_values_on_quad(basis)
    fv = np.asarray(f(basis.quad_nodes), dtype=float)
    if fv.shape != basis.quad_nodes.shape:
        fv = np.broadcast_to(fv, basis.quad_nodes.shape).copy()
    if not np.all(np.isfinite(fv)):
        raise QuadratureError("potential evaluated to non-finite values on quadrature nodes")
    return _banded_from_products(basis, v, v, basis.quad_weights * fv)


def derivative_matrix(basis: RadialBasis) -> NDArray[np.float64]:
    """D_ij = int B_i dB_j/dr dr (antisymmetric under Dirichlet removal)."""
    v = spline_values_on_quad(basis)
    dv = spline_values_on_quad(basis, deriv=True)
    k = basis.order
    full = np.zeros((basis.n_all, basis.n_all))
    vw = v * basis.quad_weights[:, None, :]
    for m in range(basis.n_intervals):
        full[m : m + k, m : m + k] += vw[m] @ dv[m].T
    return full[1:-1, 1:-1][: basis.n_splines, : basis.n_splines]


def dense_generalized_eig(
    a: BandedSymMatrix, s: BandedSymMatrix
) -> tuple[NDArray, NDArray]:
    """Reference solve of A x = E S x via a dense direct method.

    Intended for one-electron problems and tests; returns all eigenpairs
    sorted ascending with S-orthonormal vectors.
    """
    from scipy.linalg import eigh

    vals, vecs = eigh(a.to_dense(), s.to_dense())
    return vals, vecs
