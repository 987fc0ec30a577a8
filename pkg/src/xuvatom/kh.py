"""Oscillating-frame (Kramers-Henneberger) analysis of superintense driving.

In the frame following a classical electron quivering as alpha(t) =
alpha0 cos(wt) along z, the nuclear attraction becomes -Z/|r - alpha(t) z|.
Averaged over a cycle it leaves the static dressed potential

    V0(r) = sum_{even lam} v_lam(r; alpha0) P_lam(cos theta),

whose Legendre components reduce to one-dimensional phase averages

    v_lam(r) = -Z (2/pi) int_0^{pi/2} min(r, a)^lam / max(r, a)^(lam+1) du,
    a = alpha0 cos u,

odd ranks cancelling between the half cycles.  Higher Fourier components
v_{lam,n} (nonzero for lam + n even) quantify what the static picture
neglects.  The integrands have a kink where the excursion crosses r; the
quadrature is split there.  v_0 diverges logarithmically at r -> 0, which
is integrable against the r^2 volume weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import acos, cos, pi
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad

from .angular import ChannelSet, enumerate_channels, one_electron_channels
from .bsplines import RadialBasis, potential_matrix
from .eigensolve import EigenResult, bound_states, eigensolve_dense
from .operators import (
    BlockOperator,
    OverlapOperator,
    assemble_atomic,
    assemble_axial_multipole,
    assemble_ee,
    assemble_overlap,
    coulomb_potential,
)
from .propagation import ChannelFactorization


def _v_lambda_scalar(r: float, lam: int, alpha0: float, z: float) -> float:
    if r <= 0.0:
        raise ValueError(f"radius must be > 0, got {r}")
    if alpha0 == 0.0:
        return -z / r if lam == 0 else 0.0

    def integrand(u: float) -> float:
        a = alpha0 * cos(u)
        lo, hi = (a, r) if a < r else (r, a)
        return lo**lam / hi ** (lam + 1)

    pts = []
    if r < alpha0:
        pts = [acos(r / alpha0)]
    val, _ = quad(integrand, 0.0, 0.5 * pi, points=pts or None, limit=200)
    return -z * (2.0 / pi) * val


def kh_v_lambda(r, lam: int, alpha0: float, z: float):
    """Cycle-averaged Legendre component v_lam(r).  Zero for odd lam."""
    if lam % 2 == 1:
        return np.zeros_like(np.asarray(r, dtype=float)) if np.ndim(r) else 0.0
    if np.ndim(r) == 0:
        return _v_lambda_scalar(float(r), lam, alpha0, z)
    rr = np.asarray(r, dtype=float)
    return np.fromiter(
        (_v_lambda_scalar(float(x), lam, alpha0, z) for x in rr.ravel()), dtype=float, count=rr.size
    ).reshape(rr.shape)


def kh_v_lambda_fourier(r, lam: int, n: int, alpha0: float, z: float):
    """Fourier sideband v_{lam,n}(r) of the oscillating-frame attraction.

    Defined by -Z/|r - alpha0 cos(u) z| = sum_{lam,n} v_{lam,n}(r) P_lam cos(nu);
    vanishes unless lam + n is even.  n = 0 reproduces kh_v_lambda.
    """
    n = abs(int(n))
    if (lam + n) % 2 == 1:
        return np.zeros_like(np.asarray(r, dtype=float)) if np.ndim(r) else 0.0
    if n == 0:
        return kh_v_lambda(r, lam, alpha0, z)

    def scalar(rv: float) -> float:
        if alpha0 == 0.0:
            return 0.0

        def integrand(u: float) -> float:
            a = alpha0 * cos(u)
            aa = abs(a)
            lo, hi = (aa, rv) if aa < rv else (rv, aa)
            sign = 1.0 if (a >= 0.0 or lam % 2 == 0) else -1.0
            return sign * lo**lam / hi ** (lam + 1) * cos(n * u)

        pts = []
        if rv < alpha0:
            u_star = acos(rv / alpha0)
            pts = [u_star, pi - u_star]
        # factor 2 for the cos(nu)-weighted average over the full cycle
        val, _ = quad(integrand, 0.0, pi, points=pts or None, limit=300)
        return -z * (2.0 / pi) * val

    if np.ndim(r) == 0:
        return scalar(float(r))
    rr = np.asarray(r, dtype=float)
    return np.fromiter((scalar(float(x)) for x in rr.ravel()), dtype=float, count=rr.size).reshape(rr.shape)


def kh_potential_on_axis(r, theta, alpha0: float, z: float, lam_max: int = 16):
    """Partial-sum reconstruction of V0 at (r, theta) for diagnostics."""
    from numpy.polynomial.legendre import legval

    x = np.cos(theta)
    total = 0.0
    for lam in range(0, lam_max + 1, 2):
        coeffs = np.zeros(lam + 1)
        coeffs[lam] = 1.0
        total = total + kh_v_lambda(r, lam, alpha0, z) * legval(x, coeffs)
    return total


# =====================================================================
# Effective operators and spectra
# =====================================================================

def assemble_kh_hamiltonian(
    basis: RadialBasis,
    channels: ChannelSet,
    alpha0: float,
    z: float,
    lam_max: int = 8,
    lam_max_ee: int | None = None,
) -> BlockOperator:
    """Kinetic energy plus the dressed potential on every electron.

    The lam = 0 component rides with the kinetic term; higher even ranks
    enter through their Legendre couplings.  Two-electron channel sets also
    get the full repulsion (lam_max_ee defaults to twice the channel lmax).
    """
    if lam_max < 0 or lam_max % 2 == 1:
        raise ValueError(f"lam_max must be even and >= 0, got {lam_max}")
    op = assemble_atomic(basis, channels, lambda r: kh_v_lambda(r, 0, alpha0, z))
    for lam in range(2, lam_max + 1, 2):
        v_rad = potential_matrix(basis, lambda r: kh_v_lambda(r, lam, alpha0, z))
        term = assemble_axial_multipole(basis, channels, lam, v_rad)
        if term.static_terms:
            op = op.plus(term)
    if channels.two_electron:
        lam_ee = lam_max_ee if lam_max_ee is not None else 2 * channels.lmax
        op = op.plus(assemble_ee(basis, channels, lam_max=lam_ee))
    return op


def kh_dressed_potential(basis: RadialBasis, alpha0: float, z: float) -> Callable[[NDArray], NDArray]:
    """The spherical part of the dressed potential, for factorizations."""
    return lambda r: kh_v_lambda(r, 0, alpha0, z)


@dataclass
class KhSpectrum:
    alpha0: float
    energies: NDArray[np.float64]
    result: EigenResult


def kh_bound_spectrum(
    basis: RadialBasis,
    alpha0: float,
    z: float,
    lmax: int = 4,
    lam_max: int = 8,
    n_states: int = 4,
) -> KhSpectrum:
    """One-electron bound levels of the dressed atom (dense, axial symmetry)."""
    channels = one_electron_channels(lmax)
    h = assemble_kh_hamiltonian(basis, channels, alpha0, z, lam_max=lam_max)
    s = assemble_overlap(basis, channels)
    res = eigensolve_dense(h, s, max_dim=20000)
    keep = res.energies < 0.0
    keep[n_states:] = False
    kept = EigenResult(res.energies[keep], res.states[keep], res.residuals[keep])
    return KhSpectrum(alpha0=alpha0, energies=kept.energies, result=kept)


def kh_two_electron_ground(
    basis: RadialBasis,
    alpha0: float,
    z: float,
    lmax: int = 2,
    lam_max: int = 8,
    sigma0: float | None = None,
) -> KhSpectrum:
    """Singlet ground state of two electrons in the dressed potential."""
    channels = enumerate_channels(lmax=lmax, Lmax=0)
    h = assemble_kh_hamiltonian(basis, channels, alpha0, z, lam_max=lam_max)
    s = assemble_overlap(basis, channels)
    fac = ChannelFactorization(basis, channels, kh_dressed_potential(basis, alpha0, z))
    if sigma0 is None:
        bare = kh_bound_spectrum(basis, alpha0, z, lmax=lmax, lam_max=lam_max, n_states=1)
        lowest = bare.energies[0] if len(bare.energies) else -0.5 * z**2
        sigma0 = 2.2 * lowest  # below twice the one-electron ground level
    res = bound_states(
        h, s, sigma0=sigma0, n_states=1, factorization=fac, symmetry="singlet", threshold=0.0
    )
    return KhSpectrum(alpha0=alpha0, energies=res.energies, result=res)
