"""Block operators over (channel, radial) product spaces.

A state is stored as a complex array c[k, i] (one electron) or c[k, i, j]
(two electrons) with k the channel index.  Every Hamiltonian piece except
the electron repulsion is a sum of Kronecker terms

    Y[bra] += coeff * K1 @ X[ket] @ K2.T

with banded radial kernels K1, K2; the repulsion is kept as per-rank pair
tensors contracted in a dedicated kernel.  Operators never materialize the
full matrix (apart from an explicitly size-guarded debug path).

The electron-electron radial tensor

    R_lam[(i,i'),(j,j')] = int int B_i B_i'(r1) (r_<^lam / r_>^(lam+1)) B_j B_j'(r2)

is computed by the two-step cell decomposition: the inner integral is
accumulated cell by cell into
    y_lam[ii'](r) = r^-(lam+1) * int_0^r B_i B_i' s^lam ds
                  + r^lam     * int_r^R B_i B_i' s^-(lam+1) ds
with the partial cells handled by mapped Gauss rules on the split
subintervals, and the outer integral done on a refined per-cell rule:
y itself has degree up to 2k-2 where the kernel pieces stay polynomial,
so the outer integrand reaches 4k-4 and the ordinary k+1 point rule
would under-integrate the near-origin cells.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.interpolate import BSpline

from .angular import Channel, ChannelSet, multipole_coupling, pz_velocity_coupling, legendre_field_coupling
from .bsplines import (
    BandedSymMatrix,
    QuadratureError,
    RadialBasis,
    derivative_matrix,
    kinetic_matrix,
    overlap_matrix,
    potential_matrix,
)

logger = logging.getLogger(__name__)

_USE_NUMBA = os.environ.get("XUVATOM_DISABLE_NUMBA", "") == ""


def coulomb_potential(z: float) -> Callable[[NDArray], NDArray]:
    return lambda r: -z / r


# =====================================================================
# State vectors
# =====================================================================

@dataclass
class StateVector:
    """Expansion coefficients plus the labels needed to interpret them."""

    coeffs: NDArray[np.complex128]
    channels: ChannelSet
    basis: RadialBasis

    def copy(self) -> "StateVector":
        return StateVector(self.coeffs.copy(), self.channels, self.basis)

    @property
    def two_electron(self) -> bool:
        return self.channels.two_electron

    def symmetrize(self) -> None:
        """Project onto the singlet-symmetric subspace in place."""
        if not self.two_electron:
            return
        ex = self.channels.exchange_map
        c = self.coeffs
        out = np.empty_like(c)
        for k in range(len(ex)):
            if ex[k] < 0:
                out[k] = c[k]
            else:
                out[k] = 0.5 * (c[k] + c[ex[k]].swapaxes(-2, -1))
        self.coeffs = out

    def exchange_asymmetry(self) -> float:
        """Max-norm violation of c[k(l1,l2),i,j] = c[k(l2,l1),j,i]."""
        if not self.two_electron:
            return 0.0
        ex = self.channels.exchange_map
        c = self.coeffs
        worst = 0.0
        for k in range(len(ex)):
            if ex[k] >= 0:
                worst = max(worst, float(np.max(np.abs(c[k] - c[ex[k]].swapaxes(-2, -1)))))
        return worst


def zeros_like_state(channels: ChannelSet, basis: RadialBasis) -> StateVector:
    n = basis.n_splines
    shape = (len(channels), n, n) if channels.two_electron else (len(channels), n)
    return StateVector(np.zeros(shape, dtype=np.complex128), channels, basis)


# =====================================================================
# Electron-electron radial tensor
# =====================================================================

def _design_matrix_dense(basis: RadialBasis, x: NDArray) -> NDArray[np.float64]:
    x = np.clip(np.asarray(x, dtype=float).ravel(), 0.0, basis.r_max)
    dm = BSpline.design_matrix(x, basis.knots, basis.order - 1, extrapolate=False)
    return np.asarray(dm.todense())


@dataclass
class EeRadialTensor:
    """Per-rank pair-space repulsion integrals on the retained basis.

    r_uo[lam] has shape (n_pairs, n_pairs) over unordered banded index pairs
    (u, u+d), d = 0..order-1; pair_index maps (u, d) -> row, -1 if invalid.
    """

    lams: tuple
    r_uo: list
    pair_index: NDArray[np.int64]
    basis: RadialBasis


def ee_radial_tensor(basis: RadialBasis, lams: Sequence[int], n_sub: int | None = None) -> EeRadialTensor:
    """Two-step cell-decomposition repulsion integrals for the given ranks."""
    lams = tuple(int(l) for l in lams)
    if any(l < 0 for l in lams):
        raise ValueError(f"multipole ranks must be >= 0, got {lams}")
    k = basis.order
    n = basis.n_splines
    m_tot = basis.quad_nodes.shape[0]
    # 2k-1 points integrate the degree 4k-4 polynomial cells exactly.
    nq = max(2 * k - 1, basis.quad_nodes.shape[1])
    nsub = n_sub if n_sub is not None else nq

    xg_o, wg_o = np.polynomial.legendre.leggauss(nq)
    half = 0.5 * (basis.breakpoints[1:] - basis.breakpoints[:-1])[:, None]
    nodes = half * (xg_o + 1.0) + basis.breakpoints[:-1][:, None]  # (m, q)
    weights = half * wg_o
    flat_nodes = nodes.ravel()
    flat_w = weights.ravel()
    nq_tot = flat_nodes.size

    # Split-cell Gauss rules left/right of every node.
    xg, wg = np.polynomial.legendre.leggauss(nsub)
    a_edge = basis.breakpoints[:-1][:, None]
    b_edge = basis.breakpoints[1:][:, None]
    # left: [a_m, r_mq]; right: [r_mq, b_m]
    half_l = 0.5 * (nodes - a_edge)
    half_r = 0.5 * (b_edge - nodes)
    sub_l = half_l[..., None] * (xg + 1.0) + a_edge[..., None]      # (m, q, s)
    sub_r = half_r[..., None] * (xg + 1.0) + nodes[..., None]
    sw_l = half_l[..., None] * wg
    sw_r = half_r[..., None] * wg

    dm_main = _design_matrix_dense(basis, flat_nodes)               # (Nq, n_all)
    dm_l = _design_matrix_dense(basis, sub_l)                        # (m*q*s, n_all)
    dm_r = _design_matrix_dense(basis, sub_r)

    # Unordered retained pairs (u, u+d).
    pair_index = np.full((n, k), -1, dtype=np.int64)
    pairs = []
    for u in range(n):
        for d in range(k):
            if u + d < n:
                pair_index[u, d] = len(pairs)
                pairs.append((u, u + d))
    pairs = np.asarray(pairs)
    npair = len(pairs)
    au = pairs[:, 0] + 1  # full spline indices
    av = pairs[:, 1] + 1

    p_main = (dm_main[:, au] * dm_main[:, av]).T                     # (npair, Nq)
    p_l = (dm_l[:, au] * dm_l[:, av]).T.reshape(npair, m_tot, nq, nsub)
    p_r = (dm_r[:, au] * dm_r[:, av]).T.reshape(npair, m_tot, nq, nsub)

    sub_l3 = sub_l.reshape(m_tot, nq, nsub)
    sub_r3 = sub_r.reshape(m_tot, nq, nsub)

    outer = p_main * flat_w                                          # (npair, Nq)
    r_uo = []
    for lam in lams:
        with np.errstate(divide="ignore", over="ignore"):
            pow_lo_main = nodes**lam * weights                       # (m, q)
            pow_hi_main = nodes ** (-lam - 1) * weights
            pow_lo_sub_l = sub_l3**lam * sw_l
            pow_hi_sub_r = sub_r3 ** (-lam - 1) * sw_r
            node_hi = flat_nodes ** (-lam - 1)
            node_lo = flat_nodes**lam

        pm = p_main.reshape(npair, m_tot, nq)
        ml = np.einsum("pmq,mq->pm", pm, pow_lo_main)                # full-cell lower moments
        mu = np.einsum("pmq,mq->pm", pm, pow_hi_main)
        cum_l = np.concatenate([np.zeros((npair, 1)), np.cumsum(ml, axis=1)[:, :-1]], axis=1)
        # cum_u sums cells strictly above m, so the near-origin cell's large
        # upper moment (formally divergent integrand for lam >= 2) never enters.
        mu_rev = np.cumsum(mu[:, ::-1], axis=1)[:, ::-1]
        cum_u = np.concatenate([mu_rev[:, 1:], np.zeros((npair, 1))], axis=1)

        part_l = np.einsum("pmqs,mqs->pmq", p_l, pow_lo_sub_l)
        part_r = np.einsum("pmqs,mqs->pmq", p_r, pow_hi_sub_r)

        y = node_hi * (cum_l[:, :, None] + part_l).reshape(npair, nq_tot) + node_lo * (
            cum_u[:, :, None] + part_r
        ).reshape(npair, nq_tot)
        if not np.all(np.isfinite(y)):
            raise QuadratureError(f"non-finite repulsion inner integral at rank {lam}")
        r = y @ outer.T
        r_uo.append(0.5 * (r + r.T))
    return EeRadialTensor(lams=lams, r_uo=r_uo, pair_index=pair_index, basis=basis)


# =====================================================================
# Electron-electron block tensor with fast apply
# =====================================================================

def _build_shift_kernel(t: EeRadialTensor, lam_pos: int) -> NDArray[np.float64]:
    """W[a, b, i', j'] = R[(i'+a-p, i'), (j'+b-p, j')], zero out of band."""
    basis = t.basis
    k = basis.order
    n = basis.n_splines
    nb = 2 * k - 1
    p = k - 1
    r = t.r_uo[lam_pos]
    r_pad = np.zeros((r.shape[0] + 1, r.shape[1] + 1))
    r_pad[:-1, :-1] = r

    idx = np.full((nb, n), -1, dtype=np.int64)
    for a in range(nb):
        off = a - p
        for i2 in range(n):
            i1 = i2 + off
            if 0 <= i1 < n:
                u, v = min(i1, i2), max(i1, i2)
                idx[a, i2] = t.pair_index[u, v - u]
    w = r_pad[idx[:, None, :, None], idx[None, :, None, :]]  # (nb, nb, n, n)
    return np.ascontiguousarray(w)


_EE_KERNEL = None


def _get_ee_kernel():
    global _EE_KERNEL
    if _EE_KERNEL is not None:
        return _EE_KERNEL
    if not _USE_NUMBA:
        return None
    try:
        import numba

        @numba.njit(cache=True, fastmath=False)
        def kern(w, xp, out):
            # w: (n, n, nlam, nb, nb), xp: (nlam, nc, n+2p, n+2p), out: (nc, n, n)
            nc = out.shape[0]
            n = out.shape[1]
            nlam = w.shape[2]
            nb = w.shape[3]
            for c in range(nc):
                for i in range(n):
                    for j in range(n):
                        acc = 0.0 + 0.0j
                        for l in range(nlam):
                            for a in range(nb):
                                row = xp[l, c, i + a]
                                wv = w[i, j, l, a]
                                for b in range(nb):
                                    acc += wv[b] * row[j + b]
                        out[c, i, j] += acc

        _EE_KERNEL = kern
    except Exception as exc:  # pragma: no cover - numba present in supported envs
        logger.warning("numba unavailable (%s); using numpy repulsion apply", exc)
        _EE_KERNEL = None
    return _EE_KERNEL


@dataclass
class EeBlock:
    """Assembled repulsion operator: per-rank channel coupling + shift kernels."""

    lams: tuple
    f: NDArray[np.float64]          # (nlam, nc, nc)
    w_slab: NDArray[np.float64]     # (nlam, nb, nb, n, n)
    pad: int
    _w_numba: NDArray | None = field(default=None, repr=False)

    def apply(self, x: NDArray[np.complex128], out: NDArray[np.complex128]) -> None:
        nlam, nc = self.f.shape[0], self.f.shape[1]
        n = x.shape[-1]
        p = self.pad
        xm = np.tensordot(self.f, x, axes=([2], [0]))  # (nlam, nc, n, n)
        xp = np.zeros((nlam, nc, n + 2 * p, n + 2 * p), dtype=np.complex128)
        xp[:, :, p : p + n, p : p + n] = xm
        kern = _get_ee_kernel()
        if kern is not None:
            if self._w_numba is None:
                self._w_numba = np.ascontiguousarray(self.w_slab.transpose(3, 4, 0, 1, 2))
            kern(self._w_numba, xp, out)
            return
        nb = 2 * p + 1
        for l in range(nlam):
            for a in range(nb):
                for b in range(nb):
                    out += self.w_slab[l, a, b] * xp[l, :, a : a + n, b : b + n]


# =====================================================================
# Kronecker terms and the block operator
# =====================================================================

@dataclass
class KronTerm:
    bra: int
    ket: int
    coeff: complex
    k1: sp.csr_matrix
    k2: sp.csr_matrix | None  # None for one-electron terms; k2 applies to r2


class BlockOperator:
    """Matrix-free sum of Kronecker blocks, optional repulsion, optional field.

    apply(x, t) evaluates  static + field(t) * driven  on the coefficient
    array.  A bare driven operator (field None but driven terms present) is
    applied with unit scale.  Instances are immutable after assembly and safe
    to share across threads.
    """

    def __init__(
        self,
        channels: ChannelSet,
        basis: RadialBasis,
        static_terms: list[KronTerm] | None = None,
        driven_terms: list[KronTerm] | None = None,
        ee: EeBlock | None = None,
        field: Callable[[float], float] | None = None,
    ):
        self.channels = channels
        self.basis = basis
        self.static_terms = static_terms or []
        self.driven_terms = driven_terms or []
        self.ee = ee
        self.field = field

    @property
    def n_dim(self) -> int:
        n = self.basis.n_splines
        per = n * n if self.channels.two_electron else n
        return len(self.channels) * per

    def state_shape(self) -> tuple:
        n = self.basis.n_splines
        if self.channels.two_electron:
            return (len(self.channels), n, n)
        return (len(self.channels), n)

    def _apply_terms(self, terms, x, out, scale):
        two = self.channels.two_electron
        for term in terms:
            xk = x[term.ket]
            if two:
                block = term.k1 @ xk @ term.k2T
            else:
                block = term.k1 @ xk
            out[term.bra] += (scale * term.coeff) * block

    def apply(self, x: NDArray[np.complex128], t: float = 0.0) -> NDArray[np.complex128]:
        x = np.asarray(x)
        if x.shape != self.state_shape():
            raise ValueError(f"state shape {x.shape} does not match operator {self.state_shape()}")
        out = np.zeros_like(x, dtype=np.complex128)
        self._apply_terms(self.static_terms, x, out, 1.0)
        if self.driven_terms:
            scale = self.field(t) if self.field is not None else 1.0
            if scale != 0.0:
                self._apply_terms(self.driven_terms, x, out, scale)
        if self.ee is not None:
            self.ee.apply(x, out)
        return out

    def finalize(self) -> "BlockOperator":
        """Precompute transposed kernels; call after assembly."""
        for term in self.static_terms + self.driven_terms:
            if term.k2 is not None:
                term.k2T = sp.csr_matrix(term.k2.T)
            else:
                term.k2T = None
        return self

    def plus(self, other: "BlockOperator") -> "BlockOperator":
        """Term-level sum; operands must share channels and basis."""
        if other.channels is not self.channels or other.basis is not self.basis:
            raise ValueError("operands were assembled on different spaces")
        if self.ee is not None and other.ee is not None:
            raise ValueError("cannot combine two repulsion blocks")
        return BlockOperator(
            self.channels,
            self.basis,
            self.static_terms + other.static_terms,
            self.driven_terms + other.driven_terms,
            self.ee if self.ee is not None else other.ee,
            self.field if self.field is not None else other.field,
        ).finalize()

    def with_field(self, field: Callable[[float], float]) -> "BlockOperator":
        return BlockOperator(
            self.channels, self.basis, self.static_terms, self.driven_terms, self.ee, field
        ).finalize()

    def restrict(self, keep_channels) -> "BlockOperator":
        """Operator restricted to a channel subset (e.g. one L block)."""
        sub = self.channels.subset(keep_channels)
        old_to_new = {self.channels.index(c): i for i, c in enumerate(sub.channels)}

        def conv(terms):
            out = []
            for term in terms:
                if term.bra in old_to_new and term.ket in old_to_new:
                    out.append(
                        KronTerm(old_to_new[term.bra], old_to_new[term.ket], term.coeff, term.k1, term.k2)
                    )
            return out

        ee = None
        if self.ee is not None:
            idx = sorted(old_to_new, key=old_to_new.get)
            f = self.ee.f[:, idx][:, :, idx]
            ee = EeBlock(self.ee.lams, np.ascontiguousarray(f), self.ee.w_slab, self.ee.pad)
        return BlockOperator(sub, self.basis, conv(self.static_terms), conv(self.driven_terms), ee, self.field).finalize()


def _csr(m) -> sp.csr_matrix:
    if isinstance(m, BandedSymMatrix):
        m = m.to_dense()
    return sp.csr_matrix(np.asarray(m, dtype=np.complex128))


# =====================================================================
# Assembly
# =====================================================================

def assemble_overlap(basis: RadialBasis, channels: ChannelSet) -> "OverlapOperator":
    return OverlapOperator(basis, channels)


class OverlapOperator(BlockOperator):
    """Channel-diagonal S (x) S with a direct solve via Cholesky factors."""

    def __init__(self, basis: RadialBasis, channels: ChannelSet):
        s1 = overlap_matrix(basis)
        s_csr = _csr(s1)
        terms = []
        for k in range(len(channels)):
            terms.append(KronTerm(k, k, 1.0, s_csr, s_csr if channels.two_electron else None))
        super().__init__(channels, basis, static_terms=terms)
        self.finalize()
        from scipy.linalg import cho_factor

        self._dense_s = s1.to_dense()
        self._cho = cho_factor(self._dense_s)

    def solve(self, b: NDArray[np.complex128]) -> NDArray[np.complex128]:
        from scipy.linalg import cho_solve

        out = np.empty_like(b, dtype=np.complex128)
        if self.channels.two_electron:
            for k in range(b.shape[0]):
                tmp = cho_solve(self._cho, b[k])
                out[k] = cho_solve(self._cho, tmp.T).T
        else:
            for k in range(b.shape[0]):
                out[k] = cho_solve(self._cho, b[k])
        return out

    def inner(self, a: NDArray, b: NDArray) -> complex:
        return complex(np.vdot(a, self.apply(b)))

    def norm(self, a: NDArray) -> float:
        v = self.inner(a, a).real
        return float(np.sqrt(max(v, 0.0)))


def assemble_atomic(
    basis: RadialBasis,
    channels: ChannelSet,
    potential: Callable[[NDArray], NDArray],
) -> BlockOperator:
    """Kinetic + centrifugal + nuclear attraction, channel diagonal."""
    s_csr = _csr(overlap_matrix(basis))
    v_rad = potential_matrix(basis, potential)
    h_l: dict[int, sp.csr_matrix] = {}

    def kernel(l: int) -> sp.csr_matrix:
        if l not in h_l:
            t = kinetic_matrix(basis, l)
            h_l[l] = _csr(BandedSymMatrix(t.dim, t.halfband, t.bands + v_rad.bands))
        return h_l[l]

    terms = []
    for k, c in enumerate(channels):
        if channels.two_electron:
            terms.append(KronTerm(k, k, 1.0, kernel(c.l1), s_csr))
            terms.append(KronTerm(k, k, 1.0, s_csr, kernel(c.l2)))
        else:
            terms.append(KronTerm(k, k, 1.0, kernel(c), None))
    return BlockOperator(channels, basis, static_terms=terms).finalize()


def assemble_ee(
    basis: RadialBasis,
    channels: ChannelSet,
    lam_max: int,
    tensor: EeRadialTensor | None = None,
) -> BlockOperator:
    """Full multipole expansion of 1/r12 up to rank lam_max."""
    if not channels.two_electron:
        raise ValueError("electron repulsion needs a two-electron channel set")
    if lam_max < 0:
        raise ValueError(f"lam_max must be >= 0, got {lam_max}")
    nc = len(channels)
    f_all = []
    lams = []
    for lam in range(lam_max + 1):
        f = np.zeros((nc, nc))
        for a, ca in enumerate(channels):
            for b, cb in enumerate(channels):
                f[a, b] = multipole_coupling(lam, cb, ca)  # bra a, ket b
        if np.any(f != 0.0):
            lams.append(lam)
            f_all.append(f)
    if tensor is None or tuple(lams) != tensor.lams:
        tensor = ee_radial_tensor(basis, lams)
    w = np.stack([_build_shift_kernel(tensor, i) for i in range(len(lams))])
    ee = EeBlock(tuple(lams), np.stack(f_all), w, pad=basis.order - 1)
    return BlockOperator(channels, basis, ee=ee)


def assemble_dipole_velocity(basis: RadialBasis, channels: ChannelSet) -> BlockOperator:
    """Velocity-gauge A(t)*(p_z1 + p_z2) block structure (bare, unit field)."""
    s_csr = _csr(overlap_matrix(basis))
    d_mat = derivative_matrix(basis)
    q_mat = potential_matrix(basis, lambda r: 1.0 / r).to_dense()

    kern: dict[tuple, sp.csr_matrix] = {}

    def radial(l_from: int, up: bool) -> sp.csr_matrix:
        key = (l_from, up)
        if key not in kern:
            if up:
                kern[key] = _csr(d_mat - (l_from + 1) * q_mat)
            else:
                kern[key] = _csr(d_mat + l_from * q_mat)
        return kern[key]

    terms = []
    two = channels.two_electron
    electrons = (1, 2) if two else (1,)
    for kf, cf in enumerate(channels):
        for ki, ci in enumerate(channels):
            for e in electrons:
                coup = pz_velocity_coupling(channels, ci, cf, electron=e)
                if coup == 0.0:
                    continue
                if two:
                    l_from = ci.l1 if e == 1 else ci.l2
                    l_to = cf.l1 if e == 1 else cf.l2
                else:
                    l_from, l_to = ci, cf
                rk = radial(l_from, up=(l_to == l_from + 1))
                coeff = -1j * coup
                if not two:
                    terms.append(KronTerm(kf, ki, coeff, rk, None))
                elif e == 1:
                    terms.append(KronTerm(kf, ki, coeff, rk, s_csr))
                else:
                    terms.append(KronTerm(kf, ki, coeff, s_csr, rk))
    return BlockOperator(channels, basis, driven_terms=terms).finalize()


def assemble_absorber(
    basis: RadialBasis,
    channels: ChannelSet,
    r_abs: float,
    eta: float,
) -> BlockOperator:
    """-i eta ((r - r_abs)/(R - r_abs))^2 beyond r_abs, acting on each electron.

    r_abs snaps to the nearest interior breakpoint so the quadrature never
    straddles the onset kink.
    """
    if not (0.0 < r_abs < basis.r_max):
        raise ValueError(f"r_abs must lie inside (0, r_max), got {r_abs}")
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    bp = basis.breakpoints
    r0 = float(bp[np.argmin(np.abs(bp[1:-1] - r_abs)) + 1])
    width = basis.r_max - r0

    def ramp(r):
        return eta * np.where(r > r0, ((r - r0) / width) ** 2, 0.0)

    w = potential_matrix(basis, ramp)
    w_csr = _csr(w)
    s_csr = _csr(overlap_matrix(basis))
    terms = []
    for k in range(len(channels)):
        if channels.two_electron:
            terms.append(KronTerm(k, k, -1j, w_csr, s_csr))
            terms.append(KronTerm(k, k, -1j, s_csr, w_csr))
        else:
            terms.append(KronTerm(k, k, -1j, w_csr, None))
    op = BlockOperator(channels, basis, static_terms=terms).finalize()
    op.r_abs = r0
    op.eta = eta
    return op


def assemble_axial_multipole(
    basis: RadialBasis,
    channels: ChannelSet,
    lam: int,
    radial: BandedSymMatrix,
) -> BlockOperator:
    """sum_e v_lam(r_e) P_lam(cos theta_e) for an external axial field component."""
    rk = _csr(radial)
    s_csr = _csr(overlap_matrix(basis))
    terms = []
    electrons = (1, 2) if channels.two_electron else (1,)
    for kf, cf in enumerate(channels):
        for ki, ci in enumerate(channels):
            for e in electrons:
                coup = legendre_field_coupling(channels, lam, ci, cf, electron=e)
                if coup == 0.0:
                    continue
                if not channels.two_electron:
                    terms.append(KronTerm(kf, ki, coup, rk, None))
                elif e == 1:
                    terms.append(KronTerm(kf, ki, coup, rk, s_csr))
                else:
                    terms.append(KronTerm(kf, ki, coup, s_csr, rk))
    return BlockOperator(channels, basis, static_terms=terms).finalize()


# =====================================================================
# Debug materialization
# =====================================================================

def to_dense_matrix(op: BlockOperator, t: float = 0.0, max_dim: int = 6000) -> NDArray[np.complex128]:
    """Materialize the operator by column probes.  Guarded to tiny sizes."""
    dim = op.n_dim
    if dim > max_dim:
        raise ValueError(f"refusing dense materialization at dim {dim} > {max_dim}")
    shape = op.state_shape()
    out = np.zeros((dim, dim), dtype=np.complex128)
    e = np.zeros(shape, dtype=np.complex128)
    flat = e.reshape(-1)
    for j in range(dim):
        flat[j] = 1.0
        out[:, j] = op.apply(e, t).reshape(-1)
        flat[j] = 0.0
    return out
