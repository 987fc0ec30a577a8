"""Cayley time stepping with a preconditioned iterative linear solver.

Each step solves

    (S + i dt/2 H(t_mid)) psi_next = (S - i dt/2 H(t_mid)) psi

which is exactly norm conserving for Hermitian H and strictly contractive
once the absorber is included.  The solver is restarted GMRES with right
preconditioning, so the reported residual is that of the original system.

The preconditioner inverts the channel-diagonal part of the operator in
closed form: each radial factor is diagonalized once against the overlap
(as a generalized Hermitian problem, or a complex-symmetric one when the
factor carries the absorber), after which every shifted solve is two small
dense multiplications per channel.  The electron repulsion and the dipole
coupling are left to the outer iteration.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field
from math import sqrt
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eig as dense_eig
from scipy.linalg import eigh as dense_eigh

from .angular import ChannelSet
from .bsplines import RadialBasis, kinetic_matrix, overlap_matrix, potential_matrix
from .operators import BlockOperator, OverlapOperator

logger = logging.getLogger(__name__)


class PropagationError(RuntimeError):
    pass


# =====================================================================
# Restarted GMRES, right preconditioned
# =====================================================================

@dataclass
class GmresConfig:
    rtol: float = 1e-10
    atol: float = 0.0
    restart: int = 40
    max_inner: int = 400


@dataclass
class GmresInfo:
    converged: bool
    n_iter: int
    n_restart: int
    residual: float


def _givens(a: complex, b: complex) -> tuple:
    if b == 0.0:
        return 1.0 + 0.0j, 0.0 + 0.0j
    if a == 0.0:
        return 0.0 + 0.0j, 1.0 + 0.0j
    r = sqrt(abs(a) ** 2 + abs(b) ** 2)
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return c, s


def gmres_solve(
    apply_a: Callable[[NDArray], NDArray],
    b: NDArray[np.complex128],
    x0: NDArray[np.complex128] | None = None,
    precond: Callable[[NDArray], NDArray] | None = None,
    config: GmresConfig | None = None,
) -> tuple:
    """Solve A x = b.  Arrays keep their shape; the Krylov basis is flat.

    Returns (x, GmresInfo).  With right preconditioning the recurrence
    residual equals the true residual of the original system; it is still
    recomputed from scratch at every restart.
    """
    cfg = config or GmresConfig()
    shape = b.shape
    bf = b.reshape(-1).astype(np.complex128)
    n = bf.size
    m = min(cfg.restart, n)

    def mv(v):
        return apply_a(v.reshape(shape)).reshape(-1)

    def pc(v):
        if precond is None:
            return v
        return precond(v.reshape(shape)).reshape(-1)

    x = np.zeros(n, dtype=np.complex128) if x0 is None else x0.reshape(-1).astype(np.complex128)
    b_norm = np.linalg.norm(bf)
    tol = max(cfg.rtol * b_norm, cfg.atol)
    if b_norm == 0.0:
        return np.zeros(shape, dtype=np.complex128), GmresInfo(True, 0, 0, 0.0)

    total_iter = 0
    n_restart = 0
    r = bf - mv(x)
    beta = np.linalg.norm(r)
    while beta > tol and total_iter < cfg.max_inner:
        v_basis = np.empty((m + 1, n), dtype=np.complex128)
        h = np.zeros((m + 1, m), dtype=np.complex128)
        cs = np.zeros(m, dtype=np.complex128)
        sn = np.zeros(m, dtype=np.complex128)
        g = np.zeros(m + 1, dtype=np.complex128)
        g[0] = beta
        v_basis[0] = r / beta
        j_done = 0
        for j in range(m):
            w = mv(pc(v_basis[j]))
            for i in range(j + 1):  # modified Gram-Schmidt
                h[i, j] = np.vdot(v_basis[i], w)
                w -= h[i, j] * v_basis[i]
            h[j + 1, j] = np.linalg.norm(w)
            if h[j + 1, j] > 0.0:
                v_basis[j + 1] = w / h[j + 1, j]
            for i in range(j):
                t = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -np.conj(sn[i]) * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = t
            cs[j], sn[j] = _givens(h[j, j], h[j + 1, j])
            h[j, j] = cs[j] * h[j, j] + sn[j] * h[j + 1, j]
            h[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            j_done = j + 1
            total_iter += 1
            if abs(g[j + 1]) <= tol or total_iter >= cfg.max_inner:
                break
        y = np.linalg.solve(h[:j_done, :j_done], g[:j_done]) if j_done else np.zeros(0)
        if j_done:
            x = x + pc(v_basis[:j_done].T @ y)
        n_restart += 1
        r = bf - mv(x)
        beta = np.linalg.norm(r)
    info = GmresInfo(bool(beta <= tol), total_iter, n_restart, float(beta / b_norm))
    return x.reshape(shape), info


# =====================================================================
# Channel-diagonal preconditioner
# =====================================================================

@dataclass
class _Factor:
    vecs: NDArray          # (n, n) generalized eigenvectors, V^T S V = I
    vals: NDArray          # (n,) eigenvalues, complex when absorbed


class ChannelFactorization:
    """Eigendecompositions of the per-l radial factors against the overlap.

    Provides closed-form solves of (a S + g H_diag) z = v channel by channel,
    where H_diag is kinetic + centrifugal + potential (+ the absorber ramp
    when eta > 0, which makes the factors complex symmetric).
    """

    def __init__(
        self,
        basis: RadialBasis,
        channels: ChannelSet,
        potential: Callable[[NDArray], NDArray],
        absorber: tuple | None = None,
    ):
        self.channels = channels
        self.basis = basis
        s = overlap_matrix(basis).to_dense()
        v_rad = potential_matrix(basis, potential).to_dense()
        w_abs = None
        if absorber is not None:
            op = absorber  # a BlockOperator from assemble_absorber
            r0, eta = op.r_abs, op.eta
            width = basis.r_max - r0
            w_abs = potential_matrix(
                basis, lambda r: eta * np.where(r > r0, ((r - r0) / width) ** 2, 0.0)
            ).to_dense()

        if channels.two_electron:
            l_values = sorted({c.l1 for c in channels} | {c.l2 for c in channels})
        else:
            l_values = sorted({int(c) for c in channels})
        self.factors: dict[int, _Factor] = {}
        for l in l_values:
            h = kinetic_matrix(basis, l).to_dense() + v_rad
            if w_abs is None:
                vals, vecs = dense_eigh(h, s)
                vals = vals.astype(np.complex128)
                vecs = vecs.astype(np.complex128)
            else:
                hc = h.astype(np.complex128) - 1j * w_abs
                vals, vecs = dense_eig(hc, s)
                # complex-symmetric pencil: normalize to V^T S V = I
                norms = np.einsum("ij,ij->j", vecs, s @ vecs)
                if np.min(np.abs(norms)) < 1e-12:
                    raise PropagationError("defective absorbed radial factor; adjust eta or grid")
                vecs = vecs / np.sqrt(norms)
                defect = np.max(np.abs(vecs.T @ s @ vecs - np.eye(len(vals))))
                if defect > 1e-8:
                    logger.warning("absorbed factor l=%d pseudo-orthogonality defect %.2e", l, defect)
            self.factors[l] = _Factor(vecs=vecs, vals=vals)

    def solve_shifted(self, x: NDArray[np.complex128], a: complex, g: complex) -> NDArray[np.complex128]:
        """z with (a S + g H_diag) z = x, exactly, per channel.

        With V^T S V = I the pencil gives H = S V diag(vals) V^T S, hence
        (a S + g H)^-1 = V diag(1 / (a + g vals)) V^T.
        """
        out = np.empty_like(x, dtype=np.complex128)
        if self.channels.two_electron:
            for k, c in enumerate(self.channels):
                f1, f2 = self.factors[c.l1], self.factors[c.l2]
                y = f1.vecs.T @ x[k] @ f2.vecs
                y /= a + g * (f1.vals[:, None] + f2.vals[None, :])
                out[k] = f1.vecs @ y @ f2.vecs.T
        else:
            for k, c in enumerate(self.channels):
                f = self.factors[int(c)]
                y = f.vecs.T @ x[k]
                y /= a + g * f.vals
                out[k] = f.vecs @ y
        return out

    def cayley_preconditioner(self, dt: float) -> Callable[[NDArray], NDArray]:
        g = 0.5j * dt
        return lambda v: self.solve_shifted(v, 1.0, g)

    def shift_invert_preconditioner(self, sigma: float) -> Callable[[NDArray], NDArray]:
        return lambda v: self.solve_shifted(v, -sigma, 1.0)


# =====================================================================
# Time grid and stepping
# =====================================================================

@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def times(self) -> NDArray[np.float64]:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)


def cayley_step(
    psi: NDArray[np.complex128],
    h_op: BlockOperator,
    s_op: OverlapOperator,
    t_mid: float,
    dt: float,
    precond: Callable[[NDArray], NDArray] | None,
    config: GmresConfig,
) -> tuple:
    g = 0.5j * dt
    h_psi = h_op.apply(psi, t_mid)
    rhs = s_op.apply(psi) - g * h_psi

    def lhs(v):
        return s_op.apply(v) + g * h_op.apply(v, t_mid)

    x0 = precond(rhs) if precond is not None else psi
    out, info = gmres_solve(lhs, rhs, x0=x0, precond=precond, config=config)
    return out, info


@dataclass
class PropagationResult:
    psi: NDArray[np.complex128]
    times: NDArray[np.float64]
    norm_trace: NDArray[np.float64]
    observable_traces: dict
    gmres_total_iter: int
    gmres_max_iter: int
    wall_time: float
    aborted: bool = False


def propagate(
    psi0: NDArray[np.complex128],
    h_op: BlockOperator,
    s_op: OverlapOperator,
    grid: TimeGrid,
    precond: Callable[[NDArray], NDArray] | None = None,
    config: GmresConfig | None = None,
    observables: dict | None = None,
    trace_stride: int = 1,
    progress_every: float = 30.0,
) -> PropagationResult:
    """March psi0 across the grid with midpoint Cayley steps.

    observables maps names to callables f(psi, t) evaluated every
    trace_stride steps (and at both endpoints).  Non-finite coefficients
    abort the run with a PropagationError.
    """
    cfg = config or GmresConfig()
    psi = np.array(psi0, dtype=np.complex128, copy=True)
    dt = grid.dt
    times = grid.times()
    obs = observables or {}

    rec_t = [times[0]]
    rec_norm = [s_op.norm(psi)]
    rec_obs = {k: [f(psi, times[0])] for k, f in obs.items()}

    total_iter = 0
    max_iter = 0
    t_wall = _time.time()
    t_last = t_wall
    for step in range(grid.n_steps):
        t_mid = times[step] + 0.5 * dt
        psi, info = cayley_step(psi, h_op, s_op, t_mid, dt, precond, cfg)
        total_iter += info.n_iter
        max_iter = max(max_iter, info.n_iter)
        if not info.converged:
            logger.warning(
                "gmres stalled at step %d (t=%.3f): residual %.2e after %d iterations",
                step, times[step + 1], info.residual, info.n_iter,
            )
        if not np.all(np.isfinite(psi)):
            raise PropagationError(f"non-finite coefficients at step {step} (t={times[step+1]:.4f})")
        last = step + 1 == grid.n_steps
        if (step + 1) % trace_stride == 0 or last:
            rec_t.append(times[step + 1])
            rec_norm.append(s_op.norm(psi))
            for k, f in obs.items():
                rec_obs[k].append(f(psi, times[step + 1]))
        now = _time.time()
        if now - t_last > progress_every:
            logger.info(
                "step %d/%d (t=%.2f), norm %.6f, %.1f ms/step",
                step + 1, grid.n_steps, times[step + 1],
                rec_norm[-1], 1e3 * (now - t_wall) / (step + 1),
            )
            t_last = now
    return PropagationResult(
        psi=psi,
        times=np.asarray(rec_t),
        norm_trace=np.asarray(rec_norm),
        observable_traces={k: np.asarray(v) for k, v in rec_obs.items()},
        gmres_total_iter=total_iter,
        gmres_max_iter=max_iter,
        wall_time=_time.time() - t_wall,
    )
