"""Time stepping: unitarity, stationary states, convergence order, GMRES."""
import numpy as np
import pytest

from xuvatom.angular import one_electron_channels
from xuvatom.bsplines import build_radial_basis
from xuvatom.eigensolve import bound_states
from xuvatom.operators import (
    assemble_atomic,
    assemble_dipole_velocity,
    assemble_overlap,
    coulomb_potential,
)
from xuvatom.propagation import (
    ChannelFactorization,
    GmresConfig,
    PropagationError,
    TimeGrid,
    gmres_solve,
    propagate,
)
from xuvatom.pulses import pulse_from_quiver


@pytest.fixture(scope="module")
def h_tiny():
    basis = build_radial_basis(r_max=15.0, n_splines=18, order=5, grading="exp_then_linear")
    cs = one_electron_channels(lmax=1)
    pot = coulomb_potential(1.0)
    h0 = assemble_atomic(basis, cs, pot)
    s = assemble_overlap(basis, cs)
    d = assemble_dipole_velocity(basis, cs)
    fac = ChannelFactorization(basis, cs, pot)
    ground = bound_states(h0, s, sigma0=-0.6, n_states=1, threshold=0.0)
    return basis, cs, h0, s, d, fac, ground


def _survival(s, psi_ref, psi):
    return abs(np.vdot(psi_ref.reshape(-1), s.apply(psi).reshape(-1))) ** 2


def test_field_free_ground_state_is_stationary(h_tiny):
    basis, cs, h0, s, d, fac, ground = h_tiny
    psi0 = ground.states[0]
    e0 = ground.energies[0]
    t_end = 4.0
    grid = TimeGrid(0.0, t_end, 160)
    res = propagate(psi0, h0, s, grid, precond=fac.cayley_preconditioner(grid.dt))
    assert np.max(np.abs(res.norm_trace - 1.0)) < 1e-12
    assert _survival(s, psi0, res.psi) > 1.0 - 1e-10
    # the only evolution is the phase e^{-i E t}, up to O(dt^2) phase error
    amp = np.vdot(psi0.reshape(-1), s.apply(res.psi).reshape(-1))
    assert np.angle(amp * np.exp(1j * e0 * t_end)) == pytest.approx(0.0, abs=1e-3)


def test_unitarity_under_driving(h_tiny):
    basis, cs, h0, s, d, fac, ground = h_tiny
    pulse = pulse_from_quiver(alpha0=0.3, omega=5.0, n_cycles=2)
    h = h0.plus(d).with_field(pulse.vector_potential)
    grid = TimeGrid(0.0, pulse.duration, 240)
    res = propagate(ground.states[0], h, s, grid, precond=fac.cayley_preconditioner(grid.dt))
    # Cayley is exactly unitary up to the linear-solve truncation, which
    # accumulates linearly in the step count (240 * 1e-12 here)
    assert np.max(np.abs(res.norm_trace**2 - 1.0)) < 5e-9


def test_cayley_step_is_second_order(h_tiny):
    basis, cs, h0, s, d, fac, ground = h_tiny
    pulse = pulse_from_quiver(alpha0=0.3, omega=5.0, n_cycles=1)
    h = h0.plus(d).with_field(pulse.vector_potential)

    def run(n):
        grid = TimeGrid(0.0, pulse.duration, n)
        return propagate(
            ground.states[0], h, s, grid, precond=fac.cayley_preconditioner(grid.dt)
        ).psi

    fine = run(320)
    err_coarse = np.linalg.norm(run(40) - fine)
    err_half = np.linalg.norm(run(80) - fine)
    assert 3.5 < err_coarse / err_half < 4.4


def test_gmres_meets_requested_tolerance(h_tiny, rng):
    basis, cs, h0, s, d, fac, ground = h_tiny
    dt = 0.05
    g = 0.5j * dt

    def lhs(v):
        return s.apply(v) + g * h0.apply(v)

    b = rng.standard_normal(h0.state_shape()) + 1j * rng.standard_normal(h0.state_shape())
    for rtol in (1e-8, 1e-12):
        x, info = gmres_solve(lhs, b, precond=fac.cayley_preconditioner(dt), config=GmresConfig(rtol=rtol))
        assert info.converged
        true_res = np.linalg.norm(lhs(x) - b) / np.linalg.norm(b)
        assert true_res <= 2.0 * rtol
        assert info.residual <= rtol


def test_cayley_preconditioner_cuts_iterations(h_tiny):
    basis, cs, h0, s, d, fac, ground = h_tiny
    pulse = pulse_from_quiver(alpha0=0.3, omega=5.0, n_cycles=1)
    h = h0.plus(d).with_field(pulse.vector_potential)
    grid = TimeGrid(0.0, pulse.duration, 50)
    with_pc = propagate(ground.states[0], h, s, grid, precond=fac.cayley_preconditioner(grid.dt))
    without = propagate(ground.states[0], h, s, grid)
    assert with_pc.gmres_total_iter < without.gmres_total_iter
    assert np.linalg.norm(with_pc.psi - without.psi) < 1e-7


def test_observable_traces_follow_stride(h_tiny):
    basis, cs, h0, s, d, fac, ground = h_tiny
    grid = TimeGrid(0.0, 1.0, 10)
    res = propagate(
        ground.states[0], h0, s, grid,
        precond=fac.cayley_preconditioner(grid.dt),
        observables={"norm2": lambda psi, t: s.norm(psi) ** 2},
        trace_stride=3,
    )
    # endpoints always recorded: steps 3, 6, 9 plus 0 and 10
    assert res.times.tolist() == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert len(res.observable_traces["norm2"]) == 5
    assert res.observable_traces["norm2"][-1] == pytest.approx(1.0, abs=1e-12)


def test_non_finite_state_aborts(h_tiny):
    basis, cs, h0, s, d, fac, ground = h_tiny
    bad = np.full(h0.state_shape(), np.nan, dtype=np.complex128)
    with pytest.raises(PropagationError):
        propagate(bad, h0, s, TimeGrid(0.0, 1.0, 4))


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 5)
