import numpy as np
import pytest

import perifsi.periodic_solver as ps
from perifsi.assembly import ForcingSpec, Transport, assemble
from perifsi.checks import small_basis
from perifsi.errors import NearResonanceError, NonconvergenceError, SelfIntersectionError
from perifsi.periodic_solver import (AndersonMixer, PoincareMap, anderson_fixed_point, couple, probe_poincare,
                                     schaefer_sweep, solve_periodic_given_geometry)
from perifsi.plate import DisplacementTrajectory, PlateParams
from perifsi.time_stepper import PeriodicOperators

PARAMS = PlateParams()


@pytest.fixture(scope="module")
def basis():
    return small_basis()


def frozen_ops(basis, n_steps, forcing):
    delta = DisplacementTrajectory.constant(basis.plate, 16)
    return PeriodicOperators(basis, delta, Transport.zero(16, basis.n_total), forcing, PARAMS, n_steps)


def test_zero_forcing_gives_zero_offset_and_contraction(basis):
    pmap = probe_poincare(frozen_ops(basis, 100, ForcingSpec()), check_seed=0)
    assert np.max(np.abs(pmap.c)) == 0.0
    assert pmap.spectral_radius < 1.0
    assert pmap.probe_error < 1e-10


def test_harmonic_balance_oracle(basis):
    """Single-frequency forcing on a frozen box: periodic orbit is Re(Y e^{i w t})."""
    forcing = ForcingSpec(amplitude=0.1)
    delta = DisplacementTrajectory.constant(basis.plate, 16)
    Fs = assemble(0.0, basis, delta, None, forcing, PARAMS).F  # cos part at t = 0
    Ff = assemble(0.25, basis, delta, None, forcing, PARAMS).F  # sin part at t = T/4
    errs = []
    n, ns = basis.n_total, basis.n_shell
    for steps in (100, 200):
        ops = frozen_ops(basis, steps, forcing)
        op = ops.mid[0]
        Minv = np.linalg.inv(op.M)
        K = np.zeros((n + ns, n + ns))
        K[:n, :n] = -Minv @ op.L
        K[:n, n:] = -Minv @ basis.P @ op.S
        K[n:, :n] = basis.P.T
        g = np.concatenate([Minv @ (Fs - 1j * Ff), np.zeros(ns)])
        Y = np.linalg.solve(2j * np.pi * np.eye(n + ns) - K, g)
        sol = solve_periodic_given_geometry(ops)
        errs.append(np.max(np.abs(sol.x - Y.real)))
        assert sol.periodicity < 1e-14
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_periodic_solution_is_linear_in_forcing(basis):
    x1 = solve_periodic_given_geometry(frozen_ops(basis, 60, ForcingSpec(amplitude=0.1))).x
    x2 = solve_periodic_given_geometry(frozen_ops(basis, 60, ForcingSpec(amplitude=0.2))).x
    assert np.max(np.abs(x2 - 2 * x1)) < 1e-14 * max(1.0, np.max(np.abs(x2)))
    fl = solve_periodic_given_geometry(frozen_ops(basis, 60, ForcingSpec(amplitude=0.1, shell_profile="none"))).x
    sh = solve_periodic_given_geometry(frozen_ops(basis, 60, ForcingSpec(amplitude=0.1, fluid_profile="none"))).x
    assert np.max(np.abs(fl + sh - x1)) < 1e-15


def test_periodic_energy_equality_for_decoupled_solution(basis):
    sol = solve_periodic_given_geometry(frozen_ops(basis, 80, ForcingSpec(amplitude=0.3)))
    assert abs(sol.energy_gap) < 1e-14
    assert sol.dissipation > 0


def test_schaefer_sweep_endpoints(basis):
    sol = solve_periodic_given_geometry(frozen_ops(basis, 60, ForcingSpec(amplitude=0.1)))
    rows = schaefer_sweep(sol.pmap, [0.0, 0.5, 1.0])
    assert rows[0]["norm"] == 0.0
    assert np.max(np.abs(rows[-1]["x"] - sol.x)) < 1e-12
    assert rows[1]["norm"] < rows[2]["norm"]


def test_near_resonance_detected(basis, monkeypatch):
    ops = frozen_ops(basis, 20, ForcingSpec(amplitude=0.1))
    d = basis.n_total + basis.n_shell
    monkeypatch.setattr(ps, "probe_poincare", lambda ops, check_seed=None: PoincareMap(np.eye(d), np.ones(d)))
    with pytest.raises(NearResonanceError):
        solve_periodic_given_geometry(ops)


def test_anderson_beats_picard_on_linear_contraction():
    rng = np.random.default_rng(0)
    Q = np.linalg.qr(rng.normal(size=(20, 20)))[0]
    A = Q @ np.diag(np.linspace(0.1, 0.95, 20)) @ Q.T
    c = rng.normal(size=20)
    F = lambda x: A @ x + c
    exact = np.linalg.solve(np.eye(20) - A, c)
    x, it_a, _ = anderson_fixed_point(F, np.zeros(20), depth=5, tol=1e-10)
    assert np.max(np.abs(x - exact)) < 1e-8
    _, it_p, _ = anderson_fixed_point(F, np.zeros(20), depth=0, tol=1e-10, max_iter=2000)
    assert it_a < it_p
    with pytest.raises(NonconvergenceError) as err:
        anderson_fixed_point(F, np.zeros(20), depth=0, tol=1e-10, max_iter=5)
    assert len(err.value.history) == 5


def test_mixer_depth_zero_is_damped_picard():
    m = AndersonMixer(0, 0.5)
    x = np.array([1.0, 2.0])
    assert np.allclose(m.update(x, np.array([3.0, 2.0])), [2.0, 2.0])


def test_couple_zero_data_single_iteration(basis):
    sol = couple(basis, ForcingSpec(), 0.0, PARAMS, n_steps=40)
    assert len(sol.history) == 1 and sol.converged_residual == 0.0
    assert np.max(np.abs(sol.solution.x)) == 0.0


def test_couple_converges_and_conserves_mean(basis):
    sol = couple(basis, ForcingSpec(amplitude=1e-2), 0.01, PARAMS, n_steps=80, tol=1e-9, anderson_depth=3)
    assert sol.converged_residual < 1e-9
    assert sol.mean_error < 1e-12
    assert sol.solution.periodicity < 1e-12


def test_couple_reports_nonconvergence(basis):
    with pytest.raises(NonconvergenceError) as err:
        couple(basis, ForcingSpec(amplitude=1e-2), 0.0, PARAMS, n_steps=40, max_outer=1, tol=1e-14)
    assert len(err.value.history) == 1


def test_couple_guards_self_intersection(basis):
    with pytest.raises(SelfIntersectionError):
        couple(basis, ForcingSpec(amplitude=200.0), 0.0, PARAMS, n_steps=40, kappa=0.3)


def test_smallness_gate_only_warns(basis):
    sol = couple(basis, ForcingSpec(amplitude=1e-3), 0.0, PARAMS, n_steps=40, c0_gate=1e-14, anderson_depth=3)
    assert sol.warnings and "gate" in sol.warnings[0]
