"""Implicit-midpoint integration of the Galerkin ODE and the energy ledger.

State: fluid-structure velocity coefficients ``a`` (length n) and shell
position coefficients ``b`` (length n_shell) with b' = P^T a.  Interior fluid
modes carry no position, so they are left out of ``b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import assemble, mass_matrix, shell_blocks
from .errors import AdmissibilityError, BlowupError, SingularSystemError
from .fluid_basis import sample_geometry
from .geometry import DEFAULT_KAPPA
from .plate import PLATE_RULE, bump_psi

BLOWUP = 1e12
SUP_SAMPLES = np.linspace(0.0, 1.0, 201)


@dataclass
class GalerkinState:
    t: float
    b: np.ndarray  # shell positions
    a: np.ndarray  # velocities; shell entries are b'

    @property
    def bdot(self):
        return self.a


@dataclass
class EnergyLedger:
    """Per-step energy bookkeeping; arrays indexed by time step."""

    times: np.ndarray
    energy: np.ndarray  # at grid times, length N + 1
    dissipation: np.ndarray  # per step, dt * abar^T A abar
    work: np.ndarray  # per step, dt * abar^T F
    residual: np.ndarray  # E_{i+1} - E_i + dissipation_i - work_i

    @property
    def total_residual(self):
        return float(np.sum(self.residual))

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0

    def balance(self):
        """Per-period balance E(T) - E(0) + int dissipation - int work."""
        return float(self.energy[-1] - self.energy[0] + self.dissipation.sum() - self.work.sum())


class ShellEnergy:
    """Koiter energy and its gradient in shell coordinates b (mean m fixed)."""

    def __init__(self, basis, params, mean):
        self.params = params
        self.mean = mean
        self.S, self.k = shell_blocks(basis, params, mean)
        x, w = PLATE_RULE
        self.w = w
        self.Y1 = basis.plate(x, 1)
        self.psi1 = bump_psi(x, 1)
        psi2 = bump_psi(x, 2)
        self.K0 = params.bending * mean**2 * np.sum(w * psi2**2)
        self.membrane = params.membrane if params.membrane_enabled else 0.0

    def energy(self, b):
        """b has shape (n_shell,) or (n_shell, cols)."""
        K = 0.5 * np.einsum("i...,ij,j...->...", b, self.S, b) + self.k @ b + self.K0
        if self.membrane:
            e1 = np.tensordot(b, self.Y1, axes=(0, 0)) + self.mean * self.psi1
            K = K + self.membrane * np.sum(self.w * e1**4, axis=-1)
        return K

    def nonlinear(self, b):
        """Membrane force and Jacobian in shell space (zero if disabled)."""
        e1 = self.Y1.T @ b + self.mean * self.psi1
        force = 4.0 * self.membrane * self.Y1 @ (self.w * e1**3)
        jac = 12.0 * self.membrane * (self.Y1 * (self.w * e1**2)) @ self.Y1.T
        return force, jac


class PeriodicOperators:
    """Operators on a uniform time grid of one period, assembled once.

    Midpoint operators drive the step; grid mass matrices feed the ledger.
    LU factors of the step matrix are cached per step, so repeated
    integrations with the same geometry and transport are cheap.
    """

    def __init__(self, basis, delta, transport, forcing, params, n_steps, period=1.0, mean=None):
        self.basis = basis
        self.params = params
        self.n_steps = n_steps
        self.period = period
        self.dt = period / n_steps
        self.mean = delta.mean if (mean is None and delta is not None) else (mean or 0.0)
        self.delta = delta
        self.shell = ShellEnergy(basis, params, self.mean)
        tm = (np.arange(n_steps) + 0.5) * self.dt
        self.mid = [assemble(t, basis, delta, transport, forcing, params) for t in tm]
        for op in self.mid:
            op.S, op.k = self.shell.S, self.shell.k
        tg = np.arange(n_steps + 1) * self.dt
        self.M_grid = [mass_matrix(basis, sample_geometry(basis, delta, t)) for t in tg]
        self._lu = [None] * n_steps
        self._rhs = [None] * n_steps

    @property
    def P(self):
        return self.basis.P

    def factor(self, i):
        if self._lu[i] is None:
            op, dt, P = self.mid[i], self.dt, self.basis.P
            SP = P @ op.S @ P.T
            L = op.L
            lhs = op.M + 0.5 * dt * L + 0.25 * dt**2 * SP
            rhs = op.M - 0.5 * dt * L - 0.25 * dt**2 * SP
            try:
                lu = sla.lu_factor(lhs, check_finite=True)
            except (ValueError, sla.LinAlgError) as exc:
                raise SingularSystemError(str(exc)) from exc
            if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
                raise SingularSystemError(f"step matrix singular at step {i}")
            self._lu[i] = lu
            self._rhs[i] = (rhs, dt * P @ op.S, dt * (op.F - P @ op.k))
        return self._lu[i], self._rhs[i]


def step(state, i, ops):
    """One implicit-midpoint step from grid time t_i (batch columns allowed)."""
    dt = ops.dt
    a, b = state.a, state.b
    P = ops.P
    if ops.shell.membrane:
        a1 = _newton_step(a, b, i, ops)
    else:
        lu, (rhs, SbP, load) = ops.factor(i)
        f = load if a.ndim == 1 else load[:, None]
        a1 = sla.lu_solve(lu, rhs @ a - SbP @ b + f)
    b1 = b + 0.5 * dt * P.T @ (a + a1)
    return GalerkinState(state.t + dt, b1, a1)


def _newton_step(a, b, i, ops, tol=1e-10, max_iter=20):
    op, dt, P = ops.mid[i], ops.dt, ops.P
    if a.ndim != 1:
        cols = [_newton_step(a[:, j], b[:, j], i, ops, tol, max_iter) for j in range(a.shape[1])]
        return np.stack(cols, axis=1)
    L = op.L
    a1 = a.copy()
    for _ in range(max_iter):
        abar = 0.5 * (a + a1)
        bbar = b + 0.5 * dt * P.T @ abar
        nf, nj = ops.shell.nonlinear(bbar)
        R = op.M @ (a1 - a) / dt + L @ abar + P @ (op.S @ bbar + op.k + nf) - op.F
        Jm = op.M / dt + 0.5 * L + 0.25 * dt * P @ (op.S + nj) @ P.T
        try:
            da = np.linalg.solve(Jm, -R)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(str(exc)) from exc
        a1 = a1 + da
        if np.linalg.norm(da) <= tol * (1.0 + np.linalg.norm(a1)):
            return a1
    raise SingularSystemError("Newton iteration for the membrane step did not converge")


@dataclass
class Trajectory:
    times: np.ndarray
    a: np.ndarray  # (N + 1, n[, cols])
    b: np.ndarray  # (N + 1, n_shell[, cols])
    ledger: EnergyLedger | None = None
    sup_eta: np.ndarray | None = field(default=None, repr=False)

    @property
    def terminal(self):
        return np.concatenate([self.a[-1], self.b[-1]])

    @property
    def initial(self):
        return np.concatenate([self.a[0], self.b[0]])


def split_state(y, n):
    return y[:n], y[n:]


def eta_sup(ops, b):
    psi = bump_psi(SUP_SAMPLES)
    vals = ops.basis.plate(SUP_SAMPLES).T @ b
    vals = vals + ops.mean * (psi if b.ndim == 1 else psi[:, None])
    return np.max(np.abs(vals), axis=0)


def integrate(y0, ops, check_admissible=True, kappa=DEFAULT_KAPPA, ledger=True):
    """Integrate one period from y0 = (a0, b0); y0 may carry batch columns."""
    y0 = np.asarray(y0, dtype=float)
    n = ops.basis.n_total
    a, b = split_state(y0, n)
    N = ops.n_steps
    A = np.empty((N + 1,) + a.shape)
    B = np.empty((N + 1,) + b.shape)
    A[0], B[0] = a, b
    state = GalerkinState(0.0, b, a)
    sups = np.empty((N + 1,) + b.shape[1:]) if check_admissible else None
    if check_admissible:
        sups[0] = eta_sup(ops, b)
    for i in range(N):
        state = step(state, i, ops)
        A[i + 1], B[i + 1] = state.a, state.b
        if not (np.all(np.isfinite(state.a)) and np.max(np.abs(state.a)) < BLOWUP):
            raise BlowupError(f"state exceeded {BLOWUP:g} at t = {state.t:.6g}")
        if check_admissible:
            sups[i + 1] = eta_sup(ops, state.b)
            if np.any(sups[i + 1] >= kappa):
                raise AdmissibilityError(
                    f"||eta||_inf = {np.max(sups[i + 1]):.6g} >= kappa at t = {state.t:.6g}"
                )
    times = np.arange(N + 1) * ops.dt
    led = energy_ledger(A, B, ops) if (ledger and a.ndim == 1) else None
    return Trajectory(times, A, B, led, sups)


def energy_ledger(A, B, ops):
    N = ops.n_steps
    dt = ops.dt
    E = np.array([0.5 * A[i] @ ops.M_grid[i] @ A[i] for i in range(N + 1)])
    E = E + ops.shell.energy(B.T)
    abar = 0.5 * (A[1:] + A[:-1])
    diss = np.array([dt * abar[i] @ ops.mid[i].A @ abar[i] for i in range(N)])
    work = np.array([dt * abar[i] @ ops.mid[i].F for i in range(N)])
    res = E[1:] - E[:-1] + diss - work
    return EnergyLedger(np.arange(N + 1) * dt, E, diss, work, res)
