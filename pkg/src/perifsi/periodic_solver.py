"""Periodic solutions: Poincare-map fixed point for a given geometry, the outer
geometry/transport iteration, and continuation in the mollification radius."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import Transport
from .errors import AdmissibilityError, NearResonanceError, NonconvergenceError, SelfIntersectionError
from .geometry import DEFAULT_KAPPA, MollifierParams, mollify
from .plate import DisplacementTrajectory, bump_psi
from .time_stepper import SUP_SAMPLES, PeriodicOperators, integrate

log = logging.getLogger(__name__)

RESONANCE_LIMIT = 1e10


@dataclass
class PoincareMap:
    """F(x) = A x + c on x = (a, b), valid for the bending-only system."""

    A: np.ndarray
    c: np.ndarray
    probe_error: float = float("nan")

    @property
    def dim(self):
        return self.c.size

    def __call__(self, x):
        return self.A @ x + self.c

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))


def probe_poincare(ops, check_seed=None):
    """c = F(0), A e_i = F(e_i) - c, all columns integrated as one batch.

    With ``check_seed`` set, a random held-out point is integrated separately
    and its mismatch with the affine model is stored in ``probe_error``.
    """
    if ops.shell.membrane:
        raise ValueError("affine probing needs the bending-only system")
    d = ops.basis.n_total + ops.basis.n_shell
    Y = np.hstack([np.zeros((d, 1)), np.eye(d)])
    tr = integrate(Y, ops, check_admissible=False, ledger=False)
    out = np.concatenate([tr.a[-1], tr.b[-1]])
    c = out[:, 0]
    pmap = PoincareMap(out[:, 1:] - c[:, None], c)
    if check_seed is not None:
        x = np.random.default_rng(check_seed).normal(size=d)
        pmap.probe_error = held_out_error(pmap, ops, x)
    return pmap


def held_out_error(pmap, ops, x):
    tr = integrate(x, ops, check_admissible=False, ledger=False)
    return float(np.max(np.abs(tr.terminal - pmap(x))))


@dataclass
class PeriodicSolution:
    x: np.ndarray
    trajectory: object
    pmap: PoincareMap | None
    periodicity: float
    ops: PeriodicOperators = field(repr=False)
    iterations: int = 0

    @property
    def ledger(self):
        return self.trajectory.ledger

    @property
    def dissipation(self):
        return float(self.ledger.dissipation.sum())

    @property
    def work(self):
        return float(self.ledger.work.sum())

    @property
    def energy_gap(self):
        """int |grad u|^2 - int f.u - int g d_t eta over the period."""
        return self.dissipation - self.work


class AndersonMixer:
    """Damped Picard update with optional Anderson acceleration (type II).

    ``update(x, g)`` takes the current iterate x and its image g = G(x) and
    returns the next iterate.  depth = 0 gives plain damped Picard.
    """

    def __init__(self, depth=3, damping=1.0):
        self.depth = depth
        self.damping = damping
        self.X, self.R = [], []

    def update(self, x, g):
        r = g - x
        self.X.append(x.copy())
        self.R.append(r.copy())
        self.X = self.X[-(self.depth + 1):]
        self.R = self.R[-(self.depth + 1):]
        step = x + self.damping * r
        if self.depth == 0 or len(self.R) < 2:
            return step
        dR = np.array([self.R[j + 1] - self.R[j] for j in range(len(self.R) - 1)]).T
        dX = np.array([self.X[j + 1] - self.X[j] for j in range(len(self.X) - 1)]).T
        gamma = np.linalg.lstsq(dR, r, rcond=None)[0]
        return step - (dX + self.damping * dR) @ gamma


def anderson_fixed_point(F, x0, depth=3, tol=1e-10, max_iter=300, damping=1.0):
    """Anderson-accelerated Picard iteration for x = F(x)."""
    x = np.asarray(x0, dtype=float)
    mixer = AndersonMixer(depth, damping)
    history = []
    for it in range(1, max_iter + 1):
        fx = F(x)
        history.append(float(np.max(np.abs(fx - x))))
        if history[-1] < tol:
            return x, it, history
        x = mixer.update(x, fx)
    raise NonconvergenceError(f"fixed point iteration stalled at residual {history[-1]:.3e}", history)


def solve_periodic_given_geometry(ops, kappa=DEFAULT_KAPPA, check_seed=None, x0=None):
    """Periodic orbit of the decoupled problem on the cached operators ``ops``."""
    d = ops.basis.n_total + ops.basis.n_shell
    if ops.shell.membrane:
        def F(x):
            return integrate(x, ops, check_admissible=False, ledger=False).terminal

        x, iters, _ = anderson_fixed_point(F, np.zeros(d) if x0 is None else x0)
        pmap = None
    else:
        pmap = probe_poincare(ops, check_seed=check_seed)
        IA = np.eye(d) - pmap.A
        try:
            smin = np.linalg.svd(IA, compute_uv=False)[-1]
        except np.linalg.LinAlgError:
            smin = 0.0
        inv_norm = 1.0 / smin if smin > 0 else np.inf
        if not np.isfinite(inv_norm) or inv_norm > RESONANCE_LIMIT:
            raise NearResonanceError(f"||(I - A)^-1|| = {inv_norm:.3e} exceeds {RESONANCE_LIMIT:g}")
        x = np.linalg.solve(IA, pmap.c)
        iters = 1
    tr = integrate(x, ops, check_admissible=True, kappa=kappa)
    per = float(np.max(np.abs(tr.terminal - x)))
    return PeriodicSolution(x, tr, pmap, per, ops, iters)


def schaefer_sweep(pmap, lambdas, energy=None):
    """x_lambda = lambda (A x_lambda + c) on a grid; E_n(0) recorded if ``energy`` given."""
    d = pmap.dim
    rows = []
    for lam in lambdas:
        x = np.linalg.solve(np.eye(d) - lam * pmap.A, lam * pmap.c)
        row = {"lambda": float(lam), "x": x, "norm": float(np.linalg.norm(x))}
        if energy is not None:
            row["E0"] = float(energy(x))
        rows.append(row)
    return rows


def initial_energy(ops):
    """E_n(0) as a function of x = (a, b)."""
    n = ops.basis.n_total
    M0 = ops.M_grid[0]

    def E(x):
        a, b = x[:n], x[n:]
        return 0.5 * a @ M0 @ a + ops.shell.energy(b)

    return E


# ---------------------------------------------------------------------------
# outer coupling


@dataclass
class CouplingIterate:
    k: int
    delta: DisplacementTrajectory
    transport: Transport
    epsilon: float
    residual: float
    bound_delta: float
    bound_v: float


@dataclass
class CoupledSolution:
    solution: PeriodicSolution
    eta: DisplacementTrajectory
    transport: Transport
    history: list
    epsilon: float
    mean: float
    forcing_size: float
    warnings: list = field(default_factory=list)

    @property
    def converged_residual(self):
        return self.history[-1].residual if self.history else 0.0

    @property
    def sup_energy(self):
        return float(np.max(self.solution.ledger.energy))

    @property
    def mean_error(self):
        b = self.solution.trajectory.b
        x, w = _mean_rule()
        vals = b @ self.eta.basis(x) + self.mean * bump_psi(x)
        return float(np.max(np.abs(vals @ w - self.mean)))

    def bound_ratio(self):
        """sup_t E / (C^2 + C + m^2), the quantity bounded a priori."""
        C = self.forcing_size
        denom = C**2 + C + self.mean**2
        return self.sup_energy / denom if denom > 0 else (0.0 if self.sup_energy == 0 else np.inf)


def _mean_rule():
    from .plate import PLATE_RULE

    return PLATE_RULE


def fluid_l2(ops, a):
    """Space-time L2 norm of sum a_k(t) Y_k(t) on the grid (fluid part of M)."""
    P = ops.basis.P
    total = 0.0
    for i in range(a.shape[0]):
        M = ops.M_grid[i] - P @ P.T
        total += ops.dt * a[i] @ M @ a[i]
    return float(np.sqrt(max(total, 0.0)))


def couple(basis, forcing, mean, params, epsilon=0.1, n_steps=400, max_outer=50, tol=1e-7, rho=0.7,
           kappa=DEFAULT_KAPPA, c0_gate=None, warm=None, anderson_depth=0):
    """Damped fixed-point iteration (delta, v) -> (eta, u) with mollified data.

    The iterate (delta_k, v_k) is kept unmollified; each decoupled solve sees
    R_eps delta_k and R_eps v_k.  ``warm`` is an earlier CoupledSolution used
    as the starting iterate.  ``anderson_depth`` > 0 accelerates the damped
    update; 0 is plain damped Picard.
    """
    period = forcing.period
    mp = MollifierParams(epsilon, period)
    n_total = basis.n_total
    Cfg = forcing.size()
    warnings = []
    if c0_gate is not None and mean**2 + Cfg**2 > c0_gate:
        warnings.append(f"smallness gate exceeded: m^2 + C(f,g)^2 = {mean ** 2 + Cfg ** 2:.3e} > C0 = {c0_gate:.3e}")
        log.warning(warnings[-1])
    if warm is not None:
        delta = DisplacementTrajectory(basis.plate, warm.eta.samples.copy(), mean, period)
        v_samples = warm.transport.samples.copy()
    else:
        delta = DisplacementTrajectory.constant(basis.plate, n_steps, mean, period)
        v_samples = np.zeros((n_steps, n_total))
    history = []
    psi = bump_psi(SUP_SAMPLES)
    Yx = basis.plate(SUP_SAMPLES)
    sol = None
    mixer = AndersonMixer(anderson_depth, rho)
    n_eta = delta.samples.size
    for k in range(1, max_outer + 1):
        sup_delta = float(np.max(np.abs(delta.samples @ Yx + mean * psi)))
        if sup_delta >= kappa:
            raise SelfIntersectionError(f"iterate {k}: ||delta||_inf = {sup_delta:.4g} >= kappa", history)
        Rdelta = delta.mollified(mp) if np.any(delta.samples) else delta
        Rv = Transport(mollify(v_samples, mp) if np.any(v_samples) else v_samples, period)
        ops = PeriodicOperators(basis, Rdelta, Rv, forcing, params, n_steps, period, mean=mean)
        try:
            sol = solve_periodic_given_geometry(ops, kappa=kappa)
        except AdmissibilityError as exc:
            raise SelfIntersectionError(f"iterate {k}: {exc}", history) from exc
        eta_s = sol.trajectory.b[:-1]
        a_s = sol.trajectory.a[:-1]
        r_eta = float(np.max(np.abs((eta_s - delta.samples) @ Yx)))
        r_u = fluid_l2(ops, a_s - v_samples)
        res = r_eta + r_u
        history.append(CouplingIterate(k, delta, Rv, epsilon, res, sup_delta, fluid_l2(ops, v_samples)))
        log.info("outer %d: residual %.3e", k, res)
        if res < tol:
            break
        x = np.concatenate([delta.samples.ravel(), v_samples.ravel()])
        g = np.concatenate([eta_s.ravel(), a_s.ravel()])
        x = mixer.update(x, g)
        delta = DisplacementTrajectory(basis.plate, x[:n_eta].reshape(delta.samples.shape), mean, period)
        v_samples = x[n_eta:].reshape(v_samples.shape)
    else:
        raise NonconvergenceError(f"outer iteration did not reach {tol:g} in {max_outer} iterations", history)
    eta = DisplacementTrajectory(basis.plate, sol.trajectory.b[:-1], mean, period)
    trans = Transport(sol.trajectory.a[:-1], period)
    return CoupledSolution(sol, eta, trans, history, epsilon, mean, Cfg, warnings)


@dataclass
class ContinuationReport:
    solutions: list
    epsilons: list
    drift_eta: list
    drift_u: list

    @property
    def contracts(self):
        d = self.drift_eta
        return all(d[j + 1] < d[j] for j in range(len(d) - 1)) if len(d) > 1 else True


def epsilon_continuation(first, basis, forcing, params, schedule, **kw):
    """Re-solve the coupled problem along a decreasing schedule of epsilons."""
    sols = [first]
    drift_eta, drift_u = [], []
    Yx = basis.plate(SUP_SAMPLES)
    for eps in schedule[1:]:
        nxt = couple(basis, forcing, first.mean, params, epsilon=eps, warm=sols[-1],
                     n_steps=sols[-1].eta.n_times, **kw)
        prev = sols[-1]
        drift_eta.append(float(np.max(np.abs((nxt.eta.samples - prev.eta.samples) @ Yx))))
        drift_u.append(fluid_l2(nxt.solution.ops, nxt.transport.samples - prev.transport.samples))
        sols.append(nxt)
    return ContinuationReport(sols, list(schedule), drift_eta, drift_u)
