"""Randomised numerical property suites and solution diagnostics.

Each suite draws at least 50 random admissible configurations from a fixed
seed and returns a :class:`CheckResult` with its worst-case margin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .assembly import ForcingSpec, assemble, mass_matrix
from .fluid_basis import (GeometrySample, build_combined_basis, build_interior_basis, interleave,
                          pushforward_basis)
from .geometry import DomainMap, PolynomialDisplacement, QuadratureRule, gauss_1d, piola_transform
from .geometry import reynolds_residual
from .plate import (PLATE_RULE, DisplacementField, DisplacementTrajectory, PlateParams,
                    build_plate_basis, bump_psi, koiter_energy, koiter_gradient_pairing)
from .time_stepper import PeriodicOperators, integrate

N_SAMPLES = 50


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    samples: int
    details: dict = field(default_factory=dict)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: worst {self.worst:.3e} (tol {self.tolerance:.1e}, n={self.samples})"


@lru_cache(maxsize=4)
def small_basis(n_shell=4, n_interior=6, grid=32):
    return build_combined_basis(n_shell, n_interior, grid=grid)


def random_displacement(rng, kappa=0.5, degree=6):
    """Clamped polynomial x^2 (1-x)^2 p(x) scaled to a random fraction of kappa."""
    base = np.polynomial.Polynomial([0, 0, 1, -2, 1])
    p = base * np.polynomial.Polynomial(rng.normal(size=degree - 3))
    xs = np.linspace(0, 1, 401)
    scale = rng.uniform(0.05, 0.9) * kappa / np.max(np.abs(p(xs)))
    return PolynomialDisplacement(p * scale)


def geometry_from(delta, x, dt0=None, dt1=None):
    z = np.zeros_like(x)
    return GeometrySample(delta(x), delta(x, 1), delta(x, 2),
                          z if dt0 is None else dt0, z if dt1 is None else dt1)


def _pointwise(fieldobj, x, z):
    U, G = fieldobj.velocity(x, z)
    idx = np.arange(len(x))
    return U[:, idx, idx], G[:, :, idx, idx]


# ---------------------------------------------------------------------------
# suites


def check_piola(seed=0, n=N_SAMPLES, h=1e-4):
    """Pushed-forward fields: divergence, analytic vs 4th-order FD gradient, trace."""
    rng = np.random.default_rng(seed)
    basis = small_basis()
    worst_div = worst_grad = worst_trace = 0.0
    for _ in range(n):
        delta = random_displacement(rng)
        dmap = DomainMap(delta)
        k = int(rng.integers(basis.n_total))
        f = basis.fields[k]
        xr = rng.uniform(0.1, 0.9, 6)
        zr = rng.uniform(-0.9, -0.1, 6)
        push = piola_transform(dmap, lambda x, z: _pointwise(f, x, z))
        y = zr + (1 + zr) * delta(xr)
        u, grad = push(xr, y)
        worst_div = max(worst_div, float(np.max(np.abs(grad[0, 0] + grad[1, 1]))))
        fd = np.empty_like(grad)
        for j, e in enumerate((np.array([1.0, 0.0]), np.array([0.0, 1.0]))):
            vals = [push(xr + s * h * e[0], y + s * h * e[1])[0] for s in (-2, -1, 1, 2)]
            fd[:, j] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
        scale = 1.0 + np.max(np.abs(grad))
        worst_grad = max(worst_grad, float(np.max(np.abs(fd - grad))) / scale)
        # trace on the moving boundary: (0, Yhat) for shell members, zero otherwise
        xt = np.linspace(0.05, 0.95, 7)
        ut, _ = push(xt, delta(xt))
        kind, i = basis.order[k]
        target = np.zeros_like(ut)
        if kind == "shell":
            target[1] = basis.plate(xt)[i]
        worst_trace = max(worst_trace, float(np.max(np.abs(ut - target))))
    worst = max(worst_div, worst_grad, worst_trace)
    return CheckResult("piola", worst < 1e-7, worst, 1e-7, n,
                       {"divergence": worst_div, "gradient_fd": worst_grad, "trace_mismatch": worst_trace})


def check_korn(seed=1, n=N_SAMPLES):
    """int (grad u)^T : grad xi = 0 over all basis pairs on random graph domains."""
    rng = np.random.default_rng(seed)
    basis = small_basis()
    W0 = basis.quad.weights
    worst = 0.0
    for _ in range(n):
        delta = random_displacement(rng)
        geom = geometry_from(delta, basis.quad.x)
        pb = pushforward_basis(basis, geom, with_dt=False)
        W = W0 * geom.J[:, None]
        K = np.einsum("aijxz,bjixz,xz->ab", pb.grad, pb.grad, W)
        A = np.einsum("aijxz,bijxz,xz->ab", pb.grad, pb.grad, W)
        d = np.sqrt(np.diag(A))
        worst = max(worst, float(np.max(np.abs(K) / np.outer(d, d))))
    return CheckResult("korn", worst < 1e-7, worst, 1e-7, n)


class _AnalyticTrajectory:
    def __init__(self, amp, freq, phase, shape):
        self.amp, self.freq, self.phase, self.shape = amp, freq, phase, shape

    def a(self, t):
        return self.amp * (1.0 + 0.5 * np.sin(2 * np.pi * self.freq * t + self.phase))

    def __call__(self, t, x, deriv=0):
        return self.a(t) * self.shape(x, deriv)


def check_reynolds(seed=2, n=N_SAMPLES):
    """Transport theorem on moving graph domains.

    g = 1 must balance to 1e-6 at dt = 1e-3; general smooth g must show the
    second-order dt-halving ratio.  Also checks dM/dt = B_d + B_d^T + G.
    """
    rng = np.random.default_rng(seed)
    quad = QuadratureRule()
    shape = PolynomialDisplacement(np.polynomial.Polynomial([0, 0, 1, -2, 1]) * 16.0)
    worst = 0.0
    ratios = []
    for j in range(n):
        tr = _AnalyticTrajectory(rng.uniform(0.05, 0.25), rng.integers(1, 3), rng.uniform(0, 2 * np.pi), shape)
        ts = rng.uniform(0, 1, 3)
        if j % 2 == 0:
            r = np.max(np.abs(reynolds_residual(lambda t, x, y: 1.0 + 0.0 * y, tr, ts, 1e-3, quad)))
            worst = max(worst, float(r))
            continue
        c = rng.normal(size=4)

        def g(t, x, y, c=c):
            return (c[0] + c[1] * x * y + c[2] * y**2) * (1 + 0.3 * np.cos(2 * np.pi * t)) + c[3] * np.sin(x + t)

        r1 = np.max(np.abs(reynolds_residual(g, tr, ts, 1e-3, quad)))
        r2 = np.max(np.abs(reynolds_residual(g, tr, ts, 5e-4, quad)))
        if r1 > 1e-11:
            ratios.append(r1 / r2)
    # assembled identity on the small basis
    basis = small_basis()
    params = PlateParams()
    N = 64
    t = np.arange(N) / N
    coeffs = 0.1 * np.outer(np.sin(2 * np.pi * t), rng.normal(size=basis.n_shell) / np.arange(1, basis.n_shell + 1) ** 2)
    traj = DisplacementTrajectory(basis.plate, coeffs, mean=0.02)
    ident = 0.0
    for tt in rng.uniform(0, 1, 5):
        op = assemble(tt, basis, traj, None, None, params)
        hh = 1e-3
        from .fluid_basis import sample_geometry

        Mp = mass_matrix(basis, sample_geometry(basis, traj, tt + hh))
        Mm = mass_matrix(basis, sample_geometry(basis, traj, tt - hh))
        Mpp = mass_matrix(basis, sample_geometry(basis, traj, tt + 2 * hh))
        Mmm = mass_matrix(basis, sample_geometry(basis, traj, tt - 2 * hh))
        dM = (Mmm - 8 * Mm + 8 * Mp - Mpp) / (12 * hh)
        ident = max(ident, float(np.max(np.abs(dM - (op.B_d + op.B_d.T + op.G)))))
    rmin = float(np.min(ratios)) if ratios else 4.0
    rmax = float(np.max(ratios)) if ratios else 4.0
    ok = worst < 1e-6 and 3.5 <= rmin and rmax <= 4.5 and ident < 1e-7
    return CheckResult("reynolds", ok, worst, 1e-6, n,
                       {"ratio_min": rmin, "ratio_max": rmax, "assembled_identity": ident})


def check_coercivity(seed=3, n=100):
    """K(eta) >= c0 ||eta''||^2, and FD consistency of <K', xi> (with/without membrane)."""
    rng = np.random.default_rng(seed)
    plate = build_plate_basis(6)
    x, w = PLATE_RULE
    worst_gap = 0.0
    worst_grad = 0.0
    for membrane in (False, True):
        params = PlateParams(membrane_enabled=membrane)
        for _ in range(n // 2):
            c = rng.normal(size=6) * 0.05 / np.arange(1, 7) ** 2
            m = rng.uniform(-0.1, 0.1)
            eta = DisplacementField(plate, c, m)
            K = koiter_energy(eta, params)
            h2 = float(np.sum(w * eta(x, 2) ** 2))
            worst_gap = min(worst_gap, K - params.c0 * h2)
            xi = DisplacementField(plate, rng.normal(size=6) / np.arange(1, 7) ** 2, 0.0)
            s = 1e-5
            Kp = koiter_energy(DisplacementField(plate, c + s * xi.coeffs, m), params)
            Km = koiter_energy(DisplacementField(plate, c - s * xi.coeffs, m), params)
            fd = (Kp - Km) / (2 * s)
            an = koiter_gradient_pairing(eta, xi, params)
            worst_grad = max(worst_grad, abs(fd - an) / max(abs(an), 1e-12))
    ok = worst_gap >= -1e-12 and worst_grad < 1e-6
    return CheckResult("coercivity", ok, max(-worst_gap, worst_grad), 1e-6, n,
                       {"min_gap": worst_gap, "gradient_rel": worst_grad})


def _random_fields(rng, basis, geom, which):
    pb = pushforward_basis(basis, geom, with_dt=False)
    idx = [k for k, (kind, _) in enumerate(basis.order) if kind in which]
    c = np.zeros(basis.n_total)
    c[idx] = rng.normal(size=len(idx))
    u = np.tensordot(c, pb.u, axes=(0, 0))
    grad = np.tensordot(c, pb.grad, axes=(0, 0))
    return c, u, grad


def check_trace(seed=4, n=N_SAMPLES):
    """Trace bound int_omega |u|^2 <= 2 ||u|| ||d_y u|| for fields vanishing at the bottom."""
    rng = np.random.default_rng(seed)
    basis = small_basis()
    worst = 0.0
    consts = []
    for _ in range(n):
        delta = random_displacement(rng)
        geom = geometry_from(delta, basis.quad.x)
        c, u, grad = _random_fields(rng, basis, geom, ("shell", "fluid"))
        W = basis.quad.weights * geom.J[:, None]
        shell_c = basis.P.T @ c
        top = float(np.sum(basis.quad.wx * (shell_c @ basis.plate_x[0]) ** 2))
        nu = np.sqrt(np.sum(W * (u**2).sum(0)))
        ndy = np.sqrt(np.sum(W * (grad[:, 1] ** 2).sum(0)))
        ratio = top / (nu * ndy)
        consts.append(ratio)
        worst = max(worst, ratio)
    return CheckResult("trace", worst <= 2.0, worst, 2.0, n, {"empirical_constant": worst})


def check_poincare_ineq(seed=5, n=N_SAMPLES):
    """||u||^2 <= C(d) ||grad u||^2 between planes at distance d = 1 + max delta."""
    rng = np.random.default_rng(seed)
    basis = small_basis()
    worst_margin = -np.inf
    worst_ratio = 0.0
    for j in range(n):
        delta = random_displacement(rng)
        geom = geometry_from(delta, basis.quad.x)
        d = 1.0 + max(0.0, float(np.max(geom.d0)))
        interior_only = j % 2 == 0
        which = ("fluid",) if interior_only else ("shell", "fluid")
        _, u, grad = _random_fields(rng, basis, geom, which)
        W = basis.quad.weights * geom.J[:, None]
        ratio = np.sum(W * (u**2).sum(0)) / np.sum(W * (grad**2).sum((0, 1)))
        bound = (d / np.pi) ** 2 if interior_only else (2 * d / np.pi) ** 2
        worst_ratio = max(worst_ratio, ratio / bound)
        worst_margin = max(worst_margin, ratio - bound)
    return CheckResult("poincare_ineq", worst_ratio <= 1.0, worst_ratio, 1.0, n,
                       {"max_ratio_over_bound": worst_ratio})


def check_basis(seed=6, n=N_SAMPLES):
    """Orthonormality, clamping, zero mean, solenoidality, interleaving, mass positivity."""
    rng = np.random.default_rng(seed)
    basis = small_basis()
    errs = {}
    x, w = gauss_1d(24, 0, 1, cells=24)
    Y = basis.plate(x)
    errs["plate_gram"] = float(np.max(np.abs((Y * w) @ Y.T - np.eye(basis.n_shell))))
    errs["plate_mean"] = float(np.max(np.abs(Y @ w)))
    ends = np.array([0.0, 1.0])
    errs["plate_clamped"] = float(max(np.max(np.abs(basis.plate(ends))), np.max(np.abs(basis.plate(ends, 1)))))
    q2 = QuadratureRule(order_x=20, cells_x=16, order_z=30)
    interior = basis.interior
    V = np.array([f.velocity(q2.x, q2.z)[0] for f in interior])
    G = np.einsum("aixz,bixz,xz->ab", V, V, q2.weights)
    errs["interior_gram"] = float(np.max(np.abs(G - np.eye(len(interior)))))
    xb = np.linspace(0, 1, 9)
    zb = np.linspace(-1, 0, 9)
    bmax = 0.0
    div = 0.0
    for k, f in enumerate(basis.fields):
        U, Gd = f.velocity(xb, zb)
        div = max(div, float(np.max(np.abs(Gd[0, 0] + Gd[1, 1]))))
        kind, i = basis.order[k]
        top = U[:, :, -1].copy()
        if kind == "shell":
            top[1] -= basis.plate(xb)[i]
        bmax = max(bmax, float(np.max(np.abs(top))), float(np.max(np.abs(U[:, :, 0]))),
                   float(np.max(np.abs(U[:, 0]))), float(np.max(np.abs(U[:, -1]))))
    errs["boundary"] = bmax
    errs["divergence"] = div
    order = interleave(3, 2)
    errs["interleave"] = 0.0 if order[:3] == [("shell", 0), ("fluid", 0), ("shell", 1)] else 1.0
    mineig = np.inf
    for _ in range(n):
        delta = random_displacement(rng)
        M = mass_matrix(basis, geometry_from(delta, basis.quad.x))
        mineig = min(mineig, float(np.linalg.eigvalsh(M)[0]))
    worst = max(errs.values())
    ok = worst < 1e-10 and mineig > 0
    errs["min_mass_eig"] = mineig
    return CheckResult("basis", ok, worst, 1e-10, n, errs)


def check_energy(seed=7, n=N_SAMPLES):
    """Frozen-geometry decay E(t2) - E(t1) + dissipation = 0, and O(dt^2) balance order."""
    rng = np.random.default_rng(seed)
    basis = small_basis()
    params = PlateParams()
    N = 400
    flat = DisplacementTrajectory.constant(basis.plate, N)
    ops = PeriodicOperators(basis, flat, None, None, params, N)
    d = basis.n_total + basis.n_shell
    worst = 0.0
    for _ in range(n):
        y0 = rng.normal(size=d) * 0.1
        tr = integrate(y0, ops, check_admissible=False)
        led = tr.ledger
        i1, i2 = sorted(rng.integers(0, N + 1, 2))
        gap = led.energy[i2] - led.energy[i1] + led.dissipation[i1:i2].sum()
        worst = max(worst, abs(float(gap)))
    # moving geometry: balance per period at dt and dt/2
    balances = []
    m = 0.02
    forcing = ForcingSpec(amplitude=0.1)
    y0 = rng.normal(size=d) * 0.05
    for N2 in (400, 800):
        t = np.arange(N2) / N2
        coeffs = 0.08 * np.outer(np.sin(2 * np.pi * t), [1.0, 0.4, 0.2, 0.1][: basis.n_shell])
        traj = DisplacementTrajectory(basis.plate, coeffs, mean=m)
        ops2 = PeriodicOperators(basis, traj, None, forcing, params, N2)
        balances.append(abs(integrate(y0, ops2, check_admissible=False).ledger.balance()))
    ratio = balances[0] / balances[1]
    ok = worst < 1e-6 and 3.5 <= ratio <= 4.5
    return CheckResult("energy", ok, worst, 1e-6, n, {"balance_dt": balances[0], "balance_dt2": balances[1],
                                                      "ratio": ratio})


SUITES = {
    "piola": check_piola,
    "korn": check_korn,
    "reynolds": check_reynolds,
    "coercivity": check_coercivity,
    "trace": check_trace,
    "poincare_ineq": check_poincare_ineq,
    "basis": check_basis,
    "energy": check_energy,
}


def run_suite(name, seed=None):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    fn = SUITES[name]
    return fn() if seed is None else fn(seed=seed)


# ---------------------------------------------------------------------------
# solution diagnostics


def estimate_audit(sol):
    """Discrete analogues of the seven terms bounding 2 int K(eta) dt.

    The test pair is (sum_k b_k Y_k, eta - m Psi), written through the
    midpoint form of the discrete equation so that the identity
    2 int K = sum I_k holds up to round-off for the bending-only system.
    """
    ops = sol.ops
    tr = sol.trajectory
    dt = ops.dt
    P = ops.P
    a, b = tr.a, tr.b
    abar = 0.5 * (a[1:] + a[:-1])
    bbar = 0.5 * (b[1:] + b[:-1])
    terms = np.zeros(7)
    twoK = 0.0
    for i, op in enumerate(ops.mid):
        beta = P @ bbar[i]
        sh = P.T @ abar[i]
        da = (a[i + 1] - a[i]) / dt
        # the shell kinetic part of beta^T M a' integrates by parts to |b'|^2
        inertia = -(beta @ (op.M @ da + (op.B_d + op.D_g) @ abar[i]))
        terms[0] += dt * (op.k @ bbar[i] + 2.0 * ops.shell.K0)
        terms[1] += dt * (sh @ sh)
        terms[2] += dt * inertia
        terms[3] += -dt * beta @ (op.A @ abar[i])
        terms[4] += -dt * beta @ (op.C @ abar[i])
        terms[5] += dt * beta @ op.F_fluid
        terms[6] += dt * beta @ op.F_shell
        twoK += dt * 2.0 * ops.shell.energy(bbar[i])
    terms[2] -= terms[1]
    return {"I": terms.tolist(), "sum": float(terms.sum()), "twice_int_K": float(twoK),
            "identity_residual": float(abs(terms.sum() - twoK))}


def holder_report(eta_values, times, thetas=(0.25, 0.5)):
    """C_theta = max ||eta(t) - eta(s)||_inf / |t - s|^(1 - theta) over the grid."""
    out = {}
    T = times[-1] + (times[1] - times[0]) if len(times) > 1 else 1.0
    for th in thetas:
        best = 0.0
        for i in range(len(times)):
            diff = np.max(np.abs(eta_values - eta_values[i]), axis=1)
            gap = np.abs(times - times[i])
            gap = np.minimum(gap, T - gap)  # periodic distance
            mask = gap > 0
            if np.any(mask):
                best = max(best, float(np.max(diff[mask] / gap[mask] ** (1 - th))))
        out[f"theta_{th}"] = best
    return out
