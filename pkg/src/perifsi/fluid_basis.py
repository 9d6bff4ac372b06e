"""Solenoidal reference fields and the interleaved fluid-structure basis.

Every reference velocity is the perpendicular gradient U = (psi_z, -psi_x) of
a separable streamfunction

    psi(x, z) = sum_{a, b} C[a, b] p_a(x) q_b(z),

so div U = 0 by construction.  z-families are polynomials, which keeps all
z-quadrature exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import Legendre

from .errors import DegenerateBasisError, PreconditionError, SolverError
from .geometry import QuadratureRule, piola_pullback, piola_time_derivative
from .plate import BeamModes, PlateBasis, bump_psi


# ---------------------------------------------------------------------------
# one-dimensional families: callables f(s, deriv) -> (n_members, len(s))


class PolyFamily:
    """Family of numpy polynomial series in one variable."""

    def __init__(self, polys):
        self.polys = list(polys)
        self._derivs = [[p] for p in self.polys]

    def __len__(self):
        return len(self.polys)

    def __call__(self, s, deriv=0):
        s = np.asarray(s, dtype=float)
        out = np.empty((len(self.polys),) + s.shape)
        for k, ds in enumerate(self._derivs):
            while len(ds) <= deriv:
                ds.append(ds[-1].deriv())
            out[k] = ds[deriv](s)
        return out


def clamped_z_family(n):
    """q_j(z) = (z (1 + z))^2 P_j(2z + 1): zero value and slope at z = -1, 0."""
    # Legendre series on [-1, 0] keep high degrees well conditioned
    base = Legendre.fromroots([-1.0, -1.0, 0.0, 0.0], domain=[-1.0, 0.0])
    return PolyFamily([base * Legendre.basis(j, domain=[-1.0, 0.0]) for j in range(n)])


def lift_z():
    """w(z) = (1 + z)^2 (1 - 2z): w(0) = 1, w'(0) = 0, clamped at z = -1."""
    return PolyFamily([Legendre.fromroots([-1.0, -1.0, 0.5], domain=[-1.0, 0.0]) * -2.0])


class ShellAntiderivative:
    """x-family S_k = int_0^x Yhat_k; S_k' = Yhat_k."""

    def __init__(self, plate: PlateBasis):
        self.plate = plate

    def __len__(self):
        return self.plate.n_modes

    def __call__(self, x, deriv=0):
        raw = self.plate.raw(x, deriv - 1)
        return np.tensordot(self.plate.Q, raw, axes=(1, 0))


class BeamFamily:
    def __init__(self, n):
        self.modes = BeamModes(n)

    def __len__(self):
        return self.modes.n

    def __call__(self, x, deriv=0):
        return self.modes(x, deriv)


# ---------------------------------------------------------------------------
# streamfunctions


@dataclass
class StreamTerm:
    px: object
    qz: object
    C: np.ndarray


@dataclass
class StreamfunctionField:
    """psi = sum over terms of px(x)^T C qz(z); velocity (psi_z, -psi_x)."""

    terms: list = field(default_factory=list)

    def psi(self, x, z, dx=0, dz=0):
        """Derivative d^dx_x d^dz_z psi on the tensor grid x by z."""
        out = 0.0
        for t in self.terms:
            out = out + t.px(x, dx).T @ t.C @ t.qz(z, dz)
        return np.broadcast_to(out, (len(x), len(z))).copy()

    def velocity(self, x, z):
        """Return U (2, nx, nz) and gradU (2, 2, nx, nz) with gradU[i, j] = d_j U_i."""
        px = self.psi(x, z, 1, 0)
        pz = self.psi(x, z, 0, 1)
        pxx = self.psi(x, z, 2, 0)
        pxz = self.psi(x, z, 1, 1)
        pzz = self.psi(x, z, 0, 2)
        U = np.stack([pz, -px])
        G = np.stack([np.stack([pxz, pzz]), np.stack([-pxx, -pxz])])
        return U, G

    def scaled(self, c):
        return StreamfunctionField([StreamTerm(t.px, t.qz, c * t.C) for t in self.terms])


def combine(fields, coeffs):
    """sum_k coeffs[k] fields[k], merged term-wise when families match."""
    merged = {}
    for f, c in zip(fields, coeffs):
        if c == 0.0:
            continue
        for t in f.terms:
            key = (id(t.px), id(t.qz))
            if key in merged:
                merged[key].C = merged[key].C + c * t.C
            else:
                merged[key] = StreamTerm(t.px, t.qz, c * t.C)
    return StreamfunctionField(list(merged.values()))


# ---------------------------------------------------------------------------
# finite-difference biharmonic solve


def solve_biharmonic_fd(n, top_value, top_dz=None, source=None):
    """Second-order FD solve of lap^2 psi = source on the box, n x n cells.

    Boundary data: psi = top_value(x), psi_z = top_dz(x) on z = 0 and clamped
    zero on the other three edges.  Ghost points close the 13-point stencil
    through central differences of the normal derivative.  Returns the node
    coordinates and psi on the (n+1) x (n+1) grid indexed [i_x, j_z].
    """
    h = 1.0 / n
    xs = np.linspace(0.0, 1.0, n + 1)
    zs = np.linspace(-1.0, 0.0, n + 1)
    known = np.zeros((n + 1, n + 1))
    known[:, n] = top_value(xs)
    gtop = np.zeros(n + 1) if top_dz is None else top_dz(xs)
    m = n - 1
    idx = lambda i, j: (i - 1) * m + (j - 1)
    stencil = [((0, 0), 20.0)]
    stencil += [((d, 0), -8.0) for d in (-1, 1)] + [((0, d), -8.0) for d in (-1, 1)]
    stencil += [((a, b), 2.0) for a in (-1, 1) for b in (-1, 1)]
    stencil += [((d, 0), 1.0) for d in (-2, 2)] + [((0, d), 1.0) for d in (-2, 2)]
    rows, cols, vals = [], [], []
    rhs = np.zeros(m * m)
    if source is not None:
        X, Z = np.meshgrid(xs[1:n], zs[1:n], indexing="ij")
        rhs += h**4 * source(X, Z).ravel()
    for i in range(1, n):
        for j in range(1, n):
            r = idx(i, j)
            for (a, b), c in stencil:
                p, q = i + a, j + b
                shift = 0.0
                if p < 0:
                    p = -p  # psi_x = 0 on the sides
                elif p > n:
                    p = 2 * n - p
                if q < 0:
                    q = -q
                elif q > n:
                    shift = 2.0 * h * gtop[p]
                    q = 2 * n - q
                if 1 <= p < n and 1 <= q < n:
                    rows.append(r)
                    cols.append(idx(p, q))
                    vals.append(c)
                else:
                    rhs[r] -= c * known[p, q]
                rhs[r] -= c * shift
    Amat = sp.csc_matrix((vals, (rows, cols)), shape=(m * m, m * m))
    try:
        sol = spla.spsolve(Amat, rhs)
    except RuntimeError as exc:  # pragma: no cover - singular factor
        raise SolverError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError("biharmonic system is singular")
    psi = known.copy()
    psi[1:n, 1:n] = sol.reshape(m, m)
    return xs, zs, psi


def solve_stokes_extension(plate, k, grid=64, fit_x=None, fit_z=10):
    """Streamfunction of a div-free extension of Yhat_k e_2 from the top edge.

    psi = -S_k(x) w(z) + sum C[a, b] phi_a(x) q_b(z); the correction is the
    least-squares fit of the FD biharmonic solution minus the lift, so the
    boundary conditions hold exactly and the field is close to Stokes.
    """
    S = ShellAntiderivative(plate)
    mean = S(np.array([1.0]))[k, 0]
    if abs(mean) > 1e-10:
        raise PreconditionError(f"shell mode {k} has mean {mean:.3e}; extension needs zero mean")
    fit_x = fit_x or plate.n_modes + 5
    xs, zs, psi = solve_biharmonic_fd(grid, lambda x: -S(x)[k])
    w = lift_z()
    lift = -np.outer(S(xs)[k], w(zs)[0])
    bx, qz = _fit_families(fit_x, fit_z)
    Px, Qz = bx(xs), qz(zs)
    C = np.linalg.pinv(Px.T) @ (psi - lift) @ np.linalg.pinv(Qz)
    sel = np.zeros((len(S), 1))
    sel[k, 0] = -1.0
    return StreamfunctionField([StreamTerm(S, w, sel), StreamTerm(bx, qz, C)])


_FAMILY_CACHE = {}


def _fit_families(nx, nz):
    key = (nx, nz)
    if key not in _FAMILY_CACHE:
        _FAMILY_CACHE[key] = (BeamFamily(nx), clamped_z_family(nz))
    return _FAMILY_CACHE[key]


def _interior_pairs(n):
    pairs = []
    s = 0
    while len(pairs) < n:
        for i in range(s + 1):
            pairs.append((i, s - i))
        s += 1
    return sorted(pairs[:n], key=lambda p: (p[0] + p[1], p[0]))


def build_interior_basis(n, quad=None):
    """n interior modes, perpendicular gradients of phi_i(x) q_j(z), L2-orthonormal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    quad = quad or QuadratureRule()
    pairs = _interior_pairs(n)
    bx, qz = _fit_families(max(i for i, _ in pairs) + 1, max(j for _, j in pairs) + 1)
    raw = []
    for i, j in pairs:
        C = np.zeros((len(bx), len(qz)))
        C[i, j] = 1.0
        raw.append(StreamfunctionField([StreamTerm(bx, qz, C)]))
    vel = np.array([f.velocity(quad.x, quad.z)[0] for f in raw])
    G = np.einsum("aixz,bixz,xz->ab", vel, vel, quad.weights)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError("interior modes are linearly dependent") from exc
    if np.linalg.eigvalsh(G)[0] < 1e-12 * np.linalg.eigvalsh(G)[-1]:
        raise DegenerateBasisError("interior Gram matrix is numerically singular")
    T = np.linalg.inv(L)
    return [combine(raw, T[k]) for k in range(n)]


def interleave(shell_count, fluid_count):
    """Index map: entry k is ('shell', i) or ('fluid', j), 0-based members.

    Odd positions (1-based) carry shell modes, even ones interior modes, for as
    long as both are available; the remainder is appended.
    """
    if shell_count < 1 or fluid_count < 1:
        raise ValueError("counts must be >= 1")
    order = []
    i = j = 0
    while i < shell_count or j < fluid_count:
        if i < shell_count:
            order.append(("shell", i))
            i += 1
        if j < fluid_count:
            order.append(("fluid", j))
            j += 1
    return order


@dataclass
class CombinedBasis:
    """Interleaved basis X_k = (Y_k, Yhat_k) with reference data on the quadrature grid."""

    plate: PlateBasis
    extensions: list
    interior: list
    order: list
    quad: QuadratureRule

    def __post_init__(self):
        fields = [self.extensions[i] if kind == "shell" else self.interior[i] for kind, i in self.order]
        self.fields = fields
        x, z = self.quad.x, self.quad.z
        U, G = zip(*(f.velocity(x, z) for f in fields))
        self.U = np.array(U)  # (n, 2, nx, nz)
        self.gradU = np.array(G)  # (n, 2, 2, nx, nz)
        self.shell_index = np.array([k for k, (kind, _) in enumerate(self.order) if kind == "shell"])
        # P maps shell coefficients into the combined vector
        self.P = np.zeros((self.n_total, self.n_shell))
        self.P[self.shell_index, np.arange(self.n_shell)] = 1.0
        # trace Yhat and its derivatives at the quadrature x-nodes, per basis member
        self.plate_x = [self.plate(x, d) for d in range(3)]
        self.psi_x = [bump_psi(x, d) for d in range(3)]
        self.trace = self.P @ self.plate_x[0]  # (n, nx)
        # z-moments for the mass matrix: with c = s d1 / J the pushed field
        # satisfies |u|^2 J = U1^2 (1 + s^2 d1^2) / J + U2^2 J + 2 s d1 U1 U2
        wz, sz = self.quad.wz, 1.0 + z
        U1, U2 = self.U[:, 0], self.U[:, 1]
        mom = lambda F, G, p: np.einsum("axz,bxz,z->bax", F, G, wz * sz**p)
        self.mass_moments = (
            mom(U1, U1, 0),
            mom(U1, U1, 2),
            mom(U2, U2, 0),
            mom(U1, U2, 1) + mom(U2, U1, 1),
        )

    @property
    def n_total(self):
        return len(self.order)

    def fluid_mass(self, geom):
        """int |u|^2 over the deformed domain, from the precomputed z-moments."""
        J, d1 = geom.J, geom.d1
        wx = self.quad.wx
        m0, m2, q0, r1 = self.mass_moments
        return m0 @ (wx / J) + m2 @ (wx * d1**2 / J) + q0 @ (wx * J) + r1 @ (wx * d1)

    @property
    def n_shell(self):
        return self.plate.n_modes

    @property
    def n_fluid(self):
        return len(self.interior)

    def member(self, k):
        """(kind, index) for 1-based position k."""
        return self.order[k - 1]


def build_combined_basis(n_shell, n_interior, quad=None, grid=64, plate=None):
    quad = quad or QuadratureRule()
    from .plate import build_plate_basis

    plate = plate or build_plate_basis(n_shell)
    ext = [solve_stokes_extension(plate, k, grid=grid) for k in range(n_shell)]
    interior = build_interior_basis(n_interior, quad)
    return CombinedBasis(plate, ext, interior, interleave(n_shell, n_interior), quad)


@dataclass
class GeometrySample:
    """delta, its x-derivatives and time derivatives at the quadrature x-nodes."""

    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    dt0: np.ndarray
    dt1: np.ndarray

    @classmethod
    def flat(cls, nx):
        z = np.zeros(nx)
        return cls(z, z, z, z, z)

    @property
    def J(self):
        return 1.0 + self.d0


def sample_geometry(basis, traj, t):
    """GeometrySample of a DisplacementTrajectory at time t."""
    c = traj.coeffs(t)[0]
    ct = traj.coeffs(t, 1)[0]
    d = [c @ basis.plate_x[k] + traj.mean * basis.psi_x[k] for k in range(3)]
    return GeometrySample(d[0], d[1], d[2], ct @ basis.plate_x[0], ct @ basis.plate_x[1])


@dataclass
class PushedBasis:
    """Values of X_k(t) at the pulled-back quadrature nodes."""

    u: np.ndarray  # (n, 2, nx, nz)
    grad: np.ndarray  # (n, 2, 2, nx, nz), grad[k, i, j] = d_{y_j} u_i
    dt: np.ndarray | None  # (n, 2, nx, nz)
    geom: GeometrySample


def pushforward_basis(basis, geom, with_dt=True):
    """Piola pushforward of every reference field onto the domain of ``geom``."""
    z = basis.quad.z[None, :]
    d0, d1, d2 = (g[:, None] for g in (geom.d0, geom.d1, geom.d2))
    if np.any(1.0 + geom.d0 <= 0.0):
        from .errors import AdmissibilityError

        raise AdmissibilityError("non-positive Jacobian in pushforward")
    u, grad = piola_pullback(d0, d1, d2, z, np.moveaxis(basis.U, 0, 1), np.moveaxis(basis.gradU, 0, 2))
    u = np.moveaxis(u, 1, 0)
    grad = np.moveaxis(grad, 2, 0)
    dt = None
    if with_dt:
        dt = piola_time_derivative(
            d0, d1, geom.dt0[:, None], geom.dt1[:, None], z,
            np.moveaxis(basis.U, 0, 1), np.moveaxis(grad, 0, 2),
        )
        dt = np.moveaxis(dt, 1, 0)
    return PushedBasis(u, grad, dt, geom)
