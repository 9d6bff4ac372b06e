"""Time-dependent Galerkin operators on the current (mollified) domain.

With u = sum a_k X_k(t) and eta = sum b_k Yhat_k + m Psi the discrete problem
reads

    M a' + (B_d + D_g + A + C) a + P (S b + k) = F,      b' = P^T a,

where every matrix is a pullback quadrature over the reference box.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureError
from .fluid_basis import GeometrySample, pushforward_basis, sample_geometry
from .geometry import gauss_1d
from .geometry import PeriodicSamples


# ---------------------------------------------------------------------------
# forcing


def _fluid_profile(name):
    profiles = {
        "none": lambda x, y: (0.0 * x, 0.0 * x),
        "vertical": lambda x, y: (0.0 * x, x * (1.0 - x) + 0.0 * y),
        "swirl": lambda x, y: (-(y + 0.5) + 0.0 * x, x - 0.5 + 0.0 * y),
        "shear": lambda x, y: ((y + 1.0) * (1.0 + 0.0 * x), 0.0 * x),
    }
    if name not in profiles:
        raise ValueError(f"unknown fluid profile {name!r}; choose from {sorted(profiles)}")
    return profiles[name]


def _shell_profile(name):
    profiles = {
        "none": lambda x: 0.0 * x,
        "sine": lambda x: np.sin(np.pi * x),
        "asymmetric": lambda x: np.sin(2.0 * np.pi * x) + 0.5 * np.sin(np.pi * x),
        "uniform": lambda x: 1.0 + 0.0 * x,
    }
    if name not in profiles:
        raise ValueError(f"unknown shell profile {name!r}; choose from {sorted(profiles)}")
    return profiles[name]


@dataclass(frozen=True)
class ForcingSpec:
    """f(t, y) = amplitude * s_f(t) * profile_f(y), g(t, x) = amplitude * s_g(t) * profile_g(x).

    The time signals are finite Fourier sums ``sum c cos(2 pi k t/T) + s sin(...)``
    given as tuples ``(k, c, s)``, so both loads are T-periodic.
    """

    period: float = 1.0
    amplitude: float = 0.0
    fluid_profile: str = "vertical"
    shell_profile: str = "asymmetric"
    fluid_modes: tuple = ((1, 0.0, 1.0),)
    shell_modes: tuple = ((1, 1.0, 0.0),)

    def __post_init__(self):
        _fluid_profile(self.fluid_profile)
        _shell_profile(self.shell_profile)
        if self.period <= 0:
            raise ValueError("period must be positive")

    def _signal(self, modes, t):
        t = np.asarray(t, dtype=float)
        w = 2.0 * np.pi / self.period
        out = np.zeros_like(t)
        for k, c, s in modes:
            out = out + c * np.cos(w * k * t) + s * np.sin(w * k * t)
        return out

    def fluid(self, t, x, y):
        a = self.amplitude * self._signal(self.fluid_modes, t)
        f1, f2 = _fluid_profile(self.fluid_profile)(x, y)
        return a * f1, a * f2

    def shell(self, t, x):
        return self.amplitude * self._signal(self.shell_modes, t) * _shell_profile(self.shell_profile)(x)

    @property
    def is_zero(self):
        return self.amplitude == 0.0

    def size(self, n_t=64, n_s=48):
        """C(f, g) = int_0^T int |f|^2 + int_0^T int |g|^2, f on (0,1) x (-1,1)."""
        t = np.arange(n_t) * self.period / n_t
        wt = self.period / n_t
        x, wx = gauss_1d(n_s, 0.0, 1.0)
        y, wy = gauss_1d(n_s, -1.0, 1.0)
        X, Y = np.meshgrid(x, y, indexing="ij")
        W = np.outer(wx, wy)
        total = 0.0
        for ti in t:
            f1, f2 = self.fluid(ti, X, Y)
            total += wt * np.sum(W * (np.asarray(f1) ** 2 + np.asarray(f2) ** 2))
            total += wt * np.sum(wx * self.shell(ti, x) ** 2)
        return float(total)


# ---------------------------------------------------------------------------
# transport


class Transport:
    """Linearisation field R v = sum_l c_l(t) X_l(t), coefficients periodic in t."""

    def __init__(self, samples, period=1.0):
        self.samples = np.asarray(samples, dtype=float)
        self.period = period
        self._interp = PeriodicSamples(self.samples, period)

    @classmethod
    def zero(cls, n_times, n_total, period=1.0):
        return cls(np.zeros((n_times, n_total)), period)

    @property
    def is_zero(self):
        return not np.any(self.samples)

    def coeffs(self, t):
        return self._interp(t)[0]


# ---------------------------------------------------------------------------
# operators


@dataclass
class SystemOperators:
    t: float
    M: np.ndarray
    A: np.ndarray
    C: np.ndarray
    D_g: np.ndarray
    B_d: np.ndarray
    F: np.ndarray
    S: np.ndarray  # shell-space bending block
    k: np.ndarray  # shell-space mean coupling
    geom: GeometrySample = field(repr=False, default=None)
    F_fluid: np.ndarray | None = field(repr=False, default=None)
    F_shell: np.ndarray | None = field(repr=False, default=None)

    @property
    def L(self):
        return self.B_d + self.D_g + self.A + self.C

    @property
    def G(self):
        """Reynolds top term int d_t(R delta) Yhat_j Yhat_k, i.e. 2 D_g."""
        return 2.0 * self.D_g


def _gram(X, Y, W):
    """sum over trailing node axes of X[a, ...] Y[b, ...] W[...]."""
    n = X.shape[0]
    return (X * W).reshape(n, -1) @ Y.reshape(Y.shape[0], -1).T


def shell_blocks(basis, params, mean):
    S = 2.0 * params.bending * basis.plate.stiffness_gram
    k = 2.0 * params.bending * mean * basis.plate.psi_coupling
    return S, k


def mass_matrix(basis, geom):
    return basis.fluid_mass(geom) + basis.P @ basis.P.T


def assemble(t, basis, delta, v, forcing, params, geom=None):
    """Operators at time t for mollified geometry ``delta`` and transport ``v``.

    ``delta`` is a DisplacementTrajectory, ``v`` a :class:`Transport` (or None).
    """
    if geom is None:
        geom = sample_geometry(basis, delta, t)
    quad = basis.quad
    pb = pushforward_basis(basis, geom, with_dt=True)
    J = geom.J
    W = quad.weights * J[:, None]
    u, grad = pb.u, pb.grad
    M = _gram(u, u, W) + basis.P @ basis.P.T
    A = _gram(grad, grad, W)
    B_d = _gram(u, pb.dt, W)
    D_g = 0.5 * (basis.trace * (quad.wx * geom.dt0)) @ basis.trace.T
    n = basis.n_total
    if v is not None and not v.is_zero:
        cv = v.coeffs(t)
        vv = np.tensordot(cv, u, axes=(0, 0))  # (2, nx, nz)
        conv = np.einsum("jimxz,mxz->jixz", grad, vv)
        c = _gram(u, conv, W)  # c[i, j] = int (v . grad) X_j . X_i
        C = 0.5 * (c - c.T)
    else:
        C = np.zeros((n, n))
    F_fluid = np.zeros(n)
    F_shell = np.zeros(n)
    if forcing is not None and not forcing.is_zero:
        X = quad.x[:, None] + 0.0 * quad.z[None, :]
        Y = quad.z[None, :] + (1.0 + quad.z[None, :]) * geom.d0[:, None]
        f1, f2 = forcing.fluid(t, X, Y)
        F_fluid += np.tensordot(u[:, 0], W * f1, axes=([1, 2], [0, 1]))
        F_fluid += np.tensordot(u[:, 1], W * f2, axes=([1, 2], [0, 1]))
        F_shell += basis.trace @ (quad.wx * forcing.shell(t, quad.x))
    F = F_fluid + F_shell
    S, k = shell_blocks(basis, params, delta.mean if delta is not None else 0.0)
    for name, mat in (("M", M), ("A", A), ("B_d", B_d), ("C", C), ("F", F)):
        if not np.all(np.isfinite(mat)):
            raise QuadratureError(f"non-finite entries in {name} at t = {t}")
    return SystemOperators(t, M, A, C, D_g, B_d, F, S, k, geom, F_fluid, F_shell)


def hat_functions(n_hats, period):
    """Periodic hats centred at j T / n_hats with half-width T / n_hats."""
    h = period / n_hats

    def phi(t, j):
        s = (np.asarray(t) - j * h + 0.5 * period) % period - 0.5 * period
        return np.clip(1.0 - np.abs(s) / h, 0.0, None)

    def dphi(t, j):
        s = (np.asarray(t) - j * h + 0.5 * period) % period - 0.5 * period
        return np.where(np.abs(s) < h, -np.sign(s) / h, 0.0)

    return phi, dphi


def weak_residual(a, b, ops, basis, dt, period, n_hats=8):
    """Time-integrated weak form tested with hats phi_j(t) X_k.

    ``a``, ``b`` are grid samples (N, n) and (N, n_shell) on t_i = i dt; ``ops``
    are the midpoint operators.  The identity used is

        int -phi' (M a)_k - phi (B_d^T a)_k - phi/2 (G a)_k
            + phi [(A + C) a + P (S b + k) - F]_k = 0,

    evaluated with the midpoint rule.  Returns an (n_hats, n) array.
    """
    N = a.shape[0]
    abar = 0.5 * (a + np.roll(a, -1, axis=0))
    bbar = 0.5 * (b + np.roll(b, -1, axis=0))
    tm = (np.arange(N) + 0.5) * dt
    phi, dphi = hat_functions(n_hats, period)
    P = basis.P
    res = np.zeros((n_hats, a.shape[1]))
    for i, op in enumerate(ops):
        body = (op.A + op.C - op.B_d.T - 0.5 * op.G) @ abar[i] + P @ (op.S @ bbar[i] + op.k) - op.F
        Ma = op.M @ abar[i]
        for j in range(n_hats):
            res[j] += dt * (-dphi(tm[i], j) * Ma + phi(tm[i], j) * body)
    return res
