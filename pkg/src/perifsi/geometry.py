"""Reference box, graph-displacement maps, Piola transforms and mollifiers.

The fluid reference domain is the box (0, 1) x (-1, 0) whose top edge carries
the plate.  A displacement ``delta`` on (0, 1) deforms it through

    phi(x, z) = (x, z + (1 + z) * delta(x)),

so ``det d phi = 1 + delta(x)`` does not depend on ``z``.  Every integral over a
deformed domain is pulled back to the box with that weight.

A *displacement* here is any object callable as ``delta(x, deriv=0)``; a
*trajectory* is callable as ``traj(t, x, deriv=0)`` and may provide
``traj.dt(t, x, deriv=0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .errors import AdmissibilityError, ResolutionError

DEFAULT_KAPPA = 0.5


@dataclass(frozen=True)
class ReferenceDomain:
    """omega = (0, 1), box = (0, 1) x (-1, 0), moving part M = omega x {0}."""

    kappa: float = DEFAULT_KAPPA
    omega: tuple = (0.0, 1.0)
    depth: tuple = (-1.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1) for the affine extension")

    @property
    def top_normal(self):
        return np.array([0.0, 1.0])


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the box.

    x uses ``cells_x`` equal cells with ``order_x`` points each; z uses a single
    cell with ``order_z`` points.  The fluid reference fields are polynomial in
    z, so the z rule is exact for them once ``order_z`` is large enough.
    """

    order_x: int = 10
    cells_x: int = 8
    order_z: int = 24

    @cached_property
    def x(self):
        return self._composite(self.order_x, self.cells_x, 0.0, 1.0)[0]

    @cached_property
    def wx(self):
        return self._composite(self.order_x, self.cells_x, 0.0, 1.0)[1]

    @cached_property
    def z(self):
        return self._composite(self.order_z, 1, -1.0, 0.0)[0]

    @cached_property
    def wz(self):
        return self._composite(self.order_z, 1, -1.0, 0.0)[1]

    @property
    def weights(self):
        """Box weights, shape (nx, nz)."""
        return np.outer(self.wx, self.wz)

    @property
    def exact_degree(self):
        return (2 * self.order_x - 1, 2 * self.order_z - 1)

    @staticmethod
    def _composite(order, cells, a, b):
        s, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(a, b, cells + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * s[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights

    def integrate_box(self, values):
        return np.tensordot(values, self.weights, axes=([-2, -1], [0, 1]))

    def integrate_omega(self, values):
        return values @ self.wx


def gauss_1d(n, a=0.0, b=1.0, cells=1):
    """Composite Gauss nodes/weights on [a, b]."""
    return QuadratureRule._composite(n, cells, a, b)


# ---------------------------------------------------------------------------
# displacements


class PolynomialDisplacement:
    """delta(x) given by a polynomial; handy for tests and diagnostics."""

    def __init__(self, poly):
        self.poly = poly if isinstance(poly, Polynomial) else Polynomial(poly)

    @classmethod
    def bubble(cls, amplitude):
        """amplitude * x^2 (1 - x)^2."""
        return cls(amplitude * Polynomial([0, 0, 1, -2, 1]))

    def __call__(self, x, deriv=0):
        p = self.poly.deriv(deriv) if deriv > 0 else self.poly
        return p(np.asarray(x, dtype=float))


def sup_norm(delta, samples=1001):
    x = np.linspace(0.0, 1.0, samples)
    return float(np.max(np.abs(delta(x))))


@dataclass
class DomainMap:
    """phi_delta for one fixed displacement."""

    delta: object
    kappa: float = DEFAULT_KAPPA
    sup: float = field(init=False)

    def __post_init__(self):
        self.sup = sup_norm(self.delta)
        if not np.isfinite(self.sup) or self.sup >= self.kappa:
            raise AdmissibilityError(
                f"||delta||_inf = {self.sup:.6g} >= kappa = {self.kappa:.6g}"
            )


def map_point(dmap, x, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return x, z + (1.0 + z) * dmap.delta(x)


def inverse_point(dmap, x, y):
    x = np.asarray(x, dtype=float)
    d = dmap.delta(x)
    return x, (np.asarray(y, dtype=float) - d) / (1.0 + d)


def jacobian(dmap, x, z):
    """Return (d phi, det d phi); d phi has shape (..., 2, 2)."""
    x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
    d0 = dmap.delta(x)
    d1 = dmap.delta(x, 1)
    F = np.zeros(x.shape + (2, 2))
    F[..., 0, 0] = 1.0
    F[..., 1, 0] = (1.0 + z) * d1
    F[..., 1, 1] = 1.0 + d0
    return F, 1.0 + d0


def piola_pullback(d0, d1, d2, z, U, gradU):
    """Piola-transformed field expressed at reference points.

    ``U[i]`` and ``gradU[i, j] = d_j U_i`` are sampled at reference points
    (x, z); ``d0, d1, d2`` are delta and its first two x-derivatives there.
    Returns the pushed-forward velocity at phi(x, z) and its gradient with
    respect to the deformed coordinates.
    """
    J = 1.0 + d0
    s = 1.0 + z
    U1, U2 = U[0], U[1]
    U1x, U1z = gradU[0, 0], gradU[0, 1]
    U2x, U2z = gradU[1, 0], gradU[1, 1]

    u1 = U1 / J
    u2 = U2 + s * d1 * U1 / J

    a_x = U1x / J - U1 * d1 / J**2
    a_z = U1z / J
    b_x = U2x + s * (d2 * U1 / J + d1 * U1x / J - d1**2 * U1 / J**2)
    b_z = U2z + d1 * U1 / J + s * d1 * U1z / J

    # d/dy1 = d/dx - s d1 / J d/dz ;  d/dy2 = (1 / J) d/dz
    c = s * d1 / J
    grad = np.empty((2, 2) + np.broadcast(u1, a_x).shape)
    grad[0, 0] = a_x - c * a_z
    grad[0, 1] = a_z / J
    grad[1, 0] = b_x - c * b_z
    grad[1, 1] = b_z / J
    u = np.empty((2,) + grad.shape[2:])
    u[0] = u1
    u[1] = u2
    return u, grad


def piola_time_derivative(d0, d1, dt0, dt1, z, U, grad_y):
    """Eulerian time derivative of the pushed-forward field.

    ``dt0, dt1`` are d/dt delta and d/dt delta' at the reference points;
    ``grad_y`` is the deformed-coordinate gradient from :func:`piola_pullback`.
    """
    J = 1.0 + d0
    s = 1.0 + z
    U1 = U[0]
    out = np.empty((2,) + np.broadcast(U1, d0, z).shape)
    out[0] = -U1 * dt0 / J**2
    out[1] = s * U1 * (dt1 / J - d1 * dt0 / J**2)
    out -= grad_y[:, 1] * (s * dt0)
    return out


def piola_transform(dmap, u_ref):
    """Return y -> (u(y), grad u(y)) on the deformed domain.

    ``u_ref(x, z)`` must return ``(U, gradU)`` in the layout of
    :func:`piola_pullback`.
    """
    delta = dmap.delta

    def pushed(x, y):
        xr, zr = inverse_point(dmap, x, y)
        U, gradU = u_ref(xr, zr)
        return piola_pullback(delta(xr), delta(xr, 1), delta(xr, 2), zr, U, gradU)

    return pushed


def divergence(grad):
    return grad[0, 0] + grad[1, 1]


# ---------------------------------------------------------------------------
# mollification


@dataclass(frozen=True)
class MollifierParams:
    """Space-time smoothing radius; time is treated T-periodically."""

    epsilon: float
    period: float = 1.0
    epsilon_space: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def bump(s):
    """Unnormalised smooth bump supported on (-1, 1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _kernel_weights(radius, spacing):
    if radius < 2.0 * spacing:
        raise ResolutionError(
            f"kernel radius {radius:.4g} below twice the sample spacing {spacing:.4g}"
        )
    k = int(np.ceil(radius / spacing))
    offsets = np.arange(-k, k + 1)
    w = bump(offsets * spacing / radius)
    return offsets, w / w.sum()


def mollify(samples, params, axis=0, space_axis=None, space_spacing=None):
    """Periodic-in-time (and optionally reflected-in-space) convolution.

    ``samples`` holds one period on a uniform time grid along ``axis``
    (the endpoint T is *not* repeated).  With ``params.epsilon_space`` set,
    ``space_axis`` is additionally smoothed using an even reflection at the
    ends, which keeps constants fixed.  Discrete weights are nonnegative and
    sum to one, so the sup norm never grows.
    """
    a = np.asarray(samples, dtype=float)
    nt = a.shape[axis]
    dt = params.period / nt
    offsets, w = _kernel_weights(params.epsilon, dt)
    if len(offsets) > nt:
        raise ResolutionError("kernel wider than one period")
    out = np.zeros_like(a)
    for o, wi in zip(offsets, w):
        out += wi * np.roll(a, -o, axis=axis)

    if params.epsilon_space is not None:
        if space_axis is None or space_spacing is None:
            raise ValueError("space_axis and space_spacing required for spatial smoothing")
        offsets, w = _kernel_weights(params.epsilon_space, space_spacing)
        k = offsets[-1]
        pad = [(0, 0)] * out.ndim
        pad[space_axis] = (k, k)
        ext = np.pad(out, pad, mode="symmetric")
        n = out.shape[space_axis]
        res = np.zeros_like(out)
        for o, wi in zip(offsets, w):
            res += wi * np.take(ext, np.arange(k + o, k + o + n), axis=space_axis)
        out = res
    return out


# ---------------------------------------------------------------------------
# Reynolds transport


def domain_integral(g, t, traj, quad):
    """Integral of g(t, x, y) over the deformed domain at time t."""
    X, Z = quad.x[:, None], quad.z[None, :]
    d = traj(t, quad.x)[:, None]
    y = Z + (1.0 + Z) * d
    return float(np.sum(quad.weights * (1.0 + d) * g(t, X, y)))


def reynolds_residual(g, traj, times, dt, quad=None, g_t=None):
    """r(t) = d/dt int g - int d_t g - int_M (d_t delta) g ds  (graph top).

    d/dt of the domain integral uses central differences with step ``dt``;
    ``d_t g`` uses ``g_t`` when given, else central differences too.  The
    boundary speed vanishes on the fixed walls, so only the top contributes,
    where e2 . nu ds = dx.
    """
    quad = quad or QuadratureRule()
    if g_t is None:
        def g_t(t, x, y):
            return (g(t + dt, x, y) - g(t - dt, x, y)) / (2.0 * dt)

    if hasattr(traj, "dt"):
        traj_t = traj.dt
    else:
        def traj_t(t, x, deriv=0):
            return (traj(t + dt, x, deriv) - traj(t - dt, x, deriv)) / (2.0 * dt)

    out = []
    for t in np.atleast_1d(times):
        lhs = (domain_integral(g, t + dt, traj, quad) - domain_integral(g, t - dt, traj, quad)) / (2 * dt)
        vol = domain_integral(g_t, t, traj, quad)
        x = quad.x
        top = np.sum(quad.wx * traj_t(t, x) * g(t, x, traj(t, x)))
        out.append(lhs - vol - top)
    return np.array(out)


class PeriodicSamples:
    """Trigonometric interpolant of uniformly sampled T-periodic data.

    ``samples[i]`` is the value at ``t_i = i * period / N``; trailing axes are
    carried along.
    """

    def __init__(self, samples, period=1.0):
        self.samples = np.asarray(samples, dtype=float)
        self.period = float(period)
        n = self.samples.shape[0]
        self.n = n
        self._hat = np.fft.rfft(self.samples, axis=0) / n
        self._k = np.arange(self._hat.shape[0])
        w = np.full(self._hat.shape[0], 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        self._w = w

    def __call__(self, t, deriv=0):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        omega = 2.0 * np.pi * self._k / self.period
        phase = np.exp(1j * np.outer(t, omega))
        coef = self._w * (1j * omega) ** deriv
        vals = np.tensordot(phase * coef, self._hat, axes=(1, 0))
        return vals.real
