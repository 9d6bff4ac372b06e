"""Koiter plate energy, clamped zero-mean modal basis and the mean-carrying bump.

One-dimensional reduction: the change of metric is (eta')^2 and the change of
curvature is eta''.  With density-thickness normalised to one,

    K(eta) = h/2 * a_m * int (eta')^4  [membrane flag]
           + h^3/6 * a_b * int (eta'')^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .errors import AdmissibilityError, DegenerateBasisError
from .geometry import DEFAULT_KAPPA, PeriodicSamples, gauss_1d, mollify

# 1-D rule used for every plate integral: 16 cells x 16 points
PLATE_RULE = gauss_1d(16, 0.0, 1.0, cells=16)


@dataclass
class PlateParams:
    h: float = 0.1
    lambda_s: float = 1.0
    mu_s: float = 1.0
    a_m: float | None = None
    a_b: float | None = None
    membrane_enabled: bool = False

    def __post_init__(self):
        if self.h <= 0 or self.mu_s <= 0:
            raise ValueError("h and mu_s must be positive")
        modulus = 4 * self.lambda_s * self.mu_s / (self.lambda_s + 2 * self.mu_s) + 8 * self.mu_s
        if self.a_m is None:
            self.a_m = modulus
        if self.a_b is None:
            self.a_b = modulus
        if self.a_b <= 0:
            raise ValueError("bending modulus must be positive")

    @property
    def bending(self):
        """Coefficient of int (eta'')^2 in K."""
        return self.h**3 / 6.0 * self.a_b

    @property
    def membrane(self):
        """Coefficient of int (eta')^4 in K (zero when disabled)."""
        return 0.5 * self.h * self.a_m if self.membrane_enabled else 0.0

    @property
    def c0(self):
        return self.bending


# ---------------------------------------------------------------------------
# clamped-clamped beam eigenfunctions on (0, 1)


def beam_frequencies(n):
    """First n positive roots of cos(b) cosh(b) = 1, by bisection."""
    f = lambda b: np.cos(b) - 1.0 / np.cosh(b)
    roots = []
    for j in range(1, n + 1):
        r = optimize.bisect(f, j * np.pi, (j + 1) * np.pi, xtol=1e-15, maxiter=200)
        roots.append(r)
    return np.array(roots)


class BeamModes:
    """phi_j(x) = cos bx - cosh bx - s (sin bx - sinh bx), evaluated stably.

    The hyperbolic part is written with decaying exponentials so the modes
    stay accurate for large b.  ``deriv=-1`` gives the antiderivative from 0.
    """

    def __init__(self, n):
        self.n = n
        self.beta = beam_frequencies(n)
        b = self.beta
        e1, e2 = np.exp(-b), np.exp(-2 * b)
        den = 1.0 - e2 - 2.0 * np.sin(b) * e1
        self.sigma = (1.0 + e2 - 2.0 * np.cos(b) * e1) / den
        self.A = 2.0 * ((np.cos(b) - np.sin(b)) - e1) / den  # (1 - sigma) e^b
        self.B = 1.0 + self.sigma

    def __call__(self, x, deriv=0):
        x = np.asarray(x, dtype=float)
        b = self.beta[:, None]
        s = self.sigma[:, None]
        A, B = self.A[:, None], self.B[:, None]
        xx = x.reshape(1, -1)
        bx = b * xx
        ep = np.exp(b * (xx - 1.0))
        em = np.exp(-bx)
        if deriv == -1:
            trig = np.sin(bx) / b + s * (np.cos(bx) - 1.0) / b
            hyp = (A * (ep - np.exp(-b)) - B * (em - 1.0)) / (2.0 * b)
        else:
            k = deriv
            c, sn = np.cos(bx), np.sin(bx)
            # d^k/dx^k (cos - s sin)
            rot = [(c, -s * sn), (-sn, -s * c), (-c, s * sn), (sn, s * c)][k % 4]
            trig = b**k * (rot[0] + rot[1])
            hyp = 0.5 * b**k * (A * ep + (-1) ** k * B * em)
        return (trig - hyp).reshape((self.n,) + x.shape)


# ---------------------------------------------------------------------------
# bump carrying the mean


def _bump_raw(x):
    x = np.asarray(x, dtype=float)
    s = x * (1.0 - x)
    out = np.zeros_like(s)
    ok = s > 1e-3
    out[ok] = np.exp(-1.0 / s[ok])
    return out, s, ok


_BUMP_C = 1.0 / integrate.quad(lambda x: _bump_raw(x)[0], 0.0, 1.0, epsabs=1e-15, epsrel=1e-14, limit=200)[0]


def bump_psi(x, deriv=0):
    """Psi(x) = C exp(-1/(x(1-x))), unit integral, derivatives up to 2."""
    v, s, ok = _bump_raw(x)
    v = _BUMP_C * v
    if deriv == 0:
        return v
    sp = 1.0 - 2.0 * np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = np.where(ok, sp / np.where(ok, s, 1.0) ** 2, 0.0)
        if deriv == 1:
            return v * g1
        g2 = np.where(ok, (-2.0 * s - 2.0 * sp**2) / np.where(ok, s, 1.0) ** 3, 0.0)
        if deriv == 2:
            return v * (g2 + g1**2)
    raise ValueError("bump derivatives available up to order 2")


# ---------------------------------------------------------------------------
# zero-mean orthonormal basis


@dataclass
class PlateBasis:
    """Zero-mean, clamped, L2-orthonormal modes Y_k = sum_j Q[k, j] phi_j."""

    n_modes: int
    raw: BeamModes
    Q: np.ndarray

    def __call__(self, x, deriv=0):
        return np.tensordot(self.Q, self.raw(x, deriv), axes=(1, 0))

    def psi(self, x, deriv=0):
        return bump_psi(x, deriv)

    @cached_property
    def stiffness_gram(self):
        """int Y_j'' Y_k'' (exact up to the plate rule)."""
        x, w = PLATE_RULE
        d2 = self(x, 2)
        return (d2 * w) @ d2.T

    @cached_property
    def psi_coupling(self):
        """int Psi'' Y_k''."""
        x, w = PLATE_RULE
        return self(x, 2) @ (w * bump_psi(x, 2))


def build_plate_basis(n, pool=None):
    """n zero-mean modes from the first n + 1 (or ``pool``) beam eigenfunctions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pool = pool or n + 1
    raw = BeamModes(pool)
    x, w = PLATE_RULE
    P = raw(x)
    G = (P * w) @ P.T
    mu = raw(np.array([1.0]), -1)[:, 0]
    # r = unit-mean element of the span; v_j = phi_j - mu_j r has zero mean
    r = np.linalg.solve(G, mu)
    r = r / (mu @ r)
    cands = np.eye(pool) - np.outer(mu, r)
    basis = []
    for c in cands:
        v = c.copy()
        for q in basis:
            v -= (q @ G @ v) * q
        for q in basis:
            v -= (q @ G @ v) * q
        nrm = np.sqrt(max(v @ G @ v, 0.0))
        if nrm < 1e-8:
            continue
        basis.append(v / nrm)
        if len(basis) == n:
            break
    if len(basis) < n:
        raise DegenerateBasisError(
            f"only {len(basis)} independent zero-mean modes from a pool of {pool}"
        )
    return PlateBasis(n, raw, np.array(basis))


# ---------------------------------------------------------------------------
# displacement fields


@dataclass
class DisplacementField:
    """eta = sum_k coeffs[k] Y_k + mean * Psi at one time instant."""

    basis: PlateBasis
    coeffs: np.ndarray
    mean: float = 0.0

    def __call__(self, x, deriv=0):
        v = np.tensordot(self.coeffs, self.basis(x, deriv), axes=(0, 0))
        if self.mean:
            v = v + self.mean * bump_psi(x, deriv)
        return v


def bump_component(m, basis, kappa=DEFAULT_KAPPA):
    """The field m Psi, checked for admissibility."""
    if abs(m) * bump_psi(np.array([0.5]))[0] >= kappa:
        raise AdmissibilityError(f"|m| * ||Psi||_inf >= kappa for m = {m}")
    return DisplacementField(basis, np.zeros(basis.n_modes), m)


@dataclass
class DisplacementTrajectory:
    """Periodic modal trajectory sampled at t_i = i T / N (endpoint excluded)."""

    basis: PlateBasis
    samples: np.ndarray
    mean: float = 0.0
    period: float = 1.0
    _interp: PeriodicSamples = field(init=False, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self._interp = PeriodicSamples(self.samples, self.period)

    @classmethod
    def constant(cls, basis, n_times, mean=0.0, period=1.0, coeffs=None):
        c = np.zeros(basis.n_modes) if coeffs is None else np.asarray(coeffs, float)
        return cls(basis, np.tile(c, (n_times, 1)), mean, period)

    @property
    def n_times(self):
        return self.samples.shape[0]

    @property
    def times(self):
        return np.arange(self.n_times) * self.period / self.n_times

    def coeffs(self, t, deriv=0):
        return self._interp(t, deriv)

    def at(self, t):
        return DisplacementField(self.basis, self.coeffs(t)[0], self.mean)

    def __call__(self, t, x, deriv=0):
        c = self.coeffs(t)[0]
        return DisplacementField(self.basis, c, self.mean)(x, deriv)

    def dt(self, t, x, deriv=0):
        c = self.coeffs(t, 1)[0]
        return np.tensordot(c, self.basis(x, deriv), axes=(0, 0))

    def values(self, x, deriv=0):
        """Samples on the time grid: shape (N, len(x))."""
        v = self.samples @ self.basis(x, deriv)
        if self.mean:
            v = v + self.mean * bump_psi(x, deriv)
        return v

    def sup_norm(self, x=None):
        x = np.linspace(0.0, 1.0, 201) if x is None else x
        return float(np.max(np.abs(self.values(x))))

    def mollified(self, params):
        from dataclasses import replace

        params = replace(params, period=self.period, epsilon_space=None)
        return DisplacementTrajectory(self.basis, mollify(self.samples, params), self.mean, self.period)


def koiter_energy(eta, params, rule=None):
    x, w = rule or PLATE_RULE
    e2 = eta(x, 2)
    K = params.bending * np.sum(w * e2**2)
    if params.membrane_enabled:
        K += params.membrane * np.sum(w * eta(x, 1) ** 4)
    return float(K)


def koiter_gradient_pairing(eta, xi, params, rule=None):
    """<K'(eta), xi> for clamped xi (callable with derivatives)."""
    x, w = rule or PLATE_RULE
    val = 2.0 * params.bending * np.sum(w * eta(x, 2) * xi(x, 2))
    if params.membrane_enabled:
        val += 4.0 * params.membrane * np.sum(w * eta(x, 1) ** 3 * xi(x, 1))
    return float(val)
