import numpy as np
import pytest
from scipy import integrate

from perifsi.errors import AdmissibilityError
from perifsi.plate import (PLATE_RULE, BeamModes, DisplacementField, DisplacementTrajectory, PlateParams,
                           beam_frequencies, build_plate_basis, bump_component, bump_psi, koiter_energy,
                           koiter_gradient_pairing)

# tabulated roots of cos(b) cosh(b) = 1
BEAM_ROOTS = [4.730040744862704, 7.853204624095838, 10.995607838001671, 14.137165491257464]


def test_beam_frequencies_match_tabulated_roots():
    assert np.allclose(beam_frequencies(4), BEAM_ROOTS, rtol=1e-13)


def test_beam_modes_solve_the_eigenproblem():
    m = BeamModes(5)
    x = np.linspace(0.05, 0.95, 7)
    assert np.allclose(m(x, 4), m.beta[:, None] ** 4 * m(x), rtol=1e-8, atol=1e-8)
    ends = np.array([0.0, 1.0])
    assert np.max(np.abs(m(ends))) < 1e-12
    assert np.max(np.abs(m(ends, 1))) < 1e-10


def test_beam_antiderivative():
    m = BeamModes(3)
    for j in range(3):
        ref = integrate.quad(lambda s: m(np.array([s]))[j, 0], 0, 0.6, epsabs=1e-14)[0]
        assert abs(m(np.array([0.6]), -1)[j, 0] - ref) < 1e-12


def test_plate_basis_orthonormal_zero_mean_clamped():
    b = build_plate_basis(8)
    x, w = PLATE_RULE
    Y = b(x)
    assert np.max(np.abs((Y * w) @ Y.T - np.eye(8))) < 1e-12
    assert np.max(np.abs(Y @ w)) < 1e-13
    ends = np.array([0.0, 1.0])
    assert np.max(np.abs(b(ends))) < 1e-12 and np.max(np.abs(b(ends, 1))) < 1e-10


def test_bump_has_unit_mean_and_consistent_derivatives():
    x, w = PLATE_RULE
    assert abs(np.sum(w * bump_psi(x)) - 1.0) < 1e-12
    s, h = np.array([0.3, 0.55]), 1e-5
    d1 = (bump_psi(s + h) - bump_psi(s - h)) / (2 * h)
    d2 = (bump_psi(s + h) - 2 * bump_psi(s) + bump_psi(s - h)) / h**2
    assert np.allclose(bump_psi(s, 1), d1, rtol=1e-7)
    assert np.allclose(bump_psi(s, 2), d2, rtol=1e-4)


def test_bump_component_guard():
    b = build_plate_basis(3)
    bump_component(0.1, b)
    with pytest.raises(AdmissibilityError):
        bump_component(0.5, b, kappa=0.5)


def test_koiter_energy_quadrature_oracle():
    # bending energy of eta = x^2 (1 - x)^2 computed in closed form: int (eta'')^2 = 4/5
    class Poly:
        def __call__(self, x, deriv=0):
            c = np.polynomial.Polynomial([0, 0, 1, -2, 1])
            return (c.deriv(deriv) if deriv else c)(x)

    p = PlateParams()
    assert abs(koiter_energy(Poly(), p) - p.bending * 0.8) < 1e-13
    pm = PlateParams(membrane_enabled=True)
    # int (eta')^4 = 8/15015 by symbolic integration
    assert abs(koiter_energy(Poly(), pm) - pm.bending * 0.8 - pm.membrane * 8 / 15015) < 1e-13


def test_koiter_gradient_matches_finite_difference():
    b = build_plate_basis(5)
    p = PlateParams(membrane_enabled=True)
    rng = np.random.default_rng(3)
    c, xi = rng.normal(size=5) * 0.01, rng.normal(size=5)
    eta = DisplacementField(b, c, 0.05)
    h = 1e-6
    fd = (koiter_energy(DisplacementField(b, c + h * xi, 0.05), p)
          - koiter_energy(DisplacementField(b, c - h * xi, 0.05), p)) / (2 * h)
    assert abs(fd - koiter_gradient_pairing(eta, DisplacementField(b, xi, 0.0), p)) < 1e-8 * (1 + abs(fd))


def test_stiffness_gram_is_positive_definite():
    b = build_plate_basis(6)
    assert np.linalg.eigvalsh(b.stiffness_gram)[0] > 0


def test_trajectory_time_derivative_of_sampled_sine():
    b = build_plate_basis(2)
    n = 64
    t = np.arange(n) / n
    samples = np.stack([np.sin(2 * np.pi * t), 0 * t], axis=1)
    tr = DisplacementTrajectory(b, samples)
    x = np.array([0.3])
    assert np.allclose(tr.dt(0.1, x), 2 * np.pi * np.cos(2 * np.pi * 0.1) * b(x)[0], atol=1e-12)
    assert abs(tr.sup_norm() - np.max(np.abs(b(np.linspace(0, 1, 201))[0]))) < 1e-12
