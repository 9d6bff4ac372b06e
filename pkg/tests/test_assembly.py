import numpy as np
import pytest

from perifsi.assembly import ForcingSpec, Transport, assemble, hat_functions, mass_matrix
from perifsi.checks import small_basis
from perifsi.fluid_basis import sample_geometry
from perifsi.plate import DisplacementTrajectory, PlateParams


@pytest.fixture(scope="module")
def basis():
    return small_basis()


def _moving(basis, amp=0.05, n=64):
    t = np.arange(n) / n
    rng = np.random.default_rng(5)
    shape = rng.normal(size=basis.n_shell) * amp / np.arange(1, basis.n_shell + 1)
    samples = np.outer(np.sin(2 * np.pi * t), shape) + 0.5 * np.outer(np.cos(4 * np.pi * t), shape[::-1])
    return DisplacementTrajectory(basis.plate, samples, 0.02)


def test_forcing_size_closed_form():
    # vertical profile x(1-x), sin signal: int_0^1 sin^2 = 1/2, int x^2(1-x)^2 = 1/30, y-length 2
    f = ForcingSpec(amplitude=2.0, fluid_profile="vertical", shell_profile="none")
    assert abs(f.size() - 4.0 * 0.5 * 2.0 / 30.0) < 1e-12
    g = ForcingSpec(amplitude=1.0, fluid_profile="none", shell_profile="sine")
    assert abs(g.size() - 0.5 * 0.5) < 1e-12
    assert ForcingSpec().is_zero and ForcingSpec().size() == 0.0


def test_forcing_rejects_unknown_profile():
    with pytest.raises(ValueError):
        ForcingSpec(fluid_profile="nope")


def test_operator_structure(basis):
    delta = _moving(basis)
    rng = np.random.default_rng(0)
    v = Transport(rng.normal(size=(64, basis.n_total)) * 0.1)
    op = assemble(0.3, basis, delta, v, ForcingSpec(amplitude=1.0), PlateParams())
    assert np.allclose(op.M, op.M.T, atol=1e-14)
    assert np.linalg.eigvalsh(op.M)[0] > 0
    assert np.allclose(op.A, op.A.T, atol=1e-13) and np.linalg.eigvalsh(op.A)[0] > 0
    assert np.allclose(op.C, -op.C.T, atol=1e-15)
    x = rng.normal(size=basis.n_total)
    assert abs(x @ op.C @ x) < 1e-14
    assert np.allclose(op.M, mass_matrix(basis, op.geom), atol=1e-13)
    # shell block of M: fluid part plus the plate identity
    S = basis.shell_index
    assert np.all(np.diag(op.M)[S] > 1.0)


def test_flat_geometry_has_no_geometric_terms(basis):
    delta = DisplacementTrajectory.constant(basis.plate, 16)
    op = assemble(0.1, basis, delta, None, ForcingSpec(), PlateParams())
    assert np.max(np.abs(op.B_d)) == 0.0 and np.max(np.abs(op.D_g)) == 0.0
    assert np.max(np.abs(op.F)) == 0.0 and np.max(np.abs(op.k)) == 0.0


def test_reynolds_identity_for_mass(basis):
    # d/dt M = B_d + B_d^T + G on a moving geometry with no transport
    delta = _moving(basis)
    h = 1e-5
    t = 0.37
    Mp = mass_matrix(basis, sample_geometry(basis, delta, t + h))
    Mm = mass_matrix(basis, sample_geometry(basis, delta, t - h))
    op = assemble(t, basis, delta, None, ForcingSpec(), PlateParams())
    assert np.max(np.abs((Mp - Mm) / (2 * h) - (op.B_d + op.B_d.T + op.G))) < 1e-8


def test_forcing_is_linear_in_amplitude(basis):
    delta = _moving(basis)
    f1 = assemble(0.2, basis, delta, None, ForcingSpec(amplitude=1.0), PlateParams()).F
    f3 = assemble(0.2, basis, delta, None, ForcingSpec(amplitude=3.0), PlateParams()).F
    assert np.allclose(f3, 3 * f1, rtol=1e-13, atol=1e-15)


def test_hat_functions_partition_unity():
    phi, dphi = hat_functions(8, 1.0)
    t = np.linspace(0, 1, 37)
    assert np.allclose(sum(phi(t, j) for j in range(8)), 1.0)
    assert np.allclose(sum(dphi(t + 1e-9, j) for j in range(8)), 0.0)
