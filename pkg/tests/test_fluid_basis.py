import numpy as np
import pytest
import sympy as sp

from perifsi.checks import small_basis
from perifsi.errors import PreconditionError
from perifsi.fluid_basis import (GeometrySample, clamped_z_family, interleave, lift_z, pushforward_basis,
                                 solve_biharmonic_fd, solve_stokes_extension)
from perifsi.geometry import divergence
from perifsi.plate import build_plate_basis


def _manufactured():
    """psi = (x(1-x))^2 (1+z)^2 exp(z): clamped on three edges, nonzero data on top."""
    x, z = sp.symbols("x z")
    psi = (x * (1 - x)) ** 2 * (1 + z) ** 2 * sp.exp(z)
    lap = lambda f: sp.diff(f, x, 2) + sp.diff(f, z, 2)
    src = sp.simplify(lap(lap(psi)))
    f = sp.lambdify((x, z), psi, "numpy")
    top = sp.lambdify(x, psi.subs(z, 0), "numpy")
    top_dz = sp.lambdify(x, sp.diff(psi, z).subs(z, 0), "numpy")
    source = sp.lambdify((x, z), src, "numpy")
    return f, top, top_dz, source


def test_biharmonic_fd_converges_at_second_order():
    f, top, top_dz, source = _manufactured()
    errs = []
    for n in (16, 32):
        xs, zs, psi = solve_biharmonic_fd(n, top, top_dz, source)
        X, Z = np.meshgrid(xs, zs, indexing="ij")
        errs.append(np.max(np.abs(psi - f(X, Z))))
    assert errs[1] < 1e-4
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_clamped_z_family_and_lift_boundary_values():
    q = clamped_z_family(5)
    ends = np.array([-1.0, 0.0])
    assert np.max(np.abs(q(ends))) < 1e-14
    assert np.max(np.abs(q(ends, 1))) < 1e-13
    w = lift_z()
    assert np.allclose(w(ends)[0], [0.0, 1.0]) and np.allclose(w(ends, 1)[0], [0.0, 0.0])


def test_interleave_alternates_then_appends():
    order = interleave(2, 4)
    assert order == [("shell", 0), ("fluid", 0), ("shell", 1), ("fluid", 1), ("fluid", 2), ("fluid", 3)]


def test_extension_requires_zero_mean_mode():
    plate = build_plate_basis(3)
    plate.Q[0] += 0.1 * np.eye(plate.Q.shape[1])[0]  # spoil the zero mean of mode 0
    with pytest.raises(PreconditionError):
        solve_stokes_extension(plate, 0, grid=16)


@pytest.fixture(scope="module")
def basis():
    return small_basis()


def test_reference_fields_are_divergence_free(basis):
    assert np.max(np.abs(basis.gradU[:, 0, 0] + basis.gradU[:, 1, 1])) < 1e-11


def test_boundary_traces(basis):
    q = basis.quad
    for k, f in enumerate(basis.fields):
        top, _ = f.velocity(q.x, np.array([0.0]))
        bottom, _ = f.velocity(q.x, np.array([-1.0]))
        sides, _ = f.velocity(np.array([0.0, 1.0]), q.z)
        assert np.max(np.abs(top[0])) < 1e-12
        assert np.max(np.abs(top[1, :, 0] - basis.trace[k])) < 1e-12
        assert np.max(np.abs(bottom)) < 1e-12 and np.max(np.abs(sides)) < 1e-12


def test_interior_modes_orthonormal(basis):
    q = basis.quad
    interior = [k for k, (kind, _) in enumerate(basis.order) if kind == "fluid"]
    U = basis.U[interior]
    G = np.einsum("aixz,bixz,xz->ab", U, U, q.weights)
    assert np.max(np.abs(G - np.eye(len(interior)))) < 1e-11


def test_pushforward_is_divergence_free_and_time_derivative_consistent(basis):
    rng = np.random.default_rng(0)
    x = basis.quad.x
    c, ct = rng.normal(size=basis.n_shell) * 0.02, rng.normal(size=basis.n_shell) * 0.1

    def geom(s):
        cc = c + s * ct
        return GeometrySample(*(cc @ basis.plate_x[k] for k in range(3)), ct @ basis.plate_x[0],
                              ct @ basis.plate_x[1])

    pb = pushforward_basis(basis, geom(0.0))
    assert np.max(np.abs(pb.grad[:, 0, 0] + pb.grad[:, 1, 1])) < 1e-11
    # Eulerian derivative at a fixed physical point: compare with the material
    # derivative minus convection by the mesh velocity
    h = 1e-6
    up, um = pushforward_basis(basis, geom(h), False), pushforward_basis(basis, geom(-h), False)
    z = basis.quad.z[None, :]
    mesh_vel = (1.0 + z) * (ct @ basis.plate_x[0])[:, None]
    material = (up.u - um.u) / (2 * h)
    eulerian = material - pb.grad[:, :, 1] * mesh_vel
    assert np.max(np.abs(eulerian - pb.dt)) < 1e-6


def test_stokes_extension_is_close_to_biharmonic(basis):
    # fitted correction must reproduce the FD solution to about one percent
    f = basis.extensions[0]
    xs = np.linspace(0, 1, 17)
    zs = np.linspace(-1, 0, 17)
    top = lambda s: f.psi(s, np.array([0.0]))[:, 0]
    _, _, ref = solve_biharmonic_fd(32, top)
    fitted = f.psi(xs, zs)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(fitted - ref[::2, ::2])) / scale < 0.05
