import numpy as np
import pytest
import scipy.sparse as sp

from wgmhd.checks import random_vector_field
from wgmhd.forms import FormContext, PhysicalParams, form_a, norm_V
from wgmhd.mesh import build_structured_mesh
from wgmhd.system import (
    SingularSystemError,
    assemble_oseen,
    build_dofmap,
    condense,
    dump_matrix,
    recover,
    solve_linear,
)
from wgmhd.verify import manufactured_case
from wgmhd.weakops import WGVectorField


def _zero(x):
    return np.zeros(x.shape[:-1] + (2,))


def _step(n, k, rng=None, case=1):
    mesh = build_structured_mesh(n)
    params = PhysicalParams(k=k)
    ctx = FormContext(mesh, params)
    mc = manufactured_case(case, params)
    if rng is None:
        u, B = WGVectorField.zeros(mesh, k), WGVectorField.zeros(mesh, k)
    else:
        u = random_vector_field(mesh, k, rng, "zero") * 0.1
        B = random_vector_field(mesh, k, rng, "tangential") * 0.1
    return ctx, assemble_oseen(ctx, u, B, mc.f, mc.g)


def test_dof_counts():
    dm = build_dofmap(build_structured_mesh(4), 1)
    assert dm.sizes["u_o"] == 192 and dm.sizes["u_b"] == 160
    assert dm.sizes["B_b"] == 192
    assert dm.sizes["p_o"] + dm.sizes["p_b"] + dm.sizes["lambda"] == 145
    assert dm.sizes["r_b"] == 2 * 40
    assert dm.ndof == sum(dm.sizes.values())
    with pytest.raises(ValueError):
        build_dofmap(build_structured_mesh(2), 0)


def test_dofmap_round_trip(rng):
    mesh = build_structured_mesh(3)
    dm = build_dofmap(mesh, 2)
    x = rng.standard_normal(dm.ndof)
    u, B, p, r, lam = dm.to_fields(x)
    assert np.allclose(dm.from_fields(u, B, p, r, lam), x)
    b = mesh.boundary
    assert np.all(u.traces[b] == 0) and np.all(r.traces[b] == 0)
    n = mesh.edge_normals[b]
    tang = B.traces[b, 0] * n[:, 1, None] - B.traces[b, 1] * n[:, 0, None]
    assert np.abs(tang).max() < 1e-15
    assert "u_o" in dm.describe(0)


def test_zero_data_gives_zero_rhs_and_solution():
    mesh = build_structured_mesh(2)
    ctx = FormContext(mesh, PhysicalParams())
    z = WGVectorField.zeros(mesh, 1)
    sys = assemble_oseen(ctx, z, z, _zero, _zero)
    assert not np.any(sys.rhs)
    assert not np.any(solve_linear(sys))
    csys = condense(sys)
    assert not np.any(csys.rhs)
    assert not np.any(recover(csys, np.zeros(csys.matrix.shape[0])))


def test_structure(rng):
    ctx, sys = _step(3, 1, rng)
    dm = sys.dofmap
    A = sys.matrix.tocsr()
    assert A.shape == (dm.ndof, dm.ndof)
    pattern = A.copy()
    pattern.data[:] = 1.0
    assert (pattern - pattern.T).count_nonzero() == 0
    off = dm.offsets
    V = np.r_[off["u_o"]: off["u_o"] + dm.sizes["u_o"], off["u_b"]: off["u_b"] + dm.sizes["u_b"]]
    Q = np.r_[off["p_o"]: off["p_o"] + dm.sizes["p_o"], off["p_b"]: off["p_b"] + dm.sizes["p_b"]]
    Bvq = A[V][:, Q].toarray()
    Bqv = A[Q][:, V].toarray()
    assert np.allclose(Bvq, -Bqv.T, atol=1e-14)


def test_velocity_block_matches_form_a(rng):
    ctx, _ = _step(3, 2)
    mesh = ctx.mesh
    dm = build_dofmap(mesh, 2)
    z = WGVectorField.zeros(mesh, 2)
    sys = assemble_oseen(ctx, z, z, _zero, _zero, dm)
    for _ in range(5):
        v = random_vector_field(mesh, 2, rng, "zero")
        x = dm.from_fields(v, z, *dm.to_fields(np.zeros(dm.ndof))[2:4])
        quad = x @ (sys.matrix @ x)
        assert quad == pytest.approx(norm_V(ctx, v) ** 2 / ctx.params.Ha**2, rel=1e-12)
        assert quad == pytest.approx(form_a(ctx, v, v), rel=1e-12)


def test_step_residual():
    _, sys = _step(2, 1)
    x = solve_linear(sys)
    assert np.linalg.norm(sys.matrix @ x - sys.rhs) <= 1e-10 * np.linalg.norm(sys.rhs)


def test_spd_block_solve(rng):
    M = rng.standard_normal((30, 30))
    A = sp.csc_matrix(M @ M.T + 30 * np.eye(30))
    b = rng.standard_normal(30)
    x = solve_linear((A, b))
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


@pytest.mark.parametrize("n", [2, 4])
@pytest.mark.parametrize("k", [1, 2])
def test_condensation_equivalence(rng, n, k):
    ctx, sys = _step(n, k, rng)
    full = solve_linear(sys)
    csys = condense(sys)
    cond = solve_linear(csys)
    assert np.abs(full - cond).max() <= 1e-9
    assert csys.matrix.shape[0] == sys.dofmap.n_trace < sys.dofmap.ndof


def test_deterministic(rng):
    state = np.random.default_rng(5)
    _, s1 = _step(3, 2, state)
    _, s2 = _step(3, 2, np.random.default_rng(5))
    assert (s1.matrix != s2.matrix).nnz == 0
    assert np.array_equal(solve_linear(s1), solve_linear(s2))


def test_singular_matrix_reported():
    A = sp.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularSystemError):
        solve_linear((A, np.array([1.0, 1.0])))


def test_nan_forcing_rejected():
    mesh = build_structured_mesh(2)
    ctx = FormContext(mesh, PhysicalParams())
    z = WGVectorField.zeros(mesh, 1)
    with pytest.raises(ValueError):
        assemble_oseen(ctx, z, z, lambda x: np.full(x.shape[:-1] + (2,), np.nan), _zero)


def test_mesh_mismatch_rejected():
    ctx = FormContext(build_structured_mesh(2), PhysicalParams())
    z = WGVectorField.zeros(build_structured_mesh(3), 1)
    with pytest.raises(ValueError):
        assemble_oseen(ctx, z, z, _zero, _zero)


def test_dump_matrix(tmp_path):
    p = tmp_path / "A.txt"
    dump_matrix(sp.csr_matrix(np.array([[1.0, 0.0], [2.0, 3.0]])), p)
    lines = p.read_text().split("\n")
    assert lines[0] == "2 2 3" and lines[1] == "0 0 1" and lines[3] == "1 1 3"
