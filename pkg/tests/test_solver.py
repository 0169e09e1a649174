import numpy as np
import pytest

from wgmhd.forms import PhysicalParams
from wgmhd.mesh import build_structured_mesh
from wgmhd.solver import (
    ConvergenceError,
    SolverConfig,
    divergence_metrics,
    scheme_residuals,
    solve_mhd,
)
from wgmhd.verify import compute_errors, manufactured_case
from wgmhd.weakops import WGVectorField, project_edges, project_interior


def _zero(x):
    return np.zeros(x.shape[:-1] + (2,))


@pytest.fixture(scope="module")
def sol_ex1():
    return solve_mhd(SolverConfig(n=8, k=1, case=1))


def test_config_validation():
    for bad in (dict(tol=0), dict(max_iter=0), dict(strategy="newton"), dict(tau_length="x"),
                dict(k=2, params=PhysicalParams(k=1))):
        with pytest.raises(ValueError):
            SolverConfig(n=4, **bad)


def test_zero_forcing_gives_zero_solution():
    sol = solve_mhd(SolverConfig(n=4, k=1, case=None, f=_zero, g=_zero))
    assert sol.iterations == 1
    for fld in (sol.u, sol.B, sol.p, sol.r):
        assert not np.any(fld.interior) and not np.any(fld.traces)


def test_example1_n8(sol_ex1):
    err = compute_errors(sol_ex1, manufactured_case(1))
    assert err.u_l2 == pytest.approx(1.5224e-01, rel=0.05)
    assert sol_ex1.increments[-1] < 1e-8


def test_scheme_residual_small(sol_ex1):
    res = scheme_residuals(sol_ex1)
    assert set(res) == {"momentum", "continuity", "induction", "magnetic_divergence"}
    assert max(res.values()) <= 10 * 1e-8


def test_divergence_free_and_mean_zero(sol_ex1):
    for fld in (sol_ex1.u, sol_ex1.B):
        div, jump = divergence_metrics(fld)
        assert div <= 1e-10 and jump <= 1e-10
    d = sol_ex1.ctx.disc
    assert abs(np.einsum("kq,kq->", d.qw, d.eval_interior(sol_ex1.p.interior))) <= 1e-12


def test_divergence_metric_detects_sources():
    mesh = build_structured_mesh(4)
    f = lambda x: np.stack([x[..., 0], 0 * x[..., 0]], axis=-1)
    v = WGVectorField(mesh, project_interior(mesh, f, 1), project_edges(mesh, f, 1), 1)
    div, _ = divergence_metrics(v)
    # |div v|_{0,K} / h_K = sqrt(|K|) / h_K
    assert div == pytest.approx(np.sqrt(mesh.area[0]) / mesh.diameter[0], rel=1e-12)
    assert divergence_metrics(WGVectorField.zeros(mesh, 1)) == (0.0, 0.0)


@pytest.mark.parametrize("case", [1, 2])
def test_condensation_transparent(case):
    on = solve_mhd(SolverConfig(n=4, k=2, case=case, condense=True))
    off = solve_mhd(SolverConfig(n=4, k=2, case=case, condense=False))
    mc = manufactured_case(case)
    e_on, e_off = compute_errors(on, mc).as_dict(), compute_errors(off, mc).as_dict()
    for name in e_on:
        assert abs(e_on[name] - e_off[name]) <= 1e-8, name
    assert np.abs(on.u.interior - off.u.interior).max() <= 1e-8


def test_decoupled_strategy_agrees():
    a = solve_mhd(SolverConfig(n=4, k=1, case=2))
    b = solve_mhd(SolverConfig(n=4, k=1, case=2, strategy="decoupled"))
    for x, y in ((a.u, b.u), (a.B, b.B), (a.p, b.p), (a.r, b.r)):
        assert np.abs(x.interior - y.interior).max() <= 1e-7


def test_non_convergence_reports_history():
    with pytest.raises(ConvergenceError) as exc:
        solve_mhd(SolverConfig(n=4, k=1, case=1, max_iter=1, tol=1e-14))
    assert len(exc.value.history) == 1


def test_monotone_increments(sol_ex1):
    inc = sol_ex1.increments
    assert all(b < a for a, b in zip(inc[1:], inc[2:]))
    assert len(inc) == sol_ex1.iterations <= 25


def test_deterministic():
    a = solve_mhd(SolverConfig(n=3, k=1, case=2))
    b = solve_mhd(SolverConfig(n=3, k=1, case=2))
    assert np.array_equal(a.u.interior, b.u.interior) and np.array_equal(a.p.traces, b.p.traces)


def test_example2_boundary_lift():
    sol = solve_mhd(SolverConfig(n=4, k=1, case=2))
    b = sol.mesh.boundary
    assert np.allclose(sol.u.traces[b], sol.u_boundary[b], atol=0)
    assert np.abs(sol.u_boundary[b]).max() > 0.1
