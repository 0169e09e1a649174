import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgmhd.forms import PhysicalParams
from wgmhd.mesh import build_structured_mesh
from wgmhd.polybasis import integrate
from wgmhd.verify import (
    ConvergenceTable,
    ErrorReport,
    TableRow,
    compute_errors,
    convergence_study,
    derivative_errors,
    emit_report,
    fd_forcing,
    fill_orders,
    interpolate_case,
    manufactured_case,
    observed_orders,
    parse_csv,
    table_to_markdown,
)
from wgmhd.weakops import WGScalarField, WGVectorField


@pytest.fixture
def points(rng):
    return rng.uniform(0.02, 0.98, (100, 2))


def test_unknown_case():
    with pytest.raises(ValueError):
        manufactured_case(3)


def test_example1_center_value():
    assert manufactured_case(1).u.value(np.array([0.5, 0.5]))[0] == 0.0


@pytest.mark.parametrize("cid", [1, 2])
def test_exact_fields_divergence_free(cid, points):
    c = manufactured_case(cid)
    for fld in (c.u, c.B):
        g = fld.grad(points)
        assert np.abs(g[..., 0, 0] + g[..., 1, 1]).max() <= 1e-12


@pytest.mark.parametrize("cid", [1, 2])
def test_boundary_behaviour(cid):
    c = manufactured_case(cid)
    t = np.linspace(0, 1, 41)
    sides = [(np.c_[t, 0 * t], [0, -1]), (np.c_[t, 1 + 0 * t], [0, 1]),
             (np.c_[0 * t, t], [-1, 0]), (np.c_[1 + 0 * t, t], [1, 0])]
    for x, n in sides:
        B = c.B.value(x)
        assert np.abs(B[:, 0] * n[1] - B[:, 1] * n[0]).max() < 1e-14
        assert np.abs(c.r.value(x)).max() < 1e-14
        u = c.u.value(x)
        assert np.abs(u @ np.array(n, float)).max() < 1e-14
        if c.u_vanishes_on_boundary:
            assert np.abs(u).max() < 1e-14


@pytest.mark.parametrize("cid", [1, 2])
def test_pressure_mean_zero(cid):
    c = manufactured_case(cid)
    m = build_structured_mesh(4)
    assert abs(integrate(m, c.p.value, degree=8)) < 1e-15
    assert abs(integrate(m, c.r.value, degree=8)) < 1e-15


@pytest.mark.parametrize("cid", [1, 2])
def test_derivatives_against_finite_differences(cid, points):
    errs = derivative_errors(manufactured_case(cid), points)
    assert max(errs.values()) <= 1e-6, errs


@pytest.mark.parametrize("cid", [1, 2])
@pytest.mark.parametrize("params", [PhysicalParams(), PhysicalParams(Ha=2.0, N=0.5, Rm=3.0)])
def test_forcing_against_finite_differences(cid, params, rng):
    c = manufactured_case(cid, params)
    x = rng.uniform(0.05, 0.95, (20, 2))
    f_fd, g_fd = fd_forcing(c, x)
    assert np.abs(c.f(x) - f_fd).max() <= 1e-6 * np.abs(f_fd).max()
    assert np.abs(c.g(x) - g_fd).max() <= 1e-6 * np.abs(g_fd).max()


@pytest.mark.parametrize("k", [1, 2])
def test_interpolant_rates(k):
    """The error pipeline applied to the interpolants shows the approximation orders."""
    c = manufactured_case(1)
    rows = []
    for n in (4, 8, 16):
        u, B, p, r = interpolate_case(c, build_structured_mesh(n), k)
        rows.append(TableRow(n, compute_errors(type("S", (), dict(u=u, B=B, p=p, r=r))(), c)))
    fill_orders(rows)
    o = rows[-1].orders
    assert o["u_l2"] == pytest.approx(k + 1, abs=0.15)
    assert o["B_l2"] == pytest.approx(k + 1, abs=0.15)
    assert o["u_grad_w"] == pytest.approx(k, abs=0.15)
    assert o["B_curl_w"] == pytest.approx(k, abs=0.15)
    assert o["p_l2"] == pytest.approx(k, abs=0.15)


def test_zero_solution_has_unit_errors():
    m = build_structured_mesh(4)
    z = type("S", (), dict(u=WGVectorField.zeros(m, 1), B=WGVectorField.zeros(m, 1),
                           p=WGScalarField.zeros(m, 0, 1), r=WGScalarField.zeros(m, 0, 1)))()
    e = compute_errors(z, manufactured_case(1))
    for name in ("u_l2", "u_grad_w", "u_grad_h", "B_l2", "B_curl_w", "p_l2", "r_l2_raw"):
        assert getattr(e, name) == pytest.approx(1.0, rel=1e-12), name
    # the pressure-gradient columns carry the factor h_K
    assert e.p_grad_w == pytest.approx(m.h, rel=1e-12)
    assert e.r_grad_w == pytest.approx(m.h, rel=1e-12)


def test_error_report_validation():
    vals = dict.fromkeys(ErrorReport.names(), 0.1)
    ErrorReport(**vals)
    for bad in (-1.0, math.nan, math.inf):
        with pytest.raises(ValueError):
            ErrorReport(**{**vals, "p_l2": bad})


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-12, 1e3), st.floats(1e-12, 1e3), st.floats(1e-6, 1e6))
def test_orders_scale_invariant(a, b, s):
    assert observed_orders(a * s, b * s) == pytest.approx(observed_orders(a, b), abs=1e-9)


def test_orders_only_between_halved_meshes():
    mk = lambda v: ErrorReport(**dict.fromkeys(ErrorReport.names(), v))
    rows = [TableRow(4, mk(0.4)), TableRow(8, mk(0.1)), TableRow(12, mk(0.05)), TableRow(24, None),
            TableRow(48, mk(0.01))]
    fill_orders(rows)
    assert rows[1].orders["u_l2"] == pytest.approx(2.0)
    assert rows[2].orders == {} and rows[3].orders == {} and rows[4].orders == {}
    assert math.isnan(observed_orders(0.0, 1.0))


def test_study_rejects_bad_mesh_lists():
    for bad in ([], [4, 4], [8, 4], [0, 2]):
        with pytest.raises(ValueError):
            convergence_study(1, 1, bad)


@pytest.fixture(scope="module")
def small_table():
    return convergence_study(1, 1, [2, 4, 8])


def test_study_and_csv_round_trip(small_table, tmp_path):
    assert [r.n for r in small_table.rows] == [2, 4, 8]
    assert small_table.rows[2].errors.u_l2 == pytest.approx(1.5224e-01, rel=0.05)
    path = tmp_path / "t.csv"
    text = emit_report(small_table, "csv", path)
    assert path.read_text() == text
    back = parse_csv(text)
    assert back.k == 1 and back.example == 1 and back.commit == small_table.commit
    for name in ErrorReport.names():
        assert np.allclose(back.column(name), small_table.column(name), rtol=1e-4)
    assert np.allclose(back.order_column("u_l2"), small_table.order_column("u_l2"), atol=0.005)
    assert parse_csv(emit_report(back, "csv")) == back


def test_markdown(small_table):
    md = table_to_markdown(small_table)
    assert "| 8×8 |" in md and "div Uh" in md
    assert emit_report(small_table, "md") == md
    with pytest.raises(ValueError):
        emit_report(small_table, "xlsx")


def test_bad_csv_header():
    with pytest.raises(ValueError):
        parse_csv("a,b\n1,2\n")


def test_failure_rows_recorded():
    t = convergence_study(1, 1, [2, 4], max_iter=1, tol=1e-14)
    assert all(r.failure.startswith("ConvergenceError") for r in t.rows)
    assert "ConvergenceError" in table_to_markdown(t)
    assert isinstance(t, ConvergenceTable)
