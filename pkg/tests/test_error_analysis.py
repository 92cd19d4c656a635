import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutnitsche import (ConvergenceTable, LineLevelSet, case_linear_patch, case_radial, case_trig_jump,
                        energy_error, eoc, l2_error)
from cutnitsche.error_analysis import ROUNDOFF_FLOOR, Row, error_quadrature, h1_errors, weighted_h2_seminorm
from cutnitsche.forms import ExactSolution, compute_weights
from cutnitsche.mesh import Box

import oracles
from conftest import make_setup


def constant(c):
    return ExactSolution(lambda x: np.full(len(x), c), lambda x: np.zeros_like(x),
                         lambda x: np.full(len(x), c), lambda x: np.zeros_like(x))


# ----------------------------------------------------------------------------
# rates
# ----------------------------------------------------------------------------

def test_eoc_examples():
    assert eoc([1e-2, 2.5e-3], [0.1, 0.05]) == [pytest.approx(2.0)]
    assert eoc([8e-3, 1e-3], [0.2, 0.1]) == [pytest.approx(3.0)]
    assert eoc([0.3, 0.3, 0.3], [0.4, 0.2, 0.1]) == [0.0, 0.0]


def test_eoc_undefined_entries():
    r = eoc([1e-3, 0.0, 1e-4], [0.1, 0.05, 0.025])
    assert math.isnan(r[0]) and math.isnan(r[1])
    r = eoc([1e-3, -1.0], [0.1, 0.05])
    assert math.isnan(r[0])
    r = eoc([1e-12, 1e-13], [0.1, 0.05], floor=ROUNDOFF_FLOOR)
    assert math.isnan(r[0])


def test_eoc_bad_input():
    with pytest.raises(ValueError):
        eoc([1.0], [0.1])
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [0.1])
    with pytest.raises(ValueError):
        eoc([1.0, 0.5], [0.1, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(1e-3, 1e2), st.floats(1e-3, 0.5))
def test_eoc_recovers_power_law(p, C, h0):
    hs = h0 / 2.0 ** np.arange(4)
    rates = eoc(C * hs ** p, hs)
    assert np.allclose(rates, p, rtol=1e-10)


# ----------------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------------

@pytest.mark.parametrize("c", [1.0, 2.5])
def test_l2_of_constant(c, circle_p1):
    s = circle_p1
    eq = error_quadrature(s.space, s.ls, 1)
    assert l2_error(s.space, np.zeros(s.space.ndof), constant(c), eq) == pytest.approx(2 * c, rel=1e-12)


def test_energy_of_x_on_unit_square():
    s = make_setup(4, 1, box=Box.square(0.0, 1.0), ls=LineLevelSet.vertical(5.0))
    assert len(s.cl.cut_cells) == 0
    ex = ExactSolution(lambda x: x[:, 0], lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]),
                       lambda x: x[:, 0], lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    eq = error_quadrature(s.space, s.ls, 1)
    e = energy_error(s.space, np.zeros(s.space.ndof), ex, eq, compute_weights(1, 1), (1.0, 1.0))
    assert e == pytest.approx(1.0, rel=1e-13)


def linear_pair():
    a1, a2 = np.array([0.3, -1.2, 0.7]), np.array([-0.4, 0.5, 2.0])

    def lin(a):
        return lambda x: a[0] + a[1] * x[:, 0] + a[2] * x[:, 1]

    def grad(a):
        return lambda x: np.broadcast_to(a[1:], x.shape).copy()

    return ExactSolution(lin(a1), grad(a1), lin(a2), grad(a2))


def test_interpolated_linear_has_zero_error(line_p1):
    s = line_p1
    ex = linear_pair()
    u = s.space.interpolate(ex.u1, ex.u2)
    eq = error_quadrature(s.space, s.ls, 1)
    assert l2_error(s.space, u, ex, eq) <= 1e-12
    e = energy_error(s.space, u, ex, eq, compute_weights(1.0, 3.0), (1.0, 3.0))
    assert e <= 1e-10


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6))
def test_errors_homogeneous(scale, line_p1):
    s = line_p1
    ex = linear_pair()
    base = s.space.interpolate(ex.u1, ex.u2)
    pert = np.sin(np.arange(s.space.ndof))
    eq = error_quadrature(s.space, s.ls, 1)
    w = compute_weights(1.0, 3.0)
    ref_l2 = l2_error(s.space, base + pert, ex, eq)
    ref_en = energy_error(s.space, base + pert, ex, eq, w, (1.0, 3.0))
    assert l2_error(s.space, base + scale * pert, ex, eq) == pytest.approx(abs(scale) * ref_l2, rel=1e-9)
    assert energy_error(s.space, base + scale * pert, ex, eq, w, (1.0, 3.0)) == pytest.approx(
        abs(scale) * ref_en, rel=1e-9)


def test_energy_agrees_with_independent_norm(circle_p1):
    # with a zero exact solution the energy error is the discrete energy norm
    s = circle_p1
    zero = constant(0.0)
    rng = np.random.default_rng(2)
    v = rng.normal(size=s.space.ndof)
    mu = (1.0, 50.0)
    w = compute_weights(*mu)
    e = energy_error(s.space, v, zero, s.quad, w, mu)
    ref = oracles.energy_norm_sq(s.space, s.quad, v, mu[0], mu[1], w.c0)
    assert e ** 2 == pytest.approx(ref, rel=1e-10)


def test_penalty_free_energy_needs_ghost(circle_p1):
    s = circle_p1
    w = compute_weights(1, 1)
    z = np.zeros(s.space.ndof)
    with pytest.raises(ValueError):
        energy_error(s.space, z, constant(1.0), s.quad, w, (1, 1), "penalty-free")
    with pytest.raises(ValueError):
        energy_error(s.space, z, constant(1.0), s.quad, w, (1, 1), "symmetric")
    with pytest.raises(ValueError):
        l2_error(s.space, z, None, s.quad)
    base = energy_error(s.space, z, constant(1.0), s.quad, w, (1, 1))
    with_ghost = energy_error(s.space, z, constant(1.0), s.quad, w, (1, 1), "penalty-free", 0.25)
    assert with_ghost == pytest.approx(math.sqrt(base ** 2 + 0.25))


def test_h1_errors_per_side(circle_p1):
    s = circle_p1
    case = case_radial(1.0, 4.0)
    eq = error_quadrature(s.space, s.ls, 1)
    e1, e2 = h1_errors(s.space, np.zeros(s.space.ndof), case.exact, eq)
    # |grad r^2 / mu|^2 = 4 r^2 / mu^2 integrated over the disk and its complement
    r0 = 0.5
    ref1 = math.sqrt(4 * math.pi * r0 ** 4 / 2)
    ref2 = math.sqrt((4 / 16) * (8 / 3 - math.pi * r0 ** 4 / 2))
    assert e1 == pytest.approx(ref1, rel=1e-10)
    assert e2 == pytest.approx(ref2, rel=1e-10)


def test_weighted_h2_seminorm_radial(circle_p1):
    s = circle_p1
    mu = (1.0, 4.0)
    case = case_radial(*mu)
    a1 = math.pi * 0.25
    val = weighted_h2_seminorm(case.exact, s.quad, mu)
    assert val == pytest.approx(math.sqrt(8 * a1 / mu[0]) + math.sqrt(8 * (4 - a1) / mu[1]), rel=1e-10)


# ----------------------------------------------------------------------------
# manufactured cases
# ----------------------------------------------------------------------------

@pytest.mark.parametrize("mu", [(1.0, 1.0), (1.0, 1000.0), (10.0, 0.1)])
def test_self_checks(mu):
    for make in (case_radial, case_trig_jump):
        res = make(*mu).self_check()
        assert all(v <= 1e-12 for v in res.values())
    case_linear_patch().self_check()


def test_radial_jumps_vanish():
    mu1, mu2, r0 = 2.0, 7.0, 0.5
    case = case_radial(mu1, mu2, r0)
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    x = r0 * np.column_stack([np.cos(th), np.sin(th)])
    ex = case.exact
    assert np.abs(ex.u1(x) - ex.u2(x)).max() <= 1e-14
    n = x / r0
    flux = np.einsum("pa,pa->p", mu1 * ex.grad1(x) - mu2 * ex.grad2(x), n)
    assert np.abs(flux).max() <= 1e-14
    assert np.allclose(ex.u1(x), r0 ** 2 / mu1, rtol=1e-15)


def test_radial_source_from_finite_differences():
    mu1, mu2 = 3.0, 0.5
    case = case_radial(mu1, mu2)
    x = np.array([[0.1, 0.2], [0.8, -0.6]])
    for p, side in zip(x, (1, 2)):
        u = case.exact.value(side)
        lap = oracles.laplacian_fd(lambda y: u(y[None])[0], p)
        assert -case.data.mu(side) * lap == pytest.approx(-4.0, rel=1e-6)
    assert np.all(case.data.source(1)(x) == -4.0)


def test_trig_dirichlet_jump_value():
    r0 = 0.37
    case = case_trig_jump(1.0, 1.0, r0)
    assert case.data.g_D(np.array([[r0, 0.0]]))[0] == pytest.approx(-math.cos(math.pi * r0), abs=1e-15)


def test_trig_source_matches_laplacian():
    mu1, mu2 = 1.0, 10.0
    case = case_trig_jump(mu1, mu2)
    rng = np.random.default_rng(9)
    x = rng.uniform(-1, 1, (100, 2))
    for side, mu in ((1, mu1), (2, mu2)):
        f = case.data.source(side)(x)
        u = case.exact.value(side)(x)
        assert np.allclose(f, 2 * math.pi ** 2 * mu * u, rtol=1e-13, atol=1e-13)
    p = x[0]
    lap = oracles.laplacian_fd(lambda y: case.exact.u1(y[None])[0], p)
    assert -lap == pytest.approx(2 * math.pi ** 2 * case.exact.u1(p[None])[0], abs=1e-5)
    g = oracles.gradient_fd(case.exact.u2, p[None])
    assert np.allclose(g, case.exact.grad2(p[None]), atol=1e-8)


def test_trig_jumps_nonzero_for_equal_coefficients():
    case = case_trig_jump(1.0, 1.0)
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    x = 0.5 * np.column_stack([np.cos(th), np.sin(th)])
    assert np.abs(case.data.g_D(x)).max() > 0.1
    assert np.abs(case.data.g_N(x, x / 0.5)).max() > 0.1


@pytest.mark.parametrize("r0", [0.0, -0.1, 1.0, 1.5])
def test_radius_out_of_range(r0):
    with pytest.raises(ValueError):
        case_radial(1.0, 1.0, r0)
    with pytest.raises(ValueError):
        case_trig_jump(1.0, 1.0, r0)


# ----------------------------------------------------------------------------
# table
# ----------------------------------------------------------------------------

def sample_table():
    t = ConvergenceTable(meta={"case": "radial"})
    rng = np.random.default_rng(0)
    for level in range(4):
        h = 0.25 / 2 ** level
        t.add(Row(level, h, 100 * 4 ** level, 0.3 * h ** 2 * (1 + 0.01 * rng.random()),
                  1.7 * h * (1 + 0.01 * rng.random()), 0.1 * h, 0.2 * h, cond=1e3 / h ** 2))
    return t


def test_table_rates_and_header():
    t = sample_table()
    header = t.to_csv().splitlines()[0]
    assert header == "level,h,ndof,err_l2,err_energy,err_h1_1,err_h1_2,eoc_l2,eoc_energy,cond"
    assert math.isnan(t.rows[0].eoc_l2)
    assert np.allclose(t.column("eoc_l2")[1:], 2.0, atol=0.02)
    assert np.allclose(t.column("eoc_energy")[1:], 1.0, atol=0.02)


def test_table_requires_decreasing_h():
    t = sample_table()
    with pytest.raises(ValueError):
        t.add(Row(9, 1.0, 1, 1.0, 1.0, 1.0, 1.0))


def test_csv_and_json_agree():
    t = sample_table()
    doc = json.loads(t.to_json())
    lines = t.to_csv().splitlines()
    cols = lines[0].split(",")
    assert doc["columns"] == cols
    for line, row in zip(lines[1:], doc["rows"]):
        for name, text in zip(cols, line.split(",")):
            jv = row[name]
            if text == "nan":
                assert jv is None
            else:
                assert float(text) == pytest.approx(float(jv), rel=1e-12)


def test_json_roundtrip():
    t = sample_table()
    back = ConvergenceTable.from_json(t.to_json())
    assert back.to_csv() == t.to_csv()
    assert back.meta == t.meta


def test_csv_byte_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sample_table().write(a)
    sample_table().write(b)
    assert a.read_bytes() == b.read_bytes()
    with pytest.raises(ValueError):
        sample_table().write(tmp_path / "c.txt", "xml")


def test_tiny_errors_have_undefined_rates():
    t = ConvergenceTable()
    t.add(Row(0, 0.1, 10, 1e-13, 1e-12, 0.0, 0.0))
    t.add(Row(1, 0.05, 40, 2e-14, 3e-13, 0.0, 0.0))
    assert math.isnan(t.rows[1].eoc_l2) and math.isnan(t.rows[1].eoc_energy)
    assert "nan" in t.to_csv().splitlines()[2]
