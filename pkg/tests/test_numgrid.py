import numpy as np
import pytest
from hypothesis import given, strategies as st

from transmute.numgrid import (FormField, GridError, GridFunction, PolylinePath, differentiate, integrate_cells,
                               integrate_path, make_grid, read_csv, sample, staircase, write_csv)


def test_make_grid_1d():
    g = make_grid([(0, 1)], [5])
    assert g.size == 5
    assert g.spacings == pytest.approx((0.25,))


def test_make_grid_2d():
    g = make_grid([(-1, 1), (0, 2)], [3, 5])
    assert g.size == 15
    assert g.spacings == pytest.approx((1.0, 0.5))


def test_make_grid_rejects_two_points():
    with pytest.raises(GridError):
        make_grid([(0, 1)], [2])


def test_first_derivative_exact_on_quadratic():
    g = make_grid([(0, 1)], [11])
    d = differentiate(sample(g, lambda x: x**2), 0, 1)
    assert d.values[5, 0] == pytest.approx(1.0, abs=1e-12)
    # one-sided rows are exact on quadratics too
    assert np.allclose(d.values[:, 0], 2 * g.axis(0), atol=1e-11)


def test_derivative_of_constant_vanishes():
    g = make_grid([(0, 1), (0, 2)], [9, 7])
    f = sample(g, lambda x, y: 3.0 + 0 * x, channels=2)
    for axis in (0, 1):
        for order in (1, 2, 3):
            assert np.max(np.abs(differentiate(f, axis, order).values)) < 1e-9


def test_second_derivative_of_sine():
    g = make_grid([(0, np.pi)], [257])
    d = differentiate(sample(g, np.sin), 0, 2)
    assert np.max(np.abs(d.values[:, 0] + np.sin(g.axis(0)))) <= 1e-3


@pytest.mark.parametrize("order", [1, 2, 3])
def test_differentiation_converges_at_second_order(order):
    errs = []
    for n in (64, 128, 256):
        g = make_grid([(0, 2)], [n])
        d = differentiate(sample(g, lambda x: np.exp(np.sin(x))), 0, order).values[:, 0]
        x = g.axis(0)
        s, c = np.sin(x), np.cos(x)
        exact = {1: c * np.exp(s),
                 2: (c * c - s) * np.exp(s),
                 3: (c**3 - 3 * s * c - c) * np.exp(s)}[order]
        errs.append(np.max(np.abs(d - exact)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates.min() >= 1.8


def test_integrate_cells_examples():
    g = make_grid([(0, 1)], [17])
    assert integrate_cells(sample(g, lambda x: 1 + 0 * x)) == pytest.approx(1.0)
    for n in (3, 8, 41):
        g = make_grid([(0, 2)], [n])
        assert integrate_cells(sample(g, lambda x: x)) == pytest.approx(2.0, abs=1e-13)
    g = make_grid([(0, np.pi)], [257])
    assert abs(integrate_cells(sample(g, np.sin)) - 2.0) <= 1e-4


@given(st.integers(3, 40), st.floats(0.1, 5.0))
def test_integrate_cells_nonnegative(n, width):
    g = make_grid([(-3, 3)], [n])
    f = sample(g, lambda x: np.exp(-(x / width) ** 2))
    assert integrate_cells(f).real >= 0


def _exact_form(g):
    x, y = g.coords()
    return FormField(g, 1, (y, x))  # d(x y) = y dx + x dy


def test_exact_form_path_value():
    g = make_grid([(0, 1), (0, 1)], [33, 33])
    form = _exact_form(g)
    for order in ((0, 1), (1, 0)):
        assert integrate_path(form, staircase((0, 0), (32, 32), order)) == pytest.approx(1.0, abs=1e-12)
    zigzag = PolylinePath(((0, 0), (10, 0), (10, 20), (32, 20), (32, 32)))
    assert integrate_path(form, zigzag) == pytest.approx(1.0, abs=1e-12)


def test_exact_form_closed_loop():
    g = make_grid([(0, 1), (0, 1)], [21, 21])
    loop = PolylinePath(((2, 3), (15, 3), (15, 17), (2, 17), (2, 3)))
    assert abs(integrate_path(_exact_form(g), loop)) < 1e-13


def test_staircases_agree_on_closed_numeric_form():
    g = make_grid([(0, 1), (0, 1)], [128, 128])
    x, y = g.coords()
    # P(x) dx + Q(y) dy is closed for the segment quadrature as well
    form = FormField(g, 1, (np.cos(3 * x), np.exp(y)))
    a = integrate_path(form, staircase((0, 0), (127, 127), (0, 1)))
    b = integrate_path(form, staircase((0, 0), (127, 127), (1, 0)))
    assert abs(a - b) <= 1e-6 * abs(a)


@given(st.integers(0, 19), st.integers(0, 19), st.integers(0, 19), st.integers(0, 19))
def test_path_plus_reversal_is_zero(i0, j0, i1, j1):
    g = make_grid([(0, 1), (0, 2)], [20, 20])
    x, y = g.coords()
    form = FormField(g, 1, (np.sin(3 * y) + x, np.cos(x * y)))
    p = staircase((i0, j0), (i1, j1))
    assert integrate_path(form, p) + integrate_path(form, p.reversed()) == 0


def test_csv_round_trip(tmp_path):
    g = make_grid([(0, 1), (-1, 1)], [4, 3])
    f = sample(g, lambda x, y: x + 1j * y, channels=2)
    path = tmp_path / "f.csv"
    write_csv(f, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("# schema:")
    assert text[2] == "x1,x2,re_c0,im_c0,re_c1,im_c1"
    back = read_csv(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_grid_function_shape_checked():
    g = make_grid([(0, 1)], [5])
    with pytest.raises(GridError):
        GridFunction(g, np.zeros((4, 1)))
