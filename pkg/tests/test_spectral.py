import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bolab.spectral import (ComplexField, Grid, GridMismatchError, RealField, default_grid, derivative,
                            field_from_bytes, field_to_bytes, hilbert, inner, integrate, l2_norm,
                            load_field_binary, load_field_text, project_minus, project_plus, sample,
                            save_field_binary, save_field_text, sobolev_norm)

GRID = Grid(2 * math.pi, 64)


def trig(grid, coeffs, seed=0):
    """Random band-limited real field without zero or Nyquist content."""
    rng = np.random.default_rng(seed)
    k = np.arange(1, coeffs + 1)
    a, b = rng.standard_normal(coeffs), rng.standard_normal(coeffs)
    x = grid.x[:, None] * np.pi / grid.L
    return (a * np.cos(k * x) + b * np.sin(k * x)).sum(axis=1)


@pytest.mark.parametrize("L, n", [(1.0, 7), (1.0, 6), (0.0, 16), (-1.0, 16), (float("inf"), 16), (1.0, 9)])
def test_grid_rejects_bad_parameters(L, n):
    with pytest.raises(ValueError):
        Grid(L, n)


def test_grid_geometry():
    g = Grid(4.0, 16)
    assert g.h == 0.5
    assert g.x[0] == -4.0 and g.x[-1] == 3.5
    assert g.xi[8] == pytest.approx(g.nyquist)
    assert np.all(g.rxi >= 0) and g.rxi[-1] == pytest.approx(g.nyquist)
    np.testing.assert_allclose(g.x[g.reflect_index()][1:], -g.x[1:])


def test_default_grid_resolves_fastest_soliton():
    g = default_grid((0.5, 3.0))
    assert g.L == 512.0
    assert g.h <= 1.0 / (8 * 3.0)


@pytest.mark.parametrize("k", [1, 3, 10])
def test_hilbert_symbol_on_trig_modes(k):
    # symbol i*sgn(xi): cos -> -sin, sin -> cos
    x = GRID.x
    np.testing.assert_allclose(hilbert(np.cos(k * x), GRID), -np.sin(k * x), atol=1e-13)
    np.testing.assert_allclose(hilbert(np.sin(k * x), GRID), np.cos(k * x), atol=1e-13)


def test_hilbert_kills_mean_and_nyquist():
    x = GRID.x
    nyq = np.cos(GRID.nyquist * x)
    np.testing.assert_allclose(hilbert(np.ones(GRID.n) + nyq, GRID), 0.0, atol=1e-13)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_derivative_of_sine(order):
    x = GRID.x
    exact = 5.0**order * np.sin(5 * x + order * np.pi / 2)
    np.testing.assert_allclose(derivative(np.sin(5 * x), order, GRID), exact, atol=1e-9)


def test_derivative_rejects_order_zero():
    with pytest.raises(ValueError):
        derivative(np.zeros(GRID.n), 0, GRID)


def test_projections_split_identity():
    u = trig(GRID, 12) + 0.3
    np.testing.assert_allclose(project_plus(u, GRID) - project_minus(u, GRID), u, atol=1e-13)
    plus = np.fft.fft(project_plus(u, GRID))
    assert np.abs(plus[GRID.n // 2 + 1:]).max() < 1e-12  # no negative frequencies


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), modes=st.integers(1, 30))
def test_hilbert_squared_is_minus_identity_on_mean_free(seed, modes):
    u = trig(GRID, modes, seed)
    np.testing.assert_allclose(hilbert(hilbert(u, GRID), GRID), -u, atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_hilbert_is_skew_adjoint(seed):
    u, v = trig(GRID, 20, seed), trig(GRID, 20, seed + 1)
    assert inner(hilbert(u, GRID), v, GRID) == pytest.approx(-inner(u, hilbert(v, GRID), GRID), abs=1e-10)


def test_operators_accept_batches():
    batch = np.stack([trig(GRID, 5, s) for s in range(3)])
    out = hilbert(batch, GRID)
    for row, u in zip(out, batch):
        np.testing.assert_allclose(row, hilbert(u, GRID), atol=1e-14)


def test_field_wrappers_and_arithmetic():
    u = sample(GRID, np.cos)
    assert isinstance(u, RealField)
    w = u * 2.0 + 1.0
    assert isinstance(w, RealField)
    np.testing.assert_allclose(w.values, 2 * np.cos(GRID.x) + 1)
    assert isinstance(hilbert(u), RealField)
    assert isinstance(project_plus(u), ComplexField)
    with pytest.raises(GridMismatchError):
        u + sample(Grid(1.0, 64), np.cos)
    with pytest.raises(ValueError):
        RealField(GRID, np.zeros(3))
    with pytest.raises(ValueError):
        RealField(GRID, np.full(GRID.n, np.nan))
    with pytest.raises(TypeError):
        hilbert(np.zeros(GRID.n))


def test_quadrature():
    assert integrate(np.ones(GRID.n), GRID) == pytest.approx(2 * GRID.L)
    assert l2_norm(np.cos(GRID.x), GRID) == pytest.approx(math.sqrt(GRID.L))


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 2.0])
def test_sobolev_norm_of_single_mode(s):
    k = 3
    u = np.cos(k * GRID.x)
    assert sobolev_norm(u, s, GRID) == pytest.approx((1 + k * k) ** (s / 2) * math.sqrt(GRID.L))


def test_sobolev_norm_zero_is_l2():
    u = trig(GRID, 15) + 1.0
    assert sobolev_norm(u, 0.0, GRID) == pytest.approx(l2_norm(u, GRID))
    with pytest.raises(ValueError):
        sobolev_norm(u, -1.0, GRID)


@pytest.mark.parametrize("complex_valued", [False, True])
def test_text_and_binary_round_trip(tmp_path, complex_valued):
    u = sample(GRID, lambda x: np.exp(1j * x) if complex_valued else np.sin(x) + 0.1)
    save_field_text(tmp_path / "u.txt", u)
    save_field_binary(tmp_path / "u.bof", u)
    for loaded in (load_field_text(tmp_path / "u.txt"), load_field_binary(tmp_path / "u.bof")):
        assert type(loaded) is type(u)
        assert loaded.grid == u.grid
        np.testing.assert_array_equal(loaded.values, u.values)


def test_binary_rejects_corruption():
    blob = field_to_bytes(sample(GRID, np.sin))
    with pytest.raises(ValueError):
        field_from_bytes(blob[:10])
    with pytest.raises(ValueError):
        field_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        field_from_bytes(blob[:-8])


def test_text_rejects_missing_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 1\n1 2\n")
    with pytest.raises(ValueError, match="line 1"):
        load_field_text(p)
