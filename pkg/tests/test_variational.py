import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bolab.solitons import SolitonParams, nsoliton_tau, nsoliton_translation_modes
from bolab.spectral import Grid, l2_norm
from bolab.variational import (Multipliers, RankDeficientError, augmented_lagrangian, default_penalty,
                               el_residual, elementary_symmetric, hessian_D, lyapunov_value,
                               multiplier_oracle, p_of_D, vandermonde_product, variational_record,
                               vieta_multipliers, write_variational_json)

GRID = Grid(128.0, 2048)


def test_elementary_symmetric():
    np.testing.assert_allclose(elementary_symmetric([1.0, 2.0, 3.0]), [1, 6, 11, 6])
    np.testing.assert_allclose(elementary_symmetric([4.0]), [1, 4])


@pytest.mark.parametrize("speeds, mu", [((2.0,), (2.0,)), ((1.0, 2.0), (2.0, 3.0)),
                                        ((1.0, 2.0, 3.0), (6.0, 11.0, 6.0))])
def test_vieta_multipliers(speeds, mu):
    m = vieta_multipliers(speeds)
    assert m.mu == mu
    assert m[1] == math.prod(speeds) and m[len(speeds)] == sum(speeds)
    assert m.coefficients() == (1.0,) + tuple(reversed(mu))
    with pytest.raises(IndexError):
        m[0]


@pytest.mark.parametrize("speeds", [(), (1.0, -1.0), (float("nan"),)])
def test_vieta_rejects_bad_speeds(speeds):
    with pytest.raises(ValueError):
        vieta_multipliers(speeds)


@pytest.mark.parametrize("speeds, phases", [((1.0,), (0.0,)), ((1.0, 2.0), (-5.0, 5.0)),
                                            ((1.0, 2.0, 3.0), (-8.0, 0.0, 8.0)), ((0.7, 1.9), (0.0, 0.0))])
def test_el_residual_vanishes_with_vieta_multipliers(speeds, phases):
    assert el_residual(SolitonParams(speeds, phases), GRID) <= 1e-12


def test_el_residual_detects_wrong_multipliers():
    p = SolitonParams((1.0, 2.0), (-5.0, 5.0))
    # the displayed polynomial ordering swaps mu_1 and mu_N
    assert el_residual(p, GRID, mu=(3.0, 2.0)) > 1e-2
    with pytest.raises(ValueError):
        el_residual(p, GRID, mu=(1.0,))
    with pytest.raises(ValueError):
        el_residual(p, GRID, source="other")


def test_el_residual_refinement():
    # the functional gradients carry the periodic truncation error; refining
    # (L, n) -> (2L, 4n) should cut the residual at least fourfold
    p = SolitonParams((1.0, 2.0), (-5.0, 5.0))
    coarse = el_residual(p, Grid(64.0, 1024), source="functional")
    fine = el_residual(p, Grid(128.0, 4096), source="functional")
    assert fine < coarse
    assert coarse / fine >= 4.0


@pytest.mark.parametrize("speeds, expected, tol", [((2.0,), (2.0,), 1e-8), ((1.0, 2.0), (2.0, 3.0), 1e-6),
                                                   ((1.0, 2.0, 3.0), (6.0, 11.0, 6.0), 1e-5)])
def test_oracle_reproduces_vieta(speeds, expected, tol):
    p = SolitonParams(speeds, tuple(np.linspace(-8.0, 8.0, len(speeds))) if len(speeds) > 1 else (0.0,))
    np.testing.assert_allclose(multiplier_oracle(p, GRID).mu, expected, rtol=tol)


@settings(max_examples=10, deadline=None)
@given(speeds=st.lists(st.floats(0.4, 3.0), min_size=1, max_size=3, unique=True).map(sorted).filter(
    lambda c: min(np.diff(c), default=1.0) > 0.2))
def test_oracle_agrees_with_vieta_for_random_speeds(speeds):
    p = SolitonParams(tuple(speeds), tuple(np.linspace(-6.0, 6.0, len(speeds))) if len(speeds) > 1 else (0.0,))
    grid = Grid(128.0, 4096)
    np.testing.assert_allclose(multiplier_oracle(p, grid).mu, vieta_multipliers(p).mu, rtol=1e-5)


def test_oracle_reports_rank_deficiency():
    with pytest.raises(RankDeficientError):
        multiplier_oracle(SolitonParams((1.0, 2.0)), GRID, cond_limit=1.0)


# ----------------------------------------------------------------------------
# D = A B^{-1}


def test_hessian_D_two_speeds():
    hd = hessian_D((1.0, 2.0))
    np.testing.assert_allclose(hd.A, np.pi * np.array([[1, 1], [-1, -2]]))
    np.testing.assert_allclose(hd.B, [[2, 1], [1, 1]])
    np.testing.assert_allclose(hd.BtA, np.pi * np.diag([1.0, -1.0]), atol=1e-12)
    np.testing.assert_allclose(hd.BtA_normalized, np.diag([1.0, -1.0]), atol=1e-12)
    expected = np.pi * (-3.0 + np.array([-1.0, 1.0]) * math.sqrt(13.0)) / 2.0
    np.testing.assert_allclose(hd.eigenvalues(), expected, atol=1e-10)
    assert hd.positive_count() == 1


def test_hessian_D_rejects_repeated_speeds():
    with pytest.raises(ValueError):
        hessian_D((1.0, 1.0))


speed_tuples = st.integers(1, 5).flatmap(
    lambda N: st.lists(st.floats(0.2, 5.0), min_size=N, max_size=N, unique=True).map(sorted).filter(
        lambda c: min(np.diff(c), default=1.0) > 1e-2))


@settings(max_examples=60, deadline=None)
@given(c=speed_tuples)
def test_p_of_D_counts_half_the_solitons(c):
    assert p_of_D(c) == (len(c) + 1) // 2


@settings(max_examples=40, deadline=None)
@given(c=speed_tuples)
def test_BtA_is_diagonal_with_alternating_signs(c):
    hd = hessian_D(c)
    BtA = hd.BtA
    N = len(c)
    scale = np.abs(BtA).max()
    assert np.abs(BtA - np.diag(np.diag(BtA))).max() <= 1e-12 * max(1.0, scale) * 10 ** (N - 1)
    # exact in exact arithmetic; in floating point the error scales with cond(B)
    bound = 1e-14 * np.linalg.cond(hd.B) * max(1.0, np.abs(hd.D).max()) * np.abs(hd.B).max() ** 2
    np.testing.assert_allclose(hd.B.T @ hd.D @ hd.B, BtA, atol=bound)
    # diagonal entries are pi times prod_{l != j}(c_l - c_j) for the ascending order
    cs = np.array(c)
    for j in range(N):
        assert BtA[j, j] == pytest.approx(np.pi * np.prod(np.delete(cs, j) - cs[j]), rel=1e-8)
    signs = np.sign(np.diag(BtA))
    np.testing.assert_array_equal(signs, [(-1) ** j for j in range(N)])


def test_vandermonde_product():
    assert vandermonde_product((1.0, 2.0, 4.0)) == 1.0 * 3.0 * 2.0
    assert vandermonde_product((3.0,)) == 1.0


# ----------------------------------------------------------------------------
# Augmented Lagrangian


@pytest.mark.parametrize("speeds, phases", [((1.0, 2.0), (-5.0, 5.0)), ((1.0, 2.0, 3.0), (-8.0, 0.0, 8.0))])
def test_penalty_vanishes_at_the_soliton(speeds, phases):
    p = SolitonParams(speeds, phases)
    U = nsoliton_tau(p, GRID)
    assert augmented_lagrangian(U, p, 100.0) == lyapunov_value(U, p)


@pytest.mark.parametrize("speeds, phases", [((1.0, 2.0), (-5.0, 5.0)), ((1.0, 2.0, 3.0), (-8.0, 0.0, 8.0))])
def test_soliton_minimizes_augmented_lagrangian(speeds, phases):
    p = SolitonParams(speeds, phases)
    U = nsoliton_tau(p, GRID).values
    base = augmented_lagrangian(U, p, 100.0, GRID)
    modes, _ = np.linalg.qr(nsoliton_translation_modes(p, GRID))
    rng = np.random.default_rng(len(speeds))
    for _ in range(20):
        v = np.fft.irfft(np.fft.rfft(rng.standard_normal(GRID.n)) * np.exp(-GRID.rxi**2), n=GRID.n)
        v -= modes @ (modes.T @ v)
        v /= l2_norm(v, GRID)
        eps = rng.uniform(1e-4, 1e-2)
        assert augmented_lagrangian(U + eps * v, p, 100.0, GRID) - base >= 0.0


def test_augmented_lagrangian_is_phase_invariant():
    values = [augmented_lagrangian(nsoliton_tau(SolitonParams((1.0, 2.0), x), GRID), SolitonParams((1.0, 2.0), x),
                                   100.0) for x in ((0.0, 0.0), (-5.0, 5.0), (3.0, -2.0))]
    assert max(values) - min(values) <= 1e-6


def test_augmented_lagrangian_options():
    p = SolitonParams((1.0, 2.0), (-5.0, 5.0))
    U = nsoliton_tau(p, GRID)
    with pytest.raises(ValueError):
        augmented_lagrangian(U, p, 0.0)
    with pytest.raises(ValueError):
        augmented_lagrangian(U, p, 1.0, reference="other")
    # the continuum reference differs from the sampled tower by O(1/L)
    assert augmented_lagrangian(U, p, 100.0, reference="trace") > augmented_lagrangian(U, p, 100.0)


def test_default_penalty_is_positive_and_reproducible():
    p = SolitonParams((1.0, 2.0), (-5.0, 5.0))
    g = Grid(64.0, 512)
    C = default_penalty(p, g, iters=10)
    assert C > 0
    assert C == default_penalty(p, g, iters=10)


def test_variational_json(tmp_path):
    p = SolitonParams((1.0, 2.0), (-5.0, 5.0))
    record = variational_record(p, GRID)
    assert record["p_of_D"] == 1
    np.testing.assert_allclose(record["mu_oracle"], [2.0, 3.0], rtol=1e-6)
    path = tmp_path / "v.json"
    write_variational_json(path, [record])
    loaded = json.loads(path.read_text())
    assert list(loaded) == ["1,2"]
    assert loaded["1,2"]["mu"] == [2.0, 3.0]
    assert isinstance(Multipliers((1.0,)).as_array(), np.ndarray)
