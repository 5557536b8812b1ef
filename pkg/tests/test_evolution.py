import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bolab.evolution import (CFLWarning, EvolutionConfig, EvolutionError, band_limited_perturbation, dealiased,
                             evolve, orbital_distance, reflect, stability_experiment)
from bolab.solitons import SolitonParams, nsoliton_tau, one_soliton
from bolab.spectral import Grid, l2_norm, sobolev_norm

GRID = Grid(64.0, 512)
ONE = SolitonParams((1.0,), (0.0,))


def rel_l2(a, b, grid=GRID):
    return l2_norm(a - b, grid) / l2_norm(b, grid)


@pytest.fixture(scope="module")
def short_run():
    U0 = nsoliton_tau(ONE, GRID).values
    return U0, evolve(U0, EvolutionConfig(GRID, 0.008, 4.0))


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(dt=-1.0), dict(dt=float("nan")), dict(T=0.001),
                                    dict(dealias=0.0), dict(dealias=1.5), dict(snapshot_every=0.0)])
def test_config_validation(kwargs):
    args = dict(grid=GRID, dt=0.01, T=1.0) | kwargs
    with pytest.raises(ValueError):
        EvolutionConfig(**args)


def test_config_steps():
    cfg = EvolutionConfig(GRID, 0.003, 1.0)
    assert cfg.steps == 333
    assert cfg.step * cfg.steps == pytest.approx(1.0)
    assert EvolutionConfig(GRID, 0.01, 1.0, snapshot_every=0.25).steps_per_snapshot == 25


def test_one_soliton_transport(short_run):
    _, trace = short_run
    # the floor is the periodic truncation of the 1/x^2 tails on L=64
    assert rel_l2(trace.final.values, nsoliton_tau(ONE.at(4.0), GRID).values) < 5e-4
    assert trace.times[0] == 0.0 and trace.times[-1] == pytest.approx(4.0)
    assert len(trace.times) == 11


def test_conservation(short_run):
    _, trace = short_run
    for n in (0, 1, 2):
        assert trace.drift(n) < 1e-6


def test_reversibility(short_run):
    U0, trace = short_run
    one_way = l2_norm(trace.final.values - nsoliton_tau(ONE.at(4.0), GRID).values, GRID)
    back = evolve(reflect(trace.final.values, GRID), EvolutionConfig(GRID, 0.008, 4.0))
    assert l2_norm(reflect(back.final.values, GRID) - U0, GRID) <= 10 * one_way


def test_drift_falls_at_least_eightfold_when_dt_halves():
    U0 = nsoliton_tau(ONE, GRID).values
    drifts = [evolve(U0, EvolutionConfig(GRID, dt, 4.0)).drift(2) for dt in (0.015, 0.0075)]
    assert drifts[0] / drifts[1] >= 8.0


def test_reflect_is_an_involution():
    u = one_soliton(1.0, 0.0, 3.0, GRID)
    r = reflect(u)
    assert GRID.x[np.argmax(r.values)] == pytest.approx(-3.0)
    np.testing.assert_array_equal(reflect(r).values, u.values)


def test_dealiasing_removes_high_modes():
    u = np.cos(GRID.rxi[int(0.9 * GRID.n / 2)] * GRID.x) + 1.0
    np.testing.assert_allclose(dealiased(u, GRID), 1.0, atol=1e-12)


def test_cfl_warning():
    U0 = nsoliton_tau(ONE, GRID).values
    with pytest.warns(CFLWarning):
        evolve(U0, EvolutionConfig(GRID, 0.05, 0.1))


def test_blow_up_is_reported():
    U0 = 40.0 * nsoliton_tau(ONE, GRID).values
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", CFLWarning)
        with pytest.raises(EvolutionError, match="blow-up"):
            evolve(U0, EvolutionConfig(GRID, 0.05, 20.0))


@settings(max_examples=10, deadline=None)
@given(y1=st.floats(-5.0, 5.0), y2=st.floats(-5.0, 5.0))
def test_orbital_distance_recovers_centres(y1, y2):
    speeds = (1.0, 2.0)
    u = nsoliton_tau(SolitonParams(speeds, (y1 - 4.0, y2 + 4.0)), GRID)
    fit = orbital_distance(u, speeds, seed_positions=(y1 - 4.5, y2 + 4.5))
    assert fit.converged
    assert fit.distance < 1e-8
    np.testing.assert_allclose(fit.y, (y1 - 4.0, y2 + 4.0), atol=1e-6)


def test_orbital_distance_of_a_perturbed_soliton():
    Q = one_soliton(1.0, 0.0, 1.0, GRID).values
    v = band_limited_perturbation(GRID, 1e-3, 0.5, seed=3)
    fit = orbital_distance(Q + v, (1.0,), grid=GRID)
    # the fit can only shrink the distance below the size of the perturbation
    assert fit.distance <= 1e-3 * (1 + 1e-9)
    assert abs(fit.y[0] - 1.0) < 1e-2


def test_orbital_distance_seeds_from_peaks():
    u = nsoliton_tau(SolitonParams((1.0, 2.0), (-10.0, 10.0)), GRID)
    fit = orbital_distance(u, (1.0, 2.0))
    np.testing.assert_allclose(fit.y, (-10.0, 10.0), atol=1e-6)


@pytest.mark.parametrize("size, s", [(1e-3, 0.5), (1e-2, 1.0), (0.0, 1.0)])
def test_perturbation_size(size, s):
    v = band_limited_perturbation(GRID, size, s, seed=7)
    assert sobolev_norm(v, s, GRID) == pytest.approx(size, rel=1e-12, abs=1e-300)
    np.testing.assert_array_equal(v, band_limited_perturbation(GRID, size, s, seed=7))


def test_evolve_fits_every_snapshot():
    # dealiasing the sampled two-soliton costs 0.44 in H^1 at h=1/8 and 3e-4 at h=1/32
    p = SolitonParams((1.0, 2.0), (-6.0, 6.0))
    grid = Grid(64.0, 2048)
    cfg = EvolutionConfig(grid, 0.002, 1.0, snapshot_every=0.5)
    trace = evolve(nsoliton_tau(p, grid), cfg, reference=p)
    assert len(trace.fits) == len(trace.times) == 3
    assert trace.distances.max() < 1e-3
    np.testing.assert_allclose(trace.fits[-1].y, p.phases, atol=1e-3)


def test_stability_experiment_small_grid():
    cfg = EvolutionConfig(GRID, 0.0075, 2.0, snapshot_every=0.5)
    rep = stability_experiment((1.0,), (0.0,), 1e-3, 2.0, cfg, K=10.0, seed=1)
    assert rep.threshold == 1e-2
    assert rep.passed and rep.sup_distance <= rep.threshold
    assert rep.to_dict()["delta"] == 1e-3
    with pytest.raises(ValueError):
        stability_experiment((1.0,), (0.0,), -1.0, 2.0, cfg)


def test_trace_csv(tmp_path, short_run):
    _, trace = short_run
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,H0,H1,H2,H3,distance"
    assert len(lines) == len(trace.times) + 1
    assert lines[1].endswith(",")
