"""Killed Brownian motion: exits, the tail representation, boundary fluxes."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erfc

from npbbm import (
    Barrier,
    ExitStats,
    PathParams,
    RandomSource,
    exit_statistics,
    representation_check,
    richardson_extrapolate,
    sample_exit,
    small_delta_flux,
)
from npbbm.exits import _run_paths, exit_stats_to_json

from helpers import uniform_density, wave_fixture

# One-sided exit probability from distance 1 in unit time, 2*Phi(-1), frozen
# from a 40-digit evaluation.
ONE_SIDED = 0.3173105078629141


def _constant(level, t_max=1.0):
    return Barrier(np.array([0.0, t_max]), np.array([level, level]))


# ---------------------------------------------------------------------------
# parameter and stats plumbing


def test_path_params_validation():
    with pytest.raises(ValueError):
        PathParams(0.0, 1e-3, 10)
    with pytest.raises(ValueError):
        PathParams(1.0, 0.0, 10)
    with pytest.raises(ValueError):
        PathParams(1.0, 2.0, 10)
    with pytest.raises(ValueError):
        PathParams(1.0, 1e-3, 0)


def test_exit_stats_partition_enforced():
    with pytest.raises(ValueError):
        ExitStats(10, 0.5, 0.3, 0.1, 0.0, 0.0, 0.0, np.array([0.0]))


def test_erfc_quadrature_self_check():
    # integral of x*erfc(x) over [0, inf) equals 1/4
    val, _ = quad(lambda x: x * erfc(x), 0.0, np.inf)
    assert abs(val - 0.25) <= 1e-10


# ---------------------------------------------------------------------------
# single-path sampling


def test_unreachable_barriers_always_survive():
    params = PathParams(1.0, 1e-2, 10_000)
    rho = uniform_density(-1.0, 1.0, -1.5, 1e-2, 300)
    stats = exit_statistics(rho, _constant(-1e6), _constant(1e6), params, RandomSource(90))
    assert stats.survive_prob == 1.0
    assert stats.exit_left_prob == 0.0 and stats.exit_right_prob == 0.0
    out = sample_exit(0.0, _constant(-1e6), _constant(1e6), PathParams(1.0, 1e-2, 1), RandomSource(91))
    assert out.kind == "survive"
    assert out.position is not None and out.time is None


def test_sample_exit_validates_start_and_barriers():
    params = PathParams(1.0, 1e-2, 1)
    with pytest.raises(ValueError):
        sample_exit(2.0, _constant(0.0), _constant(1.0), params, RandomSource(1))
    with pytest.raises(ValueError):
        sample_exit(0.5, _constant(1.0), _constant(0.0), params, RandomSource(1))


def test_sample_exit_kinds():
    # strip so narrow almost every path exits quickly on one side
    params = PathParams(1.0, 1e-3, 1)
    kinds = set()
    for r in range(20):
        out = sample_exit(0.0, _constant(-0.05), _constant(0.05), params, RandomSource(92, r))
        kinds.add(out.kind)
        if out.kind != "survive":
            assert 0.0 < out.time <= 1.0
    assert {"left", "right"} <= kinds


def test_one_sided_benchmark():
    # Reflection principle: exit probability 2*Phi(-1) for barrier at
    # distance 1 over unit time.
    n = 20_000
    code, _, _ = _run_paths(
        np.full(n, 1.0), _constant(0.0), _constant(1e6), 1.0, 1e-3, RandomSource(93)
    )
    est = np.mean(code == 1)
    se = math.sqrt(est * (1.0 - est) / n)
    assert abs(est - ONE_SIDED) <= 3.0 * se


def test_symmetric_strip_balances_sides():
    n = 20_000
    code, _, _ = _run_paths(
        np.zeros(n), _constant(-1.0), _constant(1.0), 1.0, 1e-3, RandomSource(94)
    )
    pl = np.mean(code == 1)
    pr = np.mean(code == 2)
    se = math.sqrt((pl * (1 - pl) + pr * (1 - pr)) / n)
    assert abs(pl - pr) <= 3.0 * se


def test_bridge_correction_removes_step_bias():
    # With the bridge correction, halving the step moves the estimate by
    # less than one combined standard error (frozen seed); without it the
    # estimate undercounts exits by many standard errors at a coarse step.
    n = 20_000
    left, right = _constant(0.0), _constant(1e6)
    x0 = np.full(n, 1.0)
    code_a, _, _ = _run_paths(x0, left, right, 1.0, 1e-3, RandomSource(105))
    code_b, _, _ = _run_paths(x0, left, right, 1.0, 5e-4, RandomSource(105, 1))
    est_a, est_b = np.mean(code_a == 1), np.mean(code_b == 1)
    se = math.sqrt((est_a * (1 - est_a) + est_b * (1 - est_b)) / n)
    assert abs(est_a - est_b) <= se

    code_u, _, _ = _run_paths(
        x0, left, right, 1.0, 1e-2, RandomSource(96), bridge_correction=False
    )
    est_u = np.mean(code_u == 1)
    se_u = math.sqrt(est_u * (1 - est_u) / n)
    assert est_u < ONE_SIDED - 3.0 * se_u


# ---------------------------------------------------------------------------
# aggregated statistics on the wave fixture


def test_wave_fixture_exit_masses():
    # Boundary conditions of the tail representation: over [0,1] the left
    # barrier absorbs p(1-1/e), the right (1-p)(1-1/e), and e^{-1} survives.
    _, rho, left, right = wave_fixture(0.75, 1.0)
    params = PathParams(1.0, 1e-3, 20_000)
    stats = exit_statistics(rho, left, right, params, RandomSource(97))
    assert abs(stats.exit_left_prob - 0.47409041912141825) <= 3.0 * stats.exit_left_se
    assert abs(stats.exit_right_prob - 0.15803013970713942) <= 3.0 * stats.exit_right_se
    assert abs(stats.survive_prob - 0.36787944117144233) <= 3.0 * stats.survive_se
    total = stats.exit_left_prob + stats.exit_right_prob + stats.survive_prob
    assert total == pytest.approx(1.0, abs=1e-12)
    lo, hi = left.value(1.0), right.value(1.0)
    assert len(stats.survivor_positions) == round(stats.survive_prob * params.n_paths)
    assert np.all(stats.survivor_positions > lo)
    assert np.all(stats.survivor_positions < hi)


def test_exit_statistics_rejects_support_outside_barriers():
    rho = uniform_density(0.0, 1.0, -0.5, 1e-2, 200)
    params = PathParams(1.0, 1e-2, 10)
    with pytest.raises(ValueError):
        exit_statistics(rho, _constant(0.25), _constant(2.0), params, RandomSource(1))


def test_exit_statistics_deterministic(tmp_path):
    _, rho, left, right = wave_fixture(0.75, 1.0)
    params = PathParams(1.0, 1e-2, 2000)
    a = exit_statistics(rho, left, right, params, RandomSource(98))
    b = exit_statistics(rho, left, right, params, RandomSource(98))
    assert a.exit_left_prob == b.exit_left_prob
    assert np.array_equal(a.survivor_positions, b.survivor_positions)
    path = tmp_path / "stats.json"
    exit_stats_to_json(a, params, RandomSource(98), path)
    with open(path) as fh:
        payload = json.load(fh)
    assert payload["exit_left_prob"] == a.exit_left_prob
    assert payload["h"] == params.h
    assert payload["master_seed"] == 98


# ---------------------------------------------------------------------------
# tail representation


def test_representation_check_wave_fixture():
    w, rho, left, right = wave_fixture(0.75, 1.0)
    t = 0.5
    xs = np.array([-8.0, w.c * t - w.R0 / 2.0, right.value(t)])
    params = PathParams(t, 2e-3, 5000)
    result = representation_check(
        rho, left, right, t, xs, params, RandomSource(99), p=0.75, n_max=5
    )
    et = math.exp(t)
    # far left: the Monte Carlo tail is e^t times the survival fraction and
    # the scheme tail is the full unit mass
    assert result.mc_values[0] == pytest.approx(et * result.survive_prob, abs=1e-12)
    assert result.scheme_values[0] == pytest.approx(1.0, abs=1e-6)
    # at the right barrier both tails vanish
    assert result.mc_values[-1] == 0.0
    assert result.scheme_values[-1] <= result.scheme_width + 1e-9
    # in the middle the two estimates agree within noise plus sandwich width
    mid_gap = abs(result.mc_values[1] - result.scheme_values[1])
    assert mid_gap <= 3.0 * result.std_errors[1] + result.scheme_width
    rows = result.rows()
    assert rows.shape == (3, 4)
    assert np.array_equal(rows[:, 0], xs)


def test_representation_check_validates_horizon():
    _, rho, left, right = wave_fixture(0.75, 1.0)
    params = PathParams(0.5, 1e-2, 10)
    with pytest.raises(ValueError):
        representation_check(rho, left, right, 0.6, [0.0], params, RandomSource(1), p=0.75)


def test_representation_csv(tmp_path):
    _, rho, left, right = wave_fixture(0.75, 1.0)
    params = PathParams(0.5, 1e-2, 500)
    result = representation_check(
        rho, left, right, 0.5, [-1.0, 0.0], params, RandomSource(100), p=0.75, n_max=3
    )
    path = tmp_path / "rep.csv"
    result.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,mc,scheme,se"
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# small-delta fluxes


def test_flux_matches_exact_exit_masses():
    # For wave initial data the exact exit mass by time d is p(1-e^{-d}), so
    # the flux at each rung is known in closed form (frozen values).
    _, rho, left, right = wave_fixture(0.75, 1.0)
    params = PathParams(1.0, 1e-3, 30_000)
    seq = small_delta_flux(rho, left, right, [0.02, 0.01, 0.005], params, RandomSource(101))
    exact_left = {
        0.02: 0.742549750996676,
        0.01: 0.746262468812396,
        0.005: 0.748128121097653,
    }
    for d, fl, se in zip(seq.deltas, seq.flux_left, seq.se_left):
        assert abs(fl - exact_left[d]) <= 3.0 * se
    value, se = seq.extrapolate("left")
    assert abs(value - 0.75) <= 3.0 * se
    value_r, se_r = seq.extrapolate("right")
    assert abs(value_r - 0.25) <= 3.0 * se_r
    assert seq.rows().shape == (3, 3)


def test_flux_symmetric_at_half():
    _, rho, left, right = wave_fixture(0.5, 1.0)
    params = PathParams(1.0, 1e-3, 20_000)
    seq = small_delta_flux(rho, left, right, [0.02, 0.01], params, RandomSource(102))
    for fl, fr, sl, sr in zip(seq.flux_left, seq.flux_right, seq.se_left, seq.se_right):
        assert abs(fl - fr) <= 3.0 * math.hypot(sl, sr)


def test_flux_validates_delta_ladder():
    _, rho, left, right = wave_fixture(0.75, 1.0)
    params = PathParams(1.0, 1e-3, 10)
    with pytest.raises(ValueError):
        small_delta_flux(rho, left, right, [0.01, 0.02], params, RandomSource(1))
    with pytest.raises(ValueError):
        small_delta_flux(rho, left, right, [-0.01], params, RandomSource(1))


def test_richardson_extrapolation_protocol():
    # linear-in-delta data extrapolates exactly; mismatched ladders refuse
    value, se = richardson_extrapolate(
        [0.04, 0.02, 0.01], [1.04, 1.02, 1.01], [0.0, 0.01, 0.02]
    )
    assert value == pytest.approx(1.0, abs=1e-12)
    assert se == pytest.approx(math.sqrt(4 * 0.02**2 + 0.01**2), rel=1e-12)
    with pytest.raises(ValueError):
        richardson_extrapolate([0.04, 0.02, 0.013], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        richardson_extrapolate([0.01], [1.0], [0.0])
