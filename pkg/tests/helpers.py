"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from npbbm import GridDensity, plan_grid, travelling_wave, wave_barriers, wave_density


def density_from_cdf(x0, dx, n, cdf, floor=0.0):
    """Exact cell averages of the density whose CDF is `cdf`.

    The first and last cells are forced to zero, so the CDF should already be
    flat there (support interior to the grid).  `floor` truncates values below
    it to exactly zero; unbounded laws need it to get compact grid support.
    """
    edges = x0 + np.arange(n + 1) * dx
    vals = np.diff(cdf(edges)) / dx
    vals[vals < floor] = 0.0
    vals[0] = 0.0
    vals[-1] = 0.0
    return GridDensity(x0, dx, np.maximum(vals, 0.0))


def uniform_density(a, b, x0, dx, n):
    """Uniform law on [a, b] as exact cell averages on the given grid."""
    width = b - a

    def cdf(x):
        return np.clip((x - a) / width, 0.0, 1.0)

    return density_from_cdf(x0, dx, n, cdf)


def gaussian_density(mu, sigma, x0, dx, n):
    """Gaussian law as exact cell averages, truncated to ~8 sigma support."""
    return density_from_cdf(x0, dx, n, lambda x: norm.cdf(x, mu, sigma), floor=1e-16)


def random_bump_density(rng, x0=-16.0, dx=2e-3, n=16001):
    """Random Gaussian-mixture density with total mass in [0.5, 2].

    Means stay within [-2, 2] and scales within [0.2, 1]; the truncation
    floor keeps the support compact so the default grid leaves room for the
    lemma tests to diffuse the density further.
    """
    k = int(rng.integers(1, 4))
    means = rng.uniform(-2.0, 2.0, k)
    sigmas = rng.uniform(0.2, 1.0, k)
    weights = rng.uniform(0.2, 1.0, k)
    weights *= rng.uniform(0.5, 2.0) / weights.sum()

    def cdf(x):
        out = np.zeros_like(x, dtype=np.float64)
        for m, s, w in zip(means, sigmas, weights):
            out += w * norm.cdf(x, m, s)
        return out

    return density_from_cdf(x0, dx, n, cdf, floor=1e-15)


def wave_fixture(p, t, dx=1e-3):
    """Travelling wave shifted to the right-barrier-at-0 frame.

    Returns (wave, density, left_barrier, right_barrier); the density lives on
    a grid planned to hold the drifting support for time t, and the barriers
    span [0, t] (t must be positive for barriers to make sense).
    """
    w = travelling_wave(p)
    grid = plan_grid(-w.R0, 0.0, max(t, 1.0), drift=w.c, dx=dx)
    rho = wave_density(w, grid, shift=-w.R0)
    left, right = wave_barriers(w, max(t, 1.0))
    return w, rho, left, right


def mean_and_se(samples):
    """Sample mean and its standard error (ddof=1)."""
    s = np.asarray(samples, dtype=np.float64)
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(len(s)))
