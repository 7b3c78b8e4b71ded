"""Discrete-time bounding particle systems.

Between selection times the population branches freely (a Yule tree per
particle, unit binary-split rate, Brownian motion along every branch).
Selection acts only at multiples of the step delta:

* lower side: drop the expected casualties from the left up front, branch
  freely for delta, then truncate back to the N leftmost;
* upper side: the mirror image (drop from the right, keep the N rightmost).

Run at matching times these two systems bracket the continuously selected
process in distribution from below and above.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .randomness import RandomSource, TAG_CLOCK, TAG_DRIVING

__all__ = [
    "BoundSystemParams",
    "BoundStepResult",
    "BoundsRun",
    "YuleStreams",
    "free_bbm",
    "lower_step",
    "upper_step",
    "run_bounds",
    "bounds_metadata_to_json",
]


@dataclass(frozen=True)
class BoundSystemParams:
    """Step parameters for one bounding system."""

    N: int
    p: float
    delta: float
    side: Literal["lower", "upper"]

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie strictly in (0,1)")
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")
        if self.side not in ("lower", "upper"):
            raise ValueError("side must be 'lower' or 'upper'")


class YuleStreams:
    """Exponential split clocks and Gaussian moves for free branching."""

    def __init__(self, src: RandomSource) -> None:
        self._moves = src.generator(TAG_DRIVING)
        self._clocks = src.generator(TAG_CLOCK)

    def lifetimes(self, n: int) -> NDArray[np.float64]:
        return self._clocks.exponential(1.0, n)

    def moves(self, n: int) -> NDArray[np.float64]:
        return self._moves.standard_normal(n)

    def mirrored(self) -> "MirroredYuleStreams":
        return MirroredYuleStreams(self)


class MirroredYuleStreams(YuleStreams):
    """Reflection view: per-block draws reversed, moves negated.

    Feeding the space-reflected population through this view reproduces the
    reflected free-branching outcome draw for draw, which is what makes the
    lower/upper mirror identity exact rather than merely in law.
    """

    def __init__(self, base: YuleStreams) -> None:
        self._base = base

    def lifetimes(self, n: int) -> NDArray[np.float64]:
        return self._base.lifetimes(n)[::-1]

    def moves(self, n: int) -> NDArray[np.float64]:
        return -self._base.moves(n)[::-1]


def _free_bbm(positions: NDArray[np.float64], t: float, streams: YuleStreams):
    """Level-synchronous exact Yule/Brownian evolution of all particles."""
    pos = np.array(positions, dtype=np.float64, copy=True)
    rem = np.full(pos.size, float(t))
    finished: list[NDArray[np.float64]] = []
    while pos.size:
        life = streams.lifetimes(pos.size)
        g = streams.moves(pos.size)
        done = life >= rem
        finished.append(pos[done] + g[done] * np.sqrt(rem[done]))
        pos = np.repeat(pos[~done] + g[~done] * np.sqrt(life[~done]), 2)
        rem = np.repeat(rem[~done] - life[~done], 2)
    return np.sort(np.concatenate(finished), kind="stable")


def free_bbm(
    init,
    t: float,
    src: RandomSource | None = None,
    *,
    streams: YuleStreams | None = None,
    mirror: bool = False,
) -> NDArray[np.float64]:
    """Branching Brownian motion without selection for time t.

    Every initial particle starts an independent unit-rate binary branching
    tree; split times are exact Exponential(1) clocks, so the population size
    rooted at one particle is Geometric(e^{-t}) with mean e^t.  Output is the
    sorted positions of all particles alive at t.
    """
    if t < 0.0:
        raise ValueError("time must be non-negative")
    arr = np.asarray(init, dtype=np.float64)
    if (src is None) == (streams is None):
        raise ValueError("pass exactly one of src and streams")
    if streams is None:
        streams = YuleStreams(src)
    if mirror:
        streams = streams.mirrored()
    return _free_bbm(arr, t, streams)


@dataclass(frozen=True)
class BoundStepResult:
    """One selection step plus the bookkeeping the tests need."""

    config: NDArray[np.float64]
    removed: int
    pre_truncation_size: int
    padded: bool


def _one_step(
    config: NDArray[np.float64],
    params: BoundSystemParams,
    streams: YuleStreams,
) -> BoundStepResult:
    n = params.N
    if len(config) != n:
        raise ValueError(f"config must hold exactly N={n} particles")
    kill_frac = 1.0 - math.exp(-params.delta)
    if params.side == "lower":
        removed = round(n * params.p * kill_frac)
    else:
        removed = round(n * (1.0 - params.p) * kill_frac)
    if removed >= n:
        raise ValueError("removal count reached N; shrink delta or N")
    survivors = config[removed:] if params.side == "lower" else config[: n - removed]
    grown = _free_bbm(survivors, params.delta, streams)
    pre = int(grown.size)
    padded = pre < n
    if params.side == "lower":
        if padded:
            out = np.concatenate([np.full(n - pre, grown[0]), grown])
        else:
            out = grown[:n]
    else:
        if padded:
            out = np.concatenate([grown, np.full(n - pre, grown[-1])])
        else:
            out = grown[pre - n :]
    return BoundStepResult(out, removed, pre, padded)


def lower_step(
    config,
    params: BoundSystemParams,
    src: RandomSource | None = None,
    *,
    streams: YuleStreams | None = None,
    mirror: bool = False,
) -> BoundStepResult:
    """One step of the lower bounding system.

    Removes round(N p (1-e^{-delta})) leftmost particles, branches freely for
    delta, keeps the N leftmost survivors.  Too few survivors (possible but
    vanishingly rare at practical sizes) pad with copies of the leftmost and
    set the ``padded`` flag.
    """
    if params.side != "lower":
        raise ValueError("params.side must be 'lower'")
    if (src is None) == (streams is None):
        raise ValueError("pass exactly one of src and streams")
    if streams is None:
        streams = YuleStreams(src)
    if mirror:
        streams = streams.mirrored()
    return _one_step(np.asarray(config, dtype=np.float64), params, streams)


def upper_step(
    config,
    params: BoundSystemParams,
    src: RandomSource | None = None,
    *,
    streams: YuleStreams | None = None,
    mirror: bool = False,
) -> BoundStepResult:
    """Mirror image of :func:`lower_step`: trims the right, keeps the N
    rightmost, pads (if ever needed) with copies of the rightmost."""
    if params.side != "upper":
        raise ValueError("params.side must be 'upper'")
    if (src is None) == (streams is None):
        raise ValueError("pass exactly one of src and streams")
    if streams is None:
        streams = YuleStreams(src)
    if mirror:
        streams = streams.mirrored()
    return _one_step(np.asarray(config, dtype=np.float64), params, streams)


@dataclass(frozen=True)
class BoundsRun:
    """Configs at times 0, delta, ..., k*delta plus per-step metadata."""

    configs: list[NDArray[np.float64]]
    steps: list[BoundStepResult]


def run_bounds(
    init,
    params: BoundSystemParams,
    k_steps: int,
    src: RandomSource,
) -> BoundsRun:
    """Iterate one bounding system k_steps times, recording every config."""
    if k_steps < 0:
        raise ValueError("k_steps must be non-negative")
    config = np.sort(np.asarray(init, dtype=np.float64), kind="stable")
    streams = YuleStreams(src)
    configs = [config]
    steps: list[BoundStepResult] = []
    for _ in range(k_steps):
        res = _one_step(config, params, streams)
        config = res.config
        configs.append(config)
        steps.append(res)
    return BoundsRun(configs, steps)


def bounds_metadata_to_json(run: BoundsRun, params: BoundSystemParams, path) -> None:
    """JSON sidecar with per-step removal counts, sizes, and fallback flags."""
    payload = {
        "N": params.N,
        "p": params.p,
        "delta": params.delta,
        "side": params.side,
        "steps": [
            {
                "removed": s.removed,
                "pre_truncation_size": s.pre_truncation_size,
                "padded": s.padded,
            }
            for s in run.steps
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
