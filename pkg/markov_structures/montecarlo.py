"""Exact simulation of chains with piecewise-constant rates.

Within a segment the holding time in ``x`` is exponential with rate
``-L[x, x]``; at a segment boundary the remaining holding time is redrawn with
the new rate, which is exact by memorylessness.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .chain import PiecewiseConstantGenerator
from .exceptions import DomainError
from .measures import threshold_event_mask

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096

__all__ = (
    "SamplePath",
    "Estimate",
    "path_seed",
    "simulate",
    "simulate_paths",
    "simulate_states",
    "estimate_event",
    "empirical_marginal_law",
    "empirical_joint_law",
)


@dataclass(frozen=True)
class SamplePath:
    times: Tuple[float, ...]
    states: Tuple[tuple, ...]
    horizon: float

    def state_at(self, t):
        """State occupied at ``t`` (right-continuous)."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[k]

    @property
    def jumps(self):
        return tuple(zip(self.times[1:], self.states[:-1], self.states[1:]))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_paths: int


def _require_piecewise_constant(g):
    if not isinstance(g, PiecewiseConstantGenerator):
        raise DomainError(
            "exact simulation needs piecewise-constant rates, got %s" % type(g).__name__
        )


def path_seed(seed, index):
    """Seed of path ``index``: the ``index``-th child of ``SeedSequence(seed)``."""
    return np.random.SeedSequence(seed, spawn_key=(index,))


def _draw_target(rng, row, x):
    rates = np.where(np.arange(row.size) == x, 0.0, row)
    cumulative = np.cumsum(rates) / rates.sum()
    k = int(np.searchsorted(cumulative, rng.random(), side="right"))
    return min(k, row.size - 1)


def simulate(g, d0, horizon, seed):
    """One path on ``[0, horizon]``; identical seeds give identical paths."""
    _require_piecewise_constant(g)
    if horizon < 0:
        raise DomainError("horizon must be nonnegative, got %r" % horizon)
    rng = np.random.default_rng(seed)
    x = int(rng.choice(d0.space.size, p=d0.probs))
    times, states = [0.0], [d0.space.state(x)]
    for start, end, matrix in g.segments(0.0, horizon):
        clock = start
        while True:
            rate = -matrix[x, x]
            if rate <= 0:
                break
            clock += rng.exponential(1.0 / rate)
            if clock >= end:
                break
            x = _draw_target(rng, matrix[x], x)
            times.append(clock)
            states.append(d0.space.state(x))
    return SamplePath(tuple(times), tuple(states), float(horizon))


def simulate_paths(g, d0, horizon, n_paths, seed):
    """Independent paths, path ``k`` driven by ``path_seed(seed, k)``."""
    for k in range(n_paths):
        yield simulate(g, d0, horizon, path_seed(seed, k))


def simulate_states(g, d0, times, n_paths, seed, first_path=0):
    """States of ``n_paths`` paths at each of ``times``, shape ``(len(times), n_paths)``.

    Paths are simulated in blocks of ``BLOCK_SIZE``. The block starting at path
    ``k`` advances its paths together from ``path_seed(seed, k)``, so paths
    ``first_path, first_path + 1, ...`` come out the same however a run is split
    at multiples of ``BLOCK_SIZE``. Observation times split segments.
    """
    _require_piecewise_constant(g)
    if n_paths < 1:
        raise DomainError("n_paths must be positive, got %r" % n_paths)
    if first_path < 0 or first_path % BLOCK_SIZE:
        raise DomainError(
            "first_path must be a nonnegative multiple of %d, got %r"
            % (BLOCK_SIZE, first_path)
        )
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise DomainError("observation times must be nonnegative")
    observed = np.empty((len(times), n_paths), dtype=int)
    for start in range(0, n_paths, BLOCK_SIZE):
        stop = min(start + BLOCK_SIZE, n_paths)
        rng = np.random.default_rng(path_seed(seed, first_path + start))
        observed[:, start:stop] = _simulate_block(g, d0, times, stop - start, rng)
    logger.debug("simulated %d paths to horizon %g", n_paths, max(times, default=0.0))
    return observed


def _simulate_block(g, d0, times, n_paths, rng):
    state = rng.choice(d0.space.size, size=n_paths, p=d0.probs)
    observed = np.empty((len(times), n_paths), dtype=int)
    pending = list(np.argsort(times, kind="stable"))
    while pending and times[pending[0]] == 0.0:
        observed[pending.pop(0)] = state
    clock_start = 0.0
    for cut in sorted({t for t in times if t > 0}):
        for start, end, matrix in g.segments(clock_start, cut):
            state = _advance(rng, matrix, state, end - start)
        clock_start = cut
        while pending and times[pending[0]] == cut:
            observed[pending.pop(0)] = state
    return observed


def _advance(rng, matrix, state, length):
    """Run every path through one constant segment of duration ``length``."""
    exit_rates = -np.diag(matrix)
    offdiag = matrix - np.diag(np.diag(matrix))
    elapsed = np.zeros(state.size)
    active = exit_rates[state] > 0
    while np.any(active):
        idx = np.flatnonzero(active)
        rates = exit_rates[state[idx]]
        elapsed[idx] += rng.exponential(1.0 / rates)
        jumped = elapsed[idx] < length
        movers = idx[jumped]
        if movers.size:
            rows = offdiag[state[movers]]
            cumulative = np.cumsum(rows, axis=1) / rows.sum(axis=1, keepdims=True)
            cumulative[:, -1] = np.inf
            u = rng.random(movers.size)
            state[movers] = (u[:, None] < cumulative).argmax(axis=1)
        active = np.zeros(state.size, dtype=bool)
        active[movers] = exit_rates[state[movers]] > 0
    return state


def _binomial(hits):
    n = hits.size
    p = float(hits.mean())
    return Estimate(p, float(np.sqrt(p * (1.0 - p) / n)), n)


def estimate_event(g, d0, horizon, z, h, n_paths, seed, first_path=0):
    """Fraction of paths with ``#{i : X_horizon^i = z_i} >= h`` and its standard error."""
    mask = threshold_event_mask(d0.space, z, h)
    final = simulate_states(g, d0, [horizon], n_paths, seed, first_path)[0]
    return _binomial(mask[final] > 0)


def empirical_joint_law(g, d0, t, n_paths, seed):
    """Empirical law of ``X_t`` with per-state standard errors."""
    final = simulate_states(g, d0, [t], n_paths, seed)[0]
    counts = np.bincount(final, minlength=d0.space.size)
    probs = counts / n_paths
    return probs, np.sqrt(probs * (1.0 - probs) / n_paths)


def empirical_marginal_law(g, d0, i, times, n_paths, seed):
    """Empirical law of component ``i`` at each time, with standard errors."""
    d0.space.check_component(i)
    observed = simulate_states(g, d0, times, n_paths, seed)
    coord = d0.space.coordinate(i)
    size = d0.space.component_sizes[i]
    laws = []
    for row in observed:
        probs = np.bincount(coord[row], minlength=size) / n_paths
        laws.append((probs, np.sqrt(probs * (1.0 - probs) / n_paths)))
    return laws
