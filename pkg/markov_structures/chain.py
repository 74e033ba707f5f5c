"""State spaces, distributions and time-inhomogeneous generators.

States of a product space are tuples ``(x1, ..., xm)`` of 0-based ratings and
are enumerated lexicographically with the first component most significant, so
that the generator of independent components is a Kronecker sum in this
enumeration.
"""
import bisect
import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import DomainError, GeneratorValidationError

logger = logging.getLogger(__name__)

RATE_TOLERANCE = 1e-12
PROBABILITY_TOLERANCE = 1e-12

__all__ = (
    "StateSpace",
    "PiecewiseConstantFn",
    "PiecewiseConstantGenerator",
    "RateFunctionGenerator",
    "DefaultIntensityGenerator",
    "KroneckerSumGenerator",
    "PermutedGenerator",
    "Distribution",
    "Violation",
    "ValidationReport",
    "validate_generator",
    "ensure_valid",
    "evaluate_generator",
    "marginal_distribution",
    "discounted_integral",
    "merge_breakpoints",
    "combine",
    "kronecker_sum",
    "with_diagonal",
)


def _readonly(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def with_diagonal(offdiag):
    """Return a copy of ``offdiag`` whose diagonal is minus the off-diagonal row sum."""
    matrix = np.array(offdiag, dtype=float)
    np.fill_diagonal(matrix, 0.0)
    np.fill_diagonal(matrix, -matrix.sum(axis=1))
    return matrix


def kronecker_sum(matrices):
    """Kronecker sum ``A1 (+) ... (+) Am`` in lexicographic enumeration."""
    sizes = [m.shape[0] for m in matrices]
    total = np.zeros((int(np.prod(sizes)),) * 2)
    for j, matrix in enumerate(matrices):
        term = np.ones((1, 1))
        for k, size in enumerate(sizes):
            term = np.kron(term, matrix if k == j else np.eye(size))
        total += term
    return total


def merge_breakpoints(*collections):
    merged = sorted({float(v) for coll in collections for v in coll} | {0.0})
    return tuple(merged)


@dataclass(frozen=True)
class StateSpace:
    component_sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.component_sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise DomainError("component sizes must be positive, got %r" % (sizes,))
        object.__setattr__(self, "component_sizes", sizes)

    @classmethod
    def default_space(cls, m, K=1):
        """The space ``{0..K}^m`` of m institutions with default rating K."""
        return cls((K + 1,) * m)

    @property
    def m(self):
        return len(self.component_sizes)

    @property
    def size(self):
        return int(np.prod(self.component_sizes))

    @cached_property
    def states(self):
        return tuple(itertools.product(*(range(s) for s in self.component_sizes)))

    @cached_property
    def _coordinates(self):
        coords = np.array(self.states, dtype=int).reshape(self.size, self.m)
        coords.setflags(write=False)
        return coords

    def index(self, state):
        state = tuple(state)
        if len(state) != self.m or any(
            not 0 <= x < s for x, s in zip(state, self.component_sizes)
        ):
            raise DomainError("state %r is not in %r" % (state, self))
        flat = 0
        for x, s in zip(state, self.component_sizes):
            flat = flat * s + x
        return flat

    def state(self, index):
        if not 0 <= index < self.size:
            raise DomainError("index %d out of range for %r" % (index, self))
        return self.states[index]

    def check_component(self, i):
        if not isinstance(i, (int, np.integer)) or not 0 <= i < self.m:
            raise DomainError(
                "component index %r out of range (0..%d)" % (i, self.m - 1)
            )

    def coordinate(self, i):
        """Array holding the i-th coordinate of every flat state."""
        self.check_component(i)
        return self._coordinates[:, i]

    def hyperplane(self, i, xi):
        """Flat indices of the states whose i-th coordinate equals ``xi``."""
        return np.flatnonzero(self.coordinate(i) == xi)

    def component_space(self, i):
        self.check_component(i)
        return StateSpace((self.component_sizes[i],))


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """Right-continuous step function on ``[0, inf)``.

    ``values[k]`` applies on ``[breakpoints[k], breakpoints[k+1])`` and the last
    value on ``[breakpoints[-1], inf)``.
    """

    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        bps = tuple(float(v) for v in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if not bps or bps[0] != 0.0:
            raise DomainError("breakpoints must start at 0, got %r" % (bps,))
        if any(b <= a for a, b in zip(bps, bps[1:])):
            raise DomainError("breakpoints must be strictly increasing: %r" % (bps,))
        if len(vals) != len(bps):
            raise DomainError(
                "%d values given for %d breakpoints" % (len(vals), len(bps))
            )
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value):
        return cls((0.0,), (value,))

    def __call__(self, t):
        if t < 0:
            raise DomainError("time must be nonnegative, got %r" % t)
        return self.values[bisect.bisect_right(self.breakpoints, t) - 1]

    def __eq__(self, other):
        if not isinstance(other, PiecewiseConstantFn):
            return NotImplemented
        return self.breakpoints == other.breakpoints and self.values == other.values

    def __hash__(self):
        return hash((self.breakpoints, self.values))

    def __add__(self, other):
        return combine(lambda u, v: u + v, self, other)

    def __sub__(self, other):
        return combine(lambda u, v: u - v, self, other)

    def scaled(self, factor):
        return PiecewiseConstantFn(self.breakpoints, [factor * v for v in self.values])

    def segments(self, t):
        """Yield ``(start, end, value)`` for the pieces covering ``[0, t]``."""
        bps = self.breakpoints + (np.inf,)
        for k, value in enumerate(self.values):
            start, end = bps[k], min(bps[k + 1], t)
            if start >= t:
                break
            yield start, end, value

    def integral(self, t):
        """Integral of the function over ``[0, t]``."""
        return float(sum((end - start) * v for start, end, v in self.segments(t)))

    def is_positive(self):
        return all(v > 0 for v in self.values)


def combine(op, *fns):
    bps = merge_breakpoints(*(f.breakpoints for f in fns))
    return PiecewiseConstantFn(bps, [op(*(f(b) for f in fns)) for b in bps])


def _expm1_ratio(x):
    # (1 - exp(-x)) / x, continuous at 0
    return 1.0 if x == 0.0 else -np.expm1(-x) / x


def discounted_integral(weight, rate, t):
    """Exact value of ``int_0^t w(v) exp(-int_0^v r) dv`` for step functions."""
    bps = merge_breakpoints(weight.breakpoints, rate.breakpoints)
    total, cumulative = 0.0, 0.0
    for k, start in enumerate(bps):
        if start >= t:
            break
        end = min(bps[k + 1], t) if k + 1 < len(bps) else t
        length = end - start
        w, r = weight(start), rate(start)
        total += w * np.exp(-cumulative) * length * _expm1_ratio(r * length)
        cumulative += r * length
    return float(total)


class _Generator(object):
    """Common interface of the generator kinds."""

    space: StateSpace
    breakpoints: Tuple[float, ...]

    def rates(self, t):
        raise NotImplementedError

    def sample_times(self, horizon=None):
        """Breakpoints, midpoints between them and the horizon."""
        if horizon is None:
            last = self.breakpoints[-1]
            horizon = last + 1.0 if last > 0 else 1.0
        knots = sorted({b for b in self.breakpoints if b < horizon} | {float(horizon)})
        times = set(knots)
        times.update(0.5 * (a + b) for a, b in zip(knots, knots[1:]))
        return sorted(times)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantGenerator(_Generator):
    """Generator constant on ``[breakpoints[k], breakpoints[k+1])``."""

    space: StateSpace
    breakpoints: Tuple[float, ...]
    matrices: Tuple[np.ndarray, ...]

    def __post_init__(self):
        bps = tuple(float(v) for v in self.breakpoints)
        if not bps or bps[0] != 0.0 or any(b <= a for a, b in zip(bps, bps[1:])):
            raise DomainError("breakpoints must start at 0 and increase: %r" % (bps,))
        mats = tuple(_readonly(m) for m in self.matrices)
        if len(mats) != len(bps):
            raise DomainError(
                "%d segment matrices for %d breakpoints" % (len(mats), len(bps))
            )
        n = self.space.size
        for k, m in enumerate(mats):
            if m.shape != (n, n):
                raise DomainError(
                    "segment %d has shape %r, expected %r" % (k, m.shape, (n, n))
                )
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "matrices", mats)

    @classmethod
    def constant(cls, space, matrix):
        return cls(space, (0.0,), (matrix,))

    @classmethod
    def from_builder(cls, space, breakpoints, build):
        """Build one matrix per segment with ``build(t)`` at the segment start."""
        bps = tuple(breakpoints)
        return cls(space, bps, tuple(build(b) for b in bps))

    def segment_index(self, t):
        return bisect.bisect_right(self.breakpoints, t) - 1

    def rates(self, t):
        return self.matrices[self.segment_index(t)]

    def segments(self, t, s):
        """Yield ``(start, end, matrix)`` for the pieces of ``[t, s]``."""
        k = self.segment_index(t)
        start = t
        while start < s:
            end = self.breakpoints[k + 1] if k + 1 < len(self.breakpoints) else np.inf
            end = min(end, s)
            yield start, end, self.matrices[k]
            start = end
            k += 1


class RateFunctionGenerator(_Generator):
    """Generator given by a rate function smooth between breakpoints."""

    def __init__(self, space, rate_fn, breakpoints=(0.0,)):
        self.space = space
        self.rate_fn = rate_fn
        self.breakpoints = merge_breakpoints(breakpoints)

    def rates(self, t):
        matrix = np.asarray(self.rate_fn(t), dtype=float)
        n = self.space.size
        if matrix.shape != (n, n):
            raise DomainError("rate function returned shape %r" % (matrix.shape,))
        return matrix


class DefaultIntensityGenerator(RateFunctionGenerator):
    """Two-state component (0 alive, 1 default) with intensity ``intensity(t)``.

    ``survival`` is the optional closed form of ``exp(-int_0^t intensity)``;
    transitions use it exactly when present.
    """

    def __init__(self, intensity, survival=None, breakpoints=(0.0,)):
        self.intensity = intensity
        self.survival = survival
        super(DefaultIntensityGenerator, self).__init__(
            StateSpace((2,)), self._matrix, breakpoints
        )

    def _matrix(self, t):
        lam = float(self.intensity(t))
        return np.array([[-lam, lam], [0.0, 0.0]])


class KroneckerSumGenerator(_Generator):
    """Generator of independent components, ``sum_j I (x) ... (x) A_j (x) ... (x) I``."""

    def __init__(self, factors):
        self.factors = tuple(factors)
        if not self.factors:
            raise DomainError("at least one factor is required")
        sizes = []
        for f in self.factors:
            sizes.extend(f.space.component_sizes)
        self.space = StateSpace(tuple(sizes))
        self.breakpoints = merge_breakpoints(*(f.breakpoints for f in self.factors))

    def rates(self, t):
        return kronecker_sum([f.rates(t) for f in self.factors])


@dataclass(frozen=True)
class Violation:
    segment: int
    row: int
    condition: str
    time: Optional[float] = None

    def __str__(self):
        where = "segment %d" % self.segment
        if self.time is not None:
            where += " (t=%g)" % self.time
        return "%s, row %d: %s" % (where, self.row, self.condition)


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self):
        return not self.violations


def _matrix_violations(matrix, segment, time=None):
    found = []
    n = matrix.shape[0]
    for x in range(n):
        row = matrix[x]
        off = np.delete(row, x)
        if not np.all(np.isfinite(row)):
            found.append(Violation(segment, x, "non-finite rate", time))
            continue
        if np.any(off < 0):
            found.append(Violation(segment, x, "negative off-diagonal", time))
        if row[x] > 0:
            found.append(Violation(segment, x, "positive diagonal", time))
        if abs(row.sum()) > RATE_TOLERANCE:
            found.append(
                Violation(segment, x, "row sum %.3e is not zero" % row.sum(), time)
            )
    return found


def validate_generator(g, times=None):
    """Check the generator invariants segment by segment.

    Piecewise-constant generators are checked on every segment matrix; other
    kinds on ``times`` (default: their sample times).
    """
    violations = []
    if isinstance(g, PiecewiseConstantGenerator):
        for k, matrix in enumerate(g.matrices):
            violations.extend(_matrix_violations(matrix, k))
    else:
        for t in times if times is not None else g.sample_times():
            k = bisect.bisect_right(g.breakpoints, t) - 1
            violations.extend(_matrix_violations(g.rates(t), k, t))
    if violations:
        logger.debug("generator validation found %d violations", len(violations))
    return ValidationReport(tuple(violations))


def ensure_valid(g):
    report = validate_generator(g)
    if not report.ok:
        raise GeneratorValidationError(report)
    return g


def evaluate_generator(g, t):
    """Rate matrix in force at ``t`` (right-continuous)."""
    if t < 0:
        raise DomainError("time must be nonnegative, got %r" % t)
    return g.rates(t)


@dataclass(frozen=True, eq=False)
class Distribution:
    space: StateSpace
    probs: np.ndarray

    def __post_init__(self):
        probs = _readonly(self.probs)
        if probs.shape != (self.space.size,):
            raise DomainError(
                "distribution has shape %r, expected (%d,)"
                % (probs.shape, self.space.size)
            )
        if np.any(probs < 0):
            raise DomainError("distribution has negative entries")
        if abs(probs.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise DomainError("distribution sums to %r" % probs.sum())
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point_mass(cls, space, state):
        probs = np.zeros(space.size)
        probs[space.index(state)] = 1.0
        return cls(space, probs)

    @classmethod
    def uniform(cls, space):
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def product(cls, dists: Sequence["Distribution"]):
        probs = np.ones(1)
        sizes = []
        for d in dists:
            probs = np.kron(probs, d.probs)
            sizes.extend(d.space.component_sizes)
        return cls(StateSpace(tuple(sizes)), probs)

    def __getitem__(self, state):
        return float(self.probs[self.space.index(state)])

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.probs, other.probs)

    __hash__ = None

    def is_positive(self):
        return bool(np.all(self.probs > 0))


def marginal_distribution(d, i):
    """Law of component ``i`` obtained by summing the joint law over hyperplanes."""
    d.space.check_component(i)
    coord = d.space.coordinate(i)
    probs = np.bincount(coord, weights=d.probs, minlength=d.space.component_sizes[i])
    return Distribution(d.space.component_space(i), probs)


class PermutedGenerator(_Generator):
    """``inner`` relabelled by ``perm``: old flat index ``x`` becomes ``perm[x]``."""

    def __init__(self, inner, perm, space):
        self.inner = inner
        self.perm = np.asarray(perm, dtype=int)
        self.space = space
        self.breakpoints = inner.breakpoints

    def conjugate(self, matrix):
        out = np.empty_like(matrix)
        out[np.ix_(self.perm, self.perm)] = matrix
        return out

    def rates(self, t):
        return self.conjugate(np.asarray(self.inner.rates(t), dtype=float))
