"""Markovian consistency of the components of a multivariate chain.

The conditional law operator ``Theta`` maps the joint law at ``t`` to the law
of the full state given the state of one component; ``Phi`` extends a function
of one component to the product space. Strong consistency is decided by the
hyperplane-sum condition on generator rows, weak consistency by the
intertwining identity or, failing that, by searching for a violation of the
Markov identity over sampled partitions.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .chain import PiecewiseConstantGenerator, StateSpace
from .exceptions import DomainError, UndefinedThetaError
from .semigroup import TransitionCache, propagate, transition_matrix

logger = logging.getLogger(__name__)

RATE_TOLERANCE = 1e-12
SEMIGROUP_TOLERANCE = 1e-9
IDENTITY_TOLERANCE = 1e-8
MAX_PARTITION_POINTS = 5

STRONG = "strong"
WEAK_ONLY = "weak-only"
WEAK = "weak"
NOT_WEAK = "not-weak"
UNDETERMINED = "undetermined"

__all__ = (
    "ThetaOperator",
    "PhiOperator",
    "theta",
    "theta_from_law",
    "phi",
    "marginal_generator",
    "aggregated_marginal_semigroup",
    "check_condition_M",
    "check_condition_P",
    "check_intertwining",
    "check_positivity",
    "check_reachable_condition_P",
    "check_markov_identity_sampled",
    "check_law_matching",
    "contagion_rates",
    "has_contagion",
    "classify",
    "default_grid",
    "default_partitions",
    "ConsistencyReport",
)


@dataclass(frozen=True, eq=False)
class ThetaOperator:
    space: StateSpace
    component: int
    t: float
    entries: np.ndarray
    defined: Tuple[bool, ...]

    def row(self, xi):
        if not self.defined[xi]:
            raise UndefinedThetaError(self.component, xi, self.t)
        return self.entries[xi]


@dataclass(frozen=True, eq=False)
class PhiOperator:
    space: StateSpace
    component: int
    entries: np.ndarray


def phi(space, i):
    """0/1 matrix with entry ``(x, xi) = 1`` iff the i-th coordinate of x is xi."""
    coord = space.coordinate(i)
    entries = np.zeros((space.size, space.component_sizes[i]))
    entries[np.arange(space.size), coord] = 1.0
    entries.setflags(write=False)
    return PhiOperator(space, i, entries)


def theta_from_law(law, i, t):
    space = law.space
    space.check_component(i)
    coord = space.coordinate(i)
    size = space.component_sizes[i]
    entries = np.zeros((size, space.size))
    defined = []
    for xi in range(size):
        mask = coord == xi
        mass = law.probs[mask].sum()
        defined.append(bool(mass > 0))
        if mass > 0:
            entries[xi, mask] = law.probs[mask] / mass
    entries.setflags(write=False)
    return ThetaOperator(space, i, float(t), entries, tuple(defined))


def theta(g, d0, i, t):
    """Conditional law of the full state at ``t`` given component ``i``.

    Rows whose conditioning state has zero probability are flagged undefined.
    """
    return theta_from_law(propagate(d0, g, t), i, t)


def _marginal_rates(th, rates):
    defined_rows = [xi for xi, ok in enumerate(th.defined) if ok]
    phi_i = phi(th.space, th.component).entries
    return th.entries @ rates @ phi_i, defined_rows


def marginal_generator(g, d0, i, t):
    """``Theta_t Lambda_t Phi`` for component ``i``; every row must be defined."""
    th = theta(g, d0, i, t)
    for xi, ok in enumerate(th.defined):
        if not ok:
            raise UndefinedThetaError(i, xi, t)
    rates, _ = _marginal_rates(th, g.rates(t))
    return rates


def aggregated_marginal_semigroup(g, d0, i, t, s):
    """``Theta_t P_{t,s} Phi``: the transition matrix of component ``i`` if it is Markov."""
    th = theta(g, d0, i, t)
    return th.entries @ transition_matrix(g, t, s).entries @ phi(g.space, i).entries


def default_grid(g, horizon=None):
    """Breakpoints, midpoints and endpoints of ``g`` up to ``horizon``."""
    return g.sample_times(horizon)


@dataclass(frozen=True)
class ConditionWitness:
    component: int
    x: tuple
    x_hat: tuple
    target: int
    values: Tuple[float, float]
    segment: Optional[int] = None
    t: Optional[float] = None
    s: Optional[float] = None

    def __str__(self):
        where = (
            "segment %d" % self.segment
            if self.segment is not None
            else "(t, s) = (%g, %g)" % (self.t, self.s)
        )
        return "%s: X^%d from %r vs %r into %d: %.6g vs %.6g" % (
            where,
            self.component + 1,
            self.x,
            self.x_hat,
            self.target,
            self.values[0],
            self.values[1],
        )


@dataclass(frozen=True)
class ConditionReport:
    holds: Tuple[bool, ...]
    witnesses: Tuple[Optional[ConditionWitness], ...]
    t: Optional[float] = None
    s: Optional[float] = None

    @property
    def all_hold(self):
        return all(self.holds)


def _hyperplane_violation(space, matrix, i, tolerance, include_own, rows=None):
    """First ``(x, x_hat, target, values)`` whose hyperplane sums differ."""
    sums = matrix @ phi(space, i).entries
    allowed = None if rows is None else set(int(r) for r in rows)
    for xi in range(space.component_sizes[i]):
        members = space.hyperplane(i, xi)
        if allowed is not None:
            members = [x for x in members if x in allowed]
        if len(members) < 2:
            continue
        first = members[0]
        for other in members[1:]:
            for yi in range(space.component_sizes[i]):
                if yi == xi and not include_own:
                    continue
                a, b = sums[first, yi], sums[other, yi]
                if abs(a - b) > tolerance:
                    return (space.state(first), space.state(other), yi, (a, b))
    return None


def _generator_pieces(g):
    if isinstance(g, PiecewiseConstantGenerator):
        return list(enumerate(g.matrices))
    return [
        (int(np.searchsorted(g.breakpoints, t, side="right") - 1), g.rates(t))
        for t in g.sample_times()
    ]


def check_condition_M(g):
    """Equal hyperplane rate sums on every segment, per component."""
    holds, witnesses = [], []
    for i in range(g.space.m):
        witness = None
        for segment, matrix in _generator_pieces(g):
            found = _hyperplane_violation(g.space, matrix, i, RATE_TOLERANCE, False)
            if found:
                x, x_hat, target, values = found
                witness = ConditionWitness(i, x, x_hat, target, values, segment=segment)
                break
        holds.append(witness is None)
        witnesses.append(witness)
    return ConditionReport(tuple(holds), tuple(witnesses))


def _condition_P_from_matrix(space, P, t, s, rows=None):
    holds, witnesses = [], []
    for i in range(space.m):
        found = _hyperplane_violation(space, P, i, SEMIGROUP_TOLERANCE, True, rows)
        witness = None
        if found:
            x, x_hat, target, values = found
            witness = ConditionWitness(i, x, x_hat, target, values, t=t, s=s)
        holds.append(witness is None)
        witnesses.append(witness)
    return ConditionReport(tuple(holds), tuple(witnesses), t, s)


def check_condition_P(g, t, s):
    """Equal hyperplane sums of ``P_{t,s}`` rows, per component."""
    P = transition_matrix(g, t, s).entries
    return _condition_P_from_matrix(g.space, P, t, s)


@dataclass(frozen=True)
class IntertwiningReport:
    max_residual: Tuple[float, ...]
    worst_pair: Tuple[Optional[Tuple[float, float]], ...]
    excluded: Tuple[Tuple[int, float, float], ...] = ()

    @property
    def holds(self):
        return all(r < IDENTITY_TOLERANCE for r in self.max_residual)

    def holds_for(self, i):
        return self.max_residual[i] < IDENTITY_TOLERANCE


def check_intertwining(g, d0, marginals=None, grid=None, cache=None):
    """Largest residual of ``Theta_t P_{t,s} = Phat_{t,s} Theta_s`` over grid pairs.

    Without ``marginals`` the component semigroup is the aggregation
    ``Theta_t P_{t,s} Phi``. Pairs that need an undefined conditional row are
    excluded and listed.
    """
    grid = sorted(set(grid if grid is not None else default_grid(g)))
    cache = cache or TransitionCache(g, grid)
    laws = cache.laws_cached(d0)
    thetas = {
        i: {t: theta_from_law(laws[round(t, 9)], i, t) for t in grid}
        for i in range(g.space.m)
    }
    residuals, worst, excluded = [], [], []
    for i in range(g.space.m):
        phi_i = phi(g.space, i).entries
        best, where = 0.0, None
        for a, t in enumerate(grid):
            th_t = thetas[i][t]
            for s in grid[a + 1 :]:
                th_s = thetas[i][s]
                P = cache.between(t, s)
                if marginals is not None:
                    P_hat = transition_matrix(marginals[i], t, s).entries
                else:
                    P_hat = th_t.entries @ P @ phi_i
                for xi, ok in enumerate(th_t.defined):
                    if not ok:
                        continue
                    needed = [yi for yi in range(len(th_s.defined)) if P_hat[xi, yi] > 0]
                    if any(not th_s.defined[yi] for yi in needed):
                        excluded.append((i, t, s))
                        continue
                    lhs = th_t.entries[xi] @ P
                    rhs = sum(P_hat[xi, yi] * th_s.entries[yi] for yi in needed)
                    residual = float(np.max(np.abs(lhs - rhs)))
                    if residual > best:
                        best, where = residual, (t, s)
        logger.debug("intertwining residual for component %d: %.3e", i, best)
        residuals.append(best)
        worst.append(where)
    return IntertwiningReport(tuple(residuals), tuple(worst), tuple(excluded))


@dataclass(frozen=True)
class PositivityReport:
    zero_states: Tuple[Tuple[float, tuple], ...] = ()

    @property
    def holds(self):
        return not self.zero_states


def check_positivity(g, d0, grid, cache=None):
    """Strict positivity of the propagated law at grid times ``t > 0``."""
    times = sorted({t for t in grid if t > 0})
    cache = cache or TransitionCache(g, [0.0] + times)
    laws = cache.laws_cached(d0)
    zeros = []
    for t in times:
        law = laws[round(t, 9)]
        zeros.extend((t, g.space.state(x)) for x in np.flatnonzero(law.probs <= 0))
    return PositivityReport(tuple(zeros))


def check_reachable_condition_P(g, d0, grid, cache=None):
    """Condition (P) restricted to states with positive probability at ``t``.

    A violation certifies that strong consistency fails even when the law is
    not strictly positive.
    """
    grid = sorted(set(grid))
    cache = cache or TransitionCache(g, grid)
    laws = cache.laws_cached(d0)
    witnesses = [None] * g.space.m
    for a, t in enumerate(grid):
        if t <= 0:
            continue
        rows = np.flatnonzero(laws[round(t, 9)].probs > 0)
        for s in grid[a + 1 :]:
            report = _condition_P_from_matrix(g.space, cache.between(t, s), t, s, rows)
            for i, w in enumerate(report.witnesses):
                if witnesses[i] is None and w is not None:
                    witnesses[i] = w
    holds = tuple(w is None for w in witnesses)
    return ConditionReport(holds, tuple(witnesses))


@dataclass(frozen=True)
class IdentityWitness:
    partition: Tuple[float, ...]
    path: Tuple[int, ...]
    target: int
    value: float


@dataclass(frozen=True)
class MarkovIdentityVerdict:
    component: int
    checked: int
    max_abs: float
    witness: Optional[IdentityWitness] = None
    skipped: Tuple[Tuple[Tuple[float, ...], Tuple[int, ...]], ...] = ()

    @property
    def falsified(self):
        return self.witness is not None


def _validate_partition(partition, s):
    points = tuple(float(p) for p in partition)
    if not points or len(points) > MAX_PARTITION_POINTS:
        raise DomainError(
            "partitions need 1 to %d points, got %r" % (MAX_PARTITION_POINTS, points)
        )
    if points[0] < 0 or any(b <= a for a, b in zip(points, points[1:])):
        raise DomainError("partition %r is not increasing" % (points,))
    if points[-1] > s:
        raise DomainError("partition %r ends after s=%g" % (points, s))
    return points


def check_markov_identity_sampled(g, d0, i, partitions, s):
    """Search for a violation of the Markov identity of component ``i``.

    For each partition ``t_0 < ... < t_n = t`` and each path of component ``i``
    over it, the law of the full state at ``t`` given that path is obtained by
    summing over all full-state paths; its deviation from ``Theta_t`` must be
    annihilated by the aggregated transition matrix to ``s``.
    """
    g.space.check_component(i)
    coord = g.space.coordinate(i)
    phi_i = phi(g.space, i).entries
    size = g.space.component_sizes[i]
    checked, max_abs, skipped = 0, 0.0, []
    for partition in partitions:
        points = _validate_partition(partition, s)
        start = propagate(d0, g, points[0]).probs
        steps = [transition_matrix(g, a, b).entries for a, b in zip(points, points[1:])]
        t = points[-1]
        law_t = start @ _chain_product(steps, g.space.size)
        to_s = transition_matrix(g, t, s).entries @ phi_i
        for path in itertools.product(range(size), repeat=len(points)):
            alpha = start * (coord == path[0])
            for step, xi in zip(steps, path[1:]):
                alpha = (alpha @ step) * (coord == xi)
            mass = alpha.sum()
            if mass <= 0:
                skipped.append((points, path))
                continue
            mask = coord == path[-1]
            conditional = np.where(mask, law_t, 0.0) / law_t[mask].sum()
            xi_vector = alpha / mass - conditional
            values = xi_vector @ to_s
            checked += 1
            k = int(np.argmax(np.abs(values)))
            max_abs = max(max_abs, float(abs(values[k])))
            if abs(values[k]) > IDENTITY_TOLERANCE:
                witness = IdentityWitness(points, tuple(path), k, float(values[k]))
                logger.debug("Markov identity violated: %r", witness)
                return MarkovIdentityVerdict(i, checked, max_abs, witness, tuple(skipped))
    return MarkovIdentityVerdict(i, checked, max_abs, None, tuple(skipped))


def _chain_product(steps, n):
    result = np.eye(n)
    for step in steps:
        result = result @ step
    return result


def default_partitions(grid):
    """A handful of partitions of length 3 and 4 spread over the grid."""
    horizon = max(grid)
    partitions = []
    for fraction in (0.25, 0.5, 0.75):
        t = fraction * horizon
        partitions.append((0.0, t / 2.0, t))
        partitions.append((0.0, t / 3.0, 2.0 * t / 3.0, t))
    return partitions, horizon


@dataclass(frozen=True)
class LawMatchingReport:
    max_error: Tuple[float, ...]
    skipped: Tuple[Tuple[int, float, int], ...] = ()
    tolerance: float = IDENTITY_TOLERANCE

    @property
    def holds(self):
        return all(e < self.tolerance for e in self.max_error)


def check_law_matching(g, d0, marginals, times, tolerance=IDENTITY_TOLERANCE):
    """Compare the defined rows of ``Theta_t Lambda_t Phi`` with prescribed rates."""
    cache = TransitionCache(g, times)
    laws = cache.laws_cached(d0)
    errors, skipped = [], []
    for i, marginal in enumerate(marginals):
        worst = 0.0
        for t in times:
            th = theta_from_law(laws[round(t, 9)], i, t)
            extracted, rows = _marginal_rates(th, g.rates(t))
            prescribed = marginal.rates(t)
            skipped.extend((i, t, xi) for xi, ok in enumerate(th.defined) if not ok)
            if rows:
                diff = np.abs(extracted[rows] - prescribed[rows])
                worst = max(worst, float(diff.max()))
        errors.append(worst)
    return LawMatchingReport(tuple(errors), tuple(skipped), tolerance)


def contagion_rates(g, t, i, others):
    """Aggregate jump rates of component ``i`` with the others held at ``others``.

    Returns ``{(xi, yi): rate}`` summing the rates into the hyperplane of
    ``yi``.
    """
    space = g.space
    space.check_component(i)
    others = tuple(others)
    if len(others) != space.m - 1:
        raise DomainError("need %d conditioning states, got %r" % (space.m - 1, others))
    sums = g.rates(t) @ phi(space, i).entries
    rates = {}
    for xi in range(space.component_sizes[i]):
        x = space.index(others[:i] + (xi,) + others[i:])
        for yi in range(space.component_sizes[i]):
            if yi != xi:
                rates[(xi, yi)] = float(sums[x, yi])
    return rates


def has_contagion(g, t, i):
    space = g.space
    ranges = [range(n) for k, n in enumerate(space.component_sizes) if k != i]
    maps = [contagion_rates(g, t, i, others) for others in itertools.product(*ranges)]
    first = maps[0]
    return any(
        abs(m[key] - first[key]) > RATE_TOLERANCE for m in maps[1:] for key in first
    )


@dataclass(frozen=True)
class ComponentVerdict:
    component: int
    label: str
    evidence: str
    witness: object = None


@dataclass(frozen=True)
class ConsistencyReport:
    classification: str
    components: Tuple[ComponentVerdict, ...]
    condition_M: ConditionReport
    condition_P: Tuple[ConditionReport, ...] = ()
    intertwining: Optional[IntertwiningReport] = None
    positivity: Optional[PositivityReport] = None
    markov_identity: Tuple[MarkovIdentityVerdict, ...] = field(default=())

    def summary(self):
        lines = ["classification: %s" % self.classification]
        for v in self.components:
            line = "  X^%d: %s (%s)" % (v.component + 1, v.label, v.evidence)
            if v.witness is not None:
                line += " witness %s" % (v.witness,)
            lines.append(line)
        return "\n".join(lines)


def _aggregate(labels):
    if all(label == STRONG for label in labels):
        return STRONG
    for label in (NOT_WEAK, UNDETERMINED, WEAK_ONLY):
        if label in labels:
            return label
    return WEAK


def classify(g, d0, grid=None, marginals=None):
    """Classify the structure as strong, weak-only, weak, not-weak or undetermined.

    A component satisfying the hyperplane-sum rate condition is strong. Other
    components are weakly consistent when the intertwining identity holds or
    the sampled Markov identity is not falsified; they are weak-only when in
    addition the law is positive for ``t > 0`` or a reachable-state violation
    of the semigroup condition exists.
    """
    grid = sorted(set(grid if grid is not None else default_grid(g)))
    cond_m = check_condition_M(g)
    if cond_m.all_hold:
        verdicts = tuple(
            ComponentVerdict(i, STRONG, "condition M") for i in range(g.space.m)
        )
        return ConsistencyReport(STRONG, verdicts, cond_m)

    cache = TransitionCache(g, grid)
    cond_p = tuple(
        _condition_P_from_matrix(g.space, cache.between(t, s), t, s)
        for t, s in zip(grid, grid[1:])
    )
    intertwining = check_intertwining(g, d0, marginals, grid, cache)
    positivity = check_positivity(g, d0, grid, cache)
    reachable = None
    partitions, horizon = default_partitions(grid)
    identities, verdicts = [], []
    for i in range(g.space.m):
        if cond_m.holds[i]:
            verdicts.append(ComponentVerdict(i, STRONG, "condition M"))
            continue
        if intertwining.holds_for(i):
            evidence = "intertwining"
        else:
            identity = check_markov_identity_sampled(g, d0, i, partitions, horizon)
            identities.append(identity)
            if identity.falsified:
                verdicts.append(
                    ComponentVerdict(i, NOT_WEAK, "Markov identity", identity.witness)
                )
                continue
            if identity.checked == 0:
                verdicts.append(ComponentVerdict(i, UNDETERMINED, "no evidence"))
                continue
            evidence = "Markov identity not falsified"
        if positivity.holds:
            verdicts.append(
                ComponentVerdict(i, WEAK_ONLY, evidence, cond_m.witnesses[i])
            )
            continue
        if reachable is None:
            reachable = check_reachable_condition_P(g, d0, grid, cache)
        if reachable.witnesses[i] is not None:
            verdicts.append(
                ComponentVerdict(i, WEAK_ONLY, evidence, reachable.witnesses[i])
            )
        else:
            verdicts.append(ComponentVerdict(i, WEAK, evidence))

    label = _aggregate([v.label for v in verdicts])
    logger.info("classified structure as %s", label)
    return ConsistencyReport(
        label,
        tuple(verdicts),
        cond_m,
        cond_p,
        intertwining,
        positivity,
        tuple(identities),
    )
