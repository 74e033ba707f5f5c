"""Markov structures: joint chains whose components follow prescribed laws.

Builders cover the independence structure, the strong common-jump family and
the dependence families used in the numerical studies, plus a discrete-time
solver that assembles a weak structure step by step from marginal rates.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import nnls

from .chain import (
    DefaultIntensityGenerator,
    Distribution,
    KroneckerSumGenerator,
    PermutedGenerator,
    PiecewiseConstantFn,
    PiecewiseConstantGenerator,
    RateFunctionGenerator,
    StateSpace,
    discounted_integral,
    kronecker_sum,
    marginal_distribution,
    merge_breakpoints,
    with_diagonal,
)
from .consistency import ConsistencyReport, classify, theta_from_law
from .exceptions import DomainError, InfeasibleStepError
from .semigroup import matrix_exponential

logger = logging.getLogger(__name__)

DAMPING = 0.5
FIXED_POINT_THRESHOLD = 1e-10
MAX_FIXED_POINT_ITERATIONS = 100
NNLS_MAX_ITERATIONS = 500
MATCH_TOLERANCE = 1e-12

INTERTWINING = "intertwining"
LAW_MATCHING = "law_matching"

FAMILY_PARAMETERS = {
    "common_jumps": ("a", "b", "c"),
    "extreme_contagion": ("c",),
    "extreme_anti_contagion": ("a", "b"),
    "systemic_importance": ("a", "c", "d"),
    "symmetric_common_jumps": ("a", "c"),
    "independence": ("lambda_1", "lambda_2"),
}

__all__ = (
    "MarkovStructureSpec",
    "FAMILY_PARAMETERS",
    "independence_generator",
    "independence_structure",
    "strong_common_jump",
    "matched_extreme_contagion",
    "tensor_contagion_generator",
    "example_family",
    "explicit_structure",
    "sparsity_mask",
    "no_resurrection_mask",
    "StepSolution",
    "solve_weak_structure_step",
    "chain_steps",
    "permute_structure",
)


@dataclass(frozen=True, eq=False)
class MarkovStructureSpec:
    label: str
    generator: object
    initial: Distribution
    prescribed_marginals: Tuple[object, ...]
    classification: Optional[ConsistencyReport] = None
    family: Optional[str] = None
    params: Mapping[str, PiecewiseConstantFn] = field(default_factory=dict)

    @property
    def space(self):
        return self.generator.space

    def classified(self, grid=None):
        report = classify(self.generator, self.initial, grid, self.prescribed_marginals)
        return replace(self, classification=report)


def _absorbing_rate(g, t):
    return float(g.rates(t)[0, 1])


def _check_two_state_absorbing(marginals):
    if len(marginals) != 2:
        raise DomainError("two marginals are required, got %d" % len(marginals))
    for i, g in enumerate(marginals):
        if g.space.component_sizes != (2,):
            raise DomainError("marginal %d is not a two-state generator" % (i + 1))
        for t in g.sample_times():
            if np.any(g.rates(t)[1] != 0):
                raise DomainError(
                    "marginal %d is not absorbing in the default state at t=%g"
                    % (i + 1, t)
                )


def independence_generator(marginals):
    """Kronecker sum of the marginal generators.

    Piecewise-constant marginals give a piecewise-constant generator on the
    union of their breakpoints; otherwise the transition semigroup is the
    product of the marginal semigroups.
    """
    marginals = tuple(marginals)
    if not marginals:
        raise DomainError("at least one marginal is required")
    for i, g in enumerate(marginals):
        if g.space.m != 1:
            raise DomainError(
                "marginal %d has %d components, expected 1" % (i + 1, g.space.m)
            )
    if all(isinstance(g, PiecewiseConstantGenerator) for g in marginals):
        breakpoints = merge_breakpoints(*(g.breakpoints for g in marginals))
        space = StateSpace(tuple(g.space.size for g in marginals))
        return PiecewiseConstantGenerator.from_builder(
            space, breakpoints, lambda t: kronecker_sum([g.rates(t) for g in marginals])
        )
    return KroneckerSumGenerator(marginals)


def _origin(space):
    return Distribution.point_mass(space, (0,) * space.m)


def independence_structure(spec):
    """Baseline with independent components following the prescribed marginals."""
    marginals = spec.prescribed_marginals
    initial = Distribution.product(
        [marginal_distribution(spec.initial, i) for i in range(len(marginals))]
    )
    return MarkovStructureSpec(
        label="%s/independence" % spec.label,
        generator=independence_generator(marginals),
        initial=initial,
        prescribed_marginals=marginals,
        family="independence",
    )


def _two_by_two(build):
    """Generator over {0,1}^2 whose off-diagonal rates are ``build(t)``."""
    return lambda t: with_diagonal(build(t))


def strong_common_jump(marginals, eta, initial=None, label=None, classify_now=True):
    """Common-jump structure with ``g = eta * min(lambda1, lambda2)``.

    Each institution defaults alone at ``lambda_i - g`` or jointly at ``g``;
    the hyperplane-sum rate condition holds for every ``eta`` in [0, 1].
    """
    if not 0.0 <= eta <= 1.0:
        raise DomainError("eta must lie in [0, 1], got %r" % eta)
    marginals = tuple(marginals)
    _check_two_state_absorbing(marginals)
    first, second = marginals

    def offdiag(t):
        l1, l2 = _absorbing_rate(first, t), _absorbing_rate(second, t)
        g = eta * min(l1, l2)
        return [
            [0.0, l2 - g, l1 - g, g],
            [0.0, 0.0, 0.0, l1],
            [0.0, 0.0, 0.0, l2],
            [0.0, 0.0, 0.0, 0.0],
        ]

    space = StateSpace.default_space(2)
    generator = _generator_for(space, marginals, _two_by_two(offdiag))
    spec = MarkovStructureSpec(
        label=label or "strong_common_jump(eta=%g)" % eta,
        generator=generator,
        initial=initial or _origin(space),
        prescribed_marginals=marginals,
        family="strong_common_jump",
    )
    return spec.classified() if classify_now else spec


def _generator_for(space, marginals, rate_fn):
    breakpoints = merge_breakpoints(*(g.breakpoints for g in marginals))
    if all(isinstance(g, PiecewiseConstantGenerator) for g in marginals):
        return PiecewiseConstantGenerator.from_builder(space, breakpoints, rate_fn)
    return RateFunctionGenerator(space, rate_fn, breakpoints)


def matched_extreme_contagion(marginals, initial=None, label=None, classify_now=True):
    """Joint default at the common marginal intensity, no individual defaults."""
    marginals = tuple(marginals)
    _check_two_state_absorbing(marginals)
    first, second = marginals
    times = merge_breakpoints(first.sample_times(), second.sample_times())
    for t in times:
        if abs(_absorbing_rate(first, t) - _absorbing_rate(second, t)) > MATCH_TOLERANCE:
            raise DomainError(
                "extreme contagion needs identical marginal intensities (t=%g)" % t
            )

    def offdiag(t):
        rates = np.zeros((4, 4))
        rates[0, 3] = _absorbing_rate(first, t)
        return rates

    space = StateSpace.default_space(2)
    spec = MarkovStructureSpec(
        label=label or "extreme_contagion",
        generator=_generator_for(space, marginals, _two_by_two(offdiag)),
        initial=initial or _origin(space),
        prescribed_marginals=marginals,
        family="extreme_contagion",
    )
    return spec.classified() if classify_now else spec


def tensor_contagion_generator(a, b, c, d, f):
    """Two-institution generator with recovery, where ``c`` couples the components."""
    fns = (a, b, c, d, f)
    breakpoints = merge_breakpoints(*(p.breakpoints for p in fns))

    def offdiag(t):
        av, bv, cv, dv, fv = (p(t) for p in fns)
        return [
            [0.0, dv, av, cv],
            [fv, 0.0, 0.0, av],
            [bv, 0.0, 0.0, dv],
            [0.0, bv, fv, 0.0],
        ]

    return PiecewiseConstantGenerator.from_builder(
        StateSpace.default_space(2), breakpoints, _two_by_two(offdiag)
    )


def _intensity(breakpoints, rate, survival):
    return DefaultIntensityGenerator(rate, survival, breakpoints)


def _constant_hazard(rate_fn):
    """Two-state absorbing generator with step intensity ``rate_fn``."""
    return PiecewiseConstantGenerator.from_builder(
        StateSpace((2,)),
        rate_fn.breakpoints,
        lambda t: [[-rate_fn(t), rate_fn(t)], [0.0, 0.0]],
    )


def _decay(fn, t):
    return np.exp(-fn.integral(t))


def _common_jumps(a, b, c):
    abc = a + b + c
    bps = abc.breakpoints

    def p00(u):
        return _decay(abc, u)

    def p01(u):
        return _decay(b, u) * discounted_integral(a, a + c, u)

    def p10(u):
        return _decay(a, u) * discounted_integral(b, b + c, u)

    def survival_1(u):
        return p00(u) + p01(u)

    def survival_2(u):
        return p00(u) + p10(u)

    def lambda_1(u):
        return ((b(u) + c(u)) * p00(u) + b(u) * p01(u)) / survival_1(u)

    def lambda_2(u):
        return ((a(u) + c(u)) * p00(u) + a(u) * p10(u)) / survival_2(u)

    def offdiag(t):
        return [
            [0.0, a(t), b(t), c(t)],
            [0.0, 0.0, 0.0, b(t)],
            [0.0, 0.0, 0.0, a(t)],
            [0.0, 0.0, 0.0, 0.0],
        ]

    marginals = (
        _intensity(bps, lambda_1, survival_1),
        _intensity(bps, lambda_2, survival_2),
    )
    return offdiag, bps, marginals


def _extreme_contagion(c):
    def offdiag(t):
        rates = np.zeros((4, 4))
        rates[0, 3] = c(t)
        return rates

    marginal = _constant_hazard(c)
    return offdiag, c.breakpoints, (marginal, marginal)


def _extreme_anti_contagion(a, b):
    ab = a + b

    def p00(u):
        return _decay(ab, u)

    def survival_1(u):
        return p00(u) + discounted_integral(a, ab, u)

    def survival_2(u):
        return p00(u) + discounted_integral(b, ab, u)

    def lambda_1(u):
        return b(u) * p00(u) / survival_1(u)

    def lambda_2(u):
        return a(u) * p00(u) / survival_2(u)

    def offdiag(t):
        rates = np.zeros((4, 4))
        rates[0, 1], rates[0, 2] = a(t), b(t)
        return rates

    bps = ab.breakpoints
    marginals = (
        _intensity(bps, lambda_1, survival_1),
        _intensity(bps, lambda_2, survival_2),
    )
    return offdiag, bps, marginals


def _systemic_importance(a, c, d):
    ac = a + c
    bps = merge_breakpoints(ac.breakpoints, d.breakpoints)

    def p00(u):
        return _decay(ac, u)

    def p01(u):
        return _decay(d, u) * discounted_integral(a, ac - d, u)

    def survival_1(u):
        return p00(u) + p01(u)

    def lambda_1(u):
        return (c(u) * p00(u) + d(u) * p01(u)) / survival_1(u)

    def offdiag(t):
        return [
            [0.0, a(t), 0.0, c(t)],
            [0.0, 0.0, 0.0, d(t)],
            [0.0, 0.0, 0.0, a(t) + c(t)],
            [0.0, 0.0, 0.0, 0.0],
        ]

    marginals = (_intensity(bps, lambda_1, survival_1), _constant_hazard(ac))
    return offdiag, bps, marginals


def _require_positive(params, names, family):
    for name in names:
        if not params[name].is_positive():
            raise DomainError(
                "%s needs %s > 0 on every interval, got %r"
                % (family, name, params[name].values)
            )


def example_family(name, params, initial=None, label=None, classify_now=True):
    """Build one of the dependence families with its closed-form marginals.

    The marginal intensities are exact for step-function parameters and the
    structures start from all institutions alive.
    """
    if name not in FAMILY_PARAMETERS:
        raise DomainError(
            "unknown family %r, expected one of %s" % (name, sorted(FAMILY_PARAMETERS))
        )
    missing = [p for p in FAMILY_PARAMETERS[name] if p not in params]
    if missing:
        raise DomainError("family %s is missing parameters %s" % (name, missing))
    p = {k: params[k] for k in FAMILY_PARAMETERS[name]}
    space = StateSpace.default_space(2)

    if name == "independence":
        for key, fn in p.items():
            if any(v < 0 for v in fn.values):
                raise DomainError("independence needs %s >= 0" % key)
        marginals = (_constant_hazard(p["lambda_1"]), _constant_hazard(p["lambda_2"]))
        generator = independence_generator(marginals)
    else:
        if name == "common_jumps":
            _require_positive(p, ("a", "b", "c"), name)
            offdiag, bps, marginals = _common_jumps(p["a"], p["b"], p["c"])
        elif name == "symmetric_common_jumps":
            _require_positive(p, ("a", "c"), name)
            offdiag, bps, marginals = _common_jumps(p["a"], p["a"], p["c"])
        elif name == "extreme_contagion":
            _require_positive(p, ("c",), name)
            offdiag, bps, marginals = _extreme_contagion(p["c"])
        elif name == "extreme_anti_contagion":
            _require_positive(p, ("a", "b"), name)
            offdiag, bps, marginals = _extreme_anti_contagion(p["a"], p["b"])
        else:
            _require_positive(p, ("a", "c", "d"), name)
            gap = p["c"] - p["d"]
            if any(v == 0 for v in gap.values):
                raise DomainError("systemic_importance needs c != d on every interval")
            offdiag, bps, marginals = _systemic_importance(p["a"], p["c"], p["d"])
        generator = PiecewiseConstantGenerator.from_builder(
            space, bps, _two_by_two(offdiag)
        )

    spec = MarkovStructureSpec(
        label=label or name,
        generator=generator,
        initial=initial or _origin(space),
        prescribed_marginals=marginals,
        family=name,
        params=p,
    )
    return spec.classified() if classify_now else spec


def explicit_structure(breakpoints, matrices, marginal_rates, label="explicit"):
    """Structure from user-supplied segment generators, left unvalidated.

    ``marginal_rates`` holds one step-function default intensity per
    institution; the joint chain starts from all institutions alive.
    """
    marginals = tuple(_constant_hazard(fn) for fn in marginal_rates)
    space = StateSpace.default_space(len(marginals))
    generator = PiecewiseConstantGenerator(space, tuple(breakpoints), tuple(matrices))
    return MarkovStructureSpec(
        label=label,
        generator=generator,
        initial=_origin(space),
        prescribed_marginals=marginals,
        family="explicit",
    )


def sparsity_mask(generator):
    """Off-diagonal entries that are positive on some segment."""
    matrices = (
        generator.matrices
        if isinstance(generator, PiecewiseConstantGenerator)
        else [generator.rates(t) for t in generator.sample_times()]
    )
    mask = np.zeros(matrices[0].shape, dtype=bool)
    for matrix in matrices:
        mask |= matrix > 0
    np.fill_diagonal(mask, False)
    return mask


def no_resurrection_mask(space):
    """Allow every transition except a component leaving its top (default) rating."""
    n = space.size
    mask = ~np.eye(n, dtype=bool)
    for i, size in enumerate(space.component_sizes):
        coord = space.coordinate(i)
        defaulted = coord == size - 1
        mask[np.ix_(defaulted, ~defaulted)] = False
    return mask


@dataclass(frozen=True, eq=False)
class StepSolution:
    rates: np.ndarray
    residual: float
    iterations: int
    law_next: Distribution


def _unknowns(n, mask):
    allowed = ~np.eye(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    allowed = allowed & ~np.eye(n, dtype=bool)
    return list(zip(*np.nonzero(allowed)))


def _rates_from(vector, pairs, n):
    offdiag = np.zeros((n, n))
    for value, (x, y) in zip(vector, pairs):
        offdiag[x, y] = value
    return with_diagonal(offdiag)


def _basis(pairs, n):
    for x, y in pairs:
        e = np.zeros((n, n))
        e[x, y], e[x, x] = 1.0, -1.0
        yield e


def _least_squares(A, b, regularization):
    """Nonnegative least squares with a small ridge picking the minimum norm."""
    k = A.shape[1]
    A_aug = np.vstack([A, regularization * np.eye(k)])
    b_aug = np.concatenate([b, np.zeros(k)])
    solution, _ = nnls(A_aug, b_aug, maxiter=NNLS_MAX_ITERATIONS)
    return solution


def _system(thetas, theta_target, marginals_next, pairs, n, dt, constraint):
    blocks, rhs = [], []
    basis = list(_basis(pairs, n))
    for th, target, marg in zip(thetas, theta_target, marginals_next):
        rows = [xi for xi, ok in enumerate(th.defined) if ok]
        if constraint == INTERTWINING:
            columns = [dt * (th.entries[rows] @ e).ravel() for e in basis]
            lhs_const = th.entries[rows]
            rhs_value = (np.eye(len(marg)) + dt * marg)[rows] @ target.entries
            rhs.append((rhs_value - lhs_const).ravel())
        else:
            phi_i = _phi_matrix(th)
            mid = target.entries
            rows = [xi for xi, ok in enumerate(target.defined) if ok]
            columns = [dt * (mid[rows] @ e @ phi_i).ravel() for e in basis]
            rhs.append(dt * marg[rows].ravel())
        size = rhs[-1].size
        blocks.append(np.array(columns).T if columns else np.zeros((size, 0)))
    return np.vstack(blocks), np.concatenate(rhs)


def _phi_matrix(th):
    entries = np.zeros((th.space.size, th.space.component_sizes[th.component]))
    entries[np.arange(th.space.size), th.space.coordinate(th.component)] = 1.0
    return entries


def solve_weak_structure_step(
    theta_n,
    marginals_next,
    d_n,
    dt,
    template_mask=None,
    constraint=INTERTWINING,
    tolerance=None,
    t=0.0,
):
    """One step of the discrete-time construction of a weak structure.

    With ``constraint="intertwining"`` the rates solve
    ``Theta_n (I + L dt) = (I + L_i dt) Theta_{n+1}`` for every component,
    where ``Theta_{n+1}`` comes from ``d_n (I + L dt)``. With
    ``constraint="law_matching"`` they solve ``Theta L Phi = L_i`` at the step
    midpoint. The dependence on the unknown rates is resolved by damped
    fixed-point iteration and the rates by nonnegative least squares.

    Raises:
        DomainError: ``d_n`` is not strictly positive (intertwining), ``dt`` is
            not positive or a prescribed exit rate times ``dt`` exceeds 1.
        InfeasibleStepError: no rates reach ``tolerance`` or the iteration
            does not converge.
    """
    if constraint not in (INTERTWINING, LAW_MATCHING):
        raise DomainError("unknown constraint %r" % constraint)
    if dt <= 0:
        raise DomainError("dt must be positive, got %r" % dt)
    if constraint == INTERTWINING and not d_n.is_positive():
        raise DomainError("the law at the step start must be strictly positive")
    marginals_next = [np.asarray(m, dtype=float) for m in marginals_next]
    for i, marg in enumerate(marginals_next):
        if np.max(-np.diag(marg)) * dt > 1:
            raise DomainError(
                "dt=%g too large for the rates of component %d" % (dt, i + 1)
            )
    tolerance = 1e-8 * dt if tolerance is None else tolerance
    n = d_n.space.size
    pairs = _unknowns(n, template_mask)
    regularization = 1e-6 * dt

    def advance(L):
        if constraint == INTERTWINING:
            return d_n.probs @ (np.eye(n) + dt * L)
        return d_n.probs @ matrix_exponential(L, dt / 2.0)

    target = list(theta_n)

    rates = np.zeros((n, n))
    for iteration in range(1, MAX_FIXED_POINT_ITERATIONS + 1):
        A, b = _system(theta_n, target, marginals_next, pairs, n, dt, constraint)
        vector = _least_squares(A, b, regularization) if pairs else np.zeros(0)
        rates = _rates_from(vector, pairs, n)
        probs = np.clip(advance(rates), 0.0, None)
        law = Distribution(d_n.space, probs / probs.sum())
        fresh = [theta_from_law(law, th.component, t) for th in theta_n]
        change = max(
            float(np.max(np.abs(f.entries - old.entries))) for f, old in zip(fresh, target)
        )
        target = [
            _damped(old, f, law) for old, f in zip(target, fresh)
        ]
        logger.debug("step at t=%g iteration %d: theta change %.3e", t, iteration, change)
        if change < FIXED_POINT_THRESHOLD:
            break
    else:
        residual = _residual(theta_n, target, marginals_next, pairs, n, dt, constraint, vector)
        raise InfeasibleStepError(0, residual, "fixed point did not converge")

    A, b = _system(theta_n, target, marginals_next, pairs, n, dt, constraint)
    residual = float(np.max(np.abs(A @ vector - b))) if b.size else 0.0
    if np.max(-np.diag(rates)) * dt > 1:
        raise InfeasibleStepError(0, residual, "solution rates too large for dt")
    if residual > tolerance:
        raise InfeasibleStepError(0, residual, "residual above tolerance %.3e" % tolerance)
    law_next = Distribution(
        d_n.space, _normalized(d_n.probs @ (np.eye(n) + dt * rates))
    )
    return StepSolution(rates, residual, iteration, law_next)


def _normalized(probs):
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _damped(old, fresh, law):
    entries = DAMPING * old.entries + (1.0 - DAMPING) * fresh.entries
    defined = tuple(a or b for a, b in zip(old.defined, fresh.defined))
    for xi, (was, now) in enumerate(zip(old.defined, fresh.defined)):
        if now and not was:
            entries[xi] = fresh.entries[xi]
    return replace(fresh, entries=entries, defined=defined)


def _residual(theta_n, target, marginals_next, pairs, n, dt, constraint, vector):
    A, b = _system(theta_n, target, marginals_next, pairs, n, dt, constraint)
    return float(np.max(np.abs(A @ vector - b))) if b.size else 0.0


def chain_steps(
    initial,
    marginal_schedule,
    dt,
    n_steps,
    template_mask=None,
    constraint=INTERTWINING,
    tolerance=None,
    label="weak_structure",
    classify_now=True,
):
    """Assemble a piecewise-constant weak structure over ``[0, n_steps * dt]``.

    ``marginal_schedule`` holds one generator per component; its rates are
    sampled at each step midpoint. The rates of the last step remain in force
    after the last step.

    Raises:
        InfeasibleStepError: naming the failing step, with the structure built
            from the preceding steps as ``partial``.
    """
    marginals = tuple(marginal_schedule)
    if len(marginals) != initial.space.m:
        raise DomainError(
            "need %d marginal generators, got %d" % (initial.space.m, len(marginals))
        )
    law = initial
    matrices = []
    for step in range(n_steps):
        t = step * dt
        thetas = [theta_from_law(law, i, t) for i in range(initial.space.m)]
        rates_next = [g.rates(t + dt / 2.0) for g in marginals]
        try:
            solution = solve_weak_structure_step(
                thetas, rates_next, law, dt, template_mask, constraint, tolerance, t
            )
        except InfeasibleStepError as exc:
            partial = _assemble(initial, marginals, matrices, dt, label) if matrices else None
            raise InfeasibleStepError(step, exc.residual, exc.reason, partial)
        except Exception:
            logger.error("step %d failed", step)
            raise
        matrices.append(solution.rates)
        law = Distribution(
            initial.space, _normalized(law.probs @ matrix_exponential(solution.rates, dt))
        )
    spec = _assemble(initial, marginals, matrices, dt, label)
    if classify_now:
        knots = np.linspace(0.0, n_steps * dt, min(n_steps, 12) + 1)
        spec = spec.classified(grid=[float(k) for k in knots])
    return spec


def _assemble(initial, marginals, matrices, dt, label):
    breakpoints = tuple(k * dt for k in range(len(matrices)))
    generator = PiecewiseConstantGenerator(initial.space, breakpoints, tuple(matrices))
    return MarkovStructureSpec(
        label=label,
        generator=generator,
        initial=initial,
        prescribed_marginals=marginals,
        family="discrete_time",
    )


def _state_permutation(space, component_permutation, state_permutations):
    m = space.m
    perm = tuple(component_permutation)
    if sorted(perm) != list(range(m)):
        raise DomainError("invalid component permutation %r" % (perm,))
    if state_permutations is None:
        state_permutations = [tuple(range(s)) for s in space.component_sizes]
    state_permutations = [tuple(p) for p in state_permutations]
    if len(state_permutations) != m:
        raise DomainError("need one state permutation per component")
    for i, p in enumerate(state_permutations):
        if sorted(p) != list(range(space.component_sizes[i])):
            raise DomainError("invalid state permutation %r for component %d" % (p, i + 1))
    new_space = StateSpace(tuple(space.component_sizes[perm[j]] for j in range(m)))
    mapping = np.empty(space.size, dtype=int)
    for x, state in enumerate(space.states):
        new_state = tuple(state_permutations[perm[j]][state[perm[j]]] for j in range(m))
        mapping[x] = new_space.index(new_state)
    return new_space, mapping, state_permutations


def _permute_generator(g, mapping, new_space):
    if isinstance(g, PiecewiseConstantGenerator):
        matrices = []
        for matrix in g.matrices:
            out = np.empty_like(matrix)
            out[np.ix_(mapping, mapping)] = matrix
            matrices.append(out)
        return PiecewiseConstantGenerator(new_space, g.breakpoints, tuple(matrices))
    if np.array_equal(mapping, np.arange(len(mapping))):
        return g
    return PermutedGenerator(g, mapping, new_space)


def permute_structure(spec, component_permutation, state_permutations=None):
    """Relabel components and ratings of a structure.

    New component ``j`` is old component ``component_permutation[j]``;
    ``state_permutations[i]`` maps the old ratings of old component ``i`` to
    new ones.
    """
    space = spec.space
    new_space, mapping, state_perms = _state_permutation(
        space, component_permutation, state_permutations
    )
    marginals = []
    for j, old in enumerate(component_permutation):
        g = spec.prescribed_marginals[old]
        marginals.append(
            _permute_generator(g, np.asarray(state_perms[old]), g.space)
        )
    if isinstance(spec.generator, KroneckerSumGenerator):
        generator = KroneckerSumGenerator(marginals)
    else:
        generator = _permute_generator(spec.generator, mapping, new_space)
    probs = np.empty(space.size)
    probs[mapping] = spec.initial.probs
    return MarkovStructureSpec(
        label="%s/permuted" % spec.label,
        generator=generator,
        initial=Distribution(new_space, probs),
        prescribed_marginals=tuple(marginals),
        classification=None,
        family=spec.family,
        params=spec.params,
    )
