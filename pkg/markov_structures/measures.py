"""Systemic risk, dependence and instability measures.

``nu`` is the conditional probability that at least ``h`` institutions sit in
their target ratings at the horizon, ``rho`` the excess of ``nu`` over the
independence structure with the same marginals, and ``kappa`` scales ``rho``
by the Kullback-Leibler divergence (natural log) between the laws of the two
structures at the evaluation time.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import rel_entr

from .chain import Distribution
from .exceptions import DomainError
from .semigroup import TransitionCache, propagate, transition_matrix
from .structures import independence_generator, independence_structure

logger = logging.getLogger(__name__)

DEAD_BAND = 1e-12
SUPPORT_TOLERANCE = 1e-15
BASELINE_TOLERANCE = 1e-12
GRID_DECIMALS = 10

UNFAVORABLE = "unfavorable"
NEUTRAL = "neutral"
FAVORABLE = "favorable"

SYSTEMIC_RISK = "systemic_risk"
SYSTEMIC_INDIFFERENCE = "systemic_indifference"
SYSTEMIC_BENEFIT = "systemic_benefit"

__all__ = (
    "MeasureQuery",
    "MeasureRecord",
    "MeasureSeries",
    "FixedHorizon",
    "RollingWindow",
    "threshold_event_mask",
    "systemic_risk",
    "systemic_dependence",
    "kl_divergence",
    "systemic_instability",
    "classify_dependence",
    "classify_instability",
    "measure_series",
    "check_absolute_continuity",
)


@dataclass(frozen=True)
class MeasureQuery:
    z: Tuple[int, ...]
    h: int
    T: float
    t: float
    x: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(self.z))
        object.__setattr__(self, "x", tuple(self.x))
        if not 0 <= self.t <= self.T:
            raise DomainError("need 0 <= t <= T, got t=%r T=%r" % (self.t, self.T))
        if not 1 <= self.h <= len(self.z):
            raise DomainError("need 1 <= h <= %d, got h=%r" % (len(self.z), self.h))
        if len(self.x) != len(self.z):
            raise DomainError("z and x must have one entry per institution")

    def check_space(self, space):
        if len(self.z) != space.m:
            raise DomainError("query has %d institutions, space has %d" % (len(self.z), space.m))
        for i, (zi, size) in enumerate(zip(self.z, space.component_sizes)):
            if not 0 <= zi < size:
                raise DomainError("target rating %d invalid for institution %d" % (zi, i + 1))
        space.index(self.x)


def threshold_event_mask(space, z, h):
    """Indicator over states of ``#{i : y_i = z_i} >= h``."""
    coords = np.array(space.states).reshape(space.size, space.m)
    hits = (coords == np.asarray(z)[None, :]).sum(axis=1)
    return (hits >= h).astype(float)


def systemic_risk(spec, q):
    """``P(#{i : X_T^i = z_i} >= h | X_t = x)`` from the transition matrix."""
    space = spec.space
    q.check_space(space)
    P = transition_matrix(spec.generator, q.t, q.T).entries
    return float(P[space.index(q.x)] @ threshold_event_mask(space, q.z, q.h))


def _check_baseline(spec_dep, spec_ind):
    expected = independence_generator(spec_dep.prescribed_marginals)
    actual = spec_ind.generator
    if actual.space != expected.space:
        raise DomainError(
            "normalization basis is not the tensor-sum of the prescribed marginals"
        )
    times = sorted(set(expected.sample_times()) | set(actual.sample_times()))
    for t in times:
        if not np.allclose(
            actual.rates(t), expected.rates(t), rtol=0.0, atol=BASELINE_TOLERANCE
        ):
            raise DomainError(
                "normalization basis is not the tensor-sum of the prescribed "
                "marginals (t=%g)" % t
            )


def _check_shared_initial(spec_dep, spec_ind):
    if not np.allclose(
        spec_dep.initial.probs, spec_ind.initial.probs, rtol=0.0, atol=BASELINE_TOLERANCE
    ):
        raise DomainError("the structures start from different initial distributions")


def systemic_dependence(spec_dep, spec_ind, q):
    _check_baseline(spec_dep, spec_ind)
    return systemic_risk(spec_dep, q) - systemic_risk(spec_ind, q)


def kl_divergence(p, q):
    """``sum_y p(y) log(p(y) / q(y))`` with ``0 log(0/q) = 0``.

    Raises:
        DomainError: ``p`` puts mass on a state where ``q`` has none.
    """
    p_probs = p.probs if isinstance(p, Distribution) else np.asarray(p, dtype=float)
    q_probs = q.probs if isinstance(q, Distribution) else np.asarray(q, dtype=float)
    offending = np.flatnonzero((p_probs > SUPPORT_TOLERANCE) & (q_probs <= 0))
    if offending.size:
        y = offending[0]
        state = p.space.state(y) if isinstance(p, Distribution) else int(y)
        raise DomainError(
            "law is not absolutely continuous: state %r has mass %.3e against 0"
            % (state, p_probs[y])
        )
    terms = np.where(p_probs > SUPPORT_TOLERANCE, rel_entr(p_probs, q_probs), 0.0)
    return max(float(terms.sum()), 0.0)


def systemic_instability(spec_dep, spec_ind, q):
    """``rho * KL(law of X_t | law of the independence structure at t)``."""
    _check_shared_initial(spec_dep, spec_ind)
    rho = systemic_dependence(spec_dep, spec_ind, q)
    law_dep = propagate(spec_dep.initial, spec_dep.generator, q.t)
    law_ind = propagate(spec_ind.initial, spec_ind.generator, q.t)
    return rho * kl_divergence(law_dep, law_ind)


def _sign_label(value, positive, zero, negative):
    if abs(value) < DEAD_BAND:
        return zero
    return positive if value > 0 else negative


def classify_dependence(rho):
    return _sign_label(rho, UNFAVORABLE, NEUTRAL, FAVORABLE)


def classify_instability(kappa):
    return _sign_label(kappa, SYSTEMIC_RISK, SYSTEMIC_INDIFFERENCE, SYSTEMIC_BENEFIT)


@dataclass(frozen=True)
class FixedHorizon:
    T: float

    def horizon(self, t):
        return self.T

    @property
    def end(self):
        return self.T

    def describe(self):
        return "fixed horizon T=%g" % self.T


@dataclass(frozen=True)
class RollingWindow:
    window: float
    end: float = 30.0

    def horizon(self, t):
        return t + self.window

    def describe(self):
        return "rolling window %g, t in [0, %g]" % (self.window, self.end)


@dataclass(frozen=True)
class MeasureRecord:
    t: float
    T: float
    nu_dep: float
    nu_ind: float
    rho: float
    kl: float
    kappa: float
    dependence: str
    instability: str


@dataclass(frozen=True)
class MeasureSeries:
    label: str
    mode: object
    records: Tuple[MeasureRecord, ...]

    @property
    def grid(self):
        return tuple(r.t for r in self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def _grid(end, step):
    if step <= 0:
        raise DomainError("grid step must be positive, got %r" % step)
    count = int(np.floor(end / step + 1e-9))
    return [round(k * step, GRID_DECIMALS) for k in range(count + 1)]


def measure_series(spec_dep, mode, grid_step, z, h, x, spec_ind=None):
    """Evaluate the measures on ``0, step, 2 step, ...`` up to the mode's end."""
    if spec_ind is None:
        spec_ind = independence_structure(spec_dep)
    _check_baseline(spec_dep, spec_ind)
    _check_shared_initial(spec_dep, spec_ind)
    space = spec_dep.space
    MeasureQuery(z, h, mode.horizon(0.0), 0.0, x).check_space(space)

    grid = _grid(mode.end, grid_step)
    horizons = [round(mode.horizon(t), GRID_DECIMALS) for t in grid]
    knots = sorted(set(grid) | set(horizons))
    logger.debug("measure series %s on %d knots", spec_dep.label, len(knots))
    dep_cache = TransitionCache(spec_dep.generator, knots)
    ind_cache = TransitionCache(spec_ind.generator, knots)
    mask = threshold_event_mask(space, z, h)
    row = space.index(x)

    records = []
    for t, T in zip(grid, horizons):
        nu_dep = float(dep_cache.between(t, T)[row] @ mask)
        nu_ind = float(ind_cache.between(t, T)[row] @ mask)
        rho = nu_dep - nu_ind
        kl = kl_divergence(
            dep_cache.law(spec_dep.initial, t), ind_cache.law(spec_ind.initial, t)
        )
        kappa = rho * kl
        records.append(
            MeasureRecord(
                t,
                T,
                nu_dep,
                nu_ind,
                rho,
                kl,
                kappa,
                classify_dependence(rho),
                classify_instability(kappa),
            )
        )
    return MeasureSeries(spec_dep.label, mode, tuple(records))


@dataclass(frozen=True)
class AbsoluteContinuityReport:
    violations: Tuple[Tuple[float, tuple], ...] = ()

    @property
    def ok(self):
        return not self.violations


def check_absolute_continuity(spec_dep, spec_ind, grid):
    """Support of the dependent law inside the independence law at every grid time."""
    _check_shared_initial(spec_dep, spec_ind)
    knots = sorted(set(round(t, GRID_DECIMALS) for t in grid))
    dep_cache = TransitionCache(spec_dep.generator, knots)
    ind_cache = TransitionCache(spec_ind.generator, knots)
    violations = []
    for t in knots:
        p = dep_cache.law(spec_dep.initial, t).probs
        q = ind_cache.law(spec_ind.initial, t).probs
        for y in np.flatnonzero((p > SUPPORT_TOLERANCE) & (q <= 0)):
            violations.append((t, spec_dep.space.state(y)))
    return AbsoluteContinuityReport(tuple(violations))
