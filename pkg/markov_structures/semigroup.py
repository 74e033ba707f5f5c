"""Transition matrices ``P_{t,s}`` from the Kolmogorov forward equation."""
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import reduce, singledispatch

import numpy as np
from scipy import integrate
from scipy.stats import poisson

from .chain import (
    DefaultIntensityGenerator,
    Distribution,
    KroneckerSumGenerator,
    PermutedGenerator,
    PiecewiseConstantGenerator,
    RateFunctionGenerator,
    StateSpace,
    ensure_valid,
)
from .exceptions import DomainError, MarkovStructureError

logger = logging.getLogger(__name__)

POISSON_TAIL = 1e-14
MAX_POISSON_MEAN = 8.0
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14
KNOT_DECIMALS = 9
MAX_CACHED_PRODUCTS = 4096

__all__ = (
    "TransitionMatrix",
    "TransitionCache",
    "matrix_exponential",
    "transition_matrix",
    "transition_entries",
    "propagate",
)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    space: StateSpace
    t: float
    s: float
    entries: np.ndarray

    def __getitem__(self, key):
        x, y = key
        return float(self.entries[self.space.index(x), self.space.index(y)])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def matrix_exponential(A, dt):
    """``exp(A dt)`` for a generator matrix ``A`` by uniformization.

    With ``q = max |A_xx|`` and ``R = I + A/q`` the result is the Poisson(q dt)
    mixture of the powers of ``R``, truncated once the tail mass drops below
    1e-14. Long steps are split so that each Poisson mean stays below 8.
    """
    A = np.asarray(A, dtype=float)
    if dt < 0:
        raise DomainError("duration must be nonnegative, got %r" % dt)
    n = A.shape[0]
    q = float(np.max(np.abs(np.diag(A)))) if n else 0.0
    if q == 0.0 or dt == 0.0:
        return np.eye(n)

    substeps = max(1, int(math.ceil(q * dt / MAX_POISSON_MEAN)))
    mean = q * dt / substeps
    cutoff = int(poisson.isf(POISSON_TAIL, mean)) + 1
    weights = poisson.pmf(np.arange(cutoff + 1), mean)
    logger.debug(
        "uniformization q=%g dt=%g substeps=%d cutoff=%d", q, dt, substeps, cutoff
    )

    R = np.eye(n) + A / q
    power = np.eye(n)
    result = weights[0] * power
    for w in weights[1:]:
        power = power @ R
        result += w * power
    if substeps > 1:
        result = np.linalg.matrix_power(result, substeps)
    return result


@singledispatch
def transition_entries(g, t, s):
    """Raw ``P_{t,s}`` entries for a generator kind."""
    raise DomainError("unsupported generator type %s" % type(g).__name__)


@transition_entries.register(PiecewiseConstantGenerator)
def _(g, t, s):
    result = np.eye(g.space.size)
    for start, end, matrix in g.segments(t, s):
        result = result @ matrix_exponential(matrix, end - start)
    return result


def _smooth_pieces(g, t, s):
    cuts = [b for b in g.breakpoints if t < b < s]
    knots = [t] + cuts + [s]
    return zip(knots, knots[1:])


@transition_entries.register(RateFunctionGenerator)
def _(g, t, s):
    n = g.space.size
    state = np.eye(n).ravel()
    for start, end in _smooth_pieces(g, t, s):
        # rates on [start, end) are smooth; evaluate the left limit at ``end``
        inner_end = np.nextafter(end, start)

        def forward(u, y, start=start, inner_end=inner_end):
            rates = g.rates(min(max(u, start), inner_end))
            return (y.reshape(n, n) @ rates).ravel()

        sol = integrate.solve_ivp(
            forward,
            (start, end),
            state,
            method="DOP853",
            rtol=ODE_RTOL,
            atol=ODE_ATOL,
        )
        if not sol.success:
            raise MarkovStructureError(
                "forward equation failed on [%g, %g]: %s" % (start, end, sol.message)
            )
        logger.debug("forward equation on [%g, %g]: %d steps", start, end, sol.t.size)
        state = sol.y[:, -1]
    return np.clip(state.reshape(n, n), 0.0, 1.0)


@transition_entries.register(DefaultIntensityGenerator)
def _(g, t, s):
    if g.survival is not None:
        stay = g.survival(s) / g.survival(t)
    else:
        hazard = sum(
            integrate.quad(g.intensity, a, b, epsabs=1e-14, epsrel=1e-12)[0]
            for a, b in _smooth_pieces(g, t, s)
        )
        stay = math.exp(-hazard)
    return np.array([[stay, 1.0 - stay], [0.0, 1.0]])


@transition_entries.register(KroneckerSumGenerator)
def _(g, t, s):
    return reduce(np.kron, [transition_entries(f, t, s) for f in g.factors])


@transition_entries.register(PermutedGenerator)
def _(g, t, s):
    return g.conjugate(transition_entries(g.inner, t, s))


def _check_interval(t, s):
    if t < 0 or s < t:
        raise DomainError("need 0 <= t <= s, got t=%r s=%r" % (t, s))


def transition_matrix(g, t, s):
    """``P_{t,s}`` as the ordered product of the pieces of ``[t, s]``."""
    _check_interval(t, s)
    if isinstance(g, PiecewiseConstantGenerator):
        ensure_valid(g)
    if s == t:
        entries = np.eye(g.space.size)
    else:
        entries = transition_entries(g, t, s)
    return TransitionMatrix(g.space, float(t), float(s), entries)


def propagate(d0, g, t):
    """Law at ``t`` of the chain started from ``d0`` at time 0."""
    if t < 0:
        raise DomainError("time must be nonnegative, got %r" % t)
    if d0.space != g.space:
        raise DomainError("distribution and generator live on different spaces")
    if t == 0:
        return d0
    probs = d0.probs @ transition_matrix(g, 0.0, t).entries
    probs = np.clip(probs, 0.0, None)
    return Distribution(g.space, probs / probs.sum())


def _key(t):
    return round(float(t), KNOT_DECIMALS)


class TransitionCache(object):
    """Step matrices between consecutive knots, composed on demand.

    ``between(t, s)`` for knots ``t <= s`` is the ordered product of the steps
    in between, which equals ``P_{t,s}`` by the semigroup property. At most
    ``MAX_CACHED_PRODUCTS`` products are kept, oldest first out. A cache may be
    shared between threads.
    """

    def __init__(self, g, knots):
        if isinstance(g, PiecewiseConstantGenerator):
            ensure_valid(g)
        self.generator = g
        keys = sorted({_key(t) for t in knots} | {0.0})
        if keys[0] < 0:
            raise DomainError("knots must be nonnegative")
        self.knots = keys
        self._position = {k: n for n, k in enumerate(keys)}
        self._steps = [
            transition_entries(g, a, b) for a, b in zip(keys, keys[1:])
        ]
        self._products = OrderedDict()
        self._laws = None
        self._lock = threading.Lock()

    def _index(self, t):
        try:
            return self._position[_key(t)]
        except KeyError:
            raise DomainError("time %r is not a knot of this cache" % t)

    @property
    def cached_products(self):
        return len(self._products)

    def between(self, t, s):
        i, j = self._index(t), self._index(s)
        if j < i:
            raise DomainError("need t <= s, got t=%r s=%r" % (t, s))
        with self._lock:
            product = self._products.get((i, j))
        if product is None:
            n = self.generator.space.size
            product = reduce(np.matmul, self._steps[i:j], np.eye(n))
            with self._lock:
                self._products[(i, j)] = product
                while len(self._products) > MAX_CACHED_PRODUCTS:
                    self._products.popitem(last=False)
        return product

    def laws(self, d0):
        """Propagated laws at every knot, keyed by knot."""
        probs = d0.probs
        result = {self.knots[0]: d0}
        for knot, step in zip(self.knots[1:], self._steps):
            probs = np.clip(probs @ step, 0.0, None)
            probs = probs / probs.sum()
            result[knot] = Distribution(d0.space, probs)
        return result

    def law(self, d0, t):
        return self.laws_cached(d0)[_key(t)]

    def laws_cached(self, d0):
        """``laws(d0)``, remembered for the last initial law asked for."""
        with self._lock:
            cached = self._laws
            if cached is None or cached[0] is not d0:
                cached = self._laws = (d0, self.laws(d0))
        return cached[1]
