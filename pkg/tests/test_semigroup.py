from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from markov_structures import semigroup
from markov_structures.chain import (
    DefaultIntensityGenerator,
    Distribution,
    KroneckerSumGenerator,
    PiecewiseConstantGenerator,
    RateFunctionGenerator,
    StateSpace,
    kronecker_sum,
    with_diagonal,
)
from markov_structures.exceptions import DomainError, GeneratorValidationError
from markov_structures.semigroup import (
    TransitionCache,
    matrix_exponential,
    propagate,
    transition_matrix,
)
from markov_structures.structures import example_family
from . import (
    SPACE_2x2,
    common_jumps_fixed,
    common_jumps_rolling,
    family_cases,
    random_generator,
    rk4_transition,
)


def _common_jumps(params):
    return example_family("common_jumps", params, classify_now=False)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
    n=st.integers(min_value=2, max_value=5),
    dt=st.floats(min_value=0.0, max_value=5.0),
)
def test_uniformization_matches_expm(seed, n, dt):
    rng = np.random.default_rng(seed)
    A = random_generator(rng, n, scale=2.0, density=0.7)

    P = matrix_exponential(A, dt)

    np.testing.assert_allclose(P, expm(A * dt), atol=1e-11)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert P.min() >= -1e-15


def test_long_steps_are_split():
    A = with_diagonal([[0, 5.0, 1.0], [2.0, 0, 3.0], [0.5, 0.5, 0]])

    P = matrix_exponential(A, 12.0)

    np.testing.assert_allclose(P, expm(A * 12.0), atol=1e-10)


def test_zero_duration_is_identity():
    A = with_diagonal(np.full((4, 4), 0.3))

    np.testing.assert_array_equal(matrix_exponential(A, 0.0), np.eye(4))
    with pytest.raises(DomainError):
        matrix_exponential(A, -1.0)


@family_cases()
def test_piecewise_constant_against_forward_equation(name, params):
    g = example_family(name, params, classify_now=False).generator

    P = transition_matrix(g, 0.0, 30.0)

    np.testing.assert_allclose(P.entries, rk4_transition(g, 0.0, 30.0), rtol=0, atol=1e-8)
    assert P.t == 0.0
    assert P.s == 30.0


def test_piecewise_constant_against_forward_equation_inside_segments():
    g = _common_jumps(common_jumps_rolling(1)).generator

    P = transition_matrix(g, 2.5, 14.0)

    np.testing.assert_allclose(P.entries, rk4_transition(g, 2.5, 14.0), atol=1e-9)


def test_semigroup_property():
    g = _common_jumps(common_jumps_fixed(1)).generator

    left = transition_matrix(g, 0.0, 5.0).entries
    right = transition_matrix(g, 5.0, 12.0).entries

    np.testing.assert_allclose(
        left @ right, transition_matrix(g, 0.0, 12.0).entries, atol=1e-12
    )


def test_transition_lookup_by_state():
    g = _common_jumps(common_jumps_fixed(1)).generator

    P = transition_matrix(g, 0.0, 5.0)

    assert P[(1, 1), (1, 1)] == pytest.approx(1.0)
    assert P[(0, 1), (1, 0)] == 0.0
    assert np.asarray(P).shape == (4, 4)


def test_invalid_generator_is_rejected():
    bad = with_diagonal(np.full((4, 4), 0.01))
    bad[1, 0] = -0.5
    g = PiecewiseConstantGenerator.constant(SPACE_2x2, bad)

    with pytest.raises(GeneratorValidationError):
        transition_matrix(g, 0.0, 1.0)


@pytest.mark.parametrize("t,s", [(-1.0, 2.0), (3.0, 2.0)])
def test_invalid_interval(t, s):
    g = _common_jumps(common_jumps_fixed(1)).generator

    with pytest.raises(DomainError):
        transition_matrix(g, t, s)


def test_default_intensity_exact_and_quadrature_agree():
    marginal = _common_jumps(common_jumps_rolling(2)).prescribed_marginals[0]
    quadrature = DefaultIntensityGenerator(
        marginal.intensity, breakpoints=marginal.breakpoints
    )

    exact = transition_matrix(marginal, 1.0, 23.0).entries
    approximate = transition_matrix(quadrature, 1.0, 23.0).entries

    np.testing.assert_allclose(exact, approximate, atol=1e-10)
    np.testing.assert_allclose(exact, rk4_transition(marginal, 1.0, 23.0), atol=1e-9)


def _linear_intensity(level, slope):
    return DefaultIntensityGenerator(lambda t: level + slope * t)


def test_kronecker_sum_transition_is_product_of_factors():
    first, second = _linear_intensity(0.01, 0.002), _linear_intensity(0.03, 0.001)
    g = KroneckerSumGenerator([first, second])

    P = transition_matrix(g, 0.0, 10.0).entries

    expected = np.kron(
        transition_matrix(first, 0.0, 10.0).entries,
        transition_matrix(second, 0.0, 10.0).entries,
    )
    np.testing.assert_allclose(P, expected, atol=1e-12)
    ode = RateFunctionGenerator(
        SPACE_2x2, lambda t: kronecker_sum([first.rates(t), second.rates(t)])
    )
    np.testing.assert_allclose(transition_matrix(ode, 0.0, 10.0).entries, P, atol=1e-9)


def test_linear_intensity_survival():
    g = _linear_intensity(0.01, 0.002)

    P = transition_matrix(g, 2.0, 6.0)

    hazard = 0.01 * 4.0 + 0.001 * (36.0 - 4.0)
    assert P[(0,), (0,)] == pytest.approx(np.exp(-hazard), rel=1e-10)


def test_propagate():
    spec = _common_jumps(common_jumps_fixed(2))

    assert propagate(spec.initial, spec.generator, 0.0) is spec.initial
    law = propagate(spec.initial, spec.generator, 8.0)
    assert law.probs.sum() == pytest.approx(1.0)
    expected = spec.initial.probs @ rk4_transition(spec.generator, 0.0, 8.0)
    np.testing.assert_allclose(law.probs, expected, atol=1e-9)
    with pytest.raises(DomainError):
        propagate(spec.initial, spec.generator, -0.5)


def test_propagate_rejects_foreign_space():
    spec = _common_jumps(common_jumps_fixed(2))

    with pytest.raises(DomainError):
        propagate(Distribution.uniform(StateSpace((3, 2))), spec.generator, 1.0)


def test_cache_composes_steps():
    g = _common_jumps(common_jumps_rolling(1)).generator
    cache = TransitionCache(g, [0.0, 3.0, 6.0, 8.5, 14.0])

    np.testing.assert_allclose(
        cache.between(3.0, 14.0), transition_matrix(g, 3.0, 14.0).entries, atol=1e-12
    )
    np.testing.assert_array_equal(cache.between(6.0, 6.0), np.eye(4))
    with pytest.raises(DomainError):
        cache.between(14.0, 3.0)
    with pytest.raises(DomainError):
        cache.between(0.0, 5.0)


def test_cache_laws():
    spec = _common_jumps(common_jumps_rolling(1))
    cache = TransitionCache(spec.generator, [0.0, 2.0, 7.0])

    law = cache.law(spec.initial, 7.0)

    np.testing.assert_allclose(
        law.probs, propagate(spec.initial, spec.generator, 7.0).probs, atol=1e-12
    )
    assert cache.laws_cached(spec.initial) is cache.laws_cached(spec.initial)


def test_cache_keeps_a_bounded_number_of_products(monkeypatch):
    monkeypatch.setattr(semigroup, "MAX_CACHED_PRODUCTS", 3)
    g = _common_jumps(common_jumps_rolling(1)).generator
    cache = TransitionCache(g, [0.0, 1.0, 2.0, 3.0, 4.0])

    for t in (0.0, 1.0, 2.0, 3.0):
        cache.between(t, 4.0)

    assert cache.cached_products == 3
    np.testing.assert_allclose(
        cache.between(0.0, 4.0), transition_matrix(g, 0.0, 4.0).entries, atol=1e-12
    )


def test_cache_shared_between_threads():
    spec = _common_jumps(common_jumps_rolling(2))
    knots = [0.5 * k for k in range(41)]
    cache = TransitionCache(spec.generator, knots)

    def evaluate(k):
        t = knots[k]
        return cache.between(t, 20.0)[0, 3], cache.law(spec.initial, t).probs[3]

    with ThreadPoolExecutor(max_workers=8) as pool:
        shared = list(pool.map(evaluate, range(41)))

    fresh = TransitionCache(spec.generator, knots)
    for k, (entry, mass) in enumerate(shared):
        assert entry == fresh.between(knots[k], 20.0)[0, 3]
        assert mass == fresh.law(spec.initial, knots[k]).probs[3]
