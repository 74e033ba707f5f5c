import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markov_structures.chain import (
    Distribution,
    PermutedGenerator,
    PiecewiseConstantFn,
    PiecewiseConstantGenerator,
    StateSpace,
    discounted_integral,
    ensure_valid,
    evaluate_generator,
    kronecker_sum,
    marginal_distribution,
    validate_generator,
    with_diagonal,
)
from markov_structures.exceptions import DomainError, GeneratorValidationError
from . import SPACE_2x2, random_generator, step


def test_lexicographic_enumeration():
    assert SPACE_2x2.states == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert SPACE_2x2.size == 4
    assert SPACE_2x2.index((1, 0)) == 2
    assert SPACE_2x2.state(3) == (1, 1)


def test_mixed_component_sizes():
    space = StateSpace((3, 2))

    assert space.size == 6
    assert space.states[1] == (0, 1)
    assert space.index((2, 1)) == 5
    assert list(space.hyperplane(0, 1)) == [2, 3]
    assert list(space.coordinate(1)) == [0, 1, 0, 1, 0, 1]


@pytest.mark.parametrize("state", [(2, 0), (0,), (0, 0, 0), (-1, 0)])
def test_index_rejects_foreign_states(state):
    with pytest.raises(DomainError):
        SPACE_2x2.index(state)


def test_component_index_out_of_range():
    with pytest.raises(DomainError):
        SPACE_2x2.coordinate(2)


def test_step_function_is_right_continuous():
    fn = step((0.01, 0.09, 0.03, 0.12, 0.04, 0.04))

    assert fn(0.0) == 0.01
    assert fn(5.999) == 0.01
    assert fn(6.0) == 0.09
    assert fn(29.0) == 0.04
    assert fn(1000.0) == 0.04


def test_step_function_integral():
    fn = step((0.01, 0.09, 0.03, 0.12, 0.04, 0.04))

    assert fn.integral(8.0) == pytest.approx(6 * 0.01 + 2 * 0.09)
    assert fn.integral(35.0) == pytest.approx(
        6 * 0.01 + 4 * 0.09 + 10 * 0.03 + 6 * 0.12 + 4 * 0.04 + 5 * 0.04
    )


@pytest.mark.parametrize(
    "breakpoints,values",
    [((1.0, 2.0), (0.1, 0.2)), ((0.0, 2.0, 2.0), (0.1, 0.2, 0.3)), ((0.0,), (0.1, 0.2))],
)
def test_step_function_rejects_bad_breakpoints(breakpoints, values):
    with pytest.raises(DomainError):
        PiecewiseConstantFn(breakpoints, values)


def test_step_function_arithmetic_merges_breakpoints():
    a = PiecewiseConstantFn((0.0, 3.0), (0.01, 0.02))
    b = PiecewiseConstantFn((0.0, 5.0), (0.1, 0.2))

    total = a + b

    assert total.breakpoints == (0.0, 3.0, 5.0)
    assert total.values == pytest.approx((0.11, 0.12, 0.22))
    assert (b - a)(4.0) == pytest.approx(0.08)
    assert a.scaled(2.0)(3.0) == pytest.approx(0.04)


@pytest.mark.parametrize("w,r,t", [(0.3, 0.05, 7.0), (0.3, 0.0, 7.0), (1.0, 2.0, 0.5)])
def test_discounted_integral_constant(w, r, t):
    expected = w * t if r == 0 else w * (1 - np.exp(-r * t)) / r

    value = discounted_integral(
        PiecewiseConstantFn.constant(w), PiecewiseConstantFn.constant(r), t
    )

    assert value == pytest.approx(expected, rel=1e-13)


def test_discounted_integral_piecewise():
    w = PiecewiseConstantFn((0.0, 2.0), (0.5, 1.0))
    r = PiecewiseConstantFn((0.0, 1.0), (0.2, 0.4))
    # pieces [0,1), [1,2), [2,3)
    expected = (
        0.5 * (1 - np.exp(-0.2)) / 0.2
        + 0.5 * np.exp(-0.2) * (1 - np.exp(-0.4)) / 0.4
        + 1.0 * np.exp(-0.6) * (1 - np.exp(-0.4)) / 0.4
    )

    assert discounted_integral(w, r, 3.0) == pytest.approx(expected, rel=1e-13)


def test_kronecker_sum_matches_explicit_products():
    A = with_diagonal([[0, 0.3], [0, 0]])
    B = with_diagonal([[0, 0.7], [0.1, 0]])

    expected = np.kron(A, np.eye(2)) + np.kron(np.eye(2), B)

    np.testing.assert_allclose(kronecker_sum([A, B]), expected)


def test_validate_generator_reports_segment_and_row():
    good = with_diagonal(np.full((4, 4), 0.01))
    bad = good.copy()
    bad[0, 1] = -0.02
    g = PiecewiseConstantGenerator(SPACE_2x2, (0.0, 10.0), (good, bad))

    report = validate_generator(g)

    assert not report.ok
    messages = [str(v) for v in report.violations]
    assert "segment 1, row 0: negative off-diagonal" in messages
    assert any(m.startswith("segment 1, row 0: row sum") for m in messages)
    assert all(v.segment == 1 for v in report.violations)


def test_ensure_valid_raises_with_report():
    bad = np.zeros((4, 4))
    bad[2, 2] = 0.5
    g = PiecewiseConstantGenerator.constant(SPACE_2x2, bad)

    with pytest.raises(GeneratorValidationError) as excinfo:
        ensure_valid(g)

    conditions = {v.condition for v in excinfo.value.report.violations}
    assert "positive diagonal" in conditions


def test_generator_rejects_mismatched_segments():
    with pytest.raises(DomainError):
        PiecewiseConstantGenerator(SPACE_2x2, (0.0, 1.0), (np.zeros((4, 4)),))
    with pytest.raises(DomainError):
        PiecewiseConstantGenerator(SPACE_2x2, (0.0,), (np.zeros((3, 3)),))


def test_evaluate_generator_is_right_continuous():
    first = with_diagonal(np.full((4, 4), 0.01))
    second = with_diagonal(np.full((4, 4), 0.02))
    g = PiecewiseConstantGenerator(SPACE_2x2, (0.0, 5.0), (first, second))

    np.testing.assert_array_equal(evaluate_generator(g, 5.0), second)
    np.testing.assert_array_equal(evaluate_generator(g, 4.999), first)
    with pytest.raises(DomainError):
        evaluate_generator(g, -1.0)


def test_distribution_validation():
    with pytest.raises(DomainError):
        Distribution(SPACE_2x2, [0.5, 0.5, 0.1, -0.1])
    with pytest.raises(DomainError):
        Distribution(SPACE_2x2, [0.5, 0.5, 0.1, 0.0])
    with pytest.raises(DomainError):
        Distribution(SPACE_2x2, [0.5, 0.5])


def test_product_and_marginal_distribution():
    first = Distribution(StateSpace((2,)), [0.25, 0.75])
    second = Distribution(StateSpace((2,)), [0.6, 0.4])

    joint = Distribution.product([first, second])

    assert joint.space == SPACE_2x2
    assert joint[(1, 0)] == pytest.approx(0.45)
    np.testing.assert_allclose(marginal_distribution(joint, 0).probs, [0.25, 0.75])
    np.testing.assert_allclose(marginal_distribution(joint, 1).probs, [0.6, 0.4])


def test_point_mass_is_not_positive():
    d = Distribution.point_mass(SPACE_2x2, (0, 0))

    assert not d.is_positive()
    assert Distribution.uniform(SPACE_2x2).is_positive()


def test_permuted_generator_conjugates_rates():
    A = with_diagonal([[0, 1, 2, 3], [0, 0, 0, 4], [0, 0, 0, 5], [0, 0, 0, 0]])
    inner = PiecewiseConstantGenerator.constant(SPACE_2x2, A)
    swap = [0, 2, 1, 3]

    permuted = PermutedGenerator(inner, swap, SPACE_2x2)

    rates = permuted.rates(1.0)
    assert rates[0, 2] == 1
    assert rates[0, 1] == 2
    assert rates[1, 3] == 5
    assert rates[2, 3] == 4


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
    n=st.integers(min_value=2, max_value=6),
)
def test_with_diagonal_gives_valid_generators(seed, n):
    rng = np.random.default_rng(seed)

    matrix = random_generator(rng, n, scale=3.0, density=0.6)

    np.testing.assert_allclose(matrix.sum(axis=1), 0.0, atol=1e-12)
    space = StateSpace((n,))
    assert validate_generator(PiecewiseConstantGenerator.constant(space, matrix)).ok


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=6
    ),
    t=st.floats(min_value=0.0, max_value=40.0),
    dt=st.floats(min_value=0.0, max_value=40.0),
)
def test_integral_is_monotone_and_linear(values, t, dt):
    fn = PiecewiseConstantFn(tuple(5.0 * k for k in range(len(values))), values)

    assert fn.integral(t) <= fn.integral(t + dt) + 1e-15
    assert fn.integral(t) <= max(values) * t + 1e-12
    assert (fn + fn).integral(t) == pytest.approx(2 * fn.integral(t), abs=1e-12)
