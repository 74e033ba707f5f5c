import numpy as np
import pytest
from jsonschema import Draft7Validator

from markov_structures.chain import PiecewiseConstantFn, StateSpace, with_diagonal
from markov_structures.schema import ConfigJSONSchema

PERIODS = (0.0, 6.0, 10.0, 20.0, 26.0, 30.0)
FIXED_PERIODS = (0.0, 3.0, 10.0, 30.0)
ALT_PERIODS = (0.0, 6.0, 8.0, 10.0, 12.0, 15.0)
SPACE_2x2 = StateSpace.default_space(2)


def step(values, breakpoints=PERIODS):
    return PiecewiseConstantFn(breakpoints, values)


def flat(value, breakpoints=PERIODS):
    return step([value] * len(breakpoints), breakpoints)


def common_jumps_fixed(scenario):
    c = {
        1: (0.08, 0.15, 0.2, 0.2),
        2: (0.08, 0.03, 0.003, 0.003),
    }[scenario]
    return {
        "a": flat(0.01, FIXED_PERIODS),
        "b": flat(0.02, FIXED_PERIODS),
        "c": step(c, FIXED_PERIODS),
    }


def common_jumps_rolling(scenario):
    c = {
        1: (0.01, 0.09, 0.03, 0.12, 0.04, 0.04),
        2: (0.12, 0.09, 0.03, 0.09, 0.05, 0.05),
    }[scenario]
    return {"a": flat(0.01), "b": flat(0.02), "c": step(c)}


def extreme_contagion(scenario):
    c = {
        1: (0.01, 0.1, 0.08, 0.05, 0.03, 0.03),
        2: (0.08, 0.03, 0.02, 0.04, 0.03, 0.03),
    }[scenario]
    return {"c": step(c)}


def anti_contagion(scenario):
    ab = {
        1: (0.01, 0.08, 0.05, 0.03, 0.01, 0.01),
        2: (0.05, 0.02, 0.03, 0.07, 0.05, 0.05),
    }[scenario]
    return {"a": step(ab), "b": step(ab)}


SYSTEMIC_C = {
    1: (0.02, 0.09, 0.06, 0.02, 0.09, 0.09),
    2: (0.09, 0.06, 0.02, 0.09, 0.02, 0.02),
}


def systemic_importance(scenario, breakpoints=PERIODS):
    return {
        "a": flat(0.02, breakpoints),
        "c": step(SYSTEMIC_C[scenario], breakpoints),
        "d": flat(0.01, breakpoints),
    }


def two_weak_only(scenario):
    return {"a": flat(0.01), "c": step(SYSTEMIC_C[scenario])}


def constant(value):
    return PiecewiseConstantFn.constant(value)


# every bundled parameter set of the example families, keyed by scenario
FAMILY_CASES = {
    "ex1_s1": ("common_jumps", common_jumps_fixed(1)),
    "ex1_s2": ("common_jumps", common_jumps_fixed(2)),
    "ex1_rolling_s1": ("common_jumps", common_jumps_rolling(1)),
    "ex1_rolling_s2": ("common_jumps", common_jumps_rolling(2)),
    "ex2_s1": ("extreme_contagion", extreme_contagion(1)),
    "ex2_s2": ("extreme_contagion", extreme_contagion(2)),
    "ex3_s1": ("extreme_anti_contagion", anti_contagion(1)),
    "ex3_s2": ("extreme_anti_contagion", anti_contagion(2)),
    "ex4_s1": ("systemic_importance", systemic_importance(1)),
    "ex4_s1_alt": ("systemic_importance", systemic_importance(1, ALT_PERIODS)),
    "ex4_s2": ("systemic_importance", systemic_importance(2)),
    "ex5_s1": ("symmetric_common_jumps", two_weak_only(1)),
    "ex5_s2": ("symmetric_common_jumps", two_weak_only(2)),
}


def family_cases():
    """``(name, params)`` pairs for ``pytest.mark.parametrize`` with scenario ids."""
    return pytest.mark.parametrize(
        "name,params", list(FAMILY_CASES.values()), ids=list(FAMILY_CASES)
    )


def first_period(params):
    """The family parameters frozen at their values on the first period."""
    return {key: fn.values[0] for key, fn in params.items()}


def closed_form_intensities(name, p, u):
    """Printed default intensities of both institutions for constant parameters ``p``."""
    if name == "common_jumps":
        a, b, c = p["a"], p["b"], p["c"]
        return common_jumps_lambda_1(a, b, c, u), common_jumps_lambda_2(a, b, c, u)
    if name == "symmetric_common_jumps":
        a, c = p["a"], p["c"]
        return common_jumps_lambda_1(a, a, c, u), common_jumps_lambda_2(a, a, c, u)
    if name == "extreme_contagion":
        return p["c"], p["c"]
    if name == "extreme_anti_contagion":
        a, b = p["a"], p["b"]
        return anti_contagion_lambda_1(a, b, u), anti_contagion_lambda_1(b, a, u)
    a, c, d = p["a"], p["c"], p["d"]
    return systemic_importance_lambda_1(a, c, d, u), a + c


def common_jumps_lambda_1(a, b, c, u):
    """Printed default intensity of institution 1 under constant common-jump rates."""
    E = np.exp(-(a + b + c) * u)
    return (c * (a + b + c) * E + a * b * np.exp(-b * u)) / (a * np.exp(-b * u) + c * E)


def common_jumps_lambda_2(a, b, c, u):
    E = np.exp(-(a + b + c) * u)
    return (c * (a + b + c) * E + a * b * np.exp(-a * u)) / (b * np.exp(-a * u) + c * E)


def anti_contagion_lambda_1(a, b, u):
    E = np.exp(-(a + b) * u)
    return b * (a + b) * E / (a + b * E)


def systemic_importance_lambda_1(a, c, d, u):
    E = np.exp(-(a + c) * u)
    S = ((c - d) * E + a * np.exp(-d * u)) / (a + c - d)
    return (E / S) * (c - d) + d


def rk4_transition(g, t, s, h=1e-3):
    """Forward equation ``dP/du = P L(u)`` by classical RK4, split at breakpoints.

    Rates are read strictly inside each smooth piece.
    """
    n = g.space.size
    P = np.eye(n)
    cuts = [t] + [b for b in g.breakpoints if t < b < s] + [s]
    for lo, hi in zip(cuts, cuts[1:]):
        steps = max(1, int(np.ceil((hi - lo) / h)))
        du = (hi - lo) / steps

        def L(u, lo=lo, hi=hi):
            return g.rates(min(max(u, lo), hi - 1e-12))

        u = lo
        for _ in range(steps):
            k1 = P @ L(u)
            k2 = (P + 0.5 * du * k1) @ L(u + 0.5 * du)
            k3 = (P + 0.5 * du * k2) @ L(u + 0.5 * du)
            k4 = (P + du * k3) @ L(u + du)
            P = P + du * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            u += du
    return P


def random_generator(rng, n, scale=1.0, density=1.0):
    offdiag = scale * rng.random((n, n))
    offdiag *= rng.random((n, n)) < density
    return with_diagonal(offdiag)


def _validate_schema(schema):
    """
    raises jsonschema.exceptions.SchemaError
    """
    Draft7Validator.check_schema(schema)


def validate_and_dump(schema):
    json_schema = ConfigJSONSchema()
    data = json_schema.dump(schema)
    _validate_schema(data)
    # ensure last version
    assert data["$schema"] == "http://json-schema.org/draft-07/schema#"
    return data
