import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavytail.concentration import (
    Regime,
    bound,
    bound_subweibull_asymptotic,
    certify_C_epsilon,
    closed_form_provider,
    constant_provider,
    default_beta,
    exact_provider,
    ratio_provider,
    solve_t_max,
    subweibull_t_max,
)
from heavytail.errors import DivergentC, InvalidFamily, NotCertified, ThresholdError
from heavytail.tail_model import (
    Exponential,
    Pareto,
    Polynomial,
    SubExponential,
    SubWeibull,
    Weibull,
)
from heavytail.truncation import CBetaEstimate, CMethod

SW2 = SubWeibull(2.0, 1.0)


def test_t_max_matches_closed_form():
    t = solve_t_max(SW2, constant_provider(1.0), 100, 0.5)
    assert t == pytest.approx(0.5 ** (2 / 3) * 100 ** (-1 / 3), rel=1e-8)
    assert t == pytest.approx(0.13572, abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1.1, 4.0), beta=st.floats(0.05, 0.95), c=st.floats(0.2, 5.0),
       log_m=st.floats(1.0, 6.0))
def test_t_max_closed_form_property(alpha, beta, c, log_m):
    m = int(10**log_m)
    f = SubWeibull(alpha, 1.3)
    got = solve_t_max(f, constant_provider(c), m, beta)
    assert got == pytest.approx(subweibull_t_max(alpha, 1.3, c, beta, m), rel=1e-8)


def test_t_max_subexponential_is_l_free():
    f = SubExponential(1.5)
    assert solve_t_max(f, constant_provider(2.0), 50, 0.4) == pytest.approx(0.4 * 2.0 * 1.5, rel=1e-10)


def test_t_max_with_exact_provider_sits_on_the_fixed_point():
    d = Weibull(2.0, 1.0)
    f, prov = d.tail(), exact_provider(d)
    m, beta = 100, 0.5
    t = solve_t_max(f, prov, m, beta)
    c = prov(m * t, beta).value
    assert t == pytest.approx(beta * c * f.extended(m * t) / (m * t), rel=1e-9)


def test_boundary_gives_half():
    t_max = solve_t_max(SW2, constant_provider(1.0), 100, 0.5)
    b = bound(SW2, constant_provider(1.0), 100, t_max, 0.5)
    assert b.regime is Regime.HEAVY_TAIL
    assert b.c_t == pytest.approx(0.5, abs=1e-9)
    assert b.c_t >= 0.5


def test_subexponential_heavy_regime_formula():
    f, c, beta, m, t = SubExponential(1.0), 6.0, 0.5, 20, 4.0
    b = bound(f, constant_provider(c), m, t, beta)
    assert b.regime is Regime.HEAVY_TAIL
    c_t = 1 - beta * c / (2 * t)
    expected = math.exp(-c_t * beta * m * t) + m * math.exp(-m * t)
    assert b.total == pytest.approx(expected, rel=1e-12)


def test_gaussian_regime_formula_and_residual():
    prov = constant_provider(1.0)
    m, beta = 100, 0.5
    t_max = solve_t_max(SW2, prov, m, beta)
    b = bound(SW2, prov, m, t_max / 2, beta)
    assert b.regime is Regime.GAUSSIAN_LIKE
    assert b.c_t is None
    assert b.exp_term == pytest.approx(math.exp(-m * (t_max / 2) ** 2 / 2), rel=1e-12)
    assert b.union_term == pytest.approx(m * math.exp(-m * t_max**2 / beta), rel=1e-12)
    assert b.fixed_point_residual < 1e-8


def test_total_decomposes_and_clamps():
    b = bound(SW2, constant_provider(1.0), 100, 0.01, 0.5)
    assert b.total == b.exp_term + b.union_term
    assert b.total > 1
    assert b.total_clamped == 1.0
    out = json.loads(json.dumps(b.to_dict()))
    assert out["c_beta_used"]["method"] == "Constant"
    assert out["params"] == {"m": 100, "t": 0.01, "beta": 0.5}


FAMILIES = [
    (Exponential(1.0), 0.5),
    (Weibull(2.0, 1.0), 0.5),
    (Pareto(3.0), default_beta(Polynomial(3.0))),
]


@pytest.mark.parametrize("d,beta", FAMILIES, ids=["exp", "weibull", "pareto"])
def test_regime_consistency_and_c_t_range(d, beta):
    f, prov, m = d.tail(), exact_provider(d), 100
    t_max = solve_t_max(f, prov, m, beta)
    prev = {Regime.HEAVY_TAIL: math.inf, Regime.GAUSSIAN_LIKE: math.inf}
    for t in np.geomspace(t_max / 20, 20 * t_max, 25):
        b = bound(f, prov, m, t, beta, t_max=t_max)
        assert (t >= t_max) == (b.regime is Regime.HEAVY_TAIL)
        if b.regime is Regime.HEAVY_TAIL:
            assert 0.5 <= b.c_t < 1
        # exp_term nonincreasing within a regime
        assert b.exp_term <= prev[b.regime] * (1 + 1e-12)
        prev[b.regime] = b.exp_term


@settings(max_examples=60, deadline=None)
@given(c=st.floats(0.1, 10.0), factor=st.floats(1.0, 5.0), log_t=st.floats(-3.0, 1.0),
       beta=st.floats(0.1, 0.9))
def test_larger_c_never_decreases_total(c, factor, log_t, beta):
    # with the regime split held fixed; t_max itself grows with c and can lower the union term
    t = 10**log_t
    t_max = solve_t_max(SW2, constant_provider(c), 50, beta)
    lo = bound(SW2, constant_provider(c), 50, t, beta, t_max=t_max)
    hi = bound(SW2, constant_provider(c * factor), 50, t, beta, t_max=t_max)
    assert hi.total >= lo.total * (1 - 1e-12)


def test_moving_t_max_can_lower_the_total():
    lo = bound(SW2, constant_provider(1.0), 50, 0.1, 0.5)
    hi = bound(SW2, constant_provider(2.0), 50, 0.1, 0.5)
    assert hi.union_term < lo.union_term


@pytest.mark.parametrize("t", [0.01, 0.02923, 0.05, 0.5, 3.0])
def test_asymptotic_matches_constant_provider(t):
    m, beta = 10**4, 0.5
    a = bound_subweibull_asymptotic(2.0, 1.0, 0.8, 0.2, beta, m, t, C_epsilon=1.0)
    b = bound(SW2, constant_provider(1.0), m, t, beta, t_max=a.t_max)
    assert a.regime is b.regime
    assert a.total == pytest.approx(b.total, rel=1e-12, abs=1e-300)
    assert a.t_max == pytest.approx(solve_t_max(SW2, constant_provider(1.0), m, beta), rel=1e-10)


def test_asymptotic_examples():
    b = bound_subweibull_asymptotic(2.0, 1.0, 1.0, 0.0, 0.5, 10**4, 0.1, C_epsilon=10.0)
    assert b.t_max == pytest.approx(0.5 ** (2 / 3) * 10 ** (-4 / 3), rel=1e-12)
    assert b.t_max == pytest.approx(0.02924, abs=1e-5)
    at = bound_subweibull_asymptotic(2.0, 1.0, 1.0, 0.0, 0.5, 10**4, b.t_max, C_epsilon=10.0)
    assert at.c_t == pytest.approx(0.5, abs=1e-12)
    half = b.t_max / 2
    g = bound_subweibull_asymptotic(2.0, 1.0, 1.0, 0.0, 0.5, 10**4, half, C_epsilon=10.0)
    assert g.exp_term == pytest.approx(math.exp(-1e4 * half**2 / 2), rel=1e-12)


def test_asymptotic_threshold():
    with pytest.raises(ThresholdError):
        bound_subweibull_asymptotic(2.0, 1.0, 1.0, 0.1, 0.5, 100, 0.1, C_epsilon=10.0)
    with pytest.raises(ValueError):
        bound_subweibull_asymptotic(1.0, 1.0, 1.0, 0.1, 0.5, 100, 1.0, C_epsilon=1.0)


def test_divergent_provider():
    def inf_provider(L, beta):
        return CBetaEstimate(math.inf, CMethod.CONSTANT, 0.0, math.inf)

    with pytest.raises(DivergentC):
        bound(SW2, inf_provider, 10, 1.0, 0.5, t_max=0.1)


def test_m_one_weibull_total_decreasing():
    d = Weibull(2.0, 1.0)
    f, prov = d.tail(), exact_provider(d)
    t_max = solve_t_max(f, prov, 1, 0.5)
    ts = np.geomspace(max(t_max, 1.0) * 2, 1e4, 12)
    totals = []
    for t in ts:
        b = bound(f, prov, 1, t, 0.5, t_max=t_max)
        assert b.union_term == pytest.approx(math.exp(-math.sqrt(t)), rel=1e-12)
        assert b.exp_term == pytest.approx(math.exp(-0.5 * b.c_t * math.sqrt(t)), rel=1e-12)
        totals.append(b.total)
    assert all(b < a for a, b in zip(totals, totals[1:]))


def test_provider_dominance_chain():
    d = Weibull(2.0, 1.0)
    f = d.tail()
    closed = closed_form_provider(f, sigma_minus_sq=d.neg_second_moment)
    for L in [10.0, 1e3, 1e5]:
        e, r, c = exact_provider(d)(L, 0.5), ratio_provider(d)(L, 0.5), closed(L, 0.5)
        assert e.value <= r.value * (1 + 1e-9) <= c.value * (1 + 1e-9)


def test_closed_provider_needs_a_family():
    from heavytail.tail_model import Tabulated

    tab = Tabulated(((0.0, 0.0), (1.0, 1.0), (2.0, 1.5)))
    with pytest.raises(InvalidFamily):
        closed_form_provider(tab, sigma_minus_sq=1.0)


def test_default_beta():
    assert default_beta(SW2) == 0.9
    assert default_beta(Polynomial(3.0)) == pytest.approx(1 / 6)
    assert default_beta(Polynomial(2.01)) == 0.01


def test_certify_examples():
    d = Weibull(2.0, 1.0)
    grid = [10.0**k for k in range(2, 7)]
    assert certify_C_epsilon(d, 0.5, 0.05 * d.variance, grid) in grid
    assert certify_C_epsilon(d, 0.5, 0.05 * d.variance, grid) == 1e5
    # c at L = 100 is about 157 against Var = 20
    assert certify_C_epsilon(d, 0.5, 140.0, grid) == grid[0]
    with pytest.raises(NotCertified):
        certify_C_epsilon(d, 0.5, 0.0, grid)
    with pytest.raises(InvalidFamily):
        certify_C_epsilon(Exponential(1.0), 0.5, 0.1, grid)
    with pytest.raises(InvalidFamily):
        certify_C_epsilon(Pareto(3.0), 0.5, 0.1, grid)


def test_c_t_at_t_max_is_not_below_half_after_rounding():
    d = Pareto(3.0)
    f, prov = d.tail(), exact_provider(d)
    for m in (100, 1000, 10_000):
        t_max = solve_t_max(f, prov, m, 1 / 6)
        assert bound(f, prov, m, t_max, 1 / 6, t_max=t_max).c_t >= 0.5
