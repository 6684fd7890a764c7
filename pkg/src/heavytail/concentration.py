"""Two-regime concentration bound for centred sums of i.i.d. heavy-tailed variables.

For ``P(S_m - E S_m > m t)`` the bound is

* heavy-tail regime, ``t >= t_max``:
  ``exp(-c_t beta I(mt)) + m exp(-I(mt))`` with
  ``c_t = 1 - (beta c_{mt,beta} / (2t)) I(mt)/(mt)``;
* Gaussian-like regime, ``t < t_max``:
  ``exp(-m t^2 / (2c)) + m exp(-m t_max^2 / (beta c))`` with ``c = c_{m t_max, beta}``;

where ``t_max`` is the supremum of ``{t >= 0 : t <= beta c_{mt,beta} I(mt)/(mt)}``.

The constant ``c_{L,beta}`` comes from a *c-provider*: any callable
``(L, beta) -> CBetaEstimate``. Any upper bound on the exact constant gives a
valid bound, so the providers below trade tightness for speed. Providers must
be safe to call concurrently; the built-in ones only use write-once caches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DivergentC,
    InvalidFamily,
    NonConvergence,
    NotCertified,
    ThresholdError,
)
from .numerics import find_root
from .tail_model import (
    GrowthClass,
    Pareto,
    Polynomial,
    ReferenceDistribution,
    SubExponential,
    SubWeibull,
    TailFunction,
    Weibull,
    classify_growth,
)
from .truncation import (
    CBetaEstimate,
    CMethod,
    TruncationParams,
    c_beta_exact,
    c_beta_ratio_bound,
    closed_form_polynomial,
    closed_form_subexp,
    closed_form_subweibull,
)

CProvider = Callable[[float, float], CBetaEstimate]

N_SCAN = 64
T_FLOOR = 1e-12
ROOT_RTOL = 1e-14


class Regime(str, Enum):
    HEAVY_TAIL = "HeavyTail"
    GAUSSIAN_LIKE = "GaussianLike"


@dataclass(frozen=True)
class ConcentrationBound:
    regime: Regime
    t_max: float
    c_t: float | None
    exp_term: float
    union_term: float
    total: float
    c_beta_used: CBetaEstimate
    m: int
    t: float
    beta: float
    total_clamped: float = field(init=False)
    # Gaussian regime only: |I(m t_max) - m t_max^2 / (beta c)|, the two
    # equivalent forms of the union exponent at the fixed point.
    fixed_point_residual: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "total_clamped", min(self.total, 1.0))

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "t_max": self.t_max,
            "c_t": self.c_t,
            "exp_term": self.exp_term,
            "union_term": self.union_term,
            "total": self.total,
            "total_clamped": self.total_clamped,
            "fixed_point_residual": self.fixed_point_residual,
            "c_beta_used": self.c_beta_used.to_dict(),
            "params": {"m": self.m, "t": self.t, "beta": self.beta},
        }


def default_beta(f: TailFunction) -> float:
    """0.9 for linear and sub-Weibull tails; below the cutoff 1 - 2/gamma for polynomial ones."""
    if isinstance(f, Polynomial):
        return max(0.5 * (1 - 2 / f.gamma), 0.01)
    return 0.9


# ---------------------------------------------------------------------------
# c-providers


def constant_provider(c: float) -> CProvider:
    """A fixed upper bound on c_{L,beta}, valid for all L of interest."""
    est = CBetaEstimate(float(c), CMethod.CONSTANT, 0.0, float(c))

    def provider(L, beta):
        return est

    return provider


def exact_provider(d: ReferenceDistribution, f: TailFunction | None = None) -> CProvider:
    f = d.tail() if f is None else f

    @lru_cache(maxsize=4096)
    def provider(L, beta):
        return c_beta_exact(d, TruncationParams.from_tail(L, beta, f))

    return provider


def ratio_provider(d: ReferenceDistribution, f: TailFunction | None = None) -> CProvider:
    f = d.tail() if f is None else f

    @lru_cache(maxsize=4096)
    def provider(L, beta):
        return c_beta_ratio_bound(d, f, TruncationParams.from_tail(L, beta, f))

    return provider


def closed_form_provider(f: TailFunction, *, sigma_minus_sq: float, mean: float = 0.0) -> CProvider:
    """Closed-form bound for the family of ``f``.

    ``mean`` only enters the sub-exponential form; the sub-Weibull and
    polynomial forms are stated for centred variables.
    """
    if isinstance(f, SubExponential):
        def provider(L, beta):
            return closed_form_subexp(None, f.k, beta, mean=mean, sigma_minus_sq=sigma_minus_sq)

        return provider
    if isinstance(f, SubWeibull):
        def provider(L, beta):
            return closed_form_subweibull(sigma_minus_sq, f.alpha, f.c_alpha, beta, L)

        return provider
    if isinstance(f, Polynomial):
        def provider(L, beta):
            return closed_form_polynomial(sigma_minus_sq, f.gamma, beta, max(L, math.e))

        return provider
    raise InvalidFamily(f"no closed form for the {f.family} tail")


def _c_value(c_provider: CProvider, L: float, beta: float) -> tuple[float, CBetaEstimate]:
    est = c_provider(L, beta)
    if not math.isfinite(est.value):
        raise DivergentC(f"c-provider returned {est.value} at L={L}, beta={beta}")
    return est.value, est


# ---------------------------------------------------------------------------
# t_max and the bound


def _check_args(m, beta):
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")


def solve_t_max(f: TailFunction, c_provider: CProvider, m: int, beta: float,
                *, n_scan: int = N_SCAN) -> float:
    """Largest t with ``t <= beta c_{mt,beta} I(mt)/(mt)``; 0 when only t = 0 qualifies.

    Root-finds ``g(t) = t - beta c_{mt,beta} I(mt)/(mt)``. The upper end is
    doubled from 1 until ``g > 0``; the range down to ``max(1e-12, floor/m)``
    is scanned on ``n_scan`` log-spaced points and the last ``<= 0 -> > 0``
    crossing is refined. The returned point has ``g >= 0``.
    """
    _check_args(m, beta)

    def g(t):
        L = m * t
        c, _ = _c_value(c_provider, L, beta)
        return t - beta * c * f.extended(L) / L

    t_hi = 1.0
    for _ in range(1100):
        if g(t_hi) > 0:
            break
        t_hi *= 2.0
    else:
        raise NonConvergence("could not find t with g(t) > 0 while bracketing t_max")

    t_lo = max(T_FLOOR, f.domain_floor / m)
    if t_lo >= t_hi:
        return 0.0
    grid = np.geomspace(t_lo, t_hi, n_scan)
    vals = np.array([g(t) for t in grid[:-1]] + [g(t_hi)])
    nonpos = np.flatnonzero(vals <= 0)
    if nonpos.size == 0:
        return 0.0
    i = int(nonpos[-1])
    if vals[i] == 0 and i + 1 == len(grid):
        return float(grid[i])
    res = find_root(g, float(grid[i]), float(grid[i + 1]), tol=ROOT_RTOL * grid[i + 1])
    lo, hi = res.bracket
    # return the end of the final bracket where g >= 0
    return hi if g(hi) >= 0 else res.root


def bound(f: TailFunction, c_provider: CProvider, m: int, t: float, beta: float,
          *, t_max: float | None = None) -> ConcentrationBound:
    """Evaluate the two-regime bound at one ``(m, t, beta)``.

    ``t_max`` may be passed in when it has already been solved for the same
    ``(f, c_provider, m, beta)``.

    Raises:
        InvalidFamily: I grows faster than linearly (not supported here).
        DivergentC: the provider's constant is infinite.
    """
    _check_args(m, beta)
    if not t >= 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if classify_growth(f) not in (GrowthClass.LINEAR_ORDER, GrowthClass.SUB_LINEAR):
        raise InvalidFamily("I(t) must be O(t)")
    if t_max is None:
        t_max = solve_t_max(f, c_provider, m, beta)

    if t >= t_max and t > 0:
        L = m * t
        c, est = _c_value(c_provider, L, beta)
        I_L = float(f.extended(L))
        # same operation order as g in solve_t_max, so g(t) >= 0 gives c_t >= 1/2 exactly
        c_t = 1.0 - (beta * c * I_L / L) / (2 * t)
        exp_term = math.exp(-c_t * beta * I_L)
        union_term = m * math.exp(-I_L)
        return ConcentrationBound(Regime.HEAVY_TAIL, t_max, c_t, exp_term, union_term,
                                  exp_term + union_term, est, m, t, beta)

    if t >= t_max:  # t == t_max == 0: nothing to bound
        c, est = _c_value(c_provider, max(m * T_FLOOR, T_FLOOR), beta)
        return ConcentrationBound(Regime.HEAVY_TAIL, t_max, None, 1.0, float(m),
                                  1.0 + m, est, m, t, beta)

    L = m * t_max
    c, est = _c_value(c_provider, L, beta)
    exp_term = math.exp(-m * t * t / (2 * c))
    union_exponent = m * t_max**2 / (beta * c)
    union_term = m * math.exp(-union_exponent)
    residual = abs(float(f.extended(L)) - union_exponent)
    return ConcentrationBound(Regime.GAUSSIAN_LIKE, t_max, None, exp_term, union_term,
                              exp_term + union_term, est, m, t, beta,
                              fixed_point_residual=residual)


def subweibull_t_max(alpha: float, c_alpha: float, c: float, beta: float, m: int) -> float:
    """Closed-form t_max for ``I = c_alpha t**(1/alpha)`` and a constant c."""
    return (beta * c * c_alpha) ** (alpha / (2 * alpha - 1)) * m ** (-(alpha - 1) / (2 * alpha - 1))


def bound_subweibull_asymptotic(alpha: float, c_alpha: float, sigma_sq: float, epsilon: float,
                                beta: float, m: int, t: float, C_epsilon: float) -> ConcentrationBound:
    """Sub-Weibull bound with ``c = sigma^2 + epsilon``, valid once ``m t > C_epsilon``.

    Uses the same convention as :func:`bound`: ``t >= t_max`` is the heavy regime.
    """
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    _check_args(m, beta)
    if not m * t > C_epsilon:
        raise ThresholdError(f"m t = {m * t} is not beyond C_epsilon = {C_epsilon}")
    c = sigma_sq + epsilon
    est = CBetaEstimate(c, CMethod.CONSTANT, 0.0, c)
    t_max = subweibull_t_max(alpha, c_alpha, c, beta, m)
    I_mt = c_alpha * (m * t) ** (1 / alpha)
    if t >= t_max:
        c_t = 1 - 0.5 * beta * c * c_alpha * m ** (1 / alpha - 1) * t ** (1 / alpha - 2)
        exp_term = math.exp(-c_t * beta * I_mt)
        union_term = m * math.exp(-I_mt)
        return ConcentrationBound(Regime.HEAVY_TAIL, t_max, c_t, exp_term, union_term,
                                  exp_term + union_term, est, m, t, beta)
    exp_term = math.exp(-m * t * t / (2 * c))
    union_exponent = m * t_max**2 / (beta * c)
    union_term = m * math.exp(-union_exponent)
    residual = abs(c_alpha * (m * t_max) ** (1 / alpha) - union_exponent)
    return ConcentrationBound(Regime.GAUSSIAN_LIKE, t_max, None, exp_term, union_term,
                              exp_term + union_term, est, m, t, beta,
                              fixed_point_residual=residual)


def certify_C_epsilon(d: ReferenceDistribution, beta: float, epsilon: float,
                      L_grid: Sequence[float]) -> float:
    """Smallest grid L from which on ``c_beta_exact(L) <= Var + epsilon`` at every larger grid point.

    This is an empirical certificate on the supplied grid, not a proof.

    Raises:
        InvalidFamily: ``c_{L,beta}`` is not known to converge to the variance.
        NotCertified: no grid point qualifies.
    """
    if isinstance(d, Weibull):
        if not d.alpha > 1 or not beta < 1:
            raise InvalidFamily("Weibull certificates need alpha > 1 and beta < 1")
    elif isinstance(d, Pareto):
        if not beta < 1 - 2 / d.gamma:
            raise InvalidFamily("Pareto certificates need beta < 1 - 2/gamma")
    else:
        raise InvalidFamily(f"no convergence guarantee for {d.kind}")
    f = d.tail()
    grid = sorted(float(L) for L in L_grid)
    ok = [c_beta_exact(d, TruncationParams.from_tail(L, beta, f)).value <= d.variance + epsilon
          for L in grid]
    start = None
    for i in range(len(grid) - 1, -1, -1):
        if not ok[i]:
            break
        start = i
    if start is None:
        raise NotCertified(f"c_beta_exact exceeds Var + {epsilon} at the largest grid point")
    return grid[start]
