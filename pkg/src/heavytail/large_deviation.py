"""Large-deviation ratios for heavy-tailed sums, checked by simulation.

For a deviation sequence ``gamma_m`` the quantity of interest is

    -log P(S_m - E S_m > gamma_m) / I(gamma_m)

which tends to 1 for super-exponential tails when
``log m << I(gamma_m) << gamma_m^2 / m``. For polynomial tails
``I(t) = gamma log t`` the denominator becomes ``I(gamma_m) - log m``.

The limits are asymptotic. At desk-scale m the code reports ratios with
confidence bands and checks trends; it does not expect the limit value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .concentration import CProvider, bound, default_beta, exact_provider
from .errors import ConditionError, FamilyError, RareEventError
from .montecarlo import MonteCarloConfig, estimate_tails, fmt
from .tail_model import (
    Pareto,
    Polynomial,
    ReferenceDistribution,
    SubWeibull,
    TailFunction,
    basic_rate,
    eval_I,
)

ADMISSIBLE_CUTOFF = 0.2
BOUNDARY_TOL = 1e-9
# a ratio must drop by more than rounding noise to count as decreasing
DECREASE_RTOL = 1e-9
ADMISSIBILITY_POLICY = (
    "finite-m surrogate for '<<': both log m / I(gamma_m) and m I(gamma_m) / gamma_m^2 "
    f"decrease along the grid and are below {ADMISSIBLE_CUTOFF} at the largest m"
)
# a point is simulated only if its predicted probability gives this many expected hits
MIN_EXPECTED_HITS = 10


@dataclass(frozen=True)
class DeviationSequence:
    """``gamma_m = a m**p (log m)**q``."""

    a: float
    p: float
    q: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.p < 0 or (self.p == 0 and self.q <= 0):
            raise ValueError("gamma_m must increase in m (need p > 0, or p = 0 and q > 0)")

    def gamma(self, m):
        m = np.asarray(m, dtype=float)
        out = self.a * m**self.p
        if self.q:
            out = out * np.log(m) ** self.q
        return out if out.ndim else float(out)


class BoundaryClass(str, Enum):
    BELOW = "BelowBoundary"
    NEAR = "NearBoundary"
    ABOVE = "AboveBoundary"


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    m_grid: list[int]
    log_m_over_I: list[float]
    m_I_over_gamma_sq: list[float]
    reason: str
    policy: str = ADMISSIBILITY_POLICY


def _check_ld_family(f: TailFunction):
    if isinstance(f, Polynomial):
        raise FamilyError("polynomial tails are not super-exponential; use ld_poly_limit")
    if not isinstance(f, SubWeibull) or not f.alpha > 1:
        # only sub-Weibull tails with alpha > 1 are certified (bounded c_{L,beta} for all beta < 1)
        raise FamilyError(f"no large-deviation certificate for the {f.family} tail "
                          "(needs a sub-Weibull tail with alpha > 1)")


def check_admissible(f: TailFunction, s: DeviationSequence, m_grid: Sequence[int]) -> AdmissibilityReport:
    """Finite-m check of ``log m << I(gamma_m) << gamma_m^2 / m`` on ``m_grid``.

    Raises:
        FamilyError: the tail is polynomial or not a certified super-exponential family.
    """
    _check_ld_family(f)
    ms = sorted(int(m) for m in m_grid)
    if len(ms) < 2 or ms[0] < 2:
        raise ValueError("need at least two grid points, all >= 2")
    gam = [s.gamma(m) for m in ms]
    I = [eval_I(f, g) for g in gam]
    r1 = [math.log(m) / i for m, i in zip(ms, I)]
    r2 = [m * i / g**2 for m, i, g in zip(ms, I, gam)]
    problems = []
    for label, r in (("log m / I(gamma_m)", r1), ("m I(gamma_m) / gamma_m^2", r2)):
        if not all(b < a * (1 - DECREASE_RTOL) for a, b in zip(r, r[1:])):
            problems.append(f"{label} is not decreasing")
        elif r[-1] >= ADMISSIBLE_CUTOFF:
            problems.append(f"{label} = {r[-1]:.3g} at m = {ms[-1]} is not below {ADMISSIBLE_CUTOFF}")
    return AdmissibilityReport(not problems, ms, r1, r2, "; ".join(problems) or "ok")


def classify_boundary(alpha: float, s: DeviationSequence) -> BoundaryClass:
    """Place ``gamma_m`` relative to ``m**(alpha / (2 alpha - 1))`` by its power exponent."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    edge = alpha / (2 * alpha - 1)
    if abs(s.p - edge) <= BOUNDARY_TOL:
        return BoundaryClass.NEAR
    return BoundaryClass.ABOVE if s.p > edge else BoundaryClass.BELOW


# ---------------------------------------------------------------------------
# simulation

LD_CSV_COLUMNS = ("m", "gamma_m", "p_hat", "ci_lo", "ci_hi", "denominator", "ratio",
                  "ratio_lo", "ratio_hi", "predicted", "single_max", "skipped")


@dataclass(frozen=True)
class LDPoint:
    m: int
    gamma_m: float
    p_hat: float
    ci_lo: float
    ci_hi: float
    denominator: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    predicted: float
    single_max: float
    skipped: str = ""


@dataclass
class LDCheckResult:
    kind: str
    m_grid: list[int]
    ratios: list[float]
    admissible: bool
    boundary_class: BoundaryClass | None
    points: list[LDPoint] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def gaps(self) -> list[float]:
        return [abs(r - 1) for r in self.ratios]

    def gap_nonincreasing(self) -> bool:
        g = [x for x in self.gaps if math.isfinite(x)]
        return len(g) == len(self.gaps) and all(b <= a for a, b in zip(g, g[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LD_CSV_COLUMNS)
        for p in self.points:
            w.writerow([fmt(getattr(p, c)) for c in LD_CSV_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "m_grid": self.m_grid,
            "ratios": self.ratios,
            "admissible": self.admissible,
            "boundary_class": self.boundary_class.value if self.boundary_class else None,
            "gap_nonincreasing": self.gap_nonincreasing(),
            "skipped": {p.m: p.skipped for p in self.points if p.skipped},
            **self.diagnostics,
        }


def predicted_probability(d: ReferenceDistribution, f: TailFunction, m: int, gamma_m: float,
                          beta: float | None = None, c_provider: CProvider | None = None) -> float:
    """Concentration-bound prediction for ``P(S_m - E S_m > gamma_m)`` (clamped at 1)."""
    beta = default_beta(f) if beta is None else beta
    c_provider = exact_provider(d, f) if c_provider is None else c_provider
    return bound(f, c_provider, m, gamma_m / m, beta).total_clamped


def single_max(d: ReferenceDistribution, m: int, gamma_m: float) -> float:
    """``m P(X > gamma_m)``: the one-big-jump approximation of the deviation probability."""
    return m * float(d.survival(gamma_m))


def choose_scale(d: ReferenceDistribution, f: TailFunction, p: float, q: float,
                 m_grid: Sequence[int], target: float,
                 candidates: Sequence[float] = (0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 5.0),
                 *, predictor: str = "bound", beta: float | None = None) -> float:
    """Largest candidate ``a`` whose predicted probability is at least ``target`` on every grid point.

    ``predictor`` is ``"bound"`` (the concentration bound, an upper estimate)
    or ``"single_max"`` (``m P(X > gamma_m)``, closer to the truth for
    max-dominated deviations).

    Raises:
        RareEventError: no candidate qualifies.
    """
    c_provider = exact_provider(d, f)
    for a in sorted(candidates, reverse=True):
        s = DeviationSequence(a, p, q)
        preds = []
        for m in m_grid:
            g = s.gamma(m)
            if predictor == "bound":
                preds.append(predicted_probability(d, f, int(m), g, beta, c_provider))
            elif predictor == "single_max":
                preds.append(single_max(d, int(m), g))
            else:
                raise ValueError(f"unknown predictor {predictor!r}")
        if min(preds) >= target:
            return a
    raise RareEventError(f"no scale in {list(candidates)} reaches predicted probability {target}")


def _ratio_band(ci_lo, ci_hi, den):
    lo = -math.log(ci_hi) / den if ci_hi > 0 else math.inf
    hi = -math.log(ci_lo) / den if ci_lo > 0 else math.inf
    return lo, hi


def _run(kind, d, f, s, m_grid, mc, denominator, beta, admissible, boundary_class, diagnostics):
    c_provider = exact_provider(d, f)
    floor = MIN_EXPECTED_HITS / mc.n_samples
    ms = sorted(int(m) for m in m_grid)
    points, ratios = [], []
    for m in ms:
        g = s.gamma(m)
        den = denominator(m, g)
        pred = predicted_probability(d, f, m, g, beta, c_provider)
        smax = single_max(d, m, g)
        if pred < floor:
            # RareEventError: recorded on the point rather than raised, so the rest of the grid runs
            points.append(LDPoint(m, g, math.nan, math.nan, math.nan, den, math.nan,
                                  math.nan, math.nan, pred, smax,
                                  f"{RareEventError.__name__}: predicted {pred:.3g} < {floor:.3g}"))
            ratios.append(math.nan)
            continue
        tail = _estimate_one(d, m, g, mc)
        ratio = -math.log(tail.p_hat) / den if tail.p_hat > 0 else math.inf
        lo, hi = _ratio_band(*tail.ci, den)
        points.append(LDPoint(m, g, tail.p_hat, tail.ci[0], tail.ci[1], den, ratio, lo, hi, pred, smax))
        ratios.append(ratio)
    return LDCheckResult(kind, ms, ratios, admissible, boundary_class, points, diagnostics)


def _estimate_one(d, m, gamma_m, mc):
    return estimate_tails(d, m, [gamma_m], mc, key=(m,))[0]


def ld_ratio(d: ReferenceDistribution, f: TailFunction, s: DeviationSequence,
             m_grid: Sequence[int], mc: MonteCarloConfig, *, beta: float | None = None) -> LDCheckResult:
    """Estimate ``-log P(S_m - E S_m > gamma_m) / I(gamma_m)`` along ``m_grid``.

    The admissibility verdict is attached to the result, not enforced, so the
    trend can still be inspected on sequences that miss the finite-m policy.
    Grid points whose predicted probability is below ``10 / n_samples`` are
    skipped and flagged.

    Raises:
        FamilyError: see :func:`check_admissible`.
    """
    adm = check_admissible(f, s, m_grid)
    gap = max(abs(eval_I(f, s.gamma(m)) - basic_rate(d, s.gamma(m))) for m in m_grid)
    diagnostics = {"admissibility": adm.reason, "policy": adm.policy,
                   "sequence": {"a": s.a, "p": s.p, "q": s.q},
                   "eval_I_vs_basic_rate_max_gap": gap}
    return _run("ratio", d, f, s, m_grid, mc, lambda m, g: eval_I(f, g), beta,
                adm.admissible, classify_boundary(f.alpha, s), diagnostics)


def poly_condition(s: DeviationSequence) -> str:
    """Which growth condition ``gamma_m`` satisfies for the polynomial limit.

    ``log m / log gamma_m -> 1/p``, so (i) is ``p > 1/2``; (ii) is ``p = 1/2``
    with ``q > 1/2``, which makes ``gamma_m >> sqrt(m log m)``.

    Raises:
        ConditionError: neither holds.
    """
    if s.p > 0.5 + BOUNDARY_TOL:
        return "i"
    if abs(s.p - 0.5) <= BOUNDARY_TOL and s.q > 0.5:
        return "ii"
    raise ConditionError(f"gamma_m = {s.a} m^{s.p} (log m)^{s.q} satisfies neither growth condition")


def ld_poly_limit(gamma: float, s: DeviationSequence, m_grid: Sequence[int],
                  d: ReferenceDistribution, mc: MonteCarloConfig, *,
                  beta: float | None = None) -> LDCheckResult:
    """Estimate ``-log P(S_m - E S_m > gamma_m) / (gamma log gamma_m - log m)``."""
    if not gamma > 2:
        raise ValueError("gamma must exceed 2")
    cond = poly_condition(s)
    f = Polynomial(gamma)
    if isinstance(d, Pareto) and not math.isclose(d.gamma, gamma):
        raise ValueError(f"distribution exponent {d.gamma} differs from gamma = {gamma}")
    diagnostics = {"condition": cond, "sequence": {"a": s.a, "p": s.p, "q": s.q}}
    return _run("poly", d, f, s, m_grid, mc, lambda m, g: eval_I(f, g) - math.log(m),
                beta, True, None, diagnostics)


def single_max_lower_bound(d: ReferenceDistribution, m: int, gamma_m: float,
                           mc: MonteCarloConfig) -> float:
    """``P(X > gamma_m) * P_hat(S_{m-1} - E S_{m-1} >= EX)``, a lower bound on the deviation probability.

    The event ``{X_1 > gamma_m}`` together with the rest of the sum being at
    least ``EX`` forces ``S_m - E S_m > gamma_m``.
    """
    if m < 2:
        return float(d.survival(gamma_m))
    rest = estimate_tails(d, m - 1, [np.nextafter(d.mean, -np.inf)], mc, key=(m, 1))[0]
    return float(d.survival(gamma_m)) * rest.p_hat
