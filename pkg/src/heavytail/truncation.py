"""Second-moment constants of the truncated, exponentially tilted variable.

With ``X^L = X 1(X <= L)`` and ``Z^L = X^L - EX``, the constant

    c_{L,beta} = E[(Z^L)^2 1(Z^L <= 0)] + E[(Z^L)^2 exp(lam Z^L) 1(Z^L > 0)],
    lam = beta I(L) / L,

controls a quadratic bound on the log-MGF of ``Z^L``. This module computes it
exactly by quadrature, bounds it through the I(t)/t-nonincreasing relaxation,
and evaluates the closed forms for the sub-exponential, sub-Weibull and
polynomial families.

Note that ``X > L`` truncates to ``X^L = 0``, an atom at ``Z^L = -EX`` that
contributes ``EX^2 P(X > L)`` to the nonpositive part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DivergenceError, InvalidFamily
from .numerics import DEFAULT_TOL, integrate
from .tail_model import (
    ReferenceDistribution,
    SubExponential,
    SubWeibull,
    Tabulated,
    TailFunction,
)

BRANCH_TOL = 1e-12


class CMethod(str, Enum):
    EXACT_QUADRATURE = "ExactQuadrature"
    RATIO_BOUND = "RatioBound"
    CLOSED_FORM_SUBEXP = "ClosedFormSubExp"
    CLOSED_FORM_SUBWEIBULL = "ClosedFormSubWeibull"
    CLOSED_FORM_POLYNOMIAL = "ClosedFormPolynomial"
    CONSTANT = "Constant"


@dataclass(frozen=True)
class TruncationParams:
    L: float
    beta: float
    lam: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"truncation level L must be positive, got {self.L}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @classmethod
    def from_tail(cls, L: float, beta: float, f: TailFunction) -> "TruncationParams":
        """Couple lambda to the truncation level: ``lam = beta * I(L) / L``."""
        L = float(L)
        return cls(L, float(beta), float(beta) * f.extended(L) / L)


@dataclass(frozen=True)
class CBetaEstimate:
    value: float
    method: CMethod
    neg_part: float
    pos_part: float

    @classmethod
    def from_parts(cls, neg: float, pos: float, method: CMethod) -> "CBetaEstimate":
        return cls(neg + pos, method, neg, pos)

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method.value,
                "neg_part": self.neg_part, "pos_part": self.pos_part}


def _parts(d: ReferenceDistribution, L: float, lam: float, tol: float) -> tuple[float, float]:
    mu = d.mean
    atom = float(d.survival(L))
    z_atom = -mu
    neg = d.expect(lambda x: (x - mu) ** 2, d.support_floor, min(mu, L), tol=tol)
    pos = 0.0
    if L > mu:
        pos = d.expect(lambda x: (x - mu) ** 2, mu, L, tilt=lam, tol=tol)
    if z_atom <= 0:
        neg += z_atom**2 * atom
    else:
        pos += z_atom**2 * math.exp(lam * z_atom) * atom
    if not (math.isfinite(neg) and math.isfinite(pos)):
        raise DivergenceError(f"truncated tilted second moment is not finite at L={L}, lambda={lam}")
    return neg, pos


def k_L_lambda(d: ReferenceDistribution, L: float, lam: float, tol: float = DEFAULT_TOL) -> float:
    """The log-MGF constant ``k_{L,lambda}`` for an arbitrary tilt ``lam``."""
    if not L > 0 or not lam >= 0:
        raise ValueError("need L > 0 and lambda >= 0")
    neg, pos = _parts(d, L, lam, tol)
    return neg + pos


def log_mgf_truncated(d: ReferenceDistribution, L: float, lam: float,
                      tol: float = DEFAULT_TOL) -> float:
    """``log E[exp(lam (X^L - EX))]`` by quadrature, atom at zero included."""
    mu = d.mean
    body = d.expect(lambda x: np.ones_like(x), d.support_floor, L, tilt=lam, tol=tol)
    atom = float(d.survival(L)) * math.exp(-lam * mu)
    return math.log(body + atom)


def c_beta_exact(d: ReferenceDistribution, p: TruncationParams, tol: float = DEFAULT_TOL) -> CBetaEstimate:
    """c_{L,beta} by quadrature against the density of ``d``."""
    neg, pos = _parts(d, p.L, p.lam, tol)
    return CBetaEstimate.from_parts(neg, pos, CMethod.EXACT_QUADRATURE)


def c_beta_survival_form(d: ReferenceDistribution, p: TruncationParams,
                         tol: float = DEFAULT_TOL) -> float:
    """``int_0^{L-EX} exp(lam t - I_br(t + EX)) (2t + lam t^2) dt``.

    Integration by parts of the positive part against the survival function.
    The identity ignores truncation: it exceeds the density-route positive
    part of ``c_beta_exact`` by exactly ``P(X > L) (L-EX)^2 exp(lam (L-EX))``,
    the mass above L counted as if it sat at L. Kept as an independent
    cross-check of the density route.
    """
    mu, lam = d.mean, p.lam
    if p.L <= mu:
        return 0.0

    def integrand(t):
        return np.exp(lam * t + d.log_survival(t + mu)) * (2 * t + lam * t**2)

    return integrate(integrand, 0.0, p.L - mu, tol).value


def ratio_certified(f: TailFunction) -> bool:
    """Whether I(t)/t is known to be nonincreasing on the whole positive axis."""
    if isinstance(f, (SubExponential, SubWeibull)):
        return True
    if isinstance(f, Tabulated):
        return f.domain_floor == 0 and f.ratio_nonincreasing()
    # gamma log t / t increases on [1, e]
    return False


def c_beta_ratio_bound(d: ReferenceDistribution, f: TailFunction, p: TruncationParams,
                       *, loose: bool = False, tol: float = DEFAULT_TOL) -> CBetaEstimate:
    """Upper bound on c_{L,beta} using that I(t)/t is nonincreasing.

    The positive part is bounded by

        exp(-beta EX I(L)/L) int_0^{L-EX} exp(-(1-beta) I(t+EX)) (2t + beta (I(L)/L) t^2) dt,

    which the closed forms relax further. ``loose=True`` replaces
    ``(I(L)/L) t^2`` by ``t I(t)``, removing the dependence on L at the cost
    of a (much) weaker bound.

    Raises:
        InvalidFamily: I(t)/t is not certified nonincreasing for ``f``.
    """
    if not ratio_certified(f):
        raise InvalidFamily(f"I(t)/t is not certified nonincreasing for the {f.family} tail")
    if not p.beta < 1:
        raise ValueError("the ratio bound needs beta < 1")
    neg, _ = _parts(d, p.L, p.lam, tol)
    mu, beta, L = d.mean, p.beta, p.L
    slope = float(f.extended(L)) / L
    if L <= mu:
        return CBetaEstimate.from_parts(neg, 0.0, CMethod.RATIO_BOUND)

    if loose:
        def poly(t):
            return 2 * t + beta * t * f.extended(t)
    else:
        def poly(t):
            return 2 * t + beta * slope * t**2

    def integrand(t):
        return np.exp(-(1 - beta) * f.extended(t + mu)) * poly(t)

    pos = math.exp(-beta * mu * slope) * integrate(integrand, 0.0, L - mu, tol).value
    return CBetaEstimate.from_parts(neg, pos, CMethod.RATIO_BOUND)


def closed_form_subexp(d: ReferenceDistribution | None, k: float, beta: float, *,
                       mean: float | None = None,
                       sigma_minus_sq: float | None = None) -> CBetaEstimate:
    """L-free bound for ``I(t) = k t``: ``sigma_-^2 + 2 / ((1-beta)^3 k^2 e^{k EX})``.

    ``mean`` and ``sigma_minus_sq`` default to those of ``d``; pass both and
    ``d=None`` for a synthetic variable.
    """
    if not 0 < beta < 1:
        raise ValueError(f"closed forms need 0 < beta < 1, got {beta}")
    mean = d.mean if mean is None else mean
    sigma_minus_sq = d.neg_second_moment if sigma_minus_sq is None else sigma_minus_sq
    pos = 2.0 / ((1 - beta) ** 3 * k**2 * math.exp(k * mean))
    return CBetaEstimate.from_parts(sigma_minus_sq, pos, CMethod.CLOSED_FORM_SUBEXP)


def closed_form_subweibull(sigma_minus_sq: float, alpha: float, c_alpha: float,
                           beta: float, L: float) -> CBetaEstimate:
    """Bound for a centred variable with tail ``c_alpha t**(1/alpha)``."""
    if not alpha >= 1:
        raise ValueError("alpha must be >= 1")
    if not 0 < beta < 1:
        raise ValueError(f"closed forms need 0 < beta < 1, got {beta}")
    if not L > 0:
        raise ValueError("L must be positive")
    base = (1 - beta) * c_alpha
    first = math.gamma(2 * alpha + 1) / base ** (2 * alpha)
    second = L ** (1 / alpha - 1) * beta * c_alpha * math.gamma(3 * alpha + 1) / (3 * base ** (3 * alpha))
    return CBetaEstimate.from_parts(sigma_minus_sq, first + second, CMethod.CLOSED_FORM_SUBWEIBULL)


def closed_form_polynomial(sigma_minus_sq: float, gamma: float, beta: float, L: float) -> CBetaEstimate:
    """Bound for a centred variable with tail ``gamma log t``.

    The ``L**(gamma beta / L)`` term bounds the contribution of ``0 < X <= 1``;
    it equals ``exp(lam)`` exactly. At ``beta = 1 - 2/gamma`` (within
    ``BRANCH_TOL``) the generic expression has a removable singularity and the
    logarithmic branch is used instead.
    """
    if not gamma > 2:
        raise ValueError("gamma must exceed 2")
    if not 0 < beta < 1:
        raise ValueError(f"closed forms need 0 < beta < 1, got {beta}")
    if not L > 1:
        raise ValueError("L must exceed 1")
    log_L = math.log(L)
    if abs(beta - (1 - 2 / gamma)) <= BRANCH_TOL:
        pos = L ** ((gamma - 2) / L) + 2 * log_L + 0.5 * (gamma - 2) * log_L**2
    else:
        expo = 2 - gamma * (1 - beta)
        gb = gamma * beta
        pos = (L ** (gb / L)
               + (2 - gb / expo) / expo * (L**expo - 1)
               + gb * L**expo * log_L / expo)
    return CBetaEstimate.from_parts(sigma_minus_sq, pos, CMethod.CLOSED_FORM_POLYNOMIAL)
