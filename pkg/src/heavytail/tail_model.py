"""Tail-capturing functions and the reference distributions they are matched to.

A tail-capturing function ``I`` bounds the right tail, ``P(X > t) <= exp(-I(t))``.
Four families are supported:

========================  ===========================  ==============
family                    I(t)                          domain floor
========================  ===========================  ==============
``SubExponential(k)``     ``k t``                       0
``SubWeibull(a, c)``      ``c t**(1/a)``                0
``Polynomial(g)``         ``g log t``                   1
``Tabulated(grid)``       piecewise-linear in ``I``     first grid t
========================  ===========================  ==============

Each reference distribution (Exponential, Weibull, Pareto) has survival function
exactly ``exp(-I(t))`` for its matched family above the support floor, so the
same ``I`` is both a bound and an exact tail.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError
from .numerics import DEFAULT_TOL, integrate

# Relative drop of I(t)/t over the last tabulated step that counts as sub-linear.
TABULATED_RATIO_DROP = 0.01
GROWTH_HEURISTIC = (
    "tabulated tails: SubLinear iff I(t)/t drops by more than 1% between the "
    "last two grid points; heuristic, not a certificate"
)


class GrowthClass(str, Enum):
    LINEAR_ORDER = "LinearOrder"
    SUB_LINEAR = "SubLinear"


class TailFunction:
    """Base class for tail-capturing functions.

    Subclasses implement ``_values`` on arrays already known to be in-domain.
    """

    family: str = ""
    domain_floor: float = 0.0

    def _values(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float) -> float:
        return eval_I(self, t)

    def extended(self, t):
        """Vectorised I with the value 0 below the domain floor.

        ``exp(-0) = 1`` bounds any probability, so the extension still captures
        the tail; routines that need I on all of ``[0, inf)`` use this.
        """
        arr = np.asarray(t, dtype=float)
        out = np.zeros_like(arr)
        ok = arr >= self.domain_floor
        if np.any(ok):
            out[ok] = self._values(arr[ok])
        return out if out.ndim else float(out)

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class SubExponential(TailFunction):
    k: float
    domain_floor: float = 0.0
    family = "subexp"

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"rate k must be positive, got {self.k}")

    def _values(self, t):
        return self.k * t

    def params(self):
        return {"k": self.k}


@dataclass(frozen=True)
class SubWeibull(TailFunction):
    alpha: float
    c_alpha: float = 1.0
    domain_floor: float = 0.0
    family = "subweibull"

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError(f"shape alpha must be >= 1, got {self.alpha}")
        if not self.c_alpha > 0:
            raise ValueError(f"coefficient c_alpha must be positive, got {self.c_alpha}")

    def _values(self, t):
        return self.c_alpha * np.power(t, 1.0 / self.alpha)

    def params(self):
        return {"alpha": self.alpha, "c_alpha": self.c_alpha}


@dataclass(frozen=True)
class Polynomial(TailFunction):
    gamma: float
    domain_floor: float = 1.0
    family = "polynomial"

    def __post_init__(self):
        if not self.gamma > 2:
            raise ValueError(f"exponent gamma must exceed 2 (finite variance), got {self.gamma}")
        if self.domain_floor < 1:
            raise ValueError("polynomial tails need domain_floor >= 1 so that I >= 0")

    def _values(self, t):
        return self.gamma * np.log(t)

    def params(self):
        return {"gamma": self.gamma}


@dataclass(frozen=True)
class Tabulated(TailFunction):
    """Piecewise-linear interpolation of user-supplied ``(t, I(t))`` pairs."""

    grid: tuple[tuple[float, float], ...]
    family = "tabulated"
    ts: np.ndarray = field(init=False, repr=False, compare=False)
    vals: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.grid, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise ValueError("tabulated grid needs at least two (t, I) pairs")
        ts, vals = arr[:, 0], arr[:, 1]
        if np.any(np.diff(ts) <= 0):
            raise ValueError("tabulated t values must be strictly increasing")
        if np.any(np.diff(vals) < 0):
            raise ValueError("tabulated I values must be nondecreasing")
        if np.any(vals < 0):
            raise ValueError("tabulated I values must be nonnegative")
        object.__setattr__(self, "grid", tuple(map(tuple, arr.tolist())))
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "vals", vals)

    @property
    def domain_floor(self) -> float:  # type: ignore[override]
        return float(self.ts[0])

    @property
    def domain_ceiling(self) -> float:
        return float(self.ts[-1])

    def _values(self, t):
        return np.interp(t, self.ts, self.vals)

    def params(self):
        return {"grid": [list(p) for p in self.grid]}

    def ratio_nonincreasing(self) -> bool:
        """Whether I(t)/t is nonincreasing over the positive grid points."""
        pos = self.ts > 0
        ratio = self.vals[pos] / self.ts[pos]
        return bool(np.all(np.diff(ratio) <= 1e-12 * np.abs(ratio[:-1])))


def eval_I(f: TailFunction, t: float) -> float:
    """Evaluate the tail-capturing function at ``t``.

    Raises ``DomainError`` below the domain floor or outside a tabulated grid.
    """
    t = float(t)
    if not t >= f.domain_floor:
        raise DomainError(f"t={t} is below the domain floor {f.domain_floor} of {f.family}")
    if isinstance(f, Tabulated) and t > f.domain_ceiling:
        raise DomainError(f"t={t} is beyond the tabulated range [{f.domain_floor}, {f.domain_ceiling}]")
    return float(f._values(np.float64(t)))


def classify_growth(f: TailFunction) -> GrowthClass:
    """Linear-order versus sub-linear growth of I, decided by family.

    Tabulated tails use the last-step heuristic described by ``GROWTH_HEURISTIC``.
    """
    if isinstance(f, SubExponential):
        return GrowthClass.LINEAR_ORDER
    if isinstance(f, SubWeibull):
        return GrowthClass.LINEAR_ORDER if f.alpha == 1 else GrowthClass.SUB_LINEAR
    if isinstance(f, Polynomial):
        return GrowthClass.SUB_LINEAR
    if isinstance(f, Tabulated):
        (t0, t1), (i0, i1) = f.ts[-2:], f.vals[-2:]
        if t0 <= 0:
            return GrowthClass.LINEAR_ORDER
        r0, r1 = i0 / t0, i1 / t1
        if r0 > 0 and (r0 - r1) / r0 > TABULATED_RATIO_DROP:
            return GrowthClass.SUB_LINEAR
        return GrowthClass.LINEAR_ORDER
    raise TypeError(f"unknown tail function {f!r}")


def load_tabulated(path) -> Tabulated:
    """Read a two-column ``t,I`` CSV (header required) into a ``Tabulated`` tail."""
    path = Path(path)
    pairs = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "I"]:
            raise ValueError(f"{path}:1: expected header 't,I', got {header!r}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                pairs.append((float(row[0]), float(row[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
    try:
        return Tabulated(tuple(pairs))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# reference distributions


class ReferenceDistribution:
    """A distribution whose survival function is ``exp(-I(t))`` for a matched tail.

    Distributions are kept uncentred; downstream code subtracts ``mean``.
    """

    kind: str = ""
    support_floor: float = 0.0

    # closed-form pieces supplied by subclasses
    mean: float
    variance: float

    def tail(self) -> TailFunction:
        raise NotImplementedError

    def log_survival(self, t):
        raise NotImplementedError

    def survival(self, t):
        return np.exp(self.log_survival(t))

    def density(self, x):
        raise NotImplementedError

    def isf(self, v):
        """Inverse survival function: the x with ``P(X > x) = v``."""
        raise NotImplementedError

    def quantile(self, u):
        return self.isf(1.0 - np.asarray(u, dtype=float))

    def params(self) -> dict:
        raise NotImplementedError

    def expect(self, g: Callable, lo: float, hi: float, tilt: float = 0.0,
               tol: float = DEFAULT_TOL) -> float:
        """``E[g(X) exp(tilt (X - mean)) ; lo < X <= hi]`` by quadrature against the density.

        The tilt is folded into the log-density so that large ``tilt * x`` does
        not overflow before being damped by the tail.
        """
        lo = max(lo, self.support_floor)
        if not hi > lo:
            return 0.0
        res = self._expect(g, lo, hi, tilt, tol)
        return res

    def _expect(self, g, lo, hi, tilt, tol) -> float:
        raise NotImplementedError

    @cached_property
    def neg_second_moment(self) -> float:
        """sigma_-^2 = E[(X - EX)^2 ; X <= EX], computed once by quadrature."""
        mu = self.mean
        return self.expect(lambda x: (x - mu) ** 2, self.support_floor, mu)


def _exp_weight(log_w):
    with np.errstate(over="ignore"):
        return np.exp(log_w)


@dataclass(frozen=True)
class Exponential(ReferenceDistribution):
    k: float
    kind = "exponential"
    support_floor = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"rate k must be positive, got {self.k}")

    @property
    def mean(self):
        return 1.0 / self.k

    @property
    def variance(self):
        return 1.0 / self.k**2

    def tail(self):
        return SubExponential(self.k)

    def log_survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, -self.k * t)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, self.k * np.exp(-self.k * np.maximum(x, 0)))

    def isf(self, v):
        return -np.log(v) / self.k

    def params(self):
        return {"k": self.k}

    def _expect(self, g, lo, hi, tilt, tol):
        mu, k = self.mean, self.k

        def integrand(x):
            return g(x) * _exp_weight(math.log(k) - k * x + tilt * (x - mu))

        return integrate(integrand, lo, hi, tol).value


@dataclass(frozen=True)
class Weibull(ReferenceDistribution):
    """``P(X > t) = exp(-c_alpha t**(1/alpha))``; equivalently ``X = (E / c_alpha)**alpha``, E ~ Exp(1)."""

    alpha: float
    c_alpha: float = 1.0
    kind = "weibull"
    support_floor = 0.0

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError(f"shape alpha must be >= 1, got {self.alpha}")
        if not self.c_alpha > 0:
            raise ValueError(f"coefficient c_alpha must be positive, got {self.c_alpha}")

    @property
    def scale(self):
        return self.c_alpha ** (-self.alpha)

    @property
    def mean(self):
        return self.scale * math.gamma(1 + self.alpha)

    @property
    def variance(self):
        a = self.alpha
        return self.scale**2 * (math.gamma(1 + 2 * a) - math.gamma(1 + a) ** 2)

    def tail(self):
        return SubWeibull(self.alpha, self.c_alpha)

    def log_survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, -self.c_alpha * np.power(np.maximum(t, 0), 1 / self.alpha))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        a, c = self.alpha, self.c_alpha
        xs = np.maximum(x, np.finfo(float).tiny)
        dens = (c / a) * xs ** (1 / a - 1) * np.exp(-c * xs ** (1 / a))
        return np.where(x <= 0, 0.0, dens)

    def isf(self, v):
        return (-np.log(v) / self.c_alpha) ** self.alpha

    def params(self):
        return {"alpha": self.alpha, "c_alpha": self.c_alpha}

    def _expect(self, g, lo, hi, tilt, tol):
        # integrate in s = x**(1/alpha), where the density c e^{-c s} is smooth
        a, c, mu = self.alpha, self.c_alpha, self.mean

        def integrand(s):
            x = s**a
            return g(x) * _exp_weight(math.log(c) - c * s + tilt * (x - mu))

        s_lo = lo ** (1 / a)
        s_hi = math.inf if math.isinf(hi) else hi ** (1 / a)
        return integrate(integrand, s_lo, s_hi, tol).value


@dataclass(frozen=True)
class Pareto(ReferenceDistribution):
    """``P(X > t) = t**(-gamma)`` for ``t >= 1``."""

    gamma: float
    kind = "pareto"
    support_floor = 1.0

    def __post_init__(self):
        if not self.gamma > 2:
            raise ValueError(f"Pareto exponent must exceed 2 for finite variance, got {self.gamma}")

    @property
    def mean(self):
        return self.gamma / (self.gamma - 1)

    @property
    def variance(self):
        g = self.gamma
        return g / ((g - 1) ** 2 * (g - 2))

    def tail(self):
        return Polynomial(self.gamma)

    def log_survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 1, 0.0, -self.gamma * np.log(np.maximum(t, 1.0)))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        g = self.gamma
        return np.where(x < 1, 0.0, g * np.maximum(x, 1.0) ** (-g - 1))

    def isf(self, v):
        return np.asarray(v, dtype=float) ** (-1.0 / self.gamma)

    def params(self):
        return {"gamma": self.gamma}

    def _expect(self, g, lo, hi, tilt, tol):
        # integrate in y = log x; the density becomes gamma e^{-gamma y}
        gam, mu = self.gamma, self.mean

        def integrand(y):
            with np.errstate(over="ignore", invalid="ignore"):
                x = np.exp(y)
                w = _exp_weight(math.log(gam) - gam * y + tilt * (x - mu))
                val = g(x) * w
            # far out x overflows while the weight has already underflowed to 0
            return np.where(w > 0, val, 0.0)

        y_hi = math.inf if math.isinf(hi) else math.log(hi)
        return integrate(integrand, math.log(lo), y_hi, tol).value


def basic_rate(d: ReferenceDistribution, t: float) -> float:
    """``-log P(X > t)``, the tightest tail-capturing function of ``d``."""
    t = float(t)
    if t < d.support_floor:
        raise DomainError(f"t={t} is below the support floor {d.support_floor} of {d.kind}")
    return float(-d.log_survival(t))


def make_distribution(kind: str, **params) -> ReferenceDistribution:
    kinds = {"exponential": Exponential, "weibull": Weibull, "pareto": Pareto}
    try:
        cls = kinds[kind]
    except KeyError:
        raise ValueError(f"unknown distribution {kind!r}; choose from {sorted(kinds)}") from None
    return cls(**params)
