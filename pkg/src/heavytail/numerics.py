"""Adaptive quadrature and bracketed root finding.

Both routines are written for the integrands and residuals used elsewhere in
the package: smooth or mildly singular integrands on finite and semi-infinite
ranges, and continuous scalar residuals with a known sign change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, NonConvergence

DEFAULT_TOL = 1e-9
DEFAULT_MAX_EVALS = 10**6

# Gauss-Kronrod 7/15 nodes on [-1, 1] (QUADPACK qk15); only the non-negative half.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # 15 nodes, ascending
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


@dataclass(frozen=True)
class RootResult:
    root: float
    bracket: tuple[float, float]
    iterations: int
    converged: bool


def _call(f, x: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on an array, falling back to a Python loop for scalar-only callables."""
    try:
        y = np.asarray(f(x), dtype=float)
    except (TypeError, ValueError):
        y = None
    if y is None or y.shape != x.shape:
        y = np.fromiter((f(float(xi)) for xi in x.ravel()), dtype=float, count=x.size)
        y = y.reshape(x.shape)
    return y


def _map_to_unit(f, lo: float, hi: float):
    """Return (g, a, b, to_u) so that the integral of f over [lo, hi] is that of g over [a, b].

    Semi-infinite ranges use t = lo + u/(1-u) (and its mirror), i.e. u = s/(1+s).
    """
    if math.isinf(hi):
        def g(u):
            s = u / (1.0 - u)
            return _call(f, lo + s) / (1.0 - u) ** 2

        return g, 0.0, 1.0, lambda p: (p - lo) / (1.0 + p - lo)
    if math.isinf(lo):
        def g(u):
            s = u / (1.0 - u)
            return _call(f, hi - s) / (1.0 - u) ** 2

        return g, 0.0, 1.0, lambda p: (hi - p) / (1.0 + hi - p)
    return (lambda x: _call(f, x)), lo, hi, (lambda p: p)


def _decade_points(lo: float, hi: float) -> list[float]:
    """Breakpoints at distances 1, 10, 100, ... from both ends of a wide finite range.

    A single 15-point rule on, say, [0, 10**5] can miss an integrand whose mass
    sits within a few units of one end; it then reports a confident zero.
    """
    width = hi - lo
    if not width > 10:
        return []
    offsets = [10.0**k for k in range(int(math.log10(width)) + 1) if 10.0**k < width]
    return [lo + o for o in offsets] + [hi - o for o in offsets]


def _gk15(g, a: np.ndarray, b: np.ndarray):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = center[:, None] + half[:, None] * _NODES[None, :]
    y = g(x)
    kron = half * (y @ _KWEIGHTS)
    gauss = half * (y @ _GWEIGHTS)
    return kron, np.abs(kron - gauss)


def integrate(
    f: Callable,
    lo: float,
    hi: float,
    tol: float = DEFAULT_TOL,
    *,
    rtol: float = 1e-12,
    points: Sequence[float] = (),
    max_evals: int = DEFAULT_MAX_EVALS,
) -> QuadratureResult:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over ``[lo, hi]``.

    ``f`` should accept a NumPy array and return an array of the same shape;
    scalar-only callables also work, just slower. Either endpoint may be
    infinite. ``points`` are interior breakpoints (kinks, peaks) given in the
    original variable.

    Finite ranges wider than 10 start from breakpoints at decade distances
    from either end, so mass concentrated near an endpoint is not missed.

    The integration stops once the summed error estimate is below
    ``max(tol, rtol * |value|)``. Intervals that have shrunk to floating-point
    resolution are frozen with their error estimate kept in the total.

    Raises:
        NonConvergence: the evaluation budget ran out first. ``partial`` holds
            the current estimate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if lo > hi:
        res = integrate(f, hi, lo, tol, rtol=rtol, points=points, max_evals=max_evals)
        return QuadratureResult(-res.value, res.abs_error_estimate, res.evaluations)
    if math.isinf(lo) and math.isinf(hi):
        left = integrate(f, lo, 0.0, tol / 2, rtol=rtol,
                         points=[p for p in points if p < 0], max_evals=max_evals // 2)
        right = integrate(f, 0.0, hi, tol / 2, rtol=rtol,
                          points=[p for p in points if p > 0], max_evals=max_evals // 2)
        return QuadratureResult(left.value + right.value,
                                left.abs_error_estimate + right.abs_error_estimate,
                                left.evaluations + right.evaluations)

    g, a, b, to_u = _map_to_unit(f, lo, hi)
    pts = list(points)
    if math.isfinite(lo) and math.isfinite(hi):
        pts += _decade_points(lo, hi)
    inner = sorted({to_u(p) for p in pts if lo < p < hi})
    edges = np.array([a, *inner, b], dtype=float)

    left = edges[:-1]
    right = edges[1:]
    values, errors = _gk15(g, left, right)
    evaluations = 15 * left.size
    frozen_val: list[float] = []
    frozen_err: list[float] = []

    while True:
        if not np.all(np.isfinite(values)):
            raise NonConvergence("integrand is not finite on the integration range",
                                 partial=QuadratureResult(math.nan, math.inf, evaluations))
        total = math.fsum(values) + math.fsum(frozen_val)
        err_total = float(errors.sum()) + math.fsum(frozen_err)
        target = max(tol, rtol * abs(total))
        if err_total <= target or values.size == 0:
            break
        if evaluations >= max_evals:
            raise NonConvergence(
                f"quadrature error estimate {err_total:.3g} exceeds {target:.3g} "
                f"after {evaluations} evaluations",
                partial=QuadratureResult(total, err_total, evaluations),
            )
        n = values.size + len(frozen_val)
        split = errors > target / n
        if not split.any():
            split = errors == errors.max()
        mid = 0.5 * (left + right)
        narrow = split & ((mid <= left) | (mid >= right))
        if narrow.any():
            frozen_val.extend(values[narrow].tolist())
            frozen_err.extend(errors[narrow].tolist())
            keep = ~narrow
            left, right, mid = left[keep], right[keep], mid[keep]
            values, errors, split = values[keep], errors[keep], split[keep]
            if not split.any():
                continue
        new_left = np.concatenate([left[split], mid[split]])
        new_right = np.concatenate([mid[split], right[split]])
        v_new, e_new = _gk15(g, new_left, new_right)
        evaluations += 15 * new_left.size
        keep = ~split
        left = np.concatenate([left[keep], new_left])
        right = np.concatenate([right[keep], new_right])
        values = np.concatenate([values[keep], v_new])
        errors = np.concatenate([errors[keep], e_new])

    value = math.fsum(values) + math.fsum(frozen_val)
    error = float(errors.sum()) + math.fsum(frozen_err)
    return QuadratureResult(value, error, evaluations)


def find_root(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    *,
    max_iter: int = 200,
    raise_on_fail: bool = True,
) -> RootResult:
    """Brent's method: bisection safeguarding secant / inverse quadratic steps.

    Returns a root whose final bracket ``(lo, hi)`` has width at most ``tol``
    (or floating-point resolution near the root, if that is coarser). The root
    always lies inside the initial bracket.

    Raises:
        BracketError: ``g(lo)`` and ``g(hi)`` have the same strict sign.
        NonConvergence: ``max_iter`` iterations were not enough (only when
            ``raise_on_fail``; otherwise ``converged`` is False).
    """
    if lo > hi:
        lo, hi = hi, lo
    fa, fb = float(g(lo)), float(g(hi))
    if fa == 0.0:
        return RootResult(lo, (lo, lo), 0, True)
    if fb == 0.0:
        return RootResult(hi, (hi, hi), 0, True)
    if math.copysign(1.0, fa) == math.copysign(1.0, fb):
        raise BracketError(f"no sign change on [{lo}, {hi}]: g={fa:.3g}, {fb:.3g}")

    a, b = lo, hi
    c, fc = a, fa
    d = e = b - a
    eps = np.finfo(float).eps
    for it in range(1, max_iter + 1):
        if math.copysign(1.0, fb) == math.copysign(1.0, fc):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * eps * abs(b) + 0.5 * tol
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0.0:
            bracket = (b, b) if fb == 0.0 else (min(b, c), max(b, c))
            return RootResult(b, bracket, it, True)
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = xm
        else:
            d = e = xm
        a, fa = b, fb
        b = b + d if abs(d) > tol1 else b + math.copysign(tol1, xm)
        b = min(max(b, lo), hi)
        fb = float(g(b))

    result = RootResult(b, (min(b, c), max(b, c)), max_iter, False)
    if raise_on_fail:
        raise NonConvergence(f"root not bracketed to {tol} after {max_iter} iterations",
                             partial=result)
    return result
