"""Monte Carlo estimates of ``P(S_m - E S_m > threshold)`` for the reference distributions.

Every batch of sums draws from its own Philox stream keyed by
``(seed, batch_index)``, so a batch's output does not depend on which other
batches ran, in what order, or on which thread. Counts are summed at the end.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .concentration import CProvider, bound, exact_provider, solve_t_max
from .errors import DominationFailure
from .tail_model import ReferenceDistribution, TailFunction

# variates per block when summing columns; caps memory at ~16 MB
_BLOCK = 1 << 21


@dataclass(frozen=True)
class MonteCarloConfig:
    n_samples: int
    seed: int
    batch_size: int = 100_000
    confidence: float = 0.99

    def __post_init__(self):
        if not 1 <= self.batch_size:
            raise ValueError("batch_size must be at least 1")
        if self.n_samples < self.batch_size:
            raise ValueError("n_samples must be at least batch_size")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    @property
    def n_batches(self) -> int:
        return -(-self.n_samples // self.batch_size)


@dataclass(frozen=True)
class EmpiricalTail:
    threshold: float
    p_hat: float
    ci: tuple[float, float]
    n_exceed: int
    n_samples: int
    seed: int


def wilson_interval(k: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion ``k / n``."""
    if n <= 0 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n > 0")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = k / n
    z2n = z * z / n
    centre = (p + z2n / 2) / (1 + z2n)
    half = z * math.sqrt(p * (1 - p) / n + z2n / (4 * n)) / (1 + z2n)
    lo = 0.0 if k == 0 else max(0.0, min(p, centre - half))
    hi = 1.0 if k == n else min(1.0, max(p, centre + half))
    return lo, hi


def stream(seed: int, batch_index: int, key: tuple[int, ...] = ()) -> np.random.Generator:
    """The generator for one batch; a pure function of ``(seed, key, batch_index)``.

    ``key`` separates independent experiments sharing a seed (for instance one
    key per m).
    """
    ss = np.random.SeedSequence(seed, spawn_key=(*key, batch_index))
    return np.random.Generator(np.random.Philox(ss))


def _draw_centered(d: ReferenceDistribution, rng: np.random.Generator, shape) -> np.ndarray:
    # 1 - u lies in (0, 1]; feeding it to the inverse survival function keeps
    # resolution in the far tail, where v is tiny
    v = 1.0 - rng.random(shape)
    return d.isf(v) - d.mean


def sample_sums(d: ReferenceDistribution, m: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent draws of ``sum_i (X_i - EX)`` over ``m`` terms."""
    if m < 1:
        raise ValueError("m must be at least 1")
    out = np.zeros(size)
    cols = max(1, min(m, _BLOCK // max(size, 1)))
    done = 0
    while done < m:
        k = min(cols, m - done)
        out += _draw_centered(d, rng, (size, k)).sum(axis=1)
        done += k
    return out


def sample_sum(d: ReferenceDistribution, m: int, rng: np.random.Generator) -> float:
    return float(sample_sums(d, m, 1, rng)[0])


def _batch_sizes(cfg: MonteCarloConfig) -> list[int]:
    full, rest = divmod(cfg.n_samples, cfg.batch_size)
    return [cfg.batch_size] * full + ([rest] if rest else [])


def estimate_tails(d: ReferenceDistribution, m: int, thresholds: Sequence[float],
                   cfg: MonteCarloConfig, *, key: tuple[int, ...] = (),
                   workers: int = 1) -> list[EmpiricalTail]:
    """Estimate ``P(S_m - E S_m > x)`` for every ``x`` in ``thresholds`` from one set of sums."""
    thr = np.asarray(thresholds, dtype=float)
    if np.isnan(thr).any():
        raise ValueError("thresholds must not be NaN")

    def run(item):
        index, size = item
        sums = sample_sums(d, m, size, stream(cfg.seed, index, key))
        return (sums[:, None] > thr[None, :]).sum(axis=0)

    items = list(enumerate(_batch_sizes(cfg)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            counts = sum(pool.map(run, items))
    else:
        counts = sum(map(run, items))
    out = []
    for x, k in zip(thr, np.asarray(counts, dtype=np.int64)):
        k = int(k)
        out.append(EmpiricalTail(float(x), k / cfg.n_samples,
                                 wilson_interval(k, cfg.n_samples, cfg.confidence),
                                 k, cfg.n_samples, cfg.seed))
    return out


def estimate_tail(d: ReferenceDistribution, m: int, threshold: float,
                  cfg: MonteCarloConfig, *, key: tuple[int, ...] = (),
                  workers: int = 1) -> EmpiricalTail:
    return estimate_tails(d, m, [threshold], cfg, key=key, workers=workers)[0]


# ---------------------------------------------------------------------------
# bound domination

CSV_COLUMNS = ("distribution", "m", "t", "p_hat", "ci_lo", "ci_hi", "bound_total", "regime", "margin")


def fmt(x) -> str:
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


@dataclass(frozen=True)
class DominationRow:
    distribution: str
    m: int
    t: float
    p_hat: float
    ci_lo: float
    ci_hi: float
    bound_total: float
    regime: str
    margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= 0


@dataclass
class DominationReport:
    rows: list[DominationRow] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[DominationRow]:
        return [r for r in self.rows if not r.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def extend(self, other: "DominationReport"):
        self.rows.extend(other.rows)
        for key, value in other.manifest.items():
            if key == "cells":
                self.manifest.setdefault("cells", []).extend(value)
            else:
                self.manifest.setdefault(key, value)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=2, sort_keys=True)


def versions() -> dict:
    from . import __version__
    return {"heavytail": __version__, "numpy": np.__version__, "python": platform.python_version()}


def default_t_grid(d: ReferenceDistribution, t_max: float, m: int, n: int = 8) -> np.ndarray:
    """``n`` log-spaced t values straddling ``t_max``.

    The low end sits at half a standard deviation of the sample mean (and at
    most ``t_max / 4``), the high end at four times ``t_max``.
    """
    t_lo = 0.5 * math.sqrt(d.variance / m)
    if t_max > 0:
        t_lo = min(t_lo, t_max / 4)
    t_hi = 4 * max(t_max, t_lo)
    return np.geomspace(t_lo, t_hi, n)


def dominate_check(d: ReferenceDistribution, f: TailFunction | None, m_grid: Sequence[int],
                   t_grid: Sequence[float] | Callable[[int, float], Sequence[float]] | None,
                   beta: float, cfg: MonteCarloConfig, *, c_provider: CProvider | None = None,
                   name: str | None = None, strict: bool = True, workers: int = 1) -> DominationReport:
    """Compare Monte Carlo tail estimates with the concentration bound on a grid.

    ``t_grid`` is a fixed sequence, a callable ``(m, t_max) -> sequence``, or
    None for :func:`default_t_grid`. A cell passes when the lower Wilson limit
    is at most ``total_clamped``; every cell is evaluated before failures are
    reported.

    Raises:
        DominationFailure: some cell violates the bound (only when ``strict``).
    """
    f = d.tail() if f is None else f
    c_provider = exact_provider(d, f) if c_provider is None else c_provider
    name = name or d.kind
    report = DominationReport(manifest={
        "seed": cfg.seed,
        "monte_carlo": asdict(cfg),
        "beta": beta,
        "versions": versions(),
        "cells": [],
    })
    for m in m_grid:
        m = int(m)
        t_max = solve_t_max(f, c_provider, m, beta)
        if t_grid is None:
            ts = default_t_grid(d, t_max, m)
        elif callable(t_grid):
            ts = t_grid(m, t_max)
        else:
            ts = t_grid
        ts = [float(t) for t in ts]
        # streams keyed by m, so adding or reordering grid points leaves other cells intact
        tails = estimate_tails(d, m, [m * t for t in ts], cfg, key=(m,), workers=workers)
        report.manifest["cells"].append({"distribution": name, "params": d.params(), "m": m,
                                         "t_max": t_max, "t_grid": ts, "stream_key": [m]})
        for t, tail in zip(ts, tails):
            b = bound(f, c_provider, m, t, beta, t_max=t_max)
            report.rows.append(DominationRow(name, m, t, tail.p_hat, tail.ci[0], tail.ci[1],
                                             b.total_clamped, b.regime.value,
                                             b.total_clamped - tail.ci[0]))
    if strict and not report.passed:
        bad = ", ".join(f"(m={r.m}, t={r.t:.4g})" for r in report.failures)
        raise DominationFailure(f"{name}: bound violated at {bad}", report=report)
    return report
