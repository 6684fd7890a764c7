"""Command-line front end.

Exit codes: 0 success, 1 numerical or domination failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import asdict
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .concentration import (
    bound,
    closed_form_provider,
    constant_provider,
    default_beta,
    exact_provider,
    ratio_provider,
    solve_t_max,
)
from .errors import (
    ConditionError,
    ConfigError,
    DominationFailure,
    FamilyError,
    HeavyTailError,
    InvalidFamily,
)
from .large_deviation import (
    DeviationSequence,
    check_admissible,
    classify_boundary,
    ld_poly_limit,
    ld_ratio,
    poly_condition,
)
from .montecarlo import DominationReport, MonteCarloConfig, dominate_check, versions
from .tail_model import (
    GROWTH_HEURISTIC,
    Exponential,
    Pareto,
    Polynomial,
    SubExponential,
    SubWeibull,
    Tabulated,
    Weibull,
    classify_growth,
    load_tabulated,
    make_distribution,
)
from .truncation import (
    TruncationParams,
    c_beta_exact,
    c_beta_ratio_bound,
    closed_form_polynomial,
    closed_form_subexp,
    closed_form_subweibull,
    ratio_certified,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_ENV = "HEAVYTAIL_SEED"


class UsageError(Exception):
    pass


def _dump(obj):
    print(json.dumps(obj, indent=2, allow_nan=True))


def _beta(text):
    b = float(text)
    if not 0 < b <= 1:
        raise argparse.ArgumentTypeError(f"beta must lie in (0, 1], got {text}")
    return b


def _count(text):
    m = int(text)
    if m < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return m


def _int_list(text):
    try:
        return [_count(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# tail and distribution selection

def _tail_from_args(args):
    fam = args.tail
    try:
        if fam == "subexp":
            return SubExponential(_need(args, "k"))
        if fam == "subweibull":
            return SubWeibull(_need(args, "alpha"), args.c_alpha)
        if fam == "polynomial":
            return Polynomial(_need(args, "gamma"))
        return load_tabulated(_need(args, "table"))
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"--tail {args.tail} requires --{name.replace('_', '-')}")
    return value


def _tail_info(f):
    info = {"family": f.family, **f.params(), "growth_class": classify_growth(f).value}
    if isinstance(f, Tabulated):
        info["growth_heuristic"] = GROWTH_HEURISTIC
    return info


def _matched(f):
    """The reference distribution whose basic rate is ``f``, if any."""
    if isinstance(f, SubExponential):
        return Exponential(f.k)
    if isinstance(f, SubWeibull):
        return Weibull(f.alpha, f.c_alpha)
    if isinstance(f, Polynomial):
        return Pareto(f.gamma)
    return None


def _provider(f, args):
    method = args.c_method
    if method == "constant":
        return constant_provider(_need(args, "c"))
    d = _matched(f)
    if method == "closed":
        smsq = args.sigma_minus_sq
        if smsq is None:
            if d is None:
                raise UsageError("--c-method closed needs --sigma-minus-sq for tabulated tails")
            smsq = d.neg_second_moment
        mean = args.mean if args.mean is not None else (d.mean if d is not None else 0.0)
        try:
            return closed_form_provider(f, sigma_minus_sq=smsq, mean=mean)
        except InvalidFamily as exc:
            raise UsageError(str(exc)) from exc
    if d is None:
        raise UsageError(f"--c-method {method} needs a matched distribution; tabulated tails "
                         "support only 'closed' or 'constant'")
    if args.mean is not None and not math.isclose(args.mean, d.mean):
        raise UsageError(f"--mean {args.mean} disagrees with the matched {d.kind} mean {d.mean}; "
                         "it only applies to --c-method closed")
    return exact_provider(d, f) if method == "exact" else ratio_provider(d, f)


def _add_tail_args(p, *, provider=True):
    p.add_argument("--tail", required=True, choices=["subexp", "subweibull", "polynomial", "tabulated"])
    p.add_argument("--k", type=float, help="sub-exponential rate")
    p.add_argument("--alpha", type=float, help="sub-Weibull shape")
    p.add_argument("--c-alpha", type=float, default=1.0, help="sub-Weibull coefficient (default 1)")
    p.add_argument("--gamma", type=float, help="polynomial exponent")
    p.add_argument("--table", help="CSV with header t,I for a tabulated tail")
    p.add_argument("--mean", type=float, help="mean used by the sub-exponential closed form")
    p.add_argument("--sigma-minus-sq", type=float, help="E[(X-EX)^2; X <= EX] for closed forms")
    if provider:
        p.add_argument("--c-method", default="exact", choices=["exact", "ratio", "closed", "constant"],
                       help="how c_{L,beta} is obtained (default exact)")
        p.add_argument("--c", type=float, help="the constant for --c-method constant")


# ---------------------------------------------------------------------------
# subcommands

def cmd_bound(args):
    f = _tail_from_args(args)
    if args.t < 0:
        raise UsageError("--t must be nonnegative")
    beta = args.beta if args.beta is not None else default_beta(f)
    out = bound(f, _provider(f, args), args.m, args.t, beta).to_dict()
    out["tail"] = _tail_info(f)
    _dump(out)
    return EXIT_OK


def cmd_tmax(args):
    f = _tail_from_args(args)
    beta = args.beta if args.beta is not None else default_beta(f)
    t_max = solve_t_max(f, _provider(f, args), args.m, beta)
    _dump({"t_max": t_max, "m": args.m, "beta": beta, "c_method": args.c_method,
           "tail": _tail_info(f)})
    return EXIT_OK


def cmd_cbeta(args):
    f = _tail_from_args(args)
    if not args.L > 0:
        raise UsageError("--L must be positive")
    beta = args.beta
    p = TruncationParams.from_tail(args.L, beta, f)
    d = _matched(f)
    estimates, notes = [], []
    if d is not None:
        estimates.append(c_beta_exact(d, p).to_dict())
        if ratio_certified(f) and beta < 1:
            estimates.append(c_beta_ratio_bound(d, f, p).to_dict())
        elif beta < 1:
            notes.append("RatioBound skipped: I(t)/t is not certified nonincreasing")
    smsq = args.sigma_minus_sq if args.sigma_minus_sq is not None else (d.neg_second_moment if d else None)
    if beta >= 1:
        notes.append("closed forms need beta < 1")
    elif smsq is None:
        notes.append("closed forms skipped: pass --sigma-minus-sq for tabulated tails")
    elif isinstance(f, SubExponential):
        mean = args.mean if args.mean is not None else d.mean
        estimates.append(closed_form_subexp(None, f.k, beta, mean=mean, sigma_minus_sq=smsq).to_dict())
    elif isinstance(f, SubWeibull):
        estimates.append(closed_form_subweibull(smsq, f.alpha, f.c_alpha, beta, args.L).to_dict())
    elif isinstance(f, Polynomial):
        if args.L > 1:
            est = closed_form_polynomial(smsq, f.gamma, beta, args.L).to_dict()
            if abs(beta - (1 - 2 / f.gamma)) <= 1e-12:
                est["branch"] = "beta = 1 - 2/gamma"
            estimates.append(est)
        else:
            notes.append("polynomial closed form needs L > 1")
    _dump({"L": args.L, "beta": beta, "lambda": p.lam,
           "tail": _tail_info(f),
           "estimates": estimates, "notes": notes})
    return EXIT_OK


_DIST_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_distribution(text: str, where: str = "distribution"):
    """Parse ``"weibull(alpha=2, c_alpha=1)"`` into a reference distribution."""
    mt = _DIST_RE.match(text)
    if not mt:
        raise ConfigError(f"{where}: cannot parse {text!r}")
    kind, body = mt.group(1), mt.group(2) or ""
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"{where}: expected key=value, got {item!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"{where}: {key.strip()} = {value.strip()!r} is not a number") from None
    try:
        return make_distribution(kind, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _mc_config(section: dict, where: str, seed_override=None) -> MonteCarloConfig:
    try:
        n = int(section.get("n_samples", 10**6))
        seed = int(section.get("seed", 0)) if seed_override is None else seed_override
        return MonteCarloConfig(n, seed, int(section.get("batch_size", min(n, 100_000))),
                                float(section.get("confidence", 0.99)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _seed_override():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


_DOM_KEYS = {"distribution", "distributions", "m_grid", "t_grid", "beta", "c_method", "monte_carlo"}
_LD_KEYS = {"distribution", "kind", "a", "p", "q", "m_grid", "beta", "allow_inadmissible", "monte_carlo"}


def _check_keys(section, allowed, where):
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _grid(section, key, where, cast=int):
    if key not in section:
        raise ConfigError(f"{where}: missing {key}")
    values = section[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}.{key}: expected a non-empty list")
    try:
        return [cast(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: bad entry in {values!r}") from None


def _write(out_dir: Path, name: str, csv_text: str, manifest: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.csv").write_text(csv_text)
    (out_dir / f"{name}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def _run_domination(name, sec, mc, out_dir):
    where = f"domination.{name}"
    _check_keys(sec, _DOM_KEYS, where)
    specs = sec.get("distributions") or ([sec["distribution"]] if "distribution" in sec else None)
    if not specs:
        raise ConfigError(f"{where}: missing distribution")
    dists = [parse_distribution(s, f"{where}.distribution") for s in specs]
    m_grid = _grid(sec, "m_grid", where)
    t_grid = _grid(sec, "t_grid", where, float) if "t_grid" in sec else None
    method = sec.get("c_method", "exact")
    if method not in ("exact", "ratio"):
        raise ConfigError(f"{where}.c_method: expected exact or ratio, got {method!r}")
    report = DominationReport(manifest={"experiment": where, "seed": mc.seed})
    for d, label in zip(dists, specs):
        f = d.tail()
        beta = float(sec.get("beta", default_beta(f)))
        if not 0 < beta <= 1:
            raise ConfigError(f"{where}.beta: must lie in (0, 1]")
        provider = exact_provider(d, f) if method == "exact" else ratio_provider(d, f)
        report.extend(dominate_check(d, f, m_grid, t_grid, beta, mc, c_provider=provider,
                                     name=label.replace(" ", ""), strict=False))
    _write(out_dir, name, report.to_csv(), report.manifest)
    n_fail = len(report.failures)
    print(f"{where}: {len(report.rows) - n_fail} passed, {n_fail} failed")
    return n_fail == 0


def _run_ld(name, sec, mc, out_dir):
    where = f"ld.{name}"
    _check_keys(sec, _LD_KEYS, where)
    if "distribution" not in sec:
        raise ConfigError(f"{where}: missing distribution")
    d = parse_distribution(sec["distribution"], f"{where}.distribution")
    kind = sec.get("kind", "poly" if isinstance(d, Pareto) else "ratio")
    try:
        s = DeviationSequence(float(sec.get("a", 1.0)), float(sec.get("p", 1.0)), float(sec.get("q", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    m_grid = _grid(sec, "m_grid", where)
    if kind not in ("ratio", "poly"):
        raise ConfigError(f"{where}.kind: expected ratio or poly, got {kind!r}")
    beta = sec.get("beta")
    manifest = {"experiment": where, "seed": mc.seed, "distribution": sec["distribution"],
                "sequence": {"a": s.a, "p": s.p, "q": s.q}, "m_grid": m_grid,
                "monte_carlo": asdict(mc), "versions": versions()}

    def skip(reason, **extra):
        manifest.update(skipped=True, reason=reason, **extra)
        _write(out_dir, name, "", manifest)
        print(f"{where}: skipped ({reason})")
        return True

    try:
        if kind == "ratio":
            f = d.tail()
            adm = check_admissible(f, s, m_grid)
            if not adm.admissible and not sec.get("allow_inadmissible", False):
                return skip(adm.reason, policy=adm.policy)
            result = ld_ratio(d, f, s, m_grid, mc, beta=beta)
        else:
            result = ld_poly_limit(d.gamma, s, m_grid, d, mc, beta=beta)
    except (FamilyError, ConditionError) as exc:
        return skip(f"{type(exc).__name__}: {exc}")
    manifest.update(result.summary())
    _write(out_dir, name, result.to_csv(), manifest)
    trend = "gap nonincreasing" if result.gap_nonincreasing() else "gap NOT nonincreasing"
    ratios = ", ".join(f"{r:.4g}" for r in result.ratios)
    print(f"{where}: ratios [{ratios}], {trend}")
    return True


def cmd_experiment(args):
    cfg = _load_config(args.config)
    override = _seed_override()
    base = cfg.get("monte_carlo", {})
    out_dir = Path(args.out) if args.out else Path(cfg.get("output", {}).get("dir", "."))
    unknown = sorted(set(cfg) - {"monte_carlo", "output", "domination", "ld"})
    if unknown:
        raise ConfigError(f"{args.config}: unknown section(s) {', '.join(unknown)}")
    jobs = [("domination", n, s) for n, s in cfg.get("domination", {}).items()]
    jobs += [("ld", n, s) for n, s in cfg.get("ld", {}).items()]
    if not jobs:
        raise ConfigError(f"{args.config}: no [domination.*] or [ld.*] experiments")
    failed = None
    for kind, name, sec in jobs:
        mc = _mc_config({**base, **sec.get("monte_carlo", {})}, f"{kind}.{name}.monte_carlo", override)
        ok = (_run_domination if kind == "domination" else _run_ld)(name, sec, mc, out_dir)
        if not ok and failed is None:
            failed = f"{kind}.{name}"
    if failed:
        print(f"error: experiment {failed} failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_ldcheck(args):
    d = parse_distribution(args.distribution)
    s = DeviationSequence(args.a, args.p, args.q)
    out = {"distribution": args.distribution, "sequence": {"a": s.a, "p": s.p, "q": s.q},
           "m_grid": args.m_grid}
    if isinstance(d, Pareto):
        out["condition"] = poly_condition(s)
    else:
        f = d.tail()
        adm = check_admissible(f, s, args.m_grid)
        out.update(admissible=adm.admissible, reason=adm.reason, policy=adm.policy,
                   log_m_over_I=adm.log_m_over_I, m_I_over_gamma_sq=adm.m_I_over_gamma_sq,
                   boundary_class=classify_boundary(f.alpha, s).value)
    if args.simulate:
        override = _seed_override()
        mc = MonteCarloConfig(args.n_samples, args.seed if override is None else override,
                              min(args.batch_size, args.n_samples))
        if isinstance(d, Pareto):
            result = ld_poly_limit(d.gamma, s, args.m_grid, d, mc, beta=args.beta)
        else:
            result = ld_ratio(d, d.tail(), s, args.m_grid, mc, beta=args.beta)
        out.update(result.summary(), seed=mc.seed)
        if args.csv:
            Path(args.csv).write_text(result.to_csv())
    _dump(out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heavytail", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="evaluate the two-regime concentration bound")
    _add_tail_args(p)
    p.add_argument("--m", type=_count, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--beta", type=_beta)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("tmax", help="solve for the regime threshold t_max")
    _add_tail_args(p)
    p.add_argument("--m", type=_count, required=True)
    p.add_argument("--beta", type=_beta)
    p.set_defaults(func=cmd_tmax)

    p = sub.add_parser("cbeta", help="c_{L,beta} by every applicable method")
    _add_tail_args(p, provider=False)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--beta", type=_beta, required=True)
    p.set_defaults(func=cmd_cbeta)

    p = sub.add_parser("experiment", help="run domination and LD experiments from a TOML file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: [output] dir, or .)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ldcheck", help="admissibility, boundary class and optional LD simulation")
    p.add_argument("--distribution", required=True, help='e.g. "weibull(alpha=2, c_alpha=1)"')
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--m-grid", type=_int_list, required=True, help="e.g. 100,300,1000")
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--n-samples", type=_count, default=10**6)
    p.add_argument("--batch-size", type=_count, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=_beta)
    p.add_argument("--csv", help="write the per-point table here")
    p.set_defaults(func=cmd_ldcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DominationFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (HeavyTailError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
