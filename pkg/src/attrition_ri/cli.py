"""Command-line interface.

Exit status is 0 on success, 1 for unreadable or invalid data and 2 for
usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .data import Mechanism, load_dataset
from .errors import AttritionError, CapacityError, ConfigError, DataError, UnsupportedError
from .imputation import recommended_b, restrict_observed
from .nulldist import AUTO, DEFAULT_DRAWS, DesignSpec, build_null, load_null, save_null
from .quantiles import (
    CONTROL,
    TREATED,
    band_all_units_mar,
    band_observed_subsample,
    choose_observed_ranks,
    combine_all_units_sharp,
    observed_units_band,
    prediction_band,
)
from .rankstats import MWU, RANKSUM, StatConfig
from .testing import invert_constant_ci, label_switch, sharp_test, sharp_test_subsample, two_step_test

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt_num(x):
    """Fixed-precision JSON number; infinities become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def _b_arg(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf"):
        return math.inf
    if t == "-inf":
        return -math.inf
    try:
        return float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"b must be inf, -inf or a number, got {text!r}") from None


def _common(p: argparse.ArgumentParser, data=True):
    if data:
        p.add_argument("--data", required=True, help="CSV with columns z,y or z,m,y")
        p.add_argument("--shuffle-seed", type=int, help="seeded unit reordering for random tie-breaking")
    p.add_argument("--mechanism", default="general", choices=[m.value for m in Mechanism])
    p.add_argument("--stat", default=RANKSUM, choices=[RANKSUM, MWU])
    p.add_argument("--s", type=int, default=1, help="transform order; 1 means plain ranks (Wilcoxon)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--null", default=AUTO, choices=["exact", "mc", AUTO])
    p.add_argument("--draws", type=int, default=DEFAULT_DRAWS)
    p.add_argument("--seed", type=int, help="seed for Monte Carlo nulls")
    p.add_argument("--null-cache", help="directory for cached null distributions")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="output file (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="attrition-ri", description="Randomization inference under sample attrition.")
    sub = parser.add_subparsers(
        dest="command", parser_class=_Parser, metavar="{test,two-step,ci-constant,quantile-band,simulate}"
    )

    p = sub.add_parser("test", help="worst-case test of a sharp or bounded effect null")
    _common(p)
    p.add_argument("--b", type=_b_arg, help="composite constant (default: recommended)")
    p.add_argument("--delta", default="0", help="constant effect or @file with one value per unit")
    p.add_argument("--subsample", action="store_true", help="test on observed units only")

    p = sub.add_parser("two-step", help="two-step test under monotone missingness")
    _common(p)
    p.add_argument("--delta", default="0")
    p.add_argument("--beta", type=float)

    p = sub.add_parser("ci-constant", help="confidence interval for a constant effect")
    _common(p)
    p.add_argument("--b", type=_b_arg)
    p.add_argument("--sides", default="two-sided", choices=["two-sided", "lower", "upper"])

    p = sub.add_parser("quantile-band", help="simultaneous lower limits for effect quantiles")
    _common(p)
    p.add_argument("--population", default=TREATED, choices=[TREATED, CONTROL, "observed", "all"])
    p.add_argument("--targets", help="comma-separated target ranks among all units (mar, population all)")
    p.add_argument("--budget", type=float, default=0.01, help="extrapolation error budget (mar, population all)")
    p.add_argument("--format", default="csv", choices=["csv", "json"])

    p = sub.add_parser("simulate", help="run a simulation study from a key=value spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("oracle-check", help=argparse.SUPPRESS)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    # keep the hidden command out of the usage listing
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle-check"]
    return parser


def stat_config(stat: str, s: int) -> StatConfig:
    if s is None or s <= 1:
        return StatConfig.wilcoxon() if stat == RANKSUM else StatConfig.mann_whitney()
    return StatConfig.stephenson(s) if stat == RANKSUM else StatConfig.mwu_power(s)


class _Nulls:
    def __init__(self, args, cfg):
        self.args, self.cfg = args, cfg

    def get(self, n, n1):
        a = self.args
        path = None
        if a.null_cache:
            os.makedirs(a.null_cache, exist_ok=True)
            tag = f"{self.cfg.label}_n{n}_n1_{n1}_{a.null}_{a.draws}_{a.seed}.bin"
            path = os.path.join(a.null_cache, tag)
            if os.path.exists(path):
                return load_null(path, self.cfg)
        dist = build_null(DesignSpec(n, n1), self.cfg, a.null, a.draws, a.seed, a.threads)
        if path:
            save_null(dist, path)
        return dist


def _delta(text: str, n: int):
    if text.startswith("@"):
        with open(text[1:]) as fh:
            vals = []
            for i, line in enumerate(fh, 1):
                field = line.strip().split(",")[0].strip()
                if not field:
                    continue
                try:
                    vals.append(float(field))
                except ValueError:
                    if i == 1 and not vals:
                        continue  # header
                    raise DataError(f"{text[1:]} line {i}: cannot parse {field!r}") from None
        if len(vals) != n:
            raise DataError(f"effect file has {len(vals)} values for {n} units")
        return np.array(vals), text
    try:
        return float(text), float(text)
    except ValueError:
        raise ConfigError(f"--delta must be a number or @file, got {text!r}") from None


def _emit(args, text: str):
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _result_json(args, command, cfg, res, delta_repr, extra=None):
    out = {
        "command": command,
        "mechanism": args.mechanism,
        "family": cfg.family,
        "s": args.s,
        "b": fmt_num(res.b),
        "delta": delta_repr if isinstance(delta_repr, str) else fmt_num(delta_repr),
        "p_value": fmt_num(res.p_value),
        "statistic": fmt_num(res.statistic),
        "null_mode": res.null_mode,
        "seed": args.seed,
    }
    for k, v in (extra or {}).items():
        out[k] = fmt_num(v) if isinstance(v, float) else v
    return out


def _cmd_test(args):
    ds = load_dataset(args.data, args.shuffle_seed)
    cfg = stat_config(args.stat, args.s)
    nulls = _Nulls(args, cfg)
    delta, delta_repr = _delta(args.delta, ds.n)
    mech = Mechanism.parse(args.mechanism)
    if mech is Mechanism.MAR or args.subsample:
        if args.b is not None:
            raise ConfigError("--b has no effect on the observed-subsample test")
        sub, _ = restrict_observed(ds)
        res = sharp_test_subsample(ds, delta, cfg, nulls.get(sub.n, sub.n1))
        extra = {"subsample": True}
    else:
        res = sharp_test(ds, delta, mech, cfg, args.b, nulls.get(ds.n, ds.n1))
        extra = {"subsample": False}
    return _dump(_result_json(args, "test", cfg, res, delta_repr, extra))


def _cmd_two_step(args):
    ds = load_dataset(args.data, args.shuffle_seed)
    cfg = stat_config(args.stat, args.s)
    mech = Mechanism.parse(args.mechanism)
    if cfg.family != MWU:
        raise UnsupportedError("two-step needs --stat mwu")
    if mech not in (Mechanism.MP, Mechanism.MN):
        raise UnsupportedError("two-step needs --mechanism mp or mn")
    delta, delta_repr = _delta(args.delta, ds.n)
    beta = args.alpha / 2 if args.beta is None else args.beta
    n1 = ds.n0 if mech is Mechanism.MN else ds.n1
    null = _Nulls(args, cfg).get(ds.n, n1)
    res, trace = two_step_test(ds, delta, cfg, args.alpha, beta, null, mech)
    extra = {
        "beta": beta,
        "alpha": args.alpha,
        "m_hat": trace.m_hat,
        "m_lower": trace.m_lower,
        "label_switched": mech is Mechanism.MN,
    }
    return _dump(_result_json(args, "two-step", cfg, res, delta_repr, extra))


def _cmd_ci(args):
    ds = load_dataset(args.data, args.shuffle_seed)
    cfg = stat_config(args.stat, args.s)
    mech = Mechanism.parse(args.mechanism)
    nulls = _Nulls(args, cfg)
    if mech is Mechanism.MAR:
        sub, _ = restrict_observed(ds)
        null = nulls.get(sub.n, sub.n1)
    else:
        null = nulls.get(ds.n, ds.n1)
    ci = invert_constant_ci(ds, mech, cfg, args.alpha, null, args.sides, args.b)
    out = {
        "command": "ci-constant",
        "mechanism": mech.value,
        "family": cfg.family,
        "s": args.s,
        "b": fmt_num(recommended_b(mech) if args.b is None and mech is not Mechanism.MAR else args.b),
        "alpha": fmt_num(args.alpha),
        "sides": args.sides,
        "lower": fmt_num(ci.lower),
        "upper": fmt_num(ci.upper),
        "lower_closed": ci.lower_closed,
        "upper_closed": ci.upper_closed,
        "level": fmt_num(ci.level),
        "null_mode": null.mode,
        "seed": args.seed,
    }
    return _dump(out)


def _band(args, ds, cfg, mech):
    nulls = _Nulls(args, cfg)
    alpha = args.alpha
    pop = args.population
    if mech in (Mechanism.GENERAL, Mechanism.MP, Mechanism.MN):
        if pop == "observed":
            raise UnsupportedError("observed-unit bands need sharp or mar missingness")
        bt = bc = None
        if pop in (TREATED, "all"):
            bt = prediction_band(ds, mech, cfg, alpha, nulls.get(ds.n, ds.n1), TREATED)
        if pop in (CONTROL, "all"):
            bc = prediction_band(ds, mech, cfg, alpha, nulls.get(ds.n, ds.n0), CONTROL)
        if pop == "all":
            return combine_all_units_sharp(bt, bc, 0, alpha)
        return bt if pop == TREATED else bc
    sub, _ = restrict_observed(ds)
    null_t = nulls.get(sub.n, sub.n1)
    null_c = nulls.get(sub.n, sub.n0)
    if pop == TREATED:
        return band_observed_subsample(ds, cfg, alpha, mech, null_t, TREATED)
    if pop == CONTROL:
        return band_observed_subsample(ds, cfg, alpha, mech, null_c, CONTROL)
    if pop == "observed":
        return observed_units_band(ds, cfg, alpha, mech, null_t, null_c)
    if mech is Mechanism.SHARP:
        bt = band_observed_subsample(ds, cfg, alpha, mech, null_t, TREATED)
        bc = band_observed_subsample(ds, cfg, alpha, mech, null_c, CONTROL)
        return combine_all_units_sharp(bt, bc, ds.n10 + ds.n00, alpha)
    if not args.targets:
        raise ConfigError("--population all under mar needs --targets")
    try:
        targets = [int(v) for v in args.targets.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--targets must be integers, got {args.targets!r}") from None
    k_obs = choose_observed_ranks(ds.n, sub.n, targets, args.budget)
    return band_all_units_mar(ds, cfg, alpha, targets, k_obs, null_t, null_c)


def _cmd_band(args):
    ds = load_dataset(args.data, args.shuffle_seed)
    cfg = stat_config(args.stat, args.s)
    band = _band(args, ds, cfg, Mechanism.parse(args.mechanism))
    if args.format == "csv":
        return band.to_csv()
    recs = band.records()
    for r in recs:
        r["lower"] = fmt_num(r["lower"])
        r["alpha"] = fmt_num(r["alpha"])
        r["guarantee"] = fmt_num(r["guarantee"])
    return _dump(recs)


def _cmd_simulate(args):
    from .simulate import parse_spec_file, run_experiment, write_report

    with open(args.spec) as fh:
        spec = parse_spec_file(fh.read())
    report = run_experiment(spec.kind, spec)
    paths = write_report(report, args.out)
    return _dump({"command": "simulate", "kind": spec.kind, "outputs": paths, "rows": report.rows})


def _cmd_oracle(args):
    from .oracle import oracle_check

    summary = oracle_check(args.instances, args.seed)
    text = _dump(summary)
    if summary["mismatches"]:
        raise _OracleFailure(text)
    return text


class _OracleFailure(Exception):
    pass


_COMMANDS = {
    "test": _cmd_test,
    "two-step": _cmd_two_step,
    "ci-constant": _cmd_ci,
    "quantile-band": _cmd_band,
    "simulate": _cmd_simulate,
    "oracle-check": _cmd_oracle,
}


def dispatch(argv=None) -> int:
    """Run one command; return the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        text = _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ConfigError, UnsupportedError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _OracleFailure as exc:
        sys.stdout.write(str(exc))
        return EXIT_DATA
    except AttritionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "simulate":
        sys.stdout.write(text)
    else:
        _emit(args, text)
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
