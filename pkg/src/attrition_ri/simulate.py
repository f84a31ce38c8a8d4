"""Monte Carlo studies of size, power and band coverage under attrition.

Populations follow normal outcome models with missingness driven by the
control outcome (threshold, monotone positive or negative) or by coin flips
(missing at random). Each replicate draws a population and a completely
randomized assignment from streams seeded by ``(seed, replicate)``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import norm

from .data import Dataset, Mechanism
from .errors import AttritionError, ConfigError
from .nulldist import DesignSpec, build_null
from .quantiles import QuantileHypothesis, band_observed_subsample, prediction_band, quantile_test
from .rankstats import StatConfig
from .testing import sharp_test, sharp_test_subsample

TYPE1 = "type1"
POWER = "power"
BAND = "band"

MISSING_FAMILIES = ("none", "threshold", "mp", "mn", "random", "sharp")

# the mechanism each missingness family is analysed under
FAMILY_MECHANISM = {
    "none": Mechanism.GENERAL,
    "threshold": Mechanism.GENERAL,
    "mp": Mechanism.MP,
    "mn": Mechanism.MN,
    "random": Mechanism.MAR,
    "sharp": Mechanism.SHARP,
}


def parse_stat(label: str) -> StatConfig:
    """Parse ``wilcoxon``, ``mwu``, ``stephenson:S`` or ``power:S``."""
    label = label.strip().lower()
    if label in ("wilcoxon", "ranksum"):
        return StatConfig.wilcoxon()
    if label in ("mwu", "mann-whitney"):
        return StatConfig.mann_whitney()
    name, _, s = label.partition(":")
    if name == "stephenson" and s:
        return StatConfig.stephenson(int(s))
    if name == "power" and s:
        return StatConfig.mwu_power(int(s))
    raise ConfigError(f"unknown statistic {label!r}")


def stat_label(cfg: StatConfig) -> str:
    if cfg.transform == "identity":
        return "wilcoxon" if cfg.family == "ranksum" else "mwu"
    return f"{cfg.transform}:{cfg.s}"


@dataclass
class SimSpec:
    """Settings of a simulation study.

    ``missing`` selects the missingness family; ``p`` and ``q`` are its
    parameters (``q`` unused for ``random`` and ``sharp``; ``sharp`` hides
    outcomes with ``Y(0) > qnorm(p)`` in both arms). ``sigma`` of ``None`` means
    no effect; otherwise ``Y(1) ~ N(0, sigma^2)`` independently of ``Y(0)``.
    ``b_values`` are the composite constants compared in size studies.
    With ``fixed_population`` one population (replicate 0) is kept and only
    the assignment is redrawn, which is the finite-population view; by
    default every replicate draws a fresh population.
    Power and band studies test ``tau_t(k) <= c`` with
    ``k = ceil(k_frac * n1)``.
    """

    kind: str = TYPE1
    n: int = 500
    n1: int = 250
    missing: str = "threshold"
    p: float = 0.95
    q: float = 0.05
    sigma: float | None = None
    reps: int = 2000
    alpha: float = 0.1
    seed: int = 0
    stats: list = field(default_factory=lambda: ["wilcoxon"])
    b_values: list = field(default_factory=lambda: [-math.inf, math.inf])
    k_frac: float = 0.95
    c: float = 0.0
    null_draws: int = 100_000
    sub_null_draws: int = 10_000
    fixed_population: bool = False

    def __post_init__(self):
        if self.kind not in (TYPE1, POWER, BAND):
            raise ConfigError(f"unknown study kind {self.kind!r}")
        if self.missing not in MISSING_FAMILIES:
            raise ConfigError(f"unknown missingness family {self.missing!r}")
        if not 1 <= self.n1 <= self.n - 1:
            raise ConfigError("need 1 <= n1 <= n - 1")
        self.stats = [stat_label(parse_stat(s)) if isinstance(s, str) else stat_label(s) for s in self.stats]

    @property
    def mechanism(self) -> Mechanism:
        return FAMILY_MECHANISM[self.missing]


@dataclass
class Population:
    """Potential outcomes and potential observation indicators."""

    y0: np.ndarray
    y1: np.ndarray
    m0: np.ndarray
    m1: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return self.y1 - self.y0

    def observe(self, z) -> Dataset:
        z = np.asarray(z)
        m = np.where(z == 1, self.m1, self.m0)
        y = np.where(z == 1, self.y1, self.y0)
        return Dataset.from_arrays(z, np.where(m == 1, y, np.nan), m)


def generate_population(spec: SimSpec, rep: int) -> Population:
    """Draw replicate ``rep`` of the population described by ``spec``."""
    rng = np.random.default_rng([spec.seed, rep, 0])
    n = spec.n
    y0 = rng.standard_normal(n)
    y1 = y0.copy() if spec.sigma is None else spec.sigma * rng.standard_normal(n)
    p, q = spec.p, spec.q
    ones = np.ones(n, dtype=np.int8)
    if spec.missing == "none":
        m0 = m1 = ones
    elif spec.missing == "threshold":
        m0 = (y0 <= norm.ppf(p)).astype(np.int8)
        m1 = (y0 >= norm.ppf(q)).astype(np.int8)
    elif spec.missing == "mp":
        m1 = (y0 <= norm.ppf(p + q)).astype(np.int8)
        m0 = (y0 <= norm.ppf(p - q)).astype(np.int8)
    elif spec.missing == "mn":
        m1 = (y0 >= norm.ppf(p + q)).astype(np.int8)
        m0 = (y0 >= norm.ppf(p - q)).astype(np.int8)
    elif spec.missing == "sharp":
        m0 = m1 = (y0 <= norm.ppf(p)).astype(np.int8)
    else:
        m0 = (rng.random(n) < p).astype(np.int8)
        m1 = (rng.random(n) < p).astype(np.int8)
    return Population(y0, y1, m0, m1)


def draw_assignment(spec: SimSpec, rep: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, rep, 1])
    z = np.zeros(spec.n, dtype=np.int8)
    z[rng.choice(spec.n, spec.n1, replace=False)] = 1
    return z


class NullCache:
    """Null distributions shared across replicates, keyed by design and statistic."""

    def __init__(self, draws: int, seed: int):
        self.draws = draws
        self.seed = seed
        self._store = {}

    def get(self, n: int, n1: int, cfg: StatConfig):
        key = (n, n1, cfg)
        if key not in self._store:
            self._store[key] = build_null(DesignSpec(n, n1), cfg, "auto", self.draws, self.seed)
        return self._store[key]


def _fmt_b(b: float) -> str:
    return "inf" if b == math.inf else "-inf" if b == -math.inf else repr(float(b))


def _procedures(spec: SimSpec) -> list[str]:
    if spec.kind == TYPE1:
        names = ["worst_y0"] + [f"composite_b={_fmt_b(b)}" for b in spec.b_values] + ["naive"]
        return [f"{n}|{s}" for s in spec.stats for n in names]
    if spec.kind == POWER:
        return [f"quantile|{s}" for s in spec.stats] + [f"naive_quantile|{s}" for s in spec.stats]
    return [f"band|{s}" for s in spec.stats]


def _composite_mech(spec):
    mech = spec.mechanism
    return Mechanism.GENERAL if mech is Mechanism.MAR else mech


def _type1_rep(spec, ds, main, sub, want):
    out = {}
    for s in spec.stats:
        cfg = parse_stat(s)
        if f"worst_y0|{s}" in want:
            null = main.get(ds.n, ds.n1, cfg)
            out[f"worst_y0|{s}"] = sharp_test(ds, 0.0, Mechanism.GENERAL, cfg, math.inf, null).p_value
        for b in spec.b_values:
            name = f"composite_b={_fmt_b(b)}|{s}"
            if name in want:
                null = main.get(ds.n, ds.n1, cfg)
                out[name] = sharp_test(ds, 0.0, _composite_mech(spec), cfg, b, null).p_value
        if f"naive|{s}" in want:
            out[f"naive|{s}"] = _naive_p(ds, 0.0, cfg, sub)
    return out


def _naive_p(ds, delta, cfg, sub):
    try:
        n_s, n_s1 = ds.n11 + ds.n01, ds.n11
        return sharp_test_subsample(ds, delta, cfg, sub.get(n_s, n_s1, cfg)).p_value
    except AttritionError:
        return 1.0


def _k_target(spec, n1):
    return min(n1, max(1, math.ceil(spec.k_frac * n1)))


def _power_rep(spec, ds, main, sub, want):
    out = {}
    k = _k_target(spec, ds.n1)
    mech = _composite_mech(spec)
    for s in spec.stats:
        cfg = parse_stat(s)
        if f"quantile|{s}" in want:
            hyp = QuantileHypothesis(k, spec.c)
            out[f"quantile|{s}"] = quantile_test(ds, hyp, mech, cfg, main.get(ds.n, ds.n1, cfg)).p_value
        if f"naive_quantile|{s}" in want:
            out[f"naive_quantile|{s}"] = _naive_quantile_p(ds, spec, cfg, sub)
    return out


def _naive_quantile_p(ds, spec, cfg, sub):
    from .imputation import restrict_observed
    from .quantiles import subsample_quantile_test

    try:
        s, _ = restrict_observed(ds)
    except AttritionError:
        return 1.0
    k = _k_target(spec, s.n1)
    return subsample_quantile_test(s, k, spec.c, cfg, sub.get(s.n, s.n1, cfg)).p_value


def _band_rep(spec, pop, z, ds, main, sub, want):
    out = {}
    tau = pop.tau
    for s in spec.stats:
        if f"band|{s}" not in want:
            continue
        cfg = parse_stat(s)
        if spec.mechanism in (Mechanism.MAR, Mechanism.SHARP):
            try:
                null_s = sub.get(ds.n11 + ds.n01, ds.n11, cfg)
                band = band_observed_subsample(ds, cfg, spec.alpha, spec.mechanism, null_s)
            except AttritionError:
                out[s] = (None, True)
                continue
            target = np.sort(tau[(z == 1) & (ds.m == 1)])
        else:
            band = prediction_band(ds, spec.mechanism, cfg, spec.alpha, main.get(ds.n, ds.n1, cfg))
            target = np.sort(tau[z == 1])
        covered = bool(np.all((target > band.lower) | ((target == band.lower) & band.closed)))
        out[s] = (band.lower, covered)
    return out


@dataclass
class Report:
    """Aggregated study results.

    ``rows`` holds one dict per procedure with the rejection (or coverage)
    rate and its Monte Carlo standard error; ``bands`` maps a statistic to
    per-rank medians of lower limits for band studies.
    """

    spec: SimSpec
    rows: list
    missing_share: float
    bands: dict = field(default_factory=dict)

    def row(self, procedure: str) -> dict:
        for r in self.rows:
            if r["procedure"] == procedure:
                return r
        raise KeyError(procedure)

    def to_json(self) -> dict:
        spec = asdict(self.spec)
        spec["b_values"] = [_fmt_b(b) for b in spec["b_values"]]
        return {
            "spec": spec,
            "missing_share": self.missing_share,
            "rows": self.rows,
            "bands": {k: [{"k": i + 1, "median_lower": _jsonable(v)} for i, v in enumerate(vals)] for k, vals in self.bands.items()},
        }


def _jsonable(x):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return round(x, 12)


def _rate_row(name, flags, reps):
    rate = float(np.mean(flags)) if len(flags) else math.nan
    se = math.sqrt(rate * (1 - rate) / len(flags)) if len(flags) else math.nan
    return {"procedure": name, "rate": rate, "se": se, "reps": reps}


def run_experiment(kind: str, spec: SimSpec, procedures=None) -> Report:
    """Run a size (``type1``), ``power`` or ``band`` study.

    Parameters
    ----------
    kind : {"type1", "power", "band"}
        Overrides ``spec.kind``.
    procedures : list of str, optional
        Subset of procedure names to report; all by default. Names look like
        ``"naive|wilcoxon"`` or ``"composite_b=inf|wilcoxon"``.

    Returns
    -------
    Report
        Rejection rates at ``spec.alpha`` for size and power studies; for
        band studies the simultaneous coverage rate plus per-rank medians of
        the lower limits.
    """
    spec = SimSpec(**{**{f.name: getattr(spec, f.name) for f in fields(spec)}, "kind": kind})
    main = NullCache(spec.null_draws, spec.seed)
    sub = NullCache(spec.sub_null_draws, spec.seed)
    names = _procedures(spec)
    wanted = names if procedures is None else [p for p in names if p in procedures]
    if not wanted:
        raise ConfigError(f"no known procedures among {procedures}; available: {names}")
    want = set(wanted)
    pvals = {name: [] for name in wanted}
    limits = {s: [] for s in spec.stats}
    missing = 0
    fixed = generate_population(spec, 0) if spec.fixed_population else None
    for rep in range(spec.reps):
        pop = fixed if fixed is not None else generate_population(spec, rep)
        z = draw_assignment(spec, rep)
        ds = pop.observe(z)
        missing += ds.n - ds.n11 - ds.n01
        if kind == TYPE1:
            res = _type1_rep(spec, ds, main, sub, want)
        elif kind == POWER:
            res = _power_rep(spec, ds, main, sub, want)
        else:
            res = {}
            for s, (lower, covered) in _band_rep(spec, pop, z, ds, main, sub, want).items():
                res[f"band|{s}"] = 0.0 if covered else 1.0
                if lower is not None:
                    limits[s].append(lower)
        for name in wanted:
            pvals[name].append(res[name])
    rows = []
    for name in wanted:
        if kind == BAND:
            covered = [v == 0.0 for v in pvals[name]]
            row = _rate_row(name, covered, spec.reps)
            row["measure"] = "coverage"
        else:
            row = _rate_row(name, [p <= spec.alpha for p in pvals[name]], spec.reps)
            row["measure"] = "rejection"
        rows.append(row)
    bands = {}
    for s, lims in limits.items():
        if lims and len({len(x) for x in lims}) == 1:
            bands[s] = np.median(np.vstack(lims), axis=0)
    return Report(spec, rows, missing / (spec.reps * spec.n), bands)


def write_report(report: Report, outdir) -> list[str]:
    """Write ``report.csv``, ``report.json`` and one CSV per band; return paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    path = os.path.join(outdir, "report.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["procedure", "measure", "rate", "se", "reps"])
        for r in report.rows:
            w.writerow([r["procedure"], r["measure"], f"{r['rate']:.6f}", f"{r['se']:.6f}", r["reps"]])
    paths.append(path)
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(path)
    for s, med in report.bands.items():
        path = os.path.join(outdir, f"band_{s.replace(':', '')}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "median_lower"])
            for i, v in enumerate(med):
                w.writerow([i + 1, repr(float(v))])
        paths.append(path)
    return paths


_FLOAT_KEYS = {"p", "q", "alpha", "k_frac", "c"}
_INT_KEYS = {"n", "n1", "reps", "seed", "null_draws", "sub_null_draws"}


def parse_spec_file(text: str) -> SimSpec:
    """Build a :class:`SimSpec` from ``key = value`` lines (``#`` comments)."""
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value")
        try:
            if key in _FLOAT_KEYS:
                kw[key] = float(value)
            elif key in _INT_KEYS:
                kw[key] = int(value)
            elif key == "sigma":
                kw[key] = None if value.lower() in ("", "none", "null") else float(value)
            elif key == "stats":
                kw[key] = [v for v in (s.strip() for s in value.split(",")) if v]
            elif key == "b_values":
                kw[key] = [float(v) for v in value.split(",") if v.strip()]
            elif key == "fixed_population":
                kw[key] = value.lower() in ("1", "true", "yes")
            elif key in ("kind", "missing"):
                kw[key] = value.lower()
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return SimSpec(**kw)
