"""Brute-force reference implementations for tiny instances.

These recompute statistics, null distributions and worst-case minima by
direct enumeration, sharing no code with the fast paths beyond the data
types, so the two can be checked against each other.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .data import Dataset, Mechanism
from .errors import CapacityError, UnsupportedError
from .imputation import effect_vector
from .nulldist import EXACT, DesignSpec, NullDistribution
from .rankstats import IDENTITY, POWER, RANKSUM, STEPHENSON, StatConfig

MAX_BRUTE_N = 8
MAX_BRUTE_ASSIGNMENTS = 100_000


def naive_phi(cfg: StatConfig, r: int) -> float:
    if cfg.transform == IDENTITY:
        return float(r)
    if cfg.transform == STEPHENSON:
        return float(math.comb(r - 1, cfg.s - 1)) if r >= cfg.s else 0.0
    if cfg.transform == POWER:
        return float(r ** (cfg.s - 1))
    return float(cfg.table[r])


def naive_psi(i, j, yi, yj) -> int:
    return int(yi > yj) + int(yi == yj) * int(i >= j)


def naive_statistic(z, y, cfg: StatConfig) -> float:
    """Statistic from its pairwise-comparison definition, O(n^2)."""
    n = len(z)
    scores = []
    for i in range(n):
        if not z[i]:
            continue
        if cfg.family == RANKSUM:
            r = sum(naive_psi(i, j, y[i], y[j]) for j in range(n))
        else:
            r = sum(naive_psi(i, j, y[i], y[j]) for j in range(n) if not z[j])
        scores.append(naive_phi(cfg, r))
    return math.fsum(scores)


def brute_force_null(design: DesignSpec, cfg: StatConfig, y=None) -> NullDistribution:
    """Statistic over every assignment, applied to ``y`` (default ``1..n``)."""
    if not isinstance(design, DesignSpec):
        design = DesignSpec(*design)
    if design.n_assignments > MAX_BRUTE_ASSIGNMENTS:
        raise CapacityError("too many assignments for brute force")
    y = list(range(1, design.n + 1)) if y is None else [float(v) for v in y]
    vals = []
    for treated in itertools.combinations(range(design.n), design.n1):
        z = [0] * design.n
        for i in treated:
            z[i] = 1
        vals.append(naive_statistic(z, y, cfg))
    arr = np.array(sorted(vals))
    arr.setflags(write=False)
    return NullDistribution(design, cfg, EXACT, arr)


def insertion_candidates(fixed) -> list:
    """Finite values realizing every relative position among ``fixed``.

    One value below all, each fixed value itself (ties resolved by index),
    each midpoint and one value above all.
    """
    vals = sorted({float(v) for v in fixed if math.isfinite(v)})
    if not vals:
        return [0.0]
    out = [vals[0] - 1.0]
    for a, b in zip(vals, vals[1:]):
        out += [a, (a + b) / 2]
    out += [vals[-1], vals[-1] + 1.0]
    return out


def _options(ds: Dataset, d, mech: Mechanism, b: float, free):
    """Per-unit feasible composite control values under ``mech``."""
    opts = []
    for i in range(ds.n):
        z, m = ds.z[i], ds.m[i]
        if z == 0:
            opts.append([ds.y[i]] if m else [b])
        elif m:
            shifted = ds.y[i] - d[i]
            opts.append([shifted, b] if mech in (Mechanism.GENERAL, Mechanism.MP) else [shifted])
        else:
            opts.append([b] + free if mech in (Mechanism.GENERAL, Mechanism.MN) else [b])
    return opts


def _check_size(ds):
    if ds.n > MAX_BRUTE_N:
        raise CapacityError(f"brute force limited to n <= {MAX_BRUTE_N}")


def brute_force_worst_statistic(ds: Dataset, delta, mech, cfg: StatConfig, b=None) -> float:
    """Minimum statistic over every feasible completion of unknown outcomes."""
    _check_size(ds)
    mech = Mechanism.parse(mech)
    if mech is Mechanism.MAR:
        raise UnsupportedError("MAR has no worst-case completion")
    if b is None:
        b = -math.inf if mech is Mechanism.MN else math.inf
    d = effect_vector(delta, ds.n)
    known = [ds.y[i] - d[i] * ds.z[i] for i in range(ds.n) if ds.m[i]] + [b]
    opts = _options(ds, d, mech, b, insertion_candidates(known))
    z = list(ds.z)
    return min(naive_statistic(z, list(y), cfg) for y in itertools.product(*opts))


def brute_force_quantile_worst(ds: Dataset, hyp, mech, cfg: StatConfig) -> float:
    """Minimum statistic over effects with at most ``n1 - k`` treated effects above ``c``.

    Units exceeding ``c`` may take any value below their outcome minus
    ``c``; unknown outcomes range over the mechanism's feasible values.
    """
    _check_size(ds)
    mech = Mechanism.parse(mech)
    if mech not in (Mechanism.GENERAL, Mechanism.MP, Mechanism.MN):
        raise UnsupportedError("quantile brute force covers general, mp and mn")
    b = -math.inf if mech is Mechanism.MN else math.inf
    c = float(hyp.c)
    budget = ds.n1 - hyp.k
    fixed = [ds.y[i] - c * ds.z[i] for i in range(ds.n) if ds.m[i]] + [b]
    grid = insertion_candidates(fixed)
    opts = _options(ds, np.full(ds.n, c), mech, b, grid)
    # tag options: (value, exceeds)
    tagged = []
    for i in range(ds.n):
        base = [(v, 0) for v in opts[i]]
        if ds.z[i] == 1 and ds.m[i] == 1:
            cut = ds.y[i] - c
            base += [(v, 1) for v in grid if v < cut]
        tagged.append(base)
    z = list(ds.z)
    best = math.inf
    for combo in itertools.product(*tagged):
        if sum(e for _, e in combo) > budget:
            continue
        best = min(best, naive_statistic(z, [v for v, _ in combo], cfg))
    return best


def brute_force_subsample_quantile_worst(sub: Dataset, k: int, c: float, cfg: StatConfig) -> float:
    """Fully observed analogue of :func:`brute_force_quantile_worst`."""
    _check_size(sub)
    fixed = [sub.y[i] - c * sub.z[i] for i in range(sub.n)]
    grid = insertion_candidates(fixed)
    tagged = []
    for i in range(sub.n):
        base = [(fixed[i], 0)]
        if sub.z[i] == 1:
            base += [(v, 1) for v in grid if v < fixed[i]]
        tagged.append(base)
    z = list(sub.z)
    best = math.inf
    for combo in itertools.product(*tagged):
        if sum(e for _, e in combo) > sub.n1 - k:
            continue
        best = min(best, naive_statistic(z, [v for v, _ in combo], cfg))
    return best


def random_tiny_dataset(rng, n_min=3, n_max=6, observe=0.6, levels=4) -> Dataset:
    """Small dataset with many ties and a mix of missing cells."""
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        z = rng.integers(0, 2, n)
        if 0 < z.sum() < n:
            break
    y = rng.integers(0, levels, n).astype(float)
    y[rng.random(n) >= observe] = np.nan
    return Dataset.from_arrays(z, y)


def _random_cfg(rng) -> StatConfig:
    choice = int(rng.integers(6))
    if choice == 0:
        return StatConfig.wilcoxon()
    if choice == 1:
        return StatConfig.stephenson(int(rng.integers(2, 5)))
    if choice == 2:
        return StatConfig.mann_whitney()
    return StatConfig.mwu_power(int(rng.integers(2, 5)))


def oracle_check(instances: int = 100, seed: int = 0) -> dict:
    """Compare closed forms with brute force on random tiny instances.

    Returns a summary with counts of checks and mismatches per path.
    """
    from .quantiles import QuantileHypothesis, quantile_test
    from .rankstats import statistic
    from .imputation import worst_case
    from .nulldist import build_null

    rng = np.random.default_rng(seed)
    checks = {"sharp": 0, "quantile": 0, "null": 0}
    mismatches = []
    for _ in range(instances):
        ds = random_tiny_dataset(rng)
        cfg = _random_cfg(rng)
        d = rng.integers(-2, 3, ds.n).astype(float)
        for mech in ("general", "mp", "mn", "sharp"):
            fast = statistic(ds.z, worst_case(ds, d, mech), cfg)
            slow = brute_force_worst_statistic(ds, d, mech, cfg)
            checks["sharp"] += 1
            if fast != slow:
                mismatches.append({"path": "sharp", "mechanism": mech, "fast": fast, "brute": slow})
        hyp = QuantileHypothesis(int(rng.integers(1, ds.n1 + 1)), float(rng.integers(-2, 3)))
        for mech in ("general", "mp", "mn"):
            fast = quantile_test(ds, hyp, mech, cfg).statistic
            slow = brute_force_quantile_worst(ds, hyp, mech, cfg)
            checks["quantile"] += 1
            if fast != slow:
                mismatches.append({"path": "quantile", "mechanism": mech, "fast": fast, "brute": slow})
        design = DesignSpec(ds.n, ds.n1)
        if not np.array_equal(build_null(design, cfg, EXACT).values, brute_force_null(design, cfg).values):
            mismatches.append({"path": "null", "n": ds.n, "n1": ds.n1, "stat": cfg.label})
        checks["null"] += 1
    return {"instances": instances, "seed": seed, "checks": checks, "mismatches": mismatches}
