"""Inference on quantiles of individual treatment effects.

``tau_t(k)`` is the ``k``-th smallest individual effect among treated units.
Tests of ``tau_t(k) <= c`` are inverted into one-sided lower limits that hold
simultaneously over ``k``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import hypergeom

from .data import Dataset, Mechanism
from .errors import CapacityError, ConfigError, UnsupportedError
from .imputation import recommended_b, restrict_observed, worst_case
from .inversion import lower_limit
from .rankstats import StatConfig, statistic
from .nulldist import tail_prob
from .testing import TestResult, label_switch, resolve_null

TREATED = "treated"
CONTROL = "control"
TREATED_OBSERVED = "treated-observed"
CONTROL_OBSERVED = "control-observed"
ALL = "all"

_QUANTILE_MECHS = (Mechanism.GENERAL, Mechanism.MP, Mechanism.MN)


@dataclass(frozen=True)
class QuantileHypothesis:
    """``tau_t(k) <= c``: at most ``n1 - k`` treated effects exceed ``c``.

    ``kappa`` is a positive margin used to build a finite stand-in for an
    arbitrarily large effect; results do not depend on it.
    """

    k: int
    c: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")
        if not math.isfinite(self.c):
            raise ConfigError("threshold c must be finite")


def _top_treated_observed(z, m, y, count: int) -> np.ndarray:
    """Indices of the ``count`` treated observed units with the largest outcomes."""
    units = np.flatnonzero((z == 1) & (m == 1))
    if count <= 0:
        return units[:0]
    order = np.lexsort((units, y[units]))
    return units[order[units.size - count :]]


def large_effect(ds: Dataset, kappa: float = 1.0) -> float:
    """An effect large enough to push any treated outcome below all controls."""
    yt = ds.y[(ds.z == 1) & (ds.m == 1)]
    yc = ds.y[(ds.z == 0) & (ds.m == 1)]
    if yt.size == 0 or yc.size == 0:
        return float(kappa)
    return float(yt.max() - yc.min() + kappa)


def xi_vector(ds: Dataset, hyp: QuantileHypothesis) -> np.ndarray:
    """Least favourable effect vector within ``tau_t(k) <= c``.

    The ``min(n1 - k, n11)`` treated observed units with the largest outcomes
    receive a large effect; every other entry is ``c``.
    """
    if not 1 <= hyp.k <= ds.n1:
        raise ConfigError(f"k must lie in 1..{ds.n1}, got {hyp.k}")
    out = np.full(ds.n, float(hyp.c))
    top = _top_treated_observed(ds.z, ds.m, ds.y, min(ds.n1 - hyp.k, ds.n11))
    out[top] = large_effect(ds, hyp.kappa)
    return out


def _check_mech(mech) -> Mechanism:
    mech = Mechanism.parse(mech)
    if mech not in _QUANTILE_MECHS:
        raise UnsupportedError(
            f"quantile tests on all treated units need general, mp or mn missingness, got {mech.value}"
        )
    return mech


def quantile_test(ds: Dataset, hyp: QuantileHypothesis, mech, cfg: StatConfig, null=None) -> TestResult:
    """Worst-case p-value for ``tau_t(k) <= c``."""
    mech = _check_mech(mech)
    null = resolve_null(null, ds.n, ds.n1, cfg)
    b = recommended_b(mech)
    t = statistic(ds.z, worst_case(ds, xi_vector(ds, hyp), mech, b), cfg)
    return TestResult(tail_prob(null, t), t, mech.value, b, null.mode, info={"k": hyp.k, "c": hyp.c})


@dataclass
class QuantileBand:
    """Lower limits ``lower[k-1]`` for the ``k``-th smallest effect of a population.

    Each interval is ``[lower, inf)`` when ``closed`` else ``(lower, inf)``.
    ``guarantee`` is the simultaneous coverage level over all ``k``.
    """

    k: np.ndarray
    lower: np.ndarray
    closed: np.ndarray
    alpha: float
    population: str
    guarantee: float

    def records(self) -> list[dict]:
        return [
            {
                "k": int(k),
                "lower": float(lo),
                "closed": bool(cl),
                "population": self.population,
                "alpha": self.alpha,
                "guarantee": self.guarantee,
            }
            for k, lo, cl in zip(self.k, self.lower, self.closed)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "lower"])
        for k, lo in zip(self.k, self.lower):
            w.writerow([int(k), repr(float(lo))])
        return buf.getvalue()


def _cross_differences(z, m, y) -> np.ndarray:
    yt = y[(z == 1) & (m == 1)]
    yc = y[(z == 0) & (m == 1)]
    return (yt[:, None] - yc[None, :]).ravel()


def _invert_over_k(pvalue_at, n_ranks: int, breakpoints, alpha):
    lower = np.empty(n_ranks)
    closed = np.zeros(n_ranks, dtype=bool)
    start = 0
    bps = np.unique(breakpoints)
    for k in range(1, n_ranks + 1):
        lim, cl, start = lower_limit(lambda c: pvalue_at(k, c), bps, alpha, start)
        lower[k - 1] = lim
        closed[k - 1] = cl
    return lower, closed


def prediction_band(
    ds: Dataset,
    mech,
    cfg: StatConfig,
    alpha: float,
    null=None,
    population: str = TREATED,
    kappa: float = 1.0,
) -> QuantileBand:
    """Simultaneous lower prediction limits for sorted treated or control effects.

    For the control population labels are switched, which also swaps the
    direction of monotone missingness; ``null`` must then match ``(n, n0)``.
    """
    mech = _check_mech(mech)
    if population == CONTROL:
        ds, _ = label_switch(ds)
        mech = mech.flipped()
    elif population != TREATED:
        raise ConfigError(f"population must be {TREATED!r} or {CONTROL!r}")
    null = resolve_null(null, ds.n, ds.n1, cfg)

    def pvalue_at(k, c):
        return quantile_test(ds, QuantileHypothesis(k, c, kappa), mech, cfg, null).p_value

    lower, closed = _invert_over_k(pvalue_at, ds.n1, _cross_differences(ds.z, ds.m, ds.y), alpha)
    return QuantileBand(np.arange(1, ds.n1 + 1), lower, closed, alpha, population, 1.0 - alpha)


def subsample_quantile_test(sub: Dataset, k: int, c: float, cfg: StatConfig, null_S) -> TestResult:
    """Test ``tau(k) <= c`` among treated units of a fully observed dataset.

    The ``n1 - k`` largest treated outcomes are sent to ``-inf``, which is
    the least favourable way for them to exceed ``c``.
    """
    imputed = sub.y - c * sub.z
    imputed[_top_treated_observed(sub.z, sub.m, sub.y, sub.n1 - k)] = -math.inf
    t = statistic(sub.z, imputed, cfg)
    return TestResult(tail_prob(null_S, t), t, "subsample", None, null_S.mode, info={"k": k, "c": c})


def band_observed_subsample(
    ds: Dataset,
    cfg: StatConfig,
    alpha: float,
    mech=Mechanism.MAR,
    null_S=None,
    population: str = TREATED,
) -> QuantileBand:
    """Simultaneous lower prediction limits for effects of observed units.

    Valid when missingness does not depend on treatment (``sharp``) or is
    at random (``mar``). ``population`` picks treated or control observed
    units; ``null_S`` must match the observed subdesign after any label
    switch.
    """
    mech = Mechanism.parse(mech)
    if mech not in (Mechanism.SHARP, Mechanism.MAR):
        raise UnsupportedError("observed-unit bands need sharp or mar missingness")
    if population == CONTROL:
        ds, _ = label_switch(ds)
        pop = CONTROL_OBSERVED
    elif population == TREATED:
        pop = TREATED_OBSERVED
    else:
        raise ConfigError(f"population must be {TREATED!r} or {CONTROL!r}")
    sub, _ = restrict_observed(ds)
    null_S = resolve_null(null_S, sub.n, sub.n1, cfg)

    def pvalue_at(k, c):
        return subsample_quantile_test(sub, k, c, cfg, null_S).p_value

    lower, closed = _invert_over_k(pvalue_at, sub.n1, _cross_differences(sub.z, sub.m, sub.y), alpha)
    return QuantileBand(np.arange(1, sub.n1 + 1), lower, closed, alpha, pop, 1.0 - alpha)


def _pool(bands, n_missing: int):
    lower = np.concatenate([b.lower for b in bands])
    closed = np.concatenate([b.closed for b in bands])
    # larger intervals first: smaller limit, and closed before open at a tie
    order = np.lexsort((~closed, lower))
    lower = np.concatenate([np.full(n_missing, -math.inf), lower[order]])
    closed = np.concatenate([np.zeros(n_missing, dtype=bool), closed[order]])
    return lower, closed


def combine_all_units_sharp(band_treated, band_control, n_missing: int, alpha: float) -> QuantileBand:
    """Pool treated and control bands into a band for all units.

    Each input must hold at level ``1 - alpha``; the pooled band holds at
    ``1 - 2 alpha``. Units without observed outcomes contribute
    uninformative intervals.
    """
    for band in (band_treated, band_control):
        if not math.isclose(band.alpha, alpha, rel_tol=0, abs_tol=1e-12):
            raise ConfigError(f"band at alpha={band.alpha} does not match alpha={alpha}")
    if n_missing < 0:
        raise ConfigError("n_missing must be nonnegative")
    lower, closed = _pool([band_treated, band_control], int(n_missing))
    k = np.arange(1, lower.size + 1)
    return QuantileBand(k, lower, closed, alpha, ALL, 1.0 - 2 * alpha)


@dataclass(frozen=True)
class DeltaHSpec:
    """Inputs of the extrapolation error from observed units to all units.

    ``k`` are target ranks among all ``n`` units and ``k_obs`` the ranks
    among the ``n_s`` observed units whose limits are reused for them.
    """

    n: int
    n_s: int
    k: tuple
    k_obs: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        ko = tuple(int(v) for v in self.k_obs)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "k_obs", ko)
        if not 0 <= self.n_s <= self.n:
            raise ConfigError("need 0 <= n_s <= n")
        if not k or len(k) != len(ko):
            raise ConfigError("k and k_obs must be nonempty and of equal length")
        if k[0] < 1 or k[-1] > self.n or any(a >= b for a, b in zip(k, k[1:])):
            raise ConfigError("target ranks must be strictly increasing within 1..n")
        if ko[0] < 0 or ko[-1] > self.n_s or any(a > b for a, b in zip(ko, ko[1:])):
            raise ConfigError("observed ranks must be nondecreasing within 0..n_s")


DELTA_H_MAX_J = 12
DELTA_H_MAX_N = 5000


def _colors(n, k):
    j = len(k)
    sizes = [k[0]] + [k[i + 1] - k[i] for i in range(j - 1)] + [n - k[-1]]
    return np.array(sizes, dtype=np.int64)


def _delta_h_exact(n, n_s, k, k_obs) -> float:
    sizes = _colors(n, k)
    J = len(k)
    # mass[s] = P(no failure so far, suffix count = s), colours processed J..1
    mass = np.zeros(n_s + 1)
    mass[0] = 1.0
    fail = 0.0
    pool = n
    for j in range(J, 0, -1):
        good = int(sizes[j])
        new = np.zeros(n_s + 1)
        for s in np.flatnonzero(mass):
            draws = n_s - s
            lo = max(0, draws - (pool - good))
            hi = min(good, draws)
            h = np.arange(lo, hi + 1)
            new[s + h] += mass[s] * hypergeom.pmf(h, pool, good, draws)
        limit = n_s - k_obs[j - 1]
        fail += new[limit + 1 :].sum()
        new[limit + 1 :] = 0.0
        mass = new
        pool -= good
    return float(min(1.0, fail))


def _delta_h_mc(n, n_s, k, k_obs, draws, seed) -> float:
    rng = np.random.default_rng(seed)
    counts = rng.multivariate_hypergeometric(_colors(n, k), n_s, size=draws)
    suffix = np.cumsum(counts[:, :0:-1], axis=1)[:, ::-1]
    limits = n_s - np.asarray(k_obs)
    return float((suffix > limits).any(axis=1).mean())


def delta_H(spec: DeltaHSpec, method: str = "exact", draws: int = 100_000, seed: int | None = None) -> float:
    """Probability that observed-unit ranks fail to bracket the target ranks.

    ``method="exact"`` runs a dynamic program over suffix sums of the
    multivariate hypergeometric colour counts (up to 12 targets and 5000
    units); ``"mc"`` samples the counts directly and needs ``seed``.
    """
    if method == "exact":
        if len(spec.k) > DELTA_H_MAX_J or spec.n > DELTA_H_MAX_N:
            raise CapacityError(
                f"exact computation supports at most {DELTA_H_MAX_J} targets and "
                f"{DELTA_H_MAX_N} units; use method='mc'"
            )
        return _delta_h_exact(spec.n, spec.n_s, spec.k, spec.k_obs)
    if method == "mc":
        if seed is None:
            raise ConfigError("Monte Carlo needs an explicit seed")
        return _delta_h_mc(spec.n, spec.n_s, spec.k, spec.k_obs, int(draws), seed)
    raise ConfigError(f"unknown method {method!r}")


def choose_observed_ranks(n: int, n_s: int, k, budget: float) -> tuple:
    """Greedy observed ranks keeping the extrapolation error within ``budget``.

    Going through targets in increasing order, each observed rank is made as
    large as possible subject to the error of the events considered so far
    staying at most ``budget``. Not guaranteed to be optimal.
    """
    k = tuple(int(v) for v in k)
    chosen = []
    for j in range(len(k)):
        lo = chosen[-1] if chosen else 0
        hi = n_s
        while lo < hi:
            mid = (lo + hi + 1) // 2
            trial = chosen + [mid] + [0] * (len(k) - j - 1)
            if _delta_h_exact(n, n_s, k, trial) <= budget:
                lo = mid
            else:
                hi = mid - 1
        chosen.append(lo)
    return tuple(chosen)


def observed_units_band(ds: Dataset, cfg: StatConfig, alpha: float, mech=Mechanism.MAR, null_t=None, null_c=None) -> QuantileBand:
    """Band for sorted effects of all observed units at level ``1 - 2 alpha``."""
    bt = band_observed_subsample(ds, cfg, alpha, mech, null_t, TREATED)
    bc = band_observed_subsample(ds, cfg, alpha, mech, null_c, CONTROL)
    band = combine_all_units_sharp(bt, bc, 0, alpha)
    band.population = "observed"
    return band


def band_all_units_mar(
    ds: Dataset,
    cfg: StatConfig,
    alpha: float,
    k,
    k_obs,
    null_t=None,
    null_c=None,
    observed_band: QuantileBand | None = None,
) -> QuantileBand:
    """Limits for chosen effect ranks among all units under missing at random.

    Target rank ``k[j]`` reuses the observed-unit limit at rank
    ``k_obs[j]`` (no limit when it is 0). The guarantee is
    ``1 - 2 alpha - delta_H``.
    """
    sub_n = ds.n11 + ds.n01
    spec = DeltaHSpec(ds.n, sub_n, tuple(k), tuple(k_obs))
    if observed_band is None:
        observed_band = observed_units_band(ds, cfg, alpha, Mechanism.MAR, null_t, null_c)
    lower = np.array([observed_band.lower[j - 1] if j > 0 else -math.inf for j in spec.k_obs])
    closed = np.array([bool(observed_band.closed[j - 1]) if j > 0 else False for j in spec.k_obs])
    try:
        dh = delta_H(spec, "exact")
    except CapacityError:
        dh = delta_H(spec, "mc", seed=0)
    return QuantileBand(np.array(spec.k), lower, closed, alpha, ALL, 1.0 - 2 * alpha - dh)
