"""Randomization tests of sharp and bounded effect hypotheses with attrition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import hypergeom

from .data import Dataset, Mechanism
from .errors import ConfigError, UnsupportedError
from .imputation import effect_vector, recommended_b, restrict_observed, worst_case
from .inversion import lower_limit
from .nulldist import EXACT, DesignSpec, NullDistribution, build_null, tail_prob
from .rankstats import MWU, StatConfig, phi_table, statistic


@dataclass
class TestResult:
    """Outcome of a one-sided (upper tail) randomization test."""

    __test__ = False  # keep pytest from collecting this class

    p_value: float
    statistic: float
    mechanism: str
    b: float | None
    null_mode: str
    side: str = "upper"
    info: dict = field(default_factory=dict)


@dataclass
class TwoStepTrace:
    """Intermediate quantities of the two-step test.

    ``units`` lists the treated observed units (original indices) in the
    order of ``A``, ``B`` and ``D``; ``trimmed`` are the units set to
    ``+inf``.
    """

    beta: float
    m_hat: int
    m_lower: int
    units: np.ndarray
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    trimmed: np.ndarray


def resolve_null(null, n: int, n1: int, cfg: StatConfig) -> NullDistribution:
    """Return ``null`` after checking it fits, or build the exact one."""
    if null is None:
        return build_null(DesignSpec(n, n1), cfg, EXACT)
    null.check(n, n1, cfg)
    return null


def label_switch(ds: Dataset, delta=0.0) -> tuple[Dataset, np.ndarray]:
    """Swap treatment labels and negate outcomes.

    Individual effects are unchanged by this map, while a treatment that
    encourages observation becomes one that discourages it.
    """
    d = effect_vector(delta, ds.n)
    return Dataset.from_arrays(1 - ds.z, -ds.y, ds.m), d


def sharp_test(ds: Dataset, delta, mech, cfg: StatConfig, b=None, null=None) -> TestResult:
    """Worst-case p-value for ``tau == delta`` (also valid for ``tau <= delta``).

    ``null`` defaults to the exact distribution for the data's design.
    """
    mech = Mechanism.parse(mech)
    b = recommended_b(mech) if b is None else float(b)
    null = resolve_null(null, ds.n, ds.n1, cfg)
    t = statistic(ds.z, worst_case(ds, delta, mech, b), cfg)
    return TestResult(tail_prob(null, t), t, mech.value, b, null.mode)


def sharp_test_subsample(ds: Dataset, delta, cfg: StatConfig, null_S=None) -> TestResult:
    """Test on the units with observed outcomes only.

    Valid when missingness does not depend on treatment, in particular under
    missing at random, because the observed units then form a completely
    randomized subexperiment.
    """
    d = effect_vector(delta, ds.n)
    sub, idx = restrict_observed(ds)
    null_S = resolve_null(null_S, sub.n, sub.n1, cfg)
    t = statistic(sub.z, sub.y - d[idx] * sub.z, cfg)
    return TestResult(tail_prob(null_S, t), t, "subsample", None, null_S.mode)


def upper_conf_total_m0(n: int, n0: int, n01: int, beta: float) -> int:
    """Upper ``1 - beta`` confidence bound on the number of units observed under control.

    Inverts the hypergeometric law of the observed-control count ``n01``
    among ``n0`` randomly chosen controls.
    """
    if not (0 <= n01 <= n0 <= n):
        raise ConfigError(f"need 0 <= n01 <= n0 <= n, got n={n}, n0={n0}, n01={n01}")
    if not 0 < beta < 1:
        raise ConfigError("beta must lie in (0, 1)")
    totals = np.arange(n01, n - (n0 - n01) + 1)
    cdf = hypergeom.cdf(n01, n, totals, n0)
    ok = totals[cdf >= beta]
    return int(ok.max())


def two_step_test(
    ds: Dataset,
    delta,
    cfg: StatConfig,
    alpha: float,
    beta: float | None = None,
    null=None,
    mech=Mechanism.MP,
    m_hat: int | None = None,
) -> tuple[TestResult, TwoStepTrace]:
    """Two-step test under monotone missingness with a Mann-Whitney statistic.

    Step one bounds, with confidence ``1 - beta``, how many units would be
    observed under control; this forces some treated observed units to have
    an unobservable control outcome, and the least informative of them are
    set to ``+inf`` before testing. The final p-value adds ``beta``.

    Parameters
    ----------
    mech : Mechanism
        ``MP`` directly, or ``MN`` via :func:`label_switch` (the null must
        then match the switched design ``(n, n0)``).
    m_hat : int, optional
        Override the step-one bound, e.g. for diagnostics.
    """
    mech = Mechanism.parse(mech)
    if cfg.family != MWU:
        raise UnsupportedError("the two-step test needs a Mann-Whitney statistic")
    beta = alpha / 2 if beta is None else beta
    if not 0 < beta < alpha:
        raise ConfigError(f"need 0 < beta < alpha, got beta={beta}, alpha={alpha}")
    d = effect_vector(delta, ds.n)
    if mech is Mechanism.MN:
        ds, d = label_switch(ds, d)
    elif mech is not Mechanism.MP:
        raise UnsupportedError("the two-step test requires monotone missingness (mp or mn)")
    null = resolve_null(null, ds.n, ds.n1, cfg)

    if m_hat is None:
        m_hat = upper_conf_total_m0(ds.n, ds.n0, ds.n01, beta)
    m_lower = max(0, ds.n11 + ds.n01 - int(m_hat))

    z, m, y = ds.z, ds.m, ds.y
    units = np.flatnonzero((z == 1) & (m == 1))
    ctrl_obs = np.flatnonzero((z == 0) & (m == 1))
    ctrl_mis = np.flatnonzero((z == 0) & (m == 0))
    yc = y[ctrl_obs]
    shifted = y[units] - d[units]
    # A: controls below +inf; B: controls below y - d, ties broken by index
    A = ctrl_obs.size + np.searchsorted(ctrl_mis, units, side="left")
    B = np.array(
        [np.sum((yc < v) | ((yc == v) & (ctrl_obs < i))) for i, v in zip(units, shifted)],
        dtype=np.int64,
    )
    phi = phi_table(cfg, ds.n)
    D = phi[A] - phi[B]
    order = np.argsort(D, kind="stable")
    trimmed = np.sort(units[order[:m_lower]])

    imputed = np.full(ds.n, math.inf)
    imputed[ctrl_obs] = yc
    imputed[units] = shifted
    imputed[trimmed] = math.inf
    t = statistic(z, imputed, cfg)
    p = min(1.0, tail_prob(null, t) + beta)
    info = {"label_switched": mech is Mechanism.MN, "beta": beta, "m_hat": int(m_hat), "m_lower": m_lower}
    result = TestResult(p, t, mech.value, math.inf, null.mode, info=info)
    trace = TwoStepTrace(beta, int(m_hat), m_lower, units, A, B, D, trimmed)
    return result, trace


@dataclass
class ConstantEffectCI:
    """Confidence interval for a constant additive effect."""

    lower: float
    upper: float
    lower_closed: bool
    upper_closed: bool
    alpha: float
    sides: str

    @property
    def level(self) -> float:
        return 1.0 - self.alpha


def _cross_differences(ds: Dataset, b: float | None) -> np.ndarray:
    treated = ds.y[(ds.z == 1) & (ds.m == 1)]
    control = ds.y[(ds.z == 0) & (ds.m == 1)]
    diffs = (treated[:, None] - control[None, :]).ravel()
    if b is not None and math.isfinite(b):
        diffs = np.concatenate([diffs, treated - b])
    return diffs


def _lower_confidence_limit(ds, mech, cfg, alpha, null, b):
    if mech is Mechanism.MAR:
        sub, _ = restrict_observed(ds)
        null_S = resolve_null(null, sub.n, sub.n1, cfg)
        pfun = lambda d: sharp_test_subsample(ds, d, cfg, null_S).p_value
        bps = _cross_differences(ds, None)
    else:
        null = resolve_null(null, ds.n, ds.n1, cfg)
        pfun = lambda d: sharp_test(ds, d, mech, cfg, b, null).p_value
        bps = _cross_differences(ds, recommended_b(mech) if b is None else b)
    limit, closed, _ = lower_limit(pfun, bps, alpha)
    return limit, closed


def invert_constant_ci(
    ds: Dataset,
    mech,
    cfg: StatConfig,
    alpha: float,
    null=None,
    sides: str = "two-sided",
    b=None,
) -> ConstantEffectCI:
    """Confidence interval for a constant effect by inverting worst-case tests.

    The lower limit inverts tests of ``tau <= d``; the upper limit applies
    the same procedure to negated outcomes, which tests ``tau >= d``. A
    two-sided interval spends ``alpha / 2`` on each side. Under ``MAR`` the
    observed-subsample test is inverted.

    Parameters
    ----------
    sides : {"two-sided", "lower", "upper"}
    null : NullDistribution, optional
        Must match the design used (the observed subsample under MAR).
    """
    mech = Mechanism.parse(mech)
    if sides not in ("two-sided", "lower", "upper"):
        raise ConfigError(f"unknown sides {sides!r}")
    side_alpha = alpha / 2 if sides == "two-sided" else alpha
    lo, lo_closed, hi, hi_closed = -math.inf, False, math.inf, False
    if sides in ("two-sided", "lower"):
        lo, lo_closed = _lower_confidence_limit(ds, mech, cfg, side_alpha, null, b)
    if sides in ("two-sided", "upper"):
        negated = Dataset.from_arrays(ds.z, -ds.y, ds.m)
        neg_lo, hi_closed = _lower_confidence_limit(negated, mech, cfg, side_alpha, null, b)
        hi = -neg_lo
    return ConstantEffectCI(lo, hi, lo_closed, hi_closed, alpha, sides)
