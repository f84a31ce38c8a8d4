"""Rank statistics with index tie-breaking.

Outcome vectors are float arrays in which ``-inf`` and ``+inf`` stand for the
extended-real sentinels used by worst-case imputation. Ties, including ties
between equal infinities, are broken by position: of two equal values the one
with the larger index ranks higher.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConfigError

RANKSUM = "ranksum"
MWU = "mwu"

IDENTITY = "identity"
STEPHENSON = "stephenson"
POWER = "power"
TABLE = "table"

MAX_S = 50


@dataclass(frozen=True)
class StatConfig:
    """Statistic family plus score transform ``phi``.

    ``family`` is ``"ranksum"`` (sum of ``phi(rank)`` over treated units) or
    ``"mwu"`` (sum over treated units of ``phi`` applied to the number of
    controls ranked below). ``transform`` is ``"identity"``,
    ``"stephenson"`` (``C(r-1, s-1)``, rank-sum only), ``"power"``
    (``r**(s-1)``, Mann-Whitney only) or ``"table"`` with explicit
    nondecreasing scores ``table[r]``.
    """

    family: str = RANKSUM
    transform: str = IDENTITY
    s: int | None = None
    table: tuple | None = None

    def __post_init__(self):
        if self.family not in (RANKSUM, MWU):
            raise ConfigError(f"unknown statistic family {self.family!r}")
        if self.transform == STEPHENSON and self.family != RANKSUM:
            raise ConfigError("the Stephenson transform applies to rank-sum statistics only")
        if self.transform == POWER and self.family != MWU:
            raise ConfigError("the power transform applies to Mann-Whitney statistics only")
        if self.transform in (STEPHENSON, POWER):
            if self.s is None or not 2 <= int(self.s) <= MAX_S:
                raise ConfigError(f"s must be an integer in [2, {MAX_S}], got {self.s!r}")
        elif self.transform == IDENTITY:
            if self.s is not None:
                raise ConfigError("identity transform takes no s")
        elif self.transform == TABLE:
            if self.table is None or len(self.table) == 0:
                raise ConfigError("table transform needs explicit scores")
            t = np.asarray(self.table, dtype=float)
            if not np.isfinite(t).all() or (np.diff(t) < 0).any():
                raise ConfigError("table scores must be finite and nondecreasing")
        else:
            raise ConfigError(f"unknown transform {self.transform!r}")

    @classmethod
    def wilcoxon(cls) -> "StatConfig":
        return cls(RANKSUM, IDENTITY)

    @classmethod
    def stephenson(cls, s: int) -> "StatConfig":
        return cls(RANKSUM, STEPHENSON, int(s))

    @classmethod
    def mann_whitney(cls) -> "StatConfig":
        return cls(MWU, IDENTITY)

    @classmethod
    def mwu_power(cls, s: int) -> "StatConfig":
        return cls(MWU, POWER, int(s))

    @classmethod
    def from_table(cls, family: str, scores) -> "StatConfig":
        return cls(family, TABLE, None, tuple(float(v) for v in scores))

    @property
    def label(self) -> str:
        if self.transform == IDENTITY:
            return "wilcoxon" if self.family == RANKSUM else "mwu"
        if self.transform == TABLE:
            return f"{self.family}-table"
        return f"{self.family}-{self.transform}{self.s}"


def _phi_exact(cfg: StatConfig, r: int):
    """Score of rank or count ``r`` as an exact Python number."""
    if cfg.transform == IDENTITY:
        return r
    if cfg.transform == STEPHENSON:
        return math.comb(r - 1, cfg.s - 1) if r >= cfg.s else 0
    if cfg.transform == POWER:
        return r ** (cfg.s - 1)
    return Fraction(cfg.table[r])


@lru_cache(maxsize=256)
def _tables(cfg: StatConfig, n: int):
    if cfg.transform == TABLE and len(cfg.table) < n + 1:
        raise ConfigError(f"score table needs {n + 1} entries for n={n}, has {len(cfg.table)}")
    # round once to double, then keep the doubles' exact values as scaled integers
    doubles = [float(_phi_exact(cfg, r)) for r in range(n + 1)]
    fracs = [Fraction(v) for v in doubles]
    denom = max(f.denominator for f in fracs)
    ints = tuple(int(f * denom) for f in fracs)
    arr = np.array(doubles)
    arr.setflags(write=False)
    return arr, ints, denom


def phi_table(cfg: StatConfig, n: int) -> np.ndarray:
    """Scores ``phi(r)`` for ``r = 0..n`` as a read-only float array."""
    return _tables(cfg, n)[0]


def phi_exact_table(cfg: StatConfig, n: int) -> tuple[tuple[int, ...], int]:
    """Scores as integers over a common power-of-two denominator.

    Sums of these integers divided by the denominator reproduce the correctly
    rounded double sum, which is what :func:`statistic` returns.
    """
    _, ints, denom = _tables(cfg, n)
    return ints, denom


def psi(i: int, j: int, yi: float, yj: float) -> int:
    """Pairwise comparison ``1{yi > yj} + 1{yi == yj} * 1{i >= j}``."""
    if i == j:
        raise ConfigError("psi compares two distinct units")
    if yi > yj:
        return 1
    if yi == yj and i > j:
        return 1
    return 0


def _order(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.isnan(y).any():
        raise ConfigError("outcome vector contains NaN; impute missing values first")
    return np.lexsort((np.arange(y.size), y))


def ranks(y) -> np.ndarray:
    """Ranks ``1..n`` with ties broken by index."""
    order = _order(y)
    r = np.empty(order.size, dtype=np.int64)
    r[order] = np.arange(1, order.size + 1)
    return r


def treated_scores_args(z, y, cfg: StatConfig) -> np.ndarray:
    """Integer arguments fed to ``phi`` for the treated units.

    Rank-sum uses the overall rank; Mann-Whitney uses the number of controls
    ranked below the unit.
    """
    z = np.asarray(z).astype(bool)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape:
        raise ConfigError("z and y differ in length")
    pos = np.flatnonzero(z[_order(y)])
    if cfg.family == RANKSUM:
        return pos + 1
    return pos - np.arange(pos.size)


def statistic(z, y, cfg: StatConfig) -> float:
    """Rank-sum or Mann-Whitney statistic of treated units.

    Parameters
    ----------
    z : array_like of {0, 1}
    y : array_like of float
        Extended-real outcomes; ``-inf``/``+inf`` allowed, ``NaN`` not.
    cfg : StatConfig

    Returns
    -------
    float
        Correctly rounded sum of the treated scores, so the value does not
        depend on summation order.
    """
    y = np.asarray(y, dtype=float)
    args = treated_scores_args(z, y, cfg)
    table = phi_table(cfg, y.size)
    return math.fsum(table[args])
