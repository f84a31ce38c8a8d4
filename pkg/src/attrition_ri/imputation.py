"""Worst-case completion of control outcomes under a hypothesized effect.

For each mechanism the unknown (composite) control outcomes are filled with
the feasible values that make the rank statistic smallest, which gives a
p-value valid whatever the missing values truly are. The composite constant
``b`` stands for outcomes that are never observed under control.
"""
from __future__ import annotations

import math

import numpy as np

from .data import Dataset, Mechanism
from .errors import ConfigError, DataError, UnsupportedError


def effect_vector(delta, n: int) -> np.ndarray:
    """Broadcast a scalar or length-``n`` effect to a finite float array."""
    d = np.asarray(delta, dtype=float)
    if d.ndim == 0:
        d = np.full(n, float(d))
    if d.shape != (n,):
        raise ConfigError(f"effect vector has length {d.size}, expected {n}")
    if not np.isfinite(d).all():
        raise ConfigError("hypothesized effects must be finite")
    return d


def _check_b(b) -> float:
    b = float(b)
    if math.isnan(b):
        raise ConfigError("composite constant b must not be NaN")
    return b


def recommended_b(mech) -> float:
    """Composite constant that maximizes power for ``mech``."""
    mech = Mechanism.parse(mech)
    if mech is Mechanism.MAR:
        raise UnsupportedError("missing-at-random data is tested on the observed subsample")
    return -math.inf if mech is Mechanism.MN else math.inf


def worst_case(ds: Dataset, delta, mech, b=None) -> np.ndarray:
    """Least favourable control outcomes, as an extended-real float array.

    Parameters
    ----------
    ds : Dataset
    delta : float or array_like
        Hypothesized individual effects; only treated observed entries
        affect the result.
    mech : Mechanism or str
        Any mechanism except ``MAR``.
    b : float, optional
        Composite constant, ``inf``/``-inf`` allowed. Defaults to
        :func:`recommended_b`.

    Returns
    -------
    ndarray
        Per-unit values, by (treated, observed) cell:

        ======= ============= ===== ===== =====
        mech    (1,1)         (1,0) (0,1) (0,0)
        ======= ============= ===== ===== =====
        general min(y-d, b)   -inf  y     b
        mp      min(y-d, b)   b     y     b
        mn      y-d           -inf  y     b
        sharp   y-d           b     y     b
        ======= ============= ===== ===== =====
    """
    mech = Mechanism.parse(mech)
    if mech is Mechanism.MAR:
        raise UnsupportedError("worst-case imputation is not defined under MAR; use restrict_observed")
    b = recommended_b(mech) if b is None else _check_b(b)
    d = effect_vector(delta, ds.n)
    treated = ds.z == 1
    obs = ds.m == 1
    to = treated & obs
    out = np.full(ds.n, b)
    out[~treated & obs] = ds.y[~treated & obs]
    shifted = ds.y[to] - d[to]
    if mech in (Mechanism.GENERAL, Mechanism.MP):
        out[to] = np.minimum(shifted, b)
    else:
        out[to] = shifted
    if mech in (Mechanism.GENERAL, Mechanism.MN):
        out[treated & ~obs] = -math.inf
    return out


def restrict_observed(ds: Dataset) -> tuple[Dataset, np.ndarray]:
    """Sub-dataset of units with observed outcomes and their original indices.

    Conditional on which units are observed, treatment among them is again a
    completely randomized design.
    """
    if ds.n11 == 0 or ds.n01 == 0:
        raise DataError(
            f"degenerate observed subdesign: {ds.n11} treated and {ds.n01} control outcomes observed"
        )
    idx = np.flatnonzero(ds.m == 1)
    return Dataset.from_arrays(ds.z[idx], ds.y[idx], ds.m[idx]), idx
