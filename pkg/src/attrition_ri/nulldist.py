"""Randomization distribution of rank statistics under complete randomization.

Rank statistics with index tie-breaking are distribution-free: their law over
assignments depends only on ``(n, n1)`` and the statistic, so one table built
on the reference outcomes ``1..n`` serves every dataset of that shape.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError
from .rankstats import (
    IDENTITY,
    MWU,
    POWER,
    RANKSUM,
    STEPHENSON,
    TABLE,
    StatConfig,
    phi_exact_table,
    phi_table,
)

EXACT = "exact"
MC = "mc"
AUTO = "auto"

EXACT_CAP = 2_000_000
DEFAULT_DRAWS = 100_000
MC_CHUNK = 4096
# relative slack when comparing MC values (float sums) with an observed value
MC_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class DesignSpec:
    """Completely randomized design with ``n1`` of ``n`` units treated."""

    n: int
    n1: int

    def __post_init__(self):
        if not 1 <= self.n1 <= self.n - 1:
            raise ConfigError(f"design needs 1 <= n1 <= n-1, got n={self.n}, n1={self.n1}")

    @property
    def n_assignments(self) -> int:
        return math.comb(self.n, self.n1)


@dataclass(frozen=True, eq=False)
class NullDistribution:
    """Sorted statistic values over assignments (exact) or random draws (MC)."""

    design: DesignSpec
    cfg: StatConfig
    mode: str
    values: np.ndarray
    draws: int | None = None
    seed: int | None = None

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def min_p(self) -> float:
        """Smallest p-value this distribution can return."""
        return 1.0 / self.size if self.mode == EXACT else 1.0 / (self.size + 1)

    def check(self, n: int, n1: int, cfg: StatConfig) -> None:
        if (self.design.n, self.design.n1) != (n, n1):
            raise ConfigError(
                f"null built for design (n={self.design.n}, n1={self.design.n1}) "
                f"but data has (n={n}, n1={n1})"
            )
        if self.cfg != cfg:
            raise ConfigError(f"null built for {self.cfg.label}, statistic uses {cfg.label}")


def revolving_door(n: int, t: int):
    """Yield ``(out, in)`` swaps visiting every ``t``-subset of ``range(n)`` once.

    Starts from ``{0, ..., t-1}``; each step removes ``out`` and adds ``in``
    (Knuth's revolving-door order).
    """
    if not 1 <= t <= n - 1:
        return
    if t == 1:
        for a in range(n - 1):
            yield a, a + 1
        return
    c = [None] + list(range(t)) + [n]
    odd = t % 2 == 1
    while True:
        if odd:
            if c[1] + 1 < c[2]:
                yield c[1], c[1] + 1
                c[1] += 1
                continue
            step = 4
        else:
            if c[1] > 0:
                yield c[1], c[1] - 1
                c[1] -= 1
                continue
            step = 5
        j = 2
        while True:
            if step == 4:
                if c[j] >= j:
                    out = c[j]
                    c[j] = c[j - 1]
                    c[j - 1] = j - 2
                    yield out, j - 2
                    break
                j += 1
                step = 5
            if c[j] + 1 < c[j + 1]:
                out = j - 2
                c[j - 1] = c[j]
                c[j] += 1
                yield out, c[j]
                break
            j += 1
            if j > t:
                return
            step = 4


def _exact_ranksum(n: int, t: int, phi: tuple) -> list:
    acc = sum(phi[p + 1] for p in range(t))
    out = [acc]
    push = out.append
    for a, b in revolving_door(n, t):
        acc += phi[b + 1] - phi[a + 1]
        push(acc)
    return out


def _exact_mwu(n: int, t: int, phi: tuple) -> list:
    # below[p] = number of controls ranked below position p
    treated = [True] * t + [False] * (n - t)
    below = [0] * t + [p - t for p in range(t, n)]
    acc = t * phi[0]
    out = [acc]
    push = out.append
    for a, b in revolving_door(n, t):
        acc -= phi[below[a]]
        treated[a] = False
        if a < b:
            for p in range(a + 1, b + 1):
                if treated[p]:
                    acc += phi[below[p] + 1] - phi[below[p]]
                below[p] += 1
        else:
            for p in range(b + 1, a + 1):
                if treated[p]:
                    acc += phi[below[p] - 1] - phi[below[p]]
                below[p] -= 1
        treated[b] = True
        acc += phi[below[b]]
        push(acc)
    return out


def _exact_values(design: DesignSpec, cfg: StatConfig) -> np.ndarray:
    ints, denom = phi_exact_table(cfg, design.n)
    run = _exact_ranksum if cfg.family == RANKSUM else _exact_mwu
    sums = run(design.n, design.n1, ints)
    if denom == 1:
        vals = np.array([float(v) for v in sums])
    else:
        vals = np.array([v / denom for v in sums])
    vals.sort()
    return vals


def _mc_chunk(design: DesignSpec, phi: np.ndarray, family: str, seed: int, chunk: int, size: int):
    rng = np.random.default_rng([seed, chunk])
    keys = rng.random((size, design.n))
    kth = np.partition(keys, design.n1 - 1, axis=1)[:, design.n1 - 1 : design.n1]
    mask = keys <= kth
    if family == RANKSUM:
        return mask @ phi[1:]
    below = np.arange(design.n) - np.cumsum(mask, axis=1) + 1
    return np.where(mask, phi[np.clip(below, 0, design.n)], 0.0).sum(axis=1)


def _mc_values(design, cfg, draws, seed, threads) -> np.ndarray:
    phi = phi_table(cfg, design.n)
    sizes = [min(MC_CHUNK, draws - start) for start in range(0, draws, MC_CHUNK)]
    jobs = [(design, phi, cfg.family, seed, k, size) for k, size in enumerate(sizes)]
    if threads and threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _mc_chunk(*a), jobs))
    else:
        parts = [_mc_chunk(*a) for a in jobs]
    vals = np.concatenate(parts)
    vals.sort()
    return vals


def build_null(
    design: DesignSpec,
    cfg: StatConfig,
    mode: str = AUTO,
    draws: int = DEFAULT_DRAWS,
    seed: int | None = None,
    threads: int | None = None,
    cap: int = EXACT_CAP,
) -> NullDistribution:
    """Tabulate the randomization distribution of a statistic.

    Parameters
    ----------
    design : DesignSpec
    cfg : StatConfig
    mode : {"auto", "exact", "mc"}
        ``auto`` enumerates when there are at most ``cap`` assignments and
        falls back to Monte Carlo otherwise.
    draws : int
        Number of Monte Carlo assignments.
    seed : int, optional
        Required whenever Monte Carlo is used. Draws are generated in fixed
        chunks seeded by ``(seed, chunk index)``, so results do not depend
        on ``threads``.

    Returns
    -------
    NullDistribution
    """
    if not isinstance(design, DesignSpec):
        design = DesignSpec(*design)
    if mode not in (AUTO, EXACT, MC):
        raise ConfigError(f"unknown null mode {mode!r}")
    if mode == AUTO:
        mode = EXACT if design.n_assignments <= cap else MC
    if mode == EXACT:
        if design.n_assignments > cap:
            raise CapacityError(
                f"exact enumeration of C({design.n},{design.n1}) = {design.n_assignments} "
                f"assignments exceeds the cap of {cap}; use Monte Carlo"
            )
        return NullDistribution(design, cfg, EXACT, _readonly(_exact_values(design, cfg)))
    if seed is None:
        raise ConfigError("Monte Carlo null needs an explicit seed")
    if draws < 1:
        raise ConfigError("draws must be positive")
    vals = _mc_values(design, cfg, int(draws), int(seed), threads)
    return NullDistribution(design, cfg, MC, _readonly(vals), int(draws), int(seed))


def _readonly(a):
    a.setflags(write=False)
    return a


def tail_prob(dist: NullDistribution, t: float) -> float:
    """Randomization p-value ``P(T >= t)``.

    Exact mode returns the fraction of assignments at or above ``t``. Monte
    Carlo mode returns ``(1 + #{draws >= t}) / (B + 1)``, comparing with a
    tiny relative slack so float summation noise can only raise the p-value.
    """
    vals = dist.values
    if dist.mode == EXACT:
        count = vals.size - np.searchsorted(vals, t, side="left")
        return count / vals.size
    thresh = t - MC_TIE_RTOL * max(1.0, abs(t))
    count = vals.size - np.searchsorted(vals, thresh, side="left")
    return (1 + count) / (vals.size + 1)


# cache file layout: 32-byte little-endian header then float64 values
_MAGIC = b"ARNL"
_HEADER = struct.Struct("<4sIIBBHBxxxIq")
_FAMILY_CODES = {RANKSUM: 0, MWU: 1}
_TRANSFORM_CODES = {IDENTITY: 0, STEPHENSON: 1, POWER: 2, TABLE: 3}
_MODE_CODES = {EXACT: 0, MC: 1}


def save_null(dist: NullDistribution, path) -> None:
    """Write ``dist`` to a binary cache file."""
    header = _HEADER.pack(
        _MAGIC,
        dist.design.n,
        dist.design.n1,
        _FAMILY_CODES[dist.cfg.family],
        _TRANSFORM_CODES[dist.cfg.transform],
        dist.cfg.s or 0,
        _MODE_CODES[dist.mode],
        dist.draws or 0,
        dist.seed if dist.seed is not None else -1,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(dist.values, dtype="<f8").tobytes())


def load_null(path, cfg: StatConfig | None = None) -> NullDistribution:
    """Read a cache file written by :func:`save_null`.

    ``cfg`` is required for table-scored statistics, whose scores are not
    stored; otherwise, if given, it must match the stored configuration.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigError("null cache file is truncated")
    magic, n, n1, fam, tr, s, mode, draws, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ConfigError("not a null cache file")
    family = {v: k for k, v in _FAMILY_CODES.items()}[fam]
    transform = {v: k for k, v in _TRANSFORM_CODES.items()}[tr]
    if transform == TABLE:
        if cfg is None:
            raise ConfigError("table-scored null needs the StatConfig to load")
        stored = cfg
    else:
        stored = StatConfig(family, transform, s or None)
        if cfg is not None and cfg != stored:
            raise ConfigError(f"cache holds {stored.label}, requested {cfg.label}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    mode_name = {v: k for k, v in _MODE_CODES.items()}[mode]
    expected = math.comb(n, n1) if mode_name == EXACT else draws
    if vals.size != expected:
        raise ConfigError(f"cache holds {vals.size} values, expected {expected}")
    return NullDistribution(
        DesignSpec(n, n1),
        stored,
        mode_name,
        _readonly(vals),
        draws if mode_name == MC else None,
        seed if mode_name == MC else None,
    )
