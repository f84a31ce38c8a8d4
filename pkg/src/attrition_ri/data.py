"""Observed experimental data and missingness mechanisms.

A :class:`Dataset` holds the observed triple ``(z, m, y)`` for ``n`` units of a
completely randomized experiment: treatment indicator, observation indicator
and outcome (``NaN`` where the outcome is missing). The unit order is the
tie-breaking order used by every rank computation downstream.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


class Mechanism(enum.Enum):
    """Assumption linking missingness to treatment.

    ``MP`` means treatment can only make an outcome observed
    (``M(1) >= M(0)``), ``MN`` the reverse. ``SHARP`` means missingness does
    not depend on treatment and ``MAR`` means it is independent of the
    potential outcomes.
    """

    GENERAL = "general"
    MP = "mp"
    MN = "mn"
    SHARP = "sharp"
    MAR = "mar"

    @classmethod
    def parse(cls, value) -> "Mechanism":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise DataError(f"unknown mechanism {value!r}; expected one of {names}") from None

    def flipped(self) -> "Mechanism":
        """Mechanism seen after swapping treatment labels."""
        if self is Mechanism.MP:
            return Mechanism.MN
        if self is Mechanism.MN:
            return Mechanism.MP
        return self


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed data of a two-arm completely randomized experiment.

    Parameters
    ----------
    z : ndarray of int8
        Treatment indicators.
    m : ndarray of int8
        Observation indicators, 1 when the outcome was recorded.
    y : ndarray of float
        Outcomes, ``NaN`` exactly where ``m == 0``.

    Use :meth:`from_arrays` to build one from loose inputs; it validates and
    freezes the arrays.
    """

    z: np.ndarray
    m: np.ndarray
    y: np.ndarray

    @classmethod
    def from_arrays(cls, z, y, m=None) -> "Dataset":
        z = np.asarray(z)
        y = np.asarray(y, dtype=float)
        if z.ndim != 1 or y.shape != z.shape:
            raise DataError("z and y must be one-dimensional and of equal length")
        if not np.isin(z, (0, 1)).all():
            raise DataError("treatment indicators must be 0 or 1")
        present = ~np.isnan(y)
        if m is None:
            m = present.astype(np.int8)
        else:
            m = np.asarray(m)
            if m.shape != z.shape or not np.isin(m, (0, 1)).all():
                raise DataError("observation indicators must be 0 or 1 and match z in length")
            bad = np.flatnonzero((m == 1) != present)
            if bad.size:
                raise DataError(
                    f"unit {bad[0]}: outcome presence disagrees with m={int(m[bad[0]])}"
                )
        if np.isinf(y).any():
            raise DataError("observed outcomes must be finite")
        n1 = int(z.sum())
        if n1 == 0 or n1 == z.size:
            raise DataError("degenerate design: both arms need at least one unit")
        return cls(
            _readonly(z.astype(np.int8)),
            _readonly(m.astype(np.int8)),
            _readonly(np.where(m == 1, y, np.nan)),
        )

    @property
    def n(self) -> int:
        return int(self.z.size)

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def n11(self) -> int:
        return int((self.z & self.m).sum())

    @property
    def n10(self) -> int:
        return self.n1 - self.n11

    @property
    def n01(self) -> int:
        return int(((1 - self.z) & self.m).sum())

    @property
    def n00(self) -> int:
        return self.n0 - self.n01

    def __repr__(self) -> str:
        return (
            f"Dataset(n={self.n}, n11={self.n11}, n10={self.n10}, "
            f"n01={self.n01}, n00={self.n00})"
        )


_MISSING = {"", "na"}


def load_dataset(source, shuffle_seed: int | None = None) -> Dataset:
    """Parse a CSV with header ``z,y`` or ``z,m,y``.

    Parameters
    ----------
    source : bytes, str, path-like or binary file object
        CSV content. Missing outcomes are empty fields or ``NA`` in any case.
    shuffle_seed : int, optional
        If given, units are permuted once with this seed before indices are
        assigned, so index tie-breaking is random but reproducible.

    Raises
    ------
    DataError
        On malformed rows (with line number), inconsistent ``m``/``y`` or a
        design without treated or control units.
    """
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    elif hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    else:
        with open(source, "rb") as fh:
            text = fh.read().decode("utf-8")
    text = text.lstrip("﻿")

    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise DataError("line 1: empty input") from None
    if header not in (["z", "y"], ["z", "m", "y"]):
        raise DataError(f"line 1: header must be 'z,y' or 'z,m,y', got {','.join(header)!r}")
    has_m = len(header) == 3

    zs, ms, ys = [], [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        fields = [f.strip() for f in row]
        if fields[0] not in ("0", "1"):
            raise DataError(f"line {line}: z must be 0 or 1, got {fields[0]!r}")
        yfield = fields[-1]
        if yfield.lower() in _MISSING:
            yval = math.nan
        else:
            try:
                yval = float(yfield)
            except ValueError:
                raise DataError(f"line {line}: cannot parse outcome {yfield!r}") from None
            if not math.isfinite(yval):
                raise DataError(f"line {line}: outcome must be finite, got {yfield!r}")
        if has_m:
            if fields[1] not in ("0", "1"):
                raise DataError(f"line {line}: m must be 0 or 1, got {fields[1]!r}")
            mval = int(fields[1])
            if mval != (0 if math.isnan(yval) else 1):
                raise DataError(f"line {line}: m={mval} inconsistent with outcome field {yfield!r}")
        else:
            mval = 0 if math.isnan(yval) else 1
        zs.append(int(fields[0]))
        ms.append(mval)
        ys.append(yval)

    if not zs:
        raise DataError("no data rows")
    z = np.array(zs, dtype=np.int8)
    m = np.array(ms, dtype=np.int8)
    y = np.array(ys, dtype=float)
    if shuffle_seed is not None:
        perm = np.random.default_rng(shuffle_seed).permutation(z.size)
        z, m, y = z[perm], m[perm], y[perm]
    return Dataset.from_arrays(z, y, m)
