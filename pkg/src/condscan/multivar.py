"""Conditional correlation matrices and the mutual-independence scan."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._exact import dd_box_sums, dd_prefix
from .grid import (BoundedGrid, ScanReport, UpperTails, _axis_intervals, _data_origin,
                   quantile_cuts, scan)
from .moments import (CENTERED_VAR_RTOL, RAW_COR_OVERSHOOT, RAW_VAR_RTOL, PairedSample,
                      Rectangle, _clamp)

DEFAULT_BUDGET = 50_000


@dataclass(frozen=True, eq=False)
class MultiSample:
    """``d >= 2`` aligned columns of finite observations, stored as ``(n, d)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] < 2:
            raise ValueError("need an (n, d) array with d >= 2")
        if data.shape[0] < 2:
            raise ValueError("need at least 2 observations")
        if not np.isfinite(data).all():
            raise ValueError("sample values must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_columns(cls, *columns) -> "MultiSample":
        lengths = {len(c) for c in columns}
        if len(lengths) != 1:
            raise ValueError("columns must have equal lengths")
        return cls(np.column_stack(columns))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.data[:, k]


@dataclass(frozen=True, eq=False)
class CondCorrMatrix:
    matrix: np.ndarray
    rect: Rectangle
    m: int

    @property
    def empty(self) -> bool:
        """True when no observation fell in the rectangle (matrix is identity)."""
        return self.m == 0

    def max_off_diagonal(self) -> float:
        d = self.matrix.shape[0]
        off = np.abs(self.matrix[~np.eye(d, dtype=bool)])
        return float(off.max()) if off.size else 0.0


def cond_corr_matrix(sample: MultiSample, rect: Rectangle) -> CondCorrMatrix:
    """Pairwise conditional correlations on the rows inside ``rect``.

    Rows are filtered directly and each column is centred on its subsample
    mean before the cross products. A column that is constant on the subsample
    gets an identity row and column.
    """
    if rect.dim != sample.d:
        raise ValueError(f"rectangle has dimension {rect.dim}, sample has {sample.d}")
    rows = sample.data[rect.contains(sample.data)]
    m = rows.shape[0]
    d = sample.d
    mat = np.eye(d)
    if m >= 2:
        mean = rows.mean(axis=0)
        dev = rows - mean
        cov = dev.T @ dev / m
        var = np.diag(cov).copy()
        live = var > CENTERED_VAR_RTOL * mean * mean
        sd = np.sqrt(np.where(live, var, 1.0))
        cor = cov / np.outer(sd, sd)
        keep = np.outer(live, live)
        mat = np.where(keep, _clamp(cor), 0.0)
        np.fill_diagonal(mat, 1.0)
    return CondCorrMatrix(mat, rect, m)


class MutualScanner:
    """Hyperrectangle enumeration over per-axis quantile grids.

    Statistics are binned on the full product grid and read out with
    ``2**d``-corner inclusion-exclusion, the ``d``-dimensional analogue of the
    two-dimensional summed-area table.
    """

    def __init__(self, sample: MultiSample, levels: int, m_min: int = 30,
                 budget: int = DEFAULT_BUDGET, family: Optional[str] = None):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        if m_min < 2:
            raise ValueError("m_min must be >= 2")
        d = sample.d
        if family is None:
            family = "bounded" if d <= 3 else "tails"
        if family not in ("bounded", "tails"):
            raise ValueError(f"unknown family {family!r}")
        if sample.n < levels:
            raise ValueError(f"need at least {levels} observations for {levels} levels")
        self.family, self.levels, self.m_min, self.budget = family, levels, m_min, budget
        self.d = d
        self.cuts = [quantile_cuts(sample.column(k), levels) for k in range(d)]
        self.g = tuple(c.size + 1 for c in self.cuts)
        self.edges = [np.concatenate([[sample.column(k).min()], self.cuts[k],
                                      [sample.column(k).max()]]) for k in range(d)]
        self.bins = np.column_stack([np.searchsorted(self.cuts[k], sample.column(k), side="right")
                                     for k in range(d)])
        self.origin = np.array([_data_origin(sample.column(k)) for k in range(d)])
        self.centred = sample.data - self.origin
        per_axis = [_axis_intervals(g, family) for g in self.g]
        total = math.prod(len(a) for a in per_axis)
        combos = itertools.islice(itertools.product(*[range(len(a)) for a in per_axis]), budget)
        idx = np.array(list(combos), dtype=np.intp).reshape(-1, d)
        self.truncated = total > budget
        self.starts = np.column_stack([per_axis[k][idx[:, k], 0] for k in range(d)])
        self.stops = np.column_stack([per_axis[k][idx[:, k], 1] for k in range(d)])
        self.iu, self.ju = np.triu_indices(d)

    def sums(self, data=None, bins=None):
        data = self.centred if data is None else data
        bins = self.bins if bins is None else bins
        flat = np.ravel_multi_index(tuple(bins.T), self.g)
        size = math.prod(self.g)
        n_stats = 1 + self.d + self.iu.size
        cube = np.empty((n_stats, size))
        cube[0] = np.bincount(flat, minlength=size)
        for k in range(self.d):
            cube[1 + k] = np.bincount(flat, weights=data[:, k], minlength=size)
        for s, (i, j) in enumerate(zip(self.iu, self.ju)):
            cube[1 + self.d + s] = np.bincount(flat, weights=data[:, i] * data[:, j],
                                               minlength=size)
        cube = cube.reshape((n_stats,) + self.g)
        axes = tuple(range(1, self.d + 1))
        hi, lo = dd_prefix(cube, axes=axes)
        return dd_box_sums(hi, lo, self.starts, self.stops)

    def evaluate(self, data=None, bins=None):
        s = self.sums(data, bins)
        d = self.d
        m = np.rint(s[0])
        ok = m >= 2
        safe = np.where(ok, m, 1.0)
        mean = s[1:1 + d] / safe
        second = np.zeros((d, d, m.size))
        second[self.iu, self.ju] = s[1 + d:] / safe
        second[self.ju, self.iu] = s[1 + d:] / safe
        cov = second - mean[:, None, :] * mean[None, :, :]
        cov = np.moveaxis(cov, -1, 0)
        raw = np.diagonal(second)
        var = np.diagonal(cov, axis1=1, axis2=2)
        tol = RAW_VAR_RTOL * raw
        if np.any(ok[:, None] & (var < -tol)):
            raise RuntimeError("negative variance beyond rounding tolerance")
        var = np.maximum(var, 0.0)
        live = (var > tol) & ok[:, None]
        sd = np.sqrt(np.where(live, var, 1.0))
        cor = cov / (sd[:, :, None] * sd[:, None, :])
        keep = live[:, :, None] & live[:, None, :]
        cor = _clamp(np.where(keep, cor, 0.0), RAW_COR_OVERSHOOT)
        iu, ju = np.triu_indices(d, k=1)
        upper = cor[:, iu, ju]
        k = np.argmax(np.abs(upper), axis=1)
        best = upper[np.arange(upper.shape[0]), k]
        best_cov = cov[:, iu, ju][np.arange(upper.shape[0]), k]
        pair = np.column_stack([iu[k], ju[k]])
        return m, np.where(ok, best_cov, np.nan), best, pair, m < self.m_min

    def statistic(self, data=None, bins=None) -> float:
        m, _, cor, _, skipped = self.evaluate(data, bins)
        return float(np.where(skipped, 0.0, np.abs(cor)).max())

    def report(self) -> ScanReport:
        m, cov, cor, pair, skipped = self.evaluate()
        lower = np.column_stack([self.edges[k][self.starts[:, k]] for k in range(self.d)])
        if self.family == "tails":
            upper = np.full(lower.shape, np.inf)
        else:
            upper = np.column_stack([self.edges[k][self.stops[:, k]] for k in range(self.d)])
        return ScanReport(
            family=self.family, params={"levels": self.levels, "budget": self.budget},
            lower=lower, upper=upper, m=m.astype(np.int64), cov=cov, cor=cor,
            skipped=skipped, m_min=self.m_min,
            bins=np.stack([self.starts, self.stops], axis=-1), pair=pair,
            truncated=self.truncated, extra={"g": list(self.g)},
        )


def mutual_scan(sample: MultiSample, levels: int = 4, m_min: int = 30,
                budget: int = DEFAULT_BUDGET, family: Optional[str] = None) -> ScanReport:
    """Largest off-diagonal conditional correlation over grid hyperrectangles.

    For ``d <= 3`` all bounded grid boxes are enumerated (lexicographically,
    up to ``budget``); for ``d > 3`` the default family is upper tails, which
    keeps the count at ``levels**d``. With ``d == 2`` this is exactly the
    bivariate grid scan.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if sample.d == 2 and budget >= (levels * (levels + 1) // 2) ** 2:
        fam = UpperTails(levels) if family == "tails" else BoundedGrid(levels)
        return scan(PairedSample(sample.column(0), sample.column(1)), fam, m_min)
    return MutualScanner(sample, levels, m_min, budget, family).report()
