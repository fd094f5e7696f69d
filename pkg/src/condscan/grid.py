"""Quantile grids, summed-area tables and rectangle-family scans.

A scan enumerates a finite family of rectangles (bounded grid boxes, upper
tails, or small local windows), computes the conditional correlation on each
and reports the rectangle with the largest absolute value.

Grid-aligned rectangles are unions of bins. Bin ``k`` on an axis covers
``[cut_{k-1}, cut_k)``; the first bin starts at the data minimum and the last
one is closed at the data maximum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._exact import dd_box_sums, dd_prefix, exact_dot_dd, exact_sum_dd
from .moments import (CondMoments, Interval, PairedSample, Rectangle, cov_cor_from_centred,
                      cov_cor_from_sums)

N_STATS = 6  # count, sx, sy, sxy, sxx, syy


# -- conditioning families ----------------------------------------------------

@dataclass(frozen=True)
class BoundedGrid:
    """All grid-aligned boxes ``[a, b] x [c, d]`` with ``a < b``, ``c < d``."""

    levels: int = 12
    name = "bounded"

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")


@dataclass(frozen=True)
class UpperTails:
    """All quadrants ``[t, inf) x [s, inf)`` with thresholds on the grid."""

    levels: int = 12
    name = "tails"

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")


@dataclass(frozen=True)
class LocalWindows:
    """Square windows of side ``eps`` tiled with offset ``stride``.

    ``stride`` defaults to ``eps / 2``.
    """

    eps: float
    stride: Optional[float] = None
    name = "local"

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError("eps must be positive")
        stride = self.eps / 2 if self.stride is None else float(self.stride)
        if not 0 < stride <= self.eps:
            raise ValueError("stride must satisfy 0 < stride <= eps")
        object.__setattr__(self, "stride", stride)


ConditioningFamily = Union[BoundedGrid, UpperTails, LocalWindows]


# -- quantile grid ------------------------------------------------------------

def quantile_cuts(values, levels: int) -> np.ndarray:
    """Interior cut points at the empirical quantiles ``k / levels``.

    Linear interpolation between order statistics (the "type 7" rule). The
    position ``k (n - 1) / levels`` is split with integer arithmetic so nested
    level counts produce bit-identical cuts. A cut landing on the minimum
    would leave the first bin empty, so it moves to the midpoint between the
    two smallest distinct values (tied, discrete data). Duplicates merge.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    if n == 0:
        raise ValueError("no values to cut")
    cuts = []
    for k in range(1, levels):
        whole, rem = divmod(k * (n - 1), levels)
        lo = v[whole]
        if rem:
            frac = rem / levels
            lo = lo + frac * (v[whole + 1] - lo)
        cuts.append(lo)
    cuts = np.asarray(cuts, dtype=float)
    above = v[v > v[0]]
    if above.size:
        cuts = np.where(cuts <= v[0], v[0] + 0.5 * (above[0] - v[0]), cuts)
    cuts = np.unique(cuts)
    return cuts[cuts > v[0]]


def _clean_cuts(cuts, lo, hi) -> np.ndarray:
    cuts = np.unique(np.asarray(cuts, dtype=float))
    return cuts[(cuts > lo) & (cuts <= hi)]


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Per-axis cut points and the data range they partition."""

    x_cuts: np.ndarray
    y_cuts: np.ndarray
    x_range: tuple
    y_range: tuple

    @property
    def g_x(self) -> int:
        return self.x_cuts.size + 1

    @property
    def g_y(self) -> int:
        return self.y_cuts.size + 1

    @property
    def x_edges(self) -> np.ndarray:
        return np.concatenate([[self.x_range[0]], self.x_cuts, [self.x_range[1]]])

    @property
    def y_edges(self) -> np.ndarray:
        return np.concatenate([[self.y_range[0]], self.y_cuts, [self.y_range[1]]])

    def bin_x(self, x) -> np.ndarray:
        return np.searchsorted(self.x_cuts, x, side="right")

    def bin_y(self, y) -> np.ndarray:
        return np.searchsorted(self.y_cuts, y, side="right")

    @classmethod
    def from_cuts(cls, sample: PairedSample, x_cuts, y_cuts) -> "QuantileGrid":
        """Grid with user-chosen cuts (cleaned against the data range)."""
        xr = (float(sample.x.min()), float(sample.x.max()))
        yr = (float(sample.y.min()), float(sample.y.max()))
        return cls(_clean_cuts(x_cuts, *xr), _clean_cuts(y_cuts, *yr), xr, yr)


def build_grid(sample: PairedSample, levels: int) -> QuantileGrid:
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if sample.n < levels:
        raise ValueError(f"need at least {levels} observations for {levels} levels")
    return QuantileGrid(
        quantile_cuts(sample.x, levels),
        quantile_cuts(sample.y, levels),
        (float(sample.x.min()), float(sample.x.max())),
        (float(sample.y.min()), float(sample.y.max())),
    )


# -- summed-area table ----------------------------------------------------------

def _bin_stats(bx, by, x, y, gx, gy):
    """Per-bin sums of the six statistics; leading dims of ``y``/``by`` batch."""
    y = np.asarray(y, dtype=float)
    by = np.asarray(by)
    lead = y.shape[:-1]
    batch = int(np.prod(lead)) if lead else 1
    cells = gx * gy
    flat = (np.arange(batch).reshape(lead + (1,)) * cells if lead else 0) + bx * gy + by
    flat = np.broadcast_to(flat, y.shape).ravel()
    xb = np.broadcast_to(x, y.shape)
    size = batch * cells
    out = np.empty((N_STATS, size))
    out[0] = np.bincount(flat, minlength=size)
    out[1] = np.bincount(flat, weights=xb.ravel(), minlength=size)
    out[2] = np.bincount(flat, weights=y.ravel(), minlength=size)
    out[3] = np.bincount(flat, weights=(xb * y).ravel(), minlength=size)
    out[4] = np.bincount(flat, weights=(xb * xb).ravel(), minlength=size)
    out[5] = np.bincount(flat, weights=(y * y).ravel(), minlength=size)
    out = out.reshape((N_STATS,) + lead + (gx, gy))
    return np.moveaxis(out, 0, -3) if lead else out


@dataclass(frozen=True, eq=False)
class SummedAreaTable:
    """Prefix sums of the binned sufficient statistics.

    The planes are held as double-double pairs (``hi + lo``) with a leading
    zero row and column, so box readouts do not lose precision to the size of
    the table total. Statistics are accumulated about ``origin``.
    """

    hi: np.ndarray
    lo: np.ndarray
    origin: tuple = (0.0, 0.0)

    @property
    def planes(self) -> np.ndarray:
        """``planes[s, i, j]``: statistic ``s`` summed over bins ``<= i, <= j``."""
        return (self.hi + self.lo)[..., 1:, 1:]

    def box_sums(self, x0, x1, y0, y1) -> np.ndarray:
        """Stat sums over bins ``x0..x1-1`` by ``y0..y1-1`` (arrays allowed)."""
        starts = np.column_stack([np.atleast_1d(x0), np.atleast_1d(y0)])
        stops = np.column_stack([np.atleast_1d(x1), np.atleast_1d(y1)])
        return dd_box_sums(self.hi, self.lo, starts, stops)

    def readout(self, x0: int, x1: int, y0: int, y1: int) -> CondMoments:
        s = self.box_sums(x0, x1, y0, y1)[:, 0]
        return CondMoments(int(round(s[0])), *(float(v) for v in s[1:]))


def _exact_bin_stats(bx, by, x, y, gx, gy):
    """Per-bin sums as double-double ``(hi, lo)`` pairs, exact to rounding of ``lo``."""
    flat = bx * gy + by
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(gx * gy + 1))
    xs, ys = x[order], y[order]
    hi = np.zeros((N_STATS, gx * gy))
    lo = np.zeros_like(hi)
    for c in range(gx * gy):
        a, b = bounds[c], bounds[c + 1]
        if a == b:
            continue
        u, v = xs[a:b], ys[a:b]
        parts = [(float(b - a), 0.0), exact_sum_dd(u), exact_sum_dd(v), exact_dot_dd(u, v),
                 exact_dot_dd(u, u), exact_dot_dd(v, v)]
        hi[:, c], lo[:, c] = zip(*parts)
    return hi.reshape(N_STATS, gx, gy), lo.reshape(N_STATS, gx, gy)


def build_sat(sample: PairedSample, grid: QuantileGrid, origin=(0.0, 0.0)) -> SummedAreaTable:
    """Bin every observation once and accumulate prefix sums row-major.

    Per-bin sums are kept in double-double, so the full-grid readout
    reproduces the correctly rounded sums of the whole sample.
    """
    ox, oy = float(origin[0]), float(origin[1])
    stats, low = _exact_bin_stats(grid.bin_x(sample.x), grid.bin_y(sample.y),
                                  sample.x - ox, sample.y - oy, grid.g_x, grid.g_y)
    hi, lo = dd_prefix(stats, axes=(-2, -1), low=low)
    return SummedAreaTable(hi, lo, (ox, oy))


# -- scan report -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScanReport:
    """Per-rectangle statistics of one scan.

    ``lower``/``upper`` hold rectangle bounds per axis (``inf`` marks an
    upper tail). ``bins`` holds the half-open bin ranges for grid families.
    For more than two variables ``cor`` is the off-diagonal entry of largest
    magnitude and ``pair`` names its coordinates.
    """

    family: str
    params: dict
    lower: np.ndarray
    upper: np.ndarray
    m: np.ndarray
    cov: np.ndarray
    cor: np.ndarray
    skipped: np.ndarray
    m_min: int
    bins: Optional[np.ndarray] = None
    pair: Optional[np.ndarray] = None
    truncated: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(self.m.size)

    @property
    def skipped_count(self) -> int:
        return int(self.skipped.sum())

    @property
    def argmax(self) -> Optional[int]:
        """Index of the largest ``|cor|`` among kept rectangles.

        Ties go to the first rectangle in enumeration order, which is
        lexicographic in the bin (or window) indices.
        """
        if self.skipped.all():
            return None
        score = np.where(self.skipped, -1.0, np.abs(self.cor))
        return int(np.argmax(score))

    @property
    def max_abs_cor(self) -> float:
        k = self.argmax
        return 0.0 if k is None else float(abs(self.cor[k]))


def report_rectangle(report: ScanReport, k: int) -> Rectangle:
    """Closed rectangle selecting the same observations as record ``k``.

    Half-open grid bins ``[a, b)`` become ``[a, b']`` with ``b'`` the float
    just below ``b``; the last bin stays closed at the data maximum.
    """
    axes = []
    for ax in range(report.lower.shape[1]):
        lo, hi = float(report.lower[k, ax]), float(report.upper[k, ax])
        if report.bins is None or hi == math.inf:
            axes.append(Interval(lo, hi) if hi > lo else Interval.upper_tail(lo))
            continue
        last = report.bins[k, ax, 1] == report.extra["g"][ax]
        if not last:
            hi = float(np.nextafter(hi, -np.inf))
        axes.append(Interval(lo, hi) if hi > lo else Interval.upper_tail(lo))
    return Rectangle(tuple(axes))


def interval_label(report: ScanReport, k: int, ax: int) -> str:
    lo, hi = float(report.lower[k, ax]), float(report.upper[k, ax])
    if hi == math.inf:
        return f"[{lo:.12g}, inf)"
    closed = report.bins is None or report.bins[k, ax, 1] == report.extra["g"][ax]
    return f"[{lo:.12g}, {hi:.12g}{']' if closed else ')'}"


def _max_abs(cor, skipped):
    return np.where(skipped, 0.0, np.abs(cor)).max(axis=-1)


# -- grid scans --------------------------------------------------------------------

def _axis_intervals(g: int, kind: str) -> np.ndarray:
    if kind == "bounded":
        return np.array([(i, j) for i in range(g) for j in range(i + 1, g + 1)], dtype=np.intp)
    return np.array([(i, g) for i in range(g)], dtype=np.intp)


def _data_origin(values) -> float:
    # An actual observation, so constant columns centre to exact zeros.
    v = np.sort(values)
    return float(v[v.size // 2])


class GridScanner:
    """Precomputed rectangle enumeration for repeated grid scans.

    The grid depends only on the marginals, so permutation replicates reuse
    the scanner and only re-bin the permuted ``y`` column.
    """

    def __init__(self, sample: PairedSample, family, m_min: int = 30,
                 grid: Optional[QuantileGrid] = None):
        if m_min < 2:
            raise ValueError("m_min must be >= 2")
        if not isinstance(family, (BoundedGrid, UpperTails)):
            raise TypeError("GridScanner needs a BoundedGrid or UpperTails family")
        self.family = family
        self.m_min = m_min
        self.grid = build_grid(sample, family.levels) if grid is None else grid
        self.origin = (_data_origin(sample.x), _data_origin(sample.y))
        self.xc = sample.x - self.origin[0]
        self.yc = sample.y - self.origin[1]
        self.bx = self.grid.bin_x(sample.x)
        self.by = self.grid.bin_y(sample.y)
        ix = _axis_intervals(self.grid.g_x, family.name)
        iy = _axis_intervals(self.grid.g_y, family.name)
        a = np.repeat(np.arange(len(ix)), len(iy))
        b = np.tile(np.arange(len(iy)), len(ix))
        self.starts = np.column_stack([ix[a, 0], iy[b, 0]])
        self.stops = np.column_stack([ix[a, 1], iy[b, 1]])

    def sums(self, perms=None) -> np.ndarray:
        """Box sums, shape ``(6, R)`` or ``(B, 6, R)`` for a batch of y-permutations."""
        if perms is None:
            yc, by = self.yc, self.by
        else:
            yc, by = self.yc[perms], self.by[perms]
        stats = _bin_stats(self.bx, by, self.xc, yc, self.grid.g_x, self.grid.g_y)
        hi, lo = dd_prefix(stats, axes=(-2, -1))
        return dd_box_sums(hi, lo, self.starts, self.stops)

    def evaluate(self, perms=None):
        s = self.sums(perms)
        m = np.rint(s[..., 0, :])
        cov, cor = cov_cor_from_sums(m, s[..., 1, :], s[..., 2, :], s[..., 3, :],
                                     s[..., 4, :], s[..., 5, :])
        return m, cov, cor, m < self.m_min

    def statistic(self, perms=None):
        m, _, cor, skipped = self.evaluate(perms)
        return _max_abs(cor, skipped)

    def report(self) -> ScanReport:
        m, cov, cor, skipped = self.evaluate()
        xe, ye = self.grid.x_edges, self.grid.y_edges
        tails = self.family.name == "tails"
        lower = np.column_stack([xe[self.starts[:, 0]], ye[self.starts[:, 1]]])
        if tails:
            upper = np.full(lower.shape, np.inf)
        else:
            upper = np.column_stack([xe[self.stops[:, 0]], ye[self.stops[:, 1]]])
        bins = np.stack([self.starts, self.stops], axis=-1)
        return ScanReport(
            family=self.family.name,
            params={"levels": self.family.levels},
            lower=lower, upper=upper, m=m.astype(np.int64), cov=cov, cor=cor,
            skipped=skipped, m_min=self.m_min, bins=bins,
            extra={"g": [self.grid.g_x, self.grid.g_y]},
        )


def scan(sample: PairedSample, family: ConditioningFamily, m_min: int = 30,
         grid: Optional[QuantileGrid] = None) -> ScanReport:
    """Scan a conditioning family and report conditional correlations.

    Parameters
    ----------
    sample : PairedSample
    family : BoundedGrid, UpperTails or LocalWindows
        Grid families are evaluated through a summed-area table built on the
        quantile grid of ``family.levels`` levels (or on ``grid`` if given).
    m_min : int
        Rectangles holding fewer observations are recorded as skipped.
    grid : QuantileGrid, optional
        Explicit grid, e.g. one with a cut placed at a known threshold.

    Returns
    -------
    ScanReport
    """
    if m_min < 2:
        raise ValueError("m_min must be >= 2")
    if isinstance(family, LocalWindows):
        return scan_local(sample, family.eps, family.stride, m_min)
    return GridScanner(sample, family, m_min, grid).report()


# -- local windows -------------------------------------------------------------------

def _window_starts(lo: float, hi: float, eps: float, stride: float) -> np.ndarray:
    span = hi - lo
    count = 1 + max(0, math.ceil((span - eps) / stride))
    return lo + stride * np.arange(count)


class LocalScanner:
    """Overlapping ``eps``-windows over the data bounding box.

    Points are sorted by ``x``; each x-strip is sorted by ``y`` so a window is
    a contiguous slice. Windows with enough points get two-pass centred
    co-moments, shifted by their first point so a constant coordinate gives
    exact zeros.
    """

    def __init__(self, sample: PairedSample, eps: float, stride: Optional[float] = None,
                 m_min: int = 30):
        fam = LocalWindows(eps, stride)
        if m_min < 2:
            raise ValueError("m_min must be >= 2")
        self.eps, self.stride, self.m_min = fam.eps, fam.stride, m_min
        self.x = sample.x
        self.y = sample.y
        self.order = np.argsort(sample.x, kind="stable")
        self.xs = sample.x[self.order]
        self.x_starts = _window_starts(self.xs[0], self.xs[-1], self.eps, self.stride)
        self.y_starts = _window_starts(float(sample.y.min()), float(sample.y.max()),
                                       self.eps, self.stride)
        self.strips = []
        for s in self.x_starts:
            a = np.searchsorted(self.xs, s, side="left")
            b = np.searchsorted(self.xs, s + self.eps, side="right")
            self.strips.append(self.order[a:b])

    def evaluate(self, y=None, need: int = 2):
        """Per-window ``(m, cov, cor, skipped)``; moments only where ``m >= need``."""
        y = self.y if y is None else y
        ny = self.y_starts.size
        shape = (len(self.strips), ny)
        m = np.zeros(shape)
        stats = np.zeros((5,) + shape)  # mean_x, mean_y, cxx, cyy, cxy
        for k, idx in enumerate(self.strips):
            if idx.size == 0:
                continue
            ys = y[idx]
            o = np.argsort(ys, kind="stable")
            ys = ys[o]
            xs = self.x[idx][o]
            lo = np.searchsorted(ys, self.y_starts, side="left")
            hi = np.searchsorted(ys, self.y_starts + self.eps, side="right")
            m[k] = hi - lo
            for w in np.flatnonzero(hi - lo >= need):
                u, v = xs[lo[w]:hi[w]], ys[lo[w]:hi[w]]
                u0, v0 = u - u[0], v - v[0]
                du, dv = u0 - u0.mean(), v0 - v0.mean()
                stats[:, k, w] = (u.mean(), v.mean(), du @ du, dv @ dv, du @ dv)
        m = m.ravel()
        s = stats.reshape(5, -1)
        cov, cor = cov_cor_from_centred(m, *s)
        return m, cov, cor, m < self.m_min

    def statistic(self, y=None) -> float:
        m, _, cor, skipped = self.evaluate(y, need=self.m_min)
        return float(_max_abs(cor, skipped))

    def report(self) -> ScanReport:
        m, cov, cor, skipped = self.evaluate()
        gx, gy = np.meshgrid(self.x_starts, self.y_starts, indexing="ij")
        lower = np.column_stack([gx.ravel(), gy.ravel()])
        return ScanReport(
            family="local",
            params={"eps": self.eps, "stride": self.stride},
            lower=lower, upper=lower + self.eps, m=m.astype(np.int64),
            cov=cov, cor=cor, skipped=skipped, m_min=self.m_min,
        )


def scan_local(sample: PairedSample, eps: float, stride: Optional[float] = None,
               m_min: int = 30) -> ScanReport:
    """Scan closed square windows of side ``eps`` offset by ``stride``."""
    return LocalScanner(sample, eps, stride, m_min).report()


# -- support diagnostic ----------------------------------------------------------------

@dataclass(frozen=True)
class SupportReport:
    """Empty grid cells whose row and column bins are both occupied."""

    fraction: float
    cells: tuple
    occupied_rows: int
    occupied_cols: int


def support_product_check(sample: PairedSample, grid: QuantileGrid) -> SupportReport:
    """Heuristic check of the product-support condition on a grid.

    A nonzero fraction means the joint sample leaves holes in the product of
    its marginal supports, in which case small-window scans can miss
    dependence.
    """
    bx, by = grid.bin_x(sample.x), grid.bin_y(sample.y)
    counts = np.bincount(bx * grid.g_y + by, minlength=grid.g_x * grid.g_y)
    counts = counts.reshape(grid.g_x, grid.g_y)
    rows = counts.sum(axis=1) > 0
    cols = counts.sum(axis=0) > 0
    holes = (counts == 0) & rows[:, None] & cols[None, :]
    denom = int(rows.sum()) * int(cols.sum())
    cells = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(holes)))
    return SupportReport(len(cells) / denom, cells, int(rows.sum()), int(cols.sum()))
