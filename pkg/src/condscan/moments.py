"""Intervals, rectangles, paired samples and exact conditional moments.

Everything here works on explicitly supplied rectangles with closed-interval
membership. The grid and local engines reproduce these numbers faster; the
functions in this module are the reference they are tested against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._exact import exact_dot, exact_sum

# Variance is treated as zero when it is this small relative to the second
# moment about the accumulation origin (raw sums) ...
RAW_VAR_RTOL = 1e-10
# ... or relative to the squared mean (two-pass centred sums).
CENTERED_VAR_RTOL = 1e-24
# Correlation overshoot beyond this is a bug, not rounding. Raw-sum readouts
# near the degeneracy floor lose more digits, hence the looser bound.
COR_OVERSHOOT = 1e-12
RAW_COR_OVERSHOOT = 1e-6


@dataclass(frozen=True)
class Interval:
    """A closed interval on the real line.

    Three kinds exist: bounded ``[lo, hi]`` with ``lo < hi``, the upper tail
    ``[t, inf)`` and the full line. Use the constructors rather than building
    one by hand.
    """

    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if lo == -math.inf and hi != math.inf:
            raise ValueError("lower tails are not supported; negate the variable")
        if hi == -math.inf or lo == math.inf:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        if math.isfinite(lo) and math.isfinite(hi) and not lo < hi:
            raise ValueError(f"bounded interval needs lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def bounded(cls, lo: float, hi: float) -> "Interval":
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("bounded interval needs finite endpoints")
        return cls(lo, hi)

    @classmethod
    def upper_tail(cls, t: float) -> "Interval":
        if not math.isfinite(t):
            raise ValueError("tail threshold must be finite")
        return cls(t, math.inf)

    @classmethod
    def full(cls) -> "Interval":
        return cls()

    @property
    def kind(self) -> str:
        if self.lo == -math.inf:
            return "full"
        if self.hi == math.inf:
            return "upper_tail"
        return "bounded"

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (values >= self.lo) & (values <= self.hi)

    def shifted(self, c: float) -> "Interval":
        return Interval(self.lo + c, self.hi + c)

    def affine(self, alpha: float, beta: float) -> "Interval":
        """Image of the interval under ``v -> alpha * v + beta`` (alpha > 0)."""
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        return Interval(alpha * self.lo + beta, alpha * self.hi + beta)


@dataclass(frozen=True)
class Rectangle:
    """Cartesian product of intervals, one per variable."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise ValueError("a rectangle needs at least one axis")
        if not all(isinstance(a, Interval) for a in axes):
            raise TypeError("rectangle axes must be Interval instances")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def of(cls, *intervals: Interval) -> "Rectangle":
        return cls(tuple(intervals))

    @classmethod
    def full(cls, dim: int) -> "Rectangle":
        return cls(tuple(Interval.full() for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    def contains(self, points) -> np.ndarray:
        """Row mask for an ``(n, dim)`` array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ValueError(f"expected points of shape (n, {self.dim})")
        mask = np.ones(points.shape[0], dtype=bool)
        for k, interval in enumerate(self.axes):
            mask &= interval.contains(points[:, k])
        return mask


@dataclass(frozen=True, eq=False)
class PairedSample:
    """Two aligned columns of finite observations."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        y = np.array(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"x and y lengths differ: {x.size} vs {y.size}")
        if x.size < 2:
            raise ValueError("a paired sample needs at least 2 observations")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("sample values must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.size

    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def with_y(self, y) -> "PairedSample":
        return PairedSample(self.x, y)


@dataclass(frozen=True)
class CondMoments:
    """Sufficient statistics of the subsample inside one rectangle.

    ``cxx``, ``cyy`` and ``cxy`` are optional two-pass centred sums. When
    present they are used in place of the raw-sum formulas.
    """

    m: int
    sx: float = 0.0
    sy: float = 0.0
    sxy: float = 0.0
    sxx: float = 0.0
    syy: float = 0.0
    cxx: Optional[float] = None
    cyy: Optional[float] = None
    cxy: Optional[float] = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("count must be non-negative")

    @property
    def mean_x(self) -> Optional[float]:
        return self.sx / self.m if self.m else None

    @property
    def mean_y(self) -> Optional[float]:
        return self.sy / self.m if self.m else None

    def var_x(self) -> Optional[float]:
        return _variance(self.m, self.sx, self.sxx, self.cxx)

    def var_y(self) -> Optional[float]:
        return _variance(self.m, self.sy, self.syy, self.cyy)

    def sd_x(self) -> Optional[float]:
        v = self.var_x()
        return None if v is None else math.sqrt(v)

    def sd_y(self) -> Optional[float]:
        v = self.var_y()
        return None if v is None else math.sqrt(v)

    def as_array(self) -> np.ndarray:
        return np.array([self.m, self.sx, self.sy, self.sxy, self.sxx, self.syy], dtype=float)


def _variance(m, s, ss, centered):
    if m == 0:
        return None
    mean = s / m
    if centered is not None:
        var = centered / m
        floor = CENTERED_VAR_RTOL * mean * mean
    else:
        var = ss / m - mean * mean
        floor = RAW_VAR_RTOL * (ss / m)
    if var < -floor:
        raise RuntimeError(f"negative variance {var!r} beyond rounding tolerance")
    return max(var, 0.0)


def _is_degenerate(m, s, ss, centered) -> bool:
    var = _variance(m, s, ss, centered)
    mean = s / m
    if centered is not None:
        return var <= CENTERED_VAR_RTOL * mean * mean
    return var <= RAW_VAR_RTOL * (ss / m)


def select_indices(sample: PairedSample, rect: Rectangle) -> np.ndarray:
    """Indices of the observations inside ``rect``, ascending."""
    if rect.dim != 2:
        raise ValueError("select_indices needs a 2-D rectangle")
    mask = rect.axes[0].contains(sample.x) & rect.axes[1].contains(sample.y)
    return np.flatnonzero(mask)


def moments_of(x, y) -> CondMoments:
    """Exact sums plus two-pass centred co-moments of the given columns."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.size
    if m == 0:
        return CondMoments(0)
    sx, sy = exact_sum(x), exact_sum(y)
    dx = x - sx / m
    dy = y - sy / m
    return CondMoments(
        m=m,
        sx=sx,
        sy=sy,
        sxy=exact_dot(x, y),
        sxx=exact_dot(x, x),
        syy=exact_dot(y, y),
        cxx=exact_dot(dx, dx),
        cyy=exact_dot(dy, dy),
        cxy=exact_dot(dx, dy),
    )


def conditional_moments(sample: PairedSample, rect: Rectangle) -> CondMoments:
    """Sufficient statistics of ``sample`` restricted to ``rect``.

    The raw sums are correctly rounded (error-free products fed to
    ``math.fsum``), and the centred co-moments come from a second pass over
    the subsample.
    """
    idx = select_indices(sample, rect)
    return moments_of(sample.x[idx], sample.y[idx])


def conditional_covariance(mom: CondMoments) -> Optional[float]:
    """Covariance under the empirical conditional law, ``None`` if ``m < 2``."""
    if mom.m < 2:
        return None
    if mom.cxy is not None:
        return mom.cxy / mom.m
    return mom.sxy / mom.m - (mom.sx / mom.m) * (mom.sy / mom.m)


def conditional_correlation(mom: CondMoments) -> float:
    """Pearson correlation on the subsample.

    Returns 0 when fewer than two points are selected or either coordinate is
    constant on the subsample (the off-diagonal Kronecker-delta convention).
    """
    if mom.m < 2:
        return 0.0
    if _is_degenerate(mom.m, mom.sx, mom.sxx, mom.cxx) or _is_degenerate(
        mom.m, mom.sy, mom.syy, mom.cyy
    ):
        return 0.0
    cov = conditional_covariance(mom)
    r = cov / math.sqrt(mom.var_x() * mom.var_y())
    return float(_clamp(np.float64(r)))


def _clamp(r, overshoot=COR_OVERSHOOT):
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > 1.0 + overshoot):
        raise RuntimeError("correlation outside [-1, 1] beyond rounding tolerance")
    return np.clip(r, -1.0, 1.0)


def cov_cor_from_sums(m, sx, sy, sxy, sxx, syy):
    """Vectorised covariance and correlation from raw sums.

    Same conventions as :func:`conditional_covariance` and
    :func:`conditional_correlation`: covariance is NaN where ``m < 2`` and the
    correlation is 0 there or where a coordinate is degenerate.
    """
    m = np.asarray(m, dtype=float)
    ok = m >= 2
    safe_m = np.where(ok, m, 1.0)
    mx = sx / safe_m
    my = sy / safe_m
    cov = sxy / safe_m - mx * my
    ex2 = sxx / safe_m
    ey2 = syy / safe_m
    vx = ex2 - mx * mx
    vy = ey2 - my * my
    tol_x = RAW_VAR_RTOL * ex2
    tol_y = RAW_VAR_RTOL * ey2
    if np.any(ok & ((vx < -tol_x) | (vy < -tol_y))):
        raise RuntimeError("negative variance beyond rounding tolerance")
    vx = np.maximum(vx, 0.0)
    vy = np.maximum(vy, 0.0)
    live = ok & (vx > tol_x) & (vy > tol_y)
    denom = np.sqrt(np.where(live, vx * vy, 1.0))
    cor = np.where(live, cov / denom, 0.0)
    cov = np.where(ok, cov, np.nan)
    return cov, _clamp(cor, RAW_COR_OVERSHOOT)


def cov_cor_from_centred(m, mean_x, mean_y, cxx, cyy, cxy):
    """Vectorised covariance and correlation from centred co-moments.

    Conventions as in :func:`cov_cor_from_sums`; degeneracy is judged
    against the squared mean as for two-pass sums.
    """
    m = np.asarray(m, dtype=float)
    ok = m >= 2
    safe_m = np.where(ok, m, 1.0)
    cov = cxy / safe_m
    vx = cxx / safe_m
    vy = cyy / safe_m
    live = (ok & (vx > CENTERED_VAR_RTOL * mean_x * mean_x)
            & (vy > CENTERED_VAR_RTOL * mean_y * mean_y))
    denom = np.sqrt(np.where(live, vx * vy, 1.0))
    cor = np.where(live, cov / denom, 0.0)
    return np.where(ok, cov, np.nan), _clamp(cor)


def truncated_mean(values: Sequence[float], interval: Interval) -> Optional[float]:
    """Mean of the values falling in ``interval``; ``None`` when none do."""
    values = np.asarray(values, dtype=float)
    inside = values[interval.contains(values)]
    if inside.size == 0:
        return None
    return exact_sum(inside) / inside.size
