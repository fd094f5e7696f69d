"""Error-free transformations and double-double prefix sums.

Rectangle readouts from prefix-sum tables subtract large partial sums; doing
the prefix and the inclusion-exclusion in double-double keeps the readout
accurate relative to the rectangle's own magnitude instead of the table total.
"""
import math

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1
DD_NOISE = 2.0 ** -100


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def two_prod(a, b):
    """Return ``(p, e)`` with ``p = fl(a*b)`` and ``a*b == p + e`` exactly.

    Exact unless the product underflows into the subnormal range.
    """
    p = a * b
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def exact_sum(values):
    """Correctly rounded sum of a 1-D float array."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def exact_sum_dd(values):
    """``(hi, lo)`` with ``hi`` the rounded sum and ``lo`` the rounded residual."""
    values = np.asarray(values, dtype=float).ravel()
    hi = math.fsum(values)
    return hi, math.fsum(np.append(values, -hi))


def exact_dot_dd(a, b):
    p, e = two_prod(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return exact_sum_dd(np.concatenate([p.ravel(), e.ravel()]))


def exact_dot(a, b):
    """Correctly rounded ``sum(a * b)`` (products split error-free first)."""
    p, e = two_prod(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return math.fsum(np.concatenate([p.ravel(), e.ravel()]))


def dd_add(ah, al, bh, bl):
    s, t = two_sum(ah, bh)
    t = t + (al + bl)
    hi = s + t
    lo = t - (hi - s)
    return hi, lo


def dd_prefix(arr, axes, low=None):
    """Zero-padded inclusive prefix sums of ``arr`` along ``axes``.

    ``low`` optionally holds the low-order parts of a double-double input.
    Returns ``(hi, lo)`` where each padded axis has one extra leading zero
    slot, so ``P[..., i, ...]`` is the sum over indices ``< i``.
    """
    arr = np.asarray(arr, dtype=float)
    pad = [(0, 0)] * arr.ndim
    for ax in axes:
        pad[ax] = (1, 0)
    hi = np.pad(arr, pad)
    lo = np.zeros_like(hi) if low is None else np.pad(np.asarray(low, dtype=float), pad)
    for ax in axes:
        hi = np.moveaxis(hi, ax, 0).copy()
        lo = np.moveaxis(lo, ax, 0).copy()
        for k in range(1, hi.shape[0]):
            hi[k], lo[k] = dd_add(hi[k - 1], lo[k - 1], hi[k], lo[k])
        hi = np.moveaxis(hi, 0, ax)
        lo = np.moveaxis(lo, 0, ax)
    return np.ascontiguousarray(hi), np.ascontiguousarray(lo)


def dd_box_sums(hi, lo, starts, stops):
    """Inclusion-exclusion box sums over the trailing ``d`` axes.

    ``hi``/``lo`` come from :func:`dd_prefix` with the last ``d`` axes padded.
    ``starts``/``stops`` are integer arrays of shape ``(R, d)`` in bin units
    (half-open). Returns an array of shape ``hi.shape[:-d] + (R,)``.
    """
    starts = np.asarray(starts, dtype=np.intp)
    stops = np.asarray(stops, dtype=np.intp)
    d = starts.shape[1]
    lead = hi.shape[:-d]
    acc_h = np.zeros(lead + (starts.shape[0],))
    acc_l = np.zeros_like(acc_h)
    mag = np.zeros_like(acc_h)
    for corner in range(1 << d):
        idx = []
        negative = False
        for ax in range(d):
            if corner >> ax & 1:
                idx.append(stops[:, ax])
            else:
                idx.append(starts[:, ax])
                negative = not negative
        key = (Ellipsis,) + tuple(idx)
        ch, cl = hi[key], lo[key]
        if negative:
            ch, cl = -ch, -cl
        acc_h, acc_l = dd_add(acc_h, acc_l, ch, cl)
        mag += np.abs(ch)
    out = acc_h + acc_l
    # Below the double-double resolution of the corners the box sum is noise.
    return np.where(np.abs(out) <= DD_NOISE * mag, 0.0, out)
