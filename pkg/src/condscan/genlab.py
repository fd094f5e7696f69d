"""Seeded generators for the worked examples and an exact discrete oracle.

Every generator is a pure function of its parameters and seed (PCG64 via
``numpy.random.default_rng``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .moments import Interval, PairedSample, Rectangle
from .multivar import MultiSample

PROB_TOL = 1e-12

# Per-stratum noise scale of the mixed discrete/continuous generator.
MIXED_LEVEL = 15.9
MIXED_SCALES = (0.6, 1.0, 1.4)

# Block law of the hidden-location generator, keyed by (Z1, Z2).
HIDDEN_BLOCK_PROBS = {(0, 0): 1 / 3, (0, 1): 1 / 6, (1, 0): 1 / 6, (1, 1): 1 / 3}


def _rng(seed):
    return np.random.default_rng(seed)


def _check_n(n):
    if n < 1:
        raise ValueError("n must be >= 1")


# -- generators -----------------------------------------------------------------

def gen_sign_flip(n: int, seed: int) -> PairedSample:
    """``X ~ N(0, 1)``, ``Y = Z X`` with an independent fair sign ``Z``.

    Uncorrelated but dependent: all mass sits on ``|x| = |y|``.
    """
    _check_n(n)
    rng = _rng(seed)
    x = rng.standard_normal(n)
    z = rng.integers(0, 2, size=n) * 2 - 1
    return _paired(x, z * x)


def gen_mixture_fp(n: int, p: float, seed: int) -> np.ndarray:
    """Draws from the density ``p 1[0,1] + (1 - p) 1[2,3]``."""
    _check_n(n)
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    rng = _rng(seed)
    low = rng.random(n) < p
    u = rng.random(n)
    return np.where(low, u, 2.0 + u)


def gen_mixed(n: int, seed: int) -> PairedSample:
    """Discrete ``X`` uniform on {0, 1, 2} and continuous ``Y``.

    ``Y = 15.9 + s_X * e`` with ``e ~ N(0, 1)`` independent of ``X`` and
    ``s = (0.6, 1.0, 1.4)``. ``E[Y | X]`` is constant, so the global
    covariance is exactly zero, while larger ``X`` spreads the lower tail of
    ``Y`` further down: conditioning on small ``Y`` gives a negative
    correlation.
    """
    _check_n(n)
    rng = _rng(seed)
    x = rng.integers(0, 3, size=n)
    e = rng.standard_normal(n)
    y = MIXED_LEVEL + np.asarray(MIXED_SCALES)[x] * e
    # n == 1 is allowed for generation; PairedSample needs two rows.
    return _paired(x.astype(float), y)


def gen_hidden_blocks(n: int, seed: int) -> PairedSample:
    """``X = X1 + 2 Z1``, ``Y = X2 + 2 Z2`` with a hidden block label ``Z``.

    ``(X1, X2)`` is uniform on the unit square; ``Z`` takes (0,0) and (1,1)
    with probability 1/3 each and (0,1), (1,0) with 1/6 each.
    """
    _check_n(n)
    rng = _rng(seed)
    labels = list(HIDDEN_BLOCK_PROBS)
    probs = np.array([HIDDEN_BLOCK_PROBS[k] for k in labels])
    k = rng.choice(len(labels), size=n, p=probs)
    z = np.array(labels, dtype=float)[k]
    u = rng.random((n, 2))
    return _paired(u[:, 0] + 2 * z[:, 0], u[:, 1] + 2 * z[:, 1])


def gen_xor_cube(n: int, seed: int) -> MultiSample:
    """``X, Y`` i.i.d. uniform on {-1, +1} and ``Z = X Y``.

    Every pair is independent, the triple is not.
    """
    _check_n(n)
    rng = _rng(seed)
    xy = rng.integers(0, 2, size=(n, 2)) * 2.0 - 1.0
    return _multi(np.column_stack([xy, xy[:, 0] * xy[:, 1]]))


def gen_independent_gauss(n: int, seed: int, d: int = 2):
    _check_n(n)
    data = _rng(seed).standard_normal((n, d))
    return _paired(data[:, 0], data[:, 1]) if d == 2 else _multi(data)


def gen_independent_uniform(n: int, seed: int, d: int = 2):
    _check_n(n)
    data = _rng(seed).random((n, d))
    return _paired(data[:, 0], data[:, 1]) if d == 2 else _multi(data)


def _paired(x, y):
    if x.size < 2:
        return _Rows(np.column_stack([x, y]))
    return PairedSample(x, y)


def _multi(data):
    if data.shape[0] < 2:
        return _Rows(data)
    return MultiSample(data)


@dataclass(frozen=True, eq=False)
class _Rows:
    """Single-row generator output; too small for the sample types."""

    data: np.ndarray


GENERATORS = {
    "sign-flip": "SignFlip",
    "mixture-fp": "MixtureFp",
    "mixed": "MixedDiscreteCont",
    "hidden-blocks": "HiddenBlocks",
    "xor-cube": "XorCube",
    "indep-gauss": "IndependentGauss",
    "indep-uniform": "IndependentUniform",
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Named generator plus its parameters.

    ``kind`` is one of the keys of :data:`GENERATORS`. ``p`` is only used by
    ``mixture-fp`` and ``d`` only by the independent generators.
    """

    kind: str
    n: int
    seed: int = 0
    p: float = 0.5
    d: int = 2

    def __post_init__(self):
        if self.kind not in GENERATORS:
            raise ValueError(f"unknown generator {self.kind!r}; choose from {sorted(GENERATORS)}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.kind == "mixture-fp" and not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.d < 2:
            raise ValueError("d must be >= 2")


def generate(spec: GeneratorSpec) -> np.ndarray:
    """Run a generator and return its output as an ``(n, k)`` array."""
    k = spec.kind
    if k == "sign-flip":
        out = gen_sign_flip(spec.n, spec.seed)
    elif k == "mixture-fp":
        return gen_mixture_fp(spec.n, spec.p, spec.seed)[:, None]
    elif k == "mixed":
        out = gen_mixed(spec.n, spec.seed)
    elif k == "hidden-blocks":
        out = gen_hidden_blocks(spec.n, spec.seed)
    elif k == "xor-cube":
        out = gen_xor_cube(spec.n, spec.seed)
    elif k == "indep-gauss":
        out = gen_independent_gauss(spec.n, spec.seed, spec.d)
    else:
        out = gen_independent_uniform(spec.n, spec.seed, spec.d)
    if isinstance(out, PairedSample):
        return out.points()
    return np.asarray(out.data)


# -- exact discrete oracle ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Finite-atom joint law: ``points[k]`` carries probability ``probs[k]``."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pr = np.array(self.probs, dtype=float).ravel()
        if pts.shape[0] != pr.size or pr.size == 0:
            raise ValueError("need one probability per atom")
        if not np.all(pr > 0):
            raise ValueError("atom probabilities must be positive")
        if abs(math.fsum(pr) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(pr)!r}, not 1")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("duplicate atoms")
        if not np.isfinite(pts).all():
            raise ValueError("atom coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def from_table(cls, xs, ys, table) -> "DiscreteJoint":
        """Bivariate law from a probability table ``table[i, j] = P(xs[i], ys[j])``.

        Zero cells are dropped.
        """
        table = np.asarray(table, dtype=float)
        pts, pr = [], []
        for i, a in enumerate(xs):
            for j, b in enumerate(ys):
                if table[i, j] > 0:
                    pts.append((a, b))
                    pr.append(table[i, j])
        return cls(np.array(pts), np.array(pr))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def support(self, axis: int) -> np.ndarray:
        return np.unique(self.points[:, axis])

    def marginal(self, axes) -> "DiscreteJoint":
        """Law of the coordinates listed in ``axes``."""
        axes = list(axes)
        sub = self.points[:, axes]
        keys, inverse = np.unique(sub, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        mass = [math.fsum(self.probs[inverse == k]) for k in range(keys.shape[0])]
        return DiscreteJoint(keys, np.array(mass))

    def mass(self, rect: Rectangle) -> float:
        return math.fsum(self.probs[rect.contains(self.points)])


@dataclass(frozen=True, eq=False)
class OracleMoments:
    mass: float
    mean: np.ndarray
    cov_matrix: np.ndarray
    cor_matrix: np.ndarray

    @property
    def cov(self) -> float:
        return float(self.cov_matrix[0, 1])

    @property
    def cor(self) -> float:
        return float(self.cor_matrix[0, 1])


def oracle_cond_moments(joint: DiscreteJoint, rect: Rectangle) -> OracleMoments:
    """Exact conditional means, covariances and correlations given ``rect``.

    Every sum is correctly rounded (``math.fsum``) and the covariances are
    taken about the exact conditional means. Degenerate coordinates follow
    the Kronecker-delta convention in the correlation matrix.
    """
    if rect.dim != joint.dim:
        raise ValueError(f"rectangle has dimension {rect.dim}, joint has {joint.dim}")
    inside = rect.contains(joint.points)
    w = joint.probs[inside]
    pts = joint.points[inside]
    mass = math.fsum(w)
    if not mass > 0:
        raise ValueError("rectangle has zero probability")
    w = w / mass
    d = joint.dim
    mean = np.array([math.fsum(w * pts[:, k]) for k in range(d)])
    dev = pts - mean
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            cov[i, j] = cov[j, i] = math.fsum(w * dev[:, i] * dev[:, j])
    var = np.diag(cov)
    cor = np.eye(d)
    live = var > 0
    for i in range(d):
        for j in range(d):
            if i != j and live[i] and live[j]:
                cor[i, j] = min(1.0, max(-1.0, cov[i, j] / math.sqrt(var[i] * var[j])))
    return OracleMoments(mass, mean, cov, cor)


def oracle_is_independent(joint: DiscreteJoint, tol: float = PROB_TOL) -> bool:
    """True when the joint equals the product of its one-dimensional marginals.

    The comparison runs over the whole product of marginal supports, so a
    missing atom counts as mass 0.
    """
    margins = [joint.marginal([k]) for k in range(joint.dim)]
    lookup = {tuple(p): q for p, q in zip(joint.points, joint.probs)}
    tables = [dict(zip(m.points[:, 0], m.probs)) for m in margins]
    for combo in itertools.product(*[m.points[:, 0] for m in margins]):
        expected = math.prod(t[c] for t, c in zip(tables, combo))
        if abs(lookup.get(tuple(combo), 0.0) - expected) > tol:
            return False
    return True


def _axis_candidates(values: np.ndarray):
    """Closed intervals spanning runs of consecutive atom coordinates.

    A single-value run gets a small positive width so it is a proper
    bounded interval, without reaching the next atom.
    """
    out = []
    for i in range(values.size):
        for j in range(i, values.size):
            lo, hi = values[i], values[j]
            if i == j:
                gap = values[j + 1] - hi if j + 1 < values.size else 1.0
                hi = hi + gap / 2
            out.append(Interval.bounded(float(lo), float(hi)))
    return out


def atom_rectangles(joint: DiscreteJoint):
    """All rectangles whose sides start and end at atom coordinates."""
    per_axis = [_axis_candidates(joint.support(k)) for k in range(joint.dim)]
    for axes in itertools.product(*per_axis):
        yield Rectangle(axes)


def oracle_max_abs_cov(joint: DiscreteJoint) -> float:
    """Largest ``|conditional cov|`` over atom-aligned rectangles of positive mass.

    Between consecutive atoms the conditional moments are constant, so for a
    finite support this finite family is as strong as all bounded intervals.
    """
    worst = 0.0
    iu, ju = np.triu_indices(joint.dim, k=1)
    for rect in atom_rectangles(joint):
        if not np.any(rect.contains(joint.points)):
            continue
        mom = oracle_cond_moments(joint, rect)
        worst = max(worst, float(np.abs(mom.cov_matrix[iu, ju]).max()))
    return worst


def random_joint(rng: np.random.Generator, max_x: int = 4, max_y: int = 4) -> DiscreteJoint:
    """Random bivariate law on at most ``max_x`` by ``max_y`` support points.

    Each axis has 2 to ``max`` points. A third of the draws are products of
    random marginals, a third are random tables and a third are random tables
    with one cell zeroed.
    """
    kx = int(rng.integers(2, max_x + 1))
    ky = int(rng.integers(2, max_y + 1))
    xs = np.sort(rng.choice(np.arange(-5, 6), size=kx, replace=False)).astype(float)
    ys = np.sort(rng.choice(np.arange(-5, 6), size=ky, replace=False)).astype(float)
    kind = rng.integers(0, 3)
    if kind == 0:
        px = rng.dirichlet(np.ones(kx))
        py = rng.dirichlet(np.ones(ky))
        table = np.outer(px, py)
    else:
        table = rng.dirichlet(np.ones(kx * ky)).reshape(kx, ky)
        if kind == 2 and kx * ky > 2:
            table.flat[rng.integers(0, kx * ky)] = 0.0
    table = table / math.fsum(table.ravel())
    return DiscreteJoint.from_table(xs, ys, table)


def joint_as_sample(joint: DiscreteJoint, counts) -> np.ndarray:
    """Replicate atom ``k`` ``counts[k]`` times (rational-weight check helper)."""
    return np.repeat(joint.points, np.asarray(counts, dtype=int), axis=0)


def xor_joint() -> DiscreteJoint:
    """Uniform law on the four points of {-1, 1}^3 with ``z = x y``."""
    pts = [(x, y, x * y) for x in (-1.0, 1.0) for y in (-1.0, 1.0)]
    return DiscreteJoint(np.array(pts), np.full(4, 0.25))


def dependent_2x2() -> DiscreteJoint:
    return DiscreteJoint.from_table([0.0, 1.0], [0.0, 1.0], [[0.4, 0.1], [0.1, 0.4]])
