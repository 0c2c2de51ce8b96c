"""Experiment designs in canonical coordinates.

Nested Smolyak sparse quadrature built on the Gauss-Patterson sequence,
Latin-hypercube sampling, and the affine map between physical slips and
the canonical hypercube [-1, 1]^m.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._patterson import EXACTNESS, NODES, WEIGHTS

MAX_LEVEL = len(NODES) - 1
_MERGE_DECIMALS = 12  # nodes equal within 1e-12 per coordinate are merged


@dataclass(frozen=True)
class SlipBounds:
    """Physical slip range in meters; canonical -1 maps to lo, +1 to hi."""

    lo: float = 0.0
    hi: float = 30.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self):
        return self.hi - self.lo


def slip_to_canonical(s, bounds=SlipBounds()):
    """Map slips in [lo, hi] to xi in [-1, 1]: xi = (2s - (lo+hi)) / (hi-lo)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < bounds.lo - 1e-12 * bounds.width) or np.any(
            s > bounds.hi + 1e-12 * bounds.width):
        raise ValueError(f"slip outside [{bounds.lo}, {bounds.hi}]")
    return (2.0 * s - (bounds.lo + bounds.hi)) / bounds.width


def canonical_to_slip(xi, bounds=SlipBounds()):
    """Inverse of slip_to_canonical."""
    xi = np.asarray(xi, dtype=float)
    if np.any(np.abs(xi) > 1.0 + 1e-12):
        raise ValueError("canonical point outside [-1, 1]")
    return 0.5 * (xi * bounds.width + bounds.lo + bounds.hi)


def gauss_patterson(level):
    """1D nested Gauss-Patterson rule normalized to the uniform probability
    measure on [-1, 1] (weights sum to 1).

    Levels 0..5 give 1, 3, 7, 15, 31, 63 points with polynomial exactness
    1, 5, 11, 23, 47, 95.
    """
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level {level} outside tabulated range 0..{MAX_LEVEL}")
    nodes = np.array(NODES[level])
    weights = np.array(WEIGHTS[level]) / 2.0
    return nodes, weights


@dataclass
class SparseQuadrature:
    """Multi-dimensional quadrature: nodes in [-1,1]^m, weights w.r.t. the
    uniform probability measure (sum to 1; individual weights may be
    negative from the sparse combination)."""

    nodes: np.ndarray
    weights: np.ndarray
    level: int
    rule: str = "gauss-patterson"

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.nodes.shape[0] != self.weights.size:
            raise ValueError("node/weight count mismatch")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()}, expected 1")

    def __len__(self):
        return self.weights.size

    @property
    def m(self):
        return self.nodes.shape[1]

    @property
    def exactness_degree(self):
        """Total polynomial degree integrated exactly by the sparse rule."""
        return 2 * self.level + 1


def smolyak_grid(m, level):
    """Smolyak sparse grid from the nested Gauss-Patterson family.

    The level-L rule in m dimensions combines tensor products of the 1D
    rules at levels l with  max(0, L-m+1) <= sum(l) <= L  using the usual
    alternating binomial coefficients; duplicate nodes (within 1e-12 per
    coordinate) are merged with summed weights.  Exact for all polynomials
    of total degree <= 2L+1.
    """
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level {level} outside tabulated range 0..{MAX_LEVEL}")
    rules = [gauss_patterson(l) for l in range(level + 1)]

    def level_vectors(dim, total):
        if dim == 1:
            yield (total,)
            return
        for head in range(min(total, level) + 1):
            for tail in level_vectors(dim - 1, total - head):
                yield (head,) + tail

    acc = {}
    for ell_sum in range(max(0, level - m + 1), level + 1):
        coeff = (-1) ** (level - ell_sum) * math.comb(m - 1, level - ell_sum)
        for lvec in level_vectors(m, ell_sum):
            grids = [rules[l][0] for l in lvec]
            wts = [rules[l][1] for l in lvec]
            mesh = np.meshgrid(*grids, indexing="ij")
            pts = np.stack([g.ravel() for g in mesh], axis=1)
            w = wts[0]
            for wd in wts[1:]:
                w = np.multiply.outer(w, wd)
            w = coeff * w.ravel()
            keys = np.round(pts, _MERGE_DECIMALS)
            for key, point, weight in zip(map(tuple, keys), pts, w):
                if key in acc:
                    acc[key][1] += weight
                else:
                    acc[key] = [point, weight]

    nodes = np.array([v[0] for v in acc.values()])
    weights = np.array([v[1] for v in acc.values()])
    order = np.lexsort(nodes.T[::-1])
    return SparseQuadrature(nodes[order], weights[order], level)


@dataclass
class DesignMatrix:
    """Sample points in [-1, 1]^m with provenance for manifests."""

    points: np.ndarray
    kind: str
    seed: int = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if np.any(np.abs(self.points) > 1.0 + 1e-12):
            raise ValueError("design points outside [-1, 1]")
        if self.kind not in ("smolyak", "lhs"):
            raise ValueError(f"unknown design kind {self.kind!r}")

    def __len__(self):
        return self.points.shape[0]

    @property
    def m(self):
        return self.points.shape[1]


def lhs_sample(m, n, seed):
    """Latin-hypercube sample on [-1, 1]^m: per dimension exactly one point,
    uniformly jittered, in each of the n equal strata.  Deterministic under
    the seed; no maximin or other optimization."""
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    pts = np.empty((n, m))
    for d in range(m):
        perm = rng.permutation(n)
        jitter = rng.uniform(size=n)
        pts[:, d] = -1.0 + 2.0 * (perm + jitter) / n
    return DesignMatrix(points=pts, kind="lhs", seed=seed)
