"""Multivariate Legendre polynomial-chaos basis.

Total-order index sets, Legendre evaluation on [-1, 1], basis norms under
the uniform probability measure, surrogate evaluation, moments, and Sobol
sensitivity indices computed directly from the coefficients.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

_DOMAIN_TOL = 1e-12


def total_order_indices(m, p):
    """All multi-indices of dimension m with total degree <= p.

    Ordering is graded: ascending total degree, and within a degree the
    index with the larger leading entries comes first, so for m=2, p=2 the
    sequence is (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).  The all-zeros
    index is always first and the ordering is stable across runs.

    Parameters
    ----------
    m : int
        Number of dimensions (>= 1).
    p : int
        Truncation order (>= 0).

    Returns
    -------
    ndarray of int, shape (C(m+p, p), m)
    """
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    if p < 0:
        raise ValueError(f"order must be >= 0, got {p}")

    def compositions(dim, total):
        # All dim-tuples of non-negative ints summing to `total`, first
        # coordinate descending.
        if dim == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for tail in compositions(dim - 1, total - head):
                yield (head,) + tail

    rows = []
    for degree in range(p + 1):
        rows.extend(compositions(m, degree))
    out = np.array(rows, dtype=np.int64)
    assert out.shape == (math.comb(m + p, p), m)
    return out


def legendre_eval(n, x):
    """Standard (non-normalized) Legendre polynomial L_n(x), L_n(1) = 1.

    Uses the forward three-term recurrence, stable on [-1, 1] for the
    orders used here.  Accepts scalars or arrays.
    """
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _DOMAIN_TOL):
        raise ValueError("argument outside [-1, 1]")
    if n == 0:
        return np.ones_like(x) if x.ndim else 1.0
    prev = np.ones_like(x)
    cur = x.copy()
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1) * x * cur - k * prev) / (k + 1)
    return cur if x.ndim else float(cur)


def legendre_table(p, x):
    """L_0(x) .. L_p(x) stacked along the first axis, shape (p+1,) + x.shape."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _DOMAIN_TOL):
        raise ValueError("argument outside [-1, 1]")
    table = np.empty((p + 1,) + x.shape, dtype=float)
    table[0] = 1.0
    if p >= 1:
        table[1] = x
    for k in range(1, p):
        table[k + 1] = ((2 * k + 1) * x * table[k] - k * table[k - 1]) / (k + 1)
    return table


def basis_eval(index, xi):
    """Tensor-product basis function: prod_i L_{index_i}(xi_i)."""
    index = np.asarray(index, dtype=np.int64)
    xi = np.asarray(xi, dtype=float)
    if index.shape != xi.shape:
        raise ValueError(f"index dim {index.shape} != point dim {xi.shape}")
    out = 1.0
    for n, x in zip(index, xi):
        out *= legendre_eval(int(n), float(x))
    return out


def basis_norm_sq(index):
    """<psi_k, psi_k> under the uniform density on [-1,1]^m: prod 1/(2n_i+1)."""
    index = np.asarray(index, dtype=np.int64)
    return float(np.prod(1.0 / (2.0 * index + 1.0)))


@dataclass(frozen=True)
class PCBasis:
    """Total-order Legendre basis of dimension m truncated at order p."""

    m: int
    p: int
    indices: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.indices is None:
            object.__setattr__(self, "indices", total_order_indices(self.m, self.p))
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.shape[1] != self.m:
            raise ValueError("index width does not match dimension")

    def __len__(self):
        return self.indices.shape[0]

    def norms_sq(self):
        """Vector of <psi_k, psi_k> for every basis term."""
        return np.prod(1.0 / (2.0 * self.indices + 1.0), axis=1)

    def eval_matrix(self, points):
        """Basis evaluations Psi[s, k] = psi_k(points[s]), shape (S, R)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.m:
            raise ValueError(f"points have dim {pts.shape[1]}, basis has {self.m}")
        # table[d, n, s] = L_n(points[s, d])
        table = np.stack([legendre_table(self.p, pts[:, d]) for d in range(self.m)])
        psi = np.ones((pts.shape[0], len(self)))
        for d in range(self.m):
            psi *= table[d, self.indices[:, d], :].T
        return psi


@dataclass(frozen=True)
class OutputGrid:
    """Labels for surrogate output columns: gauges x shared time base.

    Column ordering is gauge-major: column = gauge_pos * n_times + time_pos.
    """

    gauge_ids: tuple
    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gauge_ids", tuple(self.gauge_ids))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))

    @property
    def n_outputs(self):
        return len(self.gauge_ids) * self.times.size

    def column_slice(self, gauge_pos):
        n = self.times.size
        return slice(gauge_pos * n, (gauge_pos + 1) * n)

    def labels(self):
        return [f"g{g}:t{k}" for g in self.gauge_ids for k in range(self.times.size)]


@dataclass
class PCExpansion:
    """Polynomial-chaos surrogate: coefficients over a PCBasis.

    coefficients has shape (len(basis), n_outputs); outputs is optional
    column labelling (gauge ids and a shared time base).
    """

    basis: PCBasis
    coefficients: np.ndarray
    outputs: OutputGrid = None

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != len(self.basis):
            raise ValueError(
                f"{coeffs.shape[0]} coefficient rows for {len(self.basis)} basis terms"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite coefficients")
        if self.outputs is not None and self.outputs.n_outputs != coeffs.shape[1]:
            raise ValueError("output labels do not match coefficient columns")
        self.coefficients = coeffs

    @property
    def n_outputs(self):
        return self.coefficients.shape[1]


def pce_eval(exp, xi):
    """Evaluate the surrogate at one canonical point; returns (n_outputs,)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or xi.size != exp.basis.m:
        raise ValueError(f"point dim {xi.shape} does not match basis dim {exp.basis.m}")
    psi = exp.basis.eval_matrix(xi[None, :])[0]
    return psi @ exp.coefficients


def pce_eval_many(exp, points):
    """Evaluate the surrogate at many points; returns (n_points, n_outputs)."""
    psi = exp.basis.eval_matrix(points)
    return psi @ exp.coefficients


def pce_mean(exp):
    """Mean of the surrogate output: the all-zeros coefficient row."""
    return exp.coefficients[0].copy()


def pce_variance(exp):
    """Variance per output: sum_{k>=1} g_k^2 <psi_k, psi_k>."""
    norms = exp.basis.norms_sq()
    var = np.einsum("ko,ko,k->o", exp.coefficients[1:], exp.coefficients[1:],
                    norms[1:])
    return np.maximum(var, 0.0)


def sobol_indices(exp, dim):
    """Main and total Sobol sensitivity indices for one input dimension.

    main  = variance carried by terms supported exactly on {dim} / total
    total = variance carried by terms whose support includes dim / total

    Zero-variance outputs get (0, 0) and raise a warning.

    Returns
    -------
    (main, total) : ndarrays of shape (n_outputs,)
    """
    if not 0 <= dim < exp.basis.m:
        raise ValueError(f"dimension {dim} out of range for m={exp.basis.m}")
    idx = exp.basis.indices
    norms = exp.basis.norms_sq()
    contrib = exp.coefficients**2 * norms[:, None]
    active = idx > 0
    only_dim = active[:, dim] & (active.sum(axis=1) == 1)
    touches_dim = active[:, dim]
    total_var = contrib[1:].sum(axis=0)
    main = contrib[only_dim].sum(axis=0)
    total = contrib[touches_dim].sum(axis=0)
    degenerate = total_var <= 0.0
    if np.any(degenerate):
        warnings.warn("zero-variance expansion: Sobol indices set to 0",
                      RuntimeWarning, stacklevel=2)
    safe = np.where(degenerate, 1.0, total_var)
    main = np.where(degenerate, 0.0, main / safe)
    total = np.where(degenerate, 0.0, total / safe)
    return main, total
