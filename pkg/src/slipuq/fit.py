"""Compute polynomial-chaos coefficients from forward-model ensembles.

Two routes: pseudo-spectral projection against a sparse quadrature, and
sparse l1 recovery from random samples with a cross-validated residual
budget.  Surrogate quality is scored by the normalized relative error
(NRE) on held-out runs.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import PCExpansion
from .bpdn import BpdnOptions, bpdn_solve

logger = logging.getLogger(__name__)


@dataclass
class RegressionSystem:
    """Basis evaluations and model outputs at a set of sample points."""

    psi: np.ndarray           # (S, R)
    outputs: np.ndarray       # (S, n_out)
    provenance: str = ""

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.outputs.ndim == 1:
            self.outputs = self.outputs[:, None]
        if self.psi.shape[0] != self.outputs.shape[0]:
            raise ValueError("sample counts of Psi and outputs differ")
        if not (np.all(np.isfinite(self.psi)) and np.all(np.isfinite(self.outputs))):
            raise ValueError("non-finite entries in regression system")


def build_regression_system(basis, points, outputs, provenance=""):
    return RegressionSystem(basis.eval_matrix(points), outputs, provenance)


def nisp_project(outputs, quad, basis, outputs_grid=None):
    """Galerkin projection with discrete quadrature:

        g_k = sum_q G(xi_q) psi_k(xi_q) w_q / <psi_k, psi_k>

    outputs must hold one row per quadrature node, aligned 1:1 with
    quad.nodes.
    """
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 1:
        outputs = outputs[:, None]
    if outputs.shape[0] != len(quad):
        raise ValueError(
            f"{outputs.shape[0]} ensemble rows for {len(quad)} quadrature nodes")
    if basis.m != quad.m:
        raise ValueError("basis and quadrature dimension mismatch")
    psi = basis.eval_matrix(quad.nodes)
    coeffs = psi.T @ (quad.weights[:, None] * outputs)
    coeffs /= basis.norms_sq()[:, None]
    return PCExpansion(basis=basis, coefficients=coeffs, outputs=outputs_grid)


def ensemble_regression_system(ensemble, basis, provenance=""):
    """RegressionSystem from a complete EnsembleMatrix."""
    return RegressionSystem(basis.eval_matrix(ensemble.points),
                            ensemble.output_matrix(), provenance)


def nisp_from_ensemble(ensemble, quad, basis, outputs_grid=None):
    """nisp_project with node/ensemble alignment enforced."""
    if ensemble.points.shape != quad.nodes.shape or not np.allclose(
            ensemble.points, quad.nodes, atol=1e-12):
        raise ValueError("ensemble rows are not aligned with quadrature nodes")
    return nisp_project(ensemble.output_matrix(), quad, basis, outputs_grid)


def cross_validate_delta(psi, y, folds=4, candidates=None, options=None):
    """Pick the residual budget by K-fold reconstruction/validation splits.

    For each candidate the solver is fit on the reconstruction rows and
    scored by the validation residual norm; the winner is rescaled by
    sqrt(S / S_reconstruction) to account for the larger fit-time system.

    Parameters
    ----------
    psi, y : regression matrix and one output column
    folds : int, >= 2; rows are assigned round-robin
    candidates : iterable of float, optional
        Defaults to 12 log-spaced values spanning [1e-6, 1] * ||y||.

    Returns
    -------
    float
        The selected, rescaled delta.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    S = y.size
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if S < 2 * folds:
        raise ValueError(f"need at least {2 * folds} samples for {folds} folds")
    if candidates is None:
        candidates = np.linalg.norm(y) * np.logspace(-6, 0, 12)
    candidates = np.asarray(list(candidates), dtype=float)
    if candidates.size == 0 or np.any(candidates < 0):
        raise ValueError("candidate deltas must be non-negative")
    # Candidates below the attainable residual floor would otherwise grind
    # through the full budget; ranking them only needs a moderate solve.
    options = options or BpdnOptions(max_iter=2000)

    fold_of = np.arange(S) % folds
    n_rec = S - np.bincount(fold_of, minlength=folds)
    scores = np.zeros(candidates.size)
    for k in range(folds):
        val = fold_of == k
        rec = ~val
        warm = None
        # large deltas give the sparsest solutions; sweep downwards and warm
        # start each solve from the previous one
        for idx in np.argsort(candidates)[::-1]:
            sol = bpdn_solve(psi[rec], y[rec], float(candidates[idx]),
                             options=options, x0=warm)
            warm = sol.coefficients
            scores[idx] += np.linalg.norm(y[val] - psi[val] @ sol.coefficients)
    scores /= folds
    best = int(np.argmin(scores))
    scale = np.sqrt(S / float(np.min(n_rec)))
    delta_star = float(candidates[best] * scale)
    logger.debug("cross-validation scores %s -> delta*=%.3e", scores, delta_star)
    return delta_star


@dataclass
class ColumnFit:
    delta: float
    residual_norm: float
    iterations: int
    converged: bool
    sparsity: int


@dataclass
class FitReport:
    """Per-output-column diagnostics of a sparse-recovery fit."""

    columns: list = field(default_factory=list)

    @property
    def all_converged(self):
        return all(c.converged for c in self.columns)

    def summary(self):
        if not self.columns:
            return {}
        return {
            "columns": len(self.columns),
            "converged": sum(c.converged for c in self.columns),
            "median_sparsity": float(np.median([c.sparsity for c in self.columns])),
            "median_delta": float(np.median([c.delta for c in self.columns])),
            "total_iterations": int(sum(c.iterations for c in self.columns)),
        }


def fit_bpdn_expansion(system, basis, deltas=None, delta_rel=None,
                       cv_folds=None, cv_candidates=None, cv_stride=1,
                       options=None, outputs_grid=None):
    """Fit every output column of a RegressionSystem by sparse recovery.

    Exactly one of the delta policies applies, checked in this order:
      * deltas: explicit per-column residual budgets (scalar broadcast),
      * delta_rel: delta = delta_rel * ||column||_2, floored at 1.05x the
        column's least-squares residual (an overdetermined system cannot
        reach a budget below that floor),
      * cv_folds: per-column cross-validation (the default, folds=4).
        With cv_stride > 1 only every stride-th column is cross-validated
        and columns in between reuse the latest delta scaled to their own
        output norm.

    Returns (PCExpansion, FitReport).
    """
    options = options or BpdnOptions()
    G = system.outputs
    n_out = G.shape[1]
    coeffs = np.zeros((system.psi.shape[1], n_out))
    report = FitReport()
    if deltas is not None:
        deltas = np.broadcast_to(np.asarray(deltas, dtype=float), (n_out,))
    ls_floor = None
    if delta_rel is not None and system.psi.shape[0] > system.psi.shape[1]:
        ls_coef, *_ = np.linalg.lstsq(system.psi, G, rcond=None)
        ls_floor = np.linalg.norm(G - system.psi @ ls_coef, axis=0)
    warm = None
    cv_delta_rel = None
    for j in range(n_out):
        y = G[:, j]
        ynorm = float(np.linalg.norm(y))
        if deltas is not None:
            delta = float(deltas[j])
        elif delta_rel is not None:
            delta = float(delta_rel) * ynorm
            if ls_floor is not None:
                delta = max(delta, 1.05 * float(ls_floor[j]))
        elif j % cv_stride == 0 or cv_delta_rel is None:
            delta = cross_validate_delta(system.psi, y, folds=cv_folds or 4,
                                         candidates=cv_candidates,
                                         options=options)
            cv_delta_rel = delta / ynorm if ynorm > 0 else None
        else:
            delta = cv_delta_rel * ynorm
        sol = bpdn_solve(system.psi, y, delta, options=options, x0=warm)
        warm = sol.coefficients  # adjacent time columns are similar
        coeffs[:, j] = sol.coefficients
        report.columns.append(ColumnFit(delta, sol.residual_norm,
                                        sol.iterations, sol.converged,
                                        sol.sparsity()))
    exp = PCExpansion(basis=basis, coefficients=coeffs, outputs=outputs_grid)
    return exp, report


def nre(surrogate, points, outputs, warn_disjoint_check=None):
    """Normalized relative error per output column on validation runs:

        NRE_j = ||G_j - PC_j||_2 / ||G_j||_2

    Columns with zero validation norm are undefined and returned as NaN.

    warn_disjoint_check may carry the fitting points; overlap with the
    validation points is only warned about, not rejected.
    """
    from .basis import pce_eval_many

    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 1:
        outputs = outputs[:, None]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if warn_disjoint_check is not None:
        fit_pts = np.atleast_2d(np.asarray(warn_disjoint_check, dtype=float))
        overlap = sum(
            bool(np.any(np.all(np.abs(fit_pts - p) < 1e-12, axis=1)))
            for p in points)
        if overlap:
            logger.warning("%d validation points coincide with fitting points",
                           overlap)
    pred = pce_eval_many(surrogate, points)
    diff = np.linalg.norm(pred - outputs, axis=0)
    denom = np.linalg.norm(outputs, axis=0)
    out = np.full(outputs.shape[1], np.nan)
    ok = denom > 0
    out[ok] = diff[ok] / denom[ok]
    if np.any(~ok):
        logger.warning("%d output columns have zero validation norm; "
                       "NRE undefined there", int(np.sum(~ok)))
    return out
