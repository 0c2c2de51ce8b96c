"""Basis-pursuit denoising by Pareto root finding.

Solves

    minimize ||g||_1  subject to  ||y - Psi g||_2 <= delta

through a sequence of LASSO subproblems

    minimize 0.5 ||y - Psi g||_2^2  subject to  ||g||_1 <= tau

handled by a spectral projected gradient method (Barzilai-Borwein steps,
non-monotone line search, Euclidean projection onto the l1 ball), with
Newton updates of tau on the Pareto curve phi(tau) = ||residual||_2 until
phi(tau) = delta.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class BpdnSolution:
    """Result of one basis-pursuit denoise solve."""

    coefficients: np.ndarray
    residual_norm: float
    delta: float
    iterations: int
    converged: bool
    tau: float = 0.0
    newton_steps: int = 0

    def sparsity(self, threshold=1e-10):
        """Number of coefficients larger than the threshold in magnitude."""
        return int(np.sum(np.abs(self.coefficients) > threshold))


def project_l1_ball(v, tau):
    """Euclidean projection of v onto {x : ||x||_1 <= tau}."""
    if tau < 0:
        raise ValueError("radius must be non-negative")
    a = np.abs(v)
    if a.sum() <= tau:
        return v.copy()
    if tau == 0.0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    cumsum = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u > (cumsum - tau) / ks)[0][-1]
    theta = (cumsum[rho] - tau) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def _spg_lasso(psi, y, tau, x0, gtol, max_iter, history=3,
               step_min=1e-16, step_max=1e5):
    """Spectral projected gradient for the LASSO subproblem.

    Returns (x, r, g, n_iter) with r = y - Psi x and g = -Psi^T r.
    Stops on a relative duality-gap criterion or the iteration budget.
    """
    x = project_l1_ball(np.asarray(x0, dtype=float), tau)
    r = y - psi @ x
    g = -(psi.T @ r)
    f = 0.5 * float(r @ r)
    last_f = [f] * history

    dx = project_l1_ball(x - g, tau) - x
    dxnorm = np.max(np.abs(dx)) if dx.size else 0.0
    step = step_max if dxnorm < 1.0 / step_max else \
        min(step_max, max(step_min, 1.0 / dxnorm))

    n_iter = 0
    while n_iter < max_iter:
        # duality gap for the LASSO problem at feasible x
        gap = float(r @ (r - y)) + tau * float(np.max(np.abs(g))) if x.size else 0.0
        if abs(gap) / max(1.0, f) <= gtol:
            break
        n_iter += 1

        f_max = max(last_f)
        scale = 1.0
        accepted = False
        x_new = x
        for _ in range(10):
            x_new = project_l1_ball(x - scale * step * g, tau)
            r_new = y - psi @ x_new
            f_new = 0.5 * float(r_new @ r_new)
            d = x_new - x
            gtd = float(g @ d)
            if gtd >= 0.0:
                break
            if f_new <= f_max + 1e-4 * scale * gtd:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            # curvilinear search failed (typically an oversized spectral
            # step); retry along the fixed feasible direction
            d = project_l1_ball(x - step * g, tau) - x
            gtd = -abs(float(g @ d))
            if gtd >= 0.0:
                break
            pd = psi @ d
            t = 1.0
            for _ in range(30):
                r_new = r - t * pd
                f_new = 0.5 * float(r_new @ r_new)
                if f_new <= f_max + 1e-4 * t * gtd:
                    x_new = x + t * d
                    accepted = True
                    break
                # safeguarded quadratic interpolation
                if t <= 0.1:
                    t *= 0.5
                else:
                    tq = -gtd * t**2 / (2.0 * (f_new - f - t * gtd))
                    t = tq if 0.1 * t <= tq <= 0.9 * t and np.isfinite(tq) \
                        else 0.5 * t
            if not accepted:
                break

        g_new = -(psi.T @ r_new)
        s = x_new - x
        z = g_new - g
        sts = float(s @ s)
        stz = float(s @ z)
        step = step_max if stz <= 0 else min(step_max, max(step_min, sts / stz))
        x, r, g, f = x_new, r_new, g_new, f_new
        last_f[n_iter % history] = f
    return x, r, g, n_iter


@dataclass
class BpdnOptions:
    """Solver tuning knobs; the defaults follow the usual SPGL1 settings."""

    opt_tol: float = 1e-6     # relative tolerance on |phi(tau) - delta|
    bp_tol: float = 1e-6      # ||r|| <= bp_tol * ||y|| counts as a solution
    lasso_gtol: float = 1e-6  # relative duality-gap tolerance per subproblem
    max_iter: int = 10_000    # total SPG iteration budget
    max_newton: int = 60
    history: int = 3          # non-monotone line search window


def bpdn_solve(psi, y, delta, options=BpdnOptions(), x0=None):
    """Solve min ||g||_1 s.t. ||y - Psi g||_2 <= delta for one output column.

    Parameters
    ----------
    psi : ndarray, shape (S, R)
        Basis evaluations at the sample points.
    y : ndarray, shape (S,)
        Model outputs at the sample points.
    delta : float
        Residual budget (>= 0).
    options : BpdnOptions
    x0 : ndarray, optional
        Warm-start coefficients.

    Returns
    -------
    BpdnSolution
        converged=False (with a log record) when the iteration budget is
        exhausted before the residual constraint is met.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if psi.ndim != 2 or psi.shape[0] != y.size:
        raise ValueError("Psi rows must match output length")
    if not np.any(psi):
        raise ValueError("Psi is identically zero")

    ynorm = float(np.linalg.norm(y))
    if ynorm <= delta:
        # zero is feasible and has minimal l1 norm
        return BpdnSolution(np.zeros(psi.shape[1]), ynorm, delta, 0, True)

    # l1 recovery is scale-equivariant; solving the unit-norm problem keeps
    # the stopping criteria meaningful for columns of any magnitude
    yscale = ynorm
    y = y / yscale
    delta_s = delta / yscale
    ynorm = 1.0

    x = np.zeros(psi.shape[1]) if x0 is None else \
        np.asarray(x0, dtype=float) / yscale
    tau = float(np.sum(np.abs(x)))
    iters_left = options.max_iter
    total_iters = 0
    rnorm = ynorm
    converged = False
    newton = 0
    # A subproblem duality gap of eta leaves a residual excess of roughly
    # eta / rnorm, so the gap tolerance must track rnorm * (rnorm - delta)
    # for the Newton iteration to resolve the root.
    gap_floor = options.opt_tol * max(delta_s, options.bp_tol * ynorm)
    for newton in range(1, options.max_newton + 1):
        gtol = min(options.lasso_gtol,
                   max(1e-15, 0.1 * rnorm * max(rnorm - delta_s, gap_floor)))
        x, r, g, used = _spg_lasso(psi, y, tau, x, gtol,
                                   iters_left, history=options.history)
        total_iters += used
        iters_left -= used
        rnorm = float(np.linalg.norm(r))
        if rnorm <= delta_s * (1.0 + 1e-6):
            # feasible: a BPDN solution
            converged = True
            break
        if rnorm <= options.bp_tol * ynorm:
            # residual negligible relative to the data: BP limit
            converged = True
            break
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= 1e-13 * max(1.0, rnorm):
            # least-squares point: the residual cannot shrink further
            break
        if iters_left <= 0:
            break
        tau_new = tau + rnorm * (rnorm - delta_s) / gnorm
        if tau_new <= tau * (1.0 + 1e-12):
            tau_new = tau * (1.0 + 1e-6) + 1e-12
        tau = tau_new
    if not converged:
        logger.warning(
            "bpdn did not converge: delta=%.3e residual=%.3e after %d iterations",
            delta, rnorm * yscale, total_iters)
    return BpdnSolution(x * yscale, rnorm * yscale, delta, total_iters,
                        converged, tau=tau * yscale, newton_steps=newton)
