"""Forward-UQ and goodness-of-fit analytics.

Moment bands from expansion coefficients, empirical CDFs, residual
variances against observations, and arrival-time / maximum-wave-amplitude
sweeps over one-at-a-time design slices.
"""

from dataclasses import dataclass

import numpy as np

from .basis import pce_mean, pce_variance
from .design import SlipBounds, canonical_to_slip
from .swe import arrival_time, max_wave_amplitude


@dataclass
class MomentBand:
    """Mean and +-2 sigma envelope of one gauge's surrogate output."""

    gauge_id: int
    times: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def moment_bands(exp, n_sigma=2.0):
    """Per-gauge mean and +-n_sigma bands from the PC coefficients."""
    if exp.outputs is None:
        raise ValueError("expansion carries no output grid")
    mean = pce_mean(exp)
    sigma = np.sqrt(pce_variance(exp))
    bands = []
    for pos, gid in enumerate(exp.outputs.gauge_ids):
        sl = exp.outputs.column_slice(pos)
        bands.append(MomentBand(
            gauge_id=gid,
            times=exp.outputs.times.copy(),
            mean=mean[sl],
            lower=mean[sl] - n_sigma * sigma[sl],
            upper=mean[sl] + n_sigma * sigma[sl],
        ))
    return bands


def empirical_cdf(samples):
    """Right-continuous empirical CDF; returns (sorted values, F values)."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("no samples")
    return x, np.arange(1, x.size + 1) / x.size


def evaluate_cdf(samples, q):
    """F(q) = (# samples <= q) / n for scalar or array q."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    return np.searchsorted(x, q, side="right") / x.size


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov sup-distance between empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def residual_variance(obs, model):
    """Population variance of the pointwise (model - obs) differences.

    Centered, so a constant offset between the records contributes
    nothing; report the mean bias separately where it matters.
    """
    if obs.times.shape != model.times.shape or not np.allclose(
            obs.times, model.times):
        raise ValueError("records are not aligned")
    diff = model.eta - obs.eta
    return float(np.var(diff))


def ensemble_sweep(ensemble, threshold=0.05, axis_tol=1e-9,
                   bounds=SlipBounds()):
    """Arrival time and MWA along one-at-a-time design slices.

    Extracts the design rows where exactly one canonical coordinate departs
    from the midpoint (the rest pinned at 0, i.e. mid-range slip) and
    tabulates, per gauge and per varied dimension, the slip value, the
    arrival time, and the maximum wave amplitude.

    Returns {gauge_id: {dim: list of (slip_m, arrival_s or None, mwa_m)}};
    empty when the design has no such slices.
    """
    pts = ensemble.points
    off_axis = np.abs(pts) > axis_tol
    tables = {gid: {} for gid in ensemble.gauge_ids}
    for row in range(pts.shape[0]):
        active = np.flatnonzero(off_axis[row])
        if active.size > 1 or ensemble.records[row] is None:
            continue
        dim = int(active[0]) if active.size == 1 else 0
        slip = float(canonical_to_slip(pts[row], bounds)[dim])
        for rec in ensemble.records[row]:
            tables[rec.gauge_id].setdefault(dim, []).append(
                (slip, arrival_time(rec, threshold), max_wave_amplitude(rec)))
    for per_gauge in tables.values():
        for dim in per_gauge:
            per_gauge[dim].sort(key=lambda item: item[0])
    return tables
