"""Bayesian slip inversion against a polynomial-chaos surrogate.

Posterior over six slips and four per-gauge noise variances with a
uniform slip prior and a Jeffreys variance prior, sampled by adaptive
Metropolis; kernel density estimates, MAP points, highest-posterior-
density intervals, and seismic moment/magnitude reporting.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import pce_eval
from .design import SlipBounds, slip_to_canonical
from .errors import NumericError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ObservationSet:
    """Observed surface elevations aligned to surrogate output columns.

    For each gauge: the observation values and the output-grid column
    indices they correspond to.  Built by align_observations().
    """

    gauge_ids: tuple
    values: list            # per gauge: ndarray of observed eta (m)
    columns: list           # per gauge: ndarray of surrogate column indices

    def __post_init__(self):
        if not (len(self.gauge_ids) == len(self.values) == len(self.columns)):
            raise ValueError("per-gauge lists of unequal length")
        self.values = [np.asarray(v, dtype=float) for v in self.values]
        self.columns = [np.asarray(c, dtype=np.int64) for c in self.columns]
        for v, c in zip(self.values, self.columns):
            if v.size != c.size:
                raise ValueError("values/columns mismatch")

    @property
    def n_gauges(self):
        return len(self.gauge_ids)

    def counts(self):
        return [v.size for v in self.values]


def align_observations(records, grid, tol=None):
    """Snap gauge records onto a surrogate OutputGrid by nearest time.

    Observations farther than tol (default: half the output cadence) from
    any grid time are dropped with a warning.  Gauge ids must match the
    grid's.
    """
    times = grid.times
    if tol is None:
        cadence = np.min(np.diff(times)) if times.size > 1 else np.inf
        tol = 0.5 * cadence
    by_id = {r.gauge_id: r for r in records}
    missing = [g for g in grid.gauge_ids if g not in by_id]
    if missing:
        raise ValueError(f"missing observations for gauges {missing}")
    values, columns = [], []
    for pos, gid in enumerate(grid.gauge_ids):
        rec = by_id[gid]
        nearest = np.searchsorted(times, rec.times)
        nearest = np.clip(nearest, 1, times.size - 1)
        left = times[nearest - 1]
        right = times[nearest]
        idx = np.where(rec.times - left <= right - rec.times,
                       nearest - 1, nearest)
        dist = np.abs(times[idx] - rec.times)
        keep = dist <= tol + 1e-12
        if np.any(~keep):
            logger.warning("gauge %s: dropped %d observations outside the "
                           "alignment window", gid, int(np.sum(~keep)))
        cols = grid.column_slice(pos).start + idx[keep]
        # collapse duplicate snaps to the first occurrence
        cols, first = np.unique(cols, return_index=True)
        values.append(rec.eta[keep][first])
        columns.append(cols)
    return ObservationSet(tuple(grid.gauge_ids), values, columns)


@dataclass
class PosteriorState:
    """One point of the (slips, noise variances) parameter space."""

    slips: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.slips = np.asarray(self.slips, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)


def log_prior(state, bounds=SlipBounds()):
    """Uniform prior on slips within bounds, Jeffreys prior 1/sigma^2 on
    each variance; -inf outside the support."""
    s = state.slips
    v = state.variances
    if np.any(s < bounds.lo) or np.any(s > bounds.hi) or np.any(v <= 0.0):
        return -np.inf
    return -s.size * math.log(bounds.width) - float(np.sum(np.log(v)))


def log_likelihood(state, obs, surrogate, bounds=SlipBounds()):
    """Gaussian likelihood with per-gauge variance:

        sum_j sum_k [ -0.5 log(2 pi s2_j) - (G_j^k - eta_j^k)^2 / (2 s2_j) ]

    The surrogate is evaluated at the canonical image of the slips.
    """
    if obs.n_gauges != state.variances.size:
        raise ValueError("one variance per gauge required")
    xi = slip_to_canonical(state.slips, bounds)
    pred = pce_eval(surrogate, xi)
    total = 0.0
    for j in range(obs.n_gauges):
        resid = pred[obs.columns[j]] - obs.values[j]
        s2 = state.variances[j]
        n = resid.size
        total += -0.5 * n * (LOG_2PI + math.log(s2)) \
            - float(resid @ resid) / (2.0 * s2)
    return total


def log_posterior(state, obs, surrogate, bounds=SlipBounds()):
    """Unnormalized log posterior: log_prior + log_likelihood."""
    lp = log_prior(state, bounds)
    if lp == -np.inf:
        return -np.inf
    return lp + log_likelihood(state, obs, surrogate, bounds)


@dataclass
class AmOptions:
    """Adaptive Metropolis settings (Haario-style schedule)."""

    nonadaptive: int = 1000   # initial iterations with the diagonal proposal
    epsilon: float = 1e-10    # covariance regularization
    scale: float = None       # s_d; default 2.4^2 / d
    checkpoint_every: int = 50_000
    init_steps: np.ndarray = None  # diagonal-phase step sizes per component


@dataclass
class Chain:
    """Raw adaptive-Metropolis output over an unconstrained vector z."""

    states: np.ndarray
    log_density: np.ndarray
    accepted: np.ndarray
    seed: int
    covariance_checkpoints: list = field(default_factory=list)

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted))


def adaptive_metropolis(log_target, n_iter, seed, init, options=AmOptions()):
    """Random-walk Metropolis with Haario covariance adaptation.

    After an initial non-adaptive phase with a diagonal proposal, the
    proposal covariance is s_d * (Cov(history) + eps * I) with
    s_d = 2.4^2 / d, updated recursively every iteration.  Deterministic
    under the seed.
    """
    init = np.asarray(init, dtype=float)
    d = init.size
    rng = np.random.default_rng(seed)
    scale = options.scale if options.scale is not None else 2.4**2 / d
    steps = options.init_steps
    if steps is None:
        steps = np.ones(d)
    diag_chol = np.diag(np.asarray(steps, dtype=float))

    z = init.copy()
    lp = float(log_target(z))
    if not np.isfinite(lp):
        raise ValueError("initial state has zero posterior density")

    states = np.empty((n_iter, d))
    log_density = np.empty(n_iter)
    accepted = np.zeros(n_iter, dtype=bool)
    checkpoints = []

    mean = z.copy()
    sumsq = np.zeros((d, d))  # sum of outer products of deviations
    chol = diag_chol
    n_accept_window = 0
    for t in range(n_iter):
        proposal = z + chol.T @ rng.standard_normal(d)
        lp_new = float(log_target(proposal))
        if math.log(rng.uniform()) < lp_new - lp:
            z = proposal
            lp = lp_new
            accepted[t] = True
            n_accept_window += 1
        states[t] = z
        log_density[t] = lp

        # recursive mean/scatter update over the whole history
        count = t + 2  # includes the initial state
        delta = z - mean
        mean = mean + delta / count
        sumsq = sumsq + np.outer(delta, z - mean)
        if t + 1 >= options.nonadaptive:
            cov = sumsq / (count - 1)
            try:
                chol = np.linalg.cholesky(
                    scale * (cov + options.epsilon * np.eye(d))).T
            except np.linalg.LinAlgError:
                chol = diag_chol
        if (t + 1) % options.checkpoint_every == 0:
            checkpoints.append((t + 1, (sumsq / (count - 1)).copy()))
        if t + 1 == options.nonadaptive and n_accept_window == 0:
            raise NumericError(
                "no proposals accepted during the non-adaptive phase; "
                "check the initial state and step sizes")

    return Chain(states=states, log_density=log_density, accepted=accepted,
                 seed=seed, covariance_checkpoints=checkpoints)


@dataclass
class PosteriorChain:
    """MCMC history over (6 slips, 4 noise variances) with diagnostics."""

    slips: np.ndarray         # (n, 6)
    variances: np.ndarray     # (n, 4)
    log_posterior: np.ndarray
    accepted: np.ndarray
    seed: int
    covariance_checkpoints: list = field(default_factory=list)

    def __len__(self):
        return self.slips.shape[0]

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted))

    def parameters(self):
        """All parameters stacked, shape (n, 10)."""
        return np.hstack([self.slips, self.variances])


PARAM_NAMES = ("s1", "s2", "s3", "s4", "s5", "s6",
               "var1", "var2", "var3", "var4")


def sample_posterior(obs, surrogate, n_iter, seed, bounds=SlipBounds(),
                     init_slips=None, init_variances=None, options=None):
    """Sample the joint slip/variance posterior with adaptive Metropolis.

    Variances are proposed in log space (the Jeffreys prior is flat
    there, which also supplies the Jacobian correction), slips in
    physical units.  Returns a PosteriorChain; the recorded log-posterior
    is the physical-space density of log_posterior().
    """
    n_gauges = obs.n_gauges
    m = surrogate.basis.m if init_slips is None else len(init_slips)
    if init_slips is None:
        init_slips = np.full(m, 0.5 * (bounds.lo + bounds.hi))
    if init_variances is None:
        init_variances = np.full(n_gauges, 0.01)
    init_z = np.concatenate([np.asarray(init_slips, dtype=float),
                             np.log(np.asarray(init_variances, dtype=float))])
    d = init_z.size

    if options is None:
        steps = np.concatenate([np.full(m, 0.1 * bounds.width),
                                np.ones(n_gauges)])
        options = AmOptions(init_steps=steps)

    def log_target(z):
        s = z[:m]
        if np.any(s < bounds.lo) or np.any(s > bounds.hi):
            return -np.inf
        state = PosteriorState(s, np.exp(z[m:]))
        # Jeffreys prior and the log-space Jacobian cancel; the slip prior
        # is constant inside the bounds.
        return log_likelihood(state, obs, surrogate, bounds)

    chain = adaptive_metropolis(log_target, n_iter, seed, init_z, options)
    slips = chain.states[:, :m]
    variances = np.exp(chain.states[:, m:])
    # convert the sampled density back to the physical-space posterior
    log_post = (chain.log_density
                - np.sum(np.log(variances), axis=1)
                - m * math.log(bounds.width))
    return PosteriorChain(slips=slips, variances=variances,
                          log_posterior=log_post, accepted=chain.accepted,
                          seed=seed,
                          covariance_checkpoints=chain.covariance_checkpoints)


def running_mean(samples):
    """Cumulative mean along the iteration axis."""
    samples = np.asarray(samples, dtype=float)
    n = np.arange(1, samples.shape[0] + 1)
    if samples.ndim == 1:
        return np.cumsum(samples) / n
    return np.cumsum(samples, axis=0) / n[:, None]


@dataclass
class KdeResult:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool = False


def kde(samples, bandwidth=None, grid_size=512, padding=3.0):
    """Gaussian kernel density estimate on a regular grid.

    Default bandwidth is Silverman's rule
    h = 0.9 min(std, IQR/1.34) n^(-1/5).  Zero-spread samples yield a
    degenerate spike flagged in the result.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    std = float(np.std(samples, ddof=1))
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    if bandwidth is None:
        spread = min(std, iqr / 1.34) if iqr > 0 else std
        bandwidth = 0.9 * spread * n ** (-0.2)
    if bandwidth <= 0:
        lo, hi = samples.min() - 1.0, samples.max() + 1.0
        grid = np.linspace(lo, hi, grid_size)
        density = np.zeros(grid_size)
        density[np.argmin(np.abs(grid - samples[0]))] = 1.0
        density /= np.trapezoid(density, grid)
        return KdeResult(grid, density, 0.0, degenerate=True)
    lo = samples.min() - padding * bandwidth
    hi = samples.max() + padding * bandwidth
    grid = np.linspace(lo, hi, grid_size)
    density = np.zeros(grid_size)
    norm = 1.0 / (n * bandwidth * math.sqrt(2.0 * math.pi))
    for block in np.array_split(samples, max(1, n // 20_000)):
        u = (grid[:, None] - block[None, :]) / bandwidth
        density += norm * np.exp(-0.5 * u * u).sum(axis=1)
    return KdeResult(grid, density, float(bandwidth))


def map_estimate(result):
    """Grid argmax of a KDE density; ties resolve to the lowest grid value."""
    best = np.flatnonzero(result.density == result.density.max())
    if best.size > 1:
        logger.warning("KDE density has %d tied maxima; taking the lowest",
                       best.size)
    return float(result.grid[best[0]])


def hpd_interval(samples, mass=0.95):
    """Shortest interval containing the requested sample mass."""
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must be in (0, 1)")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    k = max(2, int(math.ceil(mass * n)))
    if k > n:
        raise ValueError("not enough samples for the requested mass")
    widths = x[k - 1:] - x[:n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def seismic_moment(slips, rigidity_pa, areas_m2):
    """Seismic moment M_o = sum_i mu A_i s_i (N m) and moment magnitude
    M_w = (log10 M_o - 9.05) / 1.5."""
    slips = np.asarray(slips, dtype=float)
    areas = np.broadcast_to(np.asarray(areas_m2, dtype=float), slips.shape)
    if rigidity_pa <= 0:
        raise ValueError("rigidity must be positive")
    if np.any(areas <= 0):
        raise ValueError("areas must be positive")
    moment = float(np.sum(rigidity_pa * areas * slips))
    if moment <= 0:
        raise ValueError("non-positive seismic moment")
    magnitude = (math.log10(moment) - 9.05) / 1.5
    return moment, magnitude


@dataclass
class ParameterSummary:
    name: str
    map_value: float
    mean: float
    hpd_lo: float
    hpd_hi: float


def summarize_chain(chain, burn_fraction=0.2, mass=0.95):
    """Post-burn-in MAP/mean/HPD for all ten parameters."""
    if not 0.0 <= burn_fraction < 1.0:
        raise ValueError("burn fraction must be in [0, 1)")
    start = int(burn_fraction * len(chain))
    params = chain.parameters()[start:]
    out = []
    for k, name in enumerate(PARAM_NAMES):
        samples = params[:, k]
        density = kde(samples)
        lo, hi = hpd_interval(samples, mass)
        out.append(ParameterSummary(name, map_estimate(density),
                                    float(samples.mean()), lo, hi))
    return out
