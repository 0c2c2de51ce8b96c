"""Desk-scale 2D nonlinear shallow-water forward model.

First-order well-balanced finite-volume solver (Rusanov flux with
hydrostatic reconstruction of the bathymetry source), slip-parameterized
instantaneous sea-surface displacement over six subfault footprints,
gauge extraction by bilinear interpolation, and deterministic ensemble
execution over a design matrix.
"""

import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np

from .design import SlipBounds, canonical_to_slip
from .errors import InstabilityError

_H_DRY = 1e-6  # m; below this a cell is treated as dry


@dataclass(frozen=True)
class Gauge:
    id: int
    x_km: float
    y_km: float


@dataclass(frozen=True)
class Subfault:
    """Rectangular unit-slip footprint in domain coordinates (km)."""

    x0_km: float
    x1_km: float
    y0_km: float
    y1_km: float

    def area_m2(self):
        return (self.x1_km - self.x0_km) * (self.y1_km - self.y0_km) * 1e6


@dataclass(frozen=True)
class ModelConfig:
    nx: int = 200
    ny: int = 150
    extent_km: tuple = (2000.0, 1500.0)
    depth_m: float = 4000.0
    # Optional linear shelf: bottom rises by shelf_rise_m over the rightmost
    # shelf_fraction of the x extent.
    shelf_rise_m: float = 0.0
    shelf_fraction: float = 0.25
    gravity: float = 9.81
    coriolis_f: float = 0.0
    friction_cf: float = 0.0
    end_time_s: float = 14400.0
    cfl: float = 0.45
    gauge_cadence_s: float = 120.0
    boundary: str = "outflow"  # outflow | reflective
    taper_km: float = 25.0
    gauges: tuple = (
        Gauge(1, 700.0, 800.0),
        Gauge(2, 950.0, 620.0),
        Gauge(3, 1250.0, 900.0),
        Gauge(4, 1600.0, 700.0),
    )
    subfaults: tuple = (
        Subfault(250.0, 350.0, 450.0, 650.0),
        Subfault(350.0, 450.0, 450.0, 650.0),
        Subfault(250.0, 350.0, 650.0, 850.0),
        Subfault(350.0, 450.0, 650.0, 850.0),
        Subfault(250.0, 350.0, 850.0, 1050.0),
        Subfault(350.0, 450.0, 850.0, 1050.0),
    )

    def __post_init__(self):
        object.__setattr__(self, "gauges", tuple(self.gauges))
        object.__setattr__(self, "subfaults", tuple(self.subfaults))
        object.__setattr__(self, "extent_km", tuple(self.extent_km))
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid must be at least 8x8 cells")
        if not 0.0 < self.cfl <= 0.9:
            raise ValueError(f"CFL {self.cfl} outside (0, 0.9]")
        if self.boundary not in ("outflow", "reflective"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        lx, ly = self.extent_km
        for g in self.gauges:
            if not (0.0 < g.x_km < lx and 0.0 < g.y_km < ly):
                raise ValueError(f"gauge {g.id} outside domain")
        for k, f in enumerate(self.subfaults):
            inside = 0.0 <= f.x0_km < f.x1_km <= lx and 0.0 <= f.y0_km < f.y1_km <= ly
            if not inside:
                raise ValueError(f"subfault {k} outside domain")

    @property
    def dx_m(self):
        return self.extent_km[0] * 1000.0 / self.nx

    @property
    def dy_m(self):
        return self.extent_km[1] * 1000.0 / self.ny

    def cell_centers_m(self):
        x = (np.arange(self.nx) + 0.5) * self.dx_m
        y = (np.arange(self.ny) + 0.5) * self.dy_m
        return x, y

    def bathymetry(self):
        """Bottom elevation b (m, negative below datum), shape (nx, ny)."""
        x, _ = self.cell_centers_m()
        b_x = np.full(self.nx, -self.depth_m)
        if self.shelf_rise_m != 0.0:
            lx = self.extent_km[0] * 1000.0
            x0 = (1.0 - self.shelf_fraction) * lx
            ramp = np.clip((x - x0) / (lx - x0), 0.0, 1.0)
            b_x = b_x + self.shelf_rise_m * ramp
        return np.repeat(b_x[:, None], self.ny, axis=1)


@dataclass
class StateField:
    """Conserved variables and bathymetry on the cell grid."""

    h: np.ndarray
    hu: np.ndarray
    hv: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if np.any(self.h < 0):
            raise ValueError("negative depth")
        for arr in (self.h, self.hu, self.hv, self.b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite state")

    def eta(self):
        return self.h + self.b


@dataclass
class GaugeRecord:
    """Surface-elevation time series at one gauge."""

    gauge_id: int
    times: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if self.times.size != self.eta.size:
            raise ValueError("times and eta length mismatch")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def _taper_profile(coords_m, a_m, b_m, taper_m):
    """Cosine-tapered plateau on [a, b]: 0 outside, 1 on the inner plateau."""
    w = min(taper_m, 0.5 * (b_m - a_m))
    prof = np.zeros_like(coords_m)
    inside = (coords_m >= a_m) & (coords_m <= b_m)
    prof[inside] = 1.0
    if w > 0.0:
        up = inside & (coords_m < a_m + w)
        dn = inside & (coords_m > b_m - w)
        prof[up] = 0.5 * (1.0 - np.cos(np.pi * (coords_m[up] - a_m) / w))
        prof[dn] = 0.5 * (1.0 - np.cos(np.pi * (b_m - coords_m[dn]) / w))
    return prof


def unit_displacement_shapes(cfg):
    """Unit sea-surface displacement per subfault, shape (n_sub, nx, ny)."""
    x, y = cfg.cell_centers_m()
    taper = cfg.taper_km * 1000.0
    shapes = []
    for f in cfg.subfaults:
        px = _taper_profile(x, f.x0_km * 1e3, f.x1_km * 1e3, taper)
        py = _taper_profile(y, f.y0_km * 1e3, f.y1_km * 1e3, taper)
        shapes.append(np.outer(px, py))
    return np.array(shapes)


def slip_to_initial_surface(s, cfg):
    """Initial sea-surface displacement eta0 = sum_i s_i * U_i (linear in s)."""
    s = np.asarray(s, dtype=float)
    shapes = unit_displacement_shapes(cfg)
    if s.size != shapes.shape[0]:
        raise ValueError(f"{s.size} slips for {shapes.shape[0]} subfaults")
    return np.tensordot(s, shapes, axes=1)


def _edge_pad(arr):
    """One ghost layer by zero-order (edge copy) extrapolation."""
    out = np.empty((arr.shape[0] + 2, arr.shape[1] + 2), dtype=arr.dtype)
    out[1:-1, 1:-1] = arr
    out[0, 1:-1] = arr[0]
    out[-1, 1:-1] = arr[-1]
    out[:, 0] = out[:, 1]
    out[:, -1] = out[:, -2]
    return out


def _interface_flux(hL, unL, utL, bL, hR, unR, utR, bR, g):
    """Rusanov flux with hydrostatic reconstruction across one interface set.

    un is the velocity normal to the interface, ut the transverse one.
    Returns (mass flux, normal-momentum flux, transverse-momentum flux)
    plus the reconstructed left/right depths needed for the well-balanced
    source correction.
    """
    bstar = np.maximum(bL, bR)
    hLs = np.maximum(hL + bL - bstar, 0.0)
    hRs = np.maximum(hR + bR - bstar, 0.0)
    a = np.maximum(np.abs(unL) + np.sqrt(g * hLs),
                   np.abs(unR) + np.sqrt(g * hRs))
    qL = hLs * unL
    qR = hRs * unR
    f_h = 0.5 * (qL + qR) - 0.5 * a * (hRs - hLs)
    f_n = (0.5 * (qL * unL + 0.5 * g * hLs * hLs
                  + qR * unR + 0.5 * g * hRs * hRs)
           - 0.5 * a * (qR - qL))
    f_t = 0.5 * (qL * utL + qR * utR) - 0.5 * a * (hRs * utR - hLs * utL)
    return f_h, f_n, f_t, hLs, hRs


class _GaugeSampler:
    """Bilinear interpolation of eta at gauge locations, linear in time
    between solver steps, emitted on the fixed output cadence."""

    def __init__(self, cfg):
        self.times = np.arange(0.0, cfg.end_time_s + 1e-9, cfg.gauge_cadence_s)
        self.values = np.empty((len(cfg.gauges), self.times.size))
        self._next = 0
        ix, iy, fx, fy = [], [], [], []
        for g in cfg.gauges:
            gx = g.x_km * 1000.0 / cfg.dx_m - 0.5
            gy = g.y_km * 1000.0 / cfg.dy_m - 0.5
            gx = min(max(gx, 0.0), cfg.nx - 1.000001)
            gy = min(max(gy, 0.0), cfg.ny - 1.000001)
            ix.append(int(gx))
            iy.append(int(gy))
            fx.append(gx - int(gx))
            fy.append(gy - int(gy))
        self._ix = np.array(ix)
        self._iy = np.array(iy)
        self._fx = np.array(fx)
        self._fy = np.array(fy)

    def _interp(self, eta):
        ix, iy, fx, fy = self._ix, self._iy, self._fx, self._fy
        return ((1 - fx) * (1 - fy) * eta[ix, iy]
                + fx * (1 - fy) * eta[ix + 1, iy]
                + (1 - fx) * fy * eta[ix, iy + 1]
                + fx * fy * eta[ix + 1, iy + 1])

    def record(self, t_prev, eta_prev, t_cur, eta_cur):
        while self._next < self.times.size and self.times[self._next] <= t_cur + 1e-9:
            tau = self.times[self._next]
            if t_cur > t_prev:
                theta = np.clip((tau - t_prev) / (t_cur - t_prev), 0.0, 1.0)
            else:
                theta = 1.0
            self.values[:, self._next] = ((1 - theta) * self._interp(eta_prev)
                                          + theta * self._interp(eta_cur))
            self._next += 1

    def finish(self, cfg):
        assert self._next == self.times.size
        return [GaugeRecord(g.id, self.times.copy(), self.values[k].copy())
                for k, g in enumerate(cfg.gauges)]


def simulate(cfg, s, return_info=False):
    """Run the forward model for one slip vector; returns one GaugeRecord
    per configured gauge on the shared output time base.

    With return_info=True also returns a dict with the step count, the
    number of dry-cell clips, initial/final water volume, and the final
    StateField.
    """
    g = cfg.gravity
    dx, dy = cfg.dx_m, cfg.dy_m
    b = cfg.bathymetry()
    B = _edge_pad(b)
    reflective = cfg.boundary == "reflective"
    eta0 = slip_to_initial_surface(s, cfg)
    h = np.maximum(eta0 - b, 0.0)
    hu = np.zeros_like(h)
    hv = np.zeros_like(h)

    sampler = _GaugeSampler(cfg)
    t = 0.0
    eta = h + b
    sampler.record(-1.0, eta, 0.0, eta)

    volume_initial = total_volume(h, dx, dy)
    dry_clips = 0
    step = 0
    max_steps = 10_000_000
    while t < cfg.end_time_s - 1e-9:
        denom = np.maximum(h, _H_DRY)
        u = hu / denom
        v = hv / denom
        c = np.sqrt(g * h)
        speed = float(np.max(np.maximum(np.abs(u), np.abs(v)) + c))
        if speed <= 0.0:
            dt = cfg.end_time_s - t
        else:
            dt = min(cfg.cfl * min(dx, dy) / speed, cfg.end_time_s - t)

        H = _edge_pad(h)
        U = _edge_pad(u)
        V = _edge_pad(v)
        if reflective:
            # flip the normal velocity in the ghost layers
            Un = U.copy()
            Un[0, :] = -Un[1, :]
            Un[-1, :] = -Un[-2, :]
            Vn = V.copy()
            Vn[:, 0] = -Vn[:, 1]
            Vn[:, -1] = -Vn[:, -2]
        else:
            Un, Vn = U, V

        # x-direction interfaces: (nx+1, ny)
        f0, f1, f2, hLs, hRs = _interface_flux(
            H[:-1, 1:-1], Un[:-1, 1:-1], V[:-1, 1:-1], B[:-1, 1:-1],
            H[1:, 1:-1], Un[1:, 1:-1], V[1:, 1:-1], B[1:, 1:-1], g)
        dh = -(dt / dx) * (f0[1:] - f0[:-1])
        dhu = -(dt / dx) * (f1[1:] - f1[:-1]) \
            + (dt * g / (2 * dx)) * (hLs[1:]**2 - hRs[:-1]**2)
        dhv = -(dt / dx) * (f2[1:] - f2[:-1])

        # y-direction interfaces: (nx, ny+1); normal momentum is hv
        g0, g1_, g2_, hBs, hTs = _interface_flux(
            H[1:-1, :-1], Vn[1:-1, :-1], U[1:-1, :-1], B[1:-1, :-1],
            H[1:-1, 1:], Vn[1:-1, 1:], U[1:-1, 1:], B[1:-1, 1:], g)
        dh += -(dt / dy) * (g0[:, 1:] - g0[:, :-1])
        dhv += -(dt / dy) * (g1_[:, 1:] - g1_[:, :-1]) \
            + (dt * g / (2 * dy)) * (hBs[:, 1:]**2 - hTs[:, :-1]**2)
        dhu += -(dt / dy) * (g2_[:, 1:] - g2_[:, :-1])

        eta_prev = h + b
        t_prev = t
        h = h + dh
        hu = hu + dhu
        hv = hv + dhv

        # positivity guard; desk configs keep h >> 0 so this is a no-op there
        dry = h < _H_DRY
        if np.any(dry):
            dry_clips += int(dry.sum())
            h = np.maximum(h, 0.0)
            hu = np.where(dry, 0.0, hu)
            hv = np.where(dry, 0.0, hv)

        if cfg.coriolis_f != 0.0:
            ang = cfg.coriolis_f * dt
            hu, hv = (hu * np.cos(ang) + hv * np.sin(ang),
                      -hu * np.sin(ang) + hv * np.cos(ang))
        if cfg.friction_cf != 0.0:
            denom = np.maximum(h, _H_DRY)
            damp = 1.0 + dt * cfg.friction_cf * np.hypot(hu, hv) / denom
            hu = hu / damp
            hv = hv / damp

        t = t + dt
        step += 1
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(hu))
                and np.all(np.isfinite(hv))):
            raise InstabilityError(
                f"non-finite state at step {step}, t={t:.1f} s", step=step, time_s=t)
        if step > max_steps:
            raise InstabilityError("step budget exhausted", step=step, time_s=t)

        sampler.record(t_prev, eta_prev, t, h + b)

    records = sampler.finish(cfg)
    if return_info:
        info = {
            "steps": step,
            "dry_clips": dry_clips,
            "volume_initial_m3": volume_initial,
            "volume_final_m3": total_volume(h, dx, dy),
            "state": StateField(h=h, hu=hu, hv=hv, b=b),
        }
        return records, info
    return records


def total_volume(h, dx_m, dy_m):
    """Water volume (m^3) of a state; conserved in a closed basin."""
    return float(h.sum() * dx_m * dy_m)


def arrival_time(rec, threshold=0.05):
    """First time |eta| reaches the threshold (m); None if never."""
    if rec.times.size == 0:
        raise ValueError("empty gauge record")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    hits = np.nonzero(np.abs(rec.eta) >= threshold)[0]
    return float(rec.times[hits[0]]) if hits.size else None


def max_wave_amplitude(rec):
    """Signed maximum of eta over the record (crest height, m)."""
    if rec.times.size == 0:
        raise ValueError("empty gauge record")
    return float(np.max(rec.eta))


@dataclass
class EnsembleMatrix:
    """Forward-model outputs over a design: per-realization gauge records
    sharing one time base, with per-realization completion status."""

    points: np.ndarray
    records: list
    status: list
    gauge_ids: tuple = ()
    times: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(self.records) != self.points.shape[0]:
            raise ValueError("realization count does not match design size")
        for recs in self.records:
            if recs is None:
                continue
            if self.gauge_ids == ():
                self.gauge_ids = tuple(r.gauge_id for r in recs)
            if self.times is None:
                self.times = recs[0].times
            for r in recs:
                if r.times.shape != self.times.shape or not np.allclose(
                        r.times, self.times):
                    raise ValueError("records do not share the time base")

    def __len__(self):
        return self.points.shape[0]

    @property
    def complete(self):
        return all(st == "ok" for st in self.status)

    def output_matrix(self):
        """Stacked outputs, shape (n_realizations, n_gauges * n_times);
        raises if any realization failed."""
        if not self.complete:
            bad = [i for i, st in enumerate(self.status) if st != "ok"]
            raise ValueError(f"incomplete ensemble; failed realizations {bad}")
        rows = [np.concatenate([r.eta for r in recs]) for recs in self.records]
        return np.array(rows)


def _run_realization(args):
    cfg, slips = args
    return simulate(cfg, slips)


def run_ensemble(design, cfg, bounds=SlipBounds(), workers=1):
    """One forward run per design row (slips from canonical_to_slip).

    Results are stored by row index, so output is identical regardless of
    worker count.  Per-realization failures are recorded in the status
    list and the ensemble continues.
    """
    points = design.points if hasattr(design, "points") else \
        design.nodes if hasattr(design, "nodes") else np.atleast_2d(design)
    slips = canonical_to_slip(points, bounds)
    jobs = [(cfg, slips[i]) for i in range(points.shape[0])]
    records = [None] * len(jobs)
    status = ["pending"] * len(jobs)
    if workers <= 1:
        for i, job in enumerate(jobs):
            try:
                records[i] = _run_realization(job)
                status[i] = "ok"
            except InstabilityError as exc:
                status[i] = f"error: {exc}"
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_realization, job): i
                       for i, job in enumerate(jobs)}
            for fut in concurrent.futures.as_completed(futures):
                i = futures[fut]
                try:
                    records[i] = fut.result()
                    status[i] = "ok"
                except InstabilityError as exc:
                    status[i] = f"error: {exc}"
    return EnsembleMatrix(points=points, records=records, status=status)


def desk_config(**overrides):
    """Default desk-scale configuration (one run on the order of a second)."""
    return replace(ModelConfig(), **overrides) if overrides else ModelConfig()
