"""Pipeline stages behind the CLI.

Each stage reads/writes artifact directories under one working directory
and is deterministic given the same config and seeds: reruns produce
byte-identical outputs.  Stage linkage is verified through manifest
hashes.

Layout under the working directory:

    design_smolyak/, design_lhs/      points + manifests
    ensemble_<kind>/                  per-realization gauge CSVs
    expansion_<method>/               indices + coefficients + fit report
    validate_<method>/                NRE series and CDF distances
    moments_<method>/                 mean and +-2 sigma bands
    infer/                            chain, summaries, KDE grids
    twin/                             synthetic observations + recovery report
"""

import logging
from pathlib import Path

import numpy as np

from . import diagnostics, storage
from .basis import OutputGrid, PCBasis, pce_eval_many
from .bpdn import BpdnOptions
from .design import lhs_sample, smolyak_grid
from .errors import ConfigError, IntegrityError
from .fit import (ensemble_regression_system, fit_bpdn_expansion,
                  nisp_from_ensemble, nre)
from .inference import (PARAM_NAMES, align_observations, kde, map_estimate,
                        running_mean, sample_posterior, seismic_moment,
                        summarize_chain)
from .swe import GaugeRecord, run_ensemble, simulate

logger = logging.getLogger(__name__)


def _design_dir(workdir, kind):
    return Path(workdir) / f"design_{kind}"


def _ensemble_dir(workdir, kind):
    return Path(workdir) / f"ensemble_{kind}"


def cmd_design(cfg, workdir):
    """Write the sparse-quadrature and LHS designs."""
    workdir = Path(workdir)
    quad = smolyak_grid(cfg.basis.dimension, cfg.design.smolyak_level)
    lhs = lhs_sample(cfg.basis.dimension, cfg.design.lhs_n, cfg.design.lhs_seed)
    extra = {"config_sha256": cfg.config_sha256}
    storage.save_design(_design_dir(workdir, "smolyak"), quad, cfg.bounds, extra)
    storage.save_design(_design_dir(workdir, "lhs"), lhs, cfg.bounds, extra)
    logger.info("designs written: smolyak %d nodes, lhs %d points",
                len(quad), len(lhs))
    return {"smolyak": _design_dir(workdir, "smolyak"),
            "lhs": _design_dir(workdir, "lhs")}


def cmd_ensemble(cfg, workdir, kind, workers=1):
    """Run the forward model over one stored design."""
    design, dmanifest = storage.load_design(_design_dir(workdir, kind))
    ensemble = run_ensemble(design, cfg.model, bounds=cfg.bounds,
                            workers=workers)
    failed = [i for i, st in enumerate(ensemble.status) if st != "ok"]
    if failed:
        logger.warning("%d of %d realizations failed: %s",
                       len(failed), len(ensemble), failed[:10])
    outdir = _ensemble_dir(workdir, kind)
    storage.save_ensemble(outdir, ensemble, design_manifest=dmanifest,
                          extra={"config_sha256": cfg.config_sha256})
    return outdir


def _load_linked_ensemble(cfg, workdir, kind):
    design, dmanifest = storage.load_design(_design_dir(workdir, kind))
    points = design.points if hasattr(design, "points") else design.nodes
    ensemble, emanifest = storage.load_ensemble(
        _ensemble_dir(workdir, kind), points)
    storage.check_ensemble_matches_design(emanifest, dmanifest)
    if not ensemble.complete:
        failed = [i for i, st in enumerate(ensemble.status) if st != "ok"]
        raise IntegrityError(
            f"ensemble {kind} is incomplete (failed rows {failed}); "
            "rerun the ensemble stage before fitting")
    return design, ensemble


def _output_grid(cfg, ensemble):
    return OutputGrid(tuple(g.id for g in cfg.model.gauges), ensemble.times)


def cmd_fit(cfg, workdir, method=None, train_kind=None):
    """Fit the PC expansion from a stored ensemble."""
    method = method or cfg.fit.method
    if method not in ("bpdn", "nisp"):
        raise ConfigError(f"unknown fit method {method!r}")
    if train_kind is None:
        train_kind = "smolyak" if method == "nisp" else "lhs"
    design, ensemble = _load_linked_ensemble(cfg, workdir, train_kind)
    basis = PCBasis(cfg.basis.dimension, cfg.basis.order)
    grid = _output_grid(cfg, ensemble)
    report_rows = None
    if method == "nisp":
        if train_kind != "smolyak":
            raise ConfigError("nisp requires the smolyak ensemble")
        exp = nisp_from_ensemble(ensemble, design, basis, outputs_grid=grid)
    else:
        system = ensemble_regression_system(ensemble, basis,
                                            provenance=train_kind)
        options = BpdnOptions(max_iter=cfg.fit.max_iter)
        if cfg.fit.delta_policy == "fixed":
            exp, report = fit_bpdn_expansion(system, basis,
                                             delta_rel=cfg.fit.delta_rel,
                                             options=options, outputs_grid=grid)
        else:
            exp, report = fit_bpdn_expansion(system, basis,
                                             cv_folds=cfg.fit.cv_folds,
                                             cv_stride=cfg.fit.cv_stride,
                                             options=options, outputs_grid=grid)
        report_rows = [(lbl, c.delta, c.residual_norm, c.iterations,
                        float(c.converged), c.sparsity)
                       for lbl, c in zip(grid.labels(), report.columns)]
    outdir = Path(workdir) / f"expansion_{method}"
    storage.save_expansion(outdir, exp, extra={
        "config_sha256": cfg.config_sha256,
        "method": method,
        "train_kind": train_kind,
    })
    if report_rows is not None:
        with open(outdir / "fit_report.csv", "w", newline="\n") as fh:
            fh.write("output,delta,residual,iterations,converged,sparsity\n")
            for row in report_rows:
                fh.write("%s,%.17g,%.17g,%d,%d,%d\n" % row)
    return outdir


def cmd_validate(cfg, workdir, method=None, holdout_kind=None):
    """Score a stored expansion on a held-out ensemble: per-column NRE
    series per gauge plus CDF sup-distances between surrogate and model
    elevation samples."""
    method = method or cfg.fit.method
    if holdout_kind is None:
        holdout_kind = "lhs" if method == "nisp" else "smolyak"
    exp, emanifest = storage.load_expansion(Path(workdir) / f"expansion_{method}")
    _, ensemble = _load_linked_ensemble(cfg, workdir, holdout_kind)
    grid = _output_grid(cfg, ensemble)
    if exp.outputs is None or list(exp.outputs.gauge_ids) != list(grid.gauge_ids):
        raise IntegrityError("expansion outputs do not match the ensemble gauges")
    errors = nre(exp, ensemble.points, ensemble.output_matrix())
    pred = pce_eval_many(exp, ensemble.points)
    outdir = Path(workdir) / f"validate_{method}"
    outdir.mkdir(parents=True, exist_ok=True)
    report = {"holdout_kind": holdout_kind, "expansion_method": method,
              "config_sha256": cfg.config_sha256, "gauges": {}}
    for pos, gid in enumerate(grid.gauge_ids):
        sl = grid.column_slice(pos)
        storage.write_matrix(outdir / f"nre_g{gid}.csv",
                             np.column_stack([grid.times, errors[sl]]),
                             ["time_s", "nre"])
        ks = diagnostics.ks_distance(ensemble.output_matrix()[:, sl].ravel(),
                                     pred[:, sl].ravel())
        finite = errors[sl][np.isfinite(errors[sl])]
        report["gauges"][str(gid)] = {
            "mean_nre": float(np.mean(finite)),
            "max_nre": float(np.max(finite)),
            "cdf_ks_distance": ks,
        }
    all_finite = errors[np.isfinite(errors)]
    report["mean_nre"] = float(np.mean(all_finite))
    report["max_nre"] = float(np.max(all_finite))
    storage.write_manifest(outdir / "report.json", report)
    return outdir


def cmd_moments(cfg, workdir, method=None):
    """Mean and +-2 sigma band CSVs per gauge from a stored expansion."""
    method = method or cfg.fit.method
    exp, _ = storage.load_expansion(Path(workdir) / f"expansion_{method}")
    outdir = Path(workdir) / f"moments_{method}"
    outdir.mkdir(parents=True, exist_ok=True)
    for band in diagnostics.moment_bands(exp):
        storage.write_matrix(
            outdir / f"band_g{band.gauge_id}.csv",
            np.column_stack([band.times, band.mean, band.lower, band.upper]),
            ["time_s", "mean_m", "lower_m", "upper_m"])
    return outdir


def cmd_infer(cfg, workdir, obs_dir, method=None, outname="infer"):
    """Sample the posterior against a stored expansion and observation
    directory; writes the chain, KDE grids, running means, and a summary."""
    method = method or cfg.fit.method
    exp, _ = storage.load_expansion(Path(workdir) / f"expansion_{method}")
    if exp.outputs is None:
        raise IntegrityError("expansion carries no output grid")
    records = storage.load_observations(obs_dir, exp.outputs.gauge_ids)
    obs = align_observations(records, exp.outputs)
    chain = sample_posterior(
        obs, exp, n_iter=cfg.mcmc.iterations, seed=cfg.mcmc.seed,
        bounds=cfg.bounds,
        init_variances=np.full(obs.n_gauges, cfg.mcmc.init_variance))
    outdir = Path(workdir) / outname
    storage.save_chain(outdir, chain, extra={"config_sha256": cfg.config_sha256})

    start = int(cfg.mcmc.burn_fraction * len(chain))
    params = chain.parameters()
    rm = running_mean(params[:, :6])
    storage.write_matrix(outdir / "running_mean.csv",
                         np.column_stack([np.arange(len(chain)), rm]),
                         ["iteration", *PARAM_NAMES[:6]])
    summaries = summarize_chain(chain, burn_fraction=cfg.mcmc.burn_fraction)
    for name, column in zip(PARAM_NAMES, params[start:].T):
        res = kde(column)
        storage.write_matrix(outdir / f"kde_{name}.csv",
                             np.column_stack([res.grid, res.density]),
                             ["value", "density"])
    areas = cfg.subfault_areas_m2()
    map_slips = [s.map_value for s in summaries[:6]]
    mean_slips = [s.mean for s in summaries[:6]]
    mo_map, mw_map = seismic_moment(map_slips, cfg.moment.rigidity_pa, areas)
    mo_mean, mw_mean = seismic_moment(mean_slips, cfg.moment.rigidity_pa, areas)
    summary = {
        "config_sha256": cfg.config_sha256,
        "iterations": len(chain),
        "burn_fraction": cfg.mcmc.burn_fraction,
        "acceptance_rate": chain.acceptance_rate,
        "parameters": {
            s.name: {"map": s.map_value, "mean": s.mean,
                     "hpd95": [s.hpd_lo, s.hpd_hi]}
            for s in summaries
        },
        "moment": {
            "rigidity_pa": cfg.moment.rigidity_pa,
            "areas_m2": areas,
            "Mo_map_Nm": mo_map, "Mw_map": mw_map,
            "Mo_mean_Nm": mo_mean, "Mw_mean": mw_mean,
        },
    }
    storage.write_manifest(outdir / "summary.json", summary)
    return outdir


def cmd_sweep(cfg, workdir, kind="smolyak", threshold=0.05):
    """Arrival/MWA tables along one-at-a-time slices of a stored ensemble."""
    _, ensemble = _load_linked_ensemble(cfg, workdir, kind)
    tables = diagnostics.ensemble_sweep(ensemble, threshold=threshold,
                                        bounds=cfg.bounds)
    outdir = Path(workdir) / f"sweep_{kind}"
    outdir.mkdir(parents=True, exist_ok=True)
    n_rows = 0
    for gid, per_dim in tables.items():
        for dim, rows in per_dim.items():
            body = np.array([[s, np.nan if a is None else a, w]
                             for s, a, w in rows])
            storage.write_matrix(outdir / f"sweep_g{gid}_s{dim + 1}.csv", body,
                                 ["slip_m", "arrival_s", "mwa_m"])
            n_rows += len(rows)
    note = {"config_sha256": cfg.config_sha256, "rows": n_rows,
            "note": "empty when the design has no one-at-a-time slices"}
    storage.write_manifest(outdir / "report.json", note)
    return outdir


def synthesize_observations(cfg, obs_dir):
    """Forward-run the planted twin slips and add gauge noise."""
    obs_dir = Path(obs_dir)
    obs_dir.mkdir(parents=True, exist_ok=True)
    records = simulate(cfg.model, np.asarray(cfg.twin.slips_m))
    rng = np.random.default_rng(cfg.twin.noise_seed)
    noisy = []
    for rec in records:
        eta = rec.eta + cfg.twin.noise_sigma_m * rng.standard_normal(rec.eta.size)
        noisy.append(GaugeRecord(rec.gauge_id, rec.times, eta))
        storage.save_gauge_record(obs_dir / f"gauge_{rec.gauge_id}.csv", noisy[-1])
    return noisy


def cmd_twin(cfg, workdir, workers=1):
    """End-to-end synthetic-recovery experiment.

    Designs, runs the LHS training ensemble, fits the surrogate with the
    configured method, synthesizes noisy observations from the planted
    slips, samples the posterior, and writes a recovery report.
    """
    workdir = Path(workdir)
    cmd_design(cfg, workdir)
    cmd_ensemble(cfg, workdir, "lhs", workers=workers)
    method = cfg.fit.method
    train_kind = "smolyak" if method == "nisp" else "lhs"
    if train_kind != "lhs":
        cmd_ensemble(cfg, workdir, train_kind, workers=workers)
    cmd_fit(cfg, workdir, method=method, train_kind=train_kind)
    obs_dir = workdir / "twin" / "observations"
    synthesize_observations(cfg, obs_dir)
    infer_dir = cmd_infer(cfg, workdir, obs_dir, method=method,
                          outname="twin/infer")
    summary = storage.read_manifest(infer_dir / "summary.json")

    planted = list(map(float, cfg.twin.slips_m))
    sigma = cfg.twin.noise_sigma_m
    per_slip = []
    hits = 0
    for k in range(len(planted)):
        info = summary["parameters"][f"s{k + 1}"]
        lo, hi = info["hpd95"]
        hit = lo <= planted[k] <= hi
        hits += hit
        per_slip.append({
            "planted_m": planted[k],
            "map_m": info["map"],
            "mean_m": info["mean"],
            "hpd95_m": [lo, hi],
            "hpd_contains_truth": bool(hit),
        })
    sigma_ratios = []
    for j in range(4):
        info = summary["parameters"][f"var{j + 1}"]
        sigma_ratios.append(float(np.sqrt(info["mean"]) / sigma))
    sigma_ok = all(0.5 <= r <= 2.0 for r in sigma_ratios)
    report = {
        "config_sha256": cfg.config_sha256,
        "planted_slips_m": planted,
        "noise_sigma_m": sigma,
        "slips": per_slip,
        "hpd_hits": hits,
        "sigma_ratios": sigma_ratios,
        "moment": summary["moment"],
        "recovered": bool(hits >= len(planted) - 1 and sigma_ok),
    }
    storage.write_manifest(workdir / "twin" / "twin_report.json", report)
    logger.info("twin recovery: %d/%d HPD hits, sigma ratios %s",
                hits, len(planted), sigma_ratios)
    return workdir / "twin"
