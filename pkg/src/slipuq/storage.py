"""Artifact persistence: CSV matrices and key-value JSON manifests.

Every stage output is a directory holding CSV payloads plus a
manifest.json carrying the configuration hash, seeds, and the sha256 of
each payload file, so downstream stages can verify integrity.  Floats are
written with repr-exact precision ("%.17g") and files use "\\n" newlines,
which makes reruns byte-identical.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .basis import OutputGrid, PCBasis, PCExpansion
from .design import DesignMatrix, SparseQuadrature
from .errors import IntegrityError
from .swe import EnsembleMatrix, GaugeRecord

FLOAT_FMT = "%.17g"


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path, payload):
    text = json.dumps(payload, sort_keys=True, indent=1)
    Path(path).write_text(text + "\n")


def read_manifest(path):
    path = Path(path)
    if not path.exists():
        raise IntegrityError(f"missing manifest {path}")
    return json.loads(path.read_text())


def check_file_hash(path, expected):
    actual = sha256_file(path)
    if actual != expected:
        raise IntegrityError(f"{path}: sha256 {actual} != manifest {expected}")


def write_matrix(path, array, header):
    array = np.atleast_2d(np.asarray(array, dtype=float))
    if array.shape[1] != len(header):
        raise ValueError("header does not match column count")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, array, fmt=FLOAT_FMT, delimiter=",")


def read_matrix(path, expected_header=None):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if expected_header is not None and header != list(expected_header):
        raise IntegrityError(f"{path}: header {header} != {list(expected_header)}")
    return data, header


# ---------------------------------------------------------------- designs

def save_design(outdir, design, bounds, extra=None):
    """Design directory: points.csv (+ weights.csv for quadrature) and a
    manifest with kind/size/seed/bounds."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if isinstance(design, SparseQuadrature):
        kind, points, seed = "smolyak", design.nodes, None
    else:
        kind, points, seed = design.kind, design.points, design.seed
    m = points.shape[1]
    write_matrix(outdir / "points.csv", points,
                 [f"xi_{d + 1}" for d in range(m)])
    manifest = {
        "schema": "slipuq-design-v1",
        "kind": kind,
        "m": m,
        "n": int(points.shape[0]),
        "seed": seed,
        "bounds": [bounds.lo, bounds.hi],
        "files": {"points.csv": sha256_file(outdir / "points.csv")},
    }
    if isinstance(design, SparseQuadrature):
        write_matrix(outdir / "weights.csv", design.weights[:, None], ["weight"])
        manifest["level"] = design.level
        manifest["rule"] = design.rule
        manifest["files"]["weights.csv"] = sha256_file(outdir / "weights.csv")
    if extra:
        manifest.update(extra)
    write_manifest(outdir / "manifest.json", manifest)
    return manifest


def load_design(outdir):
    """Returns (DesignMatrix or SparseQuadrature, manifest)."""
    outdir = Path(outdir)
    manifest = read_manifest(outdir / "manifest.json")
    for name, digest in manifest["files"].items():
        check_file_hash(outdir / name, digest)
    points, _ = read_matrix(outdir / "points.csv")
    if manifest["kind"] == "smolyak":
        weights, _ = read_matrix(outdir / "weights.csv")
        design = SparseQuadrature(points, weights[:, 0], manifest["level"],
                                  manifest.get("rule", "gauss-patterson"))
    else:
        design = DesignMatrix(points=points, kind=manifest["kind"],
                              seed=manifest["seed"])
    return design, manifest


# --------------------------------------------------------------- ensembles

def save_gauge_record(path, record):
    write_matrix(path, np.column_stack([record.times, record.eta]),
                 ["time_s", "eta_m"])


def load_gauge_record(path, gauge_id):
    data, _ = read_matrix(path, ["time_s", "eta_m"])
    return GaugeRecord(gauge_id, data[:, 0], data[:, 1])


def save_ensemble(outdir, ensemble, design_manifest=None, extra=None):
    """Ensemble directory: realizations/rNNNNN/gauge_<id>.csv per gauge
    plus a manifest carrying per-realization status and file hashes."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = {}
    for i, recs in enumerate(ensemble.records):
        rdir = outdir / "realizations" / f"r{i:05d}"
        if recs is None:
            continue
        rdir.mkdir(parents=True, exist_ok=True)
        for rec in recs:
            rel = f"realizations/r{i:05d}/gauge_{rec.gauge_id}.csv"
            save_gauge_record(outdir / rel, rec)
            files[rel] = sha256_file(outdir / rel)
    manifest = {
        "schema": "slipuq-ensemble-v1",
        "n": len(ensemble),
        "gauge_ids": list(ensemble.gauge_ids),
        "status": list(ensemble.status),
        "design_sha256": _manifest_digest(design_manifest),
        "files": files,
    }
    if extra:
        manifest.update(extra)
    write_manifest(outdir / "manifest.json", manifest)
    return manifest


def _manifest_digest(manifest):
    if manifest is None:
        return None
    text = json.dumps(manifest, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def load_ensemble(outdir, points, verify=True):
    """Rebuild an EnsembleMatrix against its design points."""
    outdir = Path(outdir)
    manifest = read_manifest(outdir / "manifest.json")
    if verify:
        for name, digest in manifest["files"].items():
            check_file_hash(outdir / name, digest)
    n = manifest["n"]
    if points.shape[0] != n:
        raise IntegrityError(f"design has {points.shape[0]} rows, "
                             f"ensemble manifest says {n}")
    records = []
    for i in range(n):
        if manifest["status"][i] != "ok":
            records.append(None)
            continue
        recs = [
            load_gauge_record(
                outdir / f"realizations/r{i:05d}/gauge_{gid}.csv", gid)
            for gid in manifest["gauge_ids"]
        ]
        records.append(recs)
    return EnsembleMatrix(points=points, records=records,
                          status=list(manifest["status"])), manifest


def check_ensemble_matches_design(ensemble_manifest, design_manifest):
    expected = ensemble_manifest.get("design_sha256")
    actual = _manifest_digest(design_manifest)
    if expected != actual:
        raise IntegrityError(
            f"ensemble was built from design {expected}, got {actual}")


# -------------------------------------------------------------- expansions

def save_expansion(outdir, exp, extra=None):
    """Expansion directory: indices.csv (multi-index rows), coefficients.csv
    (row = basis term, column = output), times.csv, and a manifest with
    m, p, gauge ids, and file hashes."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    m = exp.basis.m
    with open(outdir / "indices.csv", "w", newline="\n") as fh:
        fh.write(",".join(f"n_{d + 1}" for d in range(m)) + "\n")
        np.savetxt(fh, exp.basis.indices, fmt="%d", delimiter=",")
    labels = (exp.outputs.labels() if exp.outputs is not None
              else [f"out{j}" for j in range(exp.n_outputs)])
    write_matrix(outdir / "coefficients.csv", exp.coefficients, labels)
    manifest = {
        "schema": "slipuq-expansion-v1",
        "m": m,
        "p": exp.basis.p,
        "terms": len(exp.basis),
        "outputs": exp.n_outputs,
        "files": {
            "indices.csv": sha256_file(outdir / "indices.csv"),
            "coefficients.csv": sha256_file(outdir / "coefficients.csv"),
        },
    }
    if exp.outputs is not None:
        write_matrix(outdir / "times.csv", exp.outputs.times[:, None], ["time_s"])
        manifest["gauge_ids"] = list(exp.outputs.gauge_ids)
        manifest["files"]["times.csv"] = sha256_file(outdir / "times.csv")
    if extra:
        manifest.update(extra)
    write_manifest(outdir / "manifest.json", manifest)
    return manifest


def load_expansion(outdir, verify=True):
    outdir = Path(outdir)
    manifest = read_manifest(outdir / "manifest.json")
    if verify:
        for name, digest in manifest["files"].items():
            check_file_hash(outdir / name, digest)
    with open(outdir / "indices.csv") as fh:
        fh.readline()
        indices = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    coeffs, _ = read_matrix(outdir / "coefficients.csv")
    basis = PCBasis(m=manifest["m"], p=manifest["p"], indices=indices)
    outputs = None
    if "gauge_ids" in manifest:
        times, _ = read_matrix(outdir / "times.csv")
        outputs = OutputGrid(tuple(manifest["gauge_ids"]), times[:, 0])
    return PCExpansion(basis=basis, coefficients=coeffs, outputs=outputs), manifest


# ------------------------------------------------------------------ chains

def save_chain(outdir, chain, extra=None):
    from .inference import PARAM_NAMES

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = len(chain)
    body = np.column_stack([
        np.arange(n, dtype=float),
        chain.parameters(),
        chain.log_posterior,
        chain.accepted.astype(float),
    ])
    header = ["iteration", *PARAM_NAMES, "log_posterior", "accepted"]
    write_matrix(outdir / "chain.csv", body, header)
    manifest = {
        "schema": "slipuq-chain-v1",
        "iterations": n,
        "seed": chain.seed,
        "acceptance_rate": chain.acceptance_rate,
        "files": {"chain.csv": sha256_file(outdir / "chain.csv")},
    }
    if extra:
        manifest.update(extra)
    write_manifest(outdir / "manifest.json", manifest)
    return manifest


def load_chain(outdir, verify=True):
    from .inference import PosteriorChain

    outdir = Path(outdir)
    manifest = read_manifest(outdir / "manifest.json")
    if verify:
        for name, digest in manifest["files"].items():
            check_file_hash(outdir / name, digest)
    data, _ = read_matrix(outdir / "chain.csv")
    return PosteriorChain(
        slips=data[:, 1:7],
        variances=data[:, 7:11],
        log_posterior=data[:, 11],
        accepted=data[:, 12] > 0.5,
        seed=manifest["seed"],
    ), manifest


def load_observations(obs_dir, gauge_ids):
    """Observation directory: one gauge_<id>.csv per gauge, same schema
    as the per-realization ensemble output."""
    obs_dir = Path(obs_dir)
    records = []
    for gid in gauge_ids:
        path = obs_dir / f"gauge_{gid}.csv"
        if not path.exists():
            raise IntegrityError(f"missing observation file {path}")
        records.append(load_gauge_record(path, gid))
    return records
