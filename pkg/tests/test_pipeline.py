import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from slipuq import storage
from slipuq.basis import OutputGrid, PCBasis, PCExpansion
from slipuq.cli import main
from slipuq.config import load_config, parse_config
from slipuq.design import SlipBounds, lhs_sample, smolyak_grid
from slipuq.errors import ConfigError, IntegrityError
from slipuq.pipeline import (cmd_design, cmd_ensemble, cmd_fit, cmd_infer,
                             cmd_moments, cmd_sweep, cmd_twin, cmd_validate,
                             synthesize_observations)

MINI = {
    "model": {"nx": 48, "ny": 36, "end_time_s": 7200.0,
              "gauge_cadence_s": 240.0},
    "basis": {"dimension": 6, "order": 1},
    "design": {"smolyak_level": 1, "lhs_n": 24, "lhs_seed": 42},
    "fit": {"method": "bpdn", "delta_policy": "fixed", "delta_rel": 5.0e-3},
    "mcmc": {"iterations": 6000, "burn_fraction": 0.2, "seed": 7},
    "twin": {"slips_m": [2.7, 23.0, 0.3, 6.5, 21.5, 0.3],
             "noise_sigma_m": 0.05, "noise_seed": 11},
}


def write_config(tmp_path, mapping=MINI, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(mapping))
    return path


def tree_digest(root):
    """Digest of every file under a directory (byte-identity check)."""
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


class TestConfig:
    def test_defaults_parse(self):
        cfg = parse_config({})
        assert cfg.basis.dimension == 6
        assert cfg.bounds.hi == 30.0

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            parse_config({"mcmcmc": {}})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config({"basis": {"dimensions": 6}})

    def test_dimension_subfault_consistency(self):
        with pytest.raises(ConfigError, match="subfaults"):
            parse_config({"basis": {"dimension": 5}})

    def test_twin_slips_validated(self):
        with pytest.raises(ConfigError, match="slips_m"):
            parse_config({"twin": {"slips_m": [1.0, 2.0]}})
        with pytest.raises(ConfigError, match="bounds"):
            parse_config({"twin": {"slips_m": [0, 0, 0, 0, 0, 99.0]}})

    def test_bad_yaml_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("model: [unclosed")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.yaml")

    def test_sha_recorded(self, tmp_path):
        path = write_config(tmp_path)
        cfg = load_config(path)
        assert cfg.config_sha256 == hashlib.sha256(
            path.read_bytes()).hexdigest()


class TestStorageRoundTrips:
    def test_design_round_trip_lhs(self, tmp_path):
        des = lhs_sample(6, 10, seed=3)
        storage.save_design(tmp_path / "d", des, SlipBounds())
        loaded, manifest = storage.load_design(tmp_path / "d")
        assert np.array_equal(loaded.points, des.points)
        assert manifest["kind"] == "lhs"
        assert manifest["seed"] == 3

    def test_design_round_trip_smolyak(self, tmp_path):
        quad = smolyak_grid(3, 2)
        storage.save_design(tmp_path / "q", quad, SlipBounds())
        loaded, manifest = storage.load_design(tmp_path / "q")
        assert np.array_equal(loaded.nodes, quad.nodes)
        assert np.array_equal(loaded.weights, quad.weights)
        assert loaded.level == 2

    def test_expansion_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        basis = PCBasis(3, 2)
        grid = OutputGrid((1, 2), np.array([0.0, 60.0]))
        exp = PCExpansion(basis, rng.normal(size=(len(basis), 4)),
                          outputs=grid)
        storage.save_expansion(tmp_path / "e", exp)
        loaded, _ = storage.load_expansion(tmp_path / "e")
        assert np.array_equal(loaded.coefficients, exp.coefficients)
        assert np.array_equal(loaded.basis.indices, basis.indices)
        assert loaded.outputs.gauge_ids == (1, 2)

    def test_tampered_file_detected(self, tmp_path):
        des = lhs_sample(2, 5, seed=1)
        storage.save_design(tmp_path / "d", des, SlipBounds())
        points = tmp_path / "d" / "points.csv"
        points.write_text(points.read_text().replace("0", "1", 1))
        with pytest.raises(IntegrityError, match="sha256"):
            storage.load_design(tmp_path / "d")


@pytest.fixture(scope="module")
def mini_run(tmp_path_factory):
    """One full pipeline run shared by the read-only stage tests."""
    tmp_path = tmp_path_factory.mktemp("mini")
    config_path = write_config(tmp_path)
    cfg = load_config(config_path)
    workdir = tmp_path / "run"
    cmd_design(cfg, workdir)
    cmd_ensemble(cfg, workdir, "lhs")
    cmd_ensemble(cfg, workdir, "smolyak")
    cmd_fit(cfg, workdir)
    return cfg, workdir, config_path


class TestStages:
    def test_design_outputs(self, mini_run):
        cfg, workdir, _ = mini_run
        for kind, n in (("lhs", 24), ("smolyak", 13)):
            design, manifest = storage.load_design(workdir / f"design_{kind}")
            assert manifest["n"] == n
            assert manifest["config_sha256"] == cfg.config_sha256

    def test_fit_writes_expansion_and_report(self, mini_run):
        cfg, workdir, _ = mini_run
        exp, manifest = storage.load_expansion(workdir / "expansion_bpdn")
        assert manifest["method"] == "bpdn"
        assert exp.basis.m == 6 and exp.basis.p == 1
        report = (workdir / "expansion_bpdn" / "fit_report.csv").read_text()
        assert report.startswith("output,delta,residual,iterations")

    def test_validate_reports_nre_and_ks(self, mini_run):
        cfg, workdir, _ = mini_run
        outdir = cmd_validate(cfg, workdir)
        report = json.loads((outdir / "report.json").read_text())
        assert report["holdout_kind"] == "smolyak"
        assert 0.0 <= report["mean_nre"] <= 1.5
        for gid in ("1", "2", "3", "4"):
            assert "cdf_ks_distance" in report["gauges"][gid]

    def test_moments_band_files(self, mini_run):
        cfg, workdir, _ = mini_run
        outdir = cmd_moments(cfg, workdir)
        data, header = storage.read_matrix(outdir / "band_g1.csv")
        assert header == ["time_s", "mean_m", "lower_m", "upper_m"]
        assert np.all(data[:, 2] <= data[:, 1] + 1e-12)
        assert np.all(data[:, 1] <= data[:, 3] + 1e-12)

    def test_sweep_tables(self, mini_run):
        cfg, workdir, _ = mini_run
        outdir = cmd_sweep(cfg, workdir, kind="smolyak")
        # level-1 smolyak grid contains one-at-a-time slices by construction
        files = sorted(p.name for p in outdir.glob("sweep_g1_*.csv"))
        assert len(files) == 6
        data, _ = storage.read_matrix(outdir / "sweep_g1_s1.csv")
        assert data.shape[1] == 3

    def test_nisp_requires_smolyak_ensemble(self, mini_run):
        cfg, workdir, _ = mini_run
        with pytest.raises(ConfigError, match="smolyak"):
            cmd_fit(cfg, workdir, method="nisp", train_kind="lhs")

    def test_fit_refuses_mismatched_design(self, mini_run, tmp_path):
        cfg, workdir, _ = mini_run
        import shutil
        clone = tmp_path / "tampered"
        shutil.copytree(workdir, clone)
        # regenerate the design with a different seed: hash linkage breaks
        des = lhs_sample(6, 24, seed=999)
        storage.save_design(clone / "design_lhs", des, cfg.bounds,
                            {"config_sha256": cfg.config_sha256})
        with pytest.raises(IntegrityError, match="design"):
            cmd_fit(cfg, clone)


class TestDeterminism:
    def test_stage_reruns_byte_identical(self, tmp_path):
        config_path = write_config(tmp_path)
        cfg = load_config(config_path)
        workdir = tmp_path / "run"
        cmd_design(cfg, workdir)
        cmd_ensemble(cfg, workdir, "lhs")
        first = tree_digest(workdir)
        cmd_design(cfg, workdir)
        cmd_ensemble(cfg, workdir, "lhs")
        assert tree_digest(workdir) == first

    def test_parallel_ensemble_byte_identical(self, tmp_path):
        small = dict(MINI)
        small["design"] = {"smolyak_level": 1, "lhs_n": 6, "lhs_seed": 1}
        config_path = write_config(tmp_path, small)
        cfg = load_config(config_path)
        for workers, name in ((1, "serial"), (2, "parallel")):
            workdir = tmp_path / name
            cmd_design(cfg, workdir)
            cmd_ensemble(cfg, workdir, "lhs", workers=workers)
        assert tree_digest(tmp_path / "serial") == \
            tree_digest(tmp_path / "parallel")


class TestTwin:
    def test_twin_smoke_and_idempotency(self, tmp_path):
        config_path = write_config(tmp_path)
        cfg = load_config(config_path)
        workdir = tmp_path / "run"
        cmd_twin(cfg, workdir)
        report = json.loads(
            (workdir / "twin" / "twin_report.json").read_text())
        assert report["planted_slips_m"] == MINI["twin"]["slips_m"]
        assert len(report["slips"]) == 6
        assert all(r > 0 for r in report["sigma_ratios"])
        first = tree_digest(workdir)
        cmd_twin(cfg, workdir)
        assert tree_digest(workdir) == first

    def test_infer_against_stored_observations(self, mini_run, tmp_path):
        cfg, workdir, _ = mini_run
        obs_dir = tmp_path / "obs"
        synthesize_observations(cfg, obs_dir)
        outdir = cmd_infer(cfg, workdir, obs_dir, outname="infer_test")
        summary = json.loads((outdir / "summary.json").read_text())
        assert set(summary["parameters"]) == {
            "s1", "s2", "s3", "s4", "s5", "s6",
            "var1", "var2", "var3", "var4"}
        chain, manifest = storage.load_chain(outdir)
        assert len(chain) == cfg.mcmc.iterations
        assert manifest["seed"] == cfg.mcmc.seed
        data, header = storage.read_matrix(outdir / "running_mean.csv")
        assert header[0] == "iteration"
        assert data.shape == (cfg.mcmc.iterations, 7)


class TestCliExitCodes:
    def test_ok(self, tmp_path):
        config_path = write_config(tmp_path)
        runner = CliRunner()
        result = runner.invoke(main, ["design", "-c", str(config_path),
                                      "-o", str(tmp_path / "w")])
        assert result.exit_code == 0

    def test_config_error_is_2(self, tmp_path):
        bad = dict(MINI)
        bad["fit"] = {"method": "lasso"}
        config_path = write_config(tmp_path, bad)
        runner = CliRunner()
        result = runner.invoke(main, ["design", "-c", str(config_path),
                                      "-o", str(tmp_path / "w")])
        assert result.exit_code == 2
        assert "config error" in result.output

    def test_integrity_error_is_4(self, tmp_path):
        config_path = write_config(tmp_path)
        runner = CliRunner()
        runner.invoke(main, ["design", "-c", str(config_path),
                             "-o", str(tmp_path / "w")])
        points = tmp_path / "w" / "design_lhs" / "points.csv"
        points.write_text(points.read_text().replace("0", "1", 1))
        result = runner.invoke(main, ["ensemble", "-c", str(config_path),
                                      "-o", str(tmp_path / "w"),
                                      "--kind", "lhs"])
        assert result.exit_code == 4
        assert "integrity" in result.output

    def test_missing_observations_is_4(self, mini_run, tmp_path):
        cfg, workdir, config_path = mini_run
        runner = CliRunner()
        result = runner.invoke(main, ["infer", "-c", str(config_path),
                                      "-o", str(workdir),
                                      "--observations", str(tmp_path / "no")])
        assert result.exit_code == 4
