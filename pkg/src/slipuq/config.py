"""Pipeline configuration: one YAML file with documented keys.

Every stage reads the same file; all seeds are explicit.  See
docs in the README for the full key reference.
"""

import hashlib
from dataclasses import dataclass, field, fields

import yaml

from .design import SlipBounds
from .errors import ConfigError
from .swe import Gauge, ModelConfig, Subfault


@dataclass
class BasisSpec:
    dimension: int = 6
    order: int = 5


@dataclass
class DesignSpec:
    smolyak_level: int = 5
    lhs_n: int = 729
    lhs_seed: int = 42


@dataclass
class FitSpec:
    method: str = "bpdn"          # bpdn | nisp
    delta_policy: str = "cv"      # cv | fixed
    delta_rel: float = 1e-3       # used by the fixed policy
    cv_folds: int = 4
    cv_stride: int = 1            # cross-validate every k-th column
    max_iter: int = 10_000


@dataclass
class McmcSpec:
    iterations: int = 200_000
    burn_fraction: float = 0.2
    seed: int = 7
    init_variance: float = 0.01


@dataclass
class MomentSpec:
    rigidity_pa: float = 3.0e10   # schematic crustal rigidity
    areas_m2: list = None         # default: subfault footprint areas


@dataclass
class TwinSpec:
    slips_m: list = field(default_factory=lambda: [2.7, 23.0, 0.3, 6.5, 21.5, 0.3])
    noise_sigma_m: float = 0.05
    noise_seed: int = 11


@dataclass
class PipelineConfig:
    model: ModelConfig
    bounds: SlipBounds
    basis: BasisSpec
    design: DesignSpec
    fit: FitSpec
    mcmc: McmcSpec
    moment: MomentSpec
    twin: TwinSpec
    config_sha256: str = None

    def subfault_areas_m2(self):
        if self.moment.areas_m2 is not None:
            return list(self.moment.areas_m2)
        return [f.area_m2() for f in self.model.subfaults]


def _build(cls, mapping, where):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(mapping).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build_model(mapping):
    if mapping is None:
        mapping = {}
    mapping = dict(mapping)
    if "gauges" in mapping:
        mapping["gauges"] = tuple(
            _build(Gauge, g, "model.gauges") for g in mapping["gauges"])
    if "subfaults" in mapping:
        mapping["subfaults"] = tuple(
            _build(Subfault, s, "model.subfaults") for s in mapping["subfaults"])
    if "extent_km" in mapping:
        mapping["extent_km"] = tuple(mapping["extent_km"])
    return _build(ModelConfig, mapping, "model")


def _build_bounds(mapping):
    if mapping is None:
        return SlipBounds()
    try:
        return SlipBounds(lo=float(mapping.get("slip_min_m", 0.0)),
                          hi=float(mapping.get("slip_max_m", 30.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bounds: {exc}") from exc


def parse_config(mapping, sha256=None):
    """Validated PipelineConfig from a parsed YAML mapping."""
    if not isinstance(mapping, dict):
        raise ConfigError("config root must be a mapping")
    known = {"model", "bounds", "basis", "design", "fit", "mcmc",
             "moment", "twin"}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    cfg = PipelineConfig(
        model=_build_model(mapping.get("model")),
        bounds=_build_bounds(mapping.get("bounds")),
        basis=_build(BasisSpec, mapping.get("basis"), "basis"),
        design=_build(DesignSpec, mapping.get("design"), "design"),
        fit=_build(FitSpec, mapping.get("fit"), "fit"),
        mcmc=_build(McmcSpec, mapping.get("mcmc"), "mcmc"),
        moment=_build(MomentSpec, mapping.get("moment"), "moment"),
        twin=_build(TwinSpec, mapping.get("twin"), "twin"),
        config_sha256=sha256,
    )
    if cfg.basis.dimension != len(cfg.model.subfaults):
        raise ConfigError(
            f"basis dimension {cfg.basis.dimension} != "
            f"{len(cfg.model.subfaults)} subfaults")
    if cfg.fit.method not in ("bpdn", "nisp"):
        raise ConfigError(f"fit.method must be bpdn or nisp, got {cfg.fit.method!r}")
    if cfg.fit.delta_policy not in ("cv", "fixed"):
        raise ConfigError("fit.delta_policy must be cv or fixed")
    if not 0.0 <= cfg.mcmc.burn_fraction < 1.0:
        raise ConfigError("mcmc.burn_fraction must be in [0, 1)")
    if len(cfg.twin.slips_m) != cfg.basis.dimension:
        raise ConfigError("twin.slips_m length must equal the basis dimension")
    if any(s < cfg.bounds.lo or s > cfg.bounds.hi for s in cfg.twin.slips_m):
        raise ConfigError("twin.slips_m outside the slip bounds")
    return cfg


def load_config(path):
    """Parse and validate a YAML config file; records its sha256."""
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        mapping = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return parse_config(mapping or {}, sha256=hashlib.sha256(raw).hexdigest())
