"""Command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 artifact
integrity failure.
"""

import functools
import logging
import sys

import click

from . import pipeline
from .config import load_config
from .errors import ConfigError, IntegrityError, NumericError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INTEGRITY = 4


def _stage(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericError as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except IntegrityError as exc:
            click.echo(f"integrity failure: {exc}", err=True)
            sys.exit(EXIT_INTEGRITY)
    return wrapper


def _common(func):
    func = click.option("--config", "-c", "config_path", required=True,
                        type=click.Path(exists=False),
                        help="Pipeline YAML config.")(func)
    func = click.option("--workdir", "-o", required=True,
                        type=click.Path(), help="Artifact directory.")(func)
    return func


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
def main(verbose):
    """Fault-slip inversion from tsunami gauges via PC surrogates."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
@_stage
def design(config_path, workdir):
    """Write the Smolyak and LHS designs."""
    cfg = load_config(config_path)
    paths = pipeline.cmd_design(cfg, workdir)
    for kind, path in paths.items():
        click.echo(f"{kind}: {path}")


@main.command()
@_common
@click.option("--kind", type=click.Choice(["smolyak", "lhs"]), default="lhs",
              show_default=True)
@click.option("--workers", type=int, default=1, show_default=True,
              help="Parallel forward runs; output is order-independent.")
@_stage
def ensemble(config_path, workdir, kind, workers):
    """Run the forward model over a stored design."""
    cfg = load_config(config_path)
    click.echo(pipeline.cmd_ensemble(cfg, workdir, kind, workers=workers))


@main.command()
@_common
@click.option("--method", type=click.Choice(["bpdn", "nisp"]), default=None,
              help="Override fit.method from the config.")
@click.option("--train", "train_kind",
              type=click.Choice(["smolyak", "lhs"]), default=None,
              help="Training ensemble (defaults by method).")
@_stage
def fit(config_path, workdir, method, train_kind):
    """Compute PC coefficients from a stored ensemble."""
    cfg = load_config(config_path)
    click.echo(pipeline.cmd_fit(cfg, workdir, method=method,
                                train_kind=train_kind))


@main.command()
@_common
@click.option("--method", type=click.Choice(["bpdn", "nisp"]), default=None)
@click.option("--holdout", "holdout_kind",
              type=click.Choice(["smolyak", "lhs"]), default=None)
@_stage
def validate(config_path, workdir, method, holdout_kind):
    """NRE and CDF comparison on a held-out ensemble."""
    cfg = load_config(config_path)
    click.echo(pipeline.cmd_validate(cfg, workdir, method=method,
                                     holdout_kind=holdout_kind))


@main.command()
@_common
@click.option("--method", type=click.Choice(["bpdn", "nisp"]), default=None)
@_stage
def moments(config_path, workdir, method):
    """Mean and +-2 sigma band files from a stored expansion."""
    cfg = load_config(config_path)
    click.echo(pipeline.cmd_moments(cfg, workdir, method=method))


@main.command()
@_common
@click.option("--observations", "obs_dir", required=True, type=click.Path(),
              help="Directory of gauge_<id>.csv observation files.")
@click.option("--method", type=click.Choice(["bpdn", "nisp"]), default=None)
@_stage
def infer(config_path, workdir, obs_dir, method):
    """Sample the slip/noise posterior against observations."""
    cfg = load_config(config_path)
    click.echo(pipeline.cmd_infer(cfg, workdir, obs_dir, method=method))


@main.command()
@_common
@click.option("--kind", type=click.Choice(["smolyak", "lhs"]),
              default="smolyak", show_default=True)
@click.option("--threshold", type=float, default=0.05, show_default=True,
              help="Arrival-time threshold on |eta| in meters.")
@_stage
def sweep(config_path, workdir, kind, threshold):
    """Arrival/MWA tables along one-at-a-time design slices."""
    cfg = load_config(config_path)
    click.echo(pipeline.cmd_sweep(cfg, workdir, kind=kind,
                                  threshold=threshold))


@main.command()
@_common
@click.option("--workers", type=int, default=1, show_default=True)
@_stage
def twin(config_path, workdir, workers):
    """End-to-end synthetic recovery of planted slips."""
    cfg = load_config(config_path)
    out = pipeline.cmd_twin(cfg, workdir, workers=workers)
    click.echo(out)


if __name__ == "__main__":
    main()
