"""Fault-slip inversion from tsunami gauge records.

Builds polynomial-chaos surrogates of a shallow-water forward model
(sparse-grid projection or basis-pursuit denoising) and samples a
Bayesian posterior over subfault slips and per-gauge noise variances
with adaptive Metropolis MCMC.
"""

from .basis import (OutputGrid, PCBasis, PCExpansion, basis_eval,
                    basis_norm_sq, legendre_eval, pce_eval, pce_eval_many,
                    pce_mean, pce_variance, sobol_indices,
                    total_order_indices)
from .bpdn import BpdnOptions, BpdnSolution, bpdn_solve
from .design import (DesignMatrix, SlipBounds, SparseQuadrature,
                     canonical_to_slip, gauss_patterson, lhs_sample,
                     slip_to_canonical, smolyak_grid)
from .errors import (ConfigError, InstabilityError, IntegrityError,
                     NumericError, SlipUQError)
from .fit import (RegressionSystem, cross_validate_delta, fit_bpdn_expansion,
                  nisp_project, nre)
from .inference import (AmOptions, ObservationSet, PosteriorChain,
                        PosteriorState, adaptive_metropolis,
                        align_observations, hpd_interval, kde, log_likelihood,
                        log_posterior, log_prior, map_estimate, running_mean,
                        sample_posterior, seismic_moment, summarize_chain)
from .swe import (EnsembleMatrix, Gauge, GaugeRecord, ModelConfig, StateField,
                  Subfault, arrival_time, desk_config, max_wave_amplitude,
                  run_ensemble, simulate, slip_to_initial_surface)

__version__ = "0.1.0"
