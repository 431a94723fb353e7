"""Design-based inference for regression discontinuity designs with a noisy running variable."""
from .noise import BinomialNoise, GaussianNoise, cond_cdf, default_window, density, noise_from_dict
from .grids import LatentGrid, RunningGrid, build_latent_grid, build_running_grid
from .pilot import PilotDensity, estimate_M, estimate_sigma2, marginal_density_at, npmle_em
from .targets import TargetSpec, make_wbar
from .weights import HPair, WeightFunction, check_regularity, compute_h, solve_weights
from .estimator import SampleBatch, plugin_variance, ratio_estimate
from .bias import DistributionBand, build_band, worst_case_bias
from .inference import (EstimateReport, PipelineOptions, bias_aware_halfwidth, design_weights, infer,
                        run_pipeline)

__version__ = "0.1.0"
