"""Growth-and-reset master-equation model of income distributions."""

from .analytic import (BetaPrimeShape, beta_prime_cdf, beta_prime_mean, beta_prime_pdf, master_curve,
                       pearson_type1_pdf, stationary_from_kernels, stationary_from_params, tail_exponent)
from .dynamics import DiscreteState, integrate_continuous, run_to_steady, step_continuous, step_discrete
from .errors import GrowResetError, ValidationError
from .estimation import (LogBinnedSeries, PanelDataset, growth_increments, income_histogram, rescale,
                         reset_rates)
from .fitting import FitReport, collapse_metric, fit_beta_prime, fit_growth_C, fit_reset_beta, tail_slope
from .grid import DensityGrid
from .kernels import KernelParams, Rates, conservation_checks, constant_rates, constrain, eval_growth, eval_reset
from .montecarlo import AgentEnsemble, SyntheticPanelConfig, generate_panel, simulate_ensemble

__version__ = "0.1.0"
