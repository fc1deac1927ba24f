"""RIS-assisted multi-cell physical-layer key generation: rates, optimizers and experiments."""
from .ao import AOResult, alternate, baseline_no_ris, baseline_rand_phase
from .channel import (ChannelRealization, CovarianceSet, FadingParams, ScenarioGeometry,
                      analytic_covariances, commutation_matrix, effective_channel,
                      estimate_covariances, path_loss, sample_realization)
from .config import SystemConfig, ValidationError
from .metrics import (NumericalConsistencyError, RateReport, effective_cov_M, effective_cov_N,
                      kgr_exact, kgr_no_ris, kgr_upper_bound, wskr)
from .phase import analytic_gradient, eval_objective_v, optimize_phases, project_unit_modulus
from .precoder import build_subproblem, kkt_step, optimize_precoders, solve_multiplier

__version__ = "0.1.0"
