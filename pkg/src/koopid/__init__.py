"""Nonlinear Koopman-operator system identification from snapshot data.

Pipeline: simulate or load an observable series, delay-embed and lift it
into training matrices, fit a linear or nonlinear one-step model by
truncated-SVD least squares, optionally project onto a POD basis, and
evaluate predictions, basins of attraction, limit cycles, and phase
response against reference simulators.
"""
from .analysis import (BasinGridResult, CycleResult, EigenmodeReport,
                       basin_agreement, basin_map, basin_map_duffing_reference,
                       detect_cycle, eigenmode_spectrum, estimate_prc,
                       estimate_prc_stepper, find_fixed_point, find_limit_cycle,
                       l2_error, map_jacobian)
from .dictionary import (ComposedLift, DictionarySpec, LiftedData,
                         ObservableSeries, PolynomialLift, RbfLift, assemble,
                         build_delay_state, dict_output_dim, eval_lift,
                         lift_jacobian, monomial_index_tuples, sample_rbf_centers)
from .estimators import (Dmd, Edmdc, NonlinearControlledPredictor,
                         NonlinearPredictor, ReducedModel, RolloutResult,
                         delay_init, extrapolated_history, reduce, rollout)
from .exceptions import ConfigError, NumericsError
from .io import load_model, read_series, save_model, write_series
from .numerics import (FULL_RANK, PodBasis, SvdFactors, pod_basis, svd_factors,
                       truncated_pinv_solve)
from .simulators import (BurgersParams, DuffingParams, HopfParams, InputSignal,
                         InputSignalSpec, constant_input, gen_input, hopf_stepper,
                         simulate_burgers, simulate_duffing, simulate_hopf)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
