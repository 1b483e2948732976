"""wftune: budgeted auto-tuning for coupled multi-component workflows."""

from .baselines import run_al, run_alph, run_geist_like, run_rs
from .boosting import BoostingParams, GradientBoostedTrees, fit, refit
from .ceal import (Budget, best_predicted, build_component_models,
                   detect_switch, resume_ceal, run_ceal)
from .combiner import LowFidelityModel, choose_function, rank_pool
from .executor import (ExternalExecutor, Measurement, MeasurementStore,
                       import_history, write_history)
from .metrics import (best_performance, least_number_of_uses, mdape,
                      recall_score)
from .space import (ComponentBinding, Constraint, InfeasibleSpaceError,
                    Parameter, ParameterSpace, SamplePool, build_pool,
                    pool_size_for, project)
from .synthetic import SyntheticExecutor, brute_force_oracle
from .trace import TuningTrace
from .workflow import WorkflowSpec, load_workflow

__version__ = "0.1.0"
