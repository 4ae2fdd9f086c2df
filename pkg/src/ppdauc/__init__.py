"""Stochastic primal-dual AUC maximisation.

The pairwise squared AUC surrogate is rewritten as a per-example min-max
problem (:mod:`ppdauc.objective`) and solved with staged proximal
primal-dual methods (:mod:`ppdauc.optimizers`). Supporting modules cover
datasets and streams, small scoring models, streaming class-prior
estimates, AUC metrics and numerical PL-condition audits.
"""
from .data import Dataset, Example, StreamSource, gen_two_gaussians, make_imbalanced, read_csv, read_libsvm
from .errors import (
    ClassMissingError,
    ConfigError,
    DimensionError,
    EmptyInputError,
    EstimatorNotReady,
    LabelError,
    NumericError,
    ParseError,
    PPDAUCError,
    UnsupportedError,
)
from .metrics import MetricSnapshot, auc_binary
from .model import Arch, ModelParams, forward, forward_grad, init_params
from .objective import ClassPrior, PrimalDualState, optimal_ab_alpha, pairwise_auc_loss, saddle_equivalence_check
from .optimizers import ScheduleParams, ce_sgd_run, oauc_run, pga_run, ppd_adagrad_run, ppd_sg_run
from .streaming import PriorTracker

__version__ = "0.1.0"
