"""Structure-guided symbolic regression for PDEs: expression-tree evolution
under a hybrid physics-residual + Taylor-coefficient fitness, with masking
attribution steering crossover and mutation."""

from .expr import Expr, SymbolLibrary, parse, serialize
from .jets import Jet, jet_var, taylor_coeffs, derivative
from .prior import TaylorPrior, select_anchors, extract_prior, taylor_loss
from .problems import PdeProblem, registry, get_problem, sample_collocation, phys_loss, mae
from .pinn import Mlp, TrainConfig, train
from .attribution import SensitivityReport, sensitivities, sampling_distribution
from .engine import GpConfig, Individual, evolve

__all__ = [
    "Expr",
    "SymbolLibrary",
    "parse",
    "serialize",
    "Jet",
    "jet_var",
    "taylor_coeffs",
    "derivative",
    "TaylorPrior",
    "select_anchors",
    "extract_prior",
    "taylor_loss",
    "PdeProblem",
    "registry",
    "get_problem",
    "sample_collocation",
    "phys_loss",
    "mae",
    "Mlp",
    "TrainConfig",
    "train",
    "SensitivityReport",
    "sensitivities",
    "sampling_distribution",
    "GpConfig",
    "Individual",
    "evolve",
]

__version__ = "0.1.0"
