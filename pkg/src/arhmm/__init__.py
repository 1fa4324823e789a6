"""Autoregressive hidden Markov models for step lengths and turning angles."""

from ._kernels import BACKEND
from .decode import (
    ResidualSeries,
    StateSequence,
    decoding_accuracy,
    pseudo_residuals,
    viterbi,
)
from .dists import GammaMeanSd, VonMises
from .errors import DomainError, EstimationError, NumericError, ParseError, StructureError
from .geometry import StepTurnSeries, Track, downsample, steps_and_turns
from .likelihood import PenaltyConfig, PooledData, cond_loglik, penalized_cond_loglik
from .model import ModelSpec, Parameters, from_working, param_count, stationary_dist, to_working
from .simulate import SimScenario, paper_scenario, simulate

__version__ = "0.1.0"
