"""surveyq: an adaptive questionnaire agent.

A deep Q-network decides, one step at a time, which categorical survey
question to ask next and when to stop and predict a binary outcome, trading
per-question cost against prediction accuracy. Ships with a fixed-question
supervised baseline, an exact dynamic-programming oracle for validation, an
evaluation harness, a CLI, and an HTTP questionnaire service.
"""

__version__ = "0.1.0"

from .dataprep import (
    Dataset,
    FeatureSchema,
    Record,
    SynthSpec,
    balanced_sample,
    chi_square,
    encode_state,
    load_csv,
    rank_features,
    split,
    synth_generate,
)
from .environment import Action, EnvConfig, SurveyState, reset, step, valid_actions
from .evaluation import Metrics, evaluate, results_table
from .neuralnet import Network, NetworkArch, forward, init_weights, linear_anneal
from .oracle import optimal_value, policy_value

__all__ = [
    "Action",
    "Dataset",
    "EnvConfig",
    "FeatureSchema",
    "Metrics",
    "Network",
    "NetworkArch",
    "Record",
    "SurveyState",
    "SynthSpec",
    "balanced_sample",
    "chi_square",
    "encode_state",
    "evaluate",
    "forward",
    "init_weights",
    "linear_anneal",
    "load_csv",
    "optimal_value",
    "policy_value",
    "rank_features",
    "reset",
    "results_table",
    "split",
    "step",
    "synth_generate",
    "valid_actions",
]
