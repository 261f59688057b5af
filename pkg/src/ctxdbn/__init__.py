"""Context-sensitive dynamic Bayesian networks for next-event prediction on event logs."""

__version__ = "0.1.0"

from .dbn import (
    UNOBSERVED,
    CpdSet,
    DbnModel,
    PredictionDistribution,
    Structure,
    forward_pass,
    init_model,
    log_likelihood,
    model_from_json,
    model_to_json,
    predict_next_event,
    predict_symptom,
    trace_posteriors,
)
from .errors import ConfigError, DataError, ImpossibleEvidence, RowError
from .eventlog import (
    EncodedLog,
    EventLog,
    Roles,
    discretize_attribute,
    encode_log,
    filter_short_traces,
    parse_csv,
    split_log,
)
from .learning import EmConfig, em_fit, select_hidden_states, train_with_restarts
