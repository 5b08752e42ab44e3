"""Task-oriented dialogue simulation, bootstrapping, and evaluation toolkit."""

from .core import (
    ApiCall,
    ApiResponse,
    ApiSchema,
    Episode,
    Fold,
    Origin,
    ParseError,
    Speaker,
    Turn,
    calls_equal,
    parse_call,
    parse_response,
    parse_schema,
    serialize_call,
    serialize_response,
    serialize_schema,
)
from .agents import (
    DecodeConfig,
    DecodeMode,
    NoisyUser,
    Observation,
    RemoteAgent,
    Role,
    ScriptedAssistant,
    ScriptedUser,
    nucleus_filter,
)
from .exemplar import ExemplarAssistant, ExemplarStore, ExemplarUser, train_exemplar
from .mock_api import ApiTable, invoke, load_table, synthesize_table
from .orchestrator import SimConfig, run_batch, run_dialogue

__all__ = [
    "ApiCall",
    "ApiResponse",
    "ApiSchema",
    "ApiTable",
    "DecodeConfig",
    "DecodeMode",
    "Episode",
    "ExemplarAssistant",
    "ExemplarStore",
    "ExemplarUser",
    "Fold",
    "NoisyUser",
    "Observation",
    "Origin",
    "ParseError",
    "RemoteAgent",
    "Role",
    "ScriptedAssistant",
    "ScriptedUser",
    "SimConfig",
    "Speaker",
    "Turn",
    "calls_equal",
    "invoke",
    "load_table",
    "nucleus_filter",
    "parse_call",
    "parse_response",
    "parse_schema",
    "run_batch",
    "run_dialogue",
    "serialize_call",
    "serialize_response",
    "serialize_schema",
    "synthesize_table",
    "train_exemplar",
]
