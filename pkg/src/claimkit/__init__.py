"""Manipulation analysis for courtroom dialogues.

Stage 1 infers each party's intent; stage 2 runs a Detector, Analyzer,
Evidence and Meta agent cascade over any chat-completion backend. The
package also ships the evaluation metrics, agreement statistics, dataset
tooling and a CLI (``claimkit``).
"""
from .backend import ChatRequest, ChatResponse, MockBackend, MockRule, OpenAIBackend, ResponseCache, script_mock
from .dataset import Dataset, Record, Split, load_dataset, select_exemplars, split_dataset
from .metrics import MetricsReport, Task, detection_metrics, manipulator_metrics, technique_metrics
from .pipeline import AgentTrace, Setting, infer_intents, run_baseline, run_claim
from .schema import Label, Technique, parse_technique, validate_label
from .transcript import Dialogue, Role, Turn, normalize_roles, parse_transcript

__version__ = "0.1.0"

__all__ = [
    "AgentTrace",
    "ChatRequest",
    "ChatResponse",
    "Dataset",
    "Dialogue",
    "Label",
    "MetricsReport",
    "MockBackend",
    "MockRule",
    "OpenAIBackend",
    "Record",
    "ResponseCache",
    "Role",
    "Setting",
    "Split",
    "Task",
    "Technique",
    "Turn",
    "detection_metrics",
    "infer_intents",
    "load_dataset",
    "manipulator_metrics",
    "normalize_roles",
    "parse_technique",
    "parse_transcript",
    "run_baseline",
    "run_claim",
    "script_mock",
    "select_exemplars",
    "split_dataset",
    "technique_metrics",
    "validate_label",
]
