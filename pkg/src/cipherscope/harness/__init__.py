"""Pipeline glue: dataset container, extraction/eval/classify helpers, CLI."""

from .container import ContainerError, read_container, write_container
from .pipeline import EvalSummary, classify_program, evaluate, extract_dataset

__all__ = [
    "ContainerError",
    "EvalSummary",
    "classify_program",
    "evaluate",
    "extract_dataset",
    "read_container",
    "write_container",
]
