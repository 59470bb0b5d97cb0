"""Human-in-the-loop active learning for cross-domain news veracity."""

from .corpus import CorpusSplit, NewsRecord, SplitSpec, load_jsonl, split, synth_corpus
from .encoder import MockEncoder, PretrainedEncoder, make_encoder
from .errors import (
    AnnotationError,
    ConflictError,
    CorpusError,
    DegenerateGeometryError,
    MissingInputError,
    StateError,
    VeriloopError,
)
from .model import ModelConfig
from .pipeline import Pipeline, load_config

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "ConflictError",
    "CorpusError",
    "CorpusSplit",
    "DegenerateGeometryError",
    "MissingInputError",
    "MockEncoder",
    "ModelConfig",
    "NewsRecord",
    "Pipeline",
    "PretrainedEncoder",
    "SplitSpec",
    "StateError",
    "VeriloopError",
    "load_config",
    "load_jsonl",
    "make_encoder",
    "split",
    "synth_corpus",
    "__version__",
]
