"""Random-projection multilabel learning (RIPML).

Labels are embedded with a seeded random projection, features are mapped into
the embedding by ridge regression, and labels are predicted by pooling the
k nearest training embeddings over an ensemble of learners.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DataError,
    DimensionError,
    ModelFormatError,
    NumericError,
    ParseError,
    RipmlError,
    SingularSystemError,
    VersionError,
)
from .model import ClusteredModel, Hyper, Model, Prediction, predict, predict_clustered, train, train_clustered  # noqa: E402
from .serialization import load_model, save_model  # noqa: E402
from .sparse import Dataset, SparseVector, dataset_stats, load_dataset, parse_dataset  # noqa: E402

__all__ = [
    "ClusteredModel",
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "Hyper",
    "Model",
    "ModelFormatError",
    "NumericError",
    "ParseError",
    "Prediction",
    "RipmlError",
    "SingularSystemError",
    "SparseVector",
    "VersionError",
    "dataset_stats",
    "load_dataset",
    "load_model",
    "parse_dataset",
    "predict",
    "predict_clustered",
    "save_model",
    "train",
    "train_clustered",
]
