"""HLS quality-of-result prediction with an LLM predictor/criticiser loop."""

from ._core import (
    BackendError,
    DataError,
    Error,
    analyze_kernel,
    knn,
    load_dataset,
    parse_prediction,
    rmse,
    run_cli,
    tsne,
)

__all__ = [
    "BackendError",
    "DataError",
    "Error",
    "analyze_kernel",
    "knn",
    "load_dataset",
    "parse_prediction",
    "rmse",
    "run_cli",
    "tsne",
]
