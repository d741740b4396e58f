"""Conditional normalizing-flow surrogate for SDE final-state sampling."""

from ._core import (
    Model,
    __version__,
    analytic_pdf_1d,
    analytic_solution_10d,
    cross_entropy,
    generate_pairs,
    grid_search,
    kl_divergence_1d,
    load_dataset,
    load_model,
    runaway_fraction,
    save_dataset,
    set_workers,
    train,
)

__all__ = [
    "Model",
    "__version__",
    "analytic_pdf_1d",
    "analytic_solution_10d",
    "cross_entropy",
    "generate_pairs",
    "grid_search",
    "kl_divergence_1d",
    "load_dataset",
    "load_model",
    "runaway_fraction",
    "save_dataset",
    "set_workers",
    "train",
]
