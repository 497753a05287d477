"""Conformal prediction sets for contextual robust decisions, with model selection.

Candidate nonconformity scores are compared by the decision risk of the
robust decisions they induce. The subpackages cover quantiles, robust
solvers, conformal sets, localization kernels, the selectors, evaluation
metrics and synthetic experiments.
"""

from .core import (
    BoxSet,
    CromsError,
    DimensionError,
    EllipsoidSet,
    EmptyInputError,
    FiniteLabelSet,
    FiniteMatrixLoss,
    FinitePointSet,
    LabeledDataset,
    LabelGrid,
    PortfolioLoss,
    RobustSolution,
    ScoreModel,
    loss,
)
from .select import (
    E2E,
    Croims,
    ECroms,
    FCroims,
    FCroms,
    FCromsRegression,
    NaiveCP,
    NaiveLCP,
    SelectionResult,
)

__version__ = "0.1.0"

__all__ = [
    "BoxSet", "CromsError", "Croims", "DimensionError", "E2E", "ECroms", "EllipsoidSet", "EmptyInputError",
    "FCroims", "FCroms", "FCromsRegression", "FiniteLabelSet", "FiniteMatrixLoss", "FinitePointSet",
    "LabelGrid", "LabeledDataset", "NaiveCP", "NaiveLCP", "PortfolioLoss", "RobustSolution", "ScoreModel",
    "SelectionResult", "loss",
]
