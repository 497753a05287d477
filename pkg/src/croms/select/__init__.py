"""Model selectors. Each class follows ``fit(labeled)`` then ``predict(xs)``;
the lower-case functions run one test point."""

from .base import ModelView, Outcome, SelectionResult
from .erm import E2E, ECroms, NaiveCP, auxiliary_risks, e2e, e_croms, naive_cp
from .full import FCroms, FCromsRegression, FullSelector, f_croms_classification, f_croms_regression
from .local import Croims, FCroims, NaiveLCP, croims, f_croims, naive_lcp

__all__ = [
    "Croims", "E2E", "ECroms", "FCroims", "FCroms", "FCromsRegression", "FullSelector", "ModelView",
    "NaiveCP", "NaiveLCP", "Outcome", "SelectionResult", "auxiliary_risks", "croims", "e2e", "e_croms",
    "f_croims", "f_croms_classification", "f_croms_regression", "naive_cp", "naive_lcp",
]
