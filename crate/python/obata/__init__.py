"""Bindings for the obata pseudo-Riemannian geometry toolkit.

The compiled module exposes model loading, field verification, geodesic
tracing, sign-pair classification, and expression jets; see each member's
docstring for details.
"""

from obata._obata import (
    Model,
    classify,
    closed_form,
    evaluate,
    jet,
    solution_branch,
)

__all__ = [
    "Model",
    "classify",
    "closed_form",
    "evaluate",
    "jet",
    "solution_branch",
]
