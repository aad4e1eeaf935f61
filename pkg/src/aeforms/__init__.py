"""Desk-scale numerical audits of the Hodge Laplacian on 1-forms over asymptotically Euclidean R^n."""

__version__ = "0.1.0"

from .assembly import AssembledOperators, assemble
from .grid import Grid, build_grid
from .metric_models import MetricSpec, check_decay_conditions, eval_metric, metric_derivatives

__all__ = [
    "__version__",
    "AssembledOperators",
    "Grid",
    "MetricSpec",
    "assemble",
    "build_grid",
    "check_decay_conditions",
    "eval_metric",
    "metric_derivatives",
]
