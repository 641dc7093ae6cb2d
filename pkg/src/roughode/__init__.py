"""Rough-path calculus toolkit: signatures, tree Hopf algebra, log-ODE solvers.

Subpackages stay import-light; pull the module you need:

- ``tensor_algebra``: truncated tensors, exp/log, brackets, Dynkin projection
- ``geometric_signature``: canonical lifts of piecewise-linear drivers
- ``tree_hopf``: labelled rooted trees, coproduct, star-convolution group
- ``differential_calculus``: jets, word/bracket/tree/forest operators
- ``geometric_rde``: log-ODE scheme and Taylor-residual diagnostics
- ``branched_signature``: tree-indexed lifts and synthetic level-2 data
- ``branched_rde``: branched flows, residuals, approximate-flow checks
- ``experiments`` / ``cli``: experiment configs and the command-line front end
"""

__version__ = "0.1.0"

__all__ = [
    "tensor_algebra",
    "geometric_signature",
    "tree_hopf",
    "differential_calculus",
    "geometric_rde",
    "branched_signature",
    "branched_rde",
    "experiments",
]
