"""Numerical experiments for the fractional prescribed-curvature problem on S^n."""

__all__ = [
    "conformal",
    "config",
    "errors",
    "functionals",
    "local_estimates",
    "runner",
    "schemas",
    "solver",
    "specfun",
    "sphere",
    "storage",
]
