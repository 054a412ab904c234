"""Sparse Bayesian learning for real and complex linear models under
two- and three-layer Bessel-K hierarchical priors.

Inference engines: GEM (:mod:`bksbl.em`), fast sequential maximization
(:mod:`bksbl.fast`) and variational message passing (:mod:`bksbl.vmp`);
problem synthesis and metrics in :mod:`bksbl.model`, the Monte Carlo
driver in :mod:`bksbl.harness`, special functions in
:mod:`bksbl.specfun`.  The numerical hot kernels live in a compiled
extension with a pure-Python fallback (:mod:`bksbl.kernels`).
"""

from .kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
