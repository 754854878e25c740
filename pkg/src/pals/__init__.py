"""Infection risk on contact networks with latent spreaders.

Mean-field variational EM for a model in which a node's outcome depends on
its own characteristics and on exposure through neighbors whose spreader
state is unobserved, together with synthetic cohorts, benchmark models and
evaluation metrics.
"""

__version__ = "0.1.0"

from .model import FitConfig, FitResult, PalsWeights, fit, predict_infection, predict_spreader  # noqa: E402

__all__ = ["FitConfig", "FitResult", "PalsWeights", "fit", "predict_infection", "predict_spreader", "__version__"]
