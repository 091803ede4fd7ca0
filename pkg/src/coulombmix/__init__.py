"""Mixture models with random-matrix eigenvalue repulsion priors."""

__version__ = "0.1.0"

from .estimator import CoulombMixture  # noqa: E402

__all__ = ["CoulombMixture", "__version__"]
