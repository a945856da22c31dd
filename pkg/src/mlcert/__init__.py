"""Certified robustness of Gaussian-smoothed multi-label classifiers."""

__version__ = "0.1.0"

from .numerics import beta_quantile, gaussian_cdf, gaussian_quantile, regularized_incomplete_beta
from .sampler import CertificationInstance, SmoothingConfig, count_frequencies
from .bounds import ProbabilityBounds, estimate_bounds
from .certifier import CertifiedResult, certified_intersection_size, certified_radius, baseline_per_label
from .evaluation import MetricsRow, instance_metrics, sweep

__all__ = [
    "__version__",
    "beta_quantile",
    "gaussian_cdf",
    "gaussian_quantile",
    "regularized_incomplete_beta",
    "CertificationInstance",
    "SmoothingConfig",
    "count_frequencies",
    "ProbabilityBounds",
    "estimate_bounds",
    "CertifiedResult",
    "certified_intersection_size",
    "certified_radius",
    "baseline_per_label",
    "MetricsRow",
    "instance_metrics",
    "sweep",
]
