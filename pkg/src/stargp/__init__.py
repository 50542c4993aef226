"""Sparse autoregressive Gaussian-process transport maps for space-time fields.

The joint density of a high-dimensional, possibly non-Gaussian space-time
field is factorized into univariate conditionals along a data-driven
ordering; each conditional is a closed-form Bayesian GP regression on a
small set of nearest previously ordered neighbors, tied together by six
global hyperparameters.  The fitted map generates new fields
unconditionally or forecasts forward in time from a partial trajectory.

Typical flow::

    X_std, cstats = geometry.standardize_coords(X_raw)
    Y_std, rstats = geometry.standardize_responses(Y_raw)
    est = lengthscale.estimate_scales(X_std, Y_std)
    ordering = ordering.build_ordering(
        geometry.scale_coords(X_std, est.scaling()), kind="maximin", m=30)
    theta, trace = inference.fit_theta(Y_std[:, ordering.perm], ordering)
    fm = inference.build_fitted_map(...)
    fields = sampling.sample_unconditional(fm, 1000, seed=0)
"""

__version__ = "0.1.0"

from . import geometry, inference, lengthscale, oracle, ordering, priors, sampling
from .geometry import ScalingParams
from .inference import FitConfig, FittedMap, build_fitted_map, fit_theta, load_map, save_map
from .lengthscale import ScaleFitConfig, estimate_scales
from .ordering import Ordering, build_ordering
from .priors import Hyperparams
from .sampling import forecast, logscore, sample_unconditional

__all__ = [
    "__version__",
    "geometry",
    "ordering",
    "lengthscale",
    "priors",
    "inference",
    "sampling",
    "oracle",
    "ScalingParams",
    "ScaleFitConfig",
    "estimate_scales",
    "Ordering",
    "build_ordering",
    "Hyperparams",
    "FitConfig",
    "FittedMap",
    "fit_theta",
    "build_fitted_map",
    "save_map",
    "load_map",
    "sample_unconditional",
    "forecast",
    "logscore",
]
