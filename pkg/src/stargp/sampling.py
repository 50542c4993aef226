"""Predictive densities, field generation, forecasting, and log-scores.

The posterior predictive of each ordered index, given the values at its
conditioning set, is a location-scale Student t:

    y_i* | neighbors ~ t_nu( f_i, d_i^2 (v_i + 1) ),   nu = 2 alpha~_i,

with f_i = k*' G_i^-1 y_i, v_i = K_i(y*, y*) - k*' G_i^-1 k*, and
d_i^2 = beta~_i / alpha~_i.  Position 0 has an empty conditioning set and
a zero kernel, so f = 0 and v = 0 there.

Unconditional generation walks the ordering, drawing each index given the
values already drawn; forecasting does the same under a time ordering but
reads observed values for the first N0 positions.  Replicate streams are
spawned from the master seed, so samples are reproducible regardless of
execution order.  Densities and generated fields refer to the raw data
scale: samples are de-standardized, and log-scores carry the Jacobian of
the per-location standardization.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .geometry import apply_response_stats, destandardize_responses
from .inference import FittedMap
from . import priors

__all__ = [
    "PredictiveParams",
    "predictive_params",
    "t_logpdf",
    "t_sample",
    "sample_unconditional",
    "forecast",
    "cutoff_to_n_observed",
    "logscore",
    "LogScoreResult",
]

_V_CLAMP = -1e-9


@dataclass(frozen=True)
class PredictiveParams:
    """Location-scale Student-t parameters (scalars or aligned arrays)."""

    nu: float
    mu: np.ndarray
    scale2: np.ndarray


def predictive_params(i, y_star_neighbors, fm: FittedMap) -> PredictiveParams:
    """Predictive t parameters at position ``i`` given neighbor values.

    Parameters
    ----------
    i : int
        Ordering position (0-based).
    y_star_neighbors : ndarray, shape (c,) or (R, c)
        Values at the conditioning set, standardized scale, ordered as the
        stored neighbor list (ascending distance).
    fm : FittedMap

    Returns
    -------
    PredictiveParams with mu/scale2 scalar or shape (R,).
    """
    scalar = np.ndim(y_star_neighbors) == 1
    B = np.atleast_2d(np.asarray(y_star_neighbors, dtype=float))
    prior = fm.prior_for(i)
    if B.shape[1] != prior.q2.shape[0]:
        raise ValueError(
            f"expected {prior.q2.shape[0]} neighbor values at position {i}, "
            f"got {B.shape[1]}"
        )
    d2_hat = fm.beta_t[i] / fm.alpha_t
    nu = 2.0 * fm.alpha_t
    if prior.q2.shape[0] == 0:
        mu = np.zeros(B.shape[0])
        v = np.zeros(B.shape[0])
    else:
        A = fm.neighbor_values[i]
        Kstar = priors.kernel_cross(B, A, prior)  # (R, n)
        mu = Kstar @ fm.solved[i]
        z = solve_triangular(fm.chols[i], Kstar.T, lower=True)  # (n, R)
        v = priors.kernel_diag(B, prior) - np.einsum("nr,nr->r", z, z)
        if np.any(v < _V_CLAMP):
            raise FloatingPointError(
                f"negative predictive variance at position {i}: {v.min()}"
            )
        v = np.maximum(v, 0.0)
    scale2 = d2_hat * (v + 1.0)
    if scalar:
        return PredictiveParams(nu=float(nu), mu=float(mu[0]), scale2=float(scale2[0]))
    return PredictiveParams(nu=float(nu), mu=mu, scale2=scale2)


def t_logpdf(y, p: PredictiveParams):
    """Log density of the location-scale Student t."""
    y = np.asarray(y, dtype=float)
    nu, mu, s2 = p.nu, p.mu, p.scale2
    z2 = (y - mu) ** 2 / (nu * s2)
    out = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * np.pi * s2)
        - ((nu + 1.0) / 2.0) * np.log1p(z2)
    )
    return float(out) if np.ndim(out) == 0 else out


def t_sample(p: PredictiveParams, rng: np.random.Generator):
    """Draw from the location-scale t via normal over scaled chi-square."""
    shape = np.shape(p.mu)
    z = rng.standard_normal(shape)
    w = rng.chisquare(p.nu, size=shape if shape else None)
    return p.mu + np.sqrt(p.scale2) * z / np.sqrt(w / p.nu)


def _spawn_rngs(seed, count):
    seqs = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(s) for s in seqs]


def _draw_t_variates(fm: FittedMap, rngs, positions):
    """Standard-t variates, one stream per sample, consumed in index order.

    The degrees of freedom are shared across samples (per-position), so
    each stream draws one normal and one chi-square vector.
    """
    nu = 2.0 * fm.alpha_t
    out = np.empty((len(rngs), len(positions)))
    for s, rng in enumerate(rngs):
        z = rng.standard_normal(len(positions))
        w = rng.chisquare(nu, size=len(positions))
        out[s] = z / np.sqrt(w / nu)
    return out


def _sequential_draw(fm: FittedMap, S, t_std, start=0, observed_std=None):
    """Walk positions ``start..N-1`` drawing each index given predecessors.

    ``t_std`` holds pre-drawn standard-t variates of shape (S, N - start).
    ``observed_std`` (S-broadcastable, positions < start) feeds neighbor
    lookups below ``start``.  Returns draws of shape (S, N - start) on the
    standardized scale.  Neighbor lookups never touch positions >= i.
    """
    N = fm.n_points
    vals = np.empty((S, N))
    if start > 0:
        vals[:, :start] = observed_std
    d2_hat = fm.beta_t / fm.alpha_t
    for i in range(start, N):
        nb = fm.ordering.neighbor_list(i)
        if nb.size == 0:
            mu = np.zeros(S)
            v = np.zeros(S)
        else:
            prior = fm.prior_for(i)
            B = vals[:, nb]
            Kstar = priors.kernel_cross(B, fm.neighbor_values[i], prior)
            mu = Kstar @ fm.solved[i]
            z = solve_triangular(fm.chols[i], Kstar.T, lower=True)
            v = priors.kernel_diag(B, prior) - np.einsum("nr,nr->r", z, z)
            v = np.maximum(v, 0.0)
        scale = np.sqrt(d2_hat[i] * (v + 1.0))
        vals[:, i] = mu + scale * t_std[:, i - start]
    return vals[:, start:]


def sample_unconditional(fm: FittedMap, n_samples, seed):
    """Generate unconditional fields from the fitted transport map.

    Returns
    -------
    ndarray, shape (n_samples, N)
        De-standardized samples, columns in original index order.
    """
    rngs = _spawn_rngs(seed, n_samples)
    t_std = _draw_t_variates(fm, rngs, np.arange(fm.n_points))
    draws_pos = _sequential_draw(fm, n_samples, t_std)
    inv = np.argsort(fm.ordering.perm)  # original index -> position
    return destandardize_responses(draws_pos[:, inv], fm.response_stats)


def cutoff_to_n_observed(fm: FittedMap, t0):
    """Number of ordering positions with raw time <= t0 (time ordering).

    Any real cutoff lands on a frame boundary because frames are whole
    time values; the count is validated against the ordered time sequence.
    """
    times_pos = fm.times_raw[fm.ordering.perm]
    n0 = int(np.sum(fm.times_raw <= t0))
    _check_frame_boundary(times_pos, n0)
    return n0


def _check_frame_boundary(times_pos, n0):
    if n0 < 0 or n0 > times_pos.size:
        raise ValueError("cutoff count outside [0, N]")
    if 0 < n0 < times_pos.size and times_pos[n0 - 1] == times_pos[n0]:
        raise ValueError(
            "cutoff does not align with a time-frame boundary: "
            f"positions {n0 - 1} and {n0} share time {times_pos[n0]}"
        )


def forecast(fm: FittedMap, observed, n_samples, seed, n_observed=None, cutoff=None):
    """Sample future positions of a time-ordered map given a trajectory prefix.

    Parameters
    ----------
    fm : FittedMap
        Must be fitted under the time ordering.
    observed : ndarray, shape (N,) or at least covering the observed columns
        Raw-scale values in *original index order*; only the entries of
        observed positions are read.
    n_samples : int
    seed : int
    n_observed, cutoff : int or float
        Give either the number of observed leading positions N0 (must lie
        on a time-frame boundary) or a raw-time cutoff t0 (always aligned).

    Returns
    -------
    (samples, orig_indices) : (n_samples, N - N0) ndarray, raw scale, and
        the original indices of the forecast columns (ascending).
    """
    if fm.ordering.kind != "time":
        raise ValueError(
            "forecasting requires a time-ordered map; this map was fitted "
            f"under {fm.ordering.kind!r} ordering"
        )
    if (n_observed is None) == (cutoff is None):
        raise ValueError("give exactly one of n_observed or cutoff")
    if cutoff is not None:
        n0 = cutoff_to_n_observed(fm, cutoff)
    else:
        n0 = int(n_observed)
        _check_frame_boundary(fm.times_raw[fm.ordering.perm], n0)
    N = fm.n_points
    if n0 == N:
        return np.empty((n_samples, 0)), np.empty(0, dtype=np.int64)

    observed = np.asarray(observed, dtype=float)
    obs_orig = fm.ordering.perm[:n0]
    obs_std = (
        observed[obs_orig] - fm.response_stats.mean[obs_orig]
    ) / fm.response_stats.sd[obs_orig]

    rngs = _spawn_rngs(seed, n_samples)
    t_std = _draw_t_variates(fm, rngs, np.arange(n0, N))[:, :]
    draws_pos = _sequential_draw(
        fm, n_samples, t_std, start=n0, observed_std=obs_std[None, :]
    )
    fut_orig = fm.ordering.perm[n0:]
    order = np.argsort(fut_orig)
    cols = fut_orig[order]
    raw = draws_pos[:, order] * fm.response_stats.sd[cols] + fm.response_stats.mean[cols]
    return raw, cols


@dataclass(frozen=True)
class LogScoreResult:
    """Average and per-replicate negative log predictive density."""

    average: float
    per_replicate: np.ndarray


def logscore(fm: FittedMap, Y_test, standardized=False) -> LogScoreResult:
    """Negative mean log predictive density of held-out replicates.

    Each test replicate is scored through the product of per-index
    predictive t densities, conditioning on the replicate's *true* values
    at each conditioning set.  The per-location standardization Jacobian
    sum(log sd_i) is added so scores refer to the raw data scale (omitted
    when ``standardized=True``, where inputs are already standardized and
    in position order).

    Parameters
    ----------
    Y_test : ndarray, shape (R, N)
        Held-out replicates; raw scale and original index order unless
        ``standardized`` is set.
    """
    Y_test = np.atleast_2d(np.asarray(Y_test, dtype=float))
    if Y_test.shape[1] != fm.n_points:
        raise ValueError("test columns do not match the fitted map")
    if standardized:
        Y_pos = Y_test
        jacobian = 0.0
    else:
        Y_std = apply_response_stats(Y_test, fm.response_stats)
        Y_pos = Y_std[:, fm.ordering.perm]
        jacobian = float(np.log(fm.response_stats.sd).sum())
    R = Y_pos.shape[0]
    total = np.zeros(R)
    for i in range(fm.n_points):
        nb = fm.ordering.neighbor_list(i)
        p = predictive_params(i, Y_pos[:, nb], fm)
        total += t_logpdf(Y_pos[:, i], p)
    per_rep = -total + jacobian
    return LogScoreResult(average=float(per_rep.mean()), per_replicate=per_rep)
