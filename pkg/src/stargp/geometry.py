"""Coordinate and response preprocessing for space-time fields.

Inputs live on a grid of N space-time coordinates x_i = (s_i, t_i) with
d spatial dimensions and one time dimension (time is always the last
column).  All downstream geometry (ordering, neighbor selection) works on
standardized coordinates divided by spatial/temporal length scales, so the
relevant metric between two points is

    r_ij^2 = ||s_i - s_j||^2 / lambda_s^2 + |t_i - t_j|^2 / lambda_t^2.

Responses are standardized per location across replicates; the stored
statistics are reused for test data and to de-standardize generated
samples.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScalingParams",
    "CoordinateStats",
    "ResponseStats",
    "lonlat_to_cartesian",
    "standardize_coords",
    "apply_coord_stats",
    "scale_coords",
    "scaled_distance",
    "standardize_responses",
    "destandardize_responses",
    "check_no_duplicate_rows",
]


@dataclass(frozen=True)
class ScalingParams:
    """Spatial and temporal length scales defining the space-time metric.

    ``eta = lambda_s**2 / lambda_t**2`` controls the relative weighting of
    time versus space; it is derived, never set independently.
    """

    lambda_s: float
    lambda_t: float

    def __post_init__(self):
        if not (np.isfinite(self.lambda_s) and self.lambda_s > 0):
            raise ValueError(f"lambda_s must be positive, got {self.lambda_s}")
        if not (np.isfinite(self.lambda_t) and self.lambda_t > 0):
            raise ValueError(f"lambda_t must be positive, got {self.lambda_t}")

    @property
    def eta(self) -> float:
        return self.lambda_s**2 / self.lambda_t**2


@dataclass(frozen=True)
class CoordinateStats:
    """Per-column affine standardization of a coordinate matrix."""

    mean: np.ndarray
    sd: np.ndarray
    # False when the time column is constant; the temporal scale is then
    # unidentifiable and length-scale estimation must refuse to run.
    time_scale_identifiable: bool = True


@dataclass(frozen=True)
class ResponseStats:
    """Per-location mean/sd used to standardize ensemble responses."""

    mean: np.ndarray
    sd: np.ndarray
    constant_locations: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )


def lonlat_to_cartesian(lon, lat):
    """Convert geographic longitude/latitude (degrees) to unit-sphere x, y, z.

    Longitudes are reduced mod 360 before conversion; latitudes must lie in
    [-90, 90].  The resulting 3D Cartesian coordinates avoid dateline and
    pole discontinuities, and chord (Euclidean) distance between them is a
    monotone function of central angle, so nearest-neighbor ranks are
    preserved.

    Parameters
    ----------
    lon, lat : float or array
        Geographic coordinates in degrees.

    Returns
    -------
    (x, y, z) : floats or arrays on the unit sphere.
    """
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
        raise ValueError("lon/lat must be finite")
    if np.any(lat < -90.0) or np.any(lat > 90.0):
        raise ValueError("latitude outside [-90, 90]")
    lon_rad = np.deg2rad(np.mod(lon, 360.0))
    lat_rad = np.deg2rad(lat)
    x = np.cos(lat_rad) * np.cos(lon_rad)
    y = np.cos(lat_rad) * np.sin(lon_rad)
    z = np.sin(lat_rad)
    if x.ndim == 0:
        return float(x), float(y), float(z)
    return x, y, z


def standardize_coords(X):
    """Standardize each coordinate column to zero mean and unit variance.

    Uses the population standard deviation (divide by N).  A zero-variance
    spatial column is a degenerate dimension and raises; a zero-variance
    time column is tolerated (single time frame) but flagged so that the
    temporal length scale is never estimated from it.

    Parameters
    ----------
    X : ndarray, shape (N, d+1)
        Raw coordinates, time in the last column.

    Returns
    -------
    X_std : ndarray, shape (N, d+1)
    stats : CoordinateStats
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("X must be (N, d+1) with d >= 1")
    if X.shape[0] < 2:
        raise ValueError("need at least two coordinates")
    if not np.all(np.isfinite(X)):
        raise ValueError("coordinates must be finite")

    mean = X.mean(axis=0)
    sd = X.std(axis=0)  # population convention
    time_ok = sd[-1] > 0.0
    if np.any(sd[:-1] == 0.0):
        bad = np.nonzero(sd[:-1] == 0.0)[0]
        raise ValueError(f"zero-variance spatial column(s) {bad.tolist()}")
    sd_safe = sd.copy()
    if not time_ok:
        sd_safe[-1] = 1.0
    X_std = (X - mean) / sd_safe
    check_no_duplicate_rows(X_std)
    return X_std, CoordinateStats(mean=mean, sd=sd_safe, time_scale_identifiable=time_ok)


def apply_coord_stats(X, stats: CoordinateStats):
    """Standardize new coordinates with previously stored statistics."""
    X = np.asarray(X, dtype=float)
    return (X - stats.mean) / stats.sd


def scale_coords(X_std, scaling: ScalingParams):
    """Divide spatial columns by lambda_s and the time column by lambda_t.

    Euclidean distance on the result equals the scaled space-time metric.
    """
    X_std = np.asarray(X_std, dtype=float)
    out = np.empty_like(X_std)
    out[:, :-1] = X_std[:, :-1] / scaling.lambda_s
    out[:, -1] = X_std[:, -1] / scaling.lambda_t
    return out


def scaled_distance(xi, xj, scaling: ScalingParams):
    """Scaled space-time distance between coordinate rows.

    Parameters
    ----------
    xi, xj : ndarray, shape (..., d+1)
        Standardized (unscaled) coordinates, time last.
    scaling : ScalingParams

    Returns
    -------
    r : float or ndarray
        sqrt(||s_i - s_j||^2 / lambda_s^2 + |t_i - t_j|^2 / lambda_t^2)
    """
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape[-1] != xj.shape[-1]:
        raise ValueError("dimension mismatch")
    ds2 = np.sum((xi[..., :-1] - xj[..., :-1]) ** 2, axis=-1)
    dt2 = (xi[..., -1] - xj[..., -1]) ** 2
    r = np.sqrt(ds2 / scaling.lambda_s**2 + dt2 / scaling.lambda_t**2)
    return float(r) if r.ndim == 0 else r


def standardize_responses(Y):
    """Standard-scale responses at each location across replicates.

    Parameters
    ----------
    Y : ndarray, shape (n, N)
        Rows are replicates, columns are location-time indices.

    Returns
    -------
    Y_std : ndarray, shape (n, N)
    stats : ResponseStats

    Notes
    -----
    Population standard deviation.  A location with zero variance across
    replicates (e.g. masked land/sea points) gets sd = 1 so standardization
    stays invertible; affected indices are reported in a warning and in
    ``stats.constant_locations``.
    """
    Y = np.ascontiguousarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ValueError("Y must be (n, N) with n >= 2 replicates")
    if not np.all(np.isfinite(Y)):
        raise ValueError("responses must be finite")
    mean = Y.mean(axis=0)
    sd = Y.std(axis=0)
    constant = np.nonzero(sd == 0.0)[0]
    if constant.size:
        warnings.warn(
            f"{constant.size} location(s) have zero variance across replicates; "
            f"using sd=1 there (indices {constant[:10].tolist()}"
            f"{'...' if constant.size > 10 else ''})",
            RuntimeWarning,
            stacklevel=2,
        )
        sd = sd.copy()
        sd[constant] = 1.0
    Y_std = (Y - mean) / sd
    return Y_std, ResponseStats(mean=mean, sd=sd, constant_locations=constant)


def apply_response_stats(Y, stats: ResponseStats):
    """Standardize new responses (test replicates) with stored statistics."""
    return (np.asarray(Y, dtype=float) - stats.mean) / stats.sd


def destandardize_responses(Y_std, stats: ResponseStats):
    """Invert :func:`standardize_responses` using the stored statistics."""
    return np.asarray(Y_std, dtype=float) * stats.sd + stats.mean


def check_no_duplicate_rows(X):
    """Reject duplicate coordinate rows.

    Duplicates make the nearest-predecessor distance of the later copy
    exactly zero, which the prior-variance parameterization cannot absorb.
    """
    X = np.asarray(X)
    _, counts = np.unique(X, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise ValueError("duplicate coordinate rows after scaling")
