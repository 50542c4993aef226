"""First-stage estimation of the spatial/temporal length scales.

The ordering and conditioning sets depend on (lambda_s, lambda_t) through
the scaled metric, and changing them moves points between conditioning
sets — a discrete, non-differentiable change.  The scales are therefore
estimated separately, before the transport map is trained: an isotropic
Matern-1.5 GP (plus amplitude and nugget) is fit by gradient descent on
the negative log-likelihood of small random data subsets, repeated across
subsets and averaged.  All spatial dimensions share a single lambda_s.

The fitted GP is never used for prediction; only the scales survive.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .geometry import ScalingParams

__all__ = [
    "MaternGPParams",
    "ScaleFitConfig",
    "ScaleEstimate",
    "matern05_corr",
    "matern15_corr",
    "matern15",
    "gp_nll",
    "gp_nll_grad",
    "fit_scales_once",
    "estimate_scales",
]

_SQRT3 = np.sqrt(3.0)


def matern05_corr(r):
    """Matern correlation with smoothness 0.5 (exponential): exp(-r)."""
    return np.exp(-np.asarray(r, dtype=float))


def matern15_corr(r):
    """Matern correlation with smoothness 1.5: (1 + sqrt(3) r) exp(-sqrt(3) r)."""
    r = np.asarray(r, dtype=float)
    return (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)


def matern15(r, amplitude=1.0):
    """Matern-1.5 covariance ``amplitude * (1 + sqrt(3) r) exp(-sqrt(3) r)``."""
    return amplitude * matern15_corr(r)


@dataclass(frozen=True)
class MaternGPParams:
    """Kernel parameters of the first-stage GP; all strictly positive.

    Amplitude (marginal variance) and nugget (noise variance) are plumbing
    that stabilizes the fit; only the length scales are consumed
    downstream.
    """

    lambda_s: float
    lambda_t: float
    amplitude: float
    nugget: float

    def __post_init__(self):
        vals = (self.lambda_s, self.lambda_t, self.amplitude, self.nugget)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ValueError(f"parameters must be positive and finite: {vals}")

    def log_vector(self):
        return np.log(
            [self.lambda_s, self.lambda_t, self.amplitude, self.nugget]
        )

    @staticmethod
    def from_log_vector(v):
        return MaternGPParams(*np.exp(v))


@dataclass
class ScaleFitConfig:
    """Subset sizes and optimizer settings for one scale fit.

    Defaults follow a 5,000-data-point budget: 1,000 locations shared
    across 5 replicates (the replicates share one Gram matrix).
    """

    N_samp: int = 1000
    n_samp: int = 5
    n_epoch: int = 200
    seed: int = 0
    learning_rate: float = 0.1
    rel_tol: float = 1e-7


def _sq_dist_parts(X):
    """Spatial and temporal squared-distance matrices of (N, d+1) coords."""
    S = X[:, :-1]
    t = X[:, -1]
    sq = (S**2).sum(axis=1)
    a = sq[:, None] + sq[None, :] - 2.0 * (S @ S.T)
    np.maximum(a, 0.0, out=a)
    b = (t[:, None] - t[None, :]) ** 2
    return a, b


def _chol_with_jitter(K, scale):
    """Cholesky with multiplicative jitter escalation 1e-8 -> 1e-4."""
    jitter = 0.0
    while True:
        try:
            return cho_factor(K + jitter * scale * np.eye(K.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter = 1e-8 if jitter == 0.0 else jitter * 100.0
            if jitter > 1e-4:
                raise np.linalg.LinAlgError(
                    "covariance not positive definite even with jitter 1e-4"
                )


def gp_nll(X_sub, y_sub, params: MaternGPParams):
    """Negative log-likelihood of responses under the Matern-1.5 GP.

    Parameters
    ----------
    X_sub : ndarray, shape (p, d+1)
        Standardized coordinates of the subset.
    y_sub : ndarray, shape (p,) or (R, p)
        One or more replicates; replicates share the Gram matrix and
        contribute additively.
    params : MaternGPParams

    Returns
    -------
    nll : float
        0.5 * sum_r y_r' K^-1 y_r + (R/2) log|K| + (R p / 2) log(2 pi).
    """
    nll, _ = _nll_impl(X_sub, y_sub, params, want_grad=False)
    return nll


def gp_nll_grad(X_sub, y_sub, params: MaternGPParams):
    """NLL and its gradient with respect to the log parameters.

    Gradient order: (log lambda_s, log lambda_t, log amplitude,
    log nugget), via the standard trace identity
    d nll = -0.5 sum_r a_r' dK a_r + (R/2) tr(K^-1 dK), a_r = K^-1 y_r.
    """
    return _nll_impl(X_sub, y_sub, params, want_grad=True)


def _nll_impl(X_sub, y_sub, params, want_grad):
    X = np.ascontiguousarray(X_sub, dtype=float)
    Y = np.atleast_2d(np.asarray(y_sub, dtype=float))
    p = X.shape[0]
    if Y.shape[1] != p:
        raise ValueError("y_sub length does not match X_sub")
    R = Y.shape[0]

    a, b = _sq_dist_parts(X)
    r2 = a / params.lambda_s**2 + b / params.lambda_t**2
    r = np.sqrt(np.maximum(r2, 0.0))
    E = np.exp(-_SQRT3 * r)
    K = params.amplitude * (1.0 + _SQRT3 * r) * E + params.nugget * np.eye(p)

    cf = _chol_with_jitter(K, params.amplitude + params.nugget)
    logdet = 2.0 * np.log(np.diag(cf[0])).sum()
    alpha = cho_solve(cf, Y.T)  # (p, R)
    quad = float(np.sum(Y.T * alpha))
    nll = 0.5 * quad + 0.5 * R * logdet + 0.5 * R * p * np.log(2.0 * np.pi)
    if not want_grad:
        return nll, None

    Kinv = cho_solve(cf, np.eye(p))
    dKs = [
        3.0 * params.amplitude * E * (a / params.lambda_s**2),
        3.0 * params.amplitude * E * (b / params.lambda_t**2),
        params.amplitude * (1.0 + _SQRT3 * r) * E,
        params.nugget * np.eye(p),
    ]
    grad = np.empty(4)
    for k, dK in enumerate(dKs):
        tr = float(np.sum(Kinv * dK))
        quad_d = float(np.einsum("pr,pq,qr->", alpha, dK, alpha))
        grad[k] = -0.5 * quad_d + 0.5 * R * tr
    return nll, grad


def _subsample(X, Y, config, rng):
    N = X.shape[0]
    n = Y.shape[0]
    N_samp = min(config.N_samp, N)
    n_samp = min(config.n_samp, n)
    S_N = np.sort(rng.choice(N, size=N_samp, replace=False))
    S_n = np.sort(rng.choice(n, size=n_samp, replace=False))
    return X[S_N], Y[np.ix_(S_n, S_N)]


def fit_scales_once(X, Y, config: ScaleFitConfig):
    """One scale fit on a random subset (length scales of the full data).

    Parameters
    ----------
    X : ndarray, shape (N, d+1)
        Standardized coordinates (scaled from the originals each epoch, so
        the optimization state never compounds into the inputs).
    Y : ndarray, shape (n, N)
        Standardized responses.
    config : ScaleFitConfig

    Returns
    -------
    (lambda_s, lambda_t) : floats

    Raises
    ------
    ValueError
        If the time column is constant (temporal scale unidentifiable).
    RuntimeError
        If the optimizer diverges; the message carries the trace tail.
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X[:, -1].std() == 0.0:
        raise ValueError(
            "temporal scale unidentifiable: time column has zero variance"
        )
    rng = np.random.default_rng(config.seed)
    X_s, Y_s = _subsample(X, Y, config, rng)

    var0 = float(Y_s.var())
    if var0 <= 0.0:
        raise ValueError("subset responses are constant")
    theta = np.log([1.0, 1.0, var0, max(0.05 * var0, 1e-4)])

    # Adam on the log parameters; the step size halves on sustained
    # objective regression (with a cooldown so normal oscillation does not
    # starve the run) and on any non-finite objective
    lr = config.learning_rate
    m1 = np.zeros(4)
    m2 = np.zeros(4)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_nll = np.inf
    prev_nll = np.inf
    trace = []
    failures = 0
    cooldown = 0
    for epoch in range(1, config.n_epoch + 1):
        nll, grad = _nll_impl(X_s, Y_s, MaternGPParams.from_log_vector(theta), True)
        trace.append(nll)
        if not np.isfinite(nll):
            failures += 1
            lr *= 0.5
            if failures > 20:
                raise RuntimeError(
                    f"scale optimizer diverged; trace tail {trace[-5:]}"
                )
            continue
        if nll < best_nll:
            best_nll = nll
        elif cooldown <= 0:
            lr *= 0.5
            cooldown = 10
        cooldown -= 1
        if np.isfinite(prev_nll) and abs(prev_nll - nll) <= config.rel_tol * max(
            1.0, abs(prev_nll)
        ):
            break
        prev_nll = nll
        m1 = beta1 * m1 + (1 - beta1) * grad
        m2 = beta2 * m2 + (1 - beta2) * grad**2
        step = lr * (m1 / (1 - beta1**epoch)) / (
            np.sqrt(m2 / (1 - beta2**epoch)) + eps
        )
        theta = theta - step

    fitted = MaternGPParams.from_log_vector(theta)
    _warn_if_collapsed(X_s, fitted)
    return fitted.lambda_s, fitted.lambda_t


def _warn_if_collapsed(X_s, params):
    """Flag a collapse of both length scales toward the distance floor.

    When correlations are negligible at every observed separation (white
    noise), the likelihood is flat below the minimum pairwise distance and
    both scales drift far under it.
    """
    a, b = _sq_dist_parts(X_s)
    ds = np.sqrt(a[a > 0])
    dt = np.sqrt(b[b > 0])
    floor_s = ds.min() if ds.size else np.inf
    floor_t = dt.min() if dt.size else np.inf
    if params.lambda_s < 0.5 * floor_s and params.lambda_t < 0.5 * floor_t:
        warnings.warn(
            "length scales collapsed below the minimum pairwise distance; "
            "responses may be spatio-temporally unstructured",
            RuntimeWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class ScaleEstimate:
    """Averaged scale estimates with per-repeat diagnostics."""

    lambda_s: float
    lambda_t: float
    per_repeat: np.ndarray  # (w, 2) columns (lambda_s, lambda_t)
    se_s: float
    se_t: float
    failed_repeats: int = 0

    def scaling(self) -> ScalingParams:
        return ScalingParams(lambda_s=self.lambda_s, lambda_t=self.lambda_t)


def estimate_scales(X, Y, config: ScaleFitConfig = None, w: int = 5):
    """Average ``w`` independent scale fits on distinct random subsets.

    Each repeat draws its own subset from a child seed of ``config.seed``;
    repeats that fail are excluded with a warning, and the run errors only
    if all fail.  Standard errors across repeats are reported (they should
    be small; large values indicate unstable scale estimation).

    Returns
    -------
    ScaleEstimate
    """
    if config is None:
        config = ScaleFitConfig()
    if w < 1:
        raise ValueError("w must be >= 1")
    child_seeds = np.random.SeedSequence(config.seed).spawn(w)
    results = []
    failed = 0
    for k in range(w):
        cfg_k = ScaleFitConfig(
            N_samp=config.N_samp,
            n_samp=config.n_samp,
            n_epoch=config.n_epoch,
            seed=child_seeds[k],
            learning_rate=config.learning_rate,
            rel_tol=config.rel_tol,
        )
        try:
            results.append(fit_scales_once(X, Y, cfg_k))
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            failed += 1
            warnings.warn(
                f"scale repeat {k} failed ({exc}); excluded from the average",
                RuntimeWarning,
                stacklevel=2,
            )
    if not results:
        raise RuntimeError("all scale-estimation repeats failed")
    per_repeat = np.asarray(results)
    mean = per_repeat.mean(axis=0)
    if per_repeat.shape[0] > 1:
        se = per_repeat.std(axis=0, ddof=1) / np.sqrt(per_repeat.shape[0])
    else:
        se = np.zeros(2)
    return ScaleEstimate(
        lambda_s=float(mean[0]),
        lambda_t=float(mean[1]),
        per_repeat=per_repeat,
        se_s=float(se[0]),
        se_t=float(se[1]),
        failed_repeats=failed,
    )
