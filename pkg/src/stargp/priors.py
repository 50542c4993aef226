"""Per-index prior construction from six global hyperparameters.

Each ordered index i regresses its response on the values at its
conditioning set.  Rather than learning 3N+2 local parameters, the priors
are tied to the local geometry through the nearest-predecessor distance
l_i and a six-vector theta:

* conditional variance: d_i^2 ~ InverseGamma, with mean
  E(d_i^2) = exp(theta_d1 + exp(theta_d2) log l_i) and standard deviation
  g * E(d_i^2) for a fixed scalar g;
* linear coefficient decay: Q_i = diag(q_1^2, ..., q_c^2) with
  q_k^2 = exp(-k exp(theta_q)), neighbors sorted by ascending distance;
* nonlinear variance: sigma_i^2 = exp(theta_s1 + exp(theta_s2) log l_i),
  so nonlinearity concentrates at local scales;
* nonlinear range: gamma = exp(theta_gamma).

The regression-function kernel over neighbor-value vectors a, b is

    K_i(a, b) = E(d_i^2)^-1 (a' Q_i b + sigma_i^2 rho(d_Q(a, b) / gamma)),

with d_Q the Mahalanobis distance ||Q_i^(1/2) (a - b)|| and rho a fixed
Matern-1.5 correlation.  The Mahalanobis form keeps the correlation
argument well-defined for all inputs (a cross inner product can be
negative) and yields a valid positive-semidefinite kernel.
"""

from dataclasses import dataclass

import numpy as np

from .lengthscale import matern15_corr

__all__ = [
    "Hyperparams",
    "PriorSpec",
    "expected_d2",
    "ig_params",
    "q_diag",
    "sigma2_nonlinear",
    "gamma_range",
    "build_prior",
    "kernel_eval",
    "kernel_matrix",
    "kernel_cross",
    "kernel_diag",
    "gram",
]

RHO_FAMILY = "matern15"


@dataclass(frozen=True)
class Hyperparams:
    """Global transport-map hyperparameters (unconstrained reals).

    Positivity of derived quantities is enforced through exp transforms,
    so any finite values are admissible.
    """

    theta_d1: float
    theta_d2: float
    theta_s1: float
    theta_s2: float
    theta_q: float
    theta_gamma: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("hyperparameters must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.theta_d1,
                self.theta_d2,
                self.theta_s1,
                self.theta_s2,
                self.theta_q,
                self.theta_gamma,
            ]
        )

    @staticmethod
    def from_vector(v) -> "Hyperparams":
        v = np.asarray(v, dtype=float)
        if v.shape != (6,):
            raise ValueError("hyperparameter vector must have length 6")
        return Hyperparams(*v)


def expected_d2(l_i, theta: Hyperparams):
    """Prior mean of the conditional variance, exp(theta_d1 + exp(theta_d2) log l)."""
    l_i = np.asarray(l_i, dtype=float)
    if np.any(l_i <= 0):
        raise ValueError("l_i must be positive (duplicates are rejected upstream)")
    return np.exp(theta.theta_d1 + np.exp(theta.theta_d2) * np.log(l_i))


def ig_params(e_d2, g):
    """Inverse-Gamma (alpha, beta) with mean e_d2 and sd g * e_d2.

    Moment matching gives alpha = 2 + g^-2 (> 2, so the variance is
    finite) and beta = e_d2 * (alpha - 1).
    """
    if g <= 0:
        raise ValueError("g must be positive")
    alpha = 2.0 + g**-2
    beta = np.asarray(e_d2, dtype=float) * (alpha - 1.0)
    return alpha, beta


def q_diag(count, theta_q):
    """Diagonal of Q_i: q_k^2 = exp(-k exp(theta_q)) for k = 1..count."""
    if count < 0:
        raise ValueError("count must be >= 0")
    k = np.arange(1, count + 1, dtype=float)
    return np.exp(-k * np.exp(theta_q))


def sigma2_nonlinear(l_i, theta: Hyperparams):
    """Nonlinear-component variance, exp(theta_s1 + exp(theta_s2) log l)."""
    l_i = np.asarray(l_i, dtype=float)
    if np.any(l_i <= 0):
        raise ValueError("l_i must be positive")
    return np.exp(theta.theta_s1 + np.exp(theta.theta_s2) * np.log(l_i))


def gamma_range(theta: Hyperparams) -> float:
    """Correlation range of the nonlinear component, exp(theta_gamma)."""
    return float(np.exp(theta.theta_gamma))


@dataclass(frozen=True)
class PriorSpec:
    """Resolved prior for one index: IG parameters, Q_i diagonal, kernel pieces."""

    alpha: float
    beta: float
    q2: np.ndarray
    sigma2: float
    gamma: float
    e_d2: float

    def __post_init__(self):
        assert self.alpha > 1.0
        assert self.beta > 0.0
        assert self.sigma2 >= 0.0 and self.gamma > 0.0 and self.e_d2 > 0.0


def build_prior(l_i, count, theta: Hyperparams, g) -> PriorSpec:
    """Assemble the PriorSpec of an index from its local geometry."""
    e = float(expected_d2(l_i, theta))
    alpha, beta = ig_params(e, g)
    return PriorSpec(
        alpha=float(alpha),
        beta=float(beta),
        q2=q_diag(count, theta.theta_q),
        sigma2=float(sigma2_nonlinear(l_i, theta)),
        gamma=gamma_range(theta),
        e_d2=e,
    )


def _check_len(a, prior):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != prior.q2.shape[0]:
        raise ValueError(
            f"neighbor vector length {a.shape[-1]} != |q2| {prior.q2.shape[0]}"
        )
    return a


def kernel_eval(a, b, prior: PriorSpec, rho=matern15_corr):
    """Kernel between two neighbor-value vectors (see module docstring).

    With an empty conditioning set the regression function is identically
    zero (the first conditional is a pure marginal), so the kernel is 0.
    """
    a = _check_len(a, prior)
    b = _check_len(b, prior)
    if prior.q2.shape[0] == 0:
        val = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]))
        return float(val) if val.ndim == 0 else val
    lin = np.sum(a * prior.q2 * b, axis=-1)
    d_q = np.sqrt(np.sum(prior.q2 * (a - b) ** 2, axis=-1))
    val = (lin + prior.sigma2 * rho(d_q / prior.gamma)) / prior.e_d2
    return float(val) if np.ndim(val) == 0 else val


def kernel_matrix(A, prior: PriorSpec, rho=matern15_corr):
    """Kernel Gram block K[j, l] = kernel_eval(A[j], A[l]) for rows of A."""
    A = _check_len(np.atleast_2d(A), prior)
    if prior.q2.shape[0] == 0:
        return np.zeros((A.shape[0], A.shape[0]))
    W = A * np.sqrt(prior.q2)
    lin = W @ W.T
    sq = np.einsum("ij,ij->i", W, W)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * lin, 0.0)
    return (lin + prior.sigma2 * rho(np.sqrt(d2) / prior.gamma)) / prior.e_d2


def kernel_cross(B, A, prior: PriorSpec, rho=matern15_corr):
    """Cross kernel between query rows B (R, c) and training rows A (n, c)."""
    B = _check_len(np.atleast_2d(B), prior)
    A = _check_len(np.atleast_2d(A), prior)
    if prior.q2.shape[0] == 0:
        return np.zeros((B.shape[0], A.shape[0]))
    sq_q = np.sqrt(prior.q2)
    WB = B * sq_q
    WA = A * sq_q
    lin = WB @ WA.T
    d2 = np.maximum(
        np.einsum("ij,ij->i", WB, WB)[:, None]
        + np.einsum("ij,ij->i", WA, WA)[None, :]
        - 2.0 * lin,
        0.0,
    )
    return (lin + prior.sigma2 * rho(np.sqrt(d2) / prior.gamma)) / prior.e_d2


def kernel_diag(B, prior: PriorSpec):
    """kernel_eval(b, b) for each row b of B: (b'Q b + sigma^2) / E(d^2)."""
    B = _check_len(np.atleast_2d(B), prior)
    if prior.q2.shape[0] == 0:
        return np.zeros(B.shape[0])
    return (np.einsum("ij,j,ij->i", B, prior.q2, B) + prior.sigma2) / prior.e_d2


def gram(A, prior: PriorSpec, rho=matern15_corr):
    """Training Gram matrix G = K + I over the replicate neighbor rows of A.

    The identity ridge comes from the unit-variance regression noise after
    conditioning on d_i^2, and makes G positive definite for any valid
    prior.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if prior.q2.shape[0] == 0:
        return np.eye(n)
    return kernel_matrix(A, prior, rho) + np.eye(n)
