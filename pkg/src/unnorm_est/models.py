"""Model interfaces and the truncated Gaussian family.

Defines the extended parameter (theta, nu), the un-normalised model
interface, its exponential-family specialization, and the truncated
multivariate Gaussian model with its natural-parameter bijection.
All densities are handled in log space end to end: importance ratios
h_theta / h_psi overflow in linear space long before they stop being
informative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr
from scipy.stats import norm

Array = np.ndarray

# ---------------------------------------------------------------------------
# Extended parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExtendedParam:
    """Extended parameter xi = (theta, nu).

    theta is the model's natural parameter, nu a scalar log-normalising
    offset. A fitted maximum-likelihood solution on a tractable model
    satisfies nu = log(Z(psi) / Z(theta)) with psi the proposal parameter.
    """

    theta: Array
    nu: float

    def __post_init__(self) -> None:
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a non-empty vector")
        if not np.all(np.isfinite(theta)) or not np.isfinite(self.nu):
            raise ValueError("extended parameter entries must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def dim(self) -> int:
        return self.theta.size

    def as_vector(self) -> Array:
        """Flatten to the (d+1,) vector (theta, nu) used by the optimizer."""
        return np.append(self.theta, self.nu)

    @classmethod
    def from_vector(cls, vec: Array) -> "ExtendedParam":
        vec = np.asarray(vec, dtype=float)
        return cls(theta=vec[:-1], nu=float(vec[-1]))


# ---------------------------------------------------------------------------
# Model interfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpFamilySpec:
    """Exponential-family specialization: log h_theta(x) = theta @ S(x).

    suff_stat maps points of shape (n, k) to statistics of shape (n, d).
    The induced gradient in theta is S(x), independent of theta, and the
    theta-Hessian vanishes identically.
    """

    suff_stat: Callable[[Array], Array]
    base_domain: str = "unspecified"


@dataclass(frozen=True)
class ModelSpec:
    """Un-normalised model: computable kernel h_theta, intractable Z(theta).

    Evaluators are vectorized over points: log_h(theta, pts) returns (n,),
    grad_log_h returns (n, d), hess_log_h returns (n, d, d). log_Z and its
    derivatives are present only for oracle models where the normalising
    constant has a closed form; production models leave them as None.
    domain_check tests membership of theta in the admissible set.
    """

    dim: int
    log_h: Callable[[Array, Array], Array]
    grad_log_h: Callable[[Array, Array], Array]
    hess_log_h: Callable[[Array, Array], Array]
    domain_check: Callable[[Array], bool]
    log_Z: Optional[Callable[[Array], float]] = None
    grad_log_Z: Optional[Callable[[Array], Array]] = None
    hess_log_Z: Optional[Callable[[Array], Array]] = None
    exp_family: Optional[ExpFamilySpec] = None
    sample_dim: int = 1


def model_from_exp_family(
    family: ExpFamilySpec,
    dim: int,
    domain_check: Callable[[Array], bool],
    sample_dim: int = 1,
    log_Z: Optional[Callable[[Array], float]] = None,
    grad_log_Z: Optional[Callable[[Array], Array]] = None,
    hess_log_Z: Optional[Callable[[Array], Array]] = None,
) -> ModelSpec:
    """Build a ModelSpec from a sufficient statistic."""

    def log_h(theta: Array, pts: Array) -> Array:
        return family.suff_stat(pts) @ theta

    def grad_log_h(theta: Array, pts: Array) -> Array:
        return family.suff_stat(pts)

    def hess_log_h(theta: Array, pts: Array) -> Array:
        n = np.atleast_2d(pts).shape[0]
        return np.zeros((n, dim, dim))

    return ModelSpec(
        dim=dim,
        log_h=log_h,
        grad_log_h=grad_log_h,
        hess_log_h=hess_log_h,
        domain_check=domain_check,
        log_Z=log_Z,
        grad_log_Z=grad_log_Z,
        hess_log_Z=hess_log_Z,
        exp_family=family,
        sample_dim=sample_dim,
    )


# ---------------------------------------------------------------------------
# Truncated multivariate Gaussian on the positive orthant
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TruncGaussParams:
    """Moment parameters (mu, sigma) of a Gaussian truncated to (0, inf)^p."""

    mu: Array
    sigma: Array

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise ValueError("sigma must be square and match mu's length")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ValueError("sigma must be symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as err:
            raise ValueError("sigma must be symmetric positive definite") from err
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.mu.size


def natural_dim(p: int) -> int:
    """Length q = p + p(p+1)/2 of the natural parameter for dimension p."""
    return p + p * (p + 1) // 2


def _triu_rows_cols(p: int) -> tuple[Array, Array]:
    # row-major upper triangle: (0,0), (0,1), ..., (0,p-1), (1,1), ...
    return np.triu_indices(p)


def flatten_triu(mat: Array) -> Array:
    """Row-major upper-triangle flattening of a symmetric matrix."""
    rows, cols = _triu_rows_cols(mat.shape[0])
    return mat[rows, cols]


def unflatten_sym(vec: Array, p: int) -> Array:
    """Inverse of flatten_triu: rebuild the full symmetric matrix."""
    rows, cols = _triu_rows_cols(p)
    mat = np.zeros((p, p))
    mat[rows, cols] = vec
    mat[cols, rows] = vec
    return mat


def natural_from_moment(params: TruncGaussParams) -> Array:
    """Map (mu, sigma) to theta = (sigma^-1 mu, triu(-1/2 sigma^-1)).

    The upper triangle is flattened row-major. The companion sufficient
    statistic doubles the off-diagonal entries of triu(x x^T), so that
    theta @ S(x) = mu' sigma^-1 x - 1/2 x' sigma^-1 x exactly, with no
    separate weight vector.
    """
    prec = np.linalg.inv(params.sigma)
    prec = 0.5 * (prec + prec.T)
    return np.concatenate([prec @ params.mu, flatten_triu(-0.5 * prec)])


def moment_from_natural(theta: Array, p: int) -> Optional[TruncGaussParams]:
    """Invert natural_from_moment; None when theta falls outside the domain.

    Membership in the domain means the reconstructed precision matrix
    -2 * (sigma block) is positive definite, tested by Cholesky with zero
    tolerance. A failed test signals that the constrained estimate does
    not exist; it is reported, never repaired.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size != natural_dim(p):
        raise ValueError(f"theta must have length {natural_dim(p)} for p={p}")
    prec = -2.0 * unflatten_sym(theta[p:], p)
    try:
        np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        return None
    sigma = np.linalg.inv(prec)
    sigma = 0.5 * (sigma + sigma.T)
    mu = sigma @ theta[:p]
    return TruncGaussParams(mu=mu, sigma=sigma)


def natural_in_domain(theta: Array, p: int) -> bool:
    """Domain membership: the implied precision matrix is positive definite."""
    theta = np.asarray(theta, dtype=float)
    if theta.size != natural_dim(p) or not np.all(np.isfinite(theta)):
        return False
    return moment_from_natural(theta, p) is not None


def trunc_gauss_suff_stat(p: int) -> Callable[[Array], Array]:
    """S(x) = (x, triu(x x^T)) with doubled off-diagonal entries."""
    rows, cols = _triu_rows_cols(p)
    scale = np.where(rows == cols, 1.0, 2.0)

    def suff(pts: Array) -> Array:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        quad = pts[:, rows] * pts[:, cols] * scale
        return np.concatenate([pts, quad], axis=1)

    return suff


def trunc_gauss_model(p: int) -> ModelSpec:
    """Truncated-Gaussian exponential family on (0, inf)^p.

    The normalising constant is intractable for general p and is not
    attached; use log_partition for the low-dimensional helpers.
    """
    family = ExpFamilySpec(
        suff_stat=trunc_gauss_suff_stat(p),
        base_domain=f"(0, inf)^{p}",
    )
    return model_from_exp_family(
        family,
        dim=natural_dim(p),
        domain_check=lambda theta: natural_in_domain(theta, p),
        sample_dim=p,
    )


# ---------------------------------------------------------------------------
# Normalising constants for low-dimensional truncated Gaussians
# ---------------------------------------------------------------------------


def positive_orthant_prob(mu: Array, sigma: Array) -> float:
    """P(W > 0 coordinatewise) for W ~ N(mu, sigma), p <= 3.

    p=1 is a normal CDF; p=2 integrates the conditional CDF over the first
    coordinate; p=3 integrates the conditional CDF of the third coordinate
    over the first two. Deterministic quadrature, no sampling involved.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    p = mu.size
    if p == 1:
        return float(ndtr(mu[0] / np.sqrt(sigma[0, 0])))
    if p == 2:
        s1 = np.sqrt(sigma[0, 0])
        slope = sigma[0, 1] / sigma[0, 0]
        cond_sd = np.sqrt(sigma[1, 1] - sigma[0, 1] ** 2 / sigma[0, 0])

        def f(w1: float) -> float:
            cond_mean = mu[1] + slope * (w1 - mu[0])
            return norm.pdf(w1, mu[0], s1) * ndtr(cond_mean / cond_sd)

        val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-12, limit=200)
        return float(val)
    if p == 3:
        s11 = sigma[:2, :2]
        s11_inv = np.linalg.inv(s11)
        beta = s11_inv @ sigma[:2, 2]
        cond_var = sigma[2, 2] - sigma[:2, 2] @ beta
        cond_sd = np.sqrt(cond_var)
        det11 = np.linalg.det(s11)
        norm2 = 1.0 / (2.0 * np.pi * np.sqrt(det11))

        def f2(w2: float, w1: float) -> float:
            d = np.array([w1 - mu[0], w2 - mu[1]])
            quad_form = d @ s11_inv @ d
            pdf2 = norm2 * np.exp(-0.5 * quad_form)
            cond_mean = mu[2] + beta @ d
            return pdf2 * ndtr(cond_mean / cond_sd)

        val, _ = integrate.dblquad(
            f2, 0.0, np.inf, 0.0, np.inf, epsabs=1e-10, epsrel=1e-10
        )
        return float(val)
    raise NotImplementedError("positive_orthant_prob implemented for p <= 3")


def log_partition(params: TruncGaussParams) -> float:
    """log Z for the truncated Gaussian written in natural coordinates.

    Z(theta) = integral over (0, inf)^p of exp(theta @ S(x)) dx
             = exp(mu' sigma^-1 mu / 2) * (2 pi)^{p/2} |sigma|^{1/2}
               * P(W > 0), W ~ N(mu, sigma).
    """
    p = params.p
    chol = np.linalg.cholesky(params.sigma)
    half_logdet = float(np.sum(np.log(np.diag(chol))))
    w = np.linalg.solve(chol, params.mu)
    quad_term = 0.5 * float(w @ w)
    orthant = positive_orthant_prob(params.mu, params.sigma)
    return quad_term + 0.5 * p * np.log(2.0 * np.pi) + half_logdet + np.log(orthant)


def nu_star(truth: TruncGaussParams, proposal: TruncGaussParams) -> float:
    """Population offset nu* = log(Z(psi) / Z(theta*)) for tractable p."""
    return log_partition(proposal) - log_partition(truth)


def half_normal_proposal_params(lam: float, p: int) -> TruncGaussParams:
    """Proposal N(0, lambda I) truncated to the positive orthant."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return TruncGaussParams(mu=np.zeros(p), sigma=lam * np.eye(p))


# ---------------------------------------------------------------------------
# 1-D oracle model with closed-form normalising constant
# ---------------------------------------------------------------------------


def natural_1d(mu: float, sigma2: float) -> Array:
    """Natural parameter (mu/sigma^2, -1/(2 sigma^2)) of the 1-D family."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return np.array([mu / sigma2, -0.5 / sigma2])


def _moment_coords(theta: Array) -> tuple[float, float]:
    if theta[1] >= 0:
        raise ValueError("theta[1] must be negative for an integrable kernel")
    sigma2 = -0.5 / theta[1]
    return float(theta[0] * sigma2), float(sigma2)


def truncated_moments_1d(theta: Array, upto: int) -> list[float]:
    """Raw moments m_0..m_upto of the 0-truncated normal with natural theta.

    Recursion from integration by parts on (0, inf):
    m_1 = mu + sigma^2 f(0), m_k = mu m_{k-1} + (k-1) sigma^2 m_{k-2},
    f(0) the truncated density at the boundary.
    """
    mu, sigma2 = _moment_coords(np.asarray(theta, dtype=float))
    sd = np.sqrt(sigma2)
    z = mu / sd
    # log f(0) avoids underflow of Phi(z) deep in the left tail
    log_f0 = norm.logpdf(z) - np.log(sd) - log_ndtr(z)
    moments = [1.0, mu + sigma2 * float(np.exp(log_f0))]
    for k in range(2, upto + 1):
        moments.append(mu * moments[k - 1] + (k - 1) * sigma2 * moments[k - 2])
    return moments[: upto + 1]


def oracle_1d_log_z(theta: Array) -> float:
    """Closed-form log Z(theta) for the 1-D truncated family.

    In natural coordinates, Z(theta) = integral_0^inf exp(theta1 x +
    theta2 x^2) dx = exp(mu^2/(2 sigma^2)) sqrt(2 pi sigma^2) Phi(mu/sigma).
    """
    mu, sigma2 = _moment_coords(np.asarray(theta, dtype=float))
    sd = np.sqrt(sigma2)
    return (
        mu * mu / (2.0 * sigma2)
        + 0.5 * np.log(2.0 * np.pi * sigma2)
        + float(log_ndtr(mu / sd))
    )


def oracle_1d_model(mu: float, sigma2: float) -> ModelSpec:
    """Tractable 1-D truncated-normal model used as a test oracle.

    Carries log_Z and its theta-derivatives in closed form (the gradient
    is the truncated mean vector (m1, m2), the Hessian the covariance of
    (X, X^2)), which enables exact maximum likelihood, the exact
    population offset nu*, and exact limit computations. The (mu, sigma2)
    arguments only validate the construction; the returned model is the
    full natural-parameter family.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")

    def grad_log_z(theta: Array) -> Array:
        m = truncated_moments_1d(theta, 2)
        return np.array([m[1], m[2]])

    def hess_log_z(theta: Array) -> Array:
        m = truncated_moments_1d(theta, 4)
        return np.array(
            [
                [m[2] - m[1] ** 2, m[3] - m[1] * m[2]],
                [m[3] - m[1] * m[2], m[4] - m[2] ** 2],
            ]
        )

    family = ExpFamilySpec(
        suff_stat=trunc_gauss_suff_stat(1),
        base_domain="(0, inf)",
    )
    return model_from_exp_family(
        family,
        dim=2,
        domain_check=lambda theta: bool(
            np.all(np.isfinite(theta)) and theta[1] < 0
        ),
        sample_dim=1,
        log_Z=oracle_1d_log_z,
        grad_log_Z=grad_log_z,
        hess_log_Z=hess_log_z,
    )
