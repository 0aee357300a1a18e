"""Asymptotic variance calculators and the fixed-data estimator-gap limit.

Covers four deliverables:

* the limit of m times the gap between the ratio-based and the
  classification-based estimates at fixed observed data,
* sandwich variances J^-1 (Sigma + Gamma/tau) J^-1 for the
  classification ("nce") and importance ("is") estimators plus the
  maximum-likelihood baseline,
* reduced closed forms of the same variances that only need
  expectations under the truth, used to cross-validate the sandwich
  assembly, and
* the minimum-eigenvalue gap for the variance ordering between the two
  estimators.

Expectations under the truth use the rejection sampler, expectations
under the proposal use the factorized sampler; no importance
reweighting bridges the two measures except where that identity is
itself under test. Matrix uncertainty comes from a nonparametric
bootstrap over the per-point summands.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import expit

from .models import (
    ExtendedParam,
    ModelSpec,
    TruncGaussParams,
    half_normal_proposal_params,
    moment_from_natural,
    natural_from_moment,
    trunc_gauss_suff_stat,
)
from .objectives import Dataset
from .sampling import RngStream, sample_proposal_iid, sample_truth_iid

Array = np.ndarray


# ---------------------------------------------------------------------------
# Density-ratio and classification weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QRWeights:
    """Per-point density ratio Q = f_theta/f_psi and classification weight
    R = tau f_psi / (tau f_psi + f_theta), both derived from log Q so that
    extreme ratios stay finite. Pointwise, Q R = tau (1 - R).
    """

    log_q: Array
    r: Array

    @property
    def q(self) -> Array:
        return np.exp(self.log_q)


def compute_qr(
    log_h_theta: Array, log_h_psi: Array, nu_offset: float, tau: float
) -> QRWeights:
    """Build QRWeights from kernel evaluations.

    log Q = log h_theta - log h_psi + nu with nu = log(Z(psi)/Z(theta)),
    and R = expit(log tau - log Q).
    """
    log_q = np.asarray(log_h_theta, dtype=float) - np.asarray(log_h_psi, dtype=float)
    log_q = log_q + nu_offset
    r = expit(np.log(tau) - log_q)
    return QRWeights(log_q=log_q, r=r)


def projection_last_coordinate(dim: int) -> Array:
    """The matrix with a single 1 in the bottom-right corner.

    This is the value of J_Z^-1 E[grad g Z] E[grad g Z]' J_Z^-1 for any
    nonnegative weight Z, because the last coordinate of grad g is the
    constant 1; the numerical check lives in score_projection_matrix.
    """
    out = np.zeros((dim, dim))
    out[-1, -1] = 1.0
    return out


def score_projection_matrix(feats: Array, z: Array, cutoff: float = 1e-10) -> Array:
    """E[f f' z]^+ E[f z] E[f z]' E[f f' z]^+ with a spectral pseudo-inverse.

    feats holds per-point extended gradients (rows), z nonnegative
    weights. Eigenvalues below cutoff times the largest are dropped.
    """
    n = feats.shape[0]
    jz = (feats * z[:, None]).T @ feats / n
    mz = (feats * z[:, None]).sum(axis=0) / n
    vals, vecs = np.linalg.eigh(0.5 * (jz + jz.T))
    keep = vals > cutoff * vals.max()
    inv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    proj = inv @ np.outer(mz, mz) @ inv
    return 0.5 * (proj + proj.T)


# ---------------------------------------------------------------------------
# Variance reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceReport:
    """Sandwich variance J^-1 (Sigma + Gamma/tau) J^-1 and its pieces.

    For kind "nce" the three matrices are the R-weighted versions; for
    kind "mle" Gamma is exactly zero and V = J^-1 Sigma J^-1. V_se holds
    elementwise bootstrap standard errors when requested.
    """

    kind: str
    tau: float
    n_mc: int
    J: Array
    Sigma: Array
    Gamma: Array
    V: Array
    V_se: Optional[Array] = None


@dataclass(frozen=True, eq=False)
class VarianceSuite:
    """Everything the ordering and agreement studies need at one grid point.

    Sandwich and reduced forms for both estimators, the MLE baseline,
    the minimum eigenvalue of V_is - V_nce, the minimum eigenvalue of
    the Jensen-order matrix, and bootstrap stacks (B, D, D) aligned so
    that differences of any two quantities have paired resamples.
    """

    tau: float
    proposal_lambda: Optional[float]
    n_mc: int
    V_is: Array
    V_nce: Array
    V_mle: Array
    reduced_is: Array
    reduced_nce: Array
    gap: float
    jensen_min: float
    boot_V_is: Optional[Array] = None
    boot_V_nce: Optional[Array] = None
    boot_V_mle: Optional[Array] = None
    boot_reduced_is: Optional[Array] = None
    boot_reduced_nce: Optional[Array] = None
    boot_gap: Optional[Array] = None
    boot_jensen_min: Optional[Array] = None


def bootstrap_se(stack: Array) -> Array:
    """Elementwise standard error over the bootstrap axis (axis 0)."""
    return np.std(np.asarray(stack), axis=0, ddof=1)


def loewner_gap(v_is: Array, v_nce: Array) -> float:
    """Minimum eigenvalue of the symmetrized difference V_is - V_nce.

    A nonnegative value means V_is dominates V_nce in the Loewner order;
    Monte Carlo estimates sit slightly negative within their error bars.
    """
    v_is = np.asarray(v_is, dtype=float)
    v_nce = np.asarray(v_nce, dtype=float)
    if v_is.shape != v_nce.shape or v_is.ndim != 2:
        raise ValueError("matrices must share a square shape")
    diff = v_is - v_nce
    return float(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min())


# ---------------------------------------------------------------------------
# Weighted-moment engine
# ---------------------------------------------------------------------------


def _weighted_outer(feats: Array, scale: Optional[Array], counts: Optional[Array]) -> Array:
    w = None
    if scale is not None and counts is not None:
        w = scale * counts
    elif scale is not None:
        w = scale
    elif counts is not None:
        w = counts
    if w is None:
        return feats.T @ feats / feats.shape[0]
    return (feats * w[:, None]).T @ feats / feats.shape[0]


def _weighted_mean(feats: Array, scale: Optional[Array], counts: Optional[Array]) -> Array:
    w = None
    if scale is not None and counts is not None:
        w = scale * counts
    elif scale is not None:
        w = scale
    elif counts is not None:
        w = counts
    if w is None:
        return feats.mean(axis=0)
    return (feats * w[:, None]).sum(axis=0) / feats.shape[0]


def _inv(mat: Array, what: str) -> Array:
    try:
        return np.linalg.inv(mat)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            f"{what} is singular; the information matrix must be invertible"
        ) from err


def _sym(mat: Array) -> Array:
    return 0.5 * (mat + mat.T)


def _bundle(
    feats_y: Array,
    feats_x: Optional[Array],
    qr_y: QRWeights,
    qr_x: Optional[QRWeights],
    tau: float,
    counts_y: Optional[Array] = None,
    counts_x: Optional[Array] = None,
) -> dict:
    """All sandwich and reduced matrices from one set of samples.

    feats hold extended gradients (S(x), 1). counts_* are multinomial
    bootstrap weights; None means the plain sample.
    """
    d1 = feats_y.shape[1]
    r_y = qr_y.r
    inv_r_y = 1.0 + np.exp(qr_y.log_q - np.log(tau))

    j = _sym(_weighted_outer(feats_y, None, counts_y))
    mean_f = _weighted_mean(feats_y, None, counts_y)
    sigma = _sym(j - np.outer(mean_f, mean_f))

    j_tau = _sym(_weighted_outer(feats_y, r_y, counts_y))
    mean_fr = _weighted_mean(feats_y, r_y, counts_y)
    sigma_tau = _sym(_weighted_outer(feats_y, r_y**2, counts_y) - np.outer(mean_fr, mean_fr))
    k_inv_r = _sym(_weighted_outer(feats_y, inv_r_y, counts_y))

    j_inv = _inv(j, "curvature matrix")
    j_tau_inv = _inv(j_tau, "weighted curvature matrix")
    m_proj = projection_last_coordinate(d1)

    out = {
        "J": j,
        "Sigma": sigma,
        "J_tau": j_tau,
        "Sigma_tau": sigma_tau,
        "V_mle": _sym(j_inv @ sigma @ j_inv),
        "reduced_is": _sym(j_inv @ k_inv_r @ j_inv) - (1.0 + 1.0 / tau) * m_proj,
        "reduced_nce": j_tau_inv - (1.0 + 1.0 / tau) * m_proj,
        "jensen_min": float(
            np.linalg.eigvalsh(_sym(k_inv_r - j @ j_tau_inv @ j)).min()
        ),
    }

    if feats_x is not None and qr_x is not None:
        q_x = qr_x.q
        r_x = qr_x.r
        gamma = _sym(
            _weighted_outer(feats_x, q_x**2, counts_x)
            - np.outer(
                _weighted_mean(feats_x, q_x, counts_x),
                _weighted_mean(feats_x, q_x, counts_x),
            )
        )
        qr_prod = q_x * r_x
        gamma_tau = _sym(
            _weighted_outer(feats_x, qr_prod**2, counts_x)
            - np.outer(
                _weighted_mean(feats_x, qr_prod, counts_x),
                _weighted_mean(feats_x, qr_prod, counts_x),
            )
        )
        out["Gamma"] = gamma
        out["Gamma_tau"] = gamma_tau
        out["V_is"] = _sym(j_inv @ (sigma + gamma / tau) @ j_inv)
        out["V_nce"] = _sym(j_tau_inv @ (sigma_tau + gamma_tau / tau) @ j_tau_inv)
    return out


def _resample_counts(gen: np.random.Generator, n: int) -> Array:
    return np.bincount(gen.integers(0, n, size=n), minlength=n).astype(float)


def _suite_samples(
    xi_star: ExtendedParam,
    truth: TruncGaussParams,
    tau: float,
    mc_size: int,
    rng,
    proposal_lambda: Optional[float],
):
    """Draw truth and proposal samples and prepare features and weights."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    gen_y, gen_x, gen_boot = gen.spawn(3)
    p = truth.p
    suff = trunc_gauss_suff_stat(p)
    if proposal_lambda is None:
        psi_params = truth
    else:
        psi_params = half_normal_proposal_params(proposal_lambda, p)
    psi_nat = natural_from_moment(psi_params)
    theta_star = xi_star.theta

    y = sample_truth_iid(truth, mc_size, gen_y).points
    if proposal_lambda is None:
        x = sample_truth_iid(truth, mc_size, gen_x).points
    else:
        x = sample_proposal_iid(proposal_lambda, p, mc_size, gen_x)

    s_y, s_x = suff(y), suff(x)
    feats_y = np.concatenate([s_y, np.ones((mc_size, 1))], axis=1)
    feats_x = np.concatenate([s_x, np.ones((mc_size, 1))], axis=1)
    qr_y = compute_qr(s_y @ theta_star, s_y @ psi_nat, xi_star.nu, tau)
    qr_x = compute_qr(s_x @ theta_star, s_x @ psi_nat, xi_star.nu, tau)
    return feats_y, feats_x, qr_y, qr_x, gen_boot


def variance_suite(
    xi_star: ExtendedParam,
    truth: TruncGaussParams,
    tau: float,
    mc_size: int,
    rng,
    proposal_lambda: Optional[float] = None,
    n_boot: int = 200,
) -> VarianceSuite:
    """Monte Carlo variance estimates plus paired bootstrap stacks.

    proposal_lambda None means the ideal proposal psi = theta*, in which
    case the density ratio is constant and the artificial sample is a
    second truth sample. xi_star.nu must hold log(Z(psi)/Z(theta*)),
    zero in the ideal case.
    """
    feats_y, feats_x, qr_y, qr_x, gen_boot = _suite_samples(
        xi_star, truth, tau, mc_size, rng, proposal_lambda
    )
    main = _bundle(feats_y, feats_x, qr_y, qr_x, tau)
    gap = loewner_gap(main["V_is"], main["V_nce"])

    stacks: dict[str, list] = {k: [] for k in (
        "V_is", "V_nce", "V_mle", "reduced_is", "reduced_nce", "gap", "jensen_min"
    )}
    for _ in range(n_boot):
        cy = _resample_counts(gen_boot, feats_y.shape[0])
        cx = _resample_counts(gen_boot, feats_x.shape[0])
        b = _bundle(feats_y, feats_x, qr_y, qr_x, tau, counts_y=cy, counts_x=cx)
        stacks["V_is"].append(b["V_is"])
        stacks["V_nce"].append(b["V_nce"])
        stacks["V_mle"].append(b["V_mle"])
        stacks["reduced_is"].append(b["reduced_is"])
        stacks["reduced_nce"].append(b["reduced_nce"])
        stacks["gap"].append(loewner_gap(b["V_is"], b["V_nce"]))
        stacks["jensen_min"].append(b["jensen_min"])

    def _stack(name: str) -> Optional[Array]:
        return np.asarray(stacks[name]) if n_boot > 0 else None

    return VarianceSuite(
        tau=tau,
        proposal_lambda=proposal_lambda,
        n_mc=mc_size,
        V_is=main["V_is"],
        V_nce=main["V_nce"],
        V_mle=main["V_mle"],
        reduced_is=main["reduced_is"],
        reduced_nce=main["reduced_nce"],
        gap=gap,
        jensen_min=main["jensen_min"],
        boot_V_is=_stack("V_is"),
        boot_V_nce=_stack("V_nce"),
        boot_V_mle=_stack("V_mle"),
        boot_reduced_is=_stack("reduced_is"),
        boot_reduced_nce=_stack("reduced_nce"),
        boot_gap=_stack("gap"),
        boot_jensen_min=_stack("jensen_min"),
    )


def asy_variance(
    kind: str,
    xi_star: ExtendedParam,
    truth: TruncGaussParams,
    tau: float,
    mc_size: int,
    rng,
    proposal_lambda: Optional[float] = None,
    n_boot: int = 0,
) -> VarianceReport:
    """Monte Carlo estimate of one estimator's asymptotic variance.

    kind "mle" needs no proposal at all: V = J^-1 Sigma J^-1 with both
    matrices estimated under the truth. kinds "is" and "nce" add the
    proposal-side Gamma with IID artificial points (the long-run
    autocovariance series of the correlated case is out of scope here).
    """
    kind = kind.lower()
    if kind not in {"nce", "is", "mle"}:
        raise ValueError("kind must be one of nce, is, mle")
    if kind == "mle":
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        gen_y, gen_boot = gen.spawn(2)
        suff = trunc_gauss_suff_stat(truth.p)
        y = sample_truth_iid(truth, mc_size, gen_y).points
        s_y = suff(y)
        feats_y = np.concatenate([s_y, np.ones((mc_size, 1))], axis=1)
        j = _sym(_weighted_outer(feats_y, None, None))
        mean_f = _weighted_mean(feats_y, None, None)
        sigma = _sym(j - np.outer(mean_f, mean_f))
        j_inv = _inv(j, "curvature matrix")
        v = _sym(j_inv @ sigma @ j_inv)
        v_se = None
        if n_boot > 0:
            boots = []
            for _ in range(n_boot):
                c = _resample_counts(gen_boot, mc_size)
                jb = _sym(_weighted_outer(feats_y, None, c))
                mb = _weighted_mean(feats_y, None, c)
                sb = _sym(jb - np.outer(mb, mb))
                jb_inv = _inv(jb, "curvature matrix")
                boots.append(_sym(jb_inv @ sb @ jb_inv))
            v_se = bootstrap_se(np.asarray(boots))
        return VarianceReport(
            kind=kind, tau=tau, n_mc=mc_size,
            J=j, Sigma=sigma, Gamma=np.zeros_like(j), V=v, V_se=v_se,
        )

    feats_y, feats_x, qr_y, qr_x, gen_boot = _suite_samples(
        xi_star, truth, tau, mc_size, rng, proposal_lambda
    )
    main = _bundle(feats_y, feats_x, qr_y, qr_x, tau)
    v_key = "V_is" if kind == "is" else "V_nce"
    v_se = None
    if n_boot > 0:
        boots = []
        for _ in range(n_boot):
            cy = _resample_counts(gen_boot, feats_y.shape[0])
            cx = _resample_counts(gen_boot, feats_x.shape[0])
            b = _bundle(feats_y, feats_x, qr_y, qr_x, tau, counts_y=cy, counts_x=cx)
            boots.append(b[v_key])
        v_se = bootstrap_se(np.asarray(boots))
    if kind == "is":
        return VarianceReport(
            kind=kind, tau=tau, n_mc=mc_size,
            J=main["J"], Sigma=main["Sigma"], Gamma=main["Gamma"],
            V=main["V_is"], V_se=v_se,
        )
    return VarianceReport(
        kind=kind, tau=tau, n_mc=mc_size,
        J=main["J_tau"], Sigma=main["Sigma_tau"], Gamma=main["Gamma_tau"],
        V=main["V_nce"], V_se=v_se,
    )


def reduced_variance_forms(
    xi_star: ExtendedParam,
    truth: TruncGaussParams,
    tau: float,
    mc_size: int,
    rng,
    proposal_lambda: Optional[float] = None,
) -> tuple[Array, Array]:
    """Closed-form variance reductions needing truth expectations only.

    Returns (V_is_reduced, V_nce_reduced):
    V_is = J^-1 E[f f' / R] J^-1 - (1 + 1/tau) M and
    V_nce = E[f f' R]^-1 - (1 + 1/tau) M, with M the last-coordinate
    projection. Exponential families only (features independent of xi).
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    gen_y, _ = gen.spawn(2)
    p = truth.p
    suff = trunc_gauss_suff_stat(p)
    psi_params = truth if proposal_lambda is None else half_normal_proposal_params(
        proposal_lambda, p
    )
    psi_nat = natural_from_moment(psi_params)
    y = sample_truth_iid(truth, mc_size, gen_y).points
    s_y = suff(y)
    feats_y = np.concatenate([s_y, np.ones((mc_size, 1))], axis=1)
    qr_y = compute_qr(s_y @ xi_star.theta, s_y @ psi_nat, xi_star.nu, tau)
    b = _bundle(feats_y, None, qr_y, None, tau)
    return b["reduced_is"], b["reduced_nce"]


# ---------------------------------------------------------------------------
# Fixed-data gap limit between the two estimators
# ---------------------------------------------------------------------------


def extended_likelihood_hessian(
    xi: ExtendedParam, observed: Array, model: ModelSpec, proposal_log_z: float
) -> Array:
    """Hessian of the exact extended likelihood at xi (oracle models).

    Blocks (with r = e^nu Z(theta)/Z(psi), L = log Z):
    theta-theta: mean hess log h(y) - r (hess L + grad L grad L'),
    theta-nu: -r grad L, nu-nu: -r.
    """
    if model.log_Z is None or model.grad_log_Z is None or model.hess_log_Z is None:
        raise NotImplementedError("needs an oracle model with log_Z derivatives")
    theta, nu = xi.theta, xi.nu
    d = model.dim
    ratio = float(np.exp(nu + model.log_Z(theta) - proposal_log_z))
    glz = model.grad_log_Z(theta)
    hlz = model.hess_log_Z(theta)
    hess = np.zeros((d + 1, d + 1))
    if model.exp_family is None:
        hess[:d, :d] = np.einsum("ijk->jk", model.hess_log_h(theta, observed)) / len(
            observed
        )
    hess[:d, :d] -= ratio * (hlz + np.outer(glz, glz))
    hess[:d, d] = -ratio * glz
    hess[d, :d] = -ratio * glz
    hess[d, d] = -ratio
    return hess


def estimator_gap_limit(
    xi_hat: ExtendedParam,
    data: Dataset,
    model: ModelSpec,
    psi: Optional[Array] = None,
    mc_size: int = 0,
    rng=None,
) -> Array:
    """Limit of m (xi_ratio - xi_classifier) at fixed observed data.

    Returns n (-H)^-1 v with H the extended-likelihood Hessian at the
    exact joint maximiser xi_hat and
    v = mean_i grad g(y_i) w(y_i) - E_psi[grad g w^2], w = e^g / h_psi.
    The expectation under the proposal is computed by quadrature on
    (0, inf) when mc_size is 0 (1-D oracle models), otherwise by an
    independent Monte Carlo draw of mc_size proposal points.

    Orientation: the scaled difference (ratio-based estimate minus
    classification-based estimate) converges to this vector; the
    classifier-minus-ratio difference converges to its negative.
    """
    if model.log_Z is None:
        raise NotImplementedError("gap limit needs an oracle model with log_Z")
    psi_nat = psi if psi is not None else data.proposal_theta
    if psi_nat is None:
        raise ValueError("a proposal natural parameter is required")
    psi_nat = np.asarray(psi_nat, dtype=float)
    psi_log_z = model.log_Z(psi_nat)
    theta, nu = xi_hat.theta, xi_hat.nu
    d = model.dim
    n = data.n

    hess = extended_likelihood_hessian(xi_hat, data.observed, model, psi_log_z)
    if not np.all(np.isfinite(hess)) or np.linalg.cond(hess) > 1e12:
        raise np.linalg.LinAlgError(
            "extended-likelihood Hessian is singular at the estimate"
        )

    log_w_obs = nu + model.log_h(theta, data.observed) - data.log_h_psi_observed
    w_obs = np.exp(log_w_obs)
    grads_obs = model.grad_log_h(theta, data.observed)
    feats_obs = np.concatenate([grads_obs, np.ones((n, 1))], axis=1)
    term1 = (feats_obs * w_obs[:, None]).mean(axis=0)

    if mc_size == 0:
        if model.sample_dim != 1:
            raise NotImplementedError("quadrature path covers 1-D models only")
        # E_psi[grad g w^2] = int grad g(x) exp(2 nu + (2 theta - psi)' S(x)
        #                                       - log Z(psi)) dx over (0, inf)
        tilt = 2.0 * theta - psi_nat
        if tilt[-1] >= 0:
            raise ValueError(
                "the squared-weight expectation does not exist for this pair"
            )

        def integrand(x: float, comp: int) -> float:
            pts = np.array([[x]])
            s = model.grad_log_h(theta, pts)[0]
            g_comp = s[comp] if comp < d else 1.0
            expo = 2.0 * nu + float(
                model.log_h(tilt, pts)[0]
            ) - psi_log_z
            return g_comp * np.exp(expo)

        term2 = np.array(
            [
                integrate.quad(integrand, 0.0, np.inf, args=(c,), limit=200)[0]
                for c in range(d + 1)
            ]
        )
    else:
        if rng is None:
            raise ValueError("Monte Carlo path needs an rng")
        psi_moment = moment_from_natural(psi_nat, model.sample_dim)
        if psi_moment is None:
            raise ValueError("proposal natural parameter is outside the domain")
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        x = sample_truth_iid(psi_moment, mc_size, gen).points
        log_w_x = nu + model.log_h(theta, x) - model.log_h(psi_nat, x)
        w2 = np.exp(2.0 * log_w_x)
        grads_x = model.grad_log_h(theta, x)
        feats_x = np.concatenate([grads_x, np.ones((mc_size, 1))], axis=1)
        term2 = (feats_x * w2[:, None]).mean(axis=0)

    v = term1 - term2
    return n * np.linalg.solve(-hess, v)


# ---------------------------------------------------------------------------
# Long-run covariance for correlated chains (experimental)
# ---------------------------------------------------------------------------


def geyer_long_run_covariance(values: Array) -> Array:
    """Long-run covariance of a vector chain via initial-positive-sequence
    truncation on the trace of paired autocovariances. Experimental: used
    only for diagnostics on correlated artificial points, never in the
    acceptance-grade IID variance formulas.
    """
    values = np.asarray(values, dtype=float)
    t, d = values.shape
    centered = values - values.mean(axis=0)

    def gamma(k: int) -> Array:
        g = centered[: t - k].T @ centered[k:] / t
        return 0.5 * (g + g.T)

    total = gamma(0).copy()
    k = 0
    while 2 * k + 2 < t // 2:
        pair = gamma(2 * k + 1) + gamma(2 * k + 2)
        if np.trace(pair) <= 0:
            break
        total += 2.0 * pair
        k += 1
    return total
