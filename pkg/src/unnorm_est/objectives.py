"""Objective functions over the extended parameter xi = (theta, nu).

Five related objectives, all maximised, all evaluated in log space:

* the exact extended likelihood (tractable oracle models only),
* its sample counterpart built from importance-weighted artificial points,
* the profiled ratio form in theta alone,
* the logistic-classification objective, and
* the closed-form nu profile shared by the last three.

Every evaluator returns the value together with exact gradient and
Hessian so the Newton solver and the variance calculators never resort
to finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logsumexp

from .models import ExtendedParam, ModelSpec

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed points, artificial points, and the proposal kernel.

    proposal_log_h evaluates the un-normalised proposal kernel log h_psi
    at an (n, k) array of points. proposal_theta optionally carries the
    proposal's natural parameter when the proposal lies inside the model
    family (used to seed the optimizer); proposal_log_z optionally
    carries log Z(psi) for tractable proposals (needed by the exact
    extended likelihood only).
    """

    observed: Array
    artificial: Array
    proposal_log_h: Callable[[Array], Array]
    proposal_theta: Optional[Array] = None
    proposal_log_z: Optional[float] = None

    def __post_init__(self) -> None:
        obs = np.atleast_2d(np.asarray(self.observed, dtype=float))
        art = np.atleast_2d(np.asarray(self.artificial, dtype=float))
        if obs.shape[0] < 1 or art.shape[0] < 1:
            raise ValueError("need at least one observed and one artificial point")
        if obs.shape[1] != art.shape[1]:
            raise ValueError("observed and artificial points must share a dimension")
        if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(art))):
            raise ValueError("data points must be finite")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "artificial", art)
        lh_obs = np.asarray(self.proposal_log_h(obs), dtype=float)
        lh_art = np.asarray(self.proposal_log_h(art), dtype=float)
        if not (np.all(np.isfinite(lh_obs)) and np.all(np.isfinite(lh_art))):
            raise ValueError("proposal kernel must be finite at every data point")
        object.__setattr__(self, "_lh_obs", lh_obs)
        object.__setattr__(self, "_lh_art", lh_art)

    @property
    def n(self) -> int:
        return self.observed.shape[0]

    @property
    def m(self) -> int:
        return self.artificial.shape[0]

    def tau(self) -> float:
        return self.m / self.n

    @property
    def log_h_psi_observed(self) -> Array:
        return self._lh_obs  # type: ignore[attr-defined]

    @property
    def log_h_psi_artificial(self) -> Array:
        return self._lh_art  # type: ignore[attr-defined]


@dataclass(frozen=True, eq=False)
class ObjectiveEval:
    """Value, gradient, and Hessian of an objective at one point."""

    value: float
    gradient: Array
    hessian: Array


def _extended_grads(model: ModelSpec, theta: Array, pts: Array) -> Array:
    """Per-point gradient of g_xi = log h_theta + nu in xi: (grad_theta, 1)."""
    grads = model.grad_log_h(theta, pts)
    ones = np.ones((grads.shape[0], 1))
    return np.concatenate([grads, ones], axis=1)


def _weighted_hess_block(model: ModelSpec, theta: Array, pts: Array, w: Array) -> Array:
    """Sum_i w_i * hess_theta log h(pts_i), embedded in the xi block layout.

    Zero for exponential families, where log h is linear in theta.
    """
    d = model.dim
    out = np.zeros((d + 1, d + 1))
    if model.exp_family is not None:
        return out
    hess = model.hess_log_h(theta, pts)
    out[:d, :d] = np.einsum("i,ijk->jk", w, hess)
    return out


def profile_nu(theta: Array, data: Dataset, model: ModelSpec) -> float:
    """Closed-form maximiser of the importance objective over nu at fixed theta.

    nu_hat(theta) = -log of the mean importance weight h_theta/h_psi over
    the artificial points, evaluated with log-sum-exp.
    """
    ratios = model.log_h(theta, data.artificial) - data.log_h_psi_artificial
    return -float(logsumexp(ratios) - np.log(data.m))


def poisson_loglik(xi: ExtendedParam, data: Dataset, model: ModelSpec) -> ObjectiveEval:
    """Exact extended likelihood; needs tractable normalisers on both sides.

    value = mean_i log(h_theta/h_psi)(y_i) + nu - e^nu Z(theta)/Z(psi).
    The maximiser over nu at fixed theta sits at nu = log(Z(psi)/Z(theta)),
    and the joint maximiser recovers the exact MLE in theta.
    """
    if model.log_Z is None or model.grad_log_Z is None or model.hess_log_Z is None:
        raise NotImplementedError(
            "exact extended likelihood needs log_Z and its derivatives"
        )
    if data.proposal_log_z is None:
        raise NotImplementedError(
            "exact extended likelihood needs the proposal's log normaliser"
        )
    theta, nu = xi.theta, xi.nu
    d = model.dim
    if not model.domain_check(theta):
        # Z(theta) diverges outside the natural domain; reject the trial
        # step through the value, as the importance path does on overflow
        return ObjectiveEval(
            value=-np.inf, gradient=np.zeros(d + 1), hessian=-np.eye(d + 1)
        )
    log_ratio_obs = model.log_h(theta, data.observed) - data.log_h_psi_observed
    log_zr = model.log_Z(theta) - data.proposal_log_z
    # e^(nu+log_zr) may overflow to inf on a wild trial step; the -inf
    # value then gets the step rejected, so inf gradients are never used
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = float(np.exp(nu + log_zr))
        value = float(np.mean(log_ratio_obs)) + nu - ratio

        glz = model.grad_log_Z(theta)
        grad = np.empty(d + 1)
        grad[:d] = model.grad_log_h(theta, data.observed).mean(axis=0) - ratio * glz
        grad[d] = 1.0 - ratio

        hess = _weighted_hess_block(
            model, theta, data.observed, np.full(data.n, 1.0 / data.n)
        )
        hlz = model.hess_log_Z(theta)
        hess[:d, :d] -= ratio * (hlz + np.outer(glz, glz))
        hess[:d, d] -= ratio * glz
        hess[d, :d] -= ratio * glz
        hess[d, d] = -ratio
    return ObjectiveEval(value=value, gradient=grad, hessian=hess)


def is_loglik(xi: ExtendedParam, data: Dataset, model: ModelSpec) -> ObjectiveEval:
    """Importance-sampling surrogate of the extended likelihood.

    value = mean_i log(h_theta/h_psi)(y_i) + nu
            - (e^nu/m) sum_j (h_theta/h_psi)(x_j),
    with the artificial sum done through log-sum-exp. The value may be
    -inf when the weights overflow; the solver treats that as a rejected
    line-search step, never as an error.
    """
    theta, nu = xi.theta, xi.nu
    d = model.dim
    log_ratio_obs = model.log_h(theta, data.observed) - data.log_h_psi_observed
    if np.any(np.isnan(log_ratio_obs)):
        raise ValueError("NaN log-ratio at an observed point")
    log_w = nu + model.log_h(theta, data.artificial) - data.log_h_psi_artificial
    if np.any(np.isnan(log_w)):
        raise ValueError("NaN log-weight at an artificial point")
    log_mean_w = float(logsumexp(log_w) - np.log(data.m))
    # overflow to inf is expected on wild trial steps and handled by the
    # caller through the -inf value; only NaN is an error here
    with np.errstate(over="ignore", invalid="ignore"):
        value = float(np.mean(log_ratio_obs)) + nu - np.exp(log_mean_w)

        w = np.exp(log_w)
        g_obs = _extended_grads(model, theta, data.observed)
        g_art = _extended_grads(model, theta, data.artificial)
        grad = g_obs.mean(axis=0) - (g_art * w[:, None]).sum(axis=0) / data.m

        hess = _weighted_hess_block(
            model, theta, data.observed, np.full(data.n, 1.0 / data.n)
        )
        hess -= _weighted_hess_block(model, theta, data.artificial, w / data.m)
        hess -= (g_art * w[:, None]).T @ g_art / data.m
        hess = 0.5 * (hess + hess.T)
    return ObjectiveEval(value=value, gradient=grad, hessian=hess)


def is_loglik_ratio(theta: Array, data: Dataset, model: ModelSpec) -> ObjectiveEval:
    """Profiled ratio objective in theta alone.

    value = mean_i log(h_theta/h_psi)(y_i)
            - log{(1/m) sum_j (h_theta/h_psi)(x_j)}.
    Identity: equals the nu-profiled importance objective plus one.
    Gradient and Hessian are over theta (dimension d, not d+1).
    """
    theta = np.asarray(theta, dtype=float)
    log_ratio_obs = model.log_h(theta, data.observed) - data.log_h_psi_observed
    log_r = model.log_h(theta, data.artificial) - data.log_h_psi_artificial
    lse = float(logsumexp(log_r))
    value = float(np.mean(log_ratio_obs)) - (lse - np.log(data.m))

    u = np.exp(log_r - lse)  # softmax weights, sum to 1
    s_obs = model.grad_log_h(theta, data.observed)
    s_art = model.grad_log_h(theta, data.artificial)
    mean_art = u @ s_art
    grad = s_obs.mean(axis=0) - mean_art

    d = model.dim
    hess = np.zeros((d, d))
    if model.exp_family is None:
        hess += np.einsum(
            "i,ijk->jk", np.full(data.n, 1.0 / data.n), model.hess_log_h(theta, data.observed)
        )
        hess -= np.einsum("i,ijk->jk", u, model.hess_log_h(theta, data.artificial))
    hess -= (s_art * u[:, None]).T @ s_art - np.outer(mean_art, mean_art)
    hess = 0.5 * (hess + hess.T)
    return ObjectiveEval(value=value, gradient=grad, hessian=hess)


def nce_loglik(xi: ExtendedParam, data: Dataset, model: ModelSpec) -> ObjectiveEval:
    """Logistic-classification objective (raw sum over all n + m points).

    With log-odds s(x) = g_xi(x) - log h_psi(x) + log(n/m),
    value = sum_i log q(y_i) + sum_j log(1 - q(x_j)), where q = expit(s).
    q is never formed on its own for the value; log q = -log1p(e^{-s})
    and log(1-q) = -log1p(e^{s}) keep |s| > 700 finite.
    """
    theta, nu = xi.theta, xi.nu
    offset = np.log(data.n / data.m)
    s_obs = (
        model.log_h(theta, data.observed) + nu - data.log_h_psi_observed + offset
    )
    s_art = (
        model.log_h(theta, data.artificial) + nu - data.log_h_psi_artificial + offset
    )
    if np.any(np.isnan(s_obs)) or np.any(np.isnan(s_art)):
        raise ValueError("NaN log-odds; check inputs")
    value = float(-np.sum(np.logaddexp(0.0, -s_obs)) - np.sum(np.logaddexp(0.0, s_art)))

    # expit(-s) is 1-q computed without cancellation
    q_obs, one_minus_q_obs = expit(s_obs), expit(-s_obs)
    q_art, one_minus_q_art = expit(s_art), expit(-s_art)
    g_obs = _extended_grads(model, theta, data.observed)
    g_art = _extended_grads(model, theta, data.artificial)
    grad = g_obs.T @ one_minus_q_obs - g_art.T @ q_art

    hess = _weighted_hess_block(model, theta, data.observed, one_minus_q_obs)
    hess -= _weighted_hess_block(model, theta, data.artificial, q_art)
    w_obs = q_obs * one_minus_q_obs
    w_art = q_art * one_minus_q_art
    hess -= (g_obs * w_obs[:, None]).T @ g_obs
    hess -= (g_art * w_art[:, None]).T @ g_art
    hess = 0.5 * (hess + hess.T)
    return ObjectiveEval(value=value, gradient=grad, hessian=hess)
