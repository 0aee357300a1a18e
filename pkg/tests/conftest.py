from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from unnorm_est import (
    Dataset,
    TruncGaussParams,
    natural_1d,
    natural_from_moment,
    half_normal_proposal_params,
    oracle_1d_model,
    sample_proposal_iid,
    sample_truth_iid,
    trunc_gauss_model,
    RngStream,
)

DESK_MU = np.array([1.0, -1.0, 0.5])
DESK_SIGMA = np.array([[1.0, 0.5, 1.0], [0.5, 1.5, 0.3], [1.0, 0.3, 2.0]])


@pytest.fixture(scope="session")
def desk_truth() -> TruncGaussParams:
    return TruncGaussParams(mu=DESK_MU, sigma=DESK_SIGMA)


def make_oracle_dataset(
    n: int,
    m: int,
    lam: float = 2.0,
    seed: int = 0,
    mu: float = 1.0,
    sigma2: float = 1.0,
):
    """1-d oracle bundle: (data, model, psi, truth), proposal half-normal."""
    model = oracle_1d_model(mu, sigma2)
    truth = TruncGaussParams(mu=np.array([mu]), sigma=np.array([[sigma2]]))
    psi = natural_1d(0.0, lam)
    y = sample_truth_iid(truth, n, RngStream(seed, 0)).points
    x = sample_proposal_iid(lam, 1, m, RngStream(seed, 1))
    suff = model.exp_family.suff_stat
    data = Dataset(
        observed=y,
        artificial=x,
        proposal_log_h=lambda pts: suff(pts) @ psi,
        proposal_theta=psi,
        proposal_log_z=model.log_Z(psi),
    )
    return data, model, psi, truth


def make_p3_dataset(n: int, tau: float, lam: float, seed: int = 0):
    """3-d truncated-Gaussian bundle: (data, model, psi, truth)."""
    truth = TruncGaussParams(mu=DESK_MU, sigma=DESK_SIGMA)
    model = trunc_gauss_model(3)
    psi = natural_from_moment(half_normal_proposal_params(lam, 3))
    m = int(round(tau * n))
    y = sample_truth_iid(truth, n, RngStream(seed, 0)).points
    x = sample_proposal_iid(lam, 3, m, RngStream(seed, 1))
    suff = model.exp_family.suff_stat
    data = Dataset(
        observed=y,
        artificial=x,
        proposal_log_h=lambda pts: suff(pts) @ psi,
        proposal_theta=psi,
    )
    return data, model, psi, truth
