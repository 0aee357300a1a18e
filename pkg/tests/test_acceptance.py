"""End-to-end checks of the package's shipped guarantees.

One test per guarantee, each asserting its stated numerical tolerance
and, where one applies, its wall-clock budget, so `pytest -v` prints a
single pass/fail line per guarantee. The heavy tests re-run the
desk-scale experiment configs and the Monte Carlo variance studies from
scratch; the whole file takes roughly half an hour on one core.
"""

from __future__ import annotations

import csv
import filecmp
import time
from itertools import product
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from conftest import DESK_MU, DESK_SIGMA, make_oracle_dataset, make_p3_dataset
from oracles import fd_gradient, fd_jacobian, irls_logistic, logistic_value_grad
from unnorm_est import (
    ExperimentConfig,
    ExtendedParam,
    RngStream,
    TruncGaussParams,
    bootstrap_se,
    config_from_mapping,
    fit,
    half_normal_proposal_params,
    is_loglik,
    is_loglik_ratio,
    natural_from_moment,
    nce_loglik,
    nu_star,
    parse_config_file,
    poisson_loglik,
    profile_nu,
    run_experiment,
    variance_suite,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def desk_config(name: str) -> ExperimentConfig:
    return config_from_mapping(parse_config_file(CONFIGS / name), deterministic=True)


def read_csv(path: Path):
    """(header, rows) of one output file, comments stripped."""
    data = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    rows = list(csv.reader(data))
    return tuple(rows[0]), rows[1:]


def rel_err(got: np.ndarray, want: np.ndarray) -> float:
    return float(np.linalg.norm(got - want) / max(1.0, float(np.linalg.norm(want))))


def norm_agreement(diff: np.ndarray, diff_stack: np.ndarray, n_se: float = 3.0):
    """Frobenius norm of a matrix difference and a calibrated noise bound.

    The bound is mean + n_se * sd of the CENTERED bootstrap norms, i.e.
    of the resampling noise alone; elementwise bands would false-alarm
    from multiplicity across entries and grid points.
    """
    stack = np.asarray(diff_stack)
    centered = stack - stack.mean(axis=0)
    norms = np.linalg.norm(centered.reshape(stack.shape[0], -1), axis=1)
    return float(np.linalg.norm(diff)), float(norms.mean() + n_se * norms.std(ddof=1))


def test_analytic_derivatives_match_finite_differences():
    """Gradients within 1e-6 and Hessians within 1e-4 of central FD."""
    t0 = time.perf_counter()
    oracle = make_oracle_dataset(40, 60, seed=101)
    p3 = make_p3_dataset(30, 2.0, 4.0, seed=102)
    cases = [
        (obj, oracle) for obj in (nce_loglik, is_loglik, poisson_loglik)
    ] + [(obj, p3) for obj in (nce_loglik, is_loglik)]
    rng = np.random.default_rng(103)
    for objective, (data, model, psi, _) in cases:
        for _ in range(3):
            theta = psi + 0.3 * rng.normal(size=psi.size)
            theta[-1] = min(theta[-1], -0.05)  # keep the oracle integrable
            xi = ExtendedParam(theta=theta, nu=float(rng.normal(scale=0.5)))

            def value(vec):
                return objective(ExtendedParam.from_vector(vec), data, model).value

            def grad(vec):
                return objective(ExtendedParam.from_vector(vec), data, model).gradient

            ev = objective(xi, data, model)
            assert rel_err(ev.gradient, fd_gradient(value, xi.as_vector())) < 1e-6
            assert rel_err(ev.hessian, fd_jacobian(grad, xi.as_vector())) < 1e-4
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"derivative check took {elapsed:.1f}s"


def test_nce_objective_and_fit_match_independent_logistic_irls():
    """Value, gradient, and maximiser agree with offset IRLS to 1e-6."""
    t0 = time.perf_counter()
    # the reference IRLS is plain Newton with no step control, so use an
    # instance where it converges; the package solver needs no such care
    data, model, psi, _ = make_oracle_dataset(50, 50, seed=32)
    suff = model.exp_family.suff_stat
    pts = np.concatenate([data.observed, data.artificial], axis=0)
    design = np.concatenate([suff(pts), np.ones((100, 1))], axis=1)
    offset = np.log(data.n / data.m) - (suff(pts) @ psi)
    labels = np.concatenate([np.ones(50), np.zeros(50)])

    rng = np.random.default_rng(105)
    for _ in range(5):
        xi = ExtendedParam(theta=psi + 0.3 * rng.normal(size=2), nu=float(rng.normal()))
        want_value, want_grad = logistic_value_grad(
            xi.as_vector(), design, offset, labels
        )
        ev = nce_loglik(xi, data, model)
        assert abs(ev.value - want_value) <= 1e-6 * max(1.0, abs(want_value))
        assert rel_err(ev.gradient, want_grad) < 1e-6

    beta = irls_logistic(design, offset, labels)
    result = fit("nce", data, model)
    assert result.status == "converged"
    np.testing.assert_allclose(result.xi_hat.as_vector(), beta, rtol=0, atol=1e-6)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"logistic oracle check took {elapsed:.1f}s"


def test_profiled_nu_and_ratio_objective_identities():
    """On 20 random instances, to 1e-10: the importance objective in nu
    is maximised at minus the log mean weight, and the ratio objective
    equals that maximum plus one."""
    rng = np.random.default_rng(106)
    for k in range(20):
        data, model, psi, _ = make_oracle_dataset(
            n=10 + k, m=15 + 2 * k, lam=float(rng.uniform(0.8, 4.0)), seed=107 + k
        )
        theta = psi + 0.3 * rng.normal(size=2)
        log_w = model.log_h(theta, data.artificial) - data.log_h_psi_artificial
        nu_indep = -(float(logsumexp(log_w)) - np.log(data.m))

        nu_hat = profile_nu(theta, data, model)
        assert abs(nu_hat - nu_indep) <= 1e-10

        at_hat = is_loglik(ExtendedParam(theta=theta, nu=nu_hat), data, model)
        assert abs(at_hat.gradient[-1]) <= 1e-10
        for bump in (-0.01, 0.01):
            bumped = is_loglik(
                ExtendedParam(theta=theta, nu=nu_hat + bump), data, model
            )
            assert bumped.value < at_hat.value

        ratio = is_loglik_ratio(theta, data, model)
        assert abs(ratio.value - (at_hat.value + 1.0)) <= 1e-10


def test_estimator_gap_shrinks_like_one_over_m_toward_its_limit(tmp_path):
    """Scaled-gap study: log-log slope of the gap norm in [-1.15, -0.85],
    and m times the gap within 25% relative of the quadrature limit at
    the largest m (pooled over seeds; per-seed relative error is
    ill-posed when a seed's limit vector is near zero)."""
    t0 = time.perf_counter()
    paths = run_experiment(desk_config("desk-gap.cfg"), tmp_path)
    header, rows = read_csv(paths["gap"])
    ix = {c: i for i, c in enumerate(header)}
    arr = np.array([[float(v) for v in row] for row in rows])

    m = arr[:, ix["m"]]
    gap_norm = arr[:, ix["gap_norm"]]
    design = np.vstack([np.log(m), np.ones_like(m)]).T
    slope = np.linalg.lstsq(design, np.log(gap_norm), rcond=None)[0][0]
    assert -1.15 <= slope <= -0.85, f"slope {slope:.3f}"

    at_top = arr[m == m.max()]
    scaled = at_top[:, [ix["scaled_gap_theta1"], ix["scaled_gap_theta2"], ix["scaled_gap_nu"]]]
    limit = at_top[:, [ix["limit_theta1"], ix["limit_theta2"], ix["limit_nu"]]]
    pooled = np.linalg.norm(scaled - limit) / np.linalg.norm(limit)
    assert pooled <= 0.25, f"pooled relative error {pooled:.3f}"
    per_seed = np.linalg.norm(scaled - limit, axis=1) / np.linalg.norm(limit, axis=1)
    assert np.median(per_seed) <= 0.25

    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"gap study took {elapsed:.0f}s"


def test_ideal_proposal_variances_match_scaled_mle_variance():
    """With the proposal equal to the truth, both estimators' asymptotic
    variances match (1 + 1/tau) times the MLE variance entrywise within
    4 paired-bootstrap standard errors at tau in {1, 5}."""
    t0 = time.perf_counter()
    truth = TruncGaussParams(mu=DESK_MU, sigma=DESK_SIGMA)
    xi_star = ExtendedParam(theta=natural_from_moment(truth), nu=0.0)
    for k, tau in enumerate((1.0, 5.0)):
        suite = variance_suite(
            xi_star, truth, tau=tau, mc_size=1_000_000,
            rng=RngStream(501 + k, 0), proposal_lambda=None, n_boot=120,
        )
        factor = 1.0 + 1.0 / tau
        for v, stack in (
            (suite.V_is, suite.boot_V_is), (suite.V_nce, suite.boot_V_nce)
        ):
            diff = v - factor * suite.V_mle
            se = bootstrap_se(np.asarray(stack) - factor * np.asarray(suite.boot_V_mle))
            assert np.all(np.abs(diff) <= 4.0 * se + 1e-12), (
                f"tau={tau}: max |diff|/se = {np.max(np.abs(diff) / se):.2f}"
            )
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"ideal-proposal study took {elapsed:.0f}s"


def test_nce_variance_dominates_mcmle_variance_across_grid():
    """At 16 (tau, lambda) points the smallest eigenvalue of
    V_is - V_nce stays above -4 bootstrap standard errors, and each
    reduced-form variance agrees with its sandwich form within a
    calibrated 3-standard-error noise bound, pooled over the grid (32
    separate 3-SE comparisons would false-alarm on multiplicity; the
    per-point check lives in the unit suite)."""
    t0 = time.perf_counter()
    truth = TruncGaussParams(mu=DESK_MU, sigma=DESK_SIGMA)
    theta_star = natural_from_moment(truth)
    diffs = {"is": [], "nce": []}
    diff_stacks = {"is": [], "nce": []}
    for i, (tau, lam) in enumerate(product((1.0, 5.0, 20.0, 100.0), (1.5, 4.0, 10.0, 20.0))):
        xi_star = ExtendedParam(
            theta=theta_star, nu=nu_star(truth, half_normal_proposal_params(lam, 3))
        )
        suite = variance_suite(
            xi_star, truth, tau=tau, mc_size=500_000,
            rng=RngStream(600 + i, 0), proposal_lambda=lam, n_boot=80,
        )
        gap_se = float(np.std(suite.boot_gap, ddof=1))
        assert suite.gap >= -4.0 * gap_se, (
            f"tau={tau} lambda={lam}: gap {suite.gap:.3g}, se {gap_se:.3g}"
        )
        for name, red, v, red_stack, v_stack in (
            ("is", suite.reduced_is, suite.V_is, suite.boot_reduced_is, suite.boot_V_is),
            ("nce", suite.reduced_nce, suite.V_nce, suite.boot_reduced_nce, suite.boot_V_nce),
        ):
            diffs[name].append((red - v).ravel())
            diff_stacks[name].append(
                (np.asarray(red_stack) - np.asarray(v_stack)).reshape(80, -1)
            )
    # grid points use disjoint streams, so the bootstrap stacks are
    # independent across points and concatenate into joint resamples
    for name in ("is", "nce"):
        got, bound = norm_agreement(
            np.concatenate(diffs[name]),
            np.concatenate(diff_stacks[name], axis=1),
            n_se=3.0,
        )
        assert got <= bound, f"{name}: |reduced - sandwich| {got:.3g} > {bound:.3g}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 900.0, f"variance grid took {elapsed:.0f}s"


def test_desk_mse_grid_nce_never_loses_and_small_tau_hurts_mcmle(tmp_path):
    """Desk-scale replication: the paired mcmle/nce MSE ratio is at
    least 1 minus its CI halfwidth at every grid point, and the tau=1
    ratio exceeds the tau=20 ratio at lambda in {1.5, 20}."""
    t0 = time.perf_counter()
    paths = run_experiment(desk_config("desk-mse.cfg"), tmp_path)
    header, rows = read_csv(paths["summary_mse"])
    ix = {c: i for i, c in enumerate(header)}
    ratio = {}
    for row in rows:
        if row[ix["estimator"]] != "mcmle-vs-nce":
            continue
        value, lo, hi = (float(row[ix[c]]) for c in ("value", "ci_lo", "ci_hi"))
        key = (float(row[ix["tau"]]), float(row[ix["lambda"]]))
        assert np.isfinite(value), f"no paired replicates at {key}"
        halfwidth = (hi - lo) / 2.0
        assert value >= 1.0 - halfwidth, f"{key}: ratio {value:.3f} - {halfwidth:.3f}"
        ratio[key] = value
    assert len(ratio) == 12
    for lam in (1.5, 20.0):
        assert ratio[(1.0, lam)] > ratio[(20.0, lam)], f"lambda={lam}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 1800.0, f"desk MSE grid took {elapsed:.0f}s"


def test_desk_existence_fractions_separate_estimators(tmp_path):
    """Desk-scale replication: at (tau=1, lambda=1.5) the mcmle
    existence fraction sits below the nce fraction with disjoint
    confidence intervals; at (tau=20, lambda=4) both reach 0.99."""
    t0 = time.perf_counter()
    paths = run_experiment(desk_config("desk-existence.cfg"), tmp_path)
    header, rows = read_csv(paths["summary_existence"])
    ix = {c: i for i, c in enumerate(header)}
    cells = {}
    for row in rows:
        key = (float(row[ix["tau"]]), float(row[ix["lambda"]]), row[ix["estimator"]])
        cells[key] = tuple(float(row[ix[c]]) for c in ("value", "ci_lo", "ci_hi"))

    nce_value, nce_lo, _ = cells[(1.0, 1.5, "nce")]
    mcmle_value, _, mcmle_hi = cells[(1.0, 1.5, "mcmle")]
    assert mcmle_value < nce_value
    assert mcmle_hi < nce_lo, f"intervals overlap: {mcmle_hi:.3f} vs {nce_lo:.3f}"
    assert cells[(20.0, 4.0, "nce")][0] >= 0.99
    assert cells[(20.0, 4.0, "mcmle")][0] >= 0.99
    elapsed = time.perf_counter() - t0
    assert elapsed < 900.0, f"desk existence grid took {elapsed:.0f}s"


def test_metropolis_artificial_points_preserve_convergence_to_mle(tmp_path):
    """With Metropolis-generated artificial points the mean distance to
    the exact MLE decreases over the m grid for both estimators (at
    most one inversion allowed)."""
    t0 = time.perf_counter()
    paths = run_experiment(desk_config("desk-consistency.cfg"), tmp_path)
    header, rows = read_csv(paths["consistency"])
    ix = {c: i for i, c in enumerate(header)}
    for estimator in ("nce", "mcmle"):
        errs: dict[int, list[float]] = {}
        for row in rows:
            if (
                row[ix["study"]] == "fixed-n"
                and row[ix["sampler"]] == "mcmc"
                and row[ix["estimator"]] == estimator
                and row[ix["in_domain"]] == "true"
            ):
                errs.setdefault(int(row[ix["m"]]), []).append(float(row[ix["err_mle"]]))
        means = [float(np.mean(errs[m])) for m in sorted(errs)]
        assert len(means) == 3
        inversions = sum(b >= a for a, b in zip(means, means[1:]))
        assert inversions <= 1, f"{estimator}: {means}"
        assert means[-1] < means[0], f"{estimator}: {means}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0, f"consistency study took {elapsed:.0f}s"


def test_rerunning_with_same_seed_reproduces_csv_bytes(tmp_path):
    """Deterministic runs of each experiment family are byte-identical."""
    grid = ExperimentConfig(
        mode="mse-ratio", n=25, tau_grid=(1.0,), lambda_grid=(4.0,),
        replications=3, seed=13, mle_mc_size=2_000, deterministic=True,
    )
    gap = ExperimentConfig(
        mode="estimator-gap", n=20, replications=2, seed=13,
        m_grid=(300,), deterministic=True,
    )
    for tag, config in (("grid", grid), ("gap", gap)):
        first = run_experiment(config, tmp_path / f"{tag}-a")
        second = run_experiment(config, tmp_path / f"{tag}-b")
        assert first.keys() == second.keys()
        for name in first:
            assert filecmp.cmp(first[name], second[name], shallow=False), name
