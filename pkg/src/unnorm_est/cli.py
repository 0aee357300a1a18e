"""Command-line front end: single fits, variance reports, experiments.

Subcommands
-----------
fit
    Draw one synthetic dataset and fit a single objective; prints a
    small field,value CSV describing the estimate.
asyvar
    Monte Carlo asymptotic-variance suite at one (tau, lambda) point;
    writes matrix entries with bootstrap standard errors plus the
    minimum-eigenvalue gap rows.
experiment
    Replication harness; see the experiments module for modes and the
    config-file schema.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .asymptotics import bootstrap_se, variance_suite
from .experiments import (
    MODES,
    _fmt,
    config_from_mapping,
    parse_config_file,
    run_experiment,
)
from .models import (
    ExtendedParam,
    TruncGaussParams,
    half_normal_proposal_params,
    natural_1d,
    natural_from_moment,
    nu_star,
    oracle_1d_model,
    trunc_gauss_model,
)
from .objectives import Dataset
from .optim import SolverOptions, fit
from .sampling import RngStream, sample_proposal_iid, sample_truth_iid

_DESK_MU = (1.0, -1.0, 0.5)
_DESK_SIGMA = (1.0, 0.5, 1.0, 0.5, 1.5, 0.3, 1.0, 0.3, 2.0)


def _truth_from_args(args) -> TruncGaussParams:
    mu = np.asarray([float(t) for t in args.truth_mu.split(",")])
    sigma_flat = np.asarray([float(t) for t in args.truth_sigma.split(",")])
    p = mu.size
    return TruncGaussParams(mu=mu, sigma=sigma_flat.reshape(p, p))


def _emit_rows(rows, columns, out: str | None) -> None:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    opts = SolverOptions(grad_tol=args.grad_tol, max_iters=args.max_iters)
    n = args.n
    m = int(round(args.tau * n))
    obs_stream = RngStream(args.seed, 0)
    art_stream = RngStream(args.seed, 1)

    if args.model == "oracle-1d":
        model = oracle_1d_model(args.oracle_mu, args.oracle_sigma2)
        truth = TruncGaussParams(
            mu=np.array([args.oracle_mu]), sigma=np.array([[args.oracle_sigma2]])
        )
        psi = natural_1d(0.0, args.lam)
        y = sample_truth_iid(truth, n, obs_stream).points
        x = sample_proposal_iid(args.lam, 1, m, art_stream)
        suff = model.exp_family.suff_stat
        data = Dataset(
            observed=y,
            artificial=x,
            proposal_log_h=lambda pts: suff(pts) @ psi,
            proposal_theta=psi,
            proposal_log_z=model.log_Z(psi),
        )
    else:
        if args.objective == "poisson":
            raise ValueError(
                "the poisson objective needs a tractable partition function; "
                "use --model oracle-1d"
            )
        truth = _truth_from_args(args)
        p = truth.p
        model = trunc_gauss_model(p)
        psi = natural_from_moment(half_normal_proposal_params(args.lam, p))
        y = sample_truth_iid(truth, n, obs_stream).points
        x = sample_proposal_iid(args.lam, p, m, art_stream)
        suff = model.exp_family.suff_stat
        data = Dataset(
            observed=y,
            artificial=x,
            proposal_log_h=lambda pts: suff(pts) @ psi,
            proposal_theta=psi,
        )

    objective = {"nce": "nce", "mcmle": "is", "poisson": "poisson"}[args.objective]
    result = fit(objective, data, model, opts=opts)

    rows = [
        ("model", args.model),
        ("objective", args.objective),
        ("n", n),
        ("m", m),
        ("tau", args.tau),
        ("lambda", args.lam),
        ("seed", args.seed),
        ("status", result.status),
        ("in_domain", result.in_domain),
        ("iterations", result.iterations),
        ("grad_norm", result.final_grad_norm),
        ("objective_value", result.objective),
        ("nu_hat", result.xi_hat.nu),
    ]
    rows += [
        (f"theta_{i + 1}", float(v)) for i, v in enumerate(result.xi_hat.theta)
    ]
    _emit_rows(rows, ("field", "value"), args.out)
    return 0


# ---------------------------------------------------------------------------
# asyvar
# ---------------------------------------------------------------------------


def cmd_asyvar(args) -> int:
    truth = _truth_from_args(args)
    theta_star = natural_from_moment(truth)
    if args.ideal_proposal:
        lam = None
        nu = 0.0
    else:
        if args.lam is None:
            raise ValueError("asyvar needs --lambda or --ideal-proposal")
        lam = args.lam
        nu = nu_star(truth, half_normal_proposal_params(lam, truth.p))
    xi_star = ExtendedParam(theta=theta_star, nu=nu)
    suite = variance_suite(
        xi_star,
        truth,
        tau=args.tau,
        mc_size=args.mc_size,
        rng=RngStream(args.seed, 0),
        proposal_lambda=lam,
        n_boot=args.boot,
    )

    matrices = (
        ("V_is", suite.V_is, suite.boot_V_is),
        ("V_nce", suite.V_nce, suite.boot_V_nce),
        ("V_mle", suite.V_mle, suite.boot_V_mle),
        ("reduced_is", suite.reduced_is, suite.boot_reduced_is),
        ("reduced_nce", suite.reduced_nce, suite.boot_reduced_nce),
    )
    rows = []
    for name, mat, stack in matrices:
        se = bootstrap_se(stack) if stack is not None else None
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                rows.append(
                    (name, i, j, float(mat[i, j]),
                     float(se[i, j]) if se is not None else float("nan"))
                )
    for name, value, stack in (
        ("gap_lambda_min", suite.gap, suite.boot_gap),
        ("jensen_lambda_min", suite.jensen_min, suite.boot_jensen_min),
    ):
        se = float(bootstrap_se(stack)) if stack is not None else float("nan")
        rows.append((name, -1, -1, float(value), se))
    _emit_rows(rows, ("quantity", "row", "col", "value", "se"), args.out)
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def cmd_experiment(args) -> int:
    raw = parse_config_file(args.config)
    config = config_from_mapping(
        raw,
        mode=args.mode,
        seed=args.seed,
        workers=args.workers,
        deterministic=True if args.deterministic else None,
        grad_tol=args.grad_tol,
        max_iters=args.max_iters,
    )
    paths = run_experiment(config, args.out)
    for name in sorted(paths):
        sys.stdout.write(f"{name}: {paths[name]}\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unnorm-est",
        description="Estimation and experiments for un-normalised models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_truth_flags(p):
        p.add_argument(
            "--truth-mu", default=",".join(str(v) for v in _DESK_MU),
            help="comma-separated mean vector of the data-generating model",
        )
        p.add_argument(
            "--truth-sigma", default=",".join(str(v) for v in _DESK_SIGMA),
            help="comma-separated row-major covariance of the truth",
        )

    p_fit = sub.add_parser("fit", help="fit one synthetic dataset")
    p_fit.add_argument(
        "--objective", choices=("nce", "mcmle", "poisson"), default="nce"
    )
    p_fit.add_argument("--model", choices=("trunc-gauss", "oracle-1d"),
                       default="trunc-gauss")
    p_fit.add_argument("--n", type=int, default=300)
    p_fit.add_argument("--tau", type=float, default=1.0)
    p_fit.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--oracle-mu", type=float, default=1.0)
    p_fit.add_argument("--oracle-sigma2", type=float, default=1.0)
    p_fit.add_argument("--grad-tol", type=float, default=None)
    p_fit.add_argument("--max-iters", type=int, default=200)
    p_fit.add_argument("--out", default=None, help="write CSV here, not stdout")
    add_truth_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_var = sub.add_parser("asyvar", help="Monte Carlo asymptotic variances")
    p_var.add_argument("--tau", type=float, required=True)
    p_var.add_argument("--lambda", dest="lam", type=float, default=None)
    p_var.add_argument(
        "--ideal-proposal", action="store_true",
        help="use the truth itself as the proposal",
    )
    p_var.add_argument("--mc-size", type=int, default=200_000)
    p_var.add_argument("--boot", type=int, default=200)
    p_var.add_argument("--seed", type=int, default=0)
    p_var.add_argument("--out", default=None, help="write CSV here, not stdout")
    add_truth_flags(p_var)
    p_var.set_defaults(func=cmd_asyvar)

    p_exp = sub.add_parser("experiment", help="run a replication experiment")
    p_exp.add_argument("mode", choices=MODES)
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--workers", type=int, default=None)
    p_exp.add_argument("--deterministic", action="store_true")
    p_exp.add_argument("--grad-tol", type=float, default=None)
    p_exp.add_argument("--max-iters", type=int, default=None)
    p_exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
