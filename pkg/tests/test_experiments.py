from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from unnorm_est import (
    ExperimentConfig,
    config_from_mapping,
    parse_config_file,
    run_experiment,
)
from unnorm_est.experiments import (
    CONSISTENCY_COLUMNS,
    GAP_COLUMNS,
    RECORD_COLUMNS,
    SUMMARY_COLUMNS,
    ReplicationRecord,
    _grid_replicate,
    _stream_id,
    mean_normal_ci,
    paired_ratio_ci,
    replicate_streams,
    summarize_existence,
    summarize_mse,
    wilson_interval,
)


def read_csv(path: Path):
    """(comment_lines, header, rows) of one output file."""
    comments, data = [], []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            comments.append(line)
        else:
            data.append(line)
    rows = list(csv.reader(data))
    return comments, tuple(rows[0]), rows[1:]


def tiny_grid_config(**kwargs) -> ExperimentConfig:
    base = dict(
        mode="mse-ratio",
        n=20,
        tau_grid=(1.0,),
        lambda_grid=(4.0,),
        replications=3,
        seed=5,
        mle_mc_size=2_000,
        deterministic=True,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class TestConfigParsing:
    def test_file_round_trip(self, tmp_path):
        text = "\n".join(
            [
                "# a comment",
                "",
                "mode = existence",
                "n = 40",
                "tau_grid = 1, 5",
                "lambda_grid=1.5,4",
                "replications = 4",
                "deterministic = yes",
            ]
        )
        path = tmp_path / "run.cfg"
        path.write_text(text + "\n")
        config = config_from_mapping(parse_config_file(path))
        assert config.mode == "existence"
        assert config.n == 40
        assert config.tau_grid == (1.0, 5.0)
        assert config.lambda_grid == (1.5, 4.0)
        assert config.replications == 4
        assert config.deterministic is True

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("mode = existence\nnonsense\n")
        with pytest.raises(ValueError, match="2"):
            parse_config_file(path)

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            config_from_mapping({"bogus": "1"})

    def test_overrides_apply_only_when_set(self):
        raw = {"mode": "mse-ratio", "seed": "3", "workers": "4"}
        config = config_from_mapping(raw, seed=9, workers=None)
        assert config.seed == 9
        assert config.workers == 4

    def test_m_grid_parsed_as_ints(self):
        config = config_from_mapping({"m_grid": "100, 1000"})
        assert config.m_grid == (100, 1000)
        assert all(isinstance(m, int) for m in config.m_grid)

    @pytest.mark.parametrize(
        "bad",
        [
            {"mode": "unheard-of"},
            {"replications": 1},
            {"n": 0},
            {"tau_grid": ()},
            {"proposal_kind": "cauchy"},
        ],
    )
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)

    def test_truth_property_reshapes(self):
        config = ExperimentConfig()
        truth = config.truth
        assert truth.p == 3
        np.testing.assert_allclose(truth.sigma, truth.sigma.T)


# ---------------------------------------------------------------------------
# Stream bookkeeping
# ---------------------------------------------------------------------------


class TestStreamPacking:
    def test_rejects_out_of_range(self):
        for bad in ((0, 256, 0, 0, 0), (0, 0, 256, 0, 0),
                    (0, 0, 0, 1 << 24, 0), (0, 0, 0, 0, 4)):
            with pytest.raises(ValueError):
                _stream_id(*bad)

    def test_ids_unique_across_coordinates(self):
        seen = set()
        for code in range(4):
            for a in (0, 1, 7, 255):
                for b in (0, 3, 255):
                    for rep in (0, 1, 999, (1 << 24) - 1):
                        for role in range(4):
                            seen.add(_stream_id(code, a, b, rep, role))
        assert len(seen) == 4 * 4 * 3 * 4 * 4

    def test_replicate_streams_are_paired_and_disjoint(self):
        config = tiny_grid_config()
        obs, art = replicate_streams(config, 0, 0, 2)
        obs2, art2 = replicate_streams(config, 0, 0, 2)
        obs_draw = obs.generator().integers(0, 1 << 32, 8)
        art_draw = art.generator().integers(0, 1 << 32, 8)
        np.testing.assert_array_equal(
            obs_draw, obs2.generator().integers(0, 1 << 32, 8)
        )
        np.testing.assert_array_equal(
            art_draw, art2.generator().integers(0, 1 << 32, 8)
        )
        assert not np.array_equal(obs_draw, art_draw)


# ---------------------------------------------------------------------------
# Interval helpers
# ---------------------------------------------------------------------------


class TestIntervalHelpers:
    def test_wilson_matches_direct_formula(self):
        z = stats.norm.ppf(0.975)
        k, total = 8, 10
        phat = k / total
        denom = 1 + z * z / total
        center = (phat + z * z / (2 * total)) / denom
        half = z * np.sqrt(phat * (1 - phat) / total + z * z / (4 * total**2))
        lo, hi = wilson_interval(k, total)
        np.testing.assert_allclose([lo, hi],
                                   [center - half / denom, center + half / denom],
                                   rtol=1e-12)

    def test_wilson_complement_symmetry(self):
        for k in (0, 1, 5, 9, 10):
            lo, hi = wilson_interval(k, 10)
            lo2, hi2 = wilson_interval(10 - k, 10)
            np.testing.assert_allclose([lo, hi], [1 - hi2, 1 - lo2], atol=1e-12)
            assert 0.0 <= lo <= k / 10 <= hi + 1e-12 and hi <= 1.0

    def test_wilson_empty(self):
        lo, hi = wilson_interval(0, 0)
        assert np.isnan(lo) and np.isnan(hi)

    def test_mean_ci_matches_scipy(self):
        rng = np.random.default_rng(1)
        values = rng.normal(size=30)
        mean, lo, hi = mean_normal_ci(values)
        half = stats.norm.ppf(0.975) * stats.sem(values)
        np.testing.assert_allclose([mean, lo, hi],
                                   [values.mean(), values.mean() - half,
                                    values.mean() + half], rtol=1e-10)

    def test_mean_ci_degenerate(self):
        mean, lo, hi = mean_normal_ci(np.array([2.5]))
        assert mean == 2.5 and np.isnan(lo) and np.isnan(hi)

    def test_paired_ratio_identical_arrays(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        ratio, lo, hi = paired_ratio_ci(a, a)
        assert ratio == 1.0
        np.testing.assert_allclose([lo, hi], [1.0, 1.0], atol=1e-12)

    def test_paired_ratio_scaling(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(1, 2, size=20)
        b = rng.uniform(1, 2, size=20)
        r1, lo1, hi1 = paired_ratio_ci(a, b)
        r2, lo2, hi2 = paired_ratio_ci(3 * a, b)
        np.testing.assert_allclose([r2, lo2, hi2], [3 * r1, 3 * lo1, 3 * hi1],
                                   rtol=1e-12)


# ---------------------------------------------------------------------------
# Summaries on synthetic records
# ---------------------------------------------------------------------------


def make_record(rep, estimator, in_domain=True, sqerr=1.0, tau=1.0, lam=4.0):
    return ReplicationRecord(
        mode="mse-ratio", tau=tau, lam=lam, replicate=rep, estimator=estimator,
        in_domain=in_domain, sqerr_theta=sqerr, sqerr_nu=0.1, seconds=0.0,
    )


class TestSummaries:
    def test_mse_rows_and_exclusions(self):
        records = []
        for rep, (err_n, err_m) in enumerate([(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]):
            records.append(make_record(rep, "nce", sqerr=err_n))
            records.append(make_record(rep, "mcmle", sqerr=err_m))
        records.append(make_record(3, "nce", in_domain=False, sqerr=99.0))
        records.append(make_record(3, "mcmle", in_domain=False, sqerr=99.0))
        rows = summarize_mse(records, denominator=2.0)
        by_est = {r[2]: r for r in rows}
        assert set(by_est) == {"nce", "mcmle", "mcmle-vs-nce"}
        np.testing.assert_allclose(by_est["nce"][3], 2.0 / 2.0)
        np.testing.assert_allclose(by_est["mcmle"][3], 4.0 / 2.0)
        assert by_est["nce"][6] == 3 and by_est["mcmle"][6] == 3
        ratio_row = by_est["mcmle-vs-nce"]
        np.testing.assert_allclose(ratio_row[3], 2.0)
        assert ratio_row[6] == 3

    def test_mse_all_out_of_domain(self):
        records = [
            make_record(rep, est, in_domain=False)
            for rep in range(2) for est in ("nce", "mcmle")
        ]
        rows = summarize_mse(records, denominator=1.0)
        for row in rows:
            assert np.isnan(row[3])
            assert row[6] == 0

    def test_mse_pairing_uses_common_replicates(self):
        records = [
            make_record(0, "nce", sqerr=1.0),
            make_record(0, "mcmle", in_domain=False, sqerr=50.0),
            make_record(1, "nce", sqerr=1.0),
            make_record(1, "mcmle", sqerr=3.0),
            make_record(2, "nce", sqerr=1.0),
            make_record(2, "mcmle", sqerr=3.0),
        ]
        rows = summarize_mse(records, denominator=1.0)
        ratio_row = next(r for r in rows if r[2] == "mcmle-vs-nce")
        np.testing.assert_allclose(ratio_row[3], 3.0)
        assert ratio_row[6] == 2

    def test_existence_fractions(self):
        records = [
            make_record(rep, "nce", in_domain=rep < 3) for rep in range(4)
        ] + [make_record(rep, "mcmle", in_domain=True) for rep in range(4)]
        rows = summarize_existence(records)
        by_est = {r[2]: r for r in rows}
        np.testing.assert_allclose(by_est["nce"][3], 0.75)
        np.testing.assert_allclose(by_est["mcmle"][3], 1.0)
        lo, hi = wilson_interval(3, 4)
        np.testing.assert_allclose((by_est["nce"][4], by_est["nce"][5]), (lo, hi))
        assert by_est["nce"][6] == 4

    def test_rows_sorted_by_grid_point(self):
        records = []
        for tau in (5.0, 1.0):
            for lam in (10.0, 1.5):
                for est in ("nce", "mcmle"):
                    records.append(make_record(0, est, tau=tau, lam=lam))
                    records.append(make_record(1, est, tau=tau, lam=lam))
        rows = summarize_existence(records)
        keys = [(r[0], r[1]) for r in rows]
        assert keys == sorted(keys)


# ---------------------------------------------------------------------------
# Grid runner and CSV output
# ---------------------------------------------------------------------------


class TestGridRunner:
    def test_one_replicate_is_paired(self):
        config = tiny_grid_config()
        records = _grid_replicate((config, 0, 0, 1))
        assert [r.estimator for r in records] == ["nce", "mcmle"]
        assert all(r.replicate == 1 for r in records)
        assert all(r.seconds == 0.0 for r in records)

    def test_both_estimators_see_identical_samples(self, monkeypatch):
        # paired design: hash the data each fit consumed
        import hashlib

        import unnorm_est.experiments as exp

        seen = []
        real_fit = exp.fit

        def spy_fit(objective, data, model, **kwargs):
            digest = hashlib.sha256()
            digest.update(np.ascontiguousarray(data.observed).tobytes())
            digest.update(np.ascontiguousarray(data.artificial).tobytes())
            seen.append((objective, digest.hexdigest()))
            return real_fit(objective, data, model, **kwargs)

        monkeypatch.setattr(exp, "fit", spy_fit)
        _grid_replicate((tiny_grid_config(), 0, 0, 0))
        assert [obj for obj, _ in seen] == ["nce", "is"]
        assert seen[0][1] == seen[1][1]

    def test_mse_ratio_outputs(self, tmp_path):
        config = tiny_grid_config()
        paths = run_experiment(config, tmp_path)
        assert set(paths) == {"records", "summary_mse"}
        comments, header, rows = read_csv(paths["records"])
        assert header == RECORD_COLUMNS
        assert len(rows) == config.replications * 2
        assert comments and comments[0].startswith("# config: mode=mse-ratio")
        assert not any("generated" in c for c in comments)
        est_counts = {name: 0 for name in ("nce", "mcmle")}
        for row in rows:
            est_counts[row[4]] += 1
            assert row[5] in ("true", "false")
            float(row[6]), float(row[7])
        assert est_counts == {"nce": 3, "mcmle": 3}

        _, sum_header, sum_rows = read_csv(paths["summary_mse"])
        assert sum_header == SUMMARY_COLUMNS
        assert [r[2] for r in sum_rows] == ["nce", "mcmle", "mcmle-vs-nce"]

    def test_byte_determinism_and_worker_invariance(self, tmp_path):
        config = tiny_grid_config()
        paths_a = run_experiment(config, tmp_path / "a")
        paths_b = run_experiment(config, tmp_path / "b")
        for name in paths_a:
            assert paths_a[name].read_bytes() == paths_b[name].read_bytes()

        parallel = tiny_grid_config(workers=2)
        paths_c = run_experiment(parallel, tmp_path / "c")
        for name in paths_a:
            assert paths_a[name].read_bytes() == paths_c[name].read_bytes()

    def test_timestamp_only_when_not_deterministic(self, tmp_path):
        config = tiny_grid_config(deterministic=False)
        paths = run_experiment(config, tmp_path)
        comments, _, rows = read_csv(paths["records"])
        assert any(c.startswith("# generated:") for c in comments)
        # wall-clock seconds are recorded in this mode
        assert any(float(row[8]) > 0 for row in rows)

    def test_existence_outputs(self, tmp_path):
        config = tiny_grid_config(mode="existence")
        paths = run_experiment(config, tmp_path)
        assert set(paths) == {"records", "summary_existence"}
        _, header, rows = read_csv(paths["summary_existence"])
        assert header == SUMMARY_COLUMNS
        for row in rows:
            frac = float(row[3])
            assert 0.0 <= frac <= 1.0
            assert float(row[4]) <= frac <= float(row[5])

    def test_ideal_proposal_equalizes_the_estimators(self, tmp_path):
        # with the proposal equal to the truth both objectives see the
        # same constant density ratio, so the paired error ratio sits
        # near one with a tight interval
        config = tiny_grid_config(
            proposal_kind="truth", n=200, tau_grid=(5.0,), lambda_grid=(4.0,),
            replications=40, mle_mc_size=50_000, seed=17,
        )
        paths = run_experiment(config, tmp_path)
        _, _, rows = read_csv(paths["summary_mse"])
        by_est = {r[2]: r for r in rows}
        ratio = float(by_est["mcmle-vs-nce"][3])
        lo, hi = float(by_est["mcmle-vs-nce"][4]), float(by_est["mcmle-vs-nce"][5])
        assert lo <= 1.0 <= hi
        assert abs(ratio - 1.0) < 0.2
        for est in ("nce", "mcmle"):
            # MSE against the MLE baseline should sit near 1 + 1/tau
            assert 0.7 < float(by_est[est][3]) < 2.0


class TestGapMode:
    def test_gap_outputs(self, tmp_path):
        config = ExperimentConfig(
            mode="estimator-gap", n=40, replications=2, seed=7,
            m_grid=(500, 2_000), proposal_lambda=2.0, deterministic=True,
            tau_grid=(1.0,), lambda_grid=(2.0,),
        )
        paths = run_experiment(config, tmp_path)
        _, header, rows = read_csv(paths["gap"])
        assert header == GAP_COLUMNS
        assert len(rows) == 2 * 2
        by_seed: dict[str, list] = {}
        for row in rows:
            by_seed.setdefault(row[0], []).append(row)
            assert float(row[3]) >= 0.0
            assert int(row[2]) == 40
        for seed_rows in by_seed.values():
            # the limit is a property of the observed data alone
            limits = {tuple(r[7:10]) for r in seed_rows}
            assert len(limits) == 1
            assert {int(r[1]) for r in seed_rows} == {500, 2_000}


class TestConsistencyMode:
    def test_consistency_outputs(self, tmp_path):
        config = ExperimentConfig(
            mode="consistency-mcmc", n=50, replications=2, seed=11,
            m_grid=(200, 800), proposal_lambda=2.0, mcmc_step_scale=1.0,
            deterministic=True, tau_grid=(1.0,), lambda_grid=(2.0,),
        )
        paths = run_experiment(config, tmp_path)
        _, header, rows = read_csv(paths["consistency"])
        assert header == CONSISTENCY_COLUMNS
        # per seed: fixed-n 2m x 3 samplers x 2 estimators
        #         + growing-n 2m x 2 samplers x 2 estimators
        assert len(rows) == 2 * (2 * 3 * 2 + 2 * 2 * 2)
        studies = {row[0] for row in rows}
        assert studies == {"fixed-n", "growing-n"}
        fixed_samplers = {row[1] for row in rows if row[0] == "fixed-n"}
        growing_samplers = {row[1] for row in rows if row[0] == "growing-n"}
        assert fixed_samplers == {"mcmc", "mcmc-thin10", "iid"}
        assert growing_samplers == {"mcmc", "iid"}
        for row in rows:
            assert row[4] in ("nce", "mcmle")
            assert float(row[6]) >= 0.0 and float(row[7]) >= 0.0
