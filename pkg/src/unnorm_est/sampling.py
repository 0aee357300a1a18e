"""Samplers for observed and artificial data, with reproducible streams.

Three generators: factorized half-normal draws from the proposal,
exact rejection sampling of the truncated-Gaussian truth, and a
random-walk Metropolis chain targeting the proposal law for the
ergodic-regime studies. Streams are counter-based (Philox) and keyed
by (seed, stream_id), so a replication's datasets are reproducible
bit for bit and independent across stream ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import TruncGaussParams

Array = np.ndarray


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by (seed, stream_id).

    The same pair always reproduces the same sequence; distinct
    stream_ids give statistically independent streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        key = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(self.stream_id & 0xFFFFFFFF, self.stream_id >> 32),
        )
        return np.random.Generator(np.random.Philox(key))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or a numpy Generator")


@dataclass(frozen=True, eq=False)
class TruthSample:
    """Accepted draws plus the rejection bookkeeping.

    acceptance_rate is an unbiased estimate of the positive-orthant mass
    of the untruncated Gaussian, so oracle tests reuse it as a Monte
    Carlo estimate of the normalising constant.
    """

    points: Array
    acceptance_rate: float
    n_proposed: int


@dataclass(frozen=True, eq=False)
class ChainDiagnostics:
    acceptance_rate: float
    lag_autocovariances: Array

    def __post_init__(self) -> None:
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError("acceptance_rate must lie in [0, 1]")


def sample_proposal_iid(lam: float, p: int, count: int, rng) -> Array:
    """IID draws from N(0, lambda I) truncated to (0, inf)^p.

    Coordinates are independent half-normals, sampled as |z| sqrt(lambda).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if count < 1:
        raise ValueError("count must be at least 1")
    gen = _as_generator(rng)
    return np.abs(gen.standard_normal((count, p))) * np.sqrt(lam)


def sample_truth_iid(
    params: TruncGaussParams,
    count: int,
    rng,
    min_acceptance: float = 1e-4,
) -> TruthSample:
    """Exact rejection sampling of the truncated-Gaussian truth.

    Draws from N(mu, sigma) and keeps rows with all coordinates positive.
    Aborts once the online acceptance estimate falls below
    min_acceptance, rather than looping forever on a hopeless target.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    gen = _as_generator(rng)
    chol = np.linalg.cholesky(params.sigma)
    kept: list[Array] = []
    got = 0
    proposed = 0
    while got < count:
        rate_est = got / proposed if proposed else 1.0
        batch = int(min(5_000_000, max(8192, 1.3 * (count - got) / max(rate_est, 1e-3))))
        z = gen.standard_normal((batch, params.p))
        draws = params.mu + z @ chol.T
        mask = np.all(draws > 0.0, axis=1)
        accepted = draws[mask]
        proposed += batch
        got += accepted.shape[0]
        kept.append(accepted)
        if proposed >= 500_000 and got / proposed < min_acceptance:
            raise RuntimeError(
                "rejection sampler aborted: acceptance "
                f"{got / proposed:.2e} below {min_acceptance:.0e} after "
                f"{proposed} proposals (mu={params.mu}, sigma diag={np.diag(params.sigma)})"
            )
    points = np.concatenate(kept, axis=0)[:count]
    return TruthSample(
        points=points,
        acceptance_rate=got / proposed,
        n_proposed=proposed,
    )


def rw_metropolis_psi(
    lam: float,
    p: int,
    step: float,
    count: int,
    rng,
    thin: int = 1,
) -> tuple[Array, ChainDiagnostics]:
    """Random-walk Metropolis chain targeting N(0, lambda I) on (0, inf)^p.

    Proposals falling outside the positive orthant have zero target
    density and are rejected, which preserves detailed balance for the
    truncated law. Returns the raw correlated chain (every thin-th state
    of count*thin updates) plus acceptance and lag-autocovariance
    diagnostics of the first coordinate.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if count < 1 or thin < 1:
        raise ValueError("count and thin must be at least 1")
    gen = _as_generator(rng)
    total = count * thin
    x = np.abs(gen.standard_normal(p)) * np.sqrt(lam)
    log_target = -0.5 * float(x @ x) / lam

    increments = gen.standard_normal((total, p)) * step
    log_us = np.log(gen.random(total))
    out = np.empty((count, p))
    accepted = 0
    kept = 0
    for t in range(total):
        cand = x + increments[t]
        if np.all(cand > 0.0):
            cand_log_target = -0.5 * float(cand @ cand) / lam
            if cand_log_target - log_target >= log_us[t]:
                x = cand
                log_target = cand_log_target
                accepted += 1
        if (t + 1) % thin == 0:
            out[kept] = x
            kept += 1
    max_lag = min(50, count - 1)
    diag = ChainDiagnostics(
        acceptance_rate=accepted / total,
        lag_autocovariances=lag_autocovariances(out[:, 0], max_lag),
    )
    return out, diag


def lag_autocovariances(series: Array, max_lag: int) -> Array:
    """Empirical autocovariances gamma_0..gamma_max_lag of a scalar series."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if max_lag >= n:
        raise ValueError("max_lag must be below the series length")
    centered = series - series.mean()
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = centered[: n - k] @ centered[k:] / n
    return out


def batch_means_se(series: Array, n_batches: int = 30) -> float:
    """Markov-chain standard error of the mean via non-overlapping batches."""
    series = np.asarray(series, dtype=float)
    size = series.size // n_batches
    if size < 2:
        raise ValueError("series too short for the requested batch count")
    trimmed = series[: size * n_batches].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))
