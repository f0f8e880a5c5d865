"""Replication engine for the two-stage adaptive design.

Randomness is counter based: the Philox stream of replication ``r`` and stage
``s`` is keyed by ``(master_seed, r)`` with ``s`` in the counter, and subject
``i`` consumes exactly the ``i``-th 64-bit word of that stream (one uniform,
mapped to a normal by the inverse CDF). Any replication can therefore be
rebuilt in isolation, and results do not depend on how replications are
scheduled.

Replications are processed in fixed blocks of :data:`BLOCK` so vectorised
arithmetic sees the same batches whatever the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import ndtri

from . import __version__
from .design import DesignConfig, design_fisher_info, resolve_n1
from .information import (
    ALL_KINDS,
    InfoMeasureKind,
    incremental_expected_means,
    incremental_observed_stage_means,
    incremental_observed_subject_stats,
    observed_info_means,
)
from .likelihood import TwoStageSample, is_boundary, mle_means
from .models import MeanModel

BLOCK = 256
_MASK64 = (1 << 64) - 1
K = InfoMeasureKind


def worker_count(threads: int | None = None) -> int:
    """Worker threads: explicit value, else ``$THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def uniform_stream(master_seed: int, rep: int, stage: int, n: int) -> np.ndarray:
    """First ``n`` uniforms in ``(0, 1)`` of the (seed, replication, stage) stream."""
    key = np.array([master_seed & _MASK64, rep & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, stage, 0], dtype=np.uint64)
    raw = np.random.Philox(key=key, counter=counter).random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normal_stream(master_seed: int, rep: int, stage: int, n: int) -> np.ndarray:
    return ndtri(uniform_stream(master_seed, rep, stage, n))


def draw_sample(
    model: MeanModel, config: DesignConfig, n1: int, theta_true: float, master_seed: int, rep: int
) -> TwoStageSample:
    """Rebuild the full per-subject sample of one replication."""
    from .design import adaptive_dose

    eps1 = config.sigma * normal_stream(master_seed, rep, 1, n1)
    y1 = model.eta(config.x1, theta_true) + eps1
    x2 = adaptive_dose(model, config.x1, np.mean(y1), config.interval)
    eps2 = config.sigma * normal_stream(master_seed, rep, 2, config.n - n1)
    y2 = model.eta(x2, theta_true) + eps2
    return TwoStageSample(config.x1, float(x2), y1, y2, config.sigma)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationResult:
    theta1_hat: float
    x2_hat: float
    theta_hat: float
    norm_values: dict
    stats: dict
    degenerate_flags: frozenset
    boundary_mle: bool


@dataclass
class ExperimentResult:
    """Columnar results of ``R`` replications of one scenario.

    ``norms`` and ``stats`` map every :class:`InfoMeasureKind` to an array of
    length ``R``; ``stats`` holds NaN where the norm is degenerate (not
    finite or not positive). ``norms_true`` are the random norms evaluated
    at the true parameter, kept for diagnostics. The stage-wise incremental
    observed kind is recorded but is not a valid norm (its scaled limit is a
    chi-square mixture), so tail tables leave it out.
    """

    model: MeanModel
    config: DesignConfig
    theta_true: float
    master_seed: int
    n1: int
    fisher_norm: float | None
    theta1_hat: np.ndarray
    x2_hat: np.ndarray
    theta_hat: np.ndarray
    norms: dict
    stats: dict
    norms_true: dict
    u_inv_sq: np.ndarray
    boundary: np.ndarray
    version: str = field(default=__version__)

    @property
    def reps(self) -> int:
        return self.theta_hat.size

    def __len__(self) -> int:
        return self.reps

    def __getitem__(self, i: int) -> ReplicationResult:
        norm_values = {k: float(self.norms[k][i]) for k in ALL_KINDS}
        stats = {k: float(self.stats[k][i]) for k in ALL_KINDS if np.isfinite(self.stats[k][i])}
        return ReplicationResult(
            theta1_hat=float(self.theta1_hat[i]),
            x2_hat=float(self.x2_hat[i]),
            theta_hat=float(self.theta_hat[i]),
            norm_values=norm_values,
            stats=stats,
            degenerate_flags=frozenset(k for k in ALL_KINDS if k not in stats),
            boundary_mle=bool(self.boundary[i]),
        )

    def __iter__(self) -> Iterator[ReplicationResult]:
        return (self[i] for i in range(self.reps))

    def degenerate_count(self, kind: InfoMeasureKind) -> int:
        return int(np.count_nonzero(~np.isfinite(self.stats[K(kind)])))

    @property
    def boundary_count(self) -> int:
        return int(np.count_nonzero(self.boundary))


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

def _normalise(norm: np.ndarray, err: np.ndarray) -> np.ndarray:
    ok = np.isfinite(norm) & (norm > 0)
    with np.errstate(invalid="ignore"):
        return np.where(ok, np.sqrt(np.where(ok, norm, 1.0)) * err, np.nan)


def _run_block(model, config, n1, theta_true, master_seed, reps, fisher_norm, fisher_at):
    n2 = config.n - n1
    sigma = config.sigma
    x1 = config.x1
    m = reps.size
    zbar1 = np.empty(m)
    zbar2 = np.empty(m)
    ssz1 = np.empty(m)
    ssz2 = np.empty(m)
    for j, r in enumerate(reps.tolist()):
        z = normal_stream(master_seed, r, 1, n1)
        zbar1[j] = z.mean()
        ssz1[j] = np.sum((z - zbar1[j]) ** 2)
        z = normal_stream(master_seed, r, 2, n2)
        zbar2[j] = z.mean()
        ssz2[j] = np.sum((z - zbar2[j]) ** 2)

    ybar1 = model.eta(x1, theta_true) + sigma * zbar1
    theta1 = np.asarray(model.stage1_mle(x1, ybar1), dtype=float)
    x2 = np.asarray(model.optimal_dose(theta1, config.interval), dtype=float)
    ybar2 = model.eta(x2, theta_true) + sigma * zbar2
    ss1 = sigma**2 * ssz1
    ss2 = sigma**2 * ssz2
    theta_hat = np.asarray(mle_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma), dtype=float)

    def random_norms(theta):
        return {
            K.OBSERVED: observed_info_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma, theta),
            K.INCREMENTAL_OBSERVED_SUBJECT: incremental_observed_subject_stats(
                model, x1, x2, n1, n2, ybar1, ybar2, ss1, ss2, sigma, theta
            ),
            K.INCREMENTAL_OBSERVED_STAGE: incremental_observed_stage_means(
                model, x1, x2, n1, n2, ybar1, ybar2, sigma, theta
            ),
            K.INCREMENTAL_EXPECTED: incremental_expected_means(model, x1, x2, n1, n2, sigma, theta)
            * np.ones(m),
        }

    norms = random_norms(theta_hat)
    if fisher_at == "true":
        norms[K.EXPECTED_FISHER] = np.full(m, fisher_norm)
    else:
        cfg = config.with_n1(n1)
        norms[K.EXPECTED_FISHER] = np.array(
            [design_fisher_info(model, cfg, t).total for t in theta_hat.tolist()]
        )
    err = theta_hat - theta_true
    stats = {k: _normalise(v, err) for k, v in norms.items()}
    u_inv_sq = model.deta(x2, theta_true) ** 2 / sigma**2
    return {
        "theta1_hat": theta1,
        "x2_hat": x2,
        "theta_hat": theta_hat,
        "norms": norms,
        "stats": stats,
        "norms_true": random_norms(theta_true),
        "u_inv_sq": np.asarray(u_inv_sq, dtype=float) * np.ones(m),
        "boundary": np.asarray(is_boundary(model, theta_hat)),
    }


def _concat(parts: list[dict]) -> dict:
    out = {}
    for key, first in parts[0].items():
        if isinstance(first, dict):
            out[key] = {k: np.concatenate([p[key][k] for p in parts]) for k in first}
        else:
            out[key] = np.concatenate([p[key] for p in parts])
    return out


def run_experiment(
    model: MeanModel,
    config: DesignConfig,
    theta_true: float | None = None,
    R: int = 1,
    master_seed: int = 0,
    threads: int | None = None,
    fisher_at: str = "true",
    first_rep: int = 0,
) -> ExperimentResult:
    """Run replications ``first_rep, ..., first_rep + R - 1`` of one scenario.

    ``fisher_at`` selects the Fisher benchmark: ``"true"`` (one deterministic
    ``i(xi_A, theta_true)`` for every replication) or ``"mle"`` (the design
    information re-evaluated at each replication's MLE).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if fisher_at not in ("true", "mle"):
        raise ValueError("fisher_at must be 'true' or 'mle'")
    theta_true = config.theta_true if theta_true is None else float(theta_true)
    n1 = resolve_n1(model, config)
    fisher_norm = design_fisher_info(model, config.with_n1(n1), theta_true).total
    reps = np.arange(first_rep, first_rep + R, dtype=np.int64)
    # block boundaries depend on absolute replication index only
    starts = np.unique(np.concatenate([[reps[0]], reps[reps % BLOCK == 0]]))
    blocks = np.split(reps, np.searchsorted(reps, starts[1:]))

    def job(block):
        return _run_block(model, config, n1, theta_true, master_seed, block, fisher_norm, fisher_at)

    workers = worker_count(threads)
    if workers == 1 or len(blocks) == 1:
        parts = [job(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, blocks))
    cols = _concat(parts)
    return ExperimentResult(
        model=model,
        config=config,
        theta_true=theta_true,
        master_seed=master_seed,
        n1=n1,
        fisher_norm=fisher_norm if fisher_at == "true" else None,
        **cols,
    )


def simulate_one(
    model: MeanModel,
    config: DesignConfig,
    theta_true: float | None = None,
    master_seed: int = 0,
    index: int = 0,
    fisher_at: str = "true",
) -> ReplicationResult:
    """One replication, reconstructed from its own random substream."""
    res = run_experiment(
        model, config, theta_true, 1, master_seed, threads=1, fisher_at=fisher_at, first_rep=index
    )
    return res[0]


@dataclass(frozen=True)
class RunManifest:
    family: str
    config: DesignConfig
    reps: int
    master_seed: int
    n1_star: int | None
    version: str = __version__

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("R must be >= 1")

    def lines(self) -> list[str]:
        c = self.config
        return [
            f"model = {self.family}",
            f"x1 = {c.x1!r}",
            f"a = {c.interval.a!r}",
            f"b = {c.interval.b!r}",
            f"theta = {c.theta_true!r}",
            f"sigma = {c.sigma!r}",
            f"n = {c.n}",
            f"n1 = {c.n1}",
            f"n1_star = {'' if self.n1_star is None else self.n1_star}",
            f"reps = {self.reps}",
            f"seed = {self.master_seed}",
            f"version = {self.version}",
        ]
