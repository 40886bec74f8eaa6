"""Monte Carlo check of a design: familywise error and power of the analysis.

Each simulated experiment draws per-instance algorithm summaries
``X_k|l = mu_k + theta_l + e_kl`` with unit-variance normal noise, forms
the paired differences of the design's K hypotheses and runs the
analysis procedure on them. Differences of two algorithms have standard
deviation sqrt(2), so a mean gap of ``d * sqrt(2)`` is a standardised
effect of ``d``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import stdtr

from .analysis import holm_stepdown
from .errors import ConfigError
from .power import DesignSpec, design
from .runner import worker_cap

CHUNK = 500
STRUCTURES = ("all-vs-one", "all-vs-all")
PROCEDURES = ("holm", "bonferroni")


@dataclass
class TruthConfig:
    """True algorithm means for the simulation.

    ``effect = 0`` is the global null. Otherwise, all-vs-one gives every
    non-reference algorithm the gap ``effect`` to the reference; all-vs-all
    spaces the algorithms ``effect`` apart, so adjacent pairs sit exactly
    at ``effect`` and all other pairs above it.
    """

    effect: float = 0.0
    structure: str = "all-vs-one"
    instance_sd: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.effect) and self.effect >= 0):
            raise ConfigError(f"effect must be finite and non-negative, got {self.effect}")
        if self.structure not in STRUCTURES:
            raise ConfigError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        if self.instance_sd < 0:
            raise ConfigError("instance_sd must be non-negative")

    def num_algorithms(self, k: int) -> int:
        if self.structure == "all-vs-one":
            return k + 1
        a = int(round((1 + math.sqrt(1 + 8 * k)) / 2))
        if a * (a - 1) // 2 != k:
            raise ConfigError(f"K={k} is not A(A-1)/2 for any A; use structure 'all-vs-one'")
        return a

    def pairs(self, k: int):
        a = self.num_algorithms(k)
        if self.structure == "all-vs-one":
            return [(0, j) for j in range(1, a)]
        return [(i, j) for i in range(a) for j in range(i + 1, a)]

    def means(self, k: int) -> np.ndarray:
        a = self.num_algorithms(k)
        gap = self.effect * math.sqrt(2.0)
        if self.structure == "all-vs-one":
            return np.array([0.0] + [-gap] * (a - 1))
        return -gap * np.arange(a, dtype=float)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown truth fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ValidationReport:
    n_sim: int
    n_instances: int
    num_comparisons: int
    procedure: str
    truth: dict
    fwer: float
    fwer_se: float
    mean_power: float | None
    mean_power_se: float | None
    per_pair_rejection: list[float] = field(default_factory=list)
    per_rank_rejection: list[float] = field(default_factory=list)
    per_rank_se: list[float] = field(default_factory=list)
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def _binom_se(p, n):
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _simulate_chunk(seed, chunk, size, n, means, pairs, alpha_f, alternative, procedure, inst_sd):
    rng = np.random.default_rng([int(seed), chunk])
    a = len(means)
    theta = rng.standard_normal((size, n, 1)) * inst_sd
    x = means[None, None, :] + theta + rng.standard_normal((size, n, a))
    pi = np.array([p[0] for p in pairs])
    pj = np.array([p[1] for p in pairs])
    diff = x[:, :, pi] - x[:, :, pj]  # (size, n, K)
    mean = diff.mean(axis=1)
    sd = diff.std(axis=1, ddof=1)
    t = mean / (sd / math.sqrt(n))
    if alternative == "two-sided":
        pv = 2.0 * stdtr(n - 1, -np.abs(t))
    else:
        pv = stdtr(n - 1, -t)
    k = len(pairs)
    index = {pair: q for q, pair in enumerate(pairs)}
    reject = np.zeros((size, k), dtype=bool)
    by_rank = np.zeros((size, k), dtype=bool)
    for s in range(size):
        if procedure == "bonferroni":
            rej = pv[s] <= alpha_f / k
            reject[s] = rej
            by_rank[s] = np.sort(rej)[::-1]
            continue
        rows = holm_stepdown([(pairs[q], float(pv[s, q])) for q in range(k)], alpha_f)
        for row in rows:
            reject[s, index[row.pair]] = row.reject
            by_rank[s, row.rank - 1] = row.reject
    return reject, by_rank


def validate_design(spec: DesignSpec, truth: TruthConfig, n_sim: int = 10_000, seed: int = 0,
                    workers: int = 1, procedure: str = "holm",
                    n_instances: int | None = None) -> ValidationReport:
    """Simulate ``n_sim`` experiments at the design's N and tally rejections.

    Simulations are split into fixed chunks seeded by (seed, chunk index),
    so the aggregate does not depend on ``workers``.
    """
    if n_sim < 1000:
        raise ConfigError(f"n_sim must be at least 1000, got {n_sim}")
    if procedure not in PROCEDURES:
        raise ConfigError(f"procedure must be one of {PROCEDURES}, got {procedure!r}")
    k = spec.num_comparisons
    n = design(spec).n_instances if n_instances is None else int(n_instances)
    if n < 2:
        raise ConfigError("need at least 2 instances")
    pairs = truth.pairs(k)
    means = truth.means(k)
    sizes = [min(CHUNK, n_sim - start) for start in range(0, n_sim, CHUNK)]

    def job(c):
        return _simulate_chunk(seed, c, sizes[c], n, means, pairs, spec.alpha_f,
                               spec.alternative, procedure, truth.instance_sd)

    workers = worker_cap(workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(c) for c in range(len(sizes))]
    reject = np.concatenate([p[0] for p in parts])
    by_rank = np.concatenate([p[1] for p in parts])

    gaps = np.array([means[i] - means[j] for i, j in pairs])
    null = gaps == 0
    false_rej = reject[:, null].any(axis=1) if null.any() else np.zeros(n_sim, bool)
    fwer = float(false_rej.mean())
    per_pair = reject.mean(axis=0)
    if (~null).any():
        per_sim_power = reject[:, ~null].mean(axis=1)
        mean_power = float(per_sim_power.mean())
        mean_power_se = float(per_sim_power.std(ddof=1) / math.sqrt(n_sim))
    else:
        mean_power = mean_power_se = None
    per_rank = by_rank.mean(axis=0)
    return ValidationReport(
        n_sim=n_sim,
        n_instances=n,
        num_comparisons=k,
        procedure=procedure,
        truth=truth.to_dict(),
        fwer=fwer,
        fwer_se=_binom_se(fwer, n_sim),
        mean_power=mean_power,
        mean_power_se=mean_power_se,
        per_pair_rejection=[float(x) for x in per_pair],
        per_rank_rejection=[float(x) for x in per_rank],
        per_rank_se=[_binom_se(float(x), n_sim) for x in per_rank],
        seed=seed,
    )
