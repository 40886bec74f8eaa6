"""Adaptive allocation of repeated runs on a single problem instance.

Each algorithm is first run ``n0`` times. While some pairwise standard
error exceeds ``se_star`` and the instance budget ``n_max`` is not spent,
one more run is given to an algorithm of the pair with the largest
standard error: the one whose share of runs lags the pair's optimal
sample-size ratio.

Three estimators of the per-instance difference are supported:

``simple``
    ``mean_i - mean_j``
``percent-all-vs-one``
    ``1 - mean_j / mean_ref`` (Fieller-type standard error)
``percent-all-vs-all``
    ``(mean_i - mean_j) / grand_mean`` (Fieller-type standard error)

An arbitrary two-sample statistic can be used instead, with standard
errors from the bootstrap.
"""
from __future__ import annotations

import math
import statistics
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import (
    ApproximationWarning,
    ConfigError,
    InsufficientDataError,
    PositivityError,
    RunError,
)
from .runner import RunRecord, derive_seed

COMPARISONS = ("simple", "percent-all-vs-one", "percent-all-vs-all")
SUMMARIES = ("mean", "median")
_MODE = {"simple": kernels.SIMPLE, "percent-all-vs-one": kernels.PERCENT_ONE,
         "percent-all-vs-all": kernels.PERCENT_ALL}
TIE_TOL = 1e-12


@dataclass
class ObservationSet:
    algorithm_id: str
    instance_id: str
    values: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.values) != len(self.seeds):
            raise ValueError("values and seeds must have the same length")

    def __len__(self):
        return len(self.values)

    def append(self, value, seed):
        self.values.append(float(value))
        self.seeds.append(int(seed))

    def stats(self) -> "SummaryStats":
        return SummaryStats.from_values(self.values)

    def summary(self, how="mean") -> float:
        if not self.values:
            raise InsufficientDataError(f"no observations for {self.algorithm_id} on {self.instance_id}")
        if how == "median":
            return float(statistics.median(self.values))
        return math.fsum(self.values) / len(self.values)


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    sd: float

    def __post_init__(self):
        if self.n < 2:
            raise InsufficientDataError(f"need at least 2 observations, got {self.n}")
        if self.sd < 0:
            raise ValueError("sd must be non-negative")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "SummaryStats":
        if len(values) < 2:
            raise InsufficientDataError(f"need at least 2 observations, got {len(values)}")
        return cls(len(values), statistics.fmean(values), statistics.stdev(values))

    @property
    def var(self):
        return self.sd * self.sd


@dataclass
class PairEstimate:
    pair: tuple[str, str]
    phi_hat: float
    se: float
    ratio_opt: float


@dataclass
class SamplingConfig:
    comparison: str = "simple"
    reference_id: str | None = None
    se_star: float = 0.05
    n0: int = 10
    n_max: int | None = None  # default 50 * A
    bootstrap_resamples: int = 999
    summary: str = "mean"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.comparison not in COMPARISONS:
            raise ConfigError(f"comparison must be one of {COMPARISONS}, got {self.comparison!r}")
        if self.comparison == "percent-all-vs-one" and self.reference_id is None:
            raise ConfigError("percent-all-vs-one needs a reference_id")
        if self.comparison == "percent-all-vs-all" and self.reference_id is not None:
            raise ConfigError("percent-all-vs-all takes no reference_id")
        if not (self.se_star > 0 and math.isfinite(self.se_star)):
            raise ConfigError(f"se_star must be positive, got {self.se_star}")
        if int(self.n0) != self.n0 or self.n0 < 3:
            raise ConfigError(f"n0 must be an integer >= 3, got {self.n0}")
        if self.n_max is not None and (int(self.n_max) != self.n_max or self.n_max < 1):
            raise ConfigError(f"n_max must be a positive integer, got {self.n_max}")
        if self.bootstrap_resamples < 100:
            raise ConfigError("bootstrap_resamples must be at least 100")
        if self.summary not in SUMMARIES:
            raise ConfigError(f"summary must be one of {SUMMARIES}, got {self.summary!r}")

    def budget(self, num_algorithms: int) -> int:
        n_max = 50 * num_algorithms if self.n_max is None else int(self.n_max)
        if n_max < num_algorithms * self.n0:
            raise ConfigError(
                f"n_max={n_max} is below the initial batch A*n0={num_algorithms * self.n0}"
            )
        return n_max

    @property
    def all_vs_one(self):
        return self.reference_id is not None

    def to_dict(self):
        return {
            "comparison": self.comparison,
            "reference_id": self.reference_id,
            "se_star": self.se_star,
            "n0": self.n0,
            "n_max": self.n_max,
            "bootstrap_resamples": self.bootstrap_resamples,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sampling fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class InstanceSampleReport:
    instance_id: str
    observations: dict[str, ObservationSet]
    pair_estimates: list[PairEstimate]
    total_runs: int
    budget_exhausted: bool
    iterations: int
    max_se_history: list[float] = field(default_factory=list)

    def counts(self):
        return {a: len(o) for a, o in self.observations.items()}

    def max_se(self):
        return max((p.se for p in self.pair_estimates), default=0.0)

    def to_dict(self):
        return {
            "instance_id": self.instance_id,
            "total_runs": self.total_runs,
            "budget_exhausted": self.budget_exhausted,
            "iterations": self.iterations,
            "observations": {
                a: {"values": o.values, "seeds": o.seeds} for a, o in self.observations.items()
            },
            "pair_estimates": [
                {"pair": list(p.pair), "phi_hat": p.phi_hat, "se": p.se, "ratio_opt": p.ratio_opt}
                for p in self.pair_estimates
            ],
            "max_se_history": self.max_se_history,
        }

    @classmethod
    def from_dict(cls, data):
        inst = data["instance_id"]
        obs = {
            a: ObservationSet(a, inst, [float(v) for v in o["values"]], [int(s) for s in o["seeds"]])
            for a, o in data["observations"].items()
        }
        pairs = [
            PairEstimate(tuple(p["pair"]), float(p["phi_hat"]), float(p["se"]), float(p["ratio_opt"]))
            for p in data["pair_estimates"]
        ]
        return cls(inst, obs, pairs, int(data["total_runs"]), bool(data["budget_exhausted"]),
                   int(data["iterations"]), [float(x) for x in data.get("max_se_history", [])])


# -- standard errors and optimal ratios ------------------------------------

def _need(*stats):
    for s in stats:
        if s.n < 2:
            raise InsufficientDataError(f"need at least 2 observations, got {s.n}")


def se_simple(si: SummaryStats, sj: SummaryStats) -> float:
    _need(si, sj)
    return math.sqrt(si.var / si.n + sj.var / sj.n)


def _check_denominator(mean, label):
    if not (mean > 0 and math.isfinite(mean)):
        raise PositivityError(f"{label} mean must be strictly positive, got {mean}")


def _warn_if_unstable(mean, se_of_mean, label):
    if se_of_mean >= 0.5 * mean:
        warnings.warn(
            f"{label} mean {mean:.4g} has standard error {se_of_mean:.4g}; "
            "the ratio standard error is unreliable",
            ApproximationWarning,
            stacklevel=3,
        )


def se_percent_one(s_ref: SummaryStats, sj: SummaryStats) -> float:
    """Standard error of ``1 - mean_j / mean_ref``."""
    _need(s_ref, sj)
    _check_denominator(s_ref.mean, "reference")
    _warn_if_unstable(s_ref.mean, s_ref.sd / math.sqrt(s_ref.n), "reference")
    m1 = s_ref.mean
    c1 = s_ref.var * sj.mean ** 2 / m1 ** 4
    c2 = sj.var / m1 ** 2
    return math.sqrt(c1 / s_ref.n + c2 / sj.n)


def grand_mean(means: Sequence[float]) -> float:
    """Unweighted average of the per-algorithm means."""
    return math.fsum(means) / len(means)


def se_percent_all(i, j, all_stats: Mapping[str, SummaryStats]) -> float:
    """Standard error of ``(mean_i - mean_j) / grand_mean`` over all algorithms."""
    _need(*all_stats.values())
    a = len(all_stats)
    gm = grand_mean([s.mean for s in all_stats.values()])
    _check_denominator(gm, "grand")
    contrib = {k: s.var / s.n for k, s in all_stats.items()}
    _warn_if_unstable(gm, math.sqrt(math.fsum(contrib.values())) / a, "grand")
    phi = (all_stats[i].mean - all_stats[j].mean) / gm
    c1 = (1.0 + phi * phi / a ** 2) / gm ** 2
    others = math.fsum(v for k, v in contrib.items() if k not in (i, j))
    c2 = phi * phi / (gm ** 2 * a ** 2) * others
    return math.sqrt(c1 * (contrib[i] + contrib[j]) + c2)


def ratio_opt(comparison: str, si: SummaryStats, sj: SummaryStats) -> float:
    """Optimal ``n_i / n_j`` for one pair (``si`` is the reference for all-vs-one).

    A zero-variance second algorithm gives ``inf`` (always run the first);
    two zero-variance algorithms give 1.0.
    """
    if comparison not in COMPARISONS:
        raise ConfigError(f"unknown comparison {comparison!r}")
    num = si.sd
    den = sj.sd
    if comparison == "percent-all-vs-one":
        _check_denominator(si.mean, "reference")
        num = si.sd * sj.mean
        den = sj.sd * si.mean
    if den == 0:
        return math.inf if num > 0 else 1.0
    return num / den


def choose_next(pair_max: PairEstimate, counts: Mapping[str, int]) -> str:
    """Algorithm of ``pair_max`` that should receive the next run."""
    i, j = pair_max.pair
    if counts[i] / counts[j] < pair_max.ratio_opt:
        return i
    return j


def comparison_pairs(algorithms: Sequence[str], comparison: str, reference_id=None):
    """Pairs of interest in lexicographic algorithm-index order."""
    algorithms = list(algorithms)
    if len(set(algorithms)) != len(algorithms):
        raise ConfigError("algorithm identifiers must be unique")
    if comparison == "percent-all-vs-one" and reference_id is None:
        raise ConfigError("percent-all-vs-one needs a reference_id")
    if reference_id is not None:
        if comparison == "percent-all-vs-all":
            raise ConfigError("percent-all-vs-all takes no reference_id")
        if reference_id not in algorithms:
            raise ConfigError(f"reference {reference_id!r} is not among the algorithms")
        return [(reference_id, a) for a in algorithms if a != reference_id]
    return [(a, b) for n, a in enumerate(algorithms) for b in algorithms[n + 1:]]


def num_comparisons(num_algorithms: int, all_vs_one: bool) -> int:
    if all_vs_one:
        return num_algorithms - 1
    return num_algorithms * (num_algorithms - 1) // 2


def phi_hat(comparison, mean_i, mean_j, gm=None):
    if comparison == "simple":
        return mean_i - mean_j
    if comparison == "percent-all-vs-one":
        return 1.0 - mean_j / mean_i
    return (mean_i - mean_j) / gm


def bootstrap_se(statistic: Callable[[np.ndarray, np.ndarray], float], obs_i, obs_j,
                 B: int = 999, seed=0, resample=(True, True)) -> float:
    """Bootstrap standard error of ``statistic(obs_i, obs_j)``.

    Both samples are resampled independently with replacement; pass
    ``resample=(True, False)`` to resample only the first one.
    """
    x = np.asarray(obs_i, dtype=float)
    y = np.asarray(obs_j, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise InsufficientDataError("bootstrap needs at least 2 observations per sample")
    if B < 100:
        raise ConfigError("B must be at least 100")
    rng = np.random.default_rng(seed)
    vals = np.empty(B)
    for b in range(B):
        xb = x[rng.integers(0, len(x), len(x))] if resample[0] else x
        yb = y[rng.integers(0, len(y), len(y))] if resample[1] else y
        vals[b] = statistic(xb, yb)
    if np.all(vals == vals[0]):
        return 0.0
    return float(np.std(vals, ddof=1))


# -- the adaptive loop -------------------------------------------------------

class _Tracker:
    """Running per-algorithm n / mean / variance (Welford) plus pair SEs."""

    def __init__(self, algorithms, pairs, comparison, all_vs_one):
        self.algorithms = list(algorithms)
        self.index = {a: k for k, a in enumerate(self.algorithms)}
        self.pairs = pairs
        self.comparison = comparison
        self.mode = _MODE[comparison]
        if comparison == "simple" and all_vs_one:
            self.mode = kernels.SIMPLE
        a = len(self.algorithms)
        self.n = np.zeros(a)
        self.mean = np.zeros(a)
        self.m2 = np.zeros(a)
        self.pi = np.array([self.index[p[0]] for p in pairs], dtype=np.intp)
        self.pj = np.array([self.index[p[1]] for p in pairs], dtype=np.intp)
        self.se = np.zeros(len(pairs))
        self.warned = False

    def add(self, k, value):
        self.n[k] += 1.0
        delta = value - self.mean[k]
        self.mean[k] += delta / self.n[k]
        self.m2[k] += delta * (value - self.mean[k])

    def var(self):
        return self.m2 / (self.n - 1.0)

    def sd(self, k):
        return math.sqrt(self.m2[k] / (self.n[k] - 1.0))

    def grand_mean(self):
        total = 0.0
        for m in self.mean:
            total += m
        return total / len(self.mean)

    def update_se(self):
        var = self.var()
        if self.mode == kernels.PERCENT_ONE:
            ref = self.pi[0]
            _check_denominator(self.mean[ref], "reference")
            if not self.warned and math.sqrt(var[ref] / self.n[ref]) >= 0.5 * self.mean[ref]:
                self._warn()
        elif self.mode == kernels.PERCENT_ALL:
            gm = self.grand_mean()
            _check_denominator(gm, "grand")
            se_gm = math.sqrt(float(np.sum(var / self.n))) / len(self.mean)
            if not self.warned and se_gm >= 0.5 * gm:
                self._warn()
        kernels.pair_se(self.mode, self.n, self.mean, var, self.pi, self.pj, self.se)
        return self.se

    def _warn(self):
        self.warned = True
        warnings.warn("denominator mean is poorly determined; percent-difference "
                      "standard errors are unreliable", ApproximationWarning, stacklevel=4)

    def ratio(self, p):
        i, j = self.pi[p], self.pj[p]
        num = self.sd(i)
        den = self.sd(j)
        if self.mode == kernels.PERCENT_ONE:
            num *= self.mean[j]
            den *= self.mean[i]
        if den == 0:
            return math.inf if num > 0 else 1.0
        return num / den

    def phi(self, p):
        gm = self.grand_mean() if self.mode == kernels.PERCENT_ALL else None
        return phi_hat(self.comparison, self.mean[self.pi[p]], self.mean[self.pj[p]], gm)

    def argmax_pair(self):
        top = float(self.se.max())
        for p in range(len(self.se)):
            if self.se[p] >= top - TIE_TOL:
                return p, top
        return 0, top  # pragma: no cover

    def pick(self, p):
        """Algorithm index to run next for pair ``p``."""
        i, j = int(self.pi[p]), int(self.pj[p])
        var = self.var()
        if self.mode == kernels.PERCENT_ALL and var[i] == 0 and var[j] == 0:
            # only third-party variance feeds this pair's error
            gain = [var[k] / (self.n[k] * (self.n[k] + 1.0)) if k not in (i, j) else -1.0
                    for k in range(len(self.algorithms))]
            return int(np.argmax(gain))
        if self.n[i] / self.n[j] < self.ratio(p):
            return i
        return j

    def estimates(self):
        self.update_se()
        return [
            PairEstimate(pair, float(self.phi(p)), float(self.se[p]), float(self.ratio(p)))
            for p, pair in enumerate(self.pairs)
        ]


class _BootstrapTracker(_Tracker):
    """Pair SEs from the bootstrap of a user statistic."""

    def __init__(self, algorithms, pairs, statistic, B, seed, obs):
        super().__init__(algorithms, pairs, "simple", False)
        self.statistic = statistic
        self.B = B
        self.seed = seed
        self.obs = obs
        self.step = 0

    def _seed(self, *extra):
        return [int(self.seed), self.step, *extra]

    def update_se(self):
        for p, (i, j) in enumerate(self.pairs):
            self.se[p] = bootstrap_se(self.statistic, self.obs[i].values, self.obs[j].values,
                                      self.B, self._seed(p))
        self.step += 1
        return self.se

    def pick(self, p):
        i, j = self.pairs[p]
        xi, xj = self.obs[i].values, self.obs[j].values
        se_i = bootstrap_se(self.statistic, xi, xj, self.B, self._seed(p, 1), (True, False))
        se_j = bootstrap_se(self.statistic, xi, xj, self.B, self._seed(p, 2), (False, True))
        gain_i = se_i ** 2 / (len(xi) + 1.0)
        gain_j = se_j ** 2 / (len(xj) + 1.0)
        return self.index[i] if gain_i >= gain_j else self.index[j]

    def ratio(self, p):
        return float("nan")

    def phi(self, p):
        i, j = self.pairs[p]
        return float(self.statistic(np.asarray(self.obs[i].values), np.asarray(self.obs[j].values)))


def _call_runner(runner, algorithm_id, instance_id, seed):
    try:
        rec = runner(algorithm_id, instance_id, seed)
    except Exception as exc:  # a crashing runner is a failed run
        return None, f"{type(exc).__name__}: {exc}"
    if isinstance(rec, RunRecord):
        if rec.ok and rec.value is not None and math.isfinite(rec.value):
            return float(rec.value), ""
        return None, f"status={rec.status} {rec.diagnostics}".strip()
    value = float(rec)
    if not math.isfinite(value):
        return None, f"non-finite value {value}"
    return value, ""


def _one_run(runner, algorithm_id, instance_id, seed_fn, alg_index, run_index):
    seed = seed_fn(alg_index, run_index, 0)
    value, why = _call_runner(runner, algorithm_id, instance_id, seed)
    if value is not None:
        return value, seed
    retry = seed_fn(alg_index, run_index, 1)
    value, why2 = _call_runner(runner, algorithm_id, instance_id, retry)
    if value is not None:
        return value, retry
    raise RunError(algorithm_id, instance_id, retry, f"{why}; retry: {why2}")


def sample_instance(
    instance_id,
    algorithms: Sequence[str],
    runner: Callable,
    config: SamplingConfig,
    *,
    seed: int = 0,
    instance_index: int = 0,
    statistic: Callable | None = None,
    workers: int = 1,
) -> InstanceSampleReport:
    """Run every algorithm on one instance until all pair SEs are below ``se_star``.

    ``runner(algorithm_id, instance_id, seed)`` returns a :class:`RunRecord`
    or a plain number. Run seeds are derived from ``(seed, algorithm
    index, instance_index, run index)``; a failed run is retried once with a
    fresh seed before :class:`RunError` aborts the instance.

    When ``statistic`` is given, pair standard errors come from the
    bootstrap of ``statistic(values_i, values_j)`` and the next run goes to
    the algorithm whose resampling variance shrinks most from one more run.
    """
    config.validate()
    algorithms = list(algorithms)
    if len(algorithms) < 2:
        raise ConfigError("need at least two algorithms")
    pairs = comparison_pairs(algorithms, config.comparison, config.reference_id)
    n_max = config.budget(len(algorithms))
    obs = {a: ObservationSet(a, instance_id) for a in algorithms}

    def seed_fn(alg_index, run_index, attempt):
        return derive_seed(seed, alg_index, instance_index, run_index, attempt)

    if statistic is None:
        tracker = _Tracker(algorithms, pairs, config.comparison, config.all_vs_one)
    else:
        tracker = _BootstrapTracker(algorithms, pairs, statistic, config.bootstrap_resamples,
                                    derive_seed(seed, 0, instance_index, 0, 2), obs)

    jobs = [(k, a, r) for k, a in enumerate(algorithms) for r in range(config.n0)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda job: _one_run(runner, job[1], instance_id, seed_fn, job[0], job[2]), jobs))
    else:
        results = [_one_run(runner, a, instance_id, seed_fn, k, r) for k, a, r in jobs]
    for (k, a, _), (value, s) in zip(jobs, results):
        obs[a].append(value, s)
        tracker.add(k, value)

    total = len(jobs)
    iterations = 0
    tracker.update_se()
    p, top = tracker.argmax_pair()
    history = [top]
    while top > config.se_star and total < n_max:
        k = tracker.pick(p)
        alg = algorithms[k]
        value, s = _one_run(runner, alg, instance_id, seed_fn, k, len(obs[alg]))
        obs[alg].append(value, s)
        tracker.add(k, value)
        total += 1
        iterations += 1
        tracker.update_se()
        p, top = tracker.argmax_pair()
        history.append(top)

    estimates = tracker.estimates() if statistic is None else [
        PairEstimate(pair, tracker.phi(q), float(tracker.se[q]), float("nan"))
        for q, pair in enumerate(pairs)
    ]
    return InstanceSampleReport(
        instance_id=instance_id,
        observations=obs,
        pair_estimates=estimates,
        total_runs=total,
        budget_exhausted=bool(top > config.se_star),
        iterations=iterations,
        max_se_history=history,
    )


@dataclass
class AllocationPlan:
    counts: dict[str, int]
    total_runs: int
    max_se: float
    budget_exhausted: bool


def plan_allocation(means: Mapping[str, float], sds: Mapping[str, float],
                    config: SamplingConfig) -> AllocationPlan:
    """Run counts the adaptive loop reaches when the true means and sds are known.

    Same loop, stopping rule and decision rule as :func:`sample_instance`,
    with the sample statistics replaced by the given values; useful for
    budgeting and for checking allocations against exhaustive search.
    """
    config.validate()
    algorithms = list(means)
    pairs = comparison_pairs(algorithms, config.comparison, config.reference_id)
    n_max = config.budget(len(algorithms))
    tracker = _Tracker(algorithms, pairs, config.comparison, config.all_vs_one)
    tracker.n[:] = config.n0
    tracker.mean[:] = [means[a] for a in algorithms]
    tracker.m2[:] = [sds[a] ** 2 * (config.n0 - 1) for a in algorithms]
    var = tracker.var().copy()

    def bump(k):
        tracker.n[k] += 1.0
        tracker.m2[k] = var[k] * (tracker.n[k] - 1.0)

    total = config.n0 * len(algorithms)
    tracker.update_se()
    p, top = tracker.argmax_pair()
    while top > config.se_star and total < n_max:
        bump(tracker.pick(p))
        total += 1
        tracker.update_se()
        p, top = tracker.argmax_pair()
    counts = {a: int(tracker.n[k]) for k, a in enumerate(algorithms)}
    return AllocationPlan(counts, total, top, bool(top > config.se_star))
