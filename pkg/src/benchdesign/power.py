"""Power and number-of-instances calculations for paired comparisons.

All designs are expressed in terms of the paired t-test. Holm's
step-down levels ``alpha_f / (K - r + 1)`` define the per-rank power
profile reported for every design, whatever correction drove the choice
of N. Nonparametric test families are handled by inflating the t-test
sample size with an asymptotic relative efficiency constant.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .dist import nct_cdf, t_quantile
from .errors import ConfigError, DomainError, SampleSizeOverflow

ALTERNATIVES = ("two-sided", "one-sided")
CORRECTIONS = ("none", "bonferroni", "holm-mean", "holm-median", "holm-worst", "holm-kprime")
TEST_FAMILIES = ("paired-t", "wilcoxon", "sign")

MIN_INSTANCES = 5
N_CAP = 1_000_000
ARE = {"paired-t": 1.0, "wilcoxon": 0.86, "sign": 0.637}


@dataclass
class DesignSpec:
    alpha_f: float = 0.05
    power_target: float = 0.8
    mres: float = 0.5
    num_comparisons: int = 1
    alternative: str = "two-sided"
    correction: str = "holm-mean"
    k_prime: int | None = None
    test_family: str = "paired-t"
    are: dict = field(default_factory=lambda: dict(ARE))
    n_cap: int = N_CAP
    min_instances: int = MIN_INSTANCES

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (0.0 < self.alpha_f < 1.0):
            raise ConfigError(f"alpha_f must lie in (0, 1), got {self.alpha_f}")
        if not (0.0 < self.power_target < 1.0):
            raise ConfigError(f"power_target must lie in (0, 1), got {self.power_target}")
        if not (self.mres > 0 and math.isfinite(self.mres)):
            raise ConfigError(f"mres must be positive, got {self.mres}")
        if int(self.num_comparisons) != self.num_comparisons or self.num_comparisons < 1:
            raise ConfigError(f"num_comparisons must be a positive integer, got {self.num_comparisons}")
        self.num_comparisons = int(self.num_comparisons)
        if self.alternative not in ALTERNATIVES:
            raise ConfigError(f"alternative must be one of {ALTERNATIVES}, got {self.alternative!r}")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"correction must be one of {CORRECTIONS}, got {self.correction!r}")
        if self.test_family not in TEST_FAMILIES:
            raise ConfigError(f"test_family must be one of {TEST_FAMILIES}, got {self.test_family!r}")
        if self.correction == "none" and self.num_comparisons != 1:
            raise ConfigError("correction 'none' requires num_comparisons == 1")
        if self.correction == "holm-kprime":
            if self.k_prime is None or not (1 <= self.k_prime <= self.num_comparisons):
                raise ConfigError(
                    f"holm-kprime needs 1 <= k_prime <= {self.num_comparisons}, got {self.k_prime}"
                )
        are = self.are.get(self.test_family)
        if are is None or not (0 < are <= 1):
            raise ConfigError(f"ARE constant for {self.test_family!r} must lie in (0, 1]")
        if self.min_instances < 2:
            raise ConfigError("min_instances must be at least 2")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown design fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class DesignResult:
    n_instances: int
    per_rank_power: list[float]
    mean_power: float
    min_power: float
    max_power: float
    alpha_levels: list[float]
    alternative: str
    correction: str
    test_family: str
    n_paired_t: int

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class PowerCurvePoint:
    effect_size: float
    mean_power: float


def _check_alternative(alternative):
    if alternative not in ALTERNATIVES:
        raise DomainError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def power_paired_t(alpha: float, n: int, d: float, alternative: str = "two-sided") -> float:
    """Power of the paired t-test with ``n`` pairs against standardised effect ``d``.

    The one-sided test rejects for large positive t, so a negative ``d``
    gives power below ``alpha``.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    _check_alternative(alternative)
    df = n - 1
    ncp = d * math.sqrt(n)
    if alternative == "two-sided":
        crit = t_quantile(1.0 - alpha / 2.0, df)
        upper = 1.0 - nct_cdf(crit, df, ncp)
        lower = nct_cdf(-crit, df, ncp)
        return min(1.0, upper + lower)
    crit = t_quantile(1.0 - alpha, df)
    return 1.0 - nct_cdf(crit, df, ncp)


def _first_n(predicate, start, cap):
    """Smallest n >= start with predicate(n), found by doubling then bisection.

    ``predicate`` must be monotone (False ... False True ... True).
    """
    lo = start - 1  # known (or assumed) False
    hi = start
    step = 1
    while not predicate(hi):
        lo = hi
        step *= 2
        hi = hi + step
        if hi > cap:
            if predicate(cap):
                hi = cap
                break
            raise SampleSizeOverflow(f"required sample size exceeds cap {cap}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _n_paired_t_raw(alpha, power_target, d_star, alternative, cap=N_CAP):
    def ok(n):
        return power_paired_t(alpha, n, d_star, alternative) >= power_target

    return _first_n(ok, 2, cap)


def n_paired_t(
    alpha: float,
    power_target: float,
    d_star: float,
    alternative: str = "two-sided",
    cap: int = N_CAP,
    min_instances: int = MIN_INSTANCES,
) -> int:
    """Smallest number of instances giving the paired t-test power ``power_target``.

    Power is evaluated with both rejection tails for two-sided tests, so
    this is the smallest N with ``power_paired_t(alpha, N, d_star) >=
    power_target``; the result is never below ``min_instances``.
    """
    if not (0.0 < alpha < 1.0) or not (0.0 < power_target < 1.0):
        raise DomainError("alpha and power_target must lie in (0, 1)")
    if not d_star > 0:
        raise DomainError(f"d_star must be positive, got {d_star}")
    _check_alternative(alternative)
    return max(min_instances, _n_paired_t_raw(alpha, power_target, abs(d_star), alternative, cap))


def fwer(alpha: float, k: int) -> float:
    """Probability of at least one false rejection among ``k`` independent tests."""
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    return 1.0 - (1.0 - alpha) ** k


def holm_levels(alpha_f: float, k: int) -> list[float]:
    """Per-rank significance levels ``alpha_f / (k - r + 1)`` for r = 1..k."""
    return [alpha_f / (k - r + 1) for r in range(1, k + 1)]


def rank_powers(alpha_f, k, n, d, alternative):
    return [power_paired_t(a, n, d, alternative) for a in holm_levels(alpha_f, k)]


def mean_rank_power(alpha_f, k, n, d, alternative):
    return math.fsum(rank_powers(alpha_f, k, n, d, alternative)) / k


def _divisor(spec: DesignSpec) -> int:
    k = spec.num_comparisons
    if spec.correction in ("bonferroni", "holm-worst"):
        return k
    if spec.correction == "holm-kprime":
        return k - spec.k_prime + 1
    if spec.correction == "holm-median":
        return k - math.ceil(k / 2) + 1
    return 1


def _holm_mean_n(spec: DesignSpec) -> int:
    k = spec.num_comparisons
    alt = spec.alternative
    d = spec.mres
    n = _n_paired_t_raw(spec.alpha_f, spec.power_target, d, alt, spec.n_cap) - 1
    mean_p = 0.0
    while mean_p < spec.power_target:
        n += 1
        if n > spec.n_cap:
            raise SampleSizeOverflow(f"mean-power design exceeds cap {spec.n_cap}")
        mean_p = mean_rank_power(spec.alpha_f, k, n, d, alt)
    return n


def design(spec: DesignSpec) -> DesignResult:
    """Number of instances and per-rank power profile for ``spec``."""
    spec.validate()
    k = spec.num_comparisons
    if spec.correction == "holm-mean":
        n_t = _holm_mean_n(spec)
    else:
        n_t = _n_paired_t_raw(
            spec.alpha_f / _divisor(spec), spec.power_target, spec.mres, spec.alternative, spec.n_cap
        )
    n_t = max(spec.min_instances, n_t)
    are = spec.are[spec.test_family]
    n_final = n_t if spec.test_family == "paired-t" else math.ceil(n_t / are - 1e-9)
    if n_final > spec.n_cap:
        raise SampleSizeOverflow(f"required sample size {n_final} exceeds cap {spec.n_cap}")
    powers = rank_powers(spec.alpha_f, k, n_t, spec.mres, spec.alternative)
    return DesignResult(
        n_instances=int(n_final),
        per_rank_power=powers,
        mean_power=math.fsum(powers) / k,
        min_power=min(powers),
        max_power=max(powers),
        alpha_levels=holm_levels(spec.alpha_f, k),
        alternative=spec.alternative,
        correction=spec.correction,
        test_family=spec.test_family,
        n_paired_t=int(n_t),
    )


def criterion_met(spec: DesignSpec, n: int) -> bool:
    """Whether the design target of ``spec`` holds with ``n`` paired-t instances."""
    k = spec.num_comparisons
    if spec.correction == "holm-mean":
        return mean_rank_power(spec.alpha_f, k, n, spec.mres, spec.alternative) >= spec.power_target
    alpha = spec.alpha_f / _divisor(spec)
    return power_paired_t(alpha, n, spec.mres, spec.alternative) >= spec.power_target


def power_curve(n_fixed: int, spec: DesignSpec, d_grid: Sequence[float]) -> list[PowerCurvePoint]:
    """Mean Holm-rank power at ``n_fixed`` instances for each effect size in ``d_grid``."""
    if n_fixed < 2:
        raise ConfigError(f"n_fixed must be at least 2, got {n_fixed}")
    grid = list(d_grid)
    if not grid:
        raise ConfigError("d_grid is empty")
    if any(d < 0 or not math.isfinite(d) for d in grid):
        raise ConfigError("effect sizes must be finite and non-negative")
    k = spec.num_comparisons
    return [
        PowerCurvePoint(float(d), mean_rank_power(spec.alpha_f, k, n_fixed, d, spec.alternative))
        for d in grid
    ]


def interpolate_curve(points: Sequence[PowerCurvePoint], d: float) -> float:
    """Linear interpolation of mean power at ``d`` (clamped to the grid ends)."""
    pts = sorted(points, key=lambda p: p.effect_size)
    if d <= pts[0].effect_size:
        return pts[0].mean_power
    if d >= pts[-1].effect_size:
        return pts[-1].mean_power
    for a, b in zip(pts, pts[1:]):
        if a.effect_size <= d <= b.effect_size:
            if b.effect_size == a.effect_size:
                return a.mean_power
            w = (d - a.effect_size) / (b.effect_size - a.effect_size)
            return a.mean_power + w * (b.mean_power - a.mean_power)
    return pts[-1].mean_power
