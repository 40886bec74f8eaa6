"""Inference over instances: paired tests, Holm step-down and joint intervals.

The unit of analysis is the instance. For each hypothesis pair the
per-instance summaries give one paired difference per instance; these
vectors are tested, the p-values ranked by Holm's step-down procedure and
each interval is computed at its rank's level ``alpha_f / (K - r + 1)``.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .dist import t_cdf, t_quantile
from .errors import ConfigError, DomainError, IncompleteDesignError
from .power import ALTERNATIVES, TEST_FAMILIES
from .sampler import COMPARISONS, comparison_pairs

SKEW_FLAG = 2.0


@dataclass
class PairedDifferenceVector:
    pair: tuple[str, str]
    values: list[float]
    comparison: str = "simple"

    def __post_init__(self):
        if any(v is None or not math.isfinite(v) for v in self.values):
            raise DomainError(f"difference vector for {self.pair} has missing or non-finite entries")

    def __len__(self):
        return len(self.values)


@dataclass
class TTestResult:
    t_stat: float
    p_value: float
    ci_low: float
    ci_high: float
    d_hat: float
    degenerate: bool = False


@dataclass
class HolmRow:
    pair: tuple[str, str]
    p_value: float
    rank: int
    alpha_r: float
    adjusted_p: float
    reject: bool


@dataclass
class ComparisonResult:
    pair: tuple[str, str]
    estimate: float
    se: float
    df: int
    t_stat: float
    p_value: float
    rank: int
    alpha_r: float
    adjusted_p: float
    reject: bool
    ci_low: float | None
    ci_high: float | None
    d_hat: float
    degenerate: bool = False
    test: str = "paired-t"

    def to_dict(self):
        out = asdict(self)
        out["pair"] = list(self.pair)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["pair"] = tuple(data["pair"])
        return cls(**data)


def _percent_all_gm(means):
    total = math.fsum(means)
    return total / len(means)


def paired_differences(
    summaries: Mapping[str, Mapping[str, float]],
    algorithms: Sequence[str],
    instances: Sequence[str],
    comparison: str = "simple",
    reference_id: str | None = None,
) -> list[PairedDifferenceVector]:
    """One difference vector per hypothesis pair.

    ``summaries[instance][algorithm]`` is that algorithm's summary value
    (normally the mean) on the instance. Percent differences use each
    instance's own means.
    """
    if comparison not in COMPARISONS:
        raise ConfigError(f"comparison must be one of {COMPARISONS}, got {comparison!r}")
    missing = [
        (a, inst) for inst in instances for a in algorithms
        if a not in summaries.get(inst, {})
    ]
    if missing:
        raise IncompleteDesignError(missing)
    pairs = comparison_pairs(algorithms, comparison, reference_id)
    out = []
    for i, j in pairs:
        values = []
        for inst in instances:
            row = summaries[inst]
            if comparison == "simple":
                values.append(row[i] - row[j])
            elif comparison == "percent-all-vs-one":
                if not row[i] > 0:
                    raise DomainError(f"reference mean on {inst} must be positive, got {row[i]}")
                values.append(1.0 - row[j] / row[i])
            else:
                gm = _percent_all_gm([row[a] for a in algorithms])
                if not gm > 0:
                    raise DomainError(f"grand mean on {inst} must be positive, got {gm}")
                values.append((row[i] - row[j]) / gm)
        out.append(PairedDifferenceVector((i, j), values, comparison))
    return out


def _ci(mean, se, df, level_alpha, alternative):
    if alternative == "two-sided":
        half = t_quantile(1.0 - level_alpha / 2.0, df) * se
        return mean - half, mean + half
    return mean - t_quantile(1.0 - level_alpha, df) * se, math.inf


def t_test_paired(vec: PairedDifferenceVector | Sequence[float], alpha: float = 0.05,
                  alternative: str = "two-sided") -> TTestResult:
    """Paired t-test of zero mean difference.

    The one-sided version tests against a positive mean. With zero spread
    the result is flagged degenerate: p = 1 when the mean is zero, else an
    infinite t with p = 0 (or 1 in the wrong direction) and a zero-width
    interval.
    """
    values = list(vec.values if isinstance(vec, PairedDifferenceVector) else vec)
    n = len(values)
    if n < 2:
        raise DomainError(f"need at least 2 paired differences, got {n}")
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if alternative not in ALTERNATIVES:
        raise DomainError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    mean = math.fsum(values) / n
    sd = statistics.stdev(values)
    if sd == 0.0 or sd <= 1e-15 * abs(mean):
        if mean == 0.0:
            return TTestResult(0.0, 1.0, 0.0, 0.0, 0.0, True)
        t = math.copysign(math.inf, mean)
        p = 0.0 if (alternative == "two-sided" or mean > 0) else 1.0
        return TTestResult(t, p, mean, mean, t, True)
    se = sd / math.sqrt(n)
    t = mean / se
    df = n - 1
    if alternative == "two-sided":
        p = min(1.0, 2.0 * t_cdf(-abs(t), df))
    else:
        p = t_cdf(-t, df)
    lo, hi = _ci(mean, se, df, alpha, alternative)
    return TTestResult(t, p, lo, hi, mean / sd)


def wilcoxon_test(vec, alternative="two-sided") -> float:
    """Signed-rank p-value; zero differences are discarded."""
    values = np.asarray(vec.values if isinstance(vec, PairedDifferenceVector) else vec, float)
    if np.all(values == 0):
        return 1.0
    alt = "two-sided" if alternative == "two-sided" else "greater"
    return float(sps.wilcoxon(values, alternative=alt, zero_method="wilcox").pvalue)


def sign_test(vec, alternative="two-sided") -> float:
    """Exact binomial sign-test p-value; zero differences are discarded."""
    values = np.asarray(vec.values if isinstance(vec, PairedDifferenceVector) else vec, float)
    pos = int(np.sum(values > 0))
    n = pos + int(np.sum(values < 0))
    if n == 0:
        return 1.0
    alt = "two-sided" if alternative == "two-sided" else "greater"
    return float(sps.binomtest(pos, n, 0.5, alternative=alt).pvalue)


def _pair_key(pair):
    return tuple(str(x) for x in pair)


def holm_stepdown(results: Sequence[tuple], alpha_f: float) -> list[HolmRow]:
    """Holm's step-down procedure over ``(pair, p_value)`` items.

    Rows come back in rank order. Ties in p are ordered by pair; the step
    down stops at the first rank whose p exceeds its level, so tied
    hypotheses on either side of the cut are decided consistently with
    that stopping rule.
    """
    if not (0.0 < alpha_f < 1.0):
        raise DomainError(f"alpha_f must lie in (0, 1), got {alpha_f}")
    items = []
    for pair, p in results:
        if not (0.0 <= p <= 1.0):
            raise DomainError(f"p-value for {pair} must lie in [0, 1], got {p}")
        items.append((float(p), _pair_key(pair), pair))
    items.sort(key=lambda it: (it[0], it[1]))
    k = len(items)
    rows = []
    rejecting = True
    running = 0.0
    for r, (p, _, pair) in enumerate(items, start=1):
        alpha_r = alpha_f / (k - r + 1)
        if rejecting and p > alpha_r:
            rejecting = False
        running = max(running, min(1.0, (k - r + 1) * p))
        rows.append(HolmRow(pair, p, r, alpha_r, running, rejecting))
    return rows


def bonferroni(results: Sequence[tuple], alpha_f: float) -> dict:
    """Pair -> reject flag under the Bonferroni correction."""
    k = len(results)
    return {pair: p <= alpha_f / k for pair, p in results}


def joint_confidence_intervals(results: Sequence[ComparisonResult],
                               alternative: str = "two-sided") -> list[ComparisonResult]:
    """Recompute each t interval at its Holm rank's level ``alpha_r``."""
    out = []
    for res in results:
        if res.degenerate or res.test != "paired-t":
            out.append(res)
            continue
        lo, hi = _ci(res.estimate, res.se, res.df, res.alpha_r, alternative)
        out.append(replace(res, ci_low=lo, ci_high=hi))
    return out


def analyze(vectors: Sequence[PairedDifferenceVector], alpha_f: float = 0.05,
            alternative: str = "two-sided", test_family: str = "paired-t") -> list[ComparisonResult]:
    """Test every pair, apply Holm and attach rank-level intervals; rows in rank order."""
    if test_family not in TEST_FAMILIES:
        raise ConfigError(f"test_family must be one of {TEST_FAMILIES}, got {test_family!r}")
    if not vectors:
        return []
    base = {}
    for vec in vectors:
        n = len(vec)
        tt = t_test_paired(vec, alpha_f, alternative)
        mean = math.fsum(vec.values) / n
        se = statistics.stdev(vec.values) / math.sqrt(n)
        if test_family == "paired-t":
            p = tt.p_value
        elif test_family == "wilcoxon":
            p = wilcoxon_test(vec, alternative)
        else:
            p = sign_test(vec, alternative)
        base[vec.pair] = (mean, se, n - 1, tt, p)
    rows = holm_stepdown([(pair, b[4]) for pair, b in base.items()], alpha_f)
    results = []
    for row in rows:
        mean, se, df, tt, p = base[row.pair]
        ci = (tt.ci_low, tt.ci_high) if test_family == "paired-t" else (None, None)
        results.append(ComparisonResult(
            pair=row.pair, estimate=mean, se=se, df=df, t_stat=tt.t_stat, p_value=p,
            rank=row.rank, alpha_r=row.alpha_r, adjusted_p=row.adjusted_p, reject=row.reject,
            ci_low=ci[0], ci_high=ci[1], d_hat=tt.d_hat, degenerate=tt.degenerate,
            test=test_family,
        ))
    return joint_confidence_intervals(results, alternative)


def shape_diagnostics(vec: PairedDifferenceVector) -> dict:
    """Sample skewness and excess kurtosis of a difference vector."""
    values = np.asarray(vec.values, float)
    if len(values) < 3 or np.all(values == values[0]):
        return {"skewness": 0.0, "excess_kurtosis": 0.0, "flag": False}
    skew = float(sps.skew(values, bias=False))
    kurt = float(sps.kurtosis(values, bias=False)) if len(values) > 3 else 0.0
    return {"skewness": skew, "excess_kurtosis": kurt, "flag": abs(skew) > SKEW_FLAG}


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def summarize(results: Sequence[ComparisonResult],
              reports: Mapping | None = None,
              vectors: Sequence[PairedDifferenceVector] = (),
              meta: Mapping | None = None) -> dict:
    """Machine-readable report with plot-ready series.

    ``reports`` maps instance id to an InstanceSampleReport; the document
    then also carries per-instance standard errors and run counts.
    """
    reports = reports or {}
    hyp = []
    for res in results:
        row = res.to_dict()
        for key in ("t_stat", "ci_low", "ci_high", "d_hat"):
            row[key] = _num(row[key])
        hyp.append(row)
    se_rows = []
    count_rows = []
    for inst, rep in reports.items():
        for est in rep.pair_estimates:
            se_rows.append({"instance": inst, "pair": list(est.pair), "phi_hat": est.phi_hat,
                            "se": est.se})
        for alg, obs in rep.observations.items():
            count_rows.append({"instance": inst, "algorithm": alg, "runs": len(obs)})
    diagnostics = []
    for vec in vectors:
        d = shape_diagnostics(vec)
        d["pair"] = list(vec.pair)
        diagnostics.append(d)
    doc = {
        "meta": dict(meta or {}),
        "hypotheses": hyp,
        "num_rejected": sum(1 for r in results if r.reject),
        "instance_se": se_rows,
        "run_counts": count_rows,
        "diagnostics": diagnostics,
        "series": {
            "max_se_by_instance": [
                {"instance": inst, "max_se": rep.max_se(), "total_runs": rep.total_runs,
                 "budget_exhausted": rep.budget_exhausted}
                for inst, rep in reports.items()
            ],
            "run_count_distribution": sorted(r["runs"] for r in count_rows),
            "ci_chart": [
                {"pair": list(r.pair), "estimate": r.estimate, "ci_low": _num(r.ci_low),
                 "ci_high": _num(r.ci_high), "reject": r.reject}
                for r in results
            ],
        },
    }
    return doc
