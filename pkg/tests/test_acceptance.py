"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

The lines are printed as the tests run and repeated in the pytest terminal
summary under "acceptance criteria".
"""
import contextlib
import math
import time
import warnings

import numpy as np

import conftest
from benchdesign.analysis import holm_stepdown
from benchdesign.errors import ApproximationWarning
from benchdesign.power import DesignSpec, design, fwer, power_curve, power_paired_t
from benchdesign.runner import Runner, RunnerSpec, SyntheticSpec
from benchdesign.sampler import (
    SamplingConfig,
    SummaryStats,
    plan_allocation,
    sample_instance,
    se_percent_all,
    se_percent_one,
    se_simple,
)
from benchdesign.validation import TruthConfig, validate_design
from oracles import min_total_runs, paired_t_rejection_rate_mc

CASE_STUDY_P = [3.7e-23, 1.7e-17, 5.2e-17, 1.0e-16, 4.4e-16, 6.3e-16, 3.6e-12, 3.5e-8, 3.3e-7,
            4.5e-6, 6.0e-5, 0.003, 0.03, 0.038, 0.1, 0.27, 0.27, 0.37, 0.6, 0.65, 0.79]


@contextlib.contextmanager
def criterion(num, title):
    info = {}
    start = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        line = f"[criterion {num:2d}] FAIL  {title}: {info.get('detail', '')} ({type(exc).__name__}: {exc})"
        conftest.ACCEPTANCE_LINES[num] = line
        print(line)
        raise
    elapsed = time.perf_counter() - start
    line = f"[criterion {num:2d}] PASS  {title}: {info.get('detail', '')} [{elapsed:.2f} s]"
    conftest.ACCEPTANCE_LINES[num] = line
    print(line)


def _spec(**kw):
    base = dict(alpha_f=0.05, power_target=0.8, mres=0.5, num_comparisons=21,
                alternative="two-sided", correction="holm-mean", test_family="paired-t")
    base.update(kw)
    return DesignSpec(**base)


def test_criterion_01_case_study_instances():
    with criterion(1, "case-study N* (holm-mean, K=21)") as c:
        t0 = time.perf_counter()
        two = design(_spec()).n_instances
        elapsed = time.perf_counter() - t0
        one = design(_spec(alternative="one-sided")).n_instances
        c["detail"] = f"two-sided N*={two}, one-sided N*={one}, runtime {elapsed:.3f} s"
        assert two == 57
        assert elapsed < 1.0


def test_criterion_02_followup_power():
    with criterion(2, "follow-up mean power at N=200, K=7, d=0.25") as c:
        t0 = time.perf_counter()
        (pt,) = power_curve(200, _spec(num_comparisons=7), [0.25])
        elapsed = time.perf_counter() - t0
        c["detail"] = f"mean power {pt.mean_power:.4f} (target [0.83, 0.87]), runtime {elapsed:.3f} s"
        assert 0.83 <= pt.mean_power <= 0.87
        assert elapsed < 1.0


def test_criterion_03_fwer_closed_form():
    with criterion(3, "FWER closed form") as c:
        v = fwer(0.05, 10)
        c["detail"] = f"fwer(0.05, 10) = {v:.5f} (target 0.401 +- 0.001)"
        assert abs(v - 0.401) <= 0.001


def test_criterion_04_holm_vs_bonferroni():
    with criterion(4, "holm-mean N* <= bonferroni N*, K=1..15") as c:
        t0 = time.perf_counter()
        pairs = []
        for k in range(1, 16):
            s = dict(power_target=0.9, num_comparisons=k)
            pairs.append((design(_spec(correction="holm-mean", **s)).n_instances,
                          design(_spec(correction="bonferroni", **s)).n_instances))
        elapsed = time.perf_counter() - t0
        c["detail"] = (f"K=1: {pairs[0]}, K=15: {pairs[-1]} (holm-mean, bonferroni), "
                       f"runtime {elapsed:.2f} s")
        assert all(h <= b for h, b in pairs)
        assert pairs[0][0] == pairs[0][1]
        assert elapsed < 5.0


def test_criterion_05_power_function_monte_carlo():
    with criterion(5, "power function vs Monte Carlo (1e5 reps per point)") as c:
        t0 = time.perf_counter()
        worst = 0.0
        for k, (n, d) in enumerate((n, d) for n in (10, 44, 57) for d in (0.0, 0.25, 0.5)):
            mc = paired_t_rejection_rate_mc(0.05, n, d, 100_000, seed=1000 + k)
            worst = max(worst, abs(mc - power_paired_t(0.05, n, d)))
        elapsed = time.perf_counter() - t0
        c["detail"] = f"max |MC - analytic| = {worst:.4f} over 9 points (tol 0.01), runtime {elapsed:.1f} s"
        assert worst <= 0.01
        assert elapsed < 120


def test_criterion_06_allocation_optimality():
    with criterion(6, "allocation vs exhaustive search, sigma=(1,3), se*=0.25") as c:
        t0 = time.perf_counter()
        total, ni, nj = min_total_runs(1.0, 3.0, 0.25)
        cfg = SamplingConfig(se_star=0.25, n0=10, n_max=10_000)
        plan = plan_allocation({"a": 0.0, "b": 0.0}, {"a": 1.0, "b": 3.0}, cfg)
        na, nb = plan.counts["a"], plan.counts["b"]
        # the same loop with estimated sds, for information
        run = Runner(RunnerSpec("synthetic", SyntheticSpec("normal", {"a": [0, 1], "b": [0, 3]})))
        totals = [sample_instance("x", ["a", "b"], run, cfg, seed=s).total_runs for s in range(20)]
        elapsed = time.perf_counter() - t0
        c["detail"] = (f"oracle {total} ({ni}+{nj}); loop with known sd {plan.total_runs} "
                       f"({na}+{nb}, ratio {nb / na:.3f}); estimated-sd loop median "
                       f"{int(np.median(totals))} over 20 seeds; runtime {elapsed:.2f} s")
        assert plan.total_runs <= total + 2
        assert abs(nb - 3.0 * na) <= 1
        assert elapsed < 10


def test_criterion_07_se_formula_fidelity():
    with criterion(7, "SE formulas vs Monte Carlo (1e4 reps, n=50)") as c:
        t0 = time.perf_counter()
        rng = np.random.default_rng(77)
        reps, n = 10_000, 50

        # simple: sigma = (1, 2)
        xi = rng.normal(0, 1, (reps, n)).mean(axis=1)
        xj = rng.normal(0, 2, (reps, n)).mean(axis=1)
        emp = np.std(xi - xj, ddof=1)
        formula = se_simple(SummaryStats(n, 0, 1), SummaryStats(n, 0, 2))
        r_simple = emp / formula - 1

        # percent-all-vs-one: lognormal reference (0, 0.25), other (0.1, 0.4)
        def ln_moments(mu, s):
            m = math.exp(mu + s * s / 2)
            return m, m * math.sqrt(math.expm1(s * s))

        m1, s1 = ln_moments(0.0, 0.25)
        mj, sj = ln_moments(0.1, 0.4)
        x1 = rng.lognormal(0.0, 0.25, (reps, n)).mean(axis=1)
        xj = rng.lognormal(0.1, 0.4, (reps, n)).mean(axis=1)
        emp = np.std(1 - xj / x1, ddof=1)
        formula = se_percent_one(SummaryStats(n, m1, s1), SummaryStats(n, mj, sj))
        r_one = emp / formula - 1

        # percent-all-vs-all: means {10,11,12,13}, sds {1,2,1,2}, pair (1, 2)
        mus, sds = [10, 11, 12, 13], [1, 2, 1, 2]
        xs = [rng.normal(m, s, (reps, n)).mean(axis=1) for m, s in zip(mus, sds)]
        gm = sum(xs) / 4
        emp = np.std((xs[0] - xs[1]) / gm, ddof=1)
        stats = {k: SummaryStats(n, m, s) for k, (m, s) in enumerate(zip(mus, sds))}
        formula = se_percent_all(0, 1, stats)
        r_all = emp / formula - 1
        elapsed = time.perf_counter() - t0
        c["detail"] = (f"relative error simple {r_simple:+.3f} (tol 0.10), "
                       f"pct-one {r_one:+.3f} (tol 0.15), pct-all {r_all:+.3f} (tol 0.15); "
                       f"runtime {elapsed:.1f} s")
        assert abs(r_simple) <= 0.10
        assert abs(r_one) <= 0.15
        assert abs(r_all) <= 0.15
        assert elapsed < 60


def test_criterion_08_sampling_dichotomy():
    with criterion(8, "sampling dichotomy on 100 random configurations") as c:
        t0 = time.perf_counter()
        rng = np.random.default_rng(8)
        exhausted = 0
        comparisons = ["simple", "percent-all-vs-one", "percent-all-vs-all"]
        for k in range(100):
            a = int(rng.integers(2, 7))
            algs = [f"a{j}" for j in range(a)]
            comparison = comparisons[k % 3]
            dist = "normal" if comparison == "simple" else "lognormal"
            params = {g: [float(rng.uniform(0.5, 3)), float(rng.uniform(0.05, 1.0))] for g in algs}
            n0 = int(rng.integers(3, 11))
            cfg = SamplingConfig(comparison=comparison,
                                 reference_id=algs[0] if comparison == "percent-all-vs-one" else None,
                                 se_star=float(rng.uniform(0.02, 0.3)), n0=n0,
                                 n_max=int(rng.integers(a * n0, 60 * a)))
            run = Runner(RunnerSpec("synthetic", SyntheticSpec(dist, params)))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ApproximationWarning)
                rep = sample_instance(f"i{k}", algs, run, cfg, seed=k)
            ok_se = all(p.se <= cfg.se_star for p in rep.pair_estimates)
            assert ok_se != rep.budget_exhausted, (k, rep.max_se(), rep.budget_exhausted)
            assert min(rep.counts().values()) >= n0
            exhausted += rep.budget_exhausted
        elapsed = time.perf_counter() - t0
        c["detail"] = (f"100/100 reports satisfy (all se <= se*) xor budget_exhausted "
                       f"({exhausted} exhausted), all counts >= n0; runtime {elapsed:.1f} s")
        assert elapsed < 60


def test_criterion_09_holm_table():
    with criterion(9, "Holm step-down on the 21 case-study p-values") as c:
        rows = holm_stepdown([((f"h{k:02d}",), p) for k, p in enumerate(CASE_STUDY_P)], 0.05)
        rejected = sum(r.reject for r in rows)
        cut = next(r for r in rows if not r.reject)
        c["detail"] = (f"alpha'_1 = {rows[0].alpha_r:.4f}, alpha'_21 = {rows[-1].alpha_r}, "
                       f"{rejected} rejections, first retained p = {cut.p_value}")
        assert round(rows[0].alpha_r, 4) == 0.0024
        assert rows[-1].alpha_r == 0.05
        assert rejected == 12 and cut.p_value == 0.03


def test_criterion_10_empirical_fwer():
    with criterion(10, "empirical FWER, all-null, K=10, holm, n_sim=1e4") as c:
        t0 = time.perf_counter()
        spec = _spec(num_comparisons=10)
        rep = validate_design(spec, TruthConfig(0.0, "all-vs-all"), 10_000, seed=10)
        bound = 0.05 + 3 * math.sqrt(0.05 * 0.95 / 10_000)
        elapsed = time.perf_counter() - t0
        c["detail"] = (f"N={rep.n_instances}, FWER = {rep.fwer:.4f} (se {rep.fwer_se:.4f}), "
                       f"bound {bound:.4f}; runtime {elapsed:.1f} s")
        assert rep.fwer <= bound
        assert elapsed < 300


def test_criterion_11_substitution(golden_dir):
    with criterion(11, "case-study solver columns not reproducible; substitutes in place") as c:
        present = all((golden_dir / f).exists() for f in
                      ("hypotheses.csv", "instance_se.csv", "run_counts.csv", "summary.json"))
        done = [n for n in (5, 6, 7, 8, 9, 10) if conftest.ACCEPTANCE_LINES.get(n, "").find("PASS") >= 0]
        c["detail"] = (f"golden files present={present}; oracle/property criteria passed so far: "
                       f"{done}; golden determinism checked in test_state_cli")
        assert present
