"""Command-line interface.

Commands: design, run, sample, analyze, powercurve, validate. Values given
as flags override the configuration file, which overrides the defaults.
Exit status is 0 on success, 1 for usage or configuration errors and 2
for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

from . import __version__, kernels
from .analysis import analyze, paired_differences, summarize
from .errors import (
    BenchDesignError,
    ConfigError,
    DomainError,
    IncompleteDesignError,
    PositivityError,
    RunError,
    SampleSizeOverflow,
)
from .power import DesignSpec, design, interpolate_curve, power_curve
from .runner import Runner, RunnerSpec, worker_cap
from .sampler import SamplingConfig, num_comparisons, sample_instance
from .state import ExperimentState, ResultsExport, acquire, dump_json, load_json, state_lock
from .validation import TruthConfig, validate_design

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
CONFIG_KEYS = {"design", "sampling", "algorithms", "instances", "runner", "seed"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(msg=""):
    print(msg, flush=True)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr, flush=True)


# -- configuration -------------------------------------------------------------

def _read_config(path):
    data = load_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return data


def _sampling_overrides(args):
    out = {}
    for flag, key in (("n_max", "n_max"), ("se_star", "se_star"), ("n0", "n0")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def _design_spec(cfg, algorithms=None, sampling=None):
    fields = dict(cfg.get("design", {}))
    if "num_comparisons" not in fields and algorithms and sampling is not None:
        fields["num_comparisons"] = num_comparisons(len(algorithms), sampling.all_vs_one)
    try:
        return DesignSpec.from_dict(fields)
    except TypeError as exc:
        raise ConfigError(f"design: {exc}") from None


def _config_design(cfg):
    """Design spec of a config file, taking K from its algorithms when unset."""
    algorithms = cfg.get("algorithms", [])
    sampling = _sampling_config(cfg, {}) if algorithms else None
    return _design_spec(cfg, algorithms, sampling), sampling


def _sampling_config(cfg, overrides):
    fields = dict(cfg.get("sampling", {}))
    fields.update(overrides)
    try:
        return SamplingConfig.from_dict(fields)
    except TypeError as exc:
        raise ConfigError(f"sampling: {exc}") from None


def _state_from_config(cfg, args) -> ExperimentState:
    algorithms = [str(a) for a in cfg.get("algorithms", [])]
    instances = [str(i) for i in cfg.get("instances", [])]
    sampling = _sampling_config(cfg, _sampling_overrides(args))
    spec = _design_spec(cfg, algorithms, sampling)
    runner = RunnerSpec.from_dict(cfg["runner"]) if cfg.get("runner") else None
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.get("seed", 0)
    state = ExperimentState(design=spec, sampling=sampling, algorithms=algorithms,
                            instances=instances, runner=runner, global_seed=seed)
    if algorithms and state.num_comparisons() != spec.num_comparisons:
        raise ConfigError(
            f"design.num_comparisons={spec.num_comparisons} but the algorithms and comparison "
            f"give {state.num_comparisons()} hypotheses"
        )
    state.design_result = design(spec)
    return state


def _print_design(res, spec):
    _say(f"N* = {res.n_instances} instances "
         f"({spec.correction}, {res.alternative}, {res.test_family}, K = {spec.num_comparisons})")
    if res.test_family != "paired-t":
        _say(f"paired t-test equivalent: {res.n_paired_t}")
    _say(f"per-rank power: mean {res.mean_power:.4f}, min {res.min_power:.4f}, "
         f"max {res.max_power:.4f}")
    for r, (a, p) in enumerate(zip(res.alpha_levels, res.per_rank_power), start=1):
        _say(f"  rank {r:3d}  alpha' = {a:.6g}  power = {p:.4f}")


# -- commands --------------------------------------------------------------------

def cmd_design(args):
    cfg = _read_config(args.config)
    state = _state_from_config(cfg, args)
    _print_design(state.design_result, state.design)
    if args.out:
        dump_json({"design": state.design.to_dict(), "result": state.design_result.to_dict()},
                  args.out)
    if args.state:
        lock = acquire(state_lock(args.state))
        try:
            if Path(args.state).exists():
                raise ConfigError(f"{args.state} already exists; use a new state file")
            state.save(args.state)
        finally:
            lock.release()
        _say(f"state written to {args.state}")
    return EXIT_OK


def _load_or_create(args) -> ExperimentState:
    path = Path(args.state)
    if path.exists():
        state = ExperimentState.load(path)
        overrides = _sampling_overrides(args)
        changed = {k: v for k, v in overrides.items() if getattr(state.sampling, k) != v}
        if args.seed is not None and args.seed != state.global_seed:
            changed["seed"] = args.seed
        if changed:
            if state.reports:
                raise ConfigError(
                    f"cannot change {sorted(changed)} after sampling has started")
            fields = state.sampling.to_dict()
            fields.update(overrides)
            state.sampling = SamplingConfig.from_dict(fields)
            if args.seed is not None:
                state.global_seed = args.seed
        if args.config:
            _warn(f"{path} exists; ignoring --config")
        return state
    if not args.config:
        raise ConfigError(f"{path} does not exist and no --config was given")
    return _state_from_config(_read_config(args.config), args)


def _check_runnable(state):
    if state.runner is None:
        raise ConfigError("no runner configured")
    if len(state.algorithms) < 2:
        raise ConfigError("need at least two algorithms")
    if not state.instances:
        raise ConfigError("no instances configured")
    if state.runner.kind == "synthetic" and state.sampling.comparison != "simple":
        state.runner.synthetic.check_positive(state.algorithms, state.instances)


def cmd_run(args):
    lock = acquire(state_lock(args.state))
    try:
        state = _load_or_create(args)
        _check_runnable(state)
        state.validate()
        n_star = state.design_result.n_instances if state.design_result else None
        if n_star is not None and len(state.instances) < n_star:
            _warn(f"{len(state.instances)} instances is fewer than the designed N* = {n_star}; "
                  "power will be below target")
        elif n_star is not None and len(state.instances) > n_star:
            _say(f"note: {len(state.instances)} instances exceed N* = {n_star}; "
                 "achieved power is above target")
        pending = state.pending_instances()
        if not pending:
            if state.status in ("designed", "sampling"):
                state.advance("sampled")
                state.save(args.state)
            _say("all instances already sampled")
            return EXIT_OK
        if args.max_instances is not None:
            pending = pending[: args.max_instances]
        state.advance("sampling")
        state.save(args.state)
        runner = Runner(state.runner)
        index = {inst: n for n, inst in enumerate(state.instances)}

        def job(inst):
            return sample_instance(inst, state.algorithms, runner, state.sampling,
                                   seed=state.global_seed, instance_index=index[inst])

        def record(rep):
            state.reports[rep.instance_id] = rep
            state.save(args.state)
            flag = " (budget exhausted)" if rep.budget_exhausted else ""
            _say(f"{rep.instance_id}: {rep.total_runs} runs, max se {rep.max_se():.4g}{flag}")

        workers = worker_cap(args.workers)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(job, inst) for inst in pending]
                error = None
                for fut in as_completed(futures):
                    try:
                        record(fut.result())
                    except Exception as exc:  # keep finished instances, report the first failure
                        error = error or exc
                if error is not None:
                    raise error
        else:
            for inst in pending:
                record(job(inst))
        if not state.pending_instances():
            state.advance("sampled")
            state.save(args.state)
            _say(f"sampling complete: {len(state.instances)} instances")
        else:
            _say(f"{len(state.pending_instances())} instances left; rerun to resume")
        return EXIT_OK
    finally:
        lock.release()


def cmd_sample(args):
    if args.state and Path(args.state).exists():
        state = ExperimentState.load(args.state)
    elif args.config:
        state = _state_from_config(_read_config(args.config), args)
    else:
        raise ConfigError("sample needs --state or --config")
    _check_runnable(state)
    if args.instance not in state.instances:
        raise ConfigError(f"unknown instance {args.instance!r}")
    rep = sample_instance(args.instance, state.algorithms, Runner(state.runner), state.sampling,
                          seed=state.global_seed,
                          instance_index=state.instances.index(args.instance),
                          workers=worker_cap(args.workers))
    doc = rep.to_dict()
    if args.out:
        dump_json(doc, args.out)
    for est in rep.pair_estimates:
        _say(f"{est.pair[0]} vs {est.pair[1]}: phi = {est.phi_hat:.6g}, se = {est.se:.4g}")
    _say(f"runs: {rep.counts()} total {rep.total_runs}"
         + (" (budget exhausted)" if rep.budget_exhausted else ""))
    return EXIT_OK


def cmd_analyze(args):
    lock = acquire(state_lock(args.state))
    try:
        state = ExperimentState.load(args.state)
        state.require_complete()
        if state.status not in ("sampled", "analyzed"):
            raise ConfigError(f"state status is {state.status!r}; run sampling first")
        spec = state.design
        vectors = paired_differences(state.summaries(), state.algorithms, state.instances,
                                     state.sampling.comparison, state.sampling.reference_id)
        results = analyze(vectors, spec.alpha_f, spec.alternative, spec.test_family)
        meta = {
            "alpha_f": spec.alpha_f,
            "alternative": spec.alternative,
            "test_family": spec.test_family,
            "comparison": state.sampling.comparison,
            "reference_id": state.sampling.reference_id,
            "num_instances": len(state.instances),
            "designed_instances": state.design_result.n_instances if state.design_result else None,
            "global_seed": state.global_seed,
        }
        doc = summarize(results, {i: state.reports[i] for i in state.instances}, vectors, meta)
        out = ResultsExport.build(state, results, doc).write(args.out)
        for d in doc["diagnostics"]:
            if d["flag"]:
                _warn(f"differences for {d['pair'][0]} vs {d['pair'][1]} are strongly skewed "
                      f"(skewness {d['skewness']:.2f}); t-based inference may be unreliable")
        for r in results:
            mark = "reject" if r.reject else "retain"
            _say(f"r={r.rank:3d} {r.pair[0]} vs {r.pair[1]}: est {r.estimate:.6g} "
                 f"p {r.p_value:.3g} alpha' {r.alpha_r:.4g} {mark}")
        _say(f"{doc['num_rejected']} of {len(results)} hypotheses rejected; exports in {out}")
        if state.status != "analyzed":
            state.advance("analyzed")
            state.save(args.state)
        return EXIT_OK
    finally:
        lock.release()


def _parse_grid(text):
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError("grid range must be START:STOP:STEP with STEP > 0")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + n * step, 12) for n in range(max(count, 0))]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse effect-size grid {text!r}") from None


def cmd_powercurve(args):
    cfg = _read_config(args.config)
    spec, _ = _config_design(cfg)
    grid = _parse_grid(args.d_grid)
    points = power_curve(args.n, spec, grid)
    rows = [{"effect_size": p.effect_size, "mean_power": p.mean_power, "interpolated": False}
            for p in points]
    d_star = spec.mres
    lo = min(p.effect_size for p in points)
    hi = max(p.effect_size for p in points)
    if lo < d_star < hi and all(abs(p.effect_size - d_star) > 1e-12 for p in points):
        rows.append({"effect_size": d_star, "mean_power": interpolate_curve(points, d_star),
                     "interpolated": True})
        rows.sort(key=lambda r: r["effect_size"])
    exact = power_curve(args.n, spec, [d_star])[0].mean_power
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["effect_size", "mean_power", "interpolated"])
        for r in rows:
            w.writerow([repr(r["effect_size"]), repr(r["mean_power"]),
                        "true" if r["interpolated"] else "false"])
    finally:
        if args.out:
            fh.close()
    print(f"N = {args.n}, K = {spec.num_comparisons}, {spec.alternative}: "
          f"mean power at d* = {d_star:g} is {exact:.4f}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_validate(args):
    cfg = _read_config(args.config)
    spec, sampling = _config_design(cfg)
    if args.truth:
        truth = TruthConfig.from_dict(load_json(args.truth))
    else:
        structure = args.structure
        if structure is None:
            all_vs_all = sampling is not None and not sampling.all_vs_one
            structure = "all-vs-all" if all_vs_all else "all-vs-one"
        effect = spec.mres if args.effect is None else args.effect
        truth = TruthConfig(effect=effect, structure=structure)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    rep = validate_design(spec, truth, args.n_sim, seed=seed, workers=args.workers,
                          procedure=args.procedure)
    doc = rep.to_dict()
    doc["alternative"] = spec.alternative
    doc["correction"] = spec.correction
    if args.out:
        dump_json(doc, args.out)
    _say(f"N = {rep.n_instances}, K = {rep.num_comparisons}, {rep.procedure}, "
         f"{spec.alternative}, n_sim = {rep.n_sim}")
    _say(f"FWER = {rep.fwer:.4f} (se {rep.fwer_se:.4f})")
    if rep.mean_power is not None:
        _say(f"mean power = {rep.mean_power:.4f} (se {rep.mean_power_se:.4f})")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="benchdesign", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="compute the number of instances")
    d.add_argument("--config", required=True)
    d.add_argument("--state", help="write a new state file")
    d.add_argument("--out", help="write the design document (JSON)")
    d.add_argument("--seed", type=int)
    d.set_defaults(func=cmd_design)

    def sampling_flags(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--n-max", type=int, dest="n_max")
        sp.add_argument("--se-star", type=float, dest="se_star")
        sp.add_argument("--n0", type=int)

    r = sub.add_parser("run", help="sample every instance (resumable)")
    r.add_argument("--state", required=True)
    r.add_argument("--config", help="used to create the state if it does not exist")
    r.add_argument("--max-instances", type=int, dest="max_instances",
                   help="stop after sampling this many new instances")
    sampling_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sample", help="sample one instance without touching the state")
    s.add_argument("--state")
    s.add_argument("--config")
    s.add_argument("--instance", required=True)
    s.add_argument("--out", help="write the instance report (JSON)")
    sampling_flags(s)
    s.set_defaults(func=cmd_sample)

    a = sub.add_parser("analyze", help="test hypotheses and write exports")
    a.add_argument("--state", required=True)
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("powercurve", help="mean power over a grid of effect sizes")
    c.add_argument("--config", required=True)
    c.add_argument("--n", type=int, required=True, help="number of instances")
    c.add_argument("--d-grid", dest="d_grid", default="0:1:0.05",
                   help="comma list or START:STOP:STEP (default 0:1:0.05)")
    c.add_argument("--out", help="CSV output (default stdout)")
    c.set_defaults(func=cmd_powercurve)

    v = sub.add_parser("validate", help="Monte Carlo check of a design")
    v.add_argument("--config", required=True)
    v.add_argument("--truth", help="JSON file with effect/structure/instance_sd")
    v.add_argument("--effect", type=float, help="true effect size (default d*)")
    v.add_argument("--structure", choices=("all-vs-one", "all-vs-all"))
    v.add_argument("--n-sim", type=int, dest="n_sim", default=10_000)
    v.add_argument("--procedure", choices=("holm", "bonferroni"), default="holm")
    v.add_argument("--seed", type=int)
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--out", help="write the validation report (JSON)")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        sys.stderr.close()
        return EXIT_OK
    except IncompleteDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunError, SampleSizeOverflow, PositivityError, BenchDesignError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
