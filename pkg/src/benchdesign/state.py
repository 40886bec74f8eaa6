"""Durable experiment state and result exports.

State is one JSON document with an explicit ``schema_version``. Writes go
to a temporary file that is then renamed over the target, so a crash never
leaves a half-written state behind; a sidecar ``.lock`` file keeps two
processes from owning the same state at once.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock, Timeout

from .errors import ConfigError, IncompleteDesignError
from .power import DesignResult, DesignSpec
from .runner import RunnerSpec
from .sampler import InstanceSampleReport, SamplingConfig, num_comparisons

SCHEMA_VERSION = 1
STATUSES = ("designed", "sampling", "sampled", "analyzed")


def dump_json(obj, path):
    """Atomically write ``obj`` as JSON to ``path``."""
    path = Path(path)
    text = json.dumps(obj, indent=1, allow_nan=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


@dataclass
class ExperimentState:
    design: DesignSpec
    sampling: SamplingConfig
    algorithms: list[str] = field(default_factory=list)
    instances: list[str] = field(default_factory=list)
    runner: RunnerSpec | None = None
    global_seed: int = 0
    design_result: DesignResult | None = None
    reports: dict[str, InstanceSampleReport] = field(default_factory=dict)
    status: str = "designed"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})"
            )
        if self.status not in STATUSES:
            raise ConfigError(f"status must be one of {STATUSES}, got {self.status!r}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithm identifiers must be unique")
        if len(set(self.instances)) != len(self.instances):
            raise ConfigError("instance identifiers must be unique")
        extra = set(self.reports) - set(self.instances)
        if extra:
            raise ConfigError(f"reports for unknown instances: {sorted(extra)}")
        if self.sampling.reference_id is not None and self.algorithms \
                and self.sampling.reference_id not in self.algorithms:
            raise ConfigError(f"reference {self.sampling.reference_id!r} is not among the algorithms")
        if not isinstance(self.global_seed, int) or self.global_seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.global_seed!r}")

    # -- lifecycle -----------------------------------------------------------

    def advance(self, status: str):
        """Move forward to ``status``; moving backwards is an error."""
        if status not in STATUSES:
            raise ConfigError(f"unknown status {status!r}")
        if STATUSES.index(status) < STATUSES.index(self.status):
            raise ConfigError(f"cannot move state from {self.status!r} back to {status!r}")
        self.status = status

    def pending_instances(self):
        return [inst for inst in self.instances if inst not in self.reports]

    def missing_cells(self):
        missing = []
        for inst in self.instances:
            rep = self.reports.get(inst)
            for alg in self.algorithms:
                if rep is None or len(rep.observations.get(alg, ())) < 2:
                    missing.append((alg, inst))
        return missing

    def require_complete(self):
        missing = self.missing_cells()
        if missing:
            raise IncompleteDesignError(missing)

    def summaries(self):
        """instance -> algorithm -> summary value (mean or median)."""
        how = self.sampling.summary
        return {
            inst: {alg: obs.summary(how) for alg, obs in rep.observations.items()}
            for inst, rep in self.reports.items()
        }

    def num_comparisons(self):
        return num_comparisons(len(self.algorithms), self.sampling.all_vs_one)

    # -- serialisation -------------------------------------------------------

    def to_dict(self):
        order = {inst: n for n, inst in enumerate(self.instances)}
        reports = sorted(self.reports.items(), key=lambda kv: order[kv[0]])
        return {
            "schema_version": self.schema_version,
            "status": self.status,
            "global_seed": self.global_seed,
            "design": self.design.to_dict(),
            "design_result": None if self.design_result is None else self.design_result.to_dict(),
            "sampling": self.sampling.to_dict(),
            "algorithms": list(self.algorithms),
            "instances": list(self.instances),
            "runner": None if self.runner is None else self.runner.to_dict(),
            "reports": {inst: rep.to_dict() for inst, rep in reports},
        }

    @classmethod
    def from_dict(cls, data):
        try:
            version = data["schema_version"]
            if version != SCHEMA_VERSION:
                raise ConfigError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
            return cls(
                schema_version=version,
                status=data["status"],
                global_seed=data["global_seed"],
                design=DesignSpec.from_dict(data["design"]),
                design_result=None if data.get("design_result") is None
                else DesignResult.from_dict(data["design_result"]),
                sampling=SamplingConfig.from_dict(data["sampling"]),
                algorithms=list(data.get("algorithms", [])),
                instances=list(data.get("instances", [])),
                runner=None if data.get("runner") is None else RunnerSpec.from_dict(data["runner"]),
                reports={k: InstanceSampleReport.from_dict(v) for k, v in data.get("reports", {}).items()},
            )
        except KeyError as exc:
            raise ConfigError(f"state is missing field {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"malformed state: {exc}") from None

    def save(self, path):
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(load_json(path))


def state_lock(path, timeout: float = 0.5) -> FileLock:
    return FileLock(str(path) + ".lock", timeout=timeout)


def acquire(lock: FileLock):
    try:
        lock.acquire()
    except Timeout:
        raise ConfigError(f"state is in use by another process ({lock.lock_file})") from None
    return lock


# -- exports -----------------------------------------------------------------

HYPOTHESIS_COLUMNS = ["rank", "algorithm_i", "algorithm_j", "estimate", "se", "df", "t_stat",
                      "p_value", "alpha_r", "adjusted_p", "reject", "ci_low", "ci_high", "d_hat",
                      "degenerate", "test"]
SE_COLUMNS = ["instance", "algorithm_i", "algorithm_j", "phi_hat", "se", "budget_exhausted"]
RUN_COUNT_COLUMNS = ["instance", "algorithm", "runs"]
CURVE_COLUMNS = ["effect_size", "mean_power"]


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


@dataclass
class ResultsExport:
    """Delimiter-separated tables plus a JSON summary document.

    Files written by :meth:`write`: ``hypotheses.csv`` (one row per
    hypothesis, in Holm rank order), ``instance_se.csv`` (one row per
    instance and pair), ``run_counts.csv`` (one row per instance and
    algorithm), ``ci_chart.csv`` and, when a power curve is attached,
    ``power_curve.csv``.
    """

    hypotheses: list[dict]
    instance_se: list[dict]
    run_counts: list[dict]
    power_curve: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @classmethod
    def build(cls, state: ExperimentState, results, summary=None, curve=()):
        hyp = []
        for r in results:
            row = r.to_dict()
            row["algorithm_i"], row["algorithm_j"] = r.pair
            hyp.append(row)
        se_rows = []
        runs = []
        for inst in state.instances:
            rep = state.reports.get(inst)
            if rep is None:
                continue
            for est in rep.pair_estimates:
                se_rows.append({"instance": inst, "algorithm_i": est.pair[0],
                                "algorithm_j": est.pair[1], "phi_hat": est.phi_hat,
                                "se": est.se, "budget_exhausted": rep.budget_exhausted})
            for alg in state.algorithms:
                runs.append({"instance": inst, "algorithm": alg,
                             "runs": len(rep.observations[alg])})
        pc = [{"effect_size": p.effect_size, "mean_power": p.mean_power} for p in curve]
        return cls(hyp, se_rows, runs, pc, summary or {})

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "hypotheses.csv", HYPOTHESIS_COLUMNS, self.hypotheses)
        _write_csv(out / "instance_se.csv", SE_COLUMNS, self.instance_se)
        _write_csv(out / "run_counts.csv", RUN_COUNT_COLUMNS, self.run_counts)
        _write_csv(out / "ci_chart.csv", ["rank", "algorithm_i", "algorithm_j", "estimate",
                                          "ci_low", "ci_high", "reject"], self.hypotheses)
        if self.power_curve:
            _write_csv(out / "power_curve.csv", CURVE_COLUMNS, self.power_curve)
        dump_json(self.summary, out / "summary.json")
        return out
