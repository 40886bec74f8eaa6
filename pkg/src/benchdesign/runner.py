"""Produce performance observations for (algorithm, instance, seed) triples.

Two kinds of runner exist:

* ``external`` spawns a command built from a template containing the
  placeholders ``{algorithm}``, ``{instance}`` and ``{seed}``. The child
  must exit with status 0 and print one JSON object with a numeric
  ``"value"`` field on a line of its own; every other line of output is
  treated as solver logging. If several result lines are printed the last
  one wins.
* ``synthetic`` draws from a normal, lognormal or uniform distribution
  whose location/scale depend on the algorithm and instance.

Every run gets its own seed from :func:`derive_seed`, so the order in
which runs execute never changes any individual result.
"""
from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import time
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

DISTRIBUTIONS = ("normal", "lognormal", "uniform")
DEFAULT_TIMEOUT = 3600.0
WORKERS_ENV = "BENCHDESIGN_WORKERS"


def derive_seed(global_seed: int, algorithm_index: int, instance_index: int,
                run_index: int, attempt: int = 0) -> int:
    """Seed for one run, a pure function of its coordinates in the experiment."""
    ss = np.random.SeedSequence([int(global_seed), algorithm_index, instance_index, run_index, attempt])
    return int(ss.generate_state(1, np.uint64)[0] & np.uint64(2**63 - 1))


def worker_cap(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, requested or 1)


@dataclass
class RunRecord:
    algorithm_id: str
    instance_id: str
    seed: int
    value: float | None
    wall_time: float
    status: str = "ok"  # ok | failed | timeout
    diagnostics: str = ""

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class SyntheticSpec:
    """Per-algorithm (location, scale) pairs with optional per-instance changes.

    ``instance_shift`` is added to the location of every algorithm on that
    instance (for lognormal, on the log scale). ``overrides`` maps an
    instance id to ``{algorithm_id: [loc, scale]}`` replacing the defaults.
    For ``uniform`` the location is the lower bound and the scale the
    width of the support.
    """

    distribution: str
    params: dict[str, list[float]]
    instance_shift: dict[str, float] = field(default_factory=dict)
    overrides: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        self.params = {k: [float(v[0]), float(v[1])] for k, v in self.params.items()}
        self.overrides = {
            inst: {k: [float(v[0]), float(v[1])] for k, v in per.items()}
            for inst, per in self.overrides.items()
        }
        for loc, scale in list(self.params.values()) + [
            v for per in self.overrides.values() for v in per.values()
        ]:
            if not (math.isfinite(loc) and math.isfinite(scale)) or scale < 0:
                raise ConfigError(f"synthetic parameters need finite loc and scale >= 0, got {(loc, scale)}")

    def location_scale(self, algorithm_id, instance_id):
        per = self.overrides.get(instance_id, {})
        if algorithm_id in per:
            loc, scale = per[algorithm_id]
        elif algorithm_id in self.params:
            loc, scale = self.params[algorithm_id]
        else:
            raise ConfigError(f"no synthetic parameters for algorithm {algorithm_id!r}")
        return loc + self.instance_shift.get(instance_id, 0.0), scale

    def check_positive(self, algorithms, instances):
        """Uniform supports must sit strictly above zero."""
        if self.distribution != "uniform":
            return
        for inst in instances:
            for alg in algorithms:
                loc, _ = self.location_scale(alg, inst)
                if loc <= 0:
                    raise ConfigError(
                        f"uniform runner for ({alg}, {inst}) has lower bound {loc} <= 0"
                    )


@dataclass
class ExternalSpec:
    command: str
    timeout: float = DEFAULT_TIMEOUT
    cwd: str | None = None

    def __post_init__(self):
        if not self.command.strip():
            raise ConfigError("external runner command is empty")
        if not self.timeout > 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout}")


@dataclass
class RunnerSpec:
    kind: str
    synthetic: SyntheticSpec | None = None
    external: ExternalSpec | None = None

    def __post_init__(self):
        if self.kind == "synthetic":
            if self.synthetic is None:
                raise ConfigError("synthetic runner needs a 'synthetic' section")
        elif self.kind == "external":
            if self.external is None:
                raise ConfigError("external runner needs an 'external' section")
        else:
            raise ConfigError(f"runner kind must be 'synthetic' or 'external', got {self.kind!r}")

    def to_dict(self):
        out = {"kind": self.kind}
        if self.synthetic is not None:
            out["synthetic"] = asdict(self.synthetic)
        if self.external is not None:
            out["external"] = asdict(self.external)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        syn = data.pop("synthetic", None)
        ext = data.pop("external", None)
        kind = data.pop("kind", None)
        if data:
            raise ConfigError(f"unknown runner fields: {sorted(data)}")
        try:
            return cls(
                kind=kind,
                synthetic=SyntheticSpec(**syn) if syn is not None else None,
                external=ExternalSpec(**ext) if ext is not None else None,
            )
        except TypeError as exc:
            raise ConfigError(f"invalid runner section: {exc}") from None


def _key(text):
    return zlib.crc32(str(text).encode("utf-8"))


def _draw(spec: SyntheticSpec, algorithm_id, instance_id, seed):
    loc, scale = spec.location_scale(algorithm_id, instance_id)
    rng = np.random.default_rng([seed, _key(algorithm_id), _key(instance_id)])
    if spec.distribution == "normal":
        return loc + scale * float(rng.standard_normal())
    if spec.distribution == "lognormal":
        return math.exp(loc + scale * float(rng.standard_normal()))
    return loc + scale * float(rng.random())


def parse_result_line(stdout: str):
    """Return (value, diagnostics) from the last JSON result line, or None."""
    found = None
    for line in stdout.splitlines():
        line = line.strip()
        if not (line.startswith("{") and line.endswith("}")):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and "value" in obj:
            found = obj
    if found is None:
        return None
    value = found["value"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        try:
            value = float(value)
        except (TypeError, ValueError):
            return None
    value = float(value)
    if not math.isfinite(value):
        return None
    diag = found.get("diagnostics", "")
    return value, diag if isinstance(diag, str) else json.dumps(diag)


def build_command(template: str, algorithm_id, instance_id, seed) -> list[str]:
    args = []
    for token in shlex.split(template):
        token = (
            token.replace("{algorithm}", str(algorithm_id))
            .replace("{instance}", str(instance_id))
            .replace("{seed}", str(seed))
        )
        args.append(token)
    return args


def _run_external(spec: ExternalSpec, algorithm_id, instance_id, seed):
    args = build_command(spec.command, algorithm_id, instance_id, seed)
    start = time.perf_counter()
    try:
        proc = subprocess.run(
            args, capture_output=True, text=True, timeout=spec.timeout, cwd=spec.cwd
        )
    except subprocess.TimeoutExpired:
        return RunRecord(algorithm_id, instance_id, seed, None, time.perf_counter() - start,
                         "timeout", f"no result within {spec.timeout} s")
    except OSError as exc:
        return RunRecord(algorithm_id, instance_id, seed, None, time.perf_counter() - start,
                         "failed", f"could not start {args[0]!r}: {exc}")
    elapsed = time.perf_counter() - start
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-5:]
        return RunRecord(algorithm_id, instance_id, seed, None, elapsed, "failed",
                         f"exit status {proc.returncode}: " + " | ".join(tail))
    parsed = parse_result_line(proc.stdout)
    if parsed is None:
        return RunRecord(algorithm_id, instance_id, seed, None, elapsed, "failed",
                         "no result line with a numeric 'value' field")
    value, diag = parsed
    return RunRecord(algorithm_id, instance_id, seed, value, elapsed, "ok", diag)


def run_once(spec: RunnerSpec, algorithm_id, instance_id, seed: int) -> RunRecord:
    """Execute one run and return its record; failures are reported, not raised."""
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    if spec.kind == "external":
        return _run_external(spec.external, algorithm_id, instance_id, seed)
    start = time.perf_counter()
    value = _draw(spec.synthetic, algorithm_id, instance_id, seed)
    return RunRecord(algorithm_id, instance_id, seed, value, time.perf_counter() - start)


class Runner:
    """Callable ``(algorithm_id, instance_id, seed) -> RunRecord`` bound to a spec."""

    def __init__(self, spec: RunnerSpec):
        self.spec = spec

    def __call__(self, algorithm_id, instance_id, seed):
        return run_once(self.spec, algorithm_id, instance_id, seed)
