"""Run configuration: a single JSON document with named presets.

Errors carry the line of the offending key so that a bad config can be
fixed without guessing.  ``RunConfig.to_dict`` and ``RunConfig.from_dict``
round-trip losslessly.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .densities import Density, DensityError, parse_density
from .exhaustion import ExhaustionSchedule
from .groups import GroupDescriptorError, OrthogonalGroupSpec, parse_group
from .measure import TestSet, concentric_balls

CONFIG_TAG = "invariant-ma/config-1"

_TOP_KEYS = {"format", "n", "group", "f", "g", "schedule", "test_sets", "tolerances", "output_dir", "seed", "oracle"}
_SCHEDULE_KEYS = set(ExhaustionSchedule().to_config())
_TOLERANCE_DEFAULTS = {"cauchy": 5e-2, "weak_residual": 2e-2}
_ORACLE_DEFAULTS = {"r_max": 2.0, "steps": 1000, "pl_radius": 1.5, "pl_resolution": 201}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


@dataclass
class RunConfig:
    n: int
    group: object
    f: dict
    g: dict
    schedule: dict = field(default_factory=dict)
    test_sets: list | None = None
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "run"
    seed: int = 0
    oracle: dict = field(default_factory=dict)

    def group_spec(self) -> OrthogonalGroupSpec:
        return parse_group(self.group)

    def f_density(self) -> Density:
        return parse_density(self.f, self.n)

    def g_density(self) -> Density:
        return parse_density(self.g, self.n)

    def exhaustion_schedule(self) -> ExhaustionSchedule:
        return ExhaustionSchedule(**{**self.schedule, "k_values": tuple(self.schedule.get("k_values", (2, 4, 8, 16, 32)))})

    @property
    def eval_radius(self) -> float:
        return self.exhaustion_schedule().eval_radius

    def sets(self) -> list[TestSet]:
        if self.test_sets is None:
            return concentric_balls(self.n, self.eval_radius)
        return [TestSet.from_config(d, self.n) for d in self.test_sets]

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, _TOLERANCE_DEFAULTS[name]))

    def oracle_option(self, name: str):
        return self.oracle.get(name, _ORACLE_DEFAULTS[name])

    def to_dict(self) -> dict:
        d = {"format": CONFIG_TAG, "n": self.n, "group": self.group, "f": self.f, "g": self.g,
             "schedule": dict(self.schedule), "tolerances": dict(self.tolerances), "output_dir": self.output_dir,
             "seed": self.seed, "oracle": dict(self.oracle)}
        if self.test_sets is not None:
            d["test_sets"] = list(self.test_sets)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data, text: str | None = None, source: str = "<config>") -> "RunConfig":
        def fail(msg, key=None):
            raise ConfigError(msg, _line_of(text, key) if key else None, source)

        if not isinstance(data, dict):
            fail("config must be a JSON object")
        unknown = sorted(set(data) - _TOP_KEYS)
        if unknown:
            fail(f"unknown key {unknown[0]!r}", unknown[0])
        fmt = data.get("format", CONFIG_TAG)
        if fmt != CONFIG_TAG:
            fail(f"unsupported config format {fmt!r}", "format")
        for key in ("n", "group", "f", "g"):
            if key not in data:
                fail(f"missing required key {key!r}")
        n = data["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            fail("n must be a positive integer", "n")
        sched = data.get("schedule", {})
        if not isinstance(sched, dict):
            fail("schedule must be an object", "schedule")
        bad = sorted(set(sched) - _SCHEDULE_KEYS)
        if bad:
            fail(f"unknown schedule key {bad[0]!r}", bad[0])
        tols = data.get("tolerances", {})
        if not isinstance(tols, dict) or set(tols) - set(_TOLERANCE_DEFAULTS):
            fail(f"tolerances must be an object with keys from {sorted(_TOLERANCE_DEFAULTS)}", "tolerances")
        oracle = data.get("oracle", {})
        if not isinstance(oracle, dict) or set(oracle) - set(_ORACLE_DEFAULTS):
            fail(f"oracle must be an object with keys from {sorted(_ORACLE_DEFAULTS)}", "oracle")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            fail("seed must be a nonnegative integer", "seed")
        out = data.get("output_dir", "run")
        if not isinstance(out, str) or not out:
            fail("output_dir must be a nonempty string", "output_dir")
        test_sets = data.get("test_sets")
        if test_sets is not None and (not isinstance(test_sets, list) or not test_sets):
            fail("test_sets must be a nonempty list", "test_sets")
        cfg = cls(n, data["group"], data["f"], data["g"], dict(sched), test_sets, dict(tols), out, seed, dict(oracle))
        cfg.validate(text, source)
        return cfg

    def validate(self, text: str | None = None, source: str = "<config>") -> None:
        def fail(msg, key):
            raise ConfigError(msg, _line_of(text, key), source)

        try:
            grp = self.group_spec()
        except GroupDescriptorError as exc:
            fail(str(exc), "group")
        if grp.dimension != self.n:
            fail(f"group acts on R^{grp.dimension}, config has n = {self.n}", "group")
        for key in ("f", "g"):
            try:
                parse_density(getattr(self, key), self.n)
            except DensityError as exc:
                fail(f"{key}: {exc}", key)
        try:
            self.exhaustion_schedule()
        except (TypeError, ValueError) as exc:
            fail(f"schedule: {exc}", "schedule")
        try:
            self.sets()
        except (KeyError, TypeError, ValueError) as exc:
            fail(f"test_sets: {exc}", "test_sets")
        for name in self.tolerances:
            v = self.tolerances[name]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                fail(f"tolerance {name!r} must be a positive number", name)


def loads(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, source) from None
    return RunConfig.from_dict(data, text, source)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return loads(text, str(path))
