"""Run configuration: flat ``section.key = value`` text with a strict schema."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from pathlib import Path

COMMANDS = ("simulate", "theorem1", "theorem2", "ode", "oracle", "sweep")
FAMILIES = ("theta-star", "thm1", "thm2")
LEMMAS = ("lll", "pot", "three", "all")
FRAMES = ("A1", "A2")
SWEEP_KEYS = ("delta", "epsilon", "gamma", "N")
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    pass


def _int(v: str) -> int:
    return int(v.strip())


def _float(v: str) -> float:
    return float(v.strip())


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str(v: str) -> str:
    return v.strip()


def _dt(v: str):
    s = v.strip().lower()
    return "auto" if s == "auto" else float(s)


def _float_list(v: str) -> tuple:
    return tuple(float(x) for x in v.split(",") if x.strip())


def _int_list(v: str) -> tuple:
    return tuple(int(x) for x in v.split(",") if x.strip())


def _window(v: str) -> tuple:
    lo, hi = (float(x) for x in v.split(","))
    return (lo, hi)


# key -> (parser, default)
SCHEMA = {
    "sim.N": (_int, 256),
    "sim.gamma": (_float, 1.0),
    "sim.dt": (_dt, "auto"),
    "sim.t_end": (_float, 1.0),
    "sim.checkpoint_interval": (_float, 0.5),
    "sim.snapshots": (_bool, False),
    "sim.prescale": (_float, 1.0),
    "data.family": (_str, "theta-star"),
    "data.delta": (_float, 0.05),
    "data.epsilon": (_float, 0.05),
    "data.blend_width": (_float, 0.1),
    "diag.hessian": (_bool, True),
    "tracer.epsilon": (_float, 0.01),
    "tracer.frame": (_str, "A1"),
    "thm2.C": (_float, 0.0),
    "thm2.window": (_window, (1.0, 4.0)),
    "ode.lemma": (_str, "all"),
    "ode.epsilon": (_float, 0.01),
    "ode.samples": (_int, 1000),
    "ode.random_draws": (_int, 5),
    "ode.draws": (_int, 20),
    "ode.bound": (_float, 0.009),
    "ode.n_legs": (_int, 10),
    "ode.N_max": (_int, 20),
    "sweep.delta": (_float_list, ()),
    "sweep.epsilon": (_float_list, ()),
    "sweep.gamma": (_float_list, ()),
    "sweep.N": (_int_list, ()),
    "sweep.workers": (_int, 1),
    "sweep.simulate": (_bool, False),
    "run.seed": (_int, 0),
}


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        merged = {k: d for k, (_, d) in SCHEMA.items()}
        merged.update(self.values)
        self.values = merged
        self.validate()

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        for k, v in updates.items():
            vals[k.replace("__", ".")] = v
        return RunConfig(self.command, vals)

    def with_values(self, updates: dict, command: str | None = None) -> "RunConfig":
        vals = dict(self.values)
        vals.update(updates)
        return RunConfig(command or self.command, vals)

    def validate(self) -> None:
        v = self.values
        n = v["sim.N"]
        if n < 8 or n & (n - 1):
            raise ConfigError(f"sim.N must be a power of two >= 8, got {n}")
        if not 0.5 <= v["sim.gamma"] <= 1.5:
            raise ConfigError(f"sim.gamma must lie in [0.5, 1.5], got {v['sim.gamma']}")
        if v["sim.dt"] != "auto" and not v["sim.dt"] > 0:
            raise ConfigError("sim.dt must be positive or 'auto'")
        if not v["sim.t_end"] > 0:
            raise ConfigError("sim.t_end must be positive")
        if not v["sim.checkpoint_interval"] > 0:
            raise ConfigError("sim.checkpoint_interval must be positive")
        if not v["sim.prescale"] > 0:
            raise ConfigError("sim.prescale must be positive")
        if v["data.family"] not in FAMILIES:
            raise ConfigError(f"data.family must be one of {', '.join(FAMILIES)}")
        if not 0 < v["data.delta"] <= 0.1:
            raise ConfigError("data.delta must lie in (0, 0.1]")
        if not 0 < v["data.epsilon"] <= 0.1:
            raise ConfigError("data.epsilon must lie in (0, 0.1]")
        if not 0 < v["data.blend_width"] <= 0.1:
            raise ConfigError("data.blend_width must lie in (0, 0.1]")
        if not 0 < v["tracer.epsilon"] <= 0.02:
            raise ConfigError("tracer.epsilon must lie in (0, 0.02]")
        if v["tracer.frame"] not in FRAMES:
            raise ConfigError(f"tracer.frame must be one of {', '.join(FRAMES)}")
        if v["thm2.C"] < 0:
            raise ConfigError("thm2.C must be nonnegative (0 disables the helper)")
        lo, hi = v["thm2.window"]
        if not 0 <= lo < hi:
            raise ConfigError("thm2.window must be an increasing pair")
        if v["ode.lemma"] not in LEMMAS:
            raise ConfigError(f"ode.lemma must be one of {', '.join(LEMMAS)}")
        if not 0 < v["ode.epsilon"] <= 0.01:
            raise ConfigError("ode.epsilon must lie in (0, 0.01]")
        if v["ode.samples"] < 100:
            raise ConfigError("ode.samples must be at least 100")
        if v["ode.random_draws"] < 0 or v["ode.draws"] < 0:
            raise ConfigError("draw counts must be nonnegative")
        if not 0 < v["ode.bound"] < 0.01:
            raise ConfigError("ode.bound must lie in (0, 0.01)")
        if v["ode.n_legs"] < 5:
            raise ConfigError("ode.n_legs must be at least 5")
        if v["ode.N_max"] < 1:
            raise ConfigError("ode.N_max must be positive")
        if v["sweep.workers"] < 1:
            raise ConfigError("sweep.workers must be at least 1")
        if not 0 <= v["run.seed"] <= MAX_SEED:
            raise ConfigError("run.seed must be an unsigned 64-bit integer")
        for key in ("sweep.delta", "sweep.epsilon", "sweep.gamma", "sweep.N"):
            for x in v[key]:
                probe = {"sweep.delta": "data.delta", "sweep.epsilon": "data.epsilon", "sweep.gamma": "sim.gamma", "sweep.N": "sim.N"}[key]
                try:
                    RunConfig("simulate", {**{k: d for k, (_, d) in SCHEMA.items()}, probe: x})
                except ConfigError as exc:
                    raise ConfigError(f"{key} entry {x}: {exc}") from None
        if self.command == "sweep" and not self.sweep_points():
            raise ConfigError("sweep grid is empty")
        if self.command == "theorem1" and v["data.family"] != "thm1":
            raise ConfigError("theorem1 needs data.family = thm1")
        if self.command == "theorem2" and v["data.family"] != "thm2":
            raise ConfigError("theorem2 needs data.family = thm2")

    def sweep_points(self) -> list[dict]:
        axes = [
            ("data.delta", self.values["sweep.delta"]),
            ("data.epsilon", self.values["sweep.epsilon"]),
            ("sim.gamma", self.values["sweep.gamma"]),
            ("sim.N", self.values["sweep.N"]),
        ]
        axes = [(k, vals) for k, vals in axes if vals]
        if not axes:
            return []
        keys = [k for k, _ in axes]
        return [dict(zip(keys, combo)) for combo in itertools.product(*(vals for _, vals in axes))]

    def canonical(self) -> str:
        """Serialization used for hashing and the manifest; parses back to the same config."""
        lines = [f"command={self.command}"]
        lines += [f"{k}={_fmt_value(self.values[k])}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def parse_config_text(text: str, command: str | None = None) -> RunConfig:
    values = {}
    cmd = command
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "command":
            if cmd is not None and value != cmd:
                raise ConfigError(f"line {lineno}: config is for {value!r}, not {cmd!r}")
            cmd = value
            continue
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if cmd is None:
        raise ConfigError("no command given")
    return RunConfig(cmd, values)


def load_config(path, command: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, command)
