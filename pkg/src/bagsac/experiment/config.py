"""Run configuration: dataclasses plus an INI-style reader/writer.

Files have the sections ``env, pomdp, method, sac, guidance, ensemble,
schedule``; every key maps to a dataclass field and unknown keys are
rejected. ``to_ini`` emits the fully-resolved config in canonical order so
its hash identifies a run.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..guidance import GuidanceSchedule
from ..highway import EnvConfig
from ..pomdp import PomdpLevel, level as make_level
from ..uncertainty import TARGET_MODES

METHODS = ("vanilla_sac", "gsac_fixed", "ba_gsac", "linear_decay", "gsac_threshold")
GUIDED = ("gsac_fixed", "ba_gsac", "linear_decay", "gsac_threshold")


@dataclass
class PomdpConfig:
    level: str = "severe"
    noise_sigma: float | None = None
    occlusion_rate: float | None = None
    history: int | None = None  # None: 3, or 1 for vanilla_sac


@dataclass
class MethodConfig:
    name: str = "ba_gsac"
    fixed_lambda: float = 0.1


@dataclass
class SacConfig:
    alpha: float = 0.2
    alpha_mode: str = "fixed"
    target_entropy: float = -2.0
    gamma: float = 0.99
    lr: float = 3e-4
    hidden: int = 128
    batch_size: int = 128
    updates_per_step: int = 1
    polyak: float = 0.995
    buffer_size: int = 50_000


@dataclass
class GuidanceConfig:
    lambda_min: float = 0.01
    lambda_max: float = 0.5
    warmup: int = 800
    decay_steps: int | None = None  # None: total_steps


@dataclass
class EnsembleConfig:
    size: int = 5
    hidden: int = 64
    lr: float = 3e-4
    batch_size: int | None = None  # None: sac.batch_size
    target_mode: str = "partial_obs"
    enabled: bool | None = None  # None: on for ba_gsac / gsac_threshold
    report_samples: int = 2000


@dataclass
class ScheduleConfig:
    seed: int = 42
    total_steps: int = 50_000
    eval_every: int = 1_500
    eval_episodes: int = 5


SECTIONS = {
    "env": EnvConfig,
    "pomdp": PomdpConfig,
    "method": MethodConfig,
    "sac": SacConfig,
    "guidance": GuidanceConfig,
    "ensemble": EnsembleConfig,
    "schedule": ScheduleConfig,
}


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    pomdp: PomdpConfig = field(default_factory=PomdpConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)

    # -- resolved views ----------------------------------------------
    @property
    def guided(self) -> bool:
        return self.method.name in GUIDED

    @property
    def history_len(self) -> int:
        if self.pomdp.history is not None:
            return self.pomdp.history
        return 1 if self.method.name == "vanilla_sac" else 3

    @property
    def level(self) -> PomdpLevel:
        return make_level(self.pomdp.level, self.pomdp.noise_sigma, self.pomdp.occlusion_rate)

    @property
    def ensemble_enabled(self) -> bool:
        if self.ensemble.enabled is not None:
            return self.ensemble.enabled
        return self.method.name in ("ba_gsac", "gsac_threshold") and self.ensemble.size >= 2

    @property
    def ensemble_batch(self) -> int:
        return self.ensemble.batch_size or self.sac.batch_size

    @property
    def seed(self) -> int:
        return self.schedule.seed

    def schedule_for_method(self) -> GuidanceSchedule | None:
        g, name = self.guidance, self.method.name
        common = dict(lambda_min=g.lambda_min, lambda_max=g.lambda_max, warmup_steps=g.warmup)
        if name == "vanilla_sac":
            return None
        if name == "gsac_fixed":
            return GuidanceSchedule("fixed", value=self.method.fixed_lambda, **common)
        if name == "linear_decay":
            return GuidanceSchedule("linear_decay", decay_steps=g.decay_steps or self.schedule.total_steps, **common)
        if name == "gsac_threshold":
            return GuidanceSchedule("threshold", **common)
        return GuidanceSchedule("adaptive", single_member=self.ensemble.size < 2, **common)

    def validate(self) -> "RunConfig":
        m = self.method.name
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        self.env.validate()
        _ = self.level
        s = self.schedule
        if s.total_steps < 0 or s.eval_every <= 0 or s.eval_episodes < 1:
            raise ConfigError("schedule: total_steps >= 0, eval_every > 0, eval_episodes >= 1 required")
        if self.history_len < 1:
            raise ConfigError("pomdp.history must be >= 1")
        if m == "vanilla_sac" and self.history_len != 1:
            raise ConfigError("vanilla_sac uses no history; pomdp.history must be 1")
        if m == "gsac_fixed" and self.method.fixed_lambda < 0:
            raise ConfigError("method.fixed_lambda must be >= 0")
        if self.sac.alpha_mode not in ("fixed", "auto") or self.sac.alpha <= 0:
            raise ConfigError("sac.alpha must be > 0 and alpha_mode fixed|auto")
        if not 0.0 <= self.sac.gamma < 1.0 or not 0.0 <= self.sac.polyak <= 1.0:
            raise ConfigError("sac.gamma must lie in [0, 1) and sac.polyak in [0, 1]")
        if min(self.sac.batch_size, self.sac.hidden, self.sac.buffer_size, self.sac.updates_per_step) < 1:
            raise ConfigError("sac sizes must be positive")
        if self.ensemble.target_mode not in TARGET_MODES:
            raise ConfigError(f"ensemble.target_mode must be one of {TARGET_MODES}")
        if self.ensemble.size < 1:
            raise ConfigError("ensemble.size must be >= 1")
        if m in ("ba_gsac", "gsac_threshold") and self.ensemble.enabled is False:
            raise ConfigError(f"{m} needs the ensemble")
        if m == "gsac_threshold" and self.ensemble.size < 2:
            raise ConfigError("gsac_threshold needs ensemble.size >= 2 for disagreement")
        needs_cal = m in ("ba_gsac", "gsac_threshold") and self.ensemble.size >= 2
        if needs_cal and self.guidance.warmup < 10:
            raise ConfigError("calibration needs guidance.warmup >= 10")
        sched = self.schedule_for_method()
        del sched  # constructing it validates lambda ranges
        return self

    # -- serialisation -----------------------------------------------
    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            obj = getattr(self, name)
            parser[name] = {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def with_overrides(self, overrides: dict[str, dict[str, str]]) -> "RunConfig":
        """Copy with ``{section: {key: text}}`` overrides applied and validated."""
        sections = {}
        for name, cls in SECTIONS.items():
            obj = getattr(self, name)
            values = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
            for key, text in overrides.get(name, {}).items():
                values[key] = _parse_field(cls, name, key, text)
            sections[name] = cls(**values)
        unknown = set(overrides) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        return RunConfig(**sections).validate()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _field_types(cls) -> dict[str, object]:
    return typing.get_type_hints(cls)


def _parse_field(cls, section: str, key: str, text):
    hints = _field_types(cls)
    if key not in hints:
        raise ConfigError(f"unknown key {section}.{key}")
    if not isinstance(text, str):
        return text
    tp = hints[key]
    args = typing.get_args(tp)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), tp) if args else tp
    text = text.strip()
    if optional and text.lower() in ("", "none"):
        return None
    if text == "":
        raise ConfigError(f"{section}.{key} may not be empty")
    try:
        if base is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if base is int:
            return int(text.replace("_", ""))
        if base is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r} as {getattr(base, '__name__', base)}") from None


def parse_ini(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def loads(text: str) -> RunConfig:
    return RunConfig().with_overrides(parse_ini(text))


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())
