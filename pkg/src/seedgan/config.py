"""Flat ``section.key = value`` configuration with typed sections.

Example::

    # comments start with '#'
    gan.n_critic = 5
    gan.lr = 5e-5
    model.gen_hidden = 1024,1024,1024,1024
    fuzz.time_budget = 600
    plan.groups = AFL,GAN-AFL,WGAN-AFL

Unknown sections or keys are errors.  Later assignments win, so flags
given on the command line override the file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .collect import CollectConfig
from .corpus import MAX_TESTCASE_LEN, QualityConfig
from .fuzzer import FuzzConfig
from .gan import GanSpec, TrainConfig

GROUPS = ("AFL", "GAN-AFL", "WGAN-AFL")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Network shape knobs; ``output_size = 0`` means "use the corpus maxlen"."""

    output_size: int = 0
    noise_dim: int = 100
    gen_hidden: tuple[int, ...] = (1024, 1024, 1024, 1024)
    critic_hidden: tuple[int, ...] = (256, 256)
    gen_activation: str = "relu"
    leaky_slope: float = 0.2

    def spec_for(self, maxlen: int) -> GanSpec:
        if self.output_size and self.output_size != maxlen:
            raise ConfigError(
                f"model.output_size={self.output_size} contradicts corpus maxlen {maxlen}"
            )
        return GanSpec(
            output_size=maxlen,
            noise_dim=self.noise_dim,
            gen_hidden=self.gen_hidden,
            critic_hidden=self.critic_hidden,
            gen_activation=self.gen_activation,
            leaky_slope=self.leaky_slope,
        )


@dataclass(frozen=True)
class SelectConfig:
    samples: int = 64
    validity_weight: float = 0.7
    diversity_weight: float = 0.3


@dataclass(frozen=True)
class PlanConfig:
    groups: tuple[str, ...] = GROUPS
    targets: tuple[str, ...] = ("cnk",)
    trials: int = 5
    budget: float = 600.0
    exec_budget: int = 0  # > 0 switches trials to determinism mode
    bootstrap_budget: float = 300.0
    bootstrap_exec_budget: int = 0
    seeds_per_group: int = 32
    seed_base: int = 0


@dataclass(frozen=True)
class RunConfig:
    fuzz: FuzzConfig = FuzzConfig()
    gan: TrainConfig = TrainConfig()
    model: ModelConfig = ModelConfig()
    quality: QualityConfig = QualityConfig()
    collect: CollectConfig = CollectConfig()
    select: SelectConfig = SelectConfig()
    plan: PlanConfig = PlanConfig()

    def validate(self) -> RunConfig:
        if not 0 < self.collect.max_len <= MAX_TESTCASE_LEN:
            raise ConfigError(f"collect.max_len must be in 1..{MAX_TESTCASE_LEN}")
        if self.model.output_size % 32:
            raise ConfigError("model.output_size must be a multiple of 32 (or 0)")
        if self.model.output_size and self.model.output_size < self.collect.max_len:
            raise ConfigError("model.output_size is narrower than collect.max_len")
        bad = [g for g in self.plan.groups if g not in GROUPS]
        if bad:
            raise ConfigError(f"unknown group(s) {bad}; expected a subset of {list(GROUPS)}")
        if self.plan.trials < 1:
            raise ConfigError("plan.trials must be >= 1")
        if self.plan.seeds_per_group < 1:
            raise ConfigError("plan.seeds_per_group must be >= 1")
        if self.select.samples < 1:
            raise ConfigError("select.samples must be >= 1")
        return self


_SECTIONS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(raw: str, annotation: str, default):
    raw = raw.strip()
    ann = annotation.replace(" ", "")
    if raw.lower() in ("none", "null") and "None" in ann:
        return None
    if ann.startswith("tuple"):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if "int" in ann:
            return tuple(int(s) for s in items)
        return tuple(items)
    if ann == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if "int" in ann and "float" not in ann:
        return int(raw)
    if "float" in ann:
        return float(raw)
    if ann == "str":
        return raw
    raise ValueError(f"cannot parse values of type {annotation}")


def parse_assignments(lines, source: str = "<config>") -> list[tuple[str, str, str]]:
    """Split ``section.key = value`` lines into triples, skipping blanks/comments."""
    out = []
    for n, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{n}: expected section.key = value")
        lhs, value = (s.strip() for s in text.split("=", 1))
        if lhs.count(".") != 1:
            raise ConfigError(f"{source}:{n}: key {lhs!r} needs exactly one section prefix")
        section, key = lhs.split(".")
        out.append((section, key, value))
    return out


def apply_assignments(cfg: RunConfig, assignments, source: str = "<config>") -> RunConfig:
    updates: dict[str, dict] = {}
    for section, key, value in assignments:
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section {section!r}")
        sub = getattr(cfg, section)
        fields = {f.name: f for f in dataclasses.fields(sub)}
        if key not in fields:
            raise ConfigError(f"{source}: unknown key {section}.{key}")
        f = fields[key]
        try:
            updates.setdefault(section, {})[key] = _coerce(value, str(f.type), getattr(sub, key))
        except ValueError as exc:
            raise ConfigError(f"{source}: {section}.{key}: {exc}") from None
    changed = {}
    for section, kv in updates.items():
        try:
            changed[section] = dataclasses.replace(getattr(cfg, section), **kv)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: invalid {section} settings: {exc}") from None
    return dataclasses.replace(cfg, **changed)


def load_config(path=None, overrides=(), base: RunConfig | None = None) -> RunConfig:
    """File settings first, then ``overrides`` (``"section.key=value"`` strings)."""
    cfg = base or RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"{p}: {exc.strerror}") from None
        cfg = apply_assignments(cfg, parse_assignments(text.splitlines(), str(p)), str(p))
    if overrides:
        cfg = apply_assignments(cfg, parse_assignments(overrides, "--set"), "--set")
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in _SECTIONS:
        sub = getattr(cfg, name)
        for f in dataclasses.fields(sub):
            v = getattr(sub, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif dataclasses.is_dataclass(v):
                continue
            lines.append(f"{name}.{f.name} = {v}")
    return "\n".join(lines) + "\n"
