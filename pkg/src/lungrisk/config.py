"""Pipeline configuration read from an INI file and overridden by flags.

Sections and keys (defaults in parentheses):

[run]     seed (0)
[cohort]  size (5000), prevalence (0.045), compliance (0.95), test_fraction (0.2)
[render]  styles (template,table,free_text,narrative)
[data]    horizons (1), train_samples (5000), test_samples (1000)
[reward]  t1 (0.45), t2 (0.55), l_max (9000), l_completion (10000), alpha (1), beta (1),
          length_mode (literal)
[clip]    eps_low (0.2), eps_high (0.28)
[sft]     mode (think), epochs (4), batch_size (32), lr (0.01), optimizer (adam),
          momentum (0), init_scale (0.1), positive_repeats (5), embed_dim (32), window (64)
[grpo]    steps (2000), group_size (8), prompts_per_step (8), max_len (8),
          temperature (1), lr (1), optimizer (sgd), momentum (0), init_scale (0.1),
          inner_epochs (1), balance_labels (true), max_grad_norm (0.5), emit (plain),
          embed_dim (16), window (32)
[eval]    max_len (256)

``optimizer`` is sgd or adam. ``emit`` picks what a freshly initialised RL
policy may generate: plain (box and numerals), answer (plus think tags) or
teacher (the full trace vocabulary). ``max_grad_norm`` rescales larger
gradients down to that norm; set it to ``none`` to disable.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cohort import HORIZONS, CohortConfig
from .errors import ConfigError
from .render import RenderStyle
from .reward import LengthMode, RewardConfig
from .train import ClipConfig, EmitScope, GRPOConfig, SFTConfig, TraceMode


@dataclass(frozen=True)
class DataConfig:
    horizons: tuple[int, ...] = (1,)
    train_samples: int = 5000
    test_samples: int = 1000

    def __post_init__(self):
        if not self.horizons or any(h not in HORIZONS for h in self.horizons):
            raise ConfigError(f"horizons must be drawn from {HORIZONS}")
        if self.train_samples < 1 or self.test_samples < 1:
            raise ConfigError("sample counts must be positive")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 16
    window: int = 32

    def __post_init__(self):
        if self.embed_dim < 1 or self.window < 1:
            raise ConfigError("embed_dim and window must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    cohort_size: int = 5000
    prevalence: float = 0.045
    compliance: float = 0.95
    test_fraction: float = 0.2
    styles: tuple[RenderStyle, ...] = tuple(RenderStyle)
    data: DataConfig = field(default_factory=DataConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    clip: ClipConfig = field(default_factory=ClipConfig)
    sft_mode: TraceMode = TraceMode.THINK
    sft: SFTConfig = field(default_factory=SFTConfig)
    sft_model: ModelConfig = field(default_factory=lambda: ModelConfig(32, 64))
    grpo: GRPOConfig = field(default_factory=GRPOConfig)
    grpo_emit: EmitScope = EmitScope.PLAIN
    grpo_model: ModelConfig = field(default_factory=ModelConfig)
    eval_max_len: int = 256

    def __post_init__(self):
        if self.cohort_size < 1:
            raise ConfigError("cohort size must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.eval_max_len < 1:
            raise ConfigError("eval max_len must be positive")
        if not self.styles:
            raise ConfigError("at least one render style is required")

    def cohort_config(self) -> CohortConfig:
        try:
            return CohortConfig(size=self.cohort_size, prevalence=self.prevalence, compliance=self.compliance)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        def plain(v):
            if dataclasses.is_dataclass(v):
                return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            if hasattr(v, "value"):
                return v.value
            return v

        return plain(self)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() == "none" else float(text)


_GETTERS = {int: "getint", float: "getfloat", bool: "getboolean", str: "get"}


def _collect(cp: configparser.ConfigParser, name: str, types: dict) -> dict:
    """Typed values of section ``name``; unknown keys are rejected."""
    out = {}
    if cp.has_section(name):
        for key in cp[name]:
            if key not in types:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            conv = types[key]
            try:
                if conv in _GETTERS:
                    out[key] = getattr(cp[name], _GETTERS[conv])(key)
                else:
                    out[key] = conv(cp[name][key])
            except ValueError as e:
                raise ConfigError(f"[{name}] {key}: {e}") from None
    return out


def _section(cp: configparser.ConfigParser, name: str, cls, types: dict):
    try:
        return cls(**_collect(cp, name, types))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{name}] {e}") from None


_SFT_KEYS = {"mode": str, "epochs": int, "batch_size": int, "lr": float, "optimizer": str,
             "momentum": float, "init_scale": float, "positive_repeats": int, "embed_dim": int,
             "window": int}
_GRPO_KEYS = {"steps": int, "group_size": int, "prompts_per_step": int, "max_len": int,
              "temperature": float, "lr": float, "optimizer": str, "momentum": float,
              "init_scale": float, "inner_epochs": int, "balance_labels": bool,
              "max_grad_norm": _optional_float, "emit": str, "embed_dim": int, "window": int}
_KNOWN_SECTIONS = {"run", "cohort", "render", "data", "reward", "clip", "sft", "grpo", "eval"}


def _split(d: dict, keys: tuple[str, ...]) -> tuple[dict, dict]:
    a = {k: v for k, v in d.items() if k in keys}
    return a, {k: v for k, v in d.items() if k not in keys}


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read ``path`` (if any) and apply ``overrides`` of the form {"section.key": value}."""
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}") from None
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = str(value).lower() if isinstance(value, bool) else str(value)
    unknown = set(cp.sections()) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    run = _collect(cp, "run", {"seed": int})
    cohort = _collect(cp, "cohort", {"size": int, "prevalence": float, "compliance": float,
                                     "test_fraction": float})
    render = _collect(cp, "render", {"styles": str})
    evalsec = _collect(cp, "eval", {"max_len": int})
    seed = run.get("seed", 0)
    try:
        styles = tuple(RenderStyle(s.strip()) for s in render.get("styles", "").split(",") if s.strip()) \
            or tuple(RenderStyle)
        data = _section(cp, "data", DataConfig, {"horizons": _ints, "train_samples": int, "test_samples": int})
        reward = _section(cp, "reward", RewardConfig,
                          {"t1": float, "t2": float, "l_max": int, "l_completion": int, "alpha": float,
                           "beta": float, "length_mode": LengthMode})
        clip = _section(cp, "clip", ClipConfig, {"eps_low": float, "eps_high": float})
        sft_all = _collect(cp, "sft", _SFT_KEYS)
        sft_model, sft_rest = _split(sft_all, ("embed_dim", "window"))
        sft_mode = TraceMode(sft_rest.pop("mode", "think"))
        sft = SFTConfig(seed=seed, **sft_rest)
        grpo_all = _collect(cp, "grpo", _GRPO_KEYS)
        grpo_model, grpo_rest = _split(grpo_all, ("embed_dim", "window"))
        grpo_emit = EmitScope(grpo_rest.pop("emit", "plain"))
        grpo = GRPOConfig(seed=seed, clip=clip, reward=reward, **grpo_rest)
        return PipelineConfig(
            seed=seed,
            cohort_size=cohort.get("size", 5000),
            prevalence=cohort.get("prevalence", 0.045),
            compliance=cohort.get("compliance", 0.95),
            test_fraction=cohort.get("test_fraction", 0.2),
            styles=styles,
            data=data,
            reward=reward,
            clip=clip,
            sft_mode=sft_mode,
            sft=sft,
            sft_model=ModelConfig(**{"embed_dim": 32, "window": 64, **sft_model}),
            grpo=grpo,
            grpo_emit=grpo_emit,
            grpo_model=ModelConfig(**grpo_model),
            eval_max_len=evalsec.get("max_len", 256),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
