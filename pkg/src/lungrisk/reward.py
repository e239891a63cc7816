"""Rule-based reward: score reward, format reward and length penalty."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .parse import THINK_CLOSE, THINK_OPEN, ModelOutput


class LengthMode(str, enum.Enum):
    LITERAL = "literal"
    MONOTONE = "monotone"


@dataclass(frozen=True)
class RewardConfig:
    t1: float = 0.45
    t2: float = 0.55
    l_max: int = 9_000
    l_completion: int = 10_000
    alpha: float = 1.0
    beta: float = 1.0
    length_mode: LengthMode = LengthMode.LITERAL

    def __post_init__(self):
        if not 0.0 <= self.t1 <= self.t2 <= 1.0:
            raise ValueError("need 0 <= t1 <= t2 <= 1")
        if not 0 < self.l_max < self.l_completion:
            raise ValueError("need 0 < l_max < l_completion")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        object.__setattr__(self, "length_mode", LengthMode(self.length_mode))


@dataclass(frozen=True)
class RewardBreakdown:
    score: float
    format: float
    length: float
    total: float


def _binary_label(label) -> int:
    value = int(label)
    if value not in (0, 1):
        raise ValueError(f"reward needs a 0/1 label, got {label!r}")
    return value


def score_reward(parsed: Optional[float], label, cfg: RewardConfig = RewardConfig()) -> float:
    """Piecewise-linear agreement between the boxed score and the label.

    -1 when nothing parsed. Label 0 earns 1 up to t1 and 1 - 2s above it;
    label 1 earns 2s - 1 up to t2 and 1 above it.
    """
    label = _binary_label(label)
    if parsed is None:
        return -1.0
    s = float(parsed)
    if label == 0:
        return 1.0 if s <= cfg.t1 else 1.0 - 2.0 * s
    return 1.0 if s > cfg.t2 else 2.0 * s - 1.0


def format_reward(raw_text: str) -> float:
    full = raw_text.startswith(THINK_OPEN) and THINK_CLOSE in raw_text[len(THINK_OPEN):]
    return 1.0 * full + 0.5 * (THINK_OPEN in raw_text) + 0.5 * (THINK_CLOSE in raw_text)


def length_penalty(length: int, cfg: RewardConfig = RewardConfig()) -> float:
    if length < 0 or length > cfg.l_completion:
        raise ValueError(f"length {length} outside [0, {cfg.l_completion}]")
    if length < cfg.l_max:
        return 0.0
    arg = (length - cfg.l_max) / (cfg.l_completion - cfg.l_max) * (math.pi / 2)
    if cfg.length_mode is LengthMode.MONOTONE:
        return -math.sin(arg)
    return -math.cos(arg)


def total_reward(output: ModelOutput, label, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    score = score_reward(output.score, label, cfg)
    fmt = format_reward(output.raw_text)
    length = length_penalty(output.token_length, cfg)
    return RewardBreakdown(score, fmt, length, cfg.alpha * score + cfg.beta * fmt + length)
