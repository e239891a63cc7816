"""Output grammar: an optional think section followed by an answer with a boxed score."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
BOX_OPEN = "\\boxed{"

# optional leading zero, a point and 1-6 fraction digits, or a bare 0 / 1 / 1.0
_NUMERAL = re.compile(r"\s*(0?\.[0-9]{1,6}|[01]|1\.0)\s*")


def split_sections(raw_text: str) -> tuple[Optional[str], str]:
    """Return (think, answer). Without a leading, closed think block the
    whole text is the answer."""
    if raw_text.startswith(THINK_OPEN):
        end = raw_text.find(THINK_CLOSE, len(THINK_OPEN))
        if end >= 0:
            return raw_text[len(THINK_OPEN):end], raw_text[end + len(THINK_CLOSE):]
    return None, raw_text


def boxed_candidates(answer: str) -> list[str]:
    """Raw contents of every ``\\boxed{...}`` up to the first closing brace."""
    out = []
    start = answer.find(BOX_OPEN)
    while start >= 0:
        body_start = start + len(BOX_OPEN)
        end = answer.find("}", body_start)
        if end < 0:
            break
        out.append(answer[body_start:end])
        start = answer.find(BOX_OPEN, body_start)
    return out


def parse_numeral(content: str) -> Optional[float]:
    if "{" in content:
        return None  # nested braces are never a plain score
    m = _NUMERAL.fullmatch(content)
    if m is None:
        return None
    value = float(m.group(1))
    return value if 0.0 <= value <= 1.0 else None


def extract_score(answer: str) -> Optional[float]:
    """Last boxed decimal in [0, 1], or None when nothing parses."""
    for content in reversed(boxed_candidates(answer)):
        value = parse_numeral(content)
        if value is not None:
            return value
    return None


@dataclass(frozen=True)
class ModelOutput:
    raw_text: str
    think: Optional[str]
    answer: str
    token_length: int

    def __post_init__(self):
        if self.token_length < 0:
            raise ValueError("token_length must be non-negative")
        if self.think is not None:
            if self.raw_text != THINK_OPEN + self.think + THINK_CLOSE + self.answer:
                raise ValueError("raw_text does not match its sections")
        elif self.raw_text != self.answer:
            raise ValueError("without a think section the answer is the raw text")

    @classmethod
    def from_text(cls, raw_text: str, token_length: Optional[int] = None, vocab=None) -> "ModelOutput":
        if token_length is None:
            if vocab is None:
                from .vocab import default_vocabulary

                vocab = default_vocabulary()
            token_length = len(vocab.encode(raw_text))
        think, answer = split_sections(raw_text)
        return cls(raw_text, think, answer, token_length)

    @property
    def score(self) -> Optional[float]:
        return extract_score(self.answer)
