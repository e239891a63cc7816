"""Word-level vocabulary shared by rendered inputs, teacher traces and the policy."""

from __future__ import annotations

import functools
import re
from typing import Iterable, Sequence

from . import cohort, render

PAD, EOS, UNK = "<pad>", "<eos>", "<unk>"
THINK_OPEN, THINK_CLOSE, BOX_OPEN, BOX_CLOSE = "<think>", "</think>", "\\boxed{", "}"
SPECIALS = (PAD, EOS, UNK, THINK_OPEN, THINK_CLOSE, BOX_OPEN)
CHARS = tuple(" \n()+,-.:;=?|" + BOX_CLOSE) + tuple("0123456789")

# words of the render templates and teacher traces that are not enumerated
# by the domain constants
_TEMPLATE_TEXT = """
demographics age height cm weight kg education smoking history smoker cigarettes per day
years smoked since quitting pack disease personal cancer family lung first degree relative
relatives work alcohol drinks week ct scan year no abnormal findings item value sex race
ethnicity status finding location size margin attenuation change year old and for quit ago
prior diseases cancers with occupational exposures alcoholic there is i am seeing a patient
tall who in total the medical includes reports he she on see mm nodule
equation risk estimate score exposure other present none
"""

_WORD = re.compile(r"[a-z]+")


def _lexicon() -> list[str]:
    sources: list[str] = [_TEMPLATE_TEXT]
    for group in (
        cohort.SEXES, cohort.RACES, cohort.ETHNICITIES, cohort.EDUCATION_LEVELS,
        cohort.SMOKING_STATUSES, cohort.DISEASES, cohort.CANCERS, cohort.EXPOSURES,
        cohort.LOBES, cohort.MARGINS, cohort.ATTENUATIONS, cohort.CHANGES, cohort.OPPORTUNISTIC,
        render.QUESTION_BANK, tuple(render.HORIZON_WORDS.values()), tuple(render.SCAN_WORDS.values()),
    ):
        sources.extend(group)
    words = set()
    for s in sources:
        words.update(_WORD.findall(s.replace("{n}", " ").replace("{years}", " ").replace("{scan}", " ")))
    return sorted(words)


class Vocabulary:
    """Ordered token set with lossless encoding of pipeline strings.

    Lower-case words of the lexicon are single tokens, other characters are
    single-character tokens; anything else becomes ``<unk>``.
    """

    def __init__(self, tokens: Sequence[str]):
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens")
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.pad_id = self.index[PAD]
        self.eos_id = self.index[EOS]
        self.unk_id = self.index[UNK]
        specials = "|".join(re.escape(s) for s in (THINK_OPEN, THINK_CLOSE, BOX_OPEN))
        self._pattern = re.compile(rf"{specials}|[a-z]+|.", re.DOTALL)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        ids = []
        for m in self._pattern.finditer(text):
            piece = m.group()
            if piece in self.index:
                ids.append(self.index[piece])
            elif piece.isalpha() and piece.isascii():
                # unknown word: letters that happen to be one-letter words, else unk
                ids.extend(self.index.get(ch, self.unk_id) for ch in piece)
            else:
                ids.append(self.unk_id)
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            tok = self.tokens[i]
            if tok == EOS:
                break
            if tok == PAD:
                continue
            out.append("�" if tok == UNK else tok)
        return "".join(out)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.index[t] for t in tokens]


@functools.lru_cache(maxsize=None)
def default_vocabulary() -> Vocabulary:
    return Vocabulary(SPECIALS + CHARS + tuple(_lexicon()))
