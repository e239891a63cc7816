"""End-to-end glue shared by the command line and the acceptance suite."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import cohort
from .cohort import CohortMember, LabeledSample
from .config import PipelineConfig
from .errors import ConfigError
from .policy import PolicyParams
from .render import pick_style, render_record
from .train import EmitScope, TraceMode, build_distillation_set, grpo_train, policy_shape, sft_train
from .vocab import default_vocabulary

# fixed stream ids so each stage draws from its own seeded substream
_SPLIT, _TRAIN_PICK, _TEST_PICK, _DISTILL, _PROMPTS, _EVAL = range(6)


def split_members(members: Sequence[CohortMember], test_fraction: float, seed: int
                  ) -> tuple[list[CohortMember], list[CohortMember]]:
    """Patient-disjoint train/test split."""
    order = np.random.default_rng([seed, _SPLIT]).permutation(len(members))
    n_test = int(round(test_fraction * len(members)))
    test_idx = set(order[:n_test].tolist())
    train = [m for i, m in enumerate(members) if i not in test_idx]
    test = [m for i, m in enumerate(members) if i in test_idx]
    return train, test


def pick_samples(members: Sequence[CohortMember], horizons: Sequence[int], limit: int, seed: int,
                 stream: int) -> list[LabeledSample]:
    samples = cohort.build_samples(members, horizons)
    order = np.random.default_rng([seed, stream]).permutation(len(samples))[:limit]
    return [samples[i] for i in sorted(order)]


def train_test_samples(members: Sequence[CohortMember], cfg: PipelineConfig
                       ) -> tuple[list[LabeledSample], list[LabeledSample]]:
    train, test = split_members(members, cfg.test_fraction, cfg.seed)
    return (pick_samples(train, cfg.data.horizons, cfg.data.train_samples, cfg.seed, _TRAIN_PICK),
            pick_samples(test, cfg.data.horizons, cfg.data.test_samples, cfg.seed, _TEST_PICK))


def test_samples(members: Sequence[CohortMember], cfg: PipelineConfig) -> list[LabeledSample]:
    """The held-out samples of ``train_test_samples`` without building the training side."""
    _, test = split_members(members, cfg.test_fraction, cfg.seed)
    return pick_samples(test, cfg.data.horizons, cfg.data.test_samples, cfg.seed, _TEST_PICK)


def run_sft(cfg: PipelineConfig, train_samples: Sequence[LabeledSample],
            mode: Optional[TraceMode] = None) -> tuple[PolicyParams, list[dict]]:
    vocab = default_vocabulary()
    mode = TraceMode(mode or cfg.sft_mode)
    examples = build_distillation_set(train_samples, mode, np.random.default_rng([cfg.seed, _DISTILL]),
                                      vocab, cfg.styles, positive_repeats=cfg.sft.positive_repeats)
    if not examples:
        raise ConfigError("no training samples survived the rejection filter")
    shape = policy_shape(vocab, EmitScope.TEACHER, cfg.sft_model.embed_dim, cfg.sft_model.window,
                         [p for p, _ in examples])
    return sft_train(cfg.sft, examples, shape)


def rl_prompts(samples: Sequence[LabeledSample], cfg: PipelineConfig) -> list[tuple[list[int], int]]:
    vocab = default_vocabulary()
    rng = np.random.default_rng([cfg.seed, _PROMPTS])
    return [(vocab.encode(render_record(s, pick_style(cfg.styles, rng), rng, vocab).text), int(s.label))
            for s in samples]


def run_grpo(cfg: PipelineConfig, train_samples: Sequence[LabeledSample],
             init: Optional[PolicyParams] = None) -> tuple[PolicyParams, list[dict]]:
    vocab = default_vocabulary()
    prompts = rl_prompts(train_samples, cfg)
    if init is not None:
        shape = init.shape
    else:
        shape = policy_shape(vocab, cfg.grpo_emit, cfg.grpo_model.embed_dim, cfg.grpo_model.window,
                             [p for p, _ in prompts])
    return grpo_train(cfg.grpo, prompts, shape, init, vocab)


def eval_seed(cfg: PipelineConfig) -> int:
    return int(np.random.default_rng([cfg.seed, _EVAL]).integers(2**31))
