"""Distillation from a scripted teacher and group-relative policy optimisation."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import cohort
from .cohort import Label, LabeledSample, RiskCoefficients
from .errors import ConfigError
from .parse import BOX_OPEN, THINK_CLOSE, THINK_OPEN, ModelOutput, extract_score
from .policy import (Completion, PolicyParams, PolicyShape, TokenBatch, backward, forward,
                     make_optimizer, prompt_offset, sample_batch)
from .render import RenderStyle, pick_style, render_record
from .reward import RewardBreakdown, RewardConfig, total_reward
from .vocab import BOX_CLOSE, Vocabulary, default_vocabulary

log = logging.getLogger(__name__)


class TraceMode(str, enum.Enum):
    PLAIN = "plain"
    THINK = "think"


@dataclass(frozen=True)
class OracleTeacherTrace:
    mode: TraceMode
    text: str
    target_score: float

    def __post_init__(self):
        if extract_score(ModelOutput.from_text(self.text, 0).answer) != self.target_score:
            raise ValueError("trace does not box its target score")


# --------------------------------------------------------------------------
# scripted teacher

# boxed scores stay on the label's side of the decision threshold and on the
# rewarded side of the default reward thresholds
NEGATIVE_CAP = 0.45
POSITIVE_FLOOR = 0.56

_RELEVANT_DISEASES = ("emphysema", "copd", "chronic bronchitis")
_FLAGGED_FINDINGS = ("adenopathy or mass", "emphysema")


def _signed(x: float) -> str:
    x = round(x, 1) + 0.0
    return f"{'-' if x < 0 else '+'}{abs(x):.1f}"


def teacher_factors(sample: LabeledSample, coefs: RiskCoefficients) -> list[tuple[str, str, float]]:
    """(factor, description, contribution) lines in a fixed order."""
    p = sample.patient
    clinical = cohort.clinical_terms(p, coefs)
    imaging = cohort.imaging_terms(sample.exams, coefs)
    ref = sample.exams[-1]
    dom = cohort.dominant_nodule(ref, coefs)
    nodule = "none" if dom is None else f"{dom.margin} {dom.attenuation} {dom.change}"
    diseases = [d for d in _RELEVANT_DISEASES if d in p.disease_history]
    exposures = [e for e in cohort.EXPOSURES
                 if e in cohort.CARCINOGENIC_EXPOSURES and e in p.work_history]
    others = {f.abnormality for f in ref.findings if f.kind == "opportunistic"}
    flagged = [a for a in _FLAGGED_FINDINGS if a in others]
    return [
        ("nodule", nodule, imaging["nodule"]),
        ("smoking", p.smoking.status, clinical["smoking"]),
        ("age", "", clinical["age"]),
        ("lung disease", ", ".join(diseases) or "none", clinical["lung disease"]),
        ("family history", "present" if p.family_lung_cancer else "none", clinical["family history"]),
        ("exposure", ", ".join(exposures) or "none", clinical["exposure"]),
        ("prior cancer", "present" if p.personal_cancer_history else "none", clinical["prior cancer"]),
        ("other findings", ", ".join(flagged) or "none", imaging["other findings"]),
    ]


def make_teacher_trace(sample: LabeledSample, mode: TraceMode, rng: Optional[np.random.Generator] = None,
                       coefs: RiskCoefficients = RiskCoefficients()) -> OracleTeacherTrace:
    """Label-consistent trace built from the generator's own risk terms.

    The scripted teacher is deterministic; ``rng`` is accepted so sampled
    teachers can share the interface.
    """
    label = Label(int(sample.label))
    if label is Label.EXCLUDED:
        raise ValueError("cannot write a trace for an excluded sample")
    mode = TraceMode(mode)
    factors = teacher_factors(sample, coefs)
    rounded = [round(v, 1) + 0.0 for _, _, v in factors]
    z = coefs.teacher_intercept + sum(rounded)
    estimate = min(round(1.0 / (1.0 + math.exp(-z)), 2), 0.99)  # two-decimal 1.00 is not a numeral
    if label is Label.NEGATIVE:
        score = min(estimate, NEGATIVE_CAP)
    else:
        score = max(estimate, POSITIVE_FLOOR)
    answer = f"risk score: {BOX_OPEN}{score:.2f}{BOX_CLOSE}"
    if mode is TraceMode.PLAIN:
        return OracleTeacherTrace(mode, answer, float(f"{score:.2f}"))
    lines = []
    for (name, desc, _), v in zip(factors, rounded):
        lines.append(f"{name}: {desc + ', ' if desc else ''}{_signed(v)}")
    terms = [_signed(coefs.teacher_intercept)] + [_signed(v) for v in rounded if v != 0.0]
    lines.append(f"equation: {' '.join(terms)} = {_signed(z)}")
    lines.append(f"risk estimate: {estimate:.2f}")
    text = THINK_OPEN + "\n".join(lines) + THINK_CLOSE + answer
    return OracleTeacherTrace(mode, text, float(f"{score:.2f}"))


def rejection_filter(traces: Sequence[tuple[str, int]]) -> list[tuple[str, int]]:
    """Keep traces whose boxed score falls on the label's side of 0.5."""
    kept = []
    for text, label in traces:
        score = extract_score(ModelOutput.from_text(text, 0).answer)
        if score is None:
            continue
        if (score > 0.5 and label == 1) or (score <= 0.5 and label == 0):
            kept.append((text, label))
    return kept


# words the teacher can write, beyond special and single-character tokens
TRACE_WORDS = tuple(sorted(
    {"nodule", "smoking", "age", "lung", "disease", "family", "history", "exposure", "prior",
     "cancer", "other", "findings", "equation", "risk", "estimate", "score", "none", "present"}
    | set(cohort.SMOKING_STATUSES) | set(cohort.MARGINS) | set(cohort.CHANGES)
    | {w for a in cohort.ATTENUATIONS for w in a.split("-")}
    | {w for d in _RELEVANT_DISEASES + _FLAGGED_FINDINGS for w in d.split()}
    | {w for e in cohort.CARCINOGENIC_EXPOSURES for w in e.split()}
))


class EmitScope(str, enum.Enum):
    TEACHER = "teacher"  # everything a teacher trace can contain
    ANSWER = "answer"  # think tags, the box and numerals only
    PLAIN = "plain"  # the box and numerals, no think tags


def emit_token_ids(vocab: Vocabulary, scope: EmitScope = EmitScope.TEACHER) -> tuple[int, ...]:
    scope = EmitScope(scope)
    base = [BOX_OPEN, BOX_CLOSE, ".", " ", "\n"] + list("0123456789")
    if scope is not EmitScope.PLAIN:
        base += [THINK_OPEN, THINK_CLOSE]
    ids = vocab.ids(base) + [vocab.eos_id]
    if scope is EmitScope.TEACHER:
        ids += vocab.ids(list(",:+-=") + list(TRACE_WORDS))
    return tuple(sorted(set(ids)))


def policy_shape(vocab: Vocabulary, scope: EmitScope = EmitScope.TEACHER, embed_dim: int = 16,
                 window: int = 32, prompts: Optional[Sequence[Sequence[int]]] = None) -> PolicyShape:
    """Policy dimensions for ``vocab``; ``prompts`` (if given) set the bag offset."""
    offset = None if prompts is None else prompt_offset(len(vocab), prompts)
    return PolicyShape(len(vocab), embed_dim, window, vocab.pad_id, vocab.eos_id, emit_token_ids(vocab, scope),
                       offset)


# --------------------------------------------------------------------------
# supervised fine-tuning


def sft_loss_and_grad(params: PolicyParams, batch: Sequence[tuple[Sequence[int], Sequence[int]]]
                      ) -> tuple[float, np.ndarray]:
    """Mean over examples of the summed target-token negative log-likelihood."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    tokens = TokenBatch.build(params.shape, batch)
    cache = forward(params, tokens)
    weights = np.full(tokens.n_tokens, -1.0 / len(batch))
    loss = float(weights @ cache.logp)
    return loss, backward(params, tokens, cache, weights)


def build_distillation_set(samples: Sequence[LabeledSample], mode: TraceMode, rng: np.random.Generator,
                           vocab: Optional[Vocabulary] = None,
                           styles: Sequence[RenderStyle] = tuple(RenderStyle),
                           coefs: RiskCoefficients = RiskCoefficients(), positive_repeats: int = 1
                           ) -> list[tuple[list[int], list[int]]]:
    """Render, trace, filter and tokenise; targets end with the end marker.

    Kept positive examples appear ``positive_repeats`` times, which offsets
    the low prevalence without changing any trace.
    """
    if positive_repeats < 1:
        raise ValueError("positive_repeats must be at least 1")
    vocab = vocab or default_vocabulary()
    out = []
    for s in samples:
        prompt = render_record(s, pick_style(styles, rng), rng, vocab).text
        trace = make_teacher_trace(s, mode, rng, coefs)
        if rejection_filter([(trace.text, int(s.label))]):
            pair = (vocab.encode(prompt), vocab.encode(trace.text) + [vocab.eos_id])
            out.extend([pair] * (positive_repeats if s.label == Label.POSITIVE else 1))
    return out


@dataclass(frozen=True)
class SFTConfig:
    epochs: int = 4
    batch_size: int = 32
    lr: float = 1e-2
    optimizer: str = "adam"
    momentum: float = 0.0
    init_scale: float = 0.1
    positive_repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.positive_repeats < 1:
            raise ConfigError("epochs, batch_size, lr and positive_repeats must be positive")


def sft_train(config: SFTConfig, examples: Sequence[tuple[Sequence[int], Sequence[int]]],
              shape: PolicyShape, init: Optional[PolicyParams] = None
              ) -> tuple[PolicyParams, list[dict]]:
    """Mini-batch descent on the SFT loss. Trace holds the epoch-mean loss."""
    if not examples:
        raise ConfigError("no usable distillation examples")
    rng = np.random.default_rng(config.seed)
    params = init if init is not None else PolicyParams.random(shape, rng, config.init_scale)
    opt = make_optimizer(config.optimizer, config.lr, config.momentum)
    trace = []
    n = len(examples)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grad = sft_loss_and_grad(params, [examples[i] for i in idx])
            params = opt.step(params, grad)
            total += loss * len(idx)
        trace.append({"epoch": epoch, "loss": total / n})
        log.info("sft epoch %d loss %.4f", epoch, total / n)
    return params, trace


# --------------------------------------------------------------------------
# group-relative policy optimisation


@dataclass(frozen=True)
class ClipConfig:
    eps_low: float = 0.2
    eps_high: float = 0.28

    def __post_init__(self):
        if not 0 < self.eps_low <= self.eps_high < 1:
            raise ConfigError("need 0 < eps_low <= eps_high < 1")


def group_advantages(rewards) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ValueError("a group needs at least two rewards")
    std = r.std()
    if std < 1e-8:
        return np.zeros_like(r)
    return (r - r.mean()) / std


@dataclass(frozen=True)
class RolloutGroup:
    prompt: tuple[int, ...]
    completions: tuple[Completion, ...]
    rewards: tuple[RewardBreakdown, ...]
    advantages: tuple[float, ...]

    def __post_init__(self):
        if len(self.completions) < 2:
            raise ValueError("a group needs at least two completions")
        if not len(self.completions) == len(self.rewards) == len(self.advantages):
            raise ValueError("one reward and one advantage per completion")


def grpo_objective_and_grad(params: PolicyParams, old_params: PolicyParams, groups: Sequence[RolloutGroup],
                            clip: ClipConfig = ClipConfig()) -> tuple[float, np.ndarray]:
    """Clipped token-level surrogate, token-mean within groups, mean over groups.

    The recorded completion log-probs stand for the old policy; ``old_params``
    is only checked for shape. Advantages are constants.
    """
    if old_params.shape != params.shape:
        raise ValueError("old and new parameters differ in shape")
    pairs, old_logp, adv, norm = [], [], [], []
    for g in groups:
        n_tokens = sum(len(c.output_tokens) for c in g.completions)
        for c, a in zip(g.completions, g.advantages):
            if len(c.logprobs) != len(c.output_tokens):
                raise RuntimeError("completion and log-prob lengths differ")
            if not c.output_tokens:
                continue
            pairs.append((c.prompt_tokens, c.output_tokens))
            old_logp.append(c.logprobs)
            adv.append(np.full(len(c.output_tokens), a))
            norm.append(np.full(len(c.output_tokens), 1.0 / (n_tokens * len(groups))))
    if not pairs:
        return 0.0, np.zeros(params.shape.n_params)
    batch = TokenBatch.build(params.shape, pairs)
    cache = forward(params, batch)
    old = np.concatenate(old_logp)
    adv = np.concatenate(adv)
    norm = np.concatenate(norm)
    ratio = np.exp(cache.logp - old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip.eps_low, 1 + clip.eps_high) * adv
    objective = float(norm @ np.minimum(unclipped, clipped))
    # d/dlogp of the min: the unclipped branch carries ratio * adv, a
    # saturated clip branch is constant
    weights = np.where(unclipped <= clipped, unclipped, 0.0) * norm
    return objective, backward(params, batch, cache, weights)


@dataclass(frozen=True)
class GRPOConfig:
    steps: int = 2000
    group_size: int = 8
    prompts_per_step: int = 8
    max_len: int = 8
    temperature: float = 1.0
    lr: float = 1.0
    optimizer: str = "sgd"
    momentum: float = 0.0
    init_scale: float = 0.1
    inner_epochs: int = 1
    balance_labels: bool = True
    max_grad_norm: Optional[float] = 0.5
    seed: int = 0
    clip: ClipConfig = field(default_factory=ClipConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigError("group_size must be at least 2")
        if self.steps < 0 or self.prompts_per_step < 1 or self.inner_epochs < 1:
            raise ConfigError("steps, prompts_per_step and inner_epochs out of range")
        if not 0 < self.max_len <= self.reward.l_completion:
            raise ConfigError("max_len must be in (0, l_completion]")
        if self.temperature <= 0 or self.lr <= 0:
            raise ConfigError("temperature and lr must be positive")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ConfigError("max_grad_norm must be positive")


def _completion_text(c: Completion, vocab: Vocabulary) -> ModelOutput:
    out = list(c.output_tokens)
    if out and out[-1] == vocab.eos_id:
        out = out[:-1]
    return ModelOutput.from_text(vocab.decode(out), len(out))


def _pick_prompts(prompts, labels, k, balance, rng):
    if balance:
        pos = np.flatnonzero(labels == 1)
        neg = np.flatnonzero(labels == 0)
        if pos.size and neg.size:
            n_pos = k // 2 + (k % 2) * int(rng.random() < 0.5)
            return np.r_[rng.choice(pos, n_pos), rng.choice(neg, k - n_pos)]
    return rng.choice(len(prompts), k)


def grpo_train(config: GRPOConfig, prompts: Sequence[tuple[Sequence[int], int]], shape: PolicyShape,
               init: Optional[PolicyParams] = None, vocab: Optional[Vocabulary] = None
               ) -> tuple[PolicyParams, list[dict]]:
    """Rollout, reward, advantage and one clipped update per step."""
    vocab = vocab or default_vocabulary()
    usable = [(tuple(p), int(lab)) for p, lab in prompts if int(lab) in (0, 1) and len(p) > 0]
    if not usable:
        raise ConfigError("no usable prompts for policy optimisation")
    labels = np.array([lab for _, lab in usable])
    params = init if init is not None else PolicyParams.random(
        shape, np.random.default_rng([config.seed, 0]), config.init_scale)
    opt = make_optimizer(config.optimizer, config.lr, config.momentum)
    trace = []
    for step in range(config.steps):
        pick_rng = np.random.default_rng([config.seed, 1, step])
        chosen = _pick_prompts(usable, labels, config.prompts_per_step, config.balance_labels, pick_rng)
        batch_prompts, rngs = [], []
        for slot, i in enumerate(chosen):
            for j in range(config.group_size):
                batch_prompts.append(usable[i][0])
                rngs.append(np.random.default_rng([config.seed, 2, step, slot, j]))
        completions = sample_batch(params, batch_prompts, config.max_len, config.temperature, rngs)
        groups, breakdowns, lengths, failures = [], [], [], 0
        G = config.group_size
        for slot, i in enumerate(chosen):
            comps = completions[slot * G:(slot + 1) * G]
            outs = [_completion_text(c, vocab) for c in comps]
            rewards = tuple(total_reward(o, usable[i][1], config.reward) for o in outs)
            adv = group_advantages([r.total for r in rewards])
            groups.append(RolloutGroup(usable[i][0], tuple(comps), rewards, tuple(adv)))
            breakdowns.extend(rewards)
            lengths.extend(o.token_length for o in outs)
            failures += sum(o.score is None for o in outs)
        old = params
        for _ in range(config.inner_epochs):
            objective, grad = grpo_objective_and_grad(params, old, groups, config.clip)
            norm = float(np.linalg.norm(grad))
            if config.max_grad_norm is not None and norm > config.max_grad_norm:
                grad = grad * (config.max_grad_norm / norm)
            log.debug("grpo step %d gradient norm %.4g", step, norm)
            params = opt.step(params, -grad)  # ascent on the objective
        n = len(breakdowns)
        trace.append({
            "step": step,
            "mean_reward": sum(b.total for b in breakdowns) / n,
            "mean_score_reward": sum(b.score for b in breakdowns) / n,
            "mean_format_reward": sum(b.format for b in breakdowns) / n,
            "mean_length_penalty": sum(b.length for b in breakdowns) / n,
            "parse_failure_rate": failures / n,
            "mean_output_length": sum(lengths) / n,
        })
        if step % 100 == 0:
            log.info("grpo step %d reward %.3f parse failures %.2f", step,
                     trace[-1]["mean_reward"], trace[-1]["parse_failure_rate"])
    return params, trace
