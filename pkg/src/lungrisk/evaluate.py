"""Discrimination metrics, the nodule-rule baseline and policy evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cohort import LabeledSample, ScreeningExam
from .parse import ModelOutput
from .policy import sample_batch
from .render import RenderStyle, pick_style, render_record
from .vocab import default_vocabulary

log = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    """Raised when a metric needs both classes but only one is present."""


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC with half credit for ties, via one sort.

    Average ranks are assigned to tied scores; the rank sum of the
    positives then gives the number of correctly ordered pairs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")

    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    # boundaries of runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], scores.size]
    avg = (starts + ends + 1) / 2.0  # 1-based average rank of each run
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float, float]]:
    """(threshold, false positive rate, true positive rate), from (0, 0) to (1, 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = max(int(np.sum(labels == 1)), 1)
    n_neg = max(int(np.sum(labels == 0)), 1)
    points = [(float("inf"), 0.0, 0.0)]
    for t in np.unique(scores)[::-1]:
        pred = scores >= t
        tpr = np.sum(pred & (labels == 1)) / n_pos
        fpr = np.sum(pred & (labels == 0)) / n_neg
        points.append((float(t), float(fpr), float(tpr)))
    return points


# --------------------------------------------------------------------------
# nodule-size rule baseline

GROWTH_MM = 1.5


def _grew(nodule, earlier: Sequence[ScreeningExam]) -> bool:
    if nodule.change == "grown":
        return True
    for exam in earlier:
        for prior in exam.nodules:
            if prior.location == nodule.location and nodule.size_mm - prior.size_mm >= GROWTH_MM:
                return True
    return False


def rule_baseline_score(exams: Sequence[ScreeningExam]) -> float:
    """Size/growth decision table over the nodules of the latest exam.

    no nodule 0.05; <6 mm 0.15; 6-8 mm 0.35; 8-15 mm or a new 6-8 mm
    nodule 0.60; >=15 mm, spiculated >=8 mm, or growth 0.85. The most
    suspicious nodule decides.
    """
    if not exams:
        raise ValueError("at least one exam is required")
    exams = sorted(exams, key=lambda e: e.exam_year_index)
    latest, earlier = exams[-1], exams[:-1]
    best = 0.05
    for n in latest.nodules:
        size = n.size_mm
        if size >= 15 or (n.margin == "spiculated" and size >= 8) or _grew(n, earlier):
            score = 0.85
        elif size >= 8 or (n.change == "new" and size >= 6):
            score = 0.60
        elif size >= 6:
            score = 0.35
        else:
            score = 0.15
        best = max(best, score)
    return best


# --------------------------------------------------------------------------
# policy evaluation

UNPARSED_SCORE = 0.5


@dataclass
class HorizonResult:
    horizon: int
    n_samples: int
    n_positive: int
    auc: Optional[float]
    baseline_auc: Optional[float]
    roc: list = field(default_factory=list)
    baseline_roc: list = field(default_factory=list)
    warning: Optional[str] = None


@dataclass
class EvalReport:
    horizons: dict[int, HorizonResult]
    n_samples: int
    n_parse_failures: int

    @property
    def parse_failure_rate(self) -> float:
        return self.n_parse_failures / self.n_samples if self.n_samples else 0.0

    def auc(self, horizon: int) -> Optional[float]:
        return self.horizons[horizon].auc

    def summary(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_parse_failures": self.n_parse_failures,
            "parse_failure_rate": self.parse_failure_rate,
            "horizons": {
                str(h): {"n_samples": r.n_samples, "n_positive": r.n_positive, "auc": r.auc,
                         "baseline_auc": r.baseline_auc, "warning": r.warning}
                for h, r in sorted(self.horizons.items())
            },
        }


def _auc_or_warning(scores, labels) -> tuple[Optional[float], Optional[str]]:
    try:
        return roc_auc(scores, labels), None
    except UndefinedMetricError:
        return None, "single-class horizon; AUC omitted"


def report_from_outputs(samples: Sequence[LabeledSample], texts: Sequence[str],
                        horizons: Sequence[int]) -> EvalReport:
    """Score generated texts; unparsed outputs count as failures and score 0.5."""
    if len(samples) != len(texts):
        raise ValueError("one output text per sample")
    scores, failures = [], 0
    for text in texts:
        s = ModelOutput.from_text(text, 0).score
        if s is None:
            failures += 1
            s = UNPARSED_SCORE
        scores.append(s)
    scores = np.asarray(scores)
    labels = np.array([int(s.label) for s in samples])
    hz = np.array([s.horizon_n for s in samples])
    baseline = np.array([rule_baseline_score(s.exams) for s in samples])
    results = {}
    for h in sorted(set(horizons)):
        m = hz == h
        auc, warning = _auc_or_warning(scores[m], labels[m])
        base_auc, _ = _auc_or_warning(baseline[m], labels[m])
        if warning:
            log.warning("horizon %d: %s", h, warning)
        results[h] = HorizonResult(
            h, int(m.sum()), int(labels[m].sum()), auc, base_auc,
            roc_points(scores[m], labels[m]) if auc is not None else [],
            roc_points(baseline[m], labels[m]) if base_auc is not None else [],
            warning)
    return EvalReport(results, len(samples), failures)


def generate_outputs(params, samples: Sequence[LabeledSample], seed: int = 0, vocab=None,
                     styles=None, max_len: int = 256, batch_size: int = 256) -> list[str]:
    """Render each sample and decode greedily."""
    vocab = vocab or default_vocabulary()
    styles = tuple(styles or RenderStyle)
    rng = np.random.default_rng(seed)
    prompts = [vocab.encode(render_record(s, pick_style(styles, rng), rng, vocab).text) for s in samples]
    texts = []
    for lo in range(0, len(prompts), batch_size):
        for c in sample_batch(params, prompts[lo:lo + batch_size], max_len, 0.0):
            texts.append(vocab.decode(c.output_tokens))
    return texts


def evaluate_policy(params, samples: Sequence[LabeledSample], horizons: Sequence[int] = (1, 2, 3, 4, 5, 6),
                    seed: int = 0, vocab=None, styles=None, max_len: int = 256) -> EvalReport:
    samples = [s for s in samples if s.horizon_n in set(horizons)]
    texts = generate_outputs(params, samples, seed, vocab, styles, max_len)
    return report_from_outputs(samples, texts, horizons)
