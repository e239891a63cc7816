"""Command-line entry point: ``lungrisk <subcommand> [options]``.

Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 numeric.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import cohort
from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError
from .evaluate import evaluate_policy
from .parse import ModelOutput
from .pipeline import eval_seed, run_grpo, run_sft, test_samples, train_test_samples
from .policy import PolicyParams
from .records import read_records, write_json, write_records
from .render import pick_style, render_record
from .reward import total_reward
from .vocab import default_vocabulary

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5

log = logging.getLogger("lungrisk")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# helpers


def _load_members(path) -> list[cohort.CohortMember]:
    try:
        return [cohort.member_from_dict(r) for r in read_records(path, "cohort_member")]
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"{path}: malformed cohort record ({e})") from None


def _load_checkpoint(path) -> PolicyParams:
    try:
        return PolicyParams.load(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such checkpoint") from None
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"{path}: {e}") from None


def _label(value) -> int:
    if value not in (0, 1) or isinstance(value, bool):
        raise DataError(f"label must be 0 or 1, got {value!r}")
    return int(value)


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: PipelineConfig, args) -> None:
    members = cohort.synth_cohort(cfg.cohort_config(), np.random.default_rng(cfg.seed))
    n = write_records(args.out, "cohort_member", (cohort.member_to_dict(m) for m in members))
    log.info("wrote %d patients to %s", n, args.out)


def cmd_render(cfg: PipelineConfig, args) -> None:
    vocab = default_vocabulary()
    samples = cohort.build_samples(_load_members(args.input), cfg.data.horizons)
    rng = np.random.default_rng(cfg.seed)

    def rows():
        for s in samples:
            r = render_record(s, pick_style(cfg.styles, rng), rng, vocab)
            yield {"patient_id": s.patient.patient_id, "reference_year": s.reference_year,
                   "horizon": s.horizon_n, "label": int(s.label), "style": r.style.value,
                   "token_count": r.token_count, "question": r.question, "text": r.text}

    n = write_records(args.out, "rendered_input", rows())
    log.info("wrote %d rendered inputs to %s", n, args.out)


def cmd_label_check(cfg: PipelineConfig, args) -> None:
    members = _load_members(args.input)
    counts: Counter = Counter()

    def rows():
        for m in members:
            for exam, outcome in zip(m.exams, m.outcomes):
                for n in cfg.data.horizons:
                    label = cohort.derive_label(outcome, n)
                    counts[(n, label.name.lower())] += 1
                    yield {"patient_id": m.patient.patient_id, "reference_year": exam.exam_year_index,
                           "horizon": n, "label": int(label)}

    write_records(args.out, "label", rows())
    for n in cfg.data.horizons:
        log.info("horizon %d: %d positive, %d negative, %d excluded", n, counts[(n, "positive")],
                 counts[(n, "negative")], counts[(n, "excluded")])


def _output_text(rec: dict, i: int) -> str:
    text = rec.get("text", rec.get("raw_text"))
    if not isinstance(text, str):
        raise DataError(f"record {i}: missing text")
    return text


def cmd_reward_eval(cfg: PipelineConfig, args) -> None:
    vocab = default_vocabulary()
    rows = []
    for i, rec in enumerate(read_records(args.input)):
        length = rec.get("token_length")
        if length is not None and (not isinstance(length, int) or isinstance(length, bool)):
            raise DataError(f"record {i}: token_length must be an integer")
        out = ModelOutput.from_text(_output_text(rec, i), length, vocab)
        try:
            b = total_reward(out, _label(rec.get("label")), cfg.reward)
        except ValueError as e:
            raise DataError(f"record {i}: {e}") from None
        rows.append({"index": i, "parsed_score": out.score, "token_length": out.token_length,
                     "score": b.score, "format": b.format, "length": b.length, "total": b.total})
    write_records(args.out, "reward_breakdown", rows)
    log.info("scored %d outputs", len(rows))


def cmd_parse_check(cfg: PipelineConfig, args) -> None:
    rows, failures = [], 0
    for i, rec in enumerate(read_records(args.input)):
        out = ModelOutput.from_text(_output_text(rec, i), 0)
        failures += out.score is None
        rows.append({"index": i, "think": out.think, "answer": out.answer, "score": out.score})
    write_records(args.out, "parse_result", rows)
    log.info("parsed %d outputs, %d without a score", len(rows), failures)


def _train_samples(cfg, args):
    members = _load_members(args.cohort)
    train, _ = train_test_samples(members, cfg)
    if not train:
        raise ConfigError("no labeled training samples in the cohort")
    return train


def cmd_train_sft(cfg: PipelineConfig, args) -> None:
    params, trace = run_sft(cfg, _train_samples(cfg, args))
    params.save(args.out)
    if args.metrics:
        write_records(args.metrics, "sft_metrics", trace)
    log.info("final loss %.4f, checkpoint %s", trace[-1]["loss"], args.out)


def cmd_train_grpo(cfg: PipelineConfig, args) -> None:
    init = _load_checkpoint(args.init) if args.init else None
    params, trace = run_grpo(cfg, _train_samples(cfg, args), init)
    params.save(args.out)
    if args.metrics:
        write_records(args.metrics, "grpo_metrics", trace)
    log.info("final mean reward %.4f, checkpoint %s", trace[-1]["mean_reward"] if trace else 0.0, args.out)


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    params = _load_checkpoint(args.checkpoint)
    test = test_samples(_load_members(args.cohort), cfg)
    report = evaluate_policy(params, test, cfg.data.horizons, eval_seed(cfg), styles=cfg.styles,
                             max_len=cfg.eval_max_len)
    write_json(args.out, report.summary())
    if args.roc_dir:
        roc_dir = Path(args.roc_dir)
        roc_dir.mkdir(parents=True, exist_ok=True)
        for h, r in sorted(report.horizons.items()):
            for name, points in (("model", r.roc), ("baseline", r.baseline_roc)):
                with open(roc_dir / f"roc_{name}_h{h}.csv", "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["threshold", "fpr", "tpr"])
                    w.writerows((repr(t), repr(f), repr(p)) for t, f, p in points)
    for h, r in sorted(report.horizons.items()):
        log.info("horizon %d: auc %s baseline %s", h, r.auc, r.baseline_auc)


def cmd_report(cfg: PipelineConfig, args) -> None:
    lines = []
    if args.eval:
        try:
            summary = json.loads(Path(args.eval).read_text(encoding="utf-8"))
            horizons = summary["horizons"]
        except (OSError, ValueError, KeyError) as e:
            raise DataError(f"{args.eval}: unreadable evaluation report ({e})") from None
        lines.append(f"samples {summary['n_samples']}, parse failure rate {summary['parse_failure_rate']:.4f}")
        lines.append("horizon  n      positives  auc     baseline")
        for h, r in sorted(horizons.items(), key=lambda kv: int(kv[0])):
            fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
            lines.append(f"{h:<8} {r['n_samples']:<6} {r['n_positive']:<10} {fmt(r['auc']):<7} {fmt(r['baseline_auc'])}")
    for path in args.metrics or []:
        recs = read_records(path)
        name = Path(path).name  # keep the report independent of where the run lived
        if not recs:
            continue
        if "mean_reward" in recs[0]:
            k = min(100, len(recs))
            first = sum(r["mean_reward"] for r in recs[:k]) / k
            last = sum(r["mean_reward"] for r in recs[-k:]) / k
            lines.append(f"{name}: {len(recs)} steps, mean reward first {k} {first:.4f}, last {k} {last:.4f}, "
                         f"final parse failure rate {recs[-1]['parse_failure_rate']:.4f}")
        elif "loss" in recs[0]:
            lines.append(f"{name}: {len(recs)} epochs, loss {recs[0]['loss']:.4f} -> {recs[-1]['loss']:.4f}")
    if not lines:
        raise UsageError("report needs --eval and/or --metrics")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


COMMANDS = {
    "synth": cmd_synth,
    "render": cmd_render,
    "label-check": cmd_label_check,
    "reward-eval": cmd_reward_eval,
    "parse-check": cmd_parse_check,
    "train-sft": cmd_train_sft,
    "train-grpo": cmd_train_grpo,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file; flags override it")
    common.add_argument("--seed", type=int, help="[run] seed")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = _Parser(prog="lungrisk", description="Synthetic lung cancer risk reasoning pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--size", type=int, help="[cohort] size")
    p.add_argument("--prevalence", type=float, help="[cohort] prevalence")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", parents=[common], help="render labeled samples as text")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--horizons", help="[data] horizons, comma separated")
    p.add_argument("--styles", help="[render] styles, comma separated")
    p.add_argument("--out", required=True)

    p = sub.add_parser("label-check", parents=[common], help="derive labels for every exam and horizon")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--horizons", help="[data] horizons, comma separated")
    p.add_argument("--out", required=True)

    for name, help_ in (("reward-eval", "score model outputs"), ("parse-check", "parse model outputs")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)
        if name == "reward-eval":
            p.add_argument("--t1", type=float, help="[reward] t1")
            p.add_argument("--t2", type=float, help="[reward] t2")
            p.add_argument("--length-mode", choices=["literal", "monotone"], help="[reward] length_mode")

    p = sub.add_parser("train-sft", parents=[common], help="distil the scripted teacher")
    p.add_argument("--cohort", required=True)
    p.add_argument("--mode", choices=["plain", "think"], help="[sft] mode")
    p.add_argument("--epochs", type=int, help="[sft] epochs")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="loss trace output")

    p = sub.add_parser("train-grpo", parents=[common], help="group-relative policy optimisation")
    p.add_argument("--cohort", required=True)
    p.add_argument("--init", help="start from this checkpoint")
    p.add_argument("--steps", type=int, help="[grpo] steps")
    p.add_argument("--t1", type=float, help="[reward] t1")
    p.add_argument("--t2", type=float, help="[reward] t2")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="metrics trace output")

    p = sub.add_parser("evaluate", parents=[common], help="multi-horizon AUC on held-out patients")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--horizons", help="[data] horizons, comma separated")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--roc-dir", help="directory for ROC point CSV files")

    p = sub.add_parser("report", parents=[common], help="summarise evaluation and training outputs")
    p.add_argument("--eval", help="report JSON from evaluate")
    p.add_argument("--metrics", action="append", help="metrics trace (repeatable)")
    p.add_argument("--out", help="text output (default stdout)")
    return parser


_OVERRIDES = {
    "seed": "run.seed", "size": "cohort.size", "prevalence": "cohort.prevalence",
    "horizons": "data.horizons", "styles": "render.styles", "t1": "reward.t1", "t2": "reward.t2",
    "length_mode": "reward.length_mode", "mode": "sft.mode", "epochs": "sft.epochs",
    "steps": "grpo.steps",
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)
    try:
        overrides = {key: getattr(args, attr) for attr, key in _OVERRIDES.items() if hasattr(args, attr)}
        cfg = load_config(args.config, overrides)
        log.info("command %s seed %d config %s", args.command, cfg.seed, json.dumps(cfg.to_dict(), sort_keys=True))
        COMMANDS[args.command](cfg, args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
