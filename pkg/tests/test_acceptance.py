"""End-to-end acceptance checks, one test (or group of tests) per criterion.

A pass/fail line per criterion is printed at the end of the pytest run.
Run only these with ``pytest -m acceptance``.
"""

import itertools
import json
import time
from importlib import resources

import numpy as np
import pytest

from lungrisk import pipeline
from lungrisk.cli import EXIT_OK, run
from lungrisk.cohort import CohortConfig, Label, Outcome, build_samples, derive_label, synth_cohort
from lungrisk.config import load_config
from lungrisk.evaluate import generate_outputs, report_from_outputs, roc_auc
from lungrisk.parse import ModelOutput, extract_score
from lungrisk.policy import PolicyParams, TokenBatch, weighted_logprob_grad
from lungrisk.records import write_records
from lungrisk.reward import RewardConfig, format_reward, length_penalty, score_reward, total_reward
from lungrisk.train import TraceMode, group_advantages, grpo_objective_and_grad, make_teacher_trace, sft_loss_and_grad

from oracles import brute_force_auc, central_difference, label_oracle, relative_error, score_oracle
from test_train import TOY, random_groups

pytestmark = pytest.mark.acceptance


def note(record_property, text):
    record_property("detail", text)


def load_members(cfg):
    return synth_cohort(cfg.cohort_config(), np.random.default_rng(cfg.seed))


# --------------------------------------------------------------------------
# 1. reward conformance


@pytest.mark.criterion(1, "reward golden vectors within 1e-12 in under 1 s")
def test_reward_golden_vectors(record_property):
    start = time.perf_counter()
    golden = json.loads(resources.files("lungrisk").joinpath("data/reward_golden.json").read_text())
    errors = [abs(score_reward(c["parsed"], c["label"]) - c["expected"]) for c in golden["score_reward"]]
    errors += [abs(format_reward(c["text"]) - c["expected"]) for c in golden["format_reward"]]
    errors += [abs(length_penalty(c["length"], RewardConfig(length_mode=c["mode"])) - c["expected"])
               for c in golden["length_penalty"]]
    errors += [abs(total_reward(ModelOutput.from_text(c["text"], c["length"]), c["label"]).total - c["expected"])
               for c in golden["total_reward"]]
    errors += [abs(score_reward(0.8, 0) + 0.6), abs(length_penalty(9000) + 1.0),
               abs(format_reward("<think>r</think>\\boxed{0.2}") - 2.0)]
    elapsed = time.perf_counter() - start
    note(record_property, f"{len(errors)} vectors, max error {max(errors):.1e}, {elapsed:.3f} s")
    assert max(errors) <= 1e-12
    assert elapsed < 1.0


# --------------------------------------------------------------------------
# 2. gradient checks


@pytest.mark.criterion(2, "SFT and GRPO gradients match central differences, rel err < 1e-4, under 30 s")
def test_gradients_match_finite_differences(record_property):
    start = time.perf_counter()
    worst_sft = worst_grpo = 0.0
    for seed in range(20):
        rng = np.random.default_rng([seed, 2])
        p = PolicyParams.random(TOY, rng, 0.5)
        batch = [(list(rng.integers(0, 10, rng.integers(0, 6))), list(rng.choice(TOY.emit, rng.integers(1, 13))))
                 for _ in range(int(rng.integers(1, 4)))]
        _, g = sft_loss_and_grad(p, batch)
        num = central_difference(lambda v: sft_loss_and_grad(p.replace(v), batch)[0], p.vector)
        worst_sft = max(worst_sft, relative_error(g, num))

        old = PolicyParams.random(TOY, rng, 0.5)
        groups = random_groups(rng, old, G=(2, 8)[seed % 2], max_len=12)
        cur = old.replace(old.vector + rng.normal(0, 0.15, TOY.n_params))
        _, g = grpo_objective_and_grad(cur, old, groups)
        num = central_difference(lambda v: grpo_objective_and_grad(cur.replace(v), old, groups)[0], cur.vector)
        worst_grpo = max(worst_grpo, relative_error(g, num))
    elapsed = time.perf_counter() - start
    note(record_property, f"V={TOY.vocab_size}, worst rel err SFT {worst_sft:.1e} GRPO {worst_grpo:.1e}, "
                          f"{elapsed:.1f} s")
    assert TOY.vocab_size <= 16
    assert worst_sft < 1e-4 and worst_grpo < 1e-4
    assert elapsed < 30.0


# --------------------------------------------------------------------------
# 3. advantage and objective algebra


@pytest.mark.criterion(3, "advantage invariances and ratio-one identity to 1e-9 on 1,000 cases")
def test_advantage_and_objective_algebra(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for case in range(1000):
        G = int(rng.integers(2, 9))
        r = rng.normal(0, 2, G)
        a = group_advantages(r)
        worst = max(worst, abs(a.mean()),
                    np.abs(group_advantages(r + rng.uniform(-5, 5)) - a).max(),
                    np.abs(group_advantages(r * rng.uniform(0.1, 10)) - a).max())
        assert np.all(group_advantages(np.full(G, r[0])) == 0)

        p = PolicyParams.random(TOY, rng, 0.5)
        groups = random_groups(rng, p, (2, 8)[case % 2], n_groups=1, max_len=4)
        _, grad = grpo_objective_and_grad(p, p, groups)
        comps = [(c, adv) for c, adv in zip(groups[0].completions, groups[0].advantages) if c.output_tokens]
        if comps:
            n_tokens = sum(len(c.output_tokens) for c, _ in comps)
            batch = TokenBatch.build(TOY, [(c.prompt_tokens, c.output_tokens) for c, _ in comps])
            w = np.concatenate([np.full(len(c.output_tokens), adv / n_tokens) for c, adv in comps])
            _, _, vanilla = weighted_logprob_grad(p, batch, w)
            worst = max(worst, np.abs(grad - vanilla).max())
    note(record_property, f"1000 cases, max deviation {worst:.1e}")
    assert worst <= 1e-9


# --------------------------------------------------------------------------
# 4. label truth table


@pytest.mark.criterion(4, "derive_label agrees with the exhaustive oracle on the outcome grid")
def test_label_truth_table(record_property):
    cancer_grid = [None] + [0.25 * k for k in range(1, 29)]
    follow_grid = [0.25 * k for k in range(0, 29)]
    checked = 0
    for cancer, follow, died, n in itertools.product(cancer_grid, follow_grid, (True, False), range(1, 7)):
        if cancer is not None and cancer > follow:
            continue
        got = derive_label(Outcome(cancer, follow, died), n)
        assert int(got) == label_oracle(cancer, follow, died, n), (cancer, follow, died, n)
        checked += 1
    note(record_property, f"{checked} grid cases, 100% agreement")
    assert checked >= 5000


# --------------------------------------------------------------------------
# 5. parser


@pytest.mark.criterion(5, "parser extracts every teacher score and survives 100,000 fuzzed strings")
def test_teacher_traces_always_parse(record_property):
    samples = build_samples(synth_cohort(CohortConfig(3000), np.random.default_rng(55)), range(1, 7))
    usable = [s for s in samples if s.label is not Label.EXCLUDED]
    assert len(usable) >= 10_000
    picks = np.random.default_rng(5).choice(len(usable), 10_000, replace=False)
    for i in picks:
        t = make_teacher_trace(usable[i], TraceMode.THINK)
        assert ModelOutput.from_text(t.text).score == t.target_score
    note(record_property, "10000 teacher traces parsed")


FUZZ_PIECES = ["\\boxed{", "\\boxed", "}", "{", "0", "1", ".", "5", "9", "0.", "1.0", " ", "\n", "<think>",
               "</think>", "x", "-", "e", "\\", "٣", "é", "\x00", "boxed{", "1.00", ".123456", "1e-3"]


@pytest.mark.criterion(5, "parser extracts every teacher score and survives 100,000 fuzzed strings")
def test_parser_fuzz(record_property):
    rng = np.random.default_rng(505)
    for i in range(100_000):
        if i % 4 == 0:
            text = "".join(chr(c) for c in rng.integers(0, 0x2FFF, rng.integers(0, 40)))
        else:
            text = "".join(FUZZ_PIECES[j] for j in rng.integers(0, len(FUZZ_PIECES), rng.integers(0, 25)))
        out = ModelOutput.from_text(text)
        answer_score = extract_score(text)
        assert answer_score == score_oracle(text)
        for s in (out.score, answer_score):
            assert s is None or 0.0 <= s <= 1.0
    note(record_property, "100000 fuzzed strings, no unhandled failure")


# --------------------------------------------------------------------------
# 6. AUC oracle


@pytest.mark.criterion(6, "sort-based AUC equals pairwise AUC within 1e-12 on 1,000 instances with ties")
def test_auc_against_pairwise(record_property):
    rng = np.random.default_rng(6)
    worst, tied = 0.0, 0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        if rng.random() < 0.5:
            levels = int(rng.integers(1, 12))
            scores = rng.integers(0, levels, n) / levels
        else:
            scores = rng.random(n)
        tied += len(set(scores.tolist())) < n
        worst = max(worst, abs(roc_auc(scores, labels) - brute_force_auc(scores, labels)))
    note(record_property, f"max error {worst:.1e}, {tied} instances with ties")
    assert worst <= 1e-12 and tied >= 300


# --------------------------------------------------------------------------
# 7. end-to-end distillation


@pytest.mark.criterion(7, "SFT-think: 1-year AUC >= 0.85, format >= 95%, beats rule baseline, under 10 min")
def test_distillation_end_to_end(record_property):
    cfg = load_config()
    start = time.perf_counter()
    train, test = pipeline.train_test_samples(load_members(cfg), cfg)
    params, _ = pipeline.run_sft(cfg, train)
    texts = generate_outputs(params, test, pipeline.eval_seed(cfg), styles=cfg.styles, max_len=cfg.eval_max_len)
    report = report_from_outputs(test, texts, [1])
    elapsed = time.perf_counter() - start
    h = report.horizons[1]
    compliance = float(np.mean([format_reward(t) == 2.0 and ModelOutput.from_text(t).score is not None
                                for t in texts]))
    note(record_property, f"train {len(train)} test {len(test)}, AUC {h.auc:.4f} vs baseline {h.baseline_auc:.4f}, "
                          f"format {compliance:.3f}, {elapsed:.0f} s")
    assert len(train) == 5000 and len(test) == 1000
    assert h.auc >= 0.85
    assert compliance >= 0.95
    assert h.auc > h.baseline_auc
    assert elapsed < 600


# --------------------------------------------------------------------------
# 8. end-to-end RL from random init


@pytest.mark.criterion(8, "RL-zero: reward gain >= 0.5, parse failure < 20%, AUC > 0.6, under 15 min")
def test_rl_zero_end_to_end(record_property):
    cfg = load_config()
    start = time.perf_counter()
    train, test = pipeline.train_test_samples(load_members(cfg), cfg)
    params, trace = pipeline.run_grpo(cfg, train)
    texts = generate_outputs(params, test, pipeline.eval_seed(cfg), styles=cfg.styles, max_len=cfg.grpo.max_len)
    report = report_from_outputs(test, texts, [1])
    elapsed = time.perf_counter() - start
    first = np.mean([m["mean_reward"] for m in trace[:100]])
    last = np.mean([m["mean_reward"] for m in trace[-100:]])
    failure = np.mean([m["parse_failure_rate"] for m in trace[-100:]])
    auc = report.horizons[1].auc
    note(record_property, f"{len(trace)} steps G={cfg.grpo.group_size}, reward {first:.3f} -> {last:.3f}, "
                          f"parse failure {failure:.3f}, AUC {auc:.4f}, {elapsed:.0f} s")
    assert len(trace) == 2000 and cfg.grpo.group_size == 8
    assert last - first >= 0.5
    assert failure < 0.2
    assert auc > 0.6
    assert elapsed < 900


# --------------------------------------------------------------------------
# 9. reward-hacking probe

# A plain-answer warm start boxes two-decimal scores, so the RL stage only has
# to move digits. Everything else stays at the pipeline defaults; the two arms
# differ only in the reward thresholds.
PROBE = {"sft.mode": "plain", "grpo.max_len": 16, "grpo.steps": 1000}


def band_stats(texts, lo=0.49, hi=0.51):
    """Share of parsed scores inside [lo, hi] and their median distance from 0.5."""
    scores = np.array([s for s in (ModelOutput.from_text(t).score for t in texts) if s is not None])
    if not scores.size:
        return 0.0, float("nan")
    return float(np.mean((scores >= lo) & (scores <= hi))), float(np.median(np.abs(scores - 0.5)))


@pytest.mark.criterion(9, "t1 = t2 = 0.5 puts more boxed scores in [0.49, 0.51] than the default thresholds")
def test_midpoint_thresholds_invite_hedging(record_property):
    base = load_config(None, PROBE)
    train, test = pipeline.train_test_samples(load_members(base), base)
    warm, _ = pipeline.run_sft(base, train)
    def stats(params):
        return band_stats(generate_outputs(params, test, pipeline.eval_seed(base), styles=base.styles,
                                           max_len=base.grpo.max_len))

    arms = {"warm start": stats(warm)}
    for name, (t1, t2) in (("defaults", (0.45, 0.55)), ("midpoint", (0.5, 0.5))):
        cfg = load_config(None, {**PROBE, "reward.t1": t1, "reward.t2": t2})
        params, _ = pipeline.run_grpo(cfg, train, warm)
        arms[name] = stats(params)
    note(record_property, ", ".join(f"{k} {share:.3f} in band (median |s - 0.5| {dist:.2f})"
                                    for k, (share, dist) in arms.items()))
    assert arms["midpoint"][0] > arms["defaults"][0]


# --------------------------------------------------------------------------
# 10. determinism


SMALL = """
[cohort]
size = 400
prevalence = 0.07
[data]
train_samples = 80
test_samples = 40
[sft]
epochs = 1
positive_repeats = 1
[grpo]
steps = 2
prompts_per_step = 2
max_len = 6
[eval]
max_len = 16
"""

OUTPUTS = [
    {"raw_text": "<think>age 63</think>\\boxed{0.8}", "label": 0},
    {"raw_text": "\\boxed{0.5} \\boxed{0.7}", "label": 1, "token_length": 9000},
    {"raw_text": "no box", "label": 0},
]


def all_subcommands(d, ini, cohort, outputs):
    c = ["--config", ini]
    return [
        ["synth", *c, "--out", f"{d}/cohort.ndrec"],
        ["render", *c, "--in", cohort, "--horizons", "1,2", "--out", f"{d}/inputs.ndrec"],
        ["label-check", *c, "--in", cohort, "--horizons", "1,2,3", "--out", f"{d}/labels.ndrec"],
        ["parse-check", *c, "--in", outputs, "--out", f"{d}/parsed.ndrec"],
        ["reward-eval", *c, "--in", outputs, "--out", f"{d}/rewards.ndrec"],
        ["train-sft", *c, "--cohort", cohort, "--out", f"{d}/sft.ckpt", "--metrics", f"{d}/sft.ndrec"],
        ["train-grpo", *c, "--cohort", cohort, "--init", f"{d}/sft.ckpt", "--out", f"{d}/grpo.ckpt",
         "--metrics", f"{d}/grpo.ndrec"],
        ["evaluate", *c, "--checkpoint", f"{d}/sft.ckpt", "--cohort", cohort, "--out", f"{d}/eval.json",
         "--roc-dir", f"{d}/roc"],
        ["report", *c, "--eval", f"{d}/eval.json", "--metrics", f"{d}/sft.ndrec", "--out", f"{d}/report.txt"],
    ]


@pytest.mark.criterion(10, "every subcommand run twice gives byte-identical outputs")
def test_every_subcommand_is_byte_deterministic(tmp_path, record_property):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL)
    outputs = tmp_path / "outputs.ndrec"
    write_records(outputs, "model_output", OUTPUTS)
    cohort = tmp_path / "cohort.ndrec"
    assert run(["synth", "--config", str(ini), "--out", str(cohort)]) == EXIT_OK
    trees = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        d.mkdir()
        for argv in all_subcommands(d, str(ini), str(cohort), str(outputs)):
            assert run(argv) == EXIT_OK, argv
        trees.append({p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    note(record_property, f"9 subcommands, {len(trees[0])} files compared")
    assert len(trees[0]) >= 12
    assert trees[0] == trees[1]
