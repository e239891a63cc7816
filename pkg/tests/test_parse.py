import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lungrisk.parse import ModelOutput, boxed_candidates, extract_score, parse_numeral, split_sections

from oracles import score_oracle, sections_oracle


@pytest.mark.parametrize("text, expected", [
    ("<think>A</think>B", ("A", "B")),
    ("B", (None, "B")),
    ("<think>A", (None, "<think>A")),
    ("x<think>A</think>B", (None, "x<think>A</think>B")),
    ("<think></think>", ("", "")),
    ("<think>a</think>b</think>c", ("a", "b</think>c")),
])
def test_split_sections(text, expected):
    assert split_sections(text) == expected


@pytest.mark.parametrize("answer, expected", [
    ("final risk: \\boxed{0.72}", 0.72),
    ("no score here", None),
    ("\\boxed{1.5}", None),
    ("\\boxed{0.2} ... revised: \\boxed{0.6}", 0.6),
    ("\\boxed{ 0.35 }", 0.35),
    ("\\boxed{.5}", 0.5),
    ("\\boxed{1}", 1.0),
    ("\\boxed{0}", 0.0),
    ("\\boxed{1.0}", 1.0),
    ("\\boxed{1.00}", None),
    ("\\boxed{0.1234567}", None),
    ("\\boxed{{0.5}}", None),
    ("\\boxed{0.4} then \\boxed{oops}", 0.4),
    ("\\boxed{0.4", None),
    ("\\boxed{-0.1}", None),
])
def test_extract_score_examples(answer, expected):
    assert extract_score(answer) == expected


def test_candidates_stop_at_first_brace():
    assert boxed_candidates("\\boxed{a}\\boxed{b{c}") == ["a", "b{c"]
    assert parse_numeral("b{c") is None


boxish = st.lists(st.sampled_from(
    ["\\boxed{", "}", "{", "0", "1", ".", "5", "9", " ", "x", "<think>", "</think>", "\n", "2"]
), max_size=30).map("".join)


@settings(max_examples=2000)
@given(st.one_of(boxish, st.text(max_size=60)))
def test_extract_score_matches_regex_oracle(text):
    got = extract_score(text)
    assert got == score_oracle(text)
    assert got is None or 0.0 <= got <= 1.0


@settings(max_examples=1000)
@given(st.one_of(boxish, st.text(max_size=60)))
def test_split_sections_matches_oracle(text):
    assert split_sections(text) == sections_oracle(text)


tag_free = st.text(max_size=40).filter(lambda s: "<think>" not in s and "</think>" not in s)


@settings(max_examples=500)
@given(tag_free, tag_free)
def test_split_inverts_concatenation(think, answer):
    assert split_sections("<think>" + think + "</think>" + answer) == (think, answer)


@given(st.text(max_size=80))
def test_model_output_invariants(text):
    out = ModelOutput.from_text(text, 3)
    if out.think is not None:
        assert out.raw_text == "<think>" + out.think + "</think>" + out.answer
    else:
        assert out.answer == out.raw_text


def test_model_output_rejects_inconsistent_sections():
    with pytest.raises(ValueError):
        ModelOutput("<think>a</think>b", "a", "c", 1)
    with pytest.raises(ValueError):
        ModelOutput("abc", None, "abc", -1)


def test_model_output_counts_tokens_with_vocabulary():
    out = ModelOutput.from_text("<think>age</think>\\boxed{0.5}")
    # <think> age </think> \boxed{ 0 . 5 }
    assert out.token_length == 8
    assert out.score == 0.5


def test_only_ascii_digits_count():
    assert extract_score("\\boxed{.\u0663}") is None
