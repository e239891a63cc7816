import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lungrisk.config import PipelineConfig, load_config
from lungrisk.errors import ConfigError, DataError
from lungrisk.records import SCHEMA_VERSION, read_records, write_json, write_records
from lungrisk.render import RenderStyle
from lungrisk.reward import LengthMode
from lungrisk.train import EmitScope, TraceMode


def write_ini(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return str(path)


# --------------------------------------------------------------------------
# config


def test_defaults_without_file():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.reward.t1 == 0.45 and cfg.reward.t2 == 0.55
    assert cfg.clip.eps_low == 0.2 and cfg.clip.eps_high == 0.28
    assert cfg.grpo.group_size == 8 and cfg.grpo.steps == 2000
    assert cfg.data.horizons == (1,)
    assert cfg.grpo.optimizer == "sgd" and cfg.grpo.max_grad_norm == 0.5


def test_max_grad_norm_can_be_switched_off(tmp_path):
    assert load_config(write_ini(tmp_path, "[grpo]\nmax_grad_norm = none\n")).grpo.max_grad_norm is None


def test_model_keys_override_one_at_a_time(tmp_path):
    cfg = load_config(write_ini(tmp_path, "[sft]\nwindow = 16\n[grpo]\nembed_dim = 4\n"))
    assert (cfg.sft_model.embed_dim, cfg.sft_model.window) == (32, 16)
    assert (cfg.grpo_model.embed_dim, cfg.grpo_model.window) == (4, 32)


def test_file_values_are_typed(tmp_path):
    path = write_ini(tmp_path, """
[run]
seed = 9
[data]
horizons = 1, 3,6
[reward]
t1 = 0.5
t2 = 0.5
length_mode = monotone
[render]
styles = table, narrative
[sft]
mode = plain
epochs = 2
[grpo]
emit = plain
balance_labels = no
max_grad_norm = 0.5
""")
    cfg = load_config(path)
    assert cfg.seed == 9 and cfg.sft.seed == 9 and cfg.grpo.seed == 9
    assert cfg.data.horizons == (1, 3, 6)
    assert cfg.reward.length_mode is LengthMode.MONOTONE
    assert cfg.grpo.reward == cfg.reward
    assert cfg.styles == (RenderStyle.TABLE, RenderStyle.NARRATIVE)
    assert cfg.sft_mode is TraceMode.PLAIN and cfg.sft.epochs == 2
    assert cfg.grpo_emit is EmitScope.PLAIN
    assert cfg.grpo.balance_labels is False and cfg.grpo.max_grad_norm == 0.5


def test_overrides_beat_the_file(tmp_path):
    path = write_ini(tmp_path, "[run]\nseed = 3\n[reward]\nt1 = 0.4\n")
    cfg = load_config(path, {"run.seed": 5, "reward.t2": 0.6, "grpo.steps": None})
    assert cfg.seed == 5 and cfg.reward.t1 == 0.4 and cfg.reward.t2 == 0.6
    assert cfg.grpo.steps == 2000


@pytest.mark.parametrize("text", [
    "[model]\nwidth = 3\n",
    "[grpo]\nkl = 0.1\n",
    "[grpo]\nsteps = many\n",
    "[grpo]\ngroup_size = 1\n",
    "[grpo]\nemit = everything\n",
    "[grpo]\nmax_grad_norm = 0\n",
    "[clip]\neps_low = 1.5\n",
    "[reward]\nt1 = 0.6\nt2 = 0.5\n",
    "[reward]\nlength_mode = cubic\n",
    "[data]\nhorizons = 0\n",
    "[data]\nhorizons = 1,x\n",
    "[cohort]\ntest_fraction = 1\n",
    "[render]\nstyles = haiku\n",
    "[sft]\nmode = verbose\n",
    "[sft]\npositive_repeats = 0\n",
    "[eval]\nmax_len = 0\n",
    "no section header\n",
])
def test_bad_config_raises_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_to_dict_is_json_ready():
    d = load_config(None, {"data.horizons": "1,2"}).to_dict()
    assert json.loads(json.dumps(d)) == d
    assert d["data"]["horizons"] == [1, 2]
    assert d["reward"]["length_mode"] == "literal"
    assert d["grpo_emit"] == "plain"
    assert d["sft_model"] == {"embed_dim": 32, "window": 64}


# --------------------------------------------------------------------------
# records


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6) | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=5), inner, max_size=4),
    max_leaves=10,
)
records = st.lists(st.dictionaries(st.text(min_size=1, max_size=8).filter(
    lambda k: k not in ("schema_version", "kind")), json_values, max_size=5), max_size=6)


@settings(max_examples=100)
@given(records)
def test_records_round_trip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rec") / "x.ndrec"
    assert write_records(path, "thing", recs) == len(recs)
    assert read_records(path, "thing") == recs
    assert read_records(path) == recs


def test_every_line_carries_schema_and_kind(tmp_path):
    path = tmp_path / "a.ndrec"
    write_records(path, "label", [{"b": 1, "a": "é"}])
    (line,) = path.read_text(encoding="utf-8").splitlines()
    assert json.loads(line) == {"schema_version": SCHEMA_VERSION, "kind": "label", "a": "é", "b": 1}
    assert line.index('"a"') < line.index('"b"')
    assert not (tmp_path / "a.ndrec.part").exists()


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "a.ndrec"
    path.write_text('\n{"schema_version": 1, "x": 2}\n\n')
    assert read_records(path) == [{"x": 2}]


@pytest.mark.parametrize("content", [
    "{not json}\n",
    "[1, 2]\n",
    '{"x": 1}\n',
    '{"schema_version": 2, "kind": "label"}\n',
    '{"schema_version": 1, "kind": "other"}\n',
])
def test_malformed_records_raise_data_error(tmp_path, content):
    path = tmp_path / "bad.ndrec"
    path.write_text(content)
    with pytest.raises(DataError):
        read_records(path, "label")


def test_missing_record_file(tmp_path):
    with pytest.raises(DataError):
        read_records(tmp_path / "none.ndrec")


def test_write_json_is_canonical(tmp_path):
    path = tmp_path / "sub" / "r.json"
    write_json(path, {"b": [1.5], "a": None})
    assert path.read_text() == '{\n  "a": null,\n  "b": [\n    1.5\n  ]\n}\n'
    with pytest.raises(ValueError):
        write_json(path, {"x": float("nan")})
