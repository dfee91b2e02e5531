import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from claimkit.dataset import (
    Split,
    load_dataset,
    load_labels,
    partition_sizes,
    seeded_shuffle,
    select_exemplars,
    split_dataset,
    splitmix64,
    write_dataset,
    write_predictions,
)
from claimkit.errors import (
    ConfigError,
    DuplicateId,
    EmptyDataset,
    ExemplarFromEvalSplit,
    InvalidLabel,
    ParseError,
    WrongClassMix,
)
from claimkit.schema import Label


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


ROW = {"id": "a", "turns": [{"role": "Judge", "text": "hello"}], "manipulative": False}


def test_fixture_loads(fixture_ds):
    assert len(fixture_ds) == 20
    assert fixture_ds["fx-01"].label.primary_manipulator.value == "Plaintiff"


def test_roundtrip(tmp_path, fixture_ds):
    out = tmp_path / "copy.jsonl"
    write_dataset(out, fixture_ds)
    again = load_dataset(out)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in fixture_ds]


def test_parse_error_carries_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(ROW) + "\n{not json\n")
    with pytest.raises(ParseError) as err:
        load_dataset(p)
    assert err.value.line == 2


def test_unknown_role_is_parse_error(tmp_path):
    row = {**ROW, "turns": [{"role": "Bailiff", "text": "all rise"}]}
    with pytest.raises(ParseError):
        load_dataset(_write(tmp_path / "r.jsonl", [row]))


def test_duplicate_id(tmp_path):
    with pytest.raises(DuplicateId):
        load_dataset(_write(tmp_path / "d.jsonl", [ROW, ROW]))


def test_invalid_gold_label(tmp_path):
    row = {**ROW, "manipulative": False, "techniques": ["Evasion"]}
    with pytest.raises(InvalidLabel):
        load_dataset(_write(tmp_path / "i.jsonl", [row]))
    row = {**ROW, "manipulative": True}
    with pytest.raises(InvalidLabel):
        load_dataset(_write(tmp_path / "j.jsonl", [row]))


def test_unlabelled_records_are_allowed(tmp_path):
    row = {k: v for k, v in ROW.items() if k != "manipulative"}
    ds = load_dataset(_write(tmp_path / "u.jsonl", [row]))
    assert ds["a"].label is None and ds.golds() == {}


def test_predictions_roundtrip_sorted(tmp_path):
    preds = {"b": Label.non_manipulative(), "a": Label(True)}
    p = tmp_path / "p.jsonl"
    write_predictions(p, preds)
    assert [json.loads(line)["id"] for line in p.read_text().splitlines()] == ["a", "b"]
    assert load_labels(p) == preds
    with pytest.raises(InvalidLabel):
        load_labels(p, gold=True)


# -- splitting ----------------------------------------------------------------


def test_splitmix64_reference_values():
    # First outputs for seed 0 of the reference SplitMix64 generator.
    gen = splitmix64(0)
    assert [next(gen) for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_default_sizes_for_1063():
    assert partition_sizes(1063) == (744, 159, 160)


def test_ratio_validation():
    with pytest.raises(ConfigError):
        partition_sizes(10, (0.5, 0.5))
    with pytest.raises(ConfigError):
        partition_sizes(10, (0.6, 0.3, 0.3))
    with pytest.raises(EmptyDataset):
        split_dataset([])


def test_split_manifest_roundtrip(tmp_path, fixture_ds):
    split = split_dataset(fixture_ds, seed=3)
    split.save(tmp_path / "s.json")
    assert Split.load(tmp_path / "s.json") == split


def test_split_ignores_input_order():
    ids = [f"id{i}" for i in range(30)]
    assert split_dataset(ids, seed=5) == split_dataset(list(reversed(ids)), seed=5)


def test_overlapping_manifest_rejected():
    with pytest.raises(ConfigError):
        Split(("a",), ("a",), ())


@given(st.integers(1, 400), st.integers(0, 2**64 - 1))
def test_split_is_disjoint_and_exhaustive(n, seed):
    ids = [f"x{i:04d}" for i in range(n)]
    split = split_dataset(ids, seed=seed)
    parts = [set(split.train), set(split.val), set(split.test)]
    assert sum(map(len, parts)) == n
    assert set().union(*parts) == set(ids)
    assert split.sizes == partition_sizes(n)


@given(st.lists(st.text(min_size=1, max_size=5), unique=True, max_size=30), st.integers(0, 1000))
def test_shuffle_is_a_permutation(ids, seed):
    out = seeded_shuffle(ids, seed)
    assert sorted(out) == sorted(ids)
    assert out == seeded_shuffle(ids, seed)


# -- exemplars ----------------------------------------------------------------

MANIP = ["fx-03", "fx-05", "fx-07"]
CLEAN = ["fx-02", "fx-06"]


def _train_split(fixture_ds, test_ids=("fx-20",)):
    train = tuple(sorted(i for i in fixture_ds.ids if i not in test_ids))
    return Split(train, (), tuple(test_ids))


def test_select_exemplars_orders_by_class(fixture_ds):
    chosen = select_exemplars(fixture_ds, CLEAN + MANIP, _train_split(fixture_ds))
    assert [e.dialogue.id for e in chosen] == MANIP + CLEAN


def test_exemplar_from_test_split(fixture_ds):
    with pytest.raises(ExemplarFromEvalSplit) as err:
        select_exemplars(fixture_ds, MANIP[:2] + ["fx-20"] + CLEAN, _train_split(fixture_ds))
    assert err.value.partition == "test"


def test_wrong_class_mix(fixture_ds):
    with pytest.raises(WrongClassMix):
        select_exemplars(fixture_ds, MANIP + ["fx-09", "fx-02"], _train_split(fixture_ds))
