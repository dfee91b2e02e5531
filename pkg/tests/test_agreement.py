import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from claimkit.agreement import (
    AnnotationSet,
    agreement_report,
    cohen_kappa,
    format_agreement,
    krippendorff_alpha,
    nominal_distance,
    set_jaccard_distance,
)
from claimkit.errors import DegenerateInput
from claimkit.schema import Label, Technique
from claimkit.transcript import Role


def test_kappa_hand_case():
    # p_o = 3/4, p_e = 1/2 * 1/4 + 1/2 * 3/4 = 1/2
    assert cohen_kappa([1, 1, 0, 0], [1, 0, 0, 0]) == pytest.approx(0.5, abs=1e-12)


def test_kappa_degenerate_cases():
    assert cohen_kappa(["a", "a"], ["a", "a"]) == 1.0
    assert cohen_kappa([1, 0, 1], [0, 1, 0]) < 0
    with pytest.raises(DegenerateInput):
        cohen_kappa([1], [1])
    with pytest.raises(DegenerateInput):
        cohen_kappa([1, 0], [1])
    with pytest.raises(DegenerateInput):
        cohen_kappa([1, None], [1, 0])


def test_alpha_textbook_example():
    # Three coders, four units, u4 has a single value and drops out.
    # Pairable values: u1 (a,a), u2 (a,b,b), u3 (b,b) -> n = 7
    ann = AnnotationSet(
        {
            "u1": {"c1": "a", "c2": "a"},
            "u2": {"c1": "a", "c2": "b", "c3": "b"},
            "u3": {"c1": "b", "c3": "b"},
            "u4": {"c2": "a"},
        }
    )
    # o_ab = o_ba = 2 * (1/2) = 1 -> D_o = 2/7; n_a = 3, n_b = 4 -> D_e = 2*3*4/(7*6) = 4/7
    assert krippendorff_alpha(ann) == pytest.approx(1 - (2 / 7) / (4 / 7), abs=1e-12)


def test_alpha_perfect_agreement_single_value_is_one():
    ann = AnnotationSet({"u1": {"a": 1, "b": 1}, "u2": {"a": 1, "b": 1}})
    assert krippendorff_alpha(ann) == 1.0


def test_alpha_needs_two_pairable_units():
    with pytest.raises(DegenerateInput):
        krippendorff_alpha(AnnotationSet({"u1": {"a": 1, "b": 0}, "u2": {"a": 1}}))
    with pytest.raises(DegenerateInput):
        AnnotationSet({"u1": {"a": 1}, "u2": {"a": 0}})


def test_set_jaccard_distance():
    assert set_jaccard_distance({"x", "y"}, {"y", "z"}) == pytest.approx(2 / 3)
    assert set_jaccard_distance(set(), set()) == 0.0
    assert nominal_distance("p", "p") == 0.0


_value = st.sampled_from("abc")
_unit = st.dictionaries(st.sampled_from(["c1", "c2", "c3"]), _value, min_size=0, max_size=3)


@given(st.lists(_unit, min_size=2, max_size=8))
def test_alpha_nominal_matches_pairwise_oracle(rows):
    units = {f"u{i}": row for i, row in enumerate(rows)}
    pairable = [list(r.values()) for r in rows if len(r) >= 2]
    try:
        ann = AnnotationSet(units)
        got = krippendorff_alpha(ann)
    except DegenerateInput:
        assert len(pairable) < 2 or len({a for r in rows for a in r}) < 2
        return
    assert got == pytest.approx(float(oracles.alpha_pairwise(pairable, nominal_distance)), abs=1e-9)


_tset = st.frozensets(st.sampled_from(["x", "y", "z"]), max_size=3)


@given(st.lists(st.dictionaries(st.sampled_from(["c1", "c2"]), _tset, min_size=2, max_size=2), min_size=2, max_size=6))
def test_alpha_set_distance_matches_oracle(rows):
    ann = AnnotationSet({f"u{i}": r for i, r in enumerate(rows)})
    expected = oracles.alpha_pairwise([list(r.values()) for r in rows], set_jaccard_distance)
    assert krippendorff_alpha(ann, "set-jaccard") == pytest.approx(float(expected), abs=1e-9)


def _lab(m, who=None, *techs):
    return Label(m, who, frozenset(techs)) if m else Label.non_manipulative()


def test_agreement_report_three_questions():
    P, D = Role.PLAINTIFF, Role.DEFENDANT
    E, G = Technique.EVASION, Technique.GASLIGHTING
    a = {"d1": _lab(True, P, E), "d2": _lab(True, D, G), "d3": _lab(False), "d4": _lab(True, P, E, G)}
    b = {"d1": _lab(True, P, E), "d2": _lab(True, P, G), "d3": _lab(False), "d4": _lab(False)}
    report = agreement_report({"ann1": a, "ann2": b})
    assert report["q1_kappa"] == pytest.approx(cohen_kappa([1, 1, 0, 1], [1, 1, 0, 0]))
    assert report["q2_kappa"] == pytest.approx(cohen_kappa([P, D], [P, P]))
    assert report["q3"]["units"] == 2
    text = format_agreement(report)
    assert "Q3 (techniques)" in text and "Q2 and Q3 only count" in text


def test_agreement_report_undefined_q3_is_reported_not_raised():
    P = Role.PLAINTIFF
    a = {"d1": _lab(True, P), "d2": _lab(False)}
    b = {"d1": _lab(True, P), "d2": _lab(True, P)}
    report = agreement_report({"a": a, "b": b})
    assert report["q3_alpha"] is None and "note" in report["q3"]
    assert "n/a" in format_agreement(report)
