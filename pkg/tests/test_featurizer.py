import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualgop.aligner import PhoneSegment
from dualgop.errors import InsufficientPhones, InvalidInput, SchemaError
from dualgop.featurizer import (
    PhoneCategoryMap,
    UtteranceFeatures,
    aggregate,
    feature_names,
    read_features,
    write_features,
)
from dualgop.scoring import ScoreRecord

CMAP = PhoneCategoryMap({"a": "vowel", "i": "vowel", "t": "consonant", "k": "consonant"})


def rec(phone, s2, s1=None, start=0):
    return ScoreRecord(PhoneSegment(phone, start, start + 1), s2, phone, s1, None if s1 is None else phone)


def hand_records():
    return [rec("a", -1.0, -0.5), rec("i", -3.0, -1.5), rec("t", -2.0, -2.0), rec("k", -2.0, -1.0)]


def test_hand_example_values_and_order():
    f = aggregate(hand_records(), CMAP)
    assert f.dim == 24
    expected = [
        -3.0, -2.0, 1.0, -0.5,                 # psl2 vowel
        -2.0, -2.0, 0.0, 0.0,                  # psl2 consonant (constant)
        -3.0, -2.0, np.sqrt(0.5), np.sqrt(0.5) / -2.0,  # psl2 combined
        -1.5, -1.0, 0.5, -0.5,                 # psl1 vowel
        -2.0, -1.5, 0.5, 0.5 / -1.5,           # psl1 consonant
        -2.0, -1.25, np.sqrt(0.3125), np.sqrt(0.3125) / -1.25,
    ]
    np.testing.assert_allclose(f.values, expected, rtol=0, atol=1e-12)
    assert f.names[:4] == ("psl2_vowel_min", "psl2_vowel_mean", "psl2_vowel_std", "psl2_vowel_nstd")
    assert f.names[-1] == "psl1_combined_nstd"
    assert list(f.names) == feature_names(True)
    assert f["psl2_vowel_nstd"] == -0.5


def test_constant_category_block():
    recs = [rec("a", -0.7), rec("i", -0.7), rec("t", -1.0), rec("k", -2.0)]
    f = aggregate(recs, CMAP, use_l1=False)
    np.testing.assert_array_equal(f.values[:4], [-0.7, -0.7, 0.0, 0.0])


def test_zero_mean_gives_zero_nstd():
    recs = [rec("a", 0.0), rec("i", 0.0), rec("t", -1.0), rec("k", -2.0)]
    assert aggregate(recs, CMAP, use_l1=False)["psl2_vowel_nstd"] == 0.0


def test_twelve_is_prefix_of_twenty_four():
    f24 = aggregate(hand_records(), CMAP)
    f12 = aggregate(hand_records(), CMAP, use_l1=False)
    assert f12.dim == 12
    np.testing.assert_array_equal(f12.values, f24.values[:12])
    assert f12.names == f24.names[:12]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("aitk"), st.floats(-20, 0), st.floats(-20, 0)), min_size=4, max_size=20),
       st.randoms(use_true_random=False))
def test_permutation_invariance_and_block_properties(items, rnd):
    items = [("a", -1.0, -1.0), ("i", -2.0, -1.0), ("t", -1.0, -3.0), ("k", -0.5, -0.1)] + items
    recs = [rec(p, a, b) for p, a, b in items]
    f = aggregate(recs, CMAP)
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    g = aggregate(shuffled, CMAP)
    np.testing.assert_allclose(g.values, f.values, rtol=1e-12, atol=1e-12)
    blocks = f.values.reshape(6, 4)
    assert np.all(blocks[:, 0] <= blocks[:, 1] + 1e-12)
    assert np.all(blocks[:, 2] >= 0)
    assert np.all(blocks[:, :2] <= 0)
    assert np.all(blocks[:, 3] <= 0)


def test_insufficient_phones():
    with pytest.raises(InsufficientPhones) as exc:
        aggregate([rec("a", -1), rec("t", -1), rec("k", -2)], CMAP, use_l1=False)
    assert exc.value.category == "vowel"
    with pytest.raises(InvalidInput):
        aggregate([rec("a", -1), rec("i", -1), rec("t", -1), rec("k", -2)], CMAP, use_l1=True)


def test_category_map_validation():
    with pytest.raises(SchemaError):
        PhoneCategoryMap({"sil": "silence"})
    with pytest.raises(InvalidInput):
        UtteranceFeatures(np.zeros(5), tuple("abcde"))


def test_feature_file_round_trip(tmp_path):
    f = aggregate(hand_records(), CMAP)
    write_features(tmp_path / "f.csv", [("u1", f), ("u2", f)])
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "utt_id," + ",".join(feature_names(True))
    back = read_features(tmp_path / "f.csv")
    assert list(back) == ["u1", "u2"]
    np.testing.assert_array_equal(back["u2"].values, f.values)
    (tmp_path / "bad.csv").write_text("utt_id,x\nu1,1\n")
    with pytest.raises(SchemaError):
        read_features(tmp_path / "bad.csv")
