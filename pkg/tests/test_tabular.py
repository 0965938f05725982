import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causal_disparity.presets import ADULT, HDMA_ASIAN, HDMA_WHITE
from causal_disparity.tabular import (
    CATEGORICAL, CONTINUOUS, ColumnSpec, DataError, Dataset, RoleSchema, StratumWarning, bind_roles, encode,
    load_csv, split_stratified,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def small_schema(**kw):
    base = dict(sensitive="race", outcome="y", confounders=("age",), mediators=("edu",), s1_levels=("b",),
                positive_level="1")
    base.update(kw)
    return RoleSchema(**base)


@pytest.fixture
def small(tmp_path):
    p = write(tmp_path, "race,age,edu,y\na,30,hs,1\nb,41,ba,0\nc,25,hs,1\nb,52,ms,0\na,33,ba,0\n")
    return load_csv(p)


def test_minimal_file_two_categoricals(tmp_path):
    d = load_csv(write(tmp_path, "s,y\na,1\nb,0\n"))
    assert d.n == 2
    assert [c.kind for c in d.columns] == [CATEGORICAL, CATEGORICAL]
    assert d.spec("y").levels == ("0", "1")


def test_inferred_kinds_and_sorted_levels(small):
    assert small.spec("age").kind == CONTINUOUS
    assert small.spec("edu").levels == ("ba", "hs", "ms")
    assert list(small.row_ids) == [0, 1, 2, 3, 4]


def test_quoted_fields_and_missing_rows_dropped(tmp_path):
    d = load_csv(write(tmp_path, 'name,v\n"x, y",1.5\n,2\nz,\n"w",3\n'))
    assert d.n == 2 and d.n_dropped == 2
    assert set(d.labels("name")) == {"x, y", "w"}


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_csv("/nonexistent/file.csv")


def test_ragged_row_names_line(tmp_path):
    with pytest.raises(DataError, match="line 3"):
        load_csv(write(tmp_path, "a,b\n1,2\n3\n"))


def test_bad_continuous_value_names_line(tmp_path):
    p = write(tmp_path, "a,b\n1,2\nxyz,3\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p, [ColumnSpec("a", CONTINUOUS)])


def test_undeclared_level_names_line(tmp_path):
    p = write(tmp_path, "a\nu\nv\nw\n")
    with pytest.raises(DataError, match="line 4"):
        load_csv(p, [ColumnSpec("a", CATEGORICAL, ("u", "v"))])


def test_non_finite_continuous_rejected(tmp_path):
    with pytest.raises(DataError, match="line 2"):
        load_csv(write(tmp_path, "a\ninf\n"), [ColumnSpec("a", CONTINUOUS)])


@pytest.mark.parametrize("kind,levels", [(CATEGORICAL, ()), (CATEGORICAL, ("a", "a")), (CONTINUOUS, ("a",)),
                                         ("ordinal", ())])
def test_column_spec_invariants(kind, levels):
    with pytest.raises(DataError):
        ColumnSpec("c", kind, levels)


def test_dataset_is_immutable(small):
    with pytest.raises(ValueError):
        small.values["age"][0] = 1.0


def test_take_keeps_row_ids(small):
    sub = small.take(np.array([3, 1]))
    assert list(sub.row_ids) == [3, 1]
    assert list(sub.labels("race")) == ["b", "b"]


def test_bind_roles(small):
    r = bind_roles(small, small_schema())
    assert r.s1 == ("b",) and r.s2 == ("a", "c")
    assert list(r.s) == [1, 0, 1, 0, 1]
    assert list(r.y) == [1, 0, 1, 0, 0]


@pytest.mark.parametrize("kw,match", [
    (dict(mediators=("age",)), "more than one role"),
    (dict(confounders=("nope",)), "no column"),
    (dict(s1_levels=("zz",)), "not present"),
    (dict(s1_levels=("a", "b", "c")), "strict"),
    (dict(positive_level="yes"), "positive_level"),
    (dict(sensitive="age", confounders=()), "categorical"),
])
def test_bind_roles_errors(small, kw, match):
    with pytest.raises(DataError, match=match):
        bind_roles(small, small_schema(**kw))


def test_outcome_must_be_binary(tmp_path):
    d = load_csv(write(tmp_path, "race,y\na,u\nb,v\na,w\n"))
    with pytest.raises(DataError, match="exactly 2 levels"):
        bind_roles(d, RoleSchema("race", "y", (), (), s1_levels=("a",), positive_level="u"))


def test_s2_levels_complement(small):
    r = bind_roles(small, small_schema(s1_levels=None, s2_levels=("a",)))
    assert r.s2 == ("a",) and r.s1 == ("b", "c")


def test_swap_groups(small):
    r = bind_roles(small, small_schema())
    sw = r.swap_groups()
    assert np.array_equal(sw.s, 1 - r.s) and sw.s1 == r.s2


def test_encode_views(small):
    r = bind_roles(small, small_schema())
    tree, lin = encode(r, "tree"), encode(r, "linear")
    assert tree.matrix.shape == (5, 1 + 1 + 3)
    assert lin.matrix.shape == (5, 1 + 1 + 2)
    # row 1 has edu = "ba" -> (1, 0, 0) in the full one-hot view
    assert list(tree.select("mediators")[1]) == [1.0, 0.0, 0.0]
    assert tree.matrix[1, 1] == 41.0
    assert list(tree.matrix[:, 0]) == list(r.s.astype(float))
    assert tree.names("mediators") == ["edu=ba", "edu=hs", "edu=ms"]


def test_encode_rejects_unknown_view(small):
    with pytest.raises(ValueError):
        encode(bind_roles(small, small_schema()), "sparse")


@st.composite
def categorical_frames(draw):
    n = draw(st.integers(2, 40))
    k = draw(st.integers(2, 5))
    codes = draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
    s = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda v: 0 < sum(v) < len(v)))
    return n, k, np.array(codes), np.array(s)


@settings(max_examples=100, deadline=None)
@given(categorical_frames())
def test_one_hot_blocks_sum_to_one(frame):
    n, k, codes, s = frame
    cols = (ColumnSpec("g", CATEGORICAL, ("u", "v")), ColumnSpec("c", CATEGORICAL, tuple(f"l{j}" for j in range(k))),
            ColumnSpec("y", CATEGORICAL, ("0", "1")))
    d = Dataset(cols, {"g": s, "c": codes, "y": s.copy()}, np.arange(n))
    r = bind_roles(d, RoleSchema("g", "y", ("c",), (), s1_levels=("u",), positive_level="1"))
    view = encode(r, "tree")
    assert np.all(view.select("confounders").sum(axis=1) == 1.0)
    assert view.matrix.shape[0] == n and np.array_equal(r.row_ids, np.arange(n))


def test_split_exact_counts():
    cols = (ColumnSpec("g", CATEGORICAL, ("u", "v")), ColumnSpec("y", CATEGORICAL, ("0", "1")))
    s = np.array([0, 1] * 5)
    d = bind_roles(Dataset(cols, {"g": s, "y": s.copy()}, np.arange(10)),
                   RoleSchema("g", "y", (), (), s1_levels=("u",), positive_level="1"))
    strata = np.array([0] * 5 + [1] * 5)
    train, test = split_stratified(d, 0.2, strata, seed=3)
    assert test.n == 2
    assert sorted(strata[test.row_ids]) == [0, 1]
    assert sorted(np.concatenate([train.row_ids, test.row_ids]).tolist()) == list(range(10))
    again = split_stratified(d, 0.2, strata, seed=3)[1]
    assert np.array_equal(again.row_ids, test.row_ids)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=4, max_size=200).filter(lambda v: min(v.count(k) for k in set(v)) >= 2),
       st.floats(0.05, 0.95), st.integers(0, 2 ** 31))
def test_split_partition_property(strata, frac, seed):
    strata = np.array(strata)
    n = len(strata)
    s = np.arange(n) % 2
    cols = (ColumnSpec("g", CATEGORICAL, ("u", "v")), ColumnSpec("y", CATEGORICAL, ("0", "1")))
    d = bind_roles(Dataset(cols, {"g": s, "y": s.copy()}, np.arange(n)),
                   RoleSchema("g", "y", (), (), s1_levels=("u",), positive_level="1"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StratumWarning)
        train, test = split_stratified(d, frac, strata, seed)
    ids = np.concatenate([train.row_ids, test.row_ids])
    assert len(ids) == n and len(np.unique(ids)) == n
    assert abs(test.n - frac * n) <= len(np.unique(strata))


def test_singleton_stratum_warns(small):
    r = bind_roles(small, small_schema())
    with pytest.warns(StratumWarning):
        train, test = split_stratified(r, 0.5, np.array([0, 0, 0, 0, 1]), seed=1)
    assert 4 in train.row_ids


def test_split_rejects_bad_fraction(small):
    with pytest.raises(ValueError):
        split_stratified(bind_roles(small, small_schema()), 1.0, np.zeros(5), 1)


def test_schema_json_round_trip(tmp_path):
    p = tmp_path / "schema.json"
    import json
    p.write_text(json.dumps(ADULT.to_dict()))
    assert RoleSchema.from_json(p) == ADULT


def test_adult_binding(adult_csv):
    data = load_csv(adult_csv)
    r = bind_roles(data, ADULT)
    assert r.n == 45_222
    assert set(r.s1) == {"Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other"}
    assert len(r.confounders) == 3 and len(r.mediators) == 6
    view = encode(r, "tree")
    lin = encode(r, "linear")
    assert len([f for f in view.feature_map if f[0] == "marital-status"]) == 7
    assert len([f for f in lin.feature_map if f[0] == "marital-status"]) == 6


def test_hdma_polarity(tmp_path):
    rows = ["applicant_race_name_1,property_type_name,owner_occupancy_name,applicant_sex_name,loan_type_name,"
            "loan_amount_000s,applicant_income_000s,loan_status"]
    for i, race in enumerate(["White", "Asian", "Black", "White", "Asian"]):
        rows.append(f"{race},One-to-four family,Owner-occupied,Male,Conventional,{100 + i},{50 + i},"
                    f"{'Accepted' if i % 2 else 'Denied'}")
    d = load_csv(write(tmp_path, "\n".join(rows) + "\n"))
    white = bind_roles(d, HDMA_WHITE)
    asian = bind_roles(d, HDMA_ASIAN)
    assert white.s2 == ("White",) and asian.s1 == ("Asian",)
    assert list(white.s) == [1, 0, 0, 1, 0]
    assert list(asian.s) == [1, 0, 1, 1, 0]
