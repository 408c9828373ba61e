import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsiclust import feature_io
from wsiclust.features import FeatureMatrix


def f32_matrix(n, d, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(scale=10.0, size=(n, d)).astype(np.float32).astype(np.float64)


def test_tcf_round_trip_exact(tmp_path):
    ids = ("a:0:0", "b:128:0", "çedille:0:128")
    fm = FeatureMatrix(ids, f32_matrix(3, 5, 0))
    path = tmp_path / "f.tcf"
    feature_io.write_tcf(path, fm)
    back = feature_io.read_tcf(path)
    assert back.region_ids == ids
    assert np.array_equal(back.data, fm.data)


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(1, 12),
    d=st.integers(1, 9),
    seed=st.integers(0, 2**16),
    data=st.data(),
)
def test_tcf_round_trip_property(tmp_path_factory, n, d, seed, data):
    ids = data.draw(
        st.lists(
            st.text(
                alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
            ),
            min_size=n,
            max_size=n,
            unique=True,
        )
    )
    fm = FeatureMatrix(tuple(ids), f32_matrix(n, d, seed))
    path = tmp_path_factory.mktemp("tcf") / "f.tcf"
    feature_io.write_tcf(path, fm)
    back = feature_io.read_tcf(path)
    assert back.region_ids == fm.region_ids
    assert np.array_equal(back.data, fm.data)


def test_tcf_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.tcf"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        feature_io.read_tcf(path)


def test_tcf_rejects_truncation(tmp_path):
    fm = FeatureMatrix(("a", "b"), f32_matrix(2, 4, 1))
    path = tmp_path / "f.tcf"
    feature_io.write_tcf(path, fm)
    raw = path.read_bytes()
    for cut in (len(raw) - 1, 14):
        clipped = tmp_path / "clipped.tcf"
        clipped.write_bytes(raw[:cut])
        with pytest.raises(ValueError, match="truncated"):
            feature_io.read_tcf(clipped)


def test_csv_round_trip(tmp_path):
    fm = FeatureMatrix(("r:0:0", "r:1:0"), np.array([[0.1, -2.5], [3.25, 1e-9]]))
    path = tmp_path / "f.csv"
    feature_io.write_csv(path, fm)
    header = path.read_text().splitlines()[0]
    assert header == "region_id,f0,f1"
    back = feature_io.read_csv(path)
    assert back.region_ids == fm.region_ids
    assert np.array_equal(back.data, fm.data)


def test_csv_rejects_missing_header(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,1.0,2.0\n")
    with pytest.raises(ValueError, match="header"):
        feature_io.read_csv(path)


def test_csv_rejects_ragged_rows(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("region_id,f0,f1\na,1.0\n")
    with pytest.raises(ValueError, match="expected 3 fields"):
        feature_io.read_csv(path)


def test_load_features_sniffs_format(tmp_path):
    fm = FeatureMatrix(("x", "y"), f32_matrix(2, 3, 2))
    tcf = tmp_path / "f.tcf"
    csvf = tmp_path / "f.csv"
    feature_io.write_tcf(tcf, fm)
    feature_io.write_csv(csvf, fm)
    assert feature_io.load_features(tcf).region_ids == fm.region_ids
    assert feature_io.load_features(csvf).region_ids == fm.region_ids
