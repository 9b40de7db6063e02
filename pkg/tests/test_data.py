import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nssjd.data import (
    RngStream,
    SeriesFormatError,
    SeriesMatrix,
    child_stream,
    load_matrix_csv,
    load_series_csv,
    mix64,
    quad_flat,
    quad_unflat,
    splitmix64,
    write_matrix_csv,
    write_series_csv,
)


# ------------------------------------------------------------------ streams

def test_splitmix64_reference_sequence():
    # first two outputs of the reference SplitMix64 generator seeded with 0
    assert mix64(0, 0) == 0xE220A8397B1DCDAF
    assert mix64(0, 1) == 0x6E789E6AA1B965F4
    assert splitmix64(0) == 0


def test_stream_test_vectors():
    assert RngStream(7, 0).key() == (7191089600892374487, 6951516134914417455)
    draws = RngStream(7, 0).generator().standard_normal(3)
    np.testing.assert_array_equal(
        draws, [-0.008150489287022295, -0.7418336179316065, 0.01167339718779627]
    )


def test_child_stream_deterministic():
    a = child_stream(RngStream(7), 0).generator().standard_normal(100)
    b = child_stream(RngStream(7), 0).generator().standard_normal(100)
    np.testing.assert_array_equal(a, b)


def test_child_streams_uncorrelated():
    a = child_stream(RngStream(7), 0).generator().standard_normal(10_000)
    b = child_stream(RngStream(7), 1).generator().standard_normal(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_seed_changes_first_draw():
    a = child_stream(RngStream(7), 0).generator().standard_normal()
    b = child_stream(RngStream(8), 0).generator().standard_normal()
    assert a != b


def test_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(1, -2)
    with pytest.raises(ValueError):
        child_stream(RngStream(1), -1)


def test_stream_numpy_ints_and_roundtrip():
    s = RngStream(np.uint64(2**63 + 5), np.int64(3))
    assert RngStream.from_dict(s.to_dict()) == s
    assert s.child(np.int64(4)) == child_stream(s, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**20))
def test_stream_replay_property(seed, idx):
    s = RngStream(seed, idx)
    assert np.array_equal(s.generator().integers(0, 2**62, 4), s.generator().integers(0, 2**62, 4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 1000), st.integers(0, 1000))
def test_distinct_children_distinct_keys(seed, i, j):
    if i != j:
        assert child_stream(RngStream(seed), i).key() != child_stream(RngStream(seed), j).key()


# ------------------------------------------------------------- quad index

@given(st.integers(1, 8).flatmap(lambda p: st.tuples(st.just(p), st.integers(0, p * p - 1))))
def test_quad_index_bijection(pk):
    p, k = pk
    e, f = quad_unflat(k, p)
    assert quad_flat(e, f, p) == k
    # one-based form (e-1)*p + f
    assert (e + 1 - 1) * p + (f + 1) == k + 1


# ------------------------------------------------------------------- series

def test_series_matrix_invariants():
    with pytest.raises(ValueError):
        SeriesMatrix(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        SeriesMatrix(np.zeros((0, 2)))
    x = SeriesMatrix([[1, 2], [3, 4], [5, 6]])
    assert (x.t_len, x.dim) == (3, 2)
    with pytest.raises(ValueError):
        x.values[0, 0] = 9.0


def _write(tmp_path, text, name="s.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_small_file(tmp_path):
    path = _write(tmp_path, "t,series_1,series_2\n1,0.5,1\n2,1.5,-2\n3,2,3e-1\n")
    x = load_series_csv(path)
    assert (x.t_len, x.dim) == (3, 2)
    np.testing.assert_array_equal(x.values[2], [2.0, 0.3])


@pytest.mark.parametrize(
    "text, needle",
    [
        ("t,series_1\n", "no observations"),
        ("", "header"),
        ("time,series_1\n1,2\n", "row 1"),
        ("t,series_1,series_2\n1,2,3\n2,3\n", "row 3"),
        ("t,series_1\n1,2\n1,3\n", "row 3"),
        ("t,series_1\n2,2\n1,3\n", "not strictly increasing"),
        ("t,series_1,series_2\n1,2,abc\n", "column series_2"),
        ("t,series_1\nx,2\n", "non-numeric t"),
    ],
)
def test_load_errors(tmp_path, text, needle):
    with pytest.raises(SeriesFormatError, match=needle):
        load_series_csv(_write(tmp_path, text))


def test_nan_cell_is_named(tmp_path):
    x = SeriesMatrix(np.ones((3, 2)))
    path = tmp_path / "x.csv"
    write_series_csv(x, path)
    lines = path.read_text().splitlines()
    lines[2] = "2,1,nan"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SeriesFormatError, match=r"row 3, column series_2: non-finite"):
        load_series_csv(path)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 20).flatmap(
        lambda t: st.integers(1, 4).flatmap(
            lambda p: st.lists(
                st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=t * p, max_size=t * p
            ).map(lambda v: np.array(v).reshape(t, p))
        )
    )
)
def test_csv_roundtrip_bit_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    x = SeriesMatrix(values)
    write_series_csv(x, path)
    y = load_series_csv(path)
    assert x == y
    text = path.read_text()
    write_series_csv(y, path)
    assert path.read_text() == text


def test_matrix_csv_roundtrip(tmp_path, gen):
    m = gen.standard_normal((3, 3))
    write_matrix_csv(m, tmp_path / "m.csv")
    np.testing.assert_array_equal(load_matrix_csv(tmp_path / "m.csv"), m)
    (tmp_path / "bad.csv").write_text("1,2\n3,4\n5,6\n")
    with pytest.raises(SeriesFormatError, match="square"):
        load_matrix_csv(tmp_path / "bad.csv")


def test_seventeen_digits_roundtrip():
    from nssjd.data import fmt

    for x in (0.1, 1 / 3, math.pi, 1e-300, -2.5e300):
        assert float(fmt(x)) == x
