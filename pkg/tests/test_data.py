import numpy as np
import pytest

from ppdauc.data import (
    Dataset,
    StreamSource,
    gen_two_gaussians,
    make_imbalanced,
    read_csv,
    read_libsvm,
    to_binary,
    write_csv,
    write_libsvm,
)
from ppdauc.errors import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    LabelError,
    ParseError,
    UnsupportedError,
)
from ppdauc.metrics import auc_binary
from ppdauc.numerics import make_rng


def _balanced(n_pos, n_neg, dim=2, seed=0):
    rng = make_rng(seed, "balanced")
    X = rng.standard_normal((n_pos + n_neg, dim))
    y = np.array([1] * n_pos + [-1] * n_neg)
    return Dataset(X, y)


def test_dataset_validates():
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 2)), np.array([1, -1]))
    with pytest.raises(LabelError):
        Dataset(np.zeros((2, 2)), np.array([1, 0]))
    d = Dataset(np.zeros((2, 2)), np.array([1, -1]))
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


def test_positive_fraction_binomial_band():
    # P(|Bin(1000, .5)/1000 - .5| > .05) is about 1.6e-3
    hits = 0
    for seed in range(20):
        d = gen_two_gaussians(1000, 3, 1.0, 0.0, 1.0, 0.5, make_rng(seed, "pf"))
        hits += 0.45 <= d.positive_fraction() <= 0.55
    assert hits >= 19


def test_identical_class_means_give_chance_auc():
    d = gen_two_gaussians(4000, 5, 0.0, 0.0, 1.0, 0.5, make_rng(1, "same"))
    s = d.X @ np.arange(1.0, 6.0)
    assert abs(auc_binary(s[d.y == 1], s[d.y == -1]) - 0.5) < 0.05


def test_empty_generation_records_dim():
    d = gen_two_gaussians(0, 7, 0.0, 0.0, 1.0, 0.5, make_rng(0))
    assert len(d) == 0 and d.dim == 7


def test_bad_prior_is_config_error():
    with pytest.raises(ConfigError):
        gen_two_gaussians(10, 2, 0.0, 0.0, 1.0, 1.0, make_rng(0))


@pytest.mark.parametrize("drop,kept", [(0.9, 10), (0.6, 40), (0.0, 100)])
def test_make_imbalanced_counts(drop, kept):
    d = _balanced(100, 100)
    out = make_imbalanced(d, drop, make_rng(3))
    assert out.n_neg == kept and out.n_pos == 100


def test_make_imbalanced_is_sub_multiset():
    d = _balanced(30, 70, seed=2)
    out = make_imbalanced(d, 0.5, make_rng(4))
    rows = {tuple(r) + (int(l),) for r, l in zip(d.X, d.y)}
    assert all(tuple(r) + (int(l),) in rows for r, l in zip(out.X, out.y))
    pos = {tuple(r) for r, l in zip(d.X, d.y) if l == 1}
    assert pos == {tuple(r) for r, l in zip(out.X, out.y) if l == 1}


def test_make_imbalanced_zero_drop_is_permutation():
    d = _balanced(10, 10)
    out = make_imbalanced(d, 0.0, make_rng(5))
    assert sorted(map(tuple, out.X)) == sorted(map(tuple, d.X))


def test_make_imbalanced_rejects_multiclass():
    d = Dataset(np.zeros((3, 1)), np.array([0, 1, 2]), num_classes=3)
    with pytest.raises(UnsupportedError):
        make_imbalanced(d, 0.5, make_rng(0))


def test_to_binary():
    d = Dataset(np.zeros((4, 1)), np.array([0, 1, 2, 1]), num_classes=3)
    assert list(to_binary(d, [1]).y) == [-1, 1, -1, 1]


def test_libsvm_examples(tmp_path):
    p = tmp_path / "a.svm"
    p.write_text("+1 1:0.5 3:2.0\n-1 2:1\n")
    d = read_libsvm(p)
    assert np.array_equal(d.X, [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]])
    assert list(d.y) == [1, -1]


def test_libsvm_label_mapping_and_comments(tmp_path):
    p = tmp_path / "b.svm"
    p.write_text("0 1:1  # zero means negative\n\n1 2:3\n")
    d = read_libsvm(p)
    assert list(d.y) == [-1, 1]


@pytest.mark.parametrize("text,line", [("+1 1:0.5\n-1 garbage\n", 2), ("+1 0:1\n", 1), ("2 1:1\n", 1)])
def test_libsvm_parse_error_has_line(tmp_path, text, line):
    p = tmp_path / "bad.svm"
    p.write_text(text)
    with pytest.raises(ParseError) as exc:
        read_libsvm(p)
    assert exc.value.line == line


def test_libsvm_empty(tmp_path):
    p = tmp_path / "empty.svm"
    p.write_text("")
    with pytest.raises(EmptyInputError):
        read_libsvm(p)


def test_libsvm_round_trip_exact(tmp_path):
    rng = make_rng(9)
    X = rng.standard_normal((50, 6)) * 10.0 ** rng.integers(-300, 300, size=(50, 6))
    X[rng.random((50, 6)) < 0.3] = 0.0
    X[:, -1] = 1.0  # keep dim recoverable
    d = Dataset(X, np.where(rng.random(50) < 0.5, 1, -1))
    p = tmp_path / "rt.svm"
    write_libsvm(d, p)
    back = read_libsvm(p)
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)


def test_csv_example_without_header(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0.1,0.2,1\n")
    d = read_csv(p, label_column=2)
    assert np.array_equal(d.X, [[0.1, 0.2]]) and list(d.y) == [1]


def test_csv_round_trip_and_named_label(tmp_path):
    d = _balanced(5, 5, dim=3, seed=7)
    p = tmp_path / "rt.csv"
    write_csv(d, p)
    back = read_csv(p, label_column="label")
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)


def test_csv_missing_cell_is_error(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b,label\n1,2,1\n3,,-1\n")
    with pytest.raises(ParseError) as exc:
        read_csv(p)
    assert exc.value.line == 3


def test_csv_empty(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(EmptyInputError):
        read_csv(p)


def test_stream_equal_seeds_identical():
    d = _balanced(20, 30)
    a = d.stream(make_rng(1, "s")).draw(10_000)
    b = d.stream(make_rng(1, "s")).draw(10_000)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_stream_counts_consumption():
    s = StreamSource.two_gaussians(3, 1.0, 0.0, 1.0, 0.3, make_rng(2))
    s.draw(5)
    ex = s.next()
    assert s.consumed == 6 and ex.x.shape == (3,)


def test_stream_from_empty_dataset():
    with pytest.raises(EmptyInputError):
        Dataset.empty(2).stream(make_rng(0))


def test_split_sizes_disjoint():
    d = _balanced(40, 60)
    tr, te = d.split(0.25, make_rng(0))
    assert len(te) == 25 and len(tr) == 75
    rows = {tuple(r) for r in tr.X} | {tuple(r) for r in te.X}
    assert len(rows) == 100
