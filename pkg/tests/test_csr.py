import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matgen import random_csr
from sketchgemm import (CsrMatrix, MatrixMarketError, from_triplets, identity,
                        parse_matrix_market, transpose, validate,
                        write_matrix_market)


def test_parse_single_entry():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n"
                            "2 2 1\n1 1 3.0\n")
    assert a.nrows == 2 and a.ncols == 2
    np.testing.assert_array_equal(a.row_ptr, [0, 1, 1])
    np.testing.assert_array_equal(a.col_idx, [0])
    np.testing.assert_array_equal(a.values, [3.0])


def test_parse_symmetric_expansion():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n"
                            "2 2 1\n2 1 5.0\n")
    assert a.nnz == 2
    np.testing.assert_array_equal(a.row_ptr, [0, 1, 2])
    np.testing.assert_array_equal(a.col_idx, [1, 0])
    np.testing.assert_array_equal(a.values, [5.0, 5.0])


def test_parse_symmetric_diagonal_not_duplicated():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n"
                            "2 2 2\n1 1 4.0\n2 1 5.0\n")
    assert a.nnz == 3
    assert a.to_dense()[0, 0] == 4.0


def test_parse_duplicates_summed():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n"
                            "2 2 2\n1 1 2.0\n1 1 3.0\n")
    assert a.nnz == 1
    assert a.values[0] == 5.0


def test_parse_pattern_gets_unit_values():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate pattern general\n"
                            "2 3 2\n1 3\n2 1\n")
    np.testing.assert_array_equal(a.values, [1.0, 1.0])


def test_parse_integer_field():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate integer general\n"
                            "1 1 1\n1 1 7\n")
    assert a.values[0] == 7.0


def test_parse_comments_and_blank_lines():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n"
                            "% a comment\n\n2 2 1\n% another\n1 2 1.5\n")
    assert a.nnz == 1 and a.col_idx[0] == 1


def test_parse_crlf_and_bytes():
    a = parse_matrix_market(b"%%MatrixMarket matrix coordinate real general\r\n"
                            b"2 2 1\r\n1 1 3.0\r\n")
    assert a.nnz == 1 and a.values[0] == 3.0


def test_parse_symmetric_pattern():
    a = parse_matrix_market("%%MatrixMarket matrix coordinate pattern symmetric\n"
                            "3 3 2\n2 1\n3 3\n")
    dense = a.to_dense()
    np.testing.assert_array_equal(dense, [[0, 1, 0], [1, 0, 0], [0, 0, 1]])


@pytest.mark.parametrize("text,fragment", [
    ("", "line 1"),
    ("%%MatrixMarket matrix array real general\n2 2 1\n", "array"),
    ("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n", "complex"),
    ("%%MatrixMarket matrix coordinate real skew-symmetric\n1 1 1\n1 1 1\n", "skew"),
    ("%%MatrixMarket matrix coordinate real general\n2 2\n", "size"),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", "line 3"),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", "line 3"),
    ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", "expected 2"),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n", "more entries"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(MatrixMarketError, match=fragment):
        parse_matrix_market(text)


def test_parse_rejects_oversized_dims():
    with pytest.raises(MatrixMarketError, match="32-bit"):
        parse_matrix_market("%%MatrixMarket matrix coordinate real general\n"
                            f"{2**31} 2 0\n")


def test_roundtrip_bit_exact():
    rng = np.random.default_rng(7)
    a = random_csr(rng, 23, 31, 0.1)
    # write() uses repr formatting, so values must survive exactly
    b = parse_matrix_market(write_matrix_market(a))
    np.testing.assert_array_equal(a.row_ptr, b.row_ptr)
    np.testing.assert_array_equal(a.col_idx, b.col_idx)
    assert all(x == y for x, y in zip(a.values, b.values))


def test_parse_output_validates_clean():
    rng = np.random.default_rng(11)
    a = random_csr(rng, 40, 17, 0.15)
    assert validate(parse_matrix_market(write_matrix_market(a))) == []


def test_transpose_row_vector():
    a = from_triplets(1, 2, [0, 0], [0, 1], [3.0, 4.0])
    t = transpose(a)
    assert (t.nrows, t.ncols) == (2, 1)
    np.testing.assert_array_equal(t.values, [3.0, 4.0])
    np.testing.assert_array_equal(t.col_idx, [0, 0])


def test_transpose_identity():
    a = identity(5)
    t = transpose(a)
    np.testing.assert_array_equal(t.row_ptr, a.row_ptr)
    np.testing.assert_array_equal(t.col_idx, a.col_idx)


def test_transpose_matches_triplet_sort_oracle():
    rng = np.random.default_rng(3)
    a = random_csr(rng, 20, 30, 0.1)
    # independent construction: flip coordinates, canonicalize from scratch
    rows = np.repeat(np.arange(a.nrows), a.row_nnz())
    want = from_triplets(a.ncols, a.nrows, a.col_idx, rows, a.values)
    got = transpose(a)
    np.testing.assert_array_equal(got.row_ptr, want.row_ptr)
    np.testing.assert_array_equal(got.col_idx, want.col_idx)
    np.testing.assert_array_equal(got.values, want.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_transpose_involution(seed):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, int(rng.integers(1, 30)), int(rng.integers(1, 30)), 0.2)
    t = transpose(transpose(a))
    np.testing.assert_array_equal(t.row_ptr, a.row_ptr)
    np.testing.assert_array_equal(t.col_idx, a.col_idx)
    np.testing.assert_array_equal(t.values, a.values)


def test_validate_clean():
    assert validate(identity(4)) == []


def test_validate_nondecreasing():
    a = CsrMatrix(2, 3, np.array([0, 2, 1]), np.array([0, 1], np.int32),
                  np.array([1.0, 1.0]))
    assert validate(a) == ["row_ptr not non-decreasing at 2"]


def test_validate_duplicate_column():
    a = CsrMatrix(1, 3, np.array([0, 2]), np.array([1, 1], np.int32),
                  np.array([1.0, 1.0]))
    assert validate(a) == ["duplicate/unsorted column in row 0"]


def test_validate_out_of_range_column():
    a = CsrMatrix(1, 2, np.array([0, 1]), np.array([5], np.int32),
                  np.array([1.0]))
    assert any("out of range in row 0" in p for p in validate(a))


def test_from_triplets_rejects_oversized():
    with pytest.raises(ValueError, match="32-bit"):
        from_triplets(2**31, 2, [], [], [])
