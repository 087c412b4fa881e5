import logging

import numpy as np
import pytest

from elevatorcodes.codes import (
    BUILTIN_OUTER_CODES,
    ClassicalCode,
    builtin_outer,
    combine,
    css_commutes,
    is_matchable,
    min_distance_bruteforce,
    read_code,
    repetition,
    resolve_outer,
    write_code,
)
from elevatorcodes.errors import CodeFormatError, InfeasibleError
from elevatorcodes.gf2 import BinaryMatrix


@pytest.mark.parametrize(
    "name, n, k, d",
    [
        pytest.param("15_9_3", 15, 9, 3, id="15_9_3"),
        pytest.param("15_6_5", 15, 6, 5, id="15_6_5"),
        pytest.param("16_3_8", 16, 3, 8, id="16_3_8"),
    ],
)
def test_builtin_outer_codes(name, n, k, d):
    code = builtin_outer(name)
    assert (code.n, code.k, code.claimed_distance) == (n, k, d)
    assert min_distance_bruteforce(code) == d
    assert is_matchable(code)
    assert code.label == f"[{n},{k},{d}]"


def test_builtin_names_are_normalized():
    assert builtin_outer("code_15_9_3").name == "15_9_3"
    assert builtin_outer("[15,6,5]").name == "15_6_5"


def test_unknown_outer_code():
    with pytest.raises(CodeFormatError, match="unknown outer code"):
        resolve_outer("code_7_4_3")


def test_repetition_code():
    rep = repetition(5)
    assert (rep.n, rep.k) == (5, 1)
    assert min_distance_bruteforce(rep) == 5
    assert rep.check_matrix.supports() == [(0, 1), (1, 2), (2, 3), (3, 4)]


def test_even_repetition_distance_warns(caplog):
    with caplog.at_level(logging.WARNING):
        repetition(4)
    assert "Even repetition distance 4" in caplog.text


def test_not_matchable():
    h = BinaryMatrix([[1, 1, 0], [1, 0, 1], [1, 1, 1]])
    assert not is_matchable(h)


def test_bruteforce_limit():
    code = ClassicalCode("wide", BinaryMatrix.zeros(1, 22))
    assert code.k == 22
    with pytest.raises(InfeasibleError):
        min_distance_bruteforce(code)


def test_bruteforce_without_logicals():
    code = ClassicalCode("full", BinaryMatrix.identity(3))
    assert min_distance_bruteforce(code) is None


def test_free_columns_index_codeword_basis():
    code = builtin_outer("15_9_3")
    basis = code.codeword_basis.to_dense()
    assert basis[:, list(code.free_columns)].tolist() == np.eye(9, dtype=int).tolist()


@pytest.mark.parametrize("name", sorted(BUILTIN_OUTER_CODES))
@pytest.mark.parametrize("d_z", [3, 5, 7, 9, 11, 13, 15])
def test_combine(name, d_z):
    outer = builtin_outer(name)
    code = combine(outer, d_z)
    assert css_commutes(code)
    assert code.parameters == (outer.n * d_z, outer.k, outer.claimed_distance, d_z)
    assert code.h_x.shape == (outer.m, outer.n * d_z)
    assert code.h_z.shape == (outer.n * (d_z - 1), outer.n * d_z)
    pairing = (code.logical_x @ code.logical_z.T).to_dense()
    assert np.array_equal(pairing, np.eye(outer.k, dtype=np.uint8))


def test_combined_label_and_rate():
    code = combine(builtin_outer("15_9_3"), 3)
    assert code.label == "[[45,9,{3,3}]]"
    assert code.rate == pytest.approx(9 / 45)


def test_code_file_round_trip(tmp_path):
    code = builtin_outer("16_3_8")
    path = write_code(code, tmp_path / "outer.txt")
    loaded = read_code(path, claimed_distance=8)
    assert loaded.check_matrix == code.check_matrix
    assert loaded.name == "outer"
    assert resolve_outer(str(path)).k == 3


def test_malformed_code_file(tmp_path):
    path = tmp_path / "broken.txt"
    path.write_text("2 3\n101\n", encoding="utf-8")
    with pytest.raises(CodeFormatError) as excinfo:
        read_code(path)
    assert "broken.txt" in str(excinfo.value)
