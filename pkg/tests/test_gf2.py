from __future__ import annotations

import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qldgm import gf2
from qldgm.gf2 import BitMatrix, Qpcm, SymplecticVec


def _rank_oracle(m: np.ndarray) -> int:
    # Plain row reduction on Python ints, independent of the packed kernel.
    rows = [int("".join(map(str, r[::-1])), 2) if r.size else 0 for r in np.asarray(m, dtype=np.uint8)]
    rank = 0
    while rows:
        pivot = rows.pop()
        if pivot == 0:
            continue
        rank += 1
        low = pivot & -pivot
        rows = [r ^ pivot if r & low else r for r in rows]
    return rank


bit_matrices = st.integers(1, 12).flatmap(
    lambda r: st.integers(1, 80).flatmap(lambda c: arrays(np.uint8, (r, c), elements=st.integers(0, 1))))


@given(bit_matrices)
def test_pack_roundtrip(m):
    bm = BitMatrix.from_dense(m)
    assert bm.shape == m.shape
    assert np.array_equal(bm.to_dense(), m)
    assert bm == BitMatrix.from_dense(m.copy())


@given(bit_matrices)
def test_rank_matches_independent_elimination(m):
    assert gf2.rank(m) == _rank_oracle(m)
    assert gf2.sparse_rank(sp.csr_matrix(m)) == _rank_oracle(m)


@given(bit_matrices)
def test_nullspace_is_kernel_of_full_dimension(m):
    basis = gf2.nullspace_basis(m)
    assert basis.shape[0] == m.shape[1] - gf2.rank(m)
    assert not gf2.matmul(m, basis.T).any()
    if basis.shape[0]:
        assert gf2.rank(basis) == basis.shape[0]


@given(bit_matrices, st.data())
def test_solve_augmented(m, data):
    a = data.draw(arrays(np.uint8, m.shape[1], elements=st.integers(0, 1)))
    v = gf2.matmul(m, a[:, None])[:, 0]
    sol = gf2.solve_augmented(m, v)
    assert sol is not None
    assert np.array_equal(gf2.matmul(m, sol[:, None])[:, 0], v)


def test_solve_augmented_inconsistent():
    m = np.array([[1, 1], [1, 1]], dtype=np.uint8)
    assert gf2.solve_augmented(m, [1, 0]) is None


def test_sparse_rank_peels_and_finishes_dense():
    m = np.array([[1, 0, 0, 0], [1, 1, 0, 0], [0, 1, 1, 1], [0, 0, 1, 1], [1, 0, 1, 1]], dtype=np.uint8)
    assert gf2.sparse_rank(sp.csr_matrix(m)) == _rank_oracle(m) == 3


def test_pauli_mapping():
    v = gf2.pauli_to_symplectic("XYZ")
    assert v.x.tolist() == [1, 1, 0]
    assert v.z.tolist() == [0, 1, 1]
    assert str(v) == "XYZ"
    assert gf2.symplectic_to_pauli(SymplecticVec.from_bits([0, 1, 1, 1])) == "ZY"
    with pytest.raises(ValueError):
        gf2.pauli_to_symplectic("XQ")


def test_symplectic_vec_is_immutable():
    v = gf2.pauli_to_symplectic("XY")
    with pytest.raises(ValueError):
        v.x[0] = 0


paulis = st.integers(1, 10).flatmap(lambda n: st.tuples(*[st.text("IXYZ", min_size=n, max_size=n)] * 3))


@given(paulis)
def test_symplectic_product_properties(t):
    a, b, c = (gf2.pauli_to_symplectic(s) for s in t)
    assert gf2.symplectic_product(a, b) == gf2.symplectic_product(b, a)
    assert gf2.symplectic_product(a, a) == 0
    # Bilinear in the first argument.
    assert gf2.symplectic_product(a ^ b, c) == gf2.symplectic_product(a, c) ^ gf2.symplectic_product(b, c)
    assert gf2.star(gf2.star(a, b), b) == a


def _commute_by_counting(a: str, b: str) -> bool:
    anti = sum(1 for p, q in zip(a, b) if p != "I" and q != "I" and p != q)
    return anti % 2 == 0


@given(paulis)
def test_product_matches_pauli_commutation(t):
    a, b, _ = t
    assert (gf2.symplectic_product(a, b) == 0) == _commute_by_counting(a, b)


def test_three_qubit_star():
    assert str(gf2.star("XYZ", "YXI")) == "ZZZ"


def test_criterion_and_qpcm_validation():
    h = Qpcm.from_paulis(["XYZ", "YXI"])
    assert gf2.check_symplectic_criterion(h.hx, h.hz)
    assert h.n_logical == 1
    assert h.generators() == ["XYZ", "YXI"]
    with pytest.raises(ValueError):
        Qpcm.from_paulis(["XI", "ZI"])  # anticommute
    with pytest.raises(ValueError):
        Qpcm.from_paulis(["XX", "XX"])  # dependent
    assert gf2.check_symplectic_criterion(sp.csr_matrix(h.hx), sp.csr_matrix(h.hz))


def test_syndrome_of_three_qubit_errors():
    h = Qpcm.from_paulis(["XYZ", "YXI"])
    assert gf2.syndrome(h, "ZII").tolist() == [1, 1]
    assert gf2.syndrome(h, "XII").tolist() == [0, 1]
    assert gf2.syndrome(h, "ZZZ").tolist() == [0, 0]


@given(bit_matrices)
def test_alist_and_dense_roundtrip(m):
    buf = io.StringIO()
    gf2.write_alist(m, buf)
    buf.seek(0)
    assert np.array_equal(gf2.read_alist(buf), m)
    buf = io.StringIO()
    gf2.write_dense(m, buf)
    buf.seek(0)
    assert np.array_equal(gf2.read_dense(buf), m)


def test_fingerprint_is_content_based():
    a = Qpcm.from_paulis(["XYZ", "YXI"])
    b = Qpcm.from_paulis(["XYZ", "YXI"])
    c = Qpcm.from_paulis(["XYZ", "ZZZ"])
    assert a.fingerprint() == b.fingerprint() != c.fingerprint()
