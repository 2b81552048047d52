"""Binary linear algebra and the symplectic picture of Pauli operators.

Conventions used throughout the package:

* A Pauli string is written left to right; qubit 0 is the leftmost symbol
  and maps to bit position 0 of both halves of the symplectic vector.
* ``I -> (0|0)``, ``X -> (1|0)``, ``Z -> (0|1)``, ``Y -> (1|1)``.
* A stabilizer matrix is stored as the pair ``(hx, hz)``; the syndrome of an
  error ``e = (ex|ez)`` is ``ex @ hz.T + ez @ hx.T (mod 2)``.

Dense matrices are plain ``uint8`` arrays.  Elimination runs on rows packed
into 64-bit words through a small numba kernel.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from numba import njit

_PAULI_TO_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_BITS_TO_PAULI = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}

ArrayLike = Union[np.ndarray, Sequence[int]]


def as_bits(a, ndim: Optional[int] = None) -> np.ndarray:
    """Return ``a`` as a ``uint8`` array of zeros and ones."""
    if sp.issparse(a):
        a = a.toarray()
    arr = np.asarray(a)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    else:
        arr = (arr.astype(np.int64) & 1).astype(np.uint8)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d bit array, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Packed bit matrices
# ---------------------------------------------------------------------------

def _n_words(n_cols: int) -> int:
    return max(1, (n_cols + 63) // 64)


def pack_rows(dense: np.ndarray) -> np.ndarray:
    """Pack a 2-d 0/1 array into ``uint64`` words, column ``j`` at bit ``j % 64``."""
    dense = as_bits(dense, ndim=2)
    rows, cols = dense.shape
    nw = _n_words(cols)
    padded = np.zeros((rows, nw * 64), dtype=np.uint8)
    padded[:, :cols] = dense
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").reshape(rows, nw).astype(np.uint64)


def unpack_rows(words: np.ndarray, n_cols: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`."""
    words = np.ascontiguousarray(words, dtype="<u8")
    rows = words.shape[0]
    as_bytes = words.view(np.uint8).reshape(rows, -1)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return bits[:, :n_cols].astype(np.uint8)


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """Row-major bit matrix stored as packed 64-bit words."""

    words: np.ndarray
    n_rows: int
    n_cols: int

    @classmethod
    def from_dense(cls, dense) -> "BitMatrix":
        dense = as_bits(dense, ndim=2)
        return cls(pack_rows(dense), dense.shape[0], dense.shape[1])

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "BitMatrix":
        return cls(np.zeros((n_rows, _n_words(n_cols)), np.uint64), n_rows, n_cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_dense(self) -> np.ndarray:
        return unpack_rows(self.words, self.n_cols)

    def row(self, i: int) -> np.ndarray:
        return unpack_rows(self.words[i:i + 1], self.n_cols)[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.n_rows, self.n_cols, self.words.tobytes()))


@njit(cache=True)
def _popcount64(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _eliminate(words, n_cols, reduced):
    # In-place Gaussian elimination; pivots scan columns left to right and
    # take the first row at or below the current rank that has a one.
    n_rows, n_words = words.shape
    pivots = np.empty(min(n_rows, n_cols), np.int64)
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        wi = c >> 6
        bit = np.uint64(1) << np.uint64(c & 63)
        piv = -1
        for i in range(r, n_rows):
            if words[i, wi] & bit:
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for k in range(wi, n_words):
                tmp = words[piv, k]
                words[piv, k] = words[r, k]
                words[r, k] = tmp
        start = 0 if reduced else r + 1
        for i in range(start, n_rows):
            if i != r and (words[i, wi] & bit):
                for k in range(wi, n_words):
                    words[i, k] ^= words[r, k]
        pivots[r] = c
        r += 1
    return pivots[:r]


@dataclass(frozen=True)
class EchelonForm:
    """Reduced row echelon form together with its pivot columns."""

    matrix: np.ndarray
    pivots: tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.pivots)


def row_echelon(m) -> EchelonForm:
    """Reduced row echelon form over GF(2)."""
    dense = as_bits(m, ndim=2)
    words = pack_rows(dense)
    pivots = _eliminate(words, dense.shape[1], True)
    return EchelonForm(unpack_rows(words, dense.shape[1]), tuple(int(p) for p in pivots))


def rank(m) -> int:
    """Rank over GF(2)."""
    if isinstance(m, BitMatrix):
        words, n_cols = m.words.copy(), m.n_cols
    else:
        dense = as_bits(m, ndim=2)
        words, n_cols = pack_rows(dense), dense.shape[1]
    if words.shape[0] == 0 or n_cols == 0:
        return 0
    return int(len(_eliminate(words, n_cols, False)))


def nullspace_basis(m) -> np.ndarray:
    """Rows ``B`` spanning ``{v : m v = 0}``, one per free column in ascending order."""
    dense = as_bits(m, ndim=2)
    n_cols = dense.shape[1]
    if dense.shape[0] == 0:
        return np.eye(n_cols, dtype=np.uint8)
    ech = row_echelon(dense)
    piv = np.array(ech.pivots, dtype=np.int64)
    free = np.setdiff1d(np.arange(n_cols), piv)
    basis = np.zeros((free.size, n_cols), dtype=np.uint8)
    basis[np.arange(free.size), free] = 1
    if piv.size:
        basis[:, piv] = ech.matrix[: piv.size][:, free].T
    return basis


def solve_augmented(m, v) -> Optional[np.ndarray]:
    """Solve ``m a = v`` over GF(2); returns one solution or ``None``.

    Free variables are set to zero, so the solution is unique whenever ``m``
    has full column rank.
    """
    dense = as_bits(m, ndim=2)
    vec = as_bits(v, ndim=1)
    if vec.shape[0] != dense.shape[0]:
        raise ValueError(f"right-hand side has length {vec.shape[0]}, expected {dense.shape[0]}")
    aug = np.concatenate([dense, vec[:, None]], axis=1)
    ech = row_echelon(aug)
    n_cols = dense.shape[1]
    if ech.pivots and ech.pivots[-1] == n_cols:
        return None
    a = np.zeros(n_cols, dtype=np.uint8)
    for i, c in enumerate(ech.pivots):
        a[c] = ech.matrix[i, n_cols]
    return a


def matmul(a, b) -> np.ndarray:
    """Dense product over GF(2)."""
    a = as_bits(a)
    b = as_bits(b)
    return ((a.astype(np.int64) @ b.astype(np.int64)) & 1).astype(np.uint8)


def sparse_mod2(m) -> sp.csr_matrix:
    """Reduce an integer sparse matrix mod 2, dropping the even entries."""
    m = sp.csr_matrix(m, dtype=np.int64)
    m.data &= 1
    m.eliminate_zeros()
    return sp.csr_matrix(m, dtype=np.uint8)


def sparse_matmul(a, b) -> sp.csr_matrix:
    """Sparse product over GF(2)."""
    return sparse_mod2(sp.csr_matrix(a, dtype=np.int64) @ sp.csr_matrix(b, dtype=np.int64))


def sparse_rank(m) -> int:
    """Rank of a sparse binary matrix.

    Rows with a single surviving entry are peeled off first (each is a pivot
    and its column can be deleted everywhere); the dense remainder is then
    eliminated on packed words.
    """
    m = sparse_mod2(m).tocsr()
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        return 0
    row_sets = [set(m.indices[m.indptr[i]:m.indptr[i + 1]].tolist()) for i in range(n_rows)]
    col_rows: dict[int, set[int]] = {}
    for i, cols in enumerate(row_sets):
        for c in cols:
            col_rows.setdefault(c, set()).add(i)
    alive = [bool(s) for s in row_sets]
    stack = [i for i, s in enumerate(row_sets) if len(s) == 1]
    peeled = 0
    while stack:
        i = stack.pop()
        if not alive[i] or len(row_sets[i]) != 1:
            continue
        (c,) = tuple(row_sets[i])
        alive[i] = False
        peeled += 1
        for j in col_rows.pop(c, ()):
            if j == i:
                continue
            row_sets[j].discard(c)
            if alive[j]:
                if len(row_sets[j]) == 1:
                    stack.append(j)
                elif not row_sets[j]:
                    alive[j] = False
        row_sets[i].clear()
    rest = [i for i in range(n_rows) if alive[i] and row_sets[i]]
    if not rest:
        return peeled
    cols = sorted({c for i in rest for c in row_sets[i]})
    index = {c: k for k, c in enumerate(cols)}
    dense = np.zeros((len(rest), len(cols)), dtype=np.uint8)
    for r, i in enumerate(rest):
        dense[r, [index[c] for c in row_sets[i]]] = 1
    return peeled + rank(dense)


# ---------------------------------------------------------------------------
# Pauli operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SymplecticVec:
    """Symplectic image ``(x|z)`` of an effective ``n``-qubit Pauli operator."""

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = as_bits(self.x, ndim=1).copy()
        z = as_bits(self.z, ndim=1).copy()
        if x.shape != z.shape:
            raise ValueError(f"x and z parts differ in length: {x.size} vs {z.size}")
        x.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @classmethod
    def identity(cls, n: int) -> "SymplecticVec":
        return cls(np.zeros(n, np.uint8), np.zeros(n, np.uint8))

    @classmethod
    def from_bits(cls, bits) -> "SymplecticVec":
        bits = as_bits(bits, ndim=1)
        if bits.size % 2:
            raise ValueError("a symplectic vector has even length")
        n = bits.size // 2
        return cls(bits[:n], bits[n:])

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate([self.x, self.z])

    def weight(self) -> int:
        """Number of qubits acted on non-trivially."""
        return int(np.count_nonzero(self.x | self.z))

    def __xor__(self, other: "SymplecticVec") -> "SymplecticVec":
        return star(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymplecticVec):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z)

    def __hash__(self) -> int:
        return hash((self.x.tobytes(), self.z.tobytes()))

    def __str__(self) -> str:
        return symplectic_to_pauli(self)

    def __repr__(self) -> str:
        return f"SymplecticVec('{symplectic_to_pauli(self)}')"


def pauli_to_symplectic(p: str) -> SymplecticVec:
    """Map a Pauli string such as ``"XYZ"`` to its symplectic vector."""
    try:
        pairs = [_PAULI_TO_BITS[c] for c in p.strip().upper()]
    except KeyError as exc:
        raise ValueError(f"not a Pauli symbol: {exc.args[0]!r}") from None
    if not pairs:
        return SymplecticVec.identity(0)
    x, z = zip(*pairs)
    return SymplecticVec(np.array(x, np.uint8), np.array(z, np.uint8))


def symplectic_to_pauli(v: SymplecticVec) -> str:
    return "".join(_BITS_TO_PAULI[(int(a), int(b))] for a, b in zip(v.x, v.z))


def _as_symplectic(v) -> SymplecticVec:
    if isinstance(v, SymplecticVec):
        return v
    if isinstance(v, str):
        return pauli_to_symplectic(v)
    return SymplecticVec.from_bits(v)


def star(a, b) -> SymplecticVec:
    """Group product of effective Paulis: XOR of the symplectic vectors."""
    a, b = _as_symplectic(a), _as_symplectic(b)
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")
    return SymplecticVec(a.x ^ b.x, a.z ^ b.z)


def symplectic_product(a, b) -> int:
    """``a_x . b_z + a_z . b_x (mod 2)``; zero iff the operators commute."""
    a, b = _as_symplectic(a), _as_symplectic(b)
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")
    return int((np.count_nonzero(a.x & b.z) + np.count_nonzero(a.z & b.x)) & 1)


# ---------------------------------------------------------------------------
# Stabilizer matrices
# ---------------------------------------------------------------------------

def check_symplectic_criterion(hx, hz) -> bool:
    """True iff ``hx hz^T + hz hx^T = 0`` over GF(2).

    Accepts dense arrays, :class:`BitMatrix` or scipy sparse matrices.
    """
    if isinstance(hx, BitMatrix):
        hx = hx.to_dense()
    if isinstance(hz, BitMatrix):
        hz = hz.to_dense()
    if hx.shape != hz.shape:
        raise ValueError(f"shape mismatch: {hx.shape} vs {hz.shape}")
    if sp.issparse(hx) or sp.issparse(hz):
        a = sp.csr_matrix(hx, dtype=np.int64)
        b = sp.csr_matrix(hz, dtype=np.int64)
        prod = a @ b.T
        prod = prod + prod.T
        prod = sp.csr_matrix(prod)
        return not bool(np.any(prod.data & 1))
    a = as_bits(hx, ndim=2).astype(np.int64)
    b = as_bits(hz, ndim=2).astype(np.int64)
    prod = a @ b.T
    return not bool(np.any((prod + prod.T) & 1))


@dataclass(frozen=True, eq=False)
class Qpcm:
    """Quantum parity-check matrix ``(hx|hz)`` of a stabilizer code."""

    hx: np.ndarray
    hz: np.ndarray
    n_qubits: int
    n_logical: int

    def __post_init__(self):
        hx = as_bits(self.hx, ndim=2).copy()
        hz = as_bits(self.hz, ndim=2).copy()
        if hx.shape != hz.shape:
            raise ValueError(f"hx and hz shapes differ: {hx.shape} vs {hz.shape}")
        if hx.shape[1] != self.n_qubits:
            raise ValueError(f"matrix has {hx.shape[1]} columns, expected {self.n_qubits}")
        hx.flags.writeable = False
        hz.flags.writeable = False
        object.__setattr__(self, "hx", hx)
        object.__setattr__(self, "hz", hz)

    @classmethod
    def from_matrices(cls, hx, hz, validate: bool = True) -> "Qpcm":
        hx = as_bits(hx, ndim=2)
        hz = as_bits(hz, ndim=2)
        n = hx.shape[1]
        r = rank(np.concatenate([hx, hz], axis=1)) if hx.shape[0] else 0
        if validate:
            if not check_symplectic_criterion(hx, hz):
                raise ValueError("rows do not commute: symplectic criterion fails")
            if r != hx.shape[0]:
                raise ValueError(f"stabilizer rows are dependent: rank {r} < {hx.shape[0]} rows")
        return cls(hx, hz, n, n - r)

    @classmethod
    def from_paulis(cls, generators: Iterable[str], validate: bool = True) -> "Qpcm":
        vecs = [pauli_to_symplectic(g) for g in generators]
        hx = np.array([v.x for v in vecs], dtype=np.uint8)
        hz = np.array([v.z for v in vecs], dtype=np.uint8)
        return cls.from_matrices(hx, hz, validate=validate)

    @property
    def n_checks(self) -> int:
        return int(self.hx.shape[0])

    @property
    def rate(self) -> float:
        return self.n_logical / self.n_qubits

    @property
    def stacked(self) -> np.ndarray:
        """The ``(N-k) x 2N`` matrix ``[hx | hz]``."""
        return np.concatenate([self.hx, self.hz], axis=1)

    def generators(self) -> list[str]:
        return [symplectic_to_pauli(SymplecticVec(x, z)) for x, z in zip(self.hx, self.hz)]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.n_checks, self.n_qubits], dtype="<i8").tobytes())
        h.update(pack_rows(self.stacked).tobytes())
        return h.hexdigest()


def syndrome(h: Qpcm, e) -> np.ndarray:
    """Syndrome bits ``w_v = e . s_v`` (symplectic product with each generator)."""
    e = _as_symplectic(e)
    if e.n != h.n_qubits:
        raise ValueError(f"error acts on {e.n} qubits, code has {h.n_qubits}")
    w = h.hz.astype(np.int64) @ e.x.astype(np.int64) + h.hx.astype(np.int64) @ e.z.astype(np.int64)
    return (w & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# Text formats
# ---------------------------------------------------------------------------

def _open_text(dest):
    if isinstance(dest, (str, Path)):
        return open(dest, "w", encoding="ascii", newline="\n"), True
    return dest, False


def write_dense(m, dest) -> None:
    """One row per line, each entry a 0/1 character."""
    dense = as_bits(m, ndim=2)
    fh, close = _open_text(dest)
    try:
        for row in dense:
            fh.write("".join("1" if b else "0" for b in row) + "\n")
    finally:
        if close:
            fh.close()


def read_dense(src) -> np.ndarray:
    text = Path(src).read_text() if isinstance(src, (str, Path)) else src.read()
    rows = []
    for line in text.splitlines():
        line = "".join(line.split())
        if not line:
            continue
        if set(line) - {"0", "1"}:
            raise ValueError(f"dense matrix rows may only contain 0 and 1: {line!r}")
        rows.append([int(c) for c in line])
    if not rows:
        return np.zeros((0, 0), dtype=np.uint8)
    if len({len(r) for r in rows}) != 1:
        raise ValueError("dense matrix rows have different lengths")
    return np.array(rows, dtype=np.uint8)


def write_alist(m, dest) -> None:
    """Write a binary matrix in the sparse alist format (1-based, zero padded)."""
    csr = sparse_mod2(m) if sp.issparse(m) else sp.csr_matrix(as_bits(m, ndim=2))
    csr = sp.csr_matrix(csr)
    csr.sort_indices()
    csc = csr.tocsc()
    csc.sort_indices()
    n_rows, n_cols = csr.shape
    row_w = np.diff(csr.indptr)
    col_w = np.diff(csc.indptr)
    max_c = int(col_w.max()) if n_cols else 0
    max_r = int(row_w.max()) if n_rows else 0
    out = io.StringIO()
    out.write(f"{n_cols} {n_rows}\n{max_c} {max_r}\n")
    out.write(" ".join(map(str, col_w)) + "\n")
    out.write(" ".join(map(str, row_w)) + "\n")
    for j in range(n_cols):
        idx = (csc.indices[csc.indptr[j]:csc.indptr[j + 1]] + 1).tolist()
        out.write(" ".join(map(str, idx + [0] * (max_c - len(idx)))) + "\n")
    for i in range(n_rows):
        idx = (csr.indices[csr.indptr[i]:csr.indptr[i + 1]] + 1).tolist()
        out.write(" ".join(map(str, idx + [0] * (max_r - len(idx)))) + "\n")
    fh, close = _open_text(dest)
    try:
        fh.write(out.getvalue())
    finally:
        if close:
            fh.close()


def read_alist(src) -> np.ndarray:
    """Read an alist file into a dense ``uint8`` matrix."""
    text = Path(src).read_text() if isinstance(src, (str, Path)) else src.read()
    nums = [int(t) for t in text.split()]
    if len(nums) < 4:
        raise ValueError("alist header is truncated")
    n_cols, n_rows, max_c, max_r = nums[:4]
    pos = 4
    col_w = nums[pos:pos + n_cols]
    pos += n_cols
    row_w = nums[pos:pos + n_rows]
    pos += n_rows
    dense = np.zeros((n_rows, n_cols), dtype=np.uint8)
    for j in range(n_cols):
        entries = nums[pos:pos + max_c]
        pos += max_c
        for r in entries[:col_w[j]]:
            dense[r - 1, j] = 1
    # The row section is redundant; check it when it is present.
    if len(nums) >= pos + n_rows * max_r:
        for i in range(n_rows):
            entries = [c for c in nums[pos:pos + max_r][:row_w[i]]]
            pos += max_r
            if sorted(c - 1 for c in entries) != np.flatnonzero(dense[i]).tolist():
                raise ValueError(f"alist row {i} disagrees with the column section")
    return dense
