"""Construction of LDGM-based quantum stabilizer codes.

A code is described by a classical systematic LDGM code with generator
``G = (I P)`` and parity-check matrix ``H = (P^T I)``, plus an upper-layer
matrix ``Md`` whose columns are the intermediate nodes ``[d_x | d_z]``.
The stabilizer matrix is

    hz = Md[:, :n] @ H        hx = Md[:, n:] @ G        (mod 2)

so the syndrome is ``w = Md @ [H ex ; G ez]`` and the rows touching ``d_x``
see X-type flips through ``H``.  For a CSS code ``Md = diag(M1, M2)``; the
non-CSS variants add degree-2 rows bridging both halves.  Because
``H G^T = 0`` every such matrix satisfies the symplectic criterion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import gf2
from .gf2 import Qpcm

# Upper-layer row kinds.
ROW_A, ROW_B, ROW_C = 0, 1, 2
ROW_KIND_NAMES = {ROW_A: "s_A", ROW_B: "s_B", ROW_C: "s_C"}
# Row sides: which block of Md the row belongs to.
SIDE_X, SIDE_Z = 0, 1


class ConstructionError(ValueError):
    """Raised when a requested configuration cannot be realised."""


def _rows_to_csr(rows: Sequence[Sequence[int]], n_cols: int) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.fromiter((c for r in rows for c in sorted(r)), dtype=np.int64, count=int(indptr[-1]))
    data = np.ones(indices.size, dtype=np.uint8)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_cols))


class _UniformStream:
    # Buffered uniforms; avoids one generator call per edge.
    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.i = 0

    def below(self, k: int) -> int:
        if self.i == self.block:
            self.buf = self.rng.random(self.block)
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return min(int(u * k), k - 1)


def place_edges_greedy(row_degrees: Sequence[int], col_capacity: Sequence[int],
                       rng: np.random.Generator, avoid_4cycles: bool = False,
                       tries: int = 4) -> list[list[int]]:
    """Realise a bipartite degree sequence, one row at a time.

    Fallback for :func:`place_edges`.  Each row takes its columns from those with the largest remaining
    capacity, choosing uniformly at random among ties.  Taking the largest
    residual capacities first never dead-ends when the degree sequences are
    realisable, so no restarts are needed.  A column is removed from the
    candidate pool once chosen, which rules out repeated edges.  With
    ``avoid_4cycles`` a candidate that would close a length-4 cycle with an
    earlier row is rejected up to ``tries`` times before being accepted.
    """
    cap = np.asarray(col_capacity, dtype=np.int64).copy()
    row_degrees = [int(d) for d in row_degrees]
    if cap.min(initial=0) < 0:
        raise ConstructionError("negative column capacity")
    if sum(row_degrees) != int(cap.sum()):
        raise ConstructionError(
            f"row degrees sum to {sum(row_degrees)} but column capacities sum to {int(cap.sum())}")
    max_cap = int(cap.max(initial=0))
    buckets: list[list[int]] = [[] for _ in range(max_cap + 1)]
    for c in rng.permutation(cap.size):
        if cap[c] > 0:
            buckets[cap[c]].append(int(c))
    stream = _UniformStream(rng)
    pairs: set[tuple[int, int]] = set()
    out: list[list[int]] = []
    for r, d in enumerate(row_degrees):
        chosen: list[int] = []
        level = max_cap
        while len(chosen) < d:
            while level > 0 and not buckets[level]:
                level -= 1
            if level == 0:
                raise ConstructionError(f"row {r} needs {d} distinct columns; only {len(chosen)} left")
            b = buckets[level]
            k = stream.below(len(b))
            if avoid_4cycles and chosen:
                for _ in range(tries - 1):
                    c = b[k]
                    if not any((min(c, o), max(c, o)) in pairs for o in chosen):
                        break
                    k = stream.below(len(b))
            c = b[k]
            b[k] = b[-1]
            b.pop()
            chosen.append(c)
        for c in chosen:
            cap[c] -= 1
            if cap[c] > 0:
                buckets[cap[c]].append(c)
        if avoid_4cycles:
            for i, a in enumerate(chosen):
                for o in chosen[i + 1:]:
                    pairs.add((min(a, o), max(a, o)))
        out.append(sorted(chosen))
    return out


def _pairs(row: Sequence[int]):
    for i, a in enumerate(row):
        for b in row[i + 1:]:
            yield (a, b) if a < b else (b, a)


def place_edges(row_degrees: Sequence[int], col_capacity: Sequence[int],
                rng: np.random.Generator, avoid_4cycles: bool = False,
                max_sweeps: int = 50, must_touch: Optional[np.ndarray] = None) -> list[list[int]]:
    """Random bipartite graph with the given row degrees and column capacities.

    Column stubs are shuffled and dealt to rows in order (a configuration
    model).  Rows that received a column twice are repaired by swapping the
    repeated stub with a random stub of another row.  With ``avoid_4cycles``
    a second, best-effort pass swaps stubs to reduce the number of column
    pairs shared by two rows.  If the repair does not finish within
    ``max_sweeps`` sweeps the deterministic greedy construction is used.

    ``must_touch`` is a boolean column mask; when given, every row is made
    to contain at least one marked column (again by stub swaps).
    """
    degrees = np.asarray([int(d) for d in row_degrees], dtype=np.int64)
    cap = np.asarray(col_capacity, dtype=np.int64)
    if cap.min(initial=0) < 0:
        raise ConstructionError("negative column capacity")
    if int(degrees.sum()) != int(cap.sum()):
        raise ConstructionError(
            f"row degrees sum to {int(degrees.sum())} but column capacities sum to {int(cap.sum())}")
    n_nonzero = int(np.count_nonzero(cap))
    if degrees.size and int(degrees.max()) > n_nonzero:
        raise ConstructionError(f"a row of degree {int(degrees.max())} needs more than {n_nonzero} columns")
    stubs = np.repeat(np.arange(cap.size), cap)
    rng.shuffle(stubs)
    bounds = np.concatenate([[0], np.cumsum(degrees)])
    rows = [stubs[bounds[i]:bounds[i + 1]].tolist() for i in range(degrees.size)]
    total = len(stubs)
    stream = _UniformStream(rng)

    def random_slot():
        pos = stream.below(total)
        r = int(np.searchsorted(bounds, pos, side="right")) - 1
        return r, pos - bounds[r]

    for _ in range(max_sweeps):
        bad = [i for i, r in enumerate(rows) if len(set(r)) < len(r)]
        if not bad:
            break
        for i in bad:
            row = rows[i]
            seen: set[int] = set()
            for k, c in enumerate(row):
                if c not in seen:
                    seen.add(c)
                    continue
                for _try in range(20):
                    j, kk = random_slot()
                    if j == i:
                        continue
                    other = rows[j]
                    c2 = other[kk]
                    if c2 in row or c in other:
                        continue
                    row[k], other[kk] = c2, c
                    seen.add(c2)
                    break
    else:
        return place_edges_greedy(row_degrees, col_capacity, rng, avoid_4cycles=avoid_4cycles)
    if any(len(set(r)) < len(r) for r in rows):
        return place_edges_greedy(row_degrees, col_capacity, rng, avoid_4cycles=avoid_4cycles)
    if must_touch is not None:
        _ensure_touch(rows, np.asarray(must_touch, dtype=bool), random_slot, max_sweeps)
    if avoid_4cycles:
        _reduce_4cycles(rows, random_slot, max_sweeps, must_touch)
    return [sorted(r) for r in rows]


def _ensure_touch(rows: list[list[int]], mask: np.ndarray, random_slot, sweeps: int) -> None:
    def hits(row) -> int:
        return sum(1 for c in row if mask[c])

    for _ in range(sweeps):
        bad = [i for i, r in enumerate(rows) if r and not hits(r)]
        if not bad:
            return
        for i in bad:
            row = rows[i]
            for _try in range(50):
                j, kk = random_slot()
                other = rows[j]
                c2 = other[kk]
                if j == i or not mask[c2] or hits(other) < 2 or c2 in row or row[0] in other:
                    continue
                row[0], other[kk] = c2, row[0]
                break


def _reduce_4cycles(rows: list[list[int]], random_slot, sweeps: int, mask=None, tries: int = 10,
                    min_gain: float = 0.1) -> None:
    # Best effort: a swap is kept only if it lowers the total number of
    # repeated column pairs.  Dense rows make many 4-cycles unavoidable, so
    # the search stops once a sweep removes less than ``min_gain`` of them.
    width = 1 + max((c for r in rows for c in r), default=0)
    count: dict[int, int] = {}

    def key(a: int, b: int) -> int:
        return a * width + b if a < b else b * width + a

    for r in rows:
        for i, a in enumerate(r):
            for b in r[i + 1:]:
                kk = key(a, b)
                count[kk] = count.get(kk, 0) + 1

    def excess(row) -> bool:
        return any(count[key(a, b)] > 1 for i, a in enumerate(row) for b in row[i + 1:])

    def worst(row) -> int:
        scores = [sum(count[key(c, o)] > 1 for o in row if o != c) for c in row]
        return scores.index(max(scores))

    def swap_delta(row, c, c2, other) -> int:
        # Change in repeated pairs if c (in row) and c2 (in other) trade places.
        change: dict[int, int] = {}
        for o in row:
            if o != c:
                k1, k2 = key(c, o), key(c2, o)
                change[k1] = change.get(k1, 0) - 1
                change[k2] = change.get(k2, 0) + 1
        for o in other:
            if o != c2:
                k1, k2 = key(c2, o), key(c, o)
                change[k1] = change.get(k1, 0) - 1
                change[k2] = change.get(k2, 0) + 1
        delta = 0
        for kk, dv in change.items():
            if dv:
                v = count.get(kk, 0)
                delta += max(v + dv - 1, 0) - max(v - 1, 0)
        return delta

    def apply(row, k, c2, other, kk) -> None:
        c = row[k]
        for r, old, new in ((row, c, c2), (other, c2, c)):
            for o in r:
                if o != old:
                    count[key(old, o)] -= 1
                    k2 = key(new, o)
                    count[k2] = count.get(k2, 0) + 1
        row[k], other[kk] = c2, c

    def repeats() -> int:
        return sum(v - 1 for v in count.values() if v > 1)

    prev = repeats()
    for _ in range(sweeps):
        if not prev:
            return
        for i in [i for i, r in enumerate(rows) if excess(r)]:
            row = rows[i]
            k = None
            for _try in range(tries):
                j, kk = random_slot()
                if j == i:
                    continue
                if k is None:
                    if not excess(row):
                        break
                    k = worst(row)
                other = rows[j]
                c, c2 = row[k], other[kk]
                if c2 in row or c in other:
                    continue
                if mask is not None and mask[c] != mask[c2]:
                    continue
                if swap_delta(row, c, c2, other) < 0:
                    apply(row, k, c2, other, kk)
                    k = None
        cur = repeats()
        if prev - cur < max(1.0, min_gain * prev):
            return
        prev = cur


def _spread(total: int, n: int) -> np.ndarray:
    # ``n`` integers as equal as possible summing to ``total``.
    base, extra = divmod(total, n)
    caps = np.full(n, base, dtype=np.int64)
    caps[:extra] += 1
    return caps


# ---------------------------------------------------------------------------
# Classical LDGM layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LdgmCode:
    """Systematic rate-1/2 LDGM code defined by a square sparse ``P``."""

    p_matrix: sp.csr_matrix
    description: str = ""

    @property
    def n(self) -> int:
        return int(self.p_matrix.shape[0])

    @cached_property
    def generator(self) -> sp.csr_matrix:
        """``(I P)``."""
        return sp.hstack([sp.identity(self.n, dtype=np.uint8, format="csr"), self.p_matrix], format="csr")

    @cached_property
    def pcm(self) -> sp.csr_matrix:
        """``(P^T I)``."""
        return sp.hstack([self.p_matrix.T.tocsr(), sp.identity(self.n, dtype=np.uint8, format="csr")],
                         format="csr")

    def check_orthogonal(self) -> bool:
        prod = gf2.sparse_matmul(self.generator, self.pcm.T)
        return prod.nnz == 0


def build_regular_p(n: int, degree: int, rng: np.random.Generator) -> sp.csr_matrix:
    """``n x n`` matrix with every row and column of weight ``degree``."""
    if not 1 <= degree <= n:
        raise ConstructionError(f"degree {degree} is infeasible for n = {n}")
    rows = place_edges([degree] * n, [degree] * n, rng)
    return _rows_to_csr(rows, n)


def build_parallel_p(n: int, d1: tuple[int, int], d2: tuple[int, int],
                     rng: np.random.Generator) -> LdgmCode:
    """Parallel concatenation of two regular LDGM codes sharing the systematic part.

    The generator is ``[I P1 P2]``.  ``P2`` has row weight ``y2`` and column
    weight ``z2``, so it occupies ``n y2 / z2`` columns; ``P1`` has row weight
    ``y1`` over the remaining columns, keeping ``P = [P1 P2]`` square and the
    classical rate at one half.  Column weights of ``P1`` equal ``y1`` only
    approximately (they are spread as evenly as possible).
    """
    y1, z1 = d1
    y2, z2 = d2
    if y1 != z1:
        raise ConstructionError("the first constituent must be regular: d1 = (y1, y1)")
    if min(y1, y2, z2) < 1:
        raise ConstructionError("degrees must be positive")
    n2 = int(round(n * y2 / z2))
    n1 = n - n2
    if n2 < y2 or n1 < y1:
        raise ConstructionError(f"degrees {d1}, {d2} do not fit in {n} columns")
    p1 = place_edges([y1] * n, _spread(n * y1, n1), rng)
    p2 = place_edges([y2] * n, _spread(n * y2, n2), rng)
    rows = [a + [n1 + c for c in b] for a, b in zip(p1, p2)]
    return LdgmCode(_rows_to_csr(rows, n), f"P[({y1},{y1});({y2},{z2})]")


def build_ldgm(n: int, degrees, rng: np.random.Generator) -> LdgmCode:
    """``degrees`` is an int for a regular ``P`` or ``[[y1, y1], [y2, z2]]``."""
    if isinstance(degrees, (int, np.integer)):
        return LdgmCode(build_regular_p(n, int(degrees), rng), f"P({degrees},{degrees})")
    d = [tuple(int(v) for v in pair) for pair in degrees]
    if len(d) == 1:
        if d[0][0] != d[0][1]:
            raise ConstructionError("a single regular P needs equal row and column degree")
        return LdgmCode(build_regular_p(n, d[0][0], rng), f"P({d[0][0]},{d[0][0]})")
    if len(d) != 2:
        raise ConstructionError("degrees must be an integer or a pair of degree pairs")
    return build_parallel_p(n, d[0], d[1], rng)


# ---------------------------------------------------------------------------
# Doped upper-layer matrices
# ---------------------------------------------------------------------------

def solve_doping(m: int, n: int, y: int, t: int) -> float:
    """Degree ``x`` of the non-unit rows so every column has weight ``y``.

    ``(m - t) x + t = y n``.
    """
    if t < 0 or t >= m:
        raise ConstructionError(f"need 0 <= t < m, got t = {t}, m = {m}")
    return (y * n - t) / (m - t)


def doping_row_degrees(m: int, n: int, y: int, t: int) -> list[int]:
    """Integer degrees of the ``m - t`` non-unit rows realising ``x``.

    The number of rows at ``ceil(x)`` is ``(y n - t) - floor(x) (m - t)``, which
    is the fraction ``frac(x)`` of those rows computed without rounding error.
    """
    edges = y * n - t
    lo, n_high = divmod(edges, m - t)
    return [lo + 1] * n_high + [lo] * (m - t - n_high)


@dataclass(frozen=True, eq=False)
class DopedMatrix:
    """``m x n`` matrix with ``t`` unit rows and column weight ``y``."""

    matrix: sp.csr_matrix
    m: int
    n: int
    y: int
    t: int
    x: float
    row_kind: np.ndarray  # ROW_A or ROW_B per row

    @property
    def unit_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_kind == ROW_A)

    def unit_column(self, row: int) -> int:
        return int(self.matrix.indices[self.matrix.indptr[row]])


def build_doped_m(m: int, n: int, y: int, t: int, rng: np.random.Generator) -> DopedMatrix:
    """Draw a doped matrix ``(y; 1, x)`` with ``t`` degree-1 rows.

    Unit rows sit on distinct columns (spread evenly when ``t > n``); the
    other rows get the integer degrees of :func:`doping_row_degrees`.
    Finally the row order is shuffled.
    """
    if m <= 0 or n <= 0 or y <= 0:
        raise ConstructionError("m, n and y must be positive")
    if t < 0 or t > m:
        raise ConstructionError(f"need 0 <= t <= m, got t = {t}, m = {m}")
    if t > y * n:
        raise ConstructionError(f"t = {t} unit rows exceed the {y * n} available edges")
    if t == m:
        if y * n != m:
            raise ConstructionError("t = m requires m = y n")
        x = 0.0
        degrees: list[int] = []
    else:
        x = solve_doping(m, n, y, t)
        degrees = doping_row_degrees(m, n, y, t)
        if degrees[-1] < 2:
            raise ConstructionError(f"x = {x:.3f} < 2 would create extra degree-1 rows")
        if degrees[0] > n:
            raise ConstructionError(f"x = {x:.3f} exceeds the {n} available columns")
    # Unit-row columns: a random permutation, wrapped when t > n.
    perm = rng.permutation(n)
    unit_cols = [int(perm[i % n]) for i in range(t)]
    used = np.bincount(np.array(unit_cols, dtype=np.int64), minlength=n) if t else np.zeros(n, np.int64)
    if used.max(initial=0) > y:
        raise ConstructionError("too many unit rows per column for degree y")
    # Non-unit rows must reach a column without a unit row; otherwise they
    # are sums of unit rows and the matrix loses rank.
    free = used == 0
    b_rows = place_edges(degrees, y - used, rng, avoid_4cycles=True,
                         must_touch=free if free.any() else None) if degrees else []
    rows = [[c] for c in unit_cols] + b_rows
    kind = np.array([ROW_A] * t + [ROW_B] * len(b_rows), dtype=np.int8)
    order = rng.permutation(m)
    rows = [rows[i] for i in order]
    kind = kind[order]
    return DopedMatrix(_rows_to_csr(rows, n), m, n, y, t, x, kind)


# ---------------------------------------------------------------------------
# Quantum codes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QldgmCode:
    """Stabilizer code ``Md . diag(H, G)`` built on an LDGM code."""

    ldgm: LdgmCode
    upper: sp.csr_matrix          # Md, rows x N, columns [d_x | d_z]
    row_kind: np.ndarray          # ROW_A / ROW_B / ROW_C
    row_side: np.ndarray          # SIDE_X / SIDE_Z (side of the row's original block)

    @property
    def n_qubits(self) -> int:
        return 2 * self.ldgm.n

    @property
    def n_checks(self) -> int:
        return int(self.upper.shape[0])

    @property
    def rate(self) -> float:
        """``(N - rows) / N``; exact because construction enforces full rank."""
        return (self.n_qubits - self.n_checks) / self.n_qubits

    @property
    def is_css(self) -> bool:
        return not bool(np.any(self.row_kind == ROW_C))

    @cached_property
    def hz_sparse(self) -> sp.csr_matrix:
        n = self.ldgm.n
        return gf2.sparse_matmul(self.upper[:, :n], self.ldgm.pcm)

    @cached_property
    def hx_sparse(self) -> sp.csr_matrix:
        n = self.ldgm.n
        return gf2.sparse_matmul(self.upper[:, n:], self.ldgm.generator)

    @cached_property
    def syndrome_matrix(self) -> sp.csr_matrix:
        """``[hz | hx]``: ``w = S @ [ex | ez] (mod 2)``."""
        return sp.hstack([self.hz_sparse, self.hx_sparse], format="csr")

    @cached_property
    def qpcm(self) -> Qpcm:
        hx = self.hx_sparse.toarray()
        hz = self.hz_sparse.toarray()
        return Qpcm(hx, hz, self.n_qubits, self.n_qubits - self.n_checks)

    def satisfies_criterion(self) -> bool:
        return gf2.check_symplectic_criterion(self.hx_sparse, self.hz_sparse)

    def upper_rank(self) -> int:
        return gf2.sparse_rank(self.upper)

    def is_full_rank(self) -> bool:
        # diag(H, G) has full row rank, so rank(QPCM) = rank(Md).
        return self.upper_rank() == self.n_checks

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for mat in (self.ldgm.p_matrix, self.upper):
            mat = sp.csr_matrix(mat)
            mat.sort_indices()
            h.update(np.array(mat.shape, dtype="<i8").tobytes())
            h.update(mat.indptr.astype("<i8").tobytes())
            h.update(mat.indices.astype("<i8").tobytes())
        return h.hexdigest()

    def degree_histograms(self) -> dict[str, dict[int, int]]:
        def hist(values) -> dict[int, int]:
            vals, counts = np.unique(np.asarray(values), return_counts=True)
            return {int(v): int(c) for v, c in zip(vals, counts)}

        up = self.upper
        return {
            "p_rows": hist(np.diff(self.ldgm.p_matrix.indptr)),
            "p_cols": hist(np.diff(self.ldgm.p_matrix.tocsc().indptr)),
            "syndrome_nodes": hist(np.diff(up.indptr)),
            "d_nodes": hist(np.diff(up.tocsc().indptr)),
            "qpcm_rows": hist(np.diff(self.syndrome_matrix.indptr)),
        }


@dataclass(frozen=True, eq=False)
class CssCode(QldgmCode):
    m1: Optional[DopedMatrix] = None
    m2: Optional[DopedMatrix] = None


@dataclass(frozen=True, eq=False)
class NonCssCode(QldgmCode):
    base: Optional[CssCode] = None
    q: int = 0
    method: int = 1
    cross_edges: tuple = field(default_factory=tuple)  # (row, origin column, target column)

    @property
    def rate_increase(self) -> dict[str, float]:
        """Rate gain of method 2 over its base, two normalisations."""
        n = self.n_qubits
        m_total = self.base.n_checks if self.base is not None else self.n_checks
        gain = self.q if self.method == 2 else 0
        return {"per_block_length": gain / n, "per_base_logical": gain / (n - m_total)}


def _validate(code: QldgmCode, check_rank: bool) -> None:
    if not code.satisfies_criterion():
        raise ConstructionError("symplectic criterion fails: construction bug")
    if check_rank and not code.is_full_rank():
        raise ConstructionError("stabilizer matrix is rank deficient")


def assemble_css(ldgm: LdgmCode, m1: DopedMatrix, m2: DopedMatrix, check_rank: bool = True) -> CssCode:
    """CSS code with ``hz = [M1 H ; 0]`` and ``hx = [0 ; M2 G]``."""
    n = ldgm.n
    if m1.n != n or m2.n != n:
        raise ConstructionError(f"M matrices need {n} columns, got {m1.n} and {m2.n}")
    upper = sp.block_diag([m1.matrix, m2.matrix], format="csr", dtype=np.uint8)
    kind = np.concatenate([m1.row_kind, m2.row_kind]).astype(np.int8)
    side = np.concatenate([np.full(m1.m, SIDE_X), np.full(m2.m, SIDE_Z)]).astype(np.int8)
    code = CssCode(ldgm, upper, kind, side, m1, m2)
    _validate(code, check_rank)
    return code


def assemble_asymmetric_css(ldgm: LdgmCode, cfg1: tuple[int, int, int], cfg2: tuple[int, int, int],
                            rng: np.random.Generator, check_rank: bool = True) -> CssCode:
    """CSS code with independently doped ``M1 = (m1, t1, y1)`` and ``M2 = (m2, t2, y2)``."""
    m1 = build_doped_m(cfg1[0], ldgm.n, cfg1[2], cfg1[1], rng)
    m2 = build_doped_m(cfg2[0], ldgm.n, cfg2[2], cfg2[1], rng)
    return assemble_css(ldgm, m1, m2, check_rank=check_rank)


def assemble_noncss(base: CssCode, q: int, method: int, rng: np.random.Generator,
                    check_rank: bool = True) -> NonCssCode:
    """Turn ``q`` unit rows into rows bridging the two halves of ``Md``.

    Half of the converted rows come from each side.  Each gains an edge to a
    ``d`` node of the opposite side that already hangs from a unit row and
    has no bridging edge yet.  Method 2 then deletes the unit rows attached
    to those target nodes; for that to be possible a target's own unit row
    must not itself be one of the converted rows.
    """
    if q < 0 or q % 2:
        raise ConstructionError(f"q must be a non-negative even integer, got {q}")
    if method not in (1, 2):
        raise ConstructionError(f"method must be 1 or 2, got {method}")
    n = base.ldgm.n
    rows = [base.upper.indices[base.upper.indptr[i]:base.upper.indptr[i + 1]].tolist()
            for i in range(base.n_checks)]
    kind = base.row_kind.copy()
    side = base.row_side.copy()
    if q == 0:
        code = NonCssCode(base.ldgm, base.upper.copy(), kind, side, base=base, q=0, method=method)
        return code
    half = q // 2
    unit = {s: [i for i in range(len(rows)) if kind[i] == ROW_A and side[i] == s] for s in (SIDE_X, SIDE_Z)}
    for s in (SIDE_X, SIDE_Z):
        if half > len(unit[s]):
            raise ConstructionError(f"q = {q} needs {half} unit rows per side, side {s} has {len(unit[s])}")
    origins = {s: sorted(rng.choice(unit[s], size=half, replace=False).tolist()) for s in (SIDE_X, SIDE_Z)}
    origin_set = set(origins[SIDE_X]) | set(origins[SIDE_Z])
    cross = []
    removed: list[int] = []
    taken: set[int] = set()
    for s in (SIDE_X, SIDE_Z):
        other = SIDE_Z if s == SIDE_X else SIDE_X
        # Candidate targets: unit rows on the other side (their d node is a d_A node).
        cands = [i for i in unit[other] if i not in taken]
        if method == 2:
            cands = [i for i in cands if i not in origin_set]
        if len(cands) < half:
            raise ConstructionError(f"q = {q} is too large: only {len(cands)} target nodes available")
        targets = rng.choice(cands, size=half, replace=False).tolist()
        for o, tr in zip(origins[s], targets):
            taken.add(tr)
            tcol = rows[tr][0]
            ocol = rows[o][0]
            rows[o] = sorted(rows[o] + [tcol])
            kind[o] = ROW_C
            cross.append((o, ocol, tcol))
            removed.append(tr)
    if method == 2:
        keep = np.setdiff1d(np.arange(len(rows)), np.array(removed))
        remap = {int(old): new for new, old in enumerate(keep)}
        rows = [rows[i] for i in keep]
        kind = kind[keep]
        side = side[keep]
        cross = [(remap[o], oc, tc) for o, oc, tc in cross]
    upper = _rows_to_csr(rows, 2 * n)
    code = NonCssCode(base.ldgm, upper, kind.astype(np.int8), side.astype(np.int8),
                      base=base, q=q, method=method, cross_edges=tuple(cross))
    _validate(code, check_rank)
    return code


# ---------------------------------------------------------------------------
# Small and explicit codes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExplicitCode:
    """A stabilizer code given directly by its matrix (no layered structure)."""

    qpcm: Qpcm
    name: str = ""

    @property
    def n_qubits(self) -> int:
        return self.qpcm.n_qubits

    @property
    def n_checks(self) -> int:
        return self.qpcm.n_checks

    @property
    def rate(self) -> float:
        return self.qpcm.rate

    @property
    def is_css(self) -> bool:
        return not bool(np.any((self.qpcm.hx.any(axis=1)) & (self.qpcm.hz.any(axis=1))))

    @cached_property
    def syndrome_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(np.concatenate([self.qpcm.hz, self.qpcm.hx], axis=1))

    def satisfies_criterion(self) -> bool:
        return gf2.check_symplectic_criterion(self.qpcm.hx, self.qpcm.hz)

    def fingerprint(self) -> str:
        return self.qpcm.fingerprint()

    def degree_histograms(self) -> dict[str, dict[int, int]]:
        w = self.syndrome_matrix
        vals, counts = np.unique(np.diff(w.indptr), return_counts=True)
        return {"qpcm_rows": {int(v): int(c) for v, c in zip(vals, counts)}}


def three_qubit_code() -> ExplicitCode:
    """The 3-qubit code with generators ``XYZ`` and ``YXI``."""
    return ExplicitCode(Qpcm.from_paulis(["XYZ", "YXI"]), "three-qubit")


def random_stabilizer_code(n: int, n_checks: int, rng: np.random.Generator) -> Qpcm:
    """Random stabilizer code: a random symplectic isotropic set of independent rows.

    Rows are drawn one at a time from the symplectic complement of the rows
    chosen so far, rejecting draws that are dependent on them.
    """
    if not 0 <= n_checks <= n:
        raise ValueError("need 0 <= n_checks <= n")
    rows = np.zeros((0, 2 * n), dtype=np.uint8)
    while rows.shape[0] < n_checks:
        # v commutes with every row r iff v . swap(r) = 0.
        swapped = np.concatenate([rows[:, n:], rows[:, :n]], axis=1)
        basis = gf2.nullspace_basis(swapped) if rows.shape[0] else np.eye(2 * n, dtype=np.uint8)
        coeffs = rng.integers(0, 2, size=basis.shape[0], dtype=np.uint8)
        v = gf2.matmul(coeffs[None, :], basis)[0]
        if not v.any():
            continue
        cand = np.concatenate([rows, v[None, :]], axis=0)
        if gf2.rank(cand) == cand.shape[0]:
            rows = cand
    return Qpcm.from_matrices(rows[:, :n], rows[:, n:])


# ---------------------------------------------------------------------------
# Configuration-driven construction
# ---------------------------------------------------------------------------

# Reference configurations used for the degeneracy study: (N, P degree, m, t, y).
DEGENERACY_STUDY_CODES = {
    (100, 0.1): (100, 3, 45, 24, 3),
    (100, 0.2): (100, 3, 40, 18, 3),
    (100, 0.25): (100, 3, 38, 15, 3),
    (100, 0.5): (100, 3, 25, 6, 3),
    (500, 0.1): (500, 5, 225, 170, 3),
    (500, 0.2): (500, 5, 200, 144, 3),
    (500, 0.25): (500, 5, 188, 130, 3),
    (500, 0.33): (500, 5, 163, 102, 3),
    (500, 0.5): (500, 5, 125, 60, 3),
    (2000, 0.1): (2000, 9, 900, 691, 3),
    (2000, 0.2): (2000, 9, 800, 581, 3),
    (2000, 0.25): (2000, 9, 750, 526, 3),
    (2000, 0.33): (2000, 9, 670, 438, 3),
    (2000, 0.5): (2000, 9, 500, 251, 3),
}


def degeneracy_study_spec(n: int, rate: float) -> dict:
    n_q, deg, m, t, y = DEGENERACY_STUDY_CODES[(n, rate)]
    return {"type": "css", "N": n_q, "ldgm": deg, "m": m, "t": t, "y": y}


MAX_REDRAWS = 10


def _attempt_rng(seed: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(attempt)]))


def validate_code_spec(spec: dict) -> None:
    """Reject malformed code specs before any construction work starts."""
    kind = spec.get("type")
    if kind not in ("css", "noncss", "asymmetric", "three_qubit", "explicit"):
        raise ConfigError("code.type", "must be css, noncss, asymmetric, three_qubit or explicit")
    if kind == "three_qubit":
        return
    if kind == "explicit":
        if "generators" not in spec:
            raise ConfigError("code.generators", "required for an explicit code")
        return
    n = spec.get("N")
    if not isinstance(n, int) or n < 4 or n % 2:
        raise ConfigError("code.N", f"must be an even integer >= 4, got {n!r}")
    if "ldgm" not in spec:
        raise ConfigError("code.ldgm", "required (an integer degree or [[y1, y1], [y2, z2]])")
    if kind in ("css", "noncss"):
        for key in ("m", "t", "y"):
            if not isinstance(spec.get(key), int):
                raise ConfigError(f"code.{key}", f"must be an integer, got {spec.get(key)!r}")
    if kind == "noncss":
        q = spec.get("q")
        if not isinstance(q, int) or q < 0 or q % 2:
            raise ConfigError("code.q", f"must be a non-negative even integer, got {q!r}")
        if spec.get("method") not in (1, 2):
            raise ConfigError("code.method", f"must be 1 or 2, got {spec.get('method')!r}")
    if kind == "asymmetric":
        for key in ("x_side", "z_side"):
            side = spec.get(key)
            if not (isinstance(side, dict) and all(isinstance(side.get(k), int) for k in ("m", "t", "y"))):
                raise ConfigError(f"code.{key}", "must be {m, t, y} with integer values")


class ConfigError(ValueError):
    """A configuration value failed validation; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def build_code(spec: dict, seed: int, check_rank: bool = True):
    """Build a code from a config dict, redrawing on rank deficiency.

    Attempt ``a`` draws from the stream seeded by ``(seed, a)``; at most
    ``MAX_REDRAWS`` attempts are made.
    """
    validate_code_spec(spec)
    kind = spec["type"]
    if kind == "three_qubit":
        return three_qubit_code()
    if kind == "explicit":
        return ExplicitCode(Qpcm.from_paulis(spec["generators"]), spec.get("name", "explicit"))
    n = spec["N"] // 2
    last_error: Optional[Exception] = None
    for attempt in range(MAX_REDRAWS):
        rng = _attempt_rng(seed, attempt)
        try:
            ldgm = build_ldgm(n, spec["ldgm"], rng)
            if kind == "asymmetric":
                a, b = spec["x_side"], spec["z_side"]
                return assemble_asymmetric_css(ldgm, (a["m"], a["t"], a["y"]), (b["m"], b["t"], b["y"]),
                                               rng, check_rank=check_rank)
            m1 = build_doped_m(spec["m"], n, spec["y"], spec["t"], rng)
            m2 = build_doped_m(spec["m"], n, spec["y"], spec["t"], rng)
            base = assemble_css(ldgm, m1, m2, check_rank=check_rank)
            if kind == "css":
                return base
            return assemble_noncss(base, spec["q"], spec["method"], rng, check_rank=check_rank)
        except ConstructionError as exc:
            if "rank deficient" not in str(exc):
                raise
            last_error = exc
    raise ConstructionError(f"no full-rank draw in {MAX_REDRAWS} attempts: {last_error}")
