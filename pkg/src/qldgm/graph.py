"""Factor graphs for syndrome decoding.

Variables are numbered with the error bits first (local indices
``0 .. n_err - 1``) followed by hidden middle-layer nodes.  Checks are
either syndrome nodes, whose parity must match a syndrome bit, or
definition nodes tying a hidden ``d`` node to the error bits it sums
(parity zero).  Syndrome checks come first so the serial schedule sweeps
top-down.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import codes as _codes

# Variable kinds.
VAR_EX, VAR_EZ, VAR_DX, VAR_DZ = 0, 1, 2, 3
VAR_KIND_NAMES = {VAR_EX: "e_x", VAR_EZ: "e_z", VAR_DX: "d_x", VAR_DZ: "d_z"}
# Check kinds; the first three match the upper-layer row kinds.
CHK_SA, CHK_SB, CHK_SC, CHK_DEF, CHK_FLAT = 0, 1, 2, 3, 4
CHK_KIND_NAMES = {CHK_SA: "s_A", CHK_SB: "s_B", CHK_SC: "s_C", CHK_DEF: "c", CHK_FLAT: "s"}


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Bipartite check/variable graph stored as CSR adjacency.

    ``chk_var[chk_ptr[c]:chk_ptr[c+1]]`` are the variables of check ``c``;
    edge ids are positions in ``chk_var``.  ``var_edge[var_ptr[v]:var_ptr[v+1]]``
    lists the edges at variable ``v``.  ``chk_syn[c]`` is the local syndrome
    index of a syndrome check and -1 for a definition check.
    ``syn_ptr``/``syn_var`` give each local syndrome row over the error bits;
    ``err_labels`` and ``syn_labels`` map local indices to global bit and
    syndrome positions.
    """

    var_kind: np.ndarray
    chk_kind: np.ndarray
    chk_ptr: np.ndarray
    chk_var: np.ndarray
    var_ptr: np.ndarray
    var_edge: np.ndarray
    chk_syn: np.ndarray
    syn_ptr: np.ndarray
    syn_var: np.ndarray
    err_labels: np.ndarray
    syn_labels: np.ndarray
    n_label_bits: int
    n_syn_global: int

    @property
    def n_vars(self) -> int:
        return int(self.var_kind.size)

    @property
    def n_checks(self) -> int:
        return int(self.chk_kind.size)

    @property
    def n_edges(self) -> int:
        return int(self.chk_var.size)

    @property
    def n_err(self) -> int:
        return int(self.err_labels.size)

    @property
    def n_syn(self) -> int:
        return int(self.syn_labels.size)

    def check_vars(self, c: int) -> np.ndarray:
        return self.chk_var[self.chk_ptr[c]:self.chk_ptr[c + 1]]

    def var_checks(self, v: int) -> np.ndarray:
        edges = self.var_edge[self.var_ptr[v]:self.var_ptr[v + 1]]
        return np.searchsorted(self.chk_ptr, edges, side="right") - 1

    def check_degrees(self) -> np.ndarray:
        return np.diff(self.chk_ptr)

    def var_degrees(self) -> np.ndarray:
        return np.diff(self.var_ptr)

    def local_syndrome(self, w) -> np.ndarray:
        """Pick this graph's syndrome bits out of a global syndrome (or pass a local one)."""
        w = np.asarray(w, dtype=np.uint8).ravel()
        if w.size == self.n_syn_global:
            return w[self.syn_labels]
        if w.size == self.n_syn:
            return w
        raise ValueError(f"syndrome has length {w.size}; expected {self.n_syn_global} or {self.n_syn}")

    def syndrome_of(self, e_local: np.ndarray) -> np.ndarray:
        """Local syndrome of a local error-bit vector."""
        e = np.asarray(e_local, dtype=np.int64)
        sums = np.add.reduceat(e[self.syn_var], self.syn_ptr[:-1]) if self.syn_var.size else np.zeros(0, np.int64)
        # reduceat misreports empty rows; those have parity 0.
        sums = np.where(np.diff(self.syn_ptr) > 0, sums, 0)
        return (sums & 1).astype(np.uint8)

    def n_components(self) -> int:
        n_v, n_c = self.n_vars, self.n_checks
        rows = np.repeat(np.arange(n_c), np.diff(self.chk_ptr))
        adj = sp.coo_matrix((np.ones(self.n_edges), (rows, n_c + self.chk_var)), shape=(n_c + n_v, n_c + n_v))
        count, _ = sp.csgraph.connected_components(adj, directed=False)
        return int(count)

    def has_cycle(self) -> bool:
        # A graph is a forest iff edges = vertices - components.
        return self.n_edges != self.n_vars + self.n_checks - self.n_components()

    def with_duplicated_checks(self, syn_rows: Sequence[int]) -> "FactorGraph":
        """Append copies of the syndrome checks with the given local syndrome indices.

        Each copy gets a fresh local syndrome index labelled with the same
        global row, so ``local_syndrome`` of a global ``w`` yields ``[w, w_dup]``.
        """
        syn_rows = [int(s) for s in syn_rows]
        if not syn_rows:
            return self
        by_syn = {int(s): c for c, s in enumerate(self.chk_syn) if s >= 0}
        check_lists = [self.check_vars(c).tolist() for c in range(self.n_checks)]
        kinds = self.chk_kind.tolist()
        chk_syn = self.chk_syn.tolist()
        syn_rows_vars = [self.syn_var[self.syn_ptr[s]:self.syn_ptr[s + 1]].tolist() for s in range(self.n_syn)]
        syn_labels = self.syn_labels.tolist()
        extra_checks, extra_kinds, extra_syn = [], [], []
        for k, s in enumerate(syn_rows):
            c = by_syn[s]
            extra_checks.append(check_lists[c])
            extra_kinds.append(kinds[c])
            extra_syn.append(self.n_syn + k)
            syn_rows_vars.append(syn_rows_vars[s])
            syn_labels.append(syn_labels[s])
        # Keep syndrome checks ahead of definition checks.
        n_top = int(np.sum(self.chk_syn >= 0))
        check_lists = check_lists[:n_top] + extra_checks + check_lists[n_top:]
        kinds = kinds[:n_top] + extra_kinds + kinds[n_top:]
        chk_syn = chk_syn[:n_top] + extra_syn + chk_syn[n_top:]
        return _assemble(self.var_kind, check_lists, kinds, chk_syn, syn_rows_vars,
                         self.err_labels, np.array(syn_labels), self.n_label_bits, self.n_syn_global)


def _csr_lists(lists: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    flat = np.fromiter((v for x in lists for v in x), dtype=np.int64, count=int(ptr[-1]))
    return ptr, flat


def _assemble(var_kind, check_lists, chk_kind, chk_syn, syn_rows, err_labels, syn_labels,
              n_label_bits, n_syn_global) -> FactorGraph:
    n_vars = len(var_kind)
    chk_ptr, chk_var = _csr_lists(check_lists)
    order = np.argsort(chk_var, kind="stable")
    counts = np.bincount(chk_var, minlength=n_vars)
    var_ptr = np.zeros(n_vars + 1, dtype=np.int64)
    var_ptr[1:] = np.cumsum(counts)
    syn_ptr, syn_var = _csr_lists(syn_rows)
    return FactorGraph(
        var_kind=np.asarray(var_kind, dtype=np.int8),
        chk_kind=np.asarray(chk_kind, dtype=np.int8),
        chk_ptr=chk_ptr,
        chk_var=chk_var,
        var_ptr=var_ptr,
        var_edge=order.astype(np.int64),
        chk_syn=np.asarray(chk_syn, dtype=np.int64),
        syn_ptr=syn_ptr,
        syn_var=syn_var,
        err_labels=np.asarray(err_labels, dtype=np.int64),
        syn_labels=np.asarray(syn_labels, dtype=np.int64),
        n_label_bits=int(n_label_bits),
        n_syn_global=int(n_syn_global),
    )


def _csr_row_lists(m: sp.spmatrix) -> list[list[int]]:
    m = sp.csr_matrix(m)
    m.sort_indices()
    return [m.indices[m.indptr[i]:m.indptr[i + 1]].tolist() for i in range(m.shape[0])]


def from_parity_checks(h, labels: Optional[np.ndarray] = None, n_label_bits: Optional[int] = None) -> FactorGraph:
    """Flat Tanner graph of a binary matrix: one check per row, one variable per column."""
    h = sp.csr_matrix(np.asarray(h, dtype=np.uint8) if not sp.issparse(h) else h)
    n_rows, n_cols = h.shape
    rows = _csr_row_lists(h)
    labels = np.arange(n_cols) if labels is None else np.asarray(labels)
    return _assemble(np.zeros(n_cols, dtype=np.int8), rows, [CHK_FLAT] * n_rows, list(range(n_rows)), rows,
                     labels, np.arange(n_rows), n_label_bits or n_cols, n_rows)


def flat_graph(code) -> FactorGraph:
    """Tanner graph over the ``2N`` error bits with one check per stabilizer row."""
    s = code.syndrome_matrix
    n = code.n_qubits
    g = from_parity_checks(s, np.arange(2 * n), 2 * n)
    kind = np.where(np.arange(2 * n) < n, VAR_EX, VAR_EZ).astype(np.int8)
    return FactorGraph(**{**g.__dict__, "var_kind": kind})


def build_factor_graph(code, side: Optional[str] = None) -> FactorGraph:
    """Three-layer decoding graph of an LDGM-based code.

    ``side=None`` builds the whole graph; for a CSS code it splits into two
    disconnected halves.  ``side="x"`` or ``"z"`` returns just one half,
    which is what the CSS decoder runs.  Explicit codes get a flat graph.
    """
    if isinstance(code, _codes.ExplicitCode):
        if side is not None:
            raise ValueError("explicit codes have no per-side graph")
        return flat_graph(code)
    n = code.ldgm.n
    big_n = 2 * n
    p = sp.csr_matrix(code.ldgm.p_matrix)
    pt = sp.csr_matrix(p.T)
    upper_rows = _csr_row_lists(code.upper)
    if side is not None:
        if side not in ("x", "z"):
            raise ValueError(f"side must be 'x' or 'z', got {side!r}")
        if not code.is_css:
            raise ValueError("per-side graphs exist only for CSS codes")
    want_x = side in (None, "x")
    want_z = side in (None, "z")

    # Global variable numbering before compaction: e_x, e_z, d_x, d_z.
    keep_vars = np.zeros(2 * big_n + 2 * n, dtype=bool)
    if want_x:
        keep_vars[0:big_n] = True
        keep_vars[2 * big_n:2 * big_n + n] = True
    if want_z:
        keep_vars[big_n:2 * big_n] = True
        keep_vars[2 * big_n + n:] = True
    # Error bits first, then hidden nodes: this is already the order above.
    new_index = -np.ones(keep_vars.size, dtype=np.int64)
    new_index[keep_vars] = np.arange(int(keep_vars.sum()))
    var_kind_all = np.concatenate([np.full(big_n, VAR_EX), np.full(big_n, VAR_EZ),
                                   np.full(n, VAR_DX), np.full(n, VAR_DZ)])

    check_lists, kinds, chk_syn, syn_labels = [], [], [], []
    for r, cols in enumerate(upper_rows):
        on_x = any(c < n for c in cols)
        on_z = any(c >= n for c in cols)
        if (on_x and not want_x) or (on_z and not want_z):
            continue
        check_lists.append([int(new_index[2 * big_n + c]) for c in cols])
        kinds.append(int(code.row_kind[r]))
        chk_syn.append(len(syn_labels))
        syn_labels.append(r)
    if want_x:
        for j in range(n):
            # d_x[j] = sum_i P[i, j] e_x[i] + e_x[n + j]
            members = [int(new_index[i]) for i in pt.indices[pt.indptr[j]:pt.indptr[j + 1]]]
            members.append(int(new_index[n + j]))
            members.append(int(new_index[2 * big_n + j]))
            check_lists.append(members)
            kinds.append(CHK_DEF)
            chk_syn.append(-1)
    if want_z:
        for j in range(n):
            # d_z[j] = e_z[j] + sum_i P[j, i] e_z[n + i]
            members = [int(new_index[big_n + j])]
            members += [int(new_index[big_n + n + i]) for i in p.indices[p.indptr[j]:p.indptr[j + 1]]]
            members.append(int(new_index[2 * big_n + n + j]))
            check_lists.append(members)
            kinds.append(CHK_DEF)
            chk_syn.append(-1)

    err_global = np.flatnonzero(keep_vars[:2 * big_n])
    s = code.syndrome_matrix[syn_labels]
    s_local = s[:, err_global]
    if s_local.nnz != s.nnz:
        raise ValueError("syndrome rows reach error bits outside the requested side")
    return _assemble(var_kind_all[keep_vars], check_lists, kinds, chk_syn, _csr_row_lists(s_local),
                     err_global, np.array(syn_labels, dtype=np.int64), big_n * 2, code.n_checks)
