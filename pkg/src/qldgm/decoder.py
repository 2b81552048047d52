"""Syndrome-based sum-product decoding and its modified variants.

The message-passing core works on a :class:`~qldgm.graph.FactorGraph` in the
log-likelihood-ratio domain with ``llr = log(P(0) / P(1))``.  Syndrome
checks carry a soft syndrome llr of fixed magnitude; definition checks of
the middle layer are hard parity-zero constraints.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from . import codes as _codes
from . import gf2
from .channels import PauliChannelParams, noise_limit
from .gf2 import Qpcm, SymplecticVec
from .graph import FactorGraph, build_factor_graph

log = logging.getLogger(__name__)

P_CLAMP = (1e-6, 0.74)
_PROD_MAX = 1.0 - 1e-15


@dataclass(frozen=True)
class SpaConfig:
    max_iters: int = 100
    llr_clip: float = 25.0
    syndrome_llr_magnitude: float = 25.0
    tanh_clip: float = 19.0
    schedule: str = "flooding"
    early_stop: bool = True

    def __post_init__(self):
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        for name in ("llr_clip", "syndrome_llr_magnitude", "tanh_clip"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.schedule not in ("flooding", "layered"):
            raise ValueError(f"schedule must be 'flooding' or 'layered', got {self.schedule!r}")


@dataclass(frozen=True, eq=False)
class PriorTable:
    """Prior flip probability per error bit, optionally with 4-ary qubit priors.

    ``flip`` is indexed by global bit label (``[x | z]`` for a quantum code);
    ``pauli`` rows are ``[P(I), P(X), P(Y), P(Z)]`` per qubit.
    """

    flip: np.ndarray
    pauli: Optional[np.ndarray] = None

    def __post_init__(self):
        f = np.asarray(self.flip, dtype=float)
        if f.ndim != 1 or np.any(~np.isfinite(f)) or np.any(f < 0) or np.any(f > 1):
            raise ValueError("flip probabilities must lie in [0, 1]")
        object.__setattr__(self, "flip", f)
        if self.pauli is not None:
            q = np.asarray(self.pauli, dtype=float)
            if q.ndim != 2 or q.shape[1] != 4 or np.any(q < 0):
                raise ValueError("pauli priors must be a non-negative (n, 4) array")
            if not np.allclose(q.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("pauli priors must sum to 1 per qubit")
            object.__setattr__(self, "pauli", q)

    @classmethod
    def from_pauli(cls, pauli: np.ndarray) -> "PriorTable":
        q = np.asarray(pauli, dtype=float)
        return cls(np.concatenate([q[:, 1] + q[:, 2], q[:, 3] + q[:, 2]]), q)

    @classmethod
    def from_channel(cls, channel: PauliChannelParams, n_qubits: int) -> "PriorTable":
        return cls.from_pauli(np.tile(channel.probabilities(), (n_qubits, 1)))

    @classmethod
    def uniform(cls, f: float, n_bits: int) -> "PriorTable":
        return cls(np.full(n_bits, float(f)))

    def llr(self, clip: float) -> np.ndarray:
        return flip_llr(self.flip, clip)


def flip_llr(f, clip: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log1p(-f) - np.log(f)
    return np.clip(out, -clip, clip)


@dataclass
class DecodeResult:
    """Outcome of one decode.

    ``e_hat_bits`` is indexed by global bit label; ``w_hat`` is the syndrome
    of the estimate over the rows the decoder was asked to match.
    """

    e_hat_bits: np.ndarray
    w_hat: np.ndarray
    converged: bool
    iterations: int
    p_hat_trajectory: Optional[list[float]] = None
    posterior: Optional[np.ndarray] = None
    side_converged: tuple = ()
    log: list = field(default_factory=list)

    @property
    def e_hat(self) -> SymplecticVec:
        return SymplecticVec.from_bits(self.e_hat_bits)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _check_node(s, t, factor, v2c, c2v, th, pre, tclip, clip):
    deg = t - s
    for k in range(deg):
        x = 0.5 * v2c[s + k]
        if x > tclip:
            x = tclip
        elif x < -tclip:
            x = -tclip
        th[k] = math.tanh(x)
    acc = factor
    for k in range(deg):
        pre[k] = acc
        acc *= th[k]
    acc = 1.0
    for k in range(deg - 1, -1, -1):
        prod = pre[k] * acc
        acc *= th[k]
        if prod > _PROD_MAX:
            prod = _PROD_MAX
        elif prod < -_PROD_MAX:
            prod = -_PROD_MAX
        m = 2.0 * math.atanh(prod)
        if m > clip:
            m = clip
        elif m < -clip:
            m = -clip
        c2v[s + k] = m


@njit(cache=True)
def _check_factors(chk_syn, w, mag, out):
    t = math.tanh(0.5 * mag)
    for c in range(chk_syn.size):
        s = chk_syn[c]
        if s < 0:
            out[c] = 1.0
        elif w[s]:
            out[c] = -t
        else:
            out[c] = t


@njit(cache=True)
def _init_state(chk_var, prior, v2c, c2v, total, clip):
    for e in range(chk_var.size):
        x = prior[chk_var[e]]
        v2c[e] = min(max(x, -clip), clip)
        c2v[e] = 0.0
    for v in range(prior.size):
        total[v] = prior[v]


@njit(cache=True)
def _refresh(var_ptr, var_edge, prior, c2v, v2c, total, clip):
    # Recompute posteriors and outgoing messages after a prior change.
    for v in range(var_ptr.size - 1):
        acc = prior[v]
        for k in range(var_ptr[v], var_ptr[v + 1]):
            acc += c2v[var_edge[k]]
        total[v] = acc
        for k in range(var_ptr[v], var_ptr[v + 1]):
            e = var_edge[k]
            x = acc - c2v[e]
            v2c[e] = min(max(x, -clip), clip)


@njit(cache=True)
def _syndrome_ok(syn_ptr, syn_var, ehat, w):
    for s in range(syn_ptr.size - 1):
        par = 0
        for k in range(syn_ptr[s], syn_ptr[s + 1]):
            par ^= ehat[syn_var[k]]
        if par != w[s]:
            return False
    return True


@njit(cache=True)
def _iterate(chk_ptr, chk_var, var_ptr, var_edge, factor, prior, syn_ptr, syn_var, w,
             v2c, c2v, total, ehat, max_iters, clip, tclip, layered, early_stop, th, pre, old):
    n_chk = chk_ptr.size - 1
    n_var = var_ptr.size - 1
    n_err = ehat.size
    conv = False
    it = 0
    for it in range(1, max_iters + 1):
        if layered:
            for c in range(n_chk):
                s = chk_ptr[c]
                t = chk_ptr[c + 1]
                for e in range(s, t):
                    x = total[chk_var[e]] - c2v[e]
                    v2c[e] = min(max(x, -clip), clip)
                    old[e - s] = c2v[e]
                _check_node(s, t, factor[c], v2c, c2v, th, pre, tclip, clip)
                for e in range(s, t):
                    total[chk_var[e]] += c2v[e] - old[e - s]
        else:
            for c in range(n_chk):
                _check_node(chk_ptr[c], chk_ptr[c + 1], factor[c], v2c, c2v, th, pre, tclip, clip)
            for v in range(n_var):
                acc = prior[v]
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    acc += c2v[var_edge[k]]
                total[v] = acc
        # Ties resolve to "no error".
        for v in range(n_err):
            ehat[v] = 1 if total[v] < 0.0 else 0
        conv = _syndrome_ok(syn_ptr, syn_var, ehat, w)
        if conv and early_stop:
            return it, True
        if not layered:
            for v in range(n_var):
                acc = total[v]
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edge[k]
                    x = acc - c2v[e]
                    v2c[e] = min(max(x, -clip), clip)
    return it, conv


@njit(cache=True)
def _decode_batch(chk_ptr, chk_var, var_ptr, var_edge, chk_syn, prior, syn_ptr, syn_var, W,
                  mag, max_iters, clip, tclip, layered, early_stop, out_e, out_conv, out_iters):
    n_edges = chk_var.size
    n_var = var_ptr.size - 1
    max_deg = 1
    for c in range(chk_ptr.size - 1):
        max_deg = max(max_deg, chk_ptr[c + 1] - chk_ptr[c])
    v2c = np.empty(n_edges)
    c2v = np.empty(n_edges)
    total = np.empty(n_var)
    factor = np.empty(chk_ptr.size - 1)
    th = np.empty(max_deg)
    pre = np.empty(max_deg)
    old = np.empty(max_deg)
    ehat = np.empty(out_e.shape[1], dtype=np.uint8)
    n_err = out_e.shape[1]
    positive = True
    for v in range(n_err):
        if prior[v] <= 0.0:
            positive = False
    for i in range(W.shape[0]):
        w = W[i]
        if positive and not w.any():
            # Every message is positive after one iteration: the estimate is zero.
            out_e[i, :] = 0
            out_conv[i] = True
            out_iters[i] = 1
            continue
        _check_factors(chk_syn, w, mag, factor)
        _init_state(chk_var, prior, v2c, c2v, total, clip)
        it, conv = _iterate(chk_ptr, chk_var, var_ptr, var_edge, factor, prior, syn_ptr, syn_var, w,
                            v2c, c2v, total, ehat, max_iters, clip, tclip, layered, early_stop, th, pre, old)
        out_e[i, :] = ehat
        out_conv[i] = conv
        out_iters[i] = it


class GraphRunner:
    """Owns the message buffers for one graph; not to be shared between threads."""

    def __init__(self, graph: FactorGraph, cfg: SpaConfig):
        self.graph = graph
        self.cfg = cfg
        n_e = graph.n_edges
        max_deg = int(graph.check_degrees().max(initial=1))
        self.v2c = np.empty(n_e)
        self.c2v = np.empty(n_e)
        self.total = np.empty(graph.n_vars)
        self.factor = np.empty(graph.n_checks)
        self.th = np.empty(max(max_deg, 1))
        self.pre = np.empty(max(max_deg, 1))
        self.old = np.empty(max(max_deg, 1))
        self.ehat = np.empty(graph.n_err, dtype=np.uint8)
        self.layered = cfg.schedule == "layered"

    def prior_llr(self, flip_labels: np.ndarray) -> np.ndarray:
        """Local prior llrs: channel values on error bits, zero on hidden nodes."""
        g = self.graph
        out = np.zeros(g.n_vars)
        out[:g.n_err] = flip_llr(np.asarray(flip_labels)[g.err_labels], self.cfg.llr_clip)
        return out

    def start(self, w_local: np.ndarray, prior: np.ndarray) -> None:
        g = self.graph
        self.w = np.ascontiguousarray(w_local, dtype=np.uint8)
        _check_factors(g.chk_syn, self.w, self.cfg.syndrome_llr_magnitude, self.factor)
        _init_state(g.chk_var, prior, self.v2c, self.c2v, self.total, self.cfg.llr_clip)

    def step(self, prior: np.ndarray, n_iters: int, early_stop: Optional[bool] = None) -> tuple[int, bool]:
        g, cfg = self.graph, self.cfg
        return _iterate(g.chk_ptr, g.chk_var, g.var_ptr, g.var_edge, self.factor, prior, g.syn_ptr, g.syn_var,
                        self.w, self.v2c, self.c2v, self.total, self.ehat, n_iters, cfg.llr_clip,
                        cfg.tanh_clip, self.layered, cfg.early_stop if early_stop is None else early_stop,
                        self.th, self.pre, self.old)

    def refresh(self, prior: np.ndarray) -> None:
        g = self.graph
        _refresh(g.var_ptr, g.var_edge, prior, self.c2v, self.v2c, self.total, self.cfg.llr_clip)

    def run(self, w_local: np.ndarray, prior: np.ndarray, max_iters: Optional[int] = None) -> tuple[np.ndarray, bool, int]:
        self.start(w_local, prior)
        it, conv = self.step(prior, max_iters or self.cfg.max_iters)
        return self.ehat.copy(), bool(conv), int(it)

    def posterior(self) -> np.ndarray:
        c = self.cfg.llr_clip
        return np.clip(self.total[:self.graph.n_err], -c, c)

    def run_batch(self, W_local: np.ndarray, prior: np.ndarray):
        g, cfg = self.graph, self.cfg
        k = W_local.shape[0]
        out_e = np.empty((k, g.n_err), dtype=np.uint8)
        out_conv = np.empty(k, dtype=np.bool_)
        out_iters = np.empty(k, dtype=np.int64)
        _decode_batch(g.chk_ptr, g.chk_var, g.var_ptr, g.var_edge, g.chk_syn, prior, g.syn_ptr, g.syn_var,
                      np.ascontiguousarray(W_local, dtype=np.uint8), cfg.syndrome_llr_magnitude, cfg.max_iters,
                      cfg.llr_clip, cfg.tanh_clip, self.layered, cfg.early_stop, out_e, out_conv, out_iters)
        return out_e, out_conv, out_iters


def spa_decode(graph: FactorGraph, w, priors: PriorTable, cfg: SpaConfig = SpaConfig()) -> DecodeResult:
    """Run sum-product decoding on one graph.

    ``w`` may be the global syndrome or the graph's local one; ``w_hat`` in
    the result is local.  Bits outside the graph are reported as zero.
    """
    runner = GraphRunner(graph, cfg)
    w_local = graph.local_syndrome(w)
    prior = runner.prior_llr(priors.flip)
    e_local, conv, it = runner.run(w_local, prior)
    bits = np.zeros(graph.n_label_bits, dtype=np.uint8)
    bits[graph.err_labels] = e_local
    post = np.full(graph.n_label_bits, cfg.llr_clip)
    post[graph.err_labels] = runner.posterior()
    return DecodeResult(bits, graph.syndrome_of(e_local), conv, it, posterior=post, side_converged=(conv,))


# ---------------------------------------------------------------------------
# Code-level decoding
# ---------------------------------------------------------------------------

class CodeContext:
    """Decoding graphs of a code: two halves for CSS, one graph otherwise."""

    def __init__(self, code, cfg: SpaConfig, split: Optional[bool] = None):
        self.code = code
        self.cfg = cfg
        self.smat = code.syndrome_matrix.tocsr()
        self.n_qubits = code.n_qubits
        if split is None:
            split = bool(code.is_css) and not isinstance(code, _codes.ExplicitCode)
        if split:
            self.graphs = [build_factor_graph(code, "x"), build_factor_graph(code, "z")]
        else:
            self.graphs = [build_factor_graph(code)]
        self.runners = [GraphRunner(g, cfg) for g in self.graphs]
        self.split = split

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        return (self.smat @ bits.astype(np.int64) % 2).astype(np.uint8)

    def run_part(self, k: int, w, flip: np.ndarray, graph: Optional[FactorGraph] = None):
        runner = self.runners[k] if graph is None else GraphRunner(graph, self.cfg)
        g = runner.graph
        prior = runner.prior_llr(flip)
        e_local, conv, it = runner.run(g.local_syndrome(w), prior)
        return e_local, conv, it, runner.posterior()

    def merge(self, parts: Sequence[tuple], w, log_lines=None) -> DecodeResult:
        bits = np.zeros(2 * self.n_qubits, dtype=np.uint8)
        post = np.zeros(2 * self.n_qubits)
        for g, (e_local, _, _, p) in zip(self.graphs, parts):
            bits[g.err_labels] = e_local
            post[g.err_labels] = p
        conv = tuple(bool(p[1]) for p in parts)
        w_hat = self.syndrome(bits)
        return DecodeResult(bits, w_hat, all(conv), int(sum(p[2] for p in parts)), posterior=post,
                            side_converged=conv, log=list(log_lines or []))

    def decode_flip(self, w, flip: np.ndarray, log_lines=None) -> DecodeResult:
        w = np.asarray(w, dtype=np.uint8)
        parts = [self.run_part(k, w, flip) for k in range(len(self.graphs))]
        return self.merge(parts, w, log_lines)


_CONTEXTS: dict = {}


def _context(code, cfg: SpaConfig, split: Optional[bool] = None) -> CodeContext:
    key = (id(code), cfg, split)
    ctx = _CONTEXTS.get(key)
    if ctx is None or ctx.code is not code:
        if len(_CONTEXTS) > 64:
            _CONTEXTS.clear()
        ctx = _CONTEXTS[key] = CodeContext(code, cfg, split)
    return ctx


def channel_flip(channel: PauliChannelParams, n_qubits: int) -> np.ndarray:
    """Marginal flip priors ``[px + py]*N + [pz + py]*N``."""
    return np.concatenate([np.full(n_qubits, channel.fx), np.full(n_qubits, channel.fz)])


def css_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig()) -> DecodeResult:
    """Decode the two halves of a CSS code independently and merge."""
    if not code.is_css:
        raise ValueError("css_decode needs a CSS code")
    ctx = _context(code, cfg, split=True)
    return ctx.decode_flip(w, channel_flip(channel, code.n_qubits))


def full_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig()) -> DecodeResult:
    """Single SPA over the whole graph of the code."""
    ctx = _context(code, cfg, split=False)
    return ctx.decode_flip(w, channel_flip(channel, code.n_qubits))


# ---------------------------------------------------------------------------
# Exhaustive oracles
# ---------------------------------------------------------------------------

MAX_EXHAUSTIVE_QUBITS = 14
_LEX_DIGIT = np.array([[0, 3], [1, 2]])  # [x][z] -> I=0, Z=3, X=1, Y=2


def _coset_space(h: Qpcm, w):
    n = h.n_qubits
    if n > MAX_EXHAUSTIVE_QUBITS:
        raise ValueError(f"exhaustive decoding is limited to {MAX_EXHAUSTIVE_QUBITS} qubits, got {n}")
    s = np.concatenate([h.hz, h.hx], axis=1)
    w = np.asarray(w, dtype=np.uint8).ravel()
    if w.size != s.shape[0]:
        raise ValueError(f"syndrome has length {w.size}; the code has {s.shape[0]} checks")
    e0 = gf2.solve_augmented(s, w)
    if e0 is None:
        raise ValueError("syndrome is not reachable")
    stab = h.stacked.astype(np.uint8)
    kernel = gf2.nullspace_basis(s)
    logical = []
    current = stab.copy()
    r = gf2.rank(current)
    for row in kernel:
        cand = np.vstack([current, row[None, :]])
        rr = gf2.rank(cand)
        if rr > r:
            current, r = cand, rr
            logical.append(row)
    logical = np.array(logical, dtype=np.uint8).reshape(-1, 2 * n)
    return e0.astype(np.uint8), stab, logical


def _enumerate(gens: np.ndarray, chunk: int = 1 << 14):
    d = gens.shape[0]
    total = 1 << d
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        coeffs = (idx[:, None] >> np.arange(d)[None, :]) & 1
        yield idx, (coeffs @ gens.astype(np.int64)) & 1


def _log_probs(words: np.ndarray, channel: PauliChannelParams, n: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lp = np.log(channel.probabilities())
    x = words[:, :n]
    z = words[:, n:]
    idx = np.where(x == 1, np.where(z == 1, 2, 1), np.where(z == 1, 3, 0))
    return lp[idx].sum(axis=1)


def _lex_keys(words: np.ndarray, n: int) -> np.ndarray:
    digits = _LEX_DIGIT[words[:, :n], words[:, n:]]
    return (digits * (4 ** np.arange(n - 1, -1, -1, dtype=np.int64))).sum(axis=1)


def _best(words, lp, n, best):
    # Keep the most probable word; exact ties go to the lexicographically smallest.
    m = lp.max()
    if best is not None and m < best[0] - 1e-12:
        return best
    cand = words[lp >= m - 1e-12]
    keys = _lex_keys(cand, n)
    k = int(np.argmin(keys))
    if best is None or m > best[0] + 1e-12 or (abs(m - best[0]) <= 1e-12 and keys[k] < best[1]):
        return (float(m), int(keys[k]), cand[k].astype(np.uint8))
    return best


def qmld_exhaustive(h: Qpcm, w, channel: PauliChannelParams) -> SymplecticVec:
    """Most likely Pauli with syndrome ``w`` (ties: lexicographically smallest, I < X < Y < Z)."""
    e0, stab, logical = _coset_space(h, w)
    gens = np.vstack([stab, logical])
    n = h.n_qubits
    best = None
    for _, words in _enumerate(gens):
        words = words ^ e0
        best = _best(words, _log_probs(words, channel, n), n, best)
    return SymplecticVec.from_bits(best[2])


def coset_probabilities(h: Qpcm, w, channel: PauliChannelParams) -> list[tuple[SymplecticVec, float]]:
    """Total probability of each stabilizer coset with syndrome ``w``.

    Each coset is represented by its most probable member.
    """
    e0, stab, logical = _coset_space(h, w)
    n = h.n_qubits
    out = []
    n_log = logical.shape[0]
    for lc in range(1 << n_log):
        shift = e0.copy()
        for b in range(n_log):
            if (lc >> b) & 1:
                shift ^= logical[b]
        total = 0.0
        best = None
        for _, words in _enumerate(stab):
            words = words ^ shift
            lp = _log_probs(words, channel, n)
            total += float(np.exp(lp).sum())
            best = _best(words, lp, n, best)
        out.append((SymplecticVec.from_bits(best[2]), total))
    return out


def dqmld_exhaustive(h: Qpcm, w, channel: PauliChannelParams) -> SymplecticVec:
    """Representative of the most probable stabilizer coset with syndrome ``w``."""
    cosets = coset_probabilities(h, w, channel)
    probs = np.array([p for _, p in cosets])
    top = probs.max()
    tied = [c for c, p in cosets if p >= top * (1 - 1e-12)]
    keys = [_lex_keys(c.bits[None, :], h.n_qubits)[0] for c in tied]
    return tied[int(np.argmin(keys))]


# ---------------------------------------------------------------------------
# Online channel estimation
# ---------------------------------------------------------------------------

def online_estimate_decode(graph: FactorGraph, w, p_init: float, cfg: SpaConfig = SpaConfig()) -> DecodeResult:
    """SPA that re-estimates the depolarizing probability every iteration.

    Before each iteration the channel llrs are recomputed from the current
    estimate ``p_hat`` (flip probability ``2 p_hat / 3`` on every bit).  After
    it, ``p_hat`` is the fraction of qubits whose hard decision is not the
    identity, which is the hard-decision reading of
    ``1 - mean P(E_i = I | w)``.  Estimates are clamped to ``[1e-6, 0.74]``.
    """
    if not 0.0 < p_init < 0.75:
        raise ValueError(f"p_init must lie in (0, 0.75), got {p_init}")
    if graph.n_label_bits % 2:
        raise ValueError("online estimation needs a graph over [x | z] error bits")
    n_q = graph.n_label_bits // 2
    runner = GraphRunner(graph, cfg)
    w_local = graph.local_syndrome(w)
    lines = []

    def prior_for(p):
        return runner.prior_llr(np.full(graph.n_label_bits, 2.0 * p / 3.0))

    p_hat = float(p_init)
    traj = [p_hat]
    prior = prior_for(p_hat)
    runner.start(w_local, prior)
    conv = False
    it = 0
    bits = np.zeros(graph.n_label_bits, dtype=np.uint8)
    for it in range(1, cfg.max_iters + 1):
        if it > 1:
            prior = prior_for(p_hat)
            runner.refresh(prior)
        _, conv = runner.step(prior, 1, early_stop=True)
        bits[:] = 0
        bits[graph.err_labels] = runner.ehat
        raw = float(np.count_nonzero(bits[:n_q] | bits[n_q:])) / n_q
        p_hat = min(max(raw, P_CLAMP[0]), P_CLAMP[1])
        if p_hat != raw:
            lines.append(f"clamp iteration {it}: {raw:.6g} -> {p_hat:.6g}")
            log.debug("online estimate clamped at iteration %d: %g -> %g", it, raw, p_hat)
        traj.append(p_hat)
        if conv:
            break
    post = np.full(graph.n_label_bits, cfg.llr_clip)
    post[graph.err_labels] = runner.posterior()
    return DecodeResult(bits.copy(), graph.syndrome_of(runner.ehat), bool(conv), it, traj, post,
                        (bool(conv),), lines)


# ---------------------------------------------------------------------------
# Modified decoders for binary CSS decoding
# ---------------------------------------------------------------------------

def _safe_ratio(a: float, b: float, fallback: float) -> float:
    return a / b if b > 0 else fallback


def adjusted_priors(channel: PauliChannelParams, e_other: np.ndarray, target: str) -> np.ndarray:
    """Priors for the failed half given the other half's estimate.

    ``target="z"``: ``py/(px+py)`` where ``e_x`` flags an error, else
    ``pz/(1-px-py)``.  ``target="x"`` mirrors this with the roles swapped.
    """
    px, py, pz = channel.px, channel.py, channel.pz
    e_other = np.asarray(e_other, dtype=bool)
    if target == "z":
        hit = _safe_ratio(py, px + py, channel.fz)
        miss = _safe_ratio(pz, 1.0 - px - py, channel.fz)
    elif target == "x":
        hit = _safe_ratio(py, py + pz, channel.fx)
        miss = _safe_ratio(px, 1.0 - py - pz, channel.fx)
    else:
        raise ValueError("target must be 'x' or 'z'")
    return np.where(e_other, hit, miss)


def correlation_update(px_t, pz_t, channel: PauliChannelParams) -> tuple[np.ndarray, np.ndarray]:
    """Cross-half prior exchange.

    Given the current probabilities that each qubit has an x flip
    (``px_t``) or a z flip (``pz_t``), return the new z-flip priors implied
    by the x side and the new x-flip priors implied by the z side, using the
    conditionals of the joint X/Z distribution of the channel.
    """
    px, py, pz = channel.px, channel.py, channel.pz
    px_t = np.asarray(px_t, dtype=float)
    pz_t = np.asarray(pz_t, dtype=float)
    z_given_x1 = _safe_ratio(py, px + py, channel.fz)
    z_given_x0 = _safe_ratio(pz, 1.0 - px - py, channel.fz)
    x_given_z1 = _safe_ratio(py, py + pz, channel.fx)
    x_given_z0 = _safe_ratio(px, 1.0 - py - pz, channel.fx)
    new_z = px_t * z_given_x1 + (1.0 - px_t) * z_given_x0
    new_x = pz_t * x_given_z1 + (1.0 - pz_t) * x_given_z0
    return new_z, new_x


def _llr_to_prob(llr: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(llr))


def _css_ctx(code, cfg: SpaConfig) -> CodeContext:
    if not code.is_css or isinstance(code, _codes.ExplicitCode):
        raise ValueError("this decoder needs an LDGM-based CSS code")
    return _context(code, cfg, split=True)


def correlation_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig(),
                       rounds: int = 3) -> DecodeResult:
    """Alternate the two halves, feeding each the other's posterior beliefs."""
    ctx = _css_ctx(code, cfg)
    n = code.n_qubits
    flip = channel_flip(channel, n)
    lines = ["round 0"]
    parts = [ctx.run_part(0, w, flip), ctx.run_part(1, w, flip)]
    for r in range(1, rounds + 1):
        if parts[0][1] and parts[1][1]:
            break
        lines.append(f"round {r}")
        px_t = _llr_to_prob(parts[0][3])
        new_z, _ = correlation_update(px_t, np.zeros(n), channel)
        flip = flip.copy()
        flip[n:] = new_z
        parts[1] = ctx.run_part(1, w, flip)
        pz_t = _llr_to_prob(parts[1][3])
        _, new_x = correlation_update(np.zeros(n), pz_t, channel)
        flip[:n] = new_x
        parts[0] = ctx.run_part(0, w, flip)
    return ctx.merge(parts, w, lines)


def adjust_side(code, w, channel: PauliChannelParams, cfg: SpaConfig, base: DecodeResult) -> DecodeResult:
    """Retry the failed half of ``base`` with priors adjusted by the converged half."""
    ctx = _css_ctx(code, cfg)
    x_ok, z_ok = base.side_converged
    if not (x_ok or z_ok):
        raise ValueError("adjusted decoding needs one converged half")
    if x_ok and z_ok:
        return base
    n = code.n_qubits
    flip = channel_flip(channel, n)
    parts = [(base.e_hat_bits[:n], x_ok, 0, base.posterior[:n]), (base.e_hat_bits[n:], z_ok, 0, base.posterior[n:])]
    if x_ok:
        flip[n:] = adjusted_priors(channel, base.e_hat_bits[:n], "z")
        parts[1] = ctx.run_part(1, w, flip)
    else:
        flip[:n] = adjusted_priors(channel, base.e_hat_bits[n:], "x")
        parts[0] = ctx.run_part(0, w, flip)
    res = ctx.merge(parts, w, base.log + ["adjusted " + ("z" if x_ok else "x")])
    res.iterations += base.iterations
    return res


def adjusted_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig()) -> DecodeResult:
    """Binary CSS decoding followed by an adjusted retry of a single failed half.

    When both halves converge or both fail the base result is returned.
    """
    base = css_decode(code, w, channel, cfg)
    base.log.append("base")
    if sum(base.side_converged) != 1:
        return base
    return adjust_side(code, w, channel, cfg, base)


def augmented_syndrome(w, rows: Sequence[int]) -> np.ndarray:
    """``[w, w[rows]]``: the syndrome matching a matrix with ``rows`` duplicated."""
    w = np.asarray(w, dtype=np.uint8)
    return np.concatenate([w, w[np.asarray(rows, dtype=np.int64)]])


def _augment_part(ctx: CodeContext, k: int, w, flip, delta: float, max_attempts: int,
                  rng: np.random.Generator, lines: list, label: str):
    g = ctx.graphs[k]
    n_dup = int(math.ceil(delta * g.n_syn))
    if n_dup == 0:
        return None
    used = 0
    for attempt in range(max_attempts):
        rows = np.sort(rng.choice(g.n_syn, size=n_dup, replace=False))
        lines.append(f"augment {label} attempt {attempt + 1}")
        res = ctx.run_part(k, w, flip, g.with_duplicated_checks(rows))
        used += res[2]
        if res[1]:
            return (res[0], True, used, res[3])
    return (None, False, used, None)


def augmented_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig(), delta: float = 0.1,
                     max_attempts: int = 10, rng: Optional[np.random.Generator] = None) -> DecodeResult:
    """Retry each failed part over graphs with a random ``ceil(delta * rows)`` checks duplicated."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    rng = rng if rng is not None else np.random.default_rng(0)
    ctx = _context(code, cfg)
    flip = channel_flip(channel, code.n_qubits)
    parts = [ctx.run_part(k, w, flip) for k in range(len(ctx.graphs))]
    lines = ["base"]
    extra = 0
    for k in range(len(parts)):
        if parts[k][1]:
            continue
        label = ("x", "z")[k] if ctx.split else "all"
        res = _augment_part(ctx, k, w, flip, delta, max_attempts, rng, lines, label)
        if res is None:
            continue
        extra += res[2]
        if res[1]:
            parts[k] = res
    out = ctx.merge(parts, w, lines)
    out.iterations += extra
    return out


def efb_pauli_prior(p: float, s_q: int, w_j: int, w_hat_j: int) -> np.ndarray:
    """Perturbed ``[I, X, Y, Z]`` prior of a qubit next to a frustrated check.

    With ``w_j = 1, w_hat_j = 0`` the identity and the check's own Pauli
    ``s_q`` (both commuting with it) get ``p/2`` and the anticommuting pair
    ``1 - p/2``; the opposite case swaps the two values.  The result is
    renormalised (the raw values sum to 2).
    """
    lo, hi = p / 2.0, 1.0 - p / 2.0
    commuting = np.zeros(4, dtype=bool)
    commuting[0] = True
    commuting[s_q] = True
    if w_j == 1 and w_hat_j == 0:
        vals = np.where(commuting, lo, hi)
    elif w_j == 0 and w_hat_j == 1:
        vals = np.where(commuting, hi, lo)
    else:
        raise ValueError("check is not frustrated")
    return vals / vals.sum()


def _pauli_index(x: int, z: int) -> int:
    return int(_LEX_DIGIT[x, z])


def enhanced_feedback_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig(),
                             rng: Optional[np.random.Generator] = None, budget: int = 50) -> DecodeResult:
    """Re-decode with perturbed priors on qubits next to frustrated checks.

    Frustrated checks are visited in ascending order and, for each, the
    qubits in its support in ascending order.  A perturbation is kept when
    it un-frustrates the current check and dropped otherwise.  At most
    ``budget`` (check, qubit) pairs are tried.  ``rng`` is accepted for
    interface uniformity; the search is deterministic.
    """
    del rng
    ctx = _context(code, cfg)
    n = code.n_qubits
    w = np.asarray(w, dtype=np.uint8)
    pauli = np.tile(channel.probabilities(), (n, 1))
    res = ctx.decode_flip(w, PriorTable.from_pauli(pauli).flip, ["base"])
    total_iters = res.iterations
    if res.converged:
        return res
    smat = ctx.smat
    hx, hz = smat[:, n:], smat[:, :n]
    tried = 0
    visited: set[int] = set()
    current = res
    while tried < budget:
        frustrated = [int(j) for j in np.flatnonzero(current.w_hat != w) if int(j) not in visited]
        if not frustrated:
            break
        j = frustrated[0]
        visited.add(j)
        support = np.union1d(hx[j].indices, hz[j].indices)
        for q in support:
            if tried >= budget:
                break
            tried += 1
            s_q = _pauli_index(int(hx[j, q]), int(hz[j, q]))
            trial = pauli.copy()
            trial[q] = efb_pauli_prior(channel.p, s_q, int(w[j]), int(current.w_hat[j]))
            attempt = ctx.decode_flip(w, PriorTable.from_pauli(trial).flip)
            total_iters += attempt.iterations
            attempt.log = current.log + [f"efb check {j} qubit {int(q)}"]
            if attempt.converged:
                attempt.iterations = total_iters
                return attempt
            if attempt.w_hat[j] == w[j]:
                pauli, current = trial, attempt
                break
    current.iterations = total_iters
    return current


SideDecoder = Callable[[int, np.ndarray, Optional[np.ndarray]], tuple]


def combined_decode(code, w, channel: PauliChannelParams, cfg: SpaConfig = SpaConfig(), delta: float = 0.1,
                    rng: Optional[np.random.Generator] = None, max_attempts: int = 10,
                    side_decoder: Optional[SideDecoder] = None) -> DecodeResult:
    """Base CSS decode, then augmentation and adjusted priors in a fixed order.

    1. both halves fail: augment x; if x still fails, augment z; if both
       still fail, stop.
    2. exactly one half fails: retry it with adjusted priors; if that fails,
       augment it while keeping the adjusted priors.

    ``side_decoder(k, flip, dup_rows)`` replaces the half decoder (used in
    tests); it must return ``(e_local, converged, iterations, posterior)``.
    With ``delta = 0`` every augmentation stage is skipped.
    """
    ctx = _css_ctx(code, cfg)
    rng = rng if rng is not None else np.random.default_rng(0)
    n = code.n_qubits
    w = np.asarray(w, dtype=np.uint8)

    def decode_half(k, flip, rows=None):
        if side_decoder is not None:
            return side_decoder(k, flip, rows)
        g = None if rows is None else ctx.graphs[k].with_duplicated_checks(rows)
        return ctx.run_part(k, w, flip, g)

    def augment(k, flip, label):
        g = ctx.graphs[k]
        n_dup = int(math.ceil(delta * g.n_syn))
        if n_dup == 0:
            return None
        for attempt in range(max_attempts):
            rows = np.sort(rng.choice(g.n_syn, size=n_dup, replace=False))
            lines.append(f"augment {label} attempt {attempt + 1}")
            res = decode_half(k, flip, rows)
            counter[0] += res[2]
            if res[1]:
                return res
        return None

    flip = channel_flip(channel, n)
    lines = ["base"]
    counter = [0]
    parts = [decode_half(0, flip), decode_half(1, flip)]
    counter[0] += parts[0][2] + parts[1][2]
    if not parts[0][1] and not parts[1][1] and delta > 0:
        res = augment(0, flip, "x")
        if res is not None:
            parts[0] = res
        else:
            res = augment(1, flip, "z")
            if res is not None:
                parts[1] = res
    if parts[0][1] != parts[1][1]:
        k = 1 if parts[0][1] else 0
        label = "xz"[k]
        adj = flip.copy()
        sl = slice(n, 2 * n) if k == 1 else slice(0, n)
        adj[sl] = adjusted_priors(channel, parts[1 - k][0], label)
        lines.append(f"adjusted {label}")
        res = decode_half(k, adj)
        counter[0] += res[2]
        if not res[1] and delta > 0:
            aug = augment(k, adj, label + " (adjusted priors)")
            if aug is not None:
                res = aug
        if res[1]:
            parts[k] = res
    fixed = []
    for k, p in enumerate(parts):
        if p[0] is None:
            p = (np.zeros(ctx.graphs[k].n_err, dtype=np.uint8), False, 0, np.zeros(ctx.graphs[k].n_err))
        fixed.append(p)
    out = ctx.merge(fixed, w, lines)
    out.iterations = counter[0]
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DECODER_NAMES = ("spa", "css", "adjusted", "augmented", "efb", "combined", "online", "correlation",
                 "qmld", "exhaustive", "dqmld")


@dataclass(frozen=True)
class DecoderSpec:
    name: str = "css"
    spa: SpaConfig = SpaConfig()
    delta: float = 0.1
    max_attempts: int = 10
    budget: int = 50
    p_init: Optional[float] = None
    rounds: int = 3

    @classmethod
    def from_config(cls, cfg: dict) -> "DecoderSpec":
        cfg = dict(cfg or {})
        name = cfg.pop("decoder", cfg.pop("name", "css"))
        if name not in DECODER_NAMES:
            raise ValueError(f"decoder.decoder must be one of {', '.join(DECODER_NAMES)}; got {name!r}")
        spa_keys = {"max_iters", "llr_clip", "syndrome_llr_magnitude", "tanh_clip", "schedule"}
        spa = SpaConfig(**{k: cfg.pop(k) for k in list(cfg) if k in spa_keys})
        known = {"delta", "max_attempts", "budget", "p_init", "rounds"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"decoder.{sorted(unknown)[0]}: unknown decoder option")
        spec = cls(name=name, spa=spa, **cfg)
        if not 0.0 <= spec.delta <= 1.0:
            raise ValueError(f"decoder.delta must lie in [0, 1], got {spec.delta}")
        if spec.p_init is not None and not 0.0 < spec.p_init < 0.75:
            raise ValueError(f"decoder.p_init must lie in (0, 0.75), got {spec.p_init}")
        return spec

    def to_config(self) -> dict:
        out = {"decoder": self.name, "delta": self.delta, "max_attempts": self.max_attempts,
               "budget": self.budget, "p_init": self.p_init, "rounds": self.rounds}
        out.update({"max_iters": self.spa.max_iters, "llr_clip": self.spa.llr_clip,
                    "syndrome_llr_magnitude": self.spa.syndrome_llr_magnitude,
                    "tanh_clip": self.spa.tanh_clip, "schedule": self.spa.schedule})
        return out


class Decoder:
    """A decoder bound to one code and channel, as used by the Monte Carlo engine.

    ``decode_batch`` runs the plain SPA decoders fully inside compiled code;
    other decoders fall back to one call per syndrome.
    """

    def __init__(self, code, channel: PauliChannelParams, spec: DecoderSpec):
        self.code = code
        self.channel = channel
        self.spec = spec
        name = spec.name
        explicit = isinstance(code, _codes.ExplicitCode)
        layered_css = code.is_css and not explicit
        if name in ("adjusted", "combined", "correlation") and not layered_css:
            raise ValueError(f"decoder {name!r} needs an LDGM-based CSS code")
        # "css" on a non-CSS or explicit code degrades to one graph for the whole code.
        split = layered_css and name not in ("spa", "online")
        self.ctx = CodeContext(code, spec.spa, split=split) if name not in ("qmld", "exhaustive", "dqmld") else None
        self.flip = channel_flip(channel, code.n_qubits)
        self.batchable = name in ("spa", "css")
        if self.ctx is not None:
            self.priors = [r.prior_llr(self.flip) for r in self.ctx.runners]
        if name == "online":
            self.p_init = spec.p_init if spec.p_init is not None else noise_limit(code.rate)

    def decode(self, w, rng: Optional[np.random.Generator] = None) -> DecodeResult:
        s, name, code, ch = self.spec, self.spec.name, self.code, self.channel
        if name in ("spa", "css"):
            return self.ctx.decode_flip(w, self.flip)
        if name in ("qmld", "exhaustive", "dqmld"):
            h = code.qpcm
            e = (dqmld_exhaustive if name == "dqmld" else qmld_exhaustive)(h, w, ch)
            bits = e.bits
            w_hat = (code.syndrome_matrix @ bits.astype(np.int64) % 2).astype(np.uint8)
            ok = bool(np.array_equal(w_hat, np.asarray(w, dtype=np.uint8)))
            return DecodeResult(bits, w_hat, ok, 0, side_converged=(ok,))
        if name == "online":
            res = online_estimate_decode(self.ctx.graphs[0], w, self.p_init, s.spa)
            res.w_hat = self.ctx.syndrome(res.e_hat_bits)
            return res
        if name == "adjusted":
            return adjusted_decode(code, w, ch, s.spa)
        if name == "augmented":
            return augmented_decode(code, w, ch, s.spa, s.delta, s.max_attempts, rng)
        if name == "efb":
            return enhanced_feedback_decode(code, w, ch, s.spa, rng, s.budget)
        if name == "combined":
            return combined_decode(code, w, ch, s.spa, s.delta, rng, s.max_attempts)
        if name == "correlation":
            return correlation_decode(code, w, ch, s.spa, s.rounds)
        raise ValueError(f"unknown decoder {name!r}")

    def decode_batch(self, W: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Decode rows of ``W`` with the base SPA; returns (e_hat bits, converged, iterations)."""
        k = W.shape[0]
        bits = np.zeros((k, 2 * self.code.n_qubits), dtype=np.uint8)
        conv = np.ones(k, dtype=bool)
        iters = np.zeros(k, dtype=np.int64)
        for runner, prior in zip(self.ctx.runners, self.priors):
            g = runner.graph
            e, c, it = runner.run_batch(W[:, g.syn_labels], prior)
            bits[:, g.err_labels] = e
            conv &= c
            iters += it
        return bits, conv, iters


def make_decoder(code, channel: PauliChannelParams, spec: DecoderSpec | dict | None = None) -> Decoder:
    if spec is None:
        spec = DecoderSpec()
    elif isinstance(spec, dict):
        spec = DecoderSpec.from_config(spec)
    return Decoder(code, channel, spec)
