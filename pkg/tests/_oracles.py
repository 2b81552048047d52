"""Brute-force reference computations shared by several test modules."""
from __future__ import annotations

import itertools

import numpy as np


def random_tree_checks(rng: np.random.Generator, n_bits: int) -> np.ndarray:
    """Parity-check matrix whose Tanner graph is a random tree.

    Nodes are added one at a time, each joined by a single edge to an
    existing node of the other type, so no cycle can form.
    """
    n_checks = int(rng.integers(1, n_bits))
    edges = [(0, 0)]  # (check, bit)
    have_b, have_c = 1, 1
    order = ["b"] * (n_bits - 1) + ["c"] * (n_checks - 1)
    rng.shuffle(order)
    for kind in order:
        if kind == "b":
            edges.append((int(rng.integers(have_c)), have_b))
            have_b += 1
        else:
            edges.append((have_c, int(rng.integers(have_b))))
            have_c += 1
    h = np.zeros((n_checks, n_bits), dtype=np.uint8)
    for c, b in edges:
        h[c, b] = 1
    return h


def all_words(n: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)


def exact_bit_marginals(h: np.ndarray, w: np.ndarray, flip: np.ndarray) -> np.ndarray:
    """``P(e_i = 1 | H e = w)`` for independent bits with flip probabilities ``flip``."""
    words = all_words(h.shape[1])
    ok = np.all((words.astype(np.int64) @ h.T.astype(np.int64)) % 2 == w, axis=1)
    words = words[ok]
    weight = np.prod(np.where(words == 1, flip, 1.0 - flip), axis=1)
    return (weight[:, None] * words).sum(axis=0) / weight.sum()


def symplectic_span(rows: np.ndarray) -> np.ndarray:
    """Every GF(2) combination of ``rows`` (duplicates kept if rows are dependent)."""
    coeffs = all_words(rows.shape[0])
    return (coeffs.astype(np.int64) @ rows.astype(np.int64) % 2).astype(np.uint8)
