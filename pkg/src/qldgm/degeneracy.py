"""Degeneracy-aware classification of decoding outcomes."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import gf2
from .gf2 import Qpcm, SymplecticVec


class ErrorClass(enum.Enum):
    SUCCESS = "success"
    DEGENERATE_E3 = "E3"
    IDENTICAL_SYNDROME_E2 = "E2"
    DIFFERENT_SYNDROME_E1 = "E1"


@dataclass(frozen=True, eq=False)
class KernelBasis:
    """Rows span the vectors orthogonal (plain dot product) to every stabilizer row.

    A difference ``e + e_hat`` with matching syndrome lies in the stabilizer
    exactly when it is orthogonal to all of these rows.
    """

    basis: np.ndarray
    fingerprint: str

    @property
    def n_rows(self) -> int:
        return int(self.basis.shape[0])

    def annihilates(self, diff_bits: np.ndarray) -> np.ndarray:
        """Row-wise test ``basis . d = 0`` for one vector or a stack of them."""
        d = np.atleast_2d(np.asarray(diff_bits, dtype=np.int64))
        return ~np.any((d @ self.basis.T.astype(np.int64)) & 1, axis=1)


_CACHE: dict[str, KernelBasis] = {}


def kernel_basis(h: Qpcm) -> KernelBasis:
    """Nullspace of the stacked ``[hx | hz]`` matrix, cached by content hash."""
    fp = h.fingerprint()
    kb = _CACHE.get(fp)
    if kb is not None:
        return kb
    stacked = h.stacked
    if gf2.rank(stacked) != stacked.shape[0]:
        raise ValueError("kernel basis needs a full-rank stabilizer matrix")
    kb = KernelBasis(gf2.nullspace_basis(stacked), fp)
    if len(_CACHE) > 32:
        _CACHE.clear()
    _CACHE[fp] = kb
    return kb


def _bits(v) -> np.ndarray:
    if isinstance(v, SymplecticVec):
        return v.bits
    if isinstance(v, str):
        return gf2.pauli_to_symplectic(v).bits
    return np.asarray(v, dtype=np.uint8).ravel()


def classify(e, e_hat, h: Qpcm, kb: Optional[KernelBasis] = None) -> ErrorClass:
    """Place an (error, estimate) pair in the end-to-end error taxonomy."""
    kb = kb if kb is not None else kernel_basis(h)
    a, b = _bits(e), _bits(e_hat)
    if a.size != 2 * h.n_qubits or b.size != a.size:
        raise ValueError("operator lengths do not match the code")
    if not np.array_equal(gf2.syndrome(h, a), gf2.syndrome(h, b)):
        return ErrorClass.DIFFERENT_SYNDROME_E1
    diff = a ^ b
    if not diff.any():
        return ErrorClass.SUCCESS
    if kb.annihilates(diff)[0]:
        return ErrorClass.DEGENERATE_E3
    return ErrorClass.IDENTICAL_SYNDROME_E2


def stabilizer_coefficients(e, e_hat, h: Qpcm) -> Optional[np.ndarray]:
    """Coefficients ``a`` with ``sum_v a_v S_v = e + e_hat``, or None when none exist."""
    a, b = _bits(e), _bits(e_hat)
    if not np.array_equal(gf2.syndrome(h, a), gf2.syndrome(h, b)):
        raise ValueError("the two operators have different syndromes")
    # Solve S^T a = d by elimination on the augmented system.
    return gf2.solve_augmented(h.stacked.T, a ^ b)


def is_degenerate_oracle(e, e_hat, h: Qpcm) -> bool:
    """True iff ``e + e_hat`` lies in the row space of the stabilizer matrix."""
    return stabilizer_coefficients(e, e_hat, h) is not None
