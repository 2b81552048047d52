"""Pauli channel models, error sampling and hashing-bound benchmarks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .gf2 import SymplecticVec

LOG2_3 = math.log2(3.0)


def _xlog2x(v: float) -> float:
    # 0 log 0 is taken as 0.
    return v * math.log2(v) if v > 0.0 else 0.0


@dataclass(frozen=True)
class PauliChannelParams:
    """Independent per-qubit Pauli channel with X, Y and Z probabilities."""

    px: float
    py: float
    pz: float

    def __post_init__(self):
        for name in ("px", "py", "pz"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.px + self.py + self.pz > 1.0 + 1e-12:
            raise ValueError("px + py + pz exceeds 1")

    @property
    def p(self) -> float:
        """Total probability that a qubit suffers any error."""
        return self.px + self.py + self.pz

    @property
    def p_identity(self) -> float:
        return max(0.0, 1.0 - self.p)

    @property
    def fx(self) -> float:
        """Marginal probability of a bit flip in the x half: ``px + py``."""
        return self.px + self.py

    @property
    def fz(self) -> float:
        """Marginal probability of a flip in the z half: ``pz + py``."""
        return self.pz + self.py

    def probabilities(self) -> np.ndarray:
        """``[P(I), P(X), P(Y), P(Z)]``."""
        return np.array([self.p_identity, self.px, self.py, self.pz])

    def word_probability(self, e: SymplecticVec) -> float:
        """Probability of the exact operator ``e`` under i.i.d. noise."""
        probs = self.probabilities()
        # Index per qubit: I=0, X=1, Y=2, Z=3.
        idx = np.where(e.x == 1, np.where(e.z == 1, 2, 1), np.where(e.z == 1, 3, 0))
        return float(np.prod(probs[idx]))


@dataclass(frozen=True)
class AsymmetrySpec:
    """Gross error probability ``p`` split with ``pz / px = alpha``."""

    p: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not self.alpha >= 1.0:
            raise ValueError(f"alpha must be at least 1, got {self.alpha}")


@dataclass(frozen=True)
class RelaxationSpec:
    """Relaxation time, dephasing time and gate duration in common units."""

    t1: float
    t2: float
    t: float

    def __post_init__(self):
        for name in ("t1", "t2", "t"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def _check_p(p: float, upper: float = 1.0) -> None:
    if not 0.0 <= p <= upper:
        raise ValueError(f"probability must lie in [0, {upper}], got {p}")


def depolarizing(p: float) -> PauliChannelParams:
    _check_p(p)
    return PauliChannelParams(p / 3.0, p / 3.0, p / 3.0)


def asymmetric(spec: AsymmetrySpec) -> PauliChannelParams:
    a = spec.alpha
    px = spec.p / (a + 2.0)
    return PauliChannelParams(px, px, a * spec.p / (a + 2.0))


@dataclass(frozen=True)
class RelaxationChannel:
    params: PauliChannelParams
    alpha: float
    alpha_short_gate: float


def from_relaxation(spec: RelaxationSpec) -> RelaxationChannel:
    """Pauli-twirled amplitude and phase damping for a gate of duration ``t``.

    ``alpha_short_gate`` is the ``t << t1`` limit ``2 t1 / t2 - 1``.
    """
    px = (1.0 - math.exp(-spec.t / spec.t1)) / 4.0
    pz = 0.5 - px - math.exp(-spec.t / spec.t2) / 2.0
    if pz < 0.0:
        raise ValueError("t2 > 2 t1 gives a negative Z probability")
    alpha = pz / px if px > 0 else math.inf
    return RelaxationChannel(PauliChannelParams(px, px, pz), alpha, 2.0 * spec.t1 / spec.t2 - 1.0)


def iid_xz_marginal(p: float) -> float:
    """Flip probability of each half when X and Z flips are treated as independent."""
    _check_p(p)
    return 2.0 * p / 3.0


def iid_xz(f_m: float) -> PauliChannelParams:
    """Independent X and Z flips, each with probability ``f_m``."""
    _check_p(f_m)
    return PauliChannelParams(f_m * (1.0 - f_m), f_m * f_m, f_m * (1.0 - f_m))


def sample_error_bits(params: PauliChannelParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one error as a length-``2n`` bit array ``[x | z]``.

    One uniform per qubit is compared with the cumulative thresholds
    ``X < px <= Y < px + py <= Z < p``.
    """
    u = rng.random(n)
    a = params.px
    b = a + params.py
    c = b + params.pz
    out = np.empty(2 * n, dtype=np.uint8)
    out[:n] = u < b
    out[n:] = (u >= a) & (u < c)
    return out


def sample_error(params: PauliChannelParams, n: int, rng: np.random.Generator) -> SymplecticVec:
    return SymplecticVec.from_bits(sample_error_bits(params, n, rng))


def hashing_bound(p: float) -> float:
    """``1 - H2(p) - p log2 3`` for the depolarizing channel (may be negative)."""
    _check_p(p)
    return 1.0 + _xlog2x(p) + _xlog2x(1.0 - p) - p * LOG2_3


def asymmetric_hashing_bound(p: float, alpha: float) -> float:
    """Hashing bound of the channel with ``px = py = p/(a+2)`` and ``pz = a p/(a+2)``."""
    _check_p(p)
    if alpha < 1.0:
        raise ValueError(f"alpha must be at least 1, got {alpha}")
    d = alpha + 2.0
    return (1.0 + _xlog2x(1.0 - p)
            + (2.0 * p / d) * (math.log2(p / d) if p > 0 else 0.0)
            + _xlog2x(alpha * p / d))


def noise_limit(rate: float, alpha: Optional[float] = None, tol: float = 1e-6) -> float:
    """Largest ``p`` whose hashing bound still reaches ``rate``.

    Bisection on ``(1e-9, 0.5)``, where the bound decreases monotonically.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must lie in (0, 1], got {rate}")
    if rate == 1.0:
        return 0.0
    if alpha is None:
        f = lambda p: hashing_bound(p) - rate  # noqa: E731
    else:
        f = lambda p: asymmetric_hashing_bound(p, alpha) - rate  # noqa: E731
    lo, hi = 1e-9, 0.5
    if f(lo) < 0.0:
        return 0.0
    if f(hi) > 0.0:
        raise ValueError(f"no noise limit below {hi} for rate {rate}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def noise_limit_reference(rate: float, alpha: Optional[float] = None) -> float:
    """Independent root of the same equation using Brent's method."""
    if alpha is None:
        return brentq(lambda p: hashing_bound(p) - rate, 1e-12, 0.5, xtol=1e-14)
    return brentq(lambda p: asymmetric_hashing_bound(p, alpha) - rate, 1e-12, 0.5, xtol=1e-14)


def hashing_distance(p_star: float, p: float) -> float:
    """Distance to the noise limit in decibels: ``10 log10(p* / p)``."""
    if not (p_star > 0.0 and p > 0.0):
        raise ValueError("both probabilities must be positive")
    return 10.0 * math.log10(p_star / p)


def channel_from_config(cfg: dict, p: Optional[float] = None) -> PauliChannelParams:
    """Build a channel from ``{"kind": ..., ...}``; ``p`` overrides the grid value.

    Kinds: ``depolarizing`` (p), ``asymmetric`` (p, alpha), ``iid_xz``
    (f_m, taken from ``p``), ``relaxation`` (t1, t2, t; ``p`` ignored).
    """
    kind = cfg.get("kind")
    if kind == "depolarizing":
        return depolarizing(float(p if p is not None else cfg["p"]))
    if kind == "asymmetric":
        return asymmetric(AsymmetrySpec(float(p if p is not None else cfg["p"]), float(cfg["alpha"])))
    if kind == "iid_xz":
        return iid_xz(float(p if p is not None else cfg["f_m"]))
    if kind == "relaxation":
        return from_relaxation(RelaxationSpec(float(cfg["t1"]), float(cfg["t2"]), float(cfg["t"]))).params
    raise ValueError(f"channel.kind must be one of depolarizing, asymmetric, iid_xz, relaxation; got {kind!r}")
