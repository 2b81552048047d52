"""Seeded Monte Carlo evaluation of decoders.

Every trial draws its error from its own counter-based stream keyed by
``(seed, point index, trial index)``, so results do not depend on how trials
are grouped into chunks or spread over worker processes.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .channels import PauliChannelParams, channel_from_config
from .decoder import DecoderSpec, make_decoder
from .degeneracy import kernel_basis

OUTCOME_SUCCESS, OUTCOME_E1, OUTCOME_E2, OUTCOME_E3 = 0, 1, 2, 3
CHUNK = 1000
WORKERS_ENV = "QLDGM_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class StopRule:
    """``fixed_trials``: run ``target`` trials.  ``error_events``: stop at ``target``
    physical word errors (or after ``max_trials``, if given)."""

    mode: str = "fixed_trials"
    target: int = 1000
    max_trials: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("fixed_trials", "error_events"):
            raise ValueError(f"stop.mode must be fixed_trials or error_events, got {self.mode!r}")
        if not (isinstance(self.target, (int, np.integer)) and self.target >= 1):
            raise ValueError(f"stop.target must be an integer >= 1, got {self.target!r}")
        if self.max_trials is not None and self.max_trials < 1:
            raise ValueError("stop.max_trials must be positive")


@dataclass
class PointStats:
    trials: int = 0
    phys_word_errors: int = 0
    logical_word_errors: int = 0
    qubit_errors: int = 0
    e1: int = 0
    e2: int = 0
    e3: int = 0
    iterations: int = 0
    n_qubits: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def wer_phys(self) -> float:
        return self.phys_word_errors / self.trials if self.trials else 0.0

    @property
    def wer_log(self) -> float:
        return self.logical_word_errors / self.trials if self.trials else 0.0

    @property
    def qber(self) -> float:
        denom = self.trials * self.n_qubits
        return self.qubit_errors / denom if denom else 0.0

    @property
    def ratios(self) -> tuple[float, float, float]:
        t = self.phys_word_errors
        if not t:
            return (0.0, 0.0, 0.0)
        return (self.e1 / t, self.e2 / t, self.e3 / t)

    @property
    def ci(self) -> tuple[float, float]:
        """``[0.8 WER, 1.25 WER]`` once 100 physical errors were seen, else NaN."""
        if self.phys_word_errors < 100:
            return (math.nan, math.nan)
        return (0.8 * self.wer_phys, 1.25 * self.wer_phys)

    def check_ledger(self) -> None:
        if self.e1 + self.e2 + self.e3 != self.phys_word_errors:
            raise AssertionError("e1 + e2 + e3 != physical word errors")
        if self.e1 + self.e2 != self.logical_word_errors:
            raise AssertionError("e1 + e2 != logical word errors")

    def add(self, outcomes: np.ndarray, qubit_errors: np.ndarray, iterations: np.ndarray) -> None:
        self.trials += int(outcomes.size)
        counts = np.bincount(outcomes, minlength=4)
        self.e1 += int(counts[OUTCOME_E1])
        self.e2 += int(counts[OUTCOME_E2])
        self.e3 += int(counts[OUTCOME_E3])
        self.phys_word_errors = self.e1 + self.e2 + self.e3
        self.logical_word_errors = self.e1 + self.e2
        self.qubit_errors += int(qubit_errors.sum())
        self.iterations += int(iterations.sum())


def required_rounds(target_wer: float) -> int:
    """Trials needed to see about 100 word errors: ``ceil(100 / WER)``."""
    if not 0.0 < target_wer <= 1.0:
        raise ValueError(f"target WER must lie in (0, 1], got {target_wer}")
    return int(math.ceil(round(100.0 / target_wer, 9)))


def qber_of(e, e_hat) -> int:
    """Number of qubits on which the two operators differ."""
    from .degeneracy import _bits

    a, b = _bits(e), _bits(e_hat)
    if a.size != b.size or a.size % 2:
        raise ValueError("operators must have equal, even bit lengths")
    n = a.size // 2
    d = a ^ b
    return int(np.count_nonzero(d[:n] | d[n:]))


def trial_rng(seed: int, point: int, trial: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, stream, int(trial), int(point)]))


def sample_chunk(channel: PauliChannelParams, n: int, seed: int, point: int, start: int, count: int) -> np.ndarray:
    """Errors of trials ``start .. start + count - 1`` as a ``(count, 2n)`` bit array."""
    u = np.empty((count, n))
    for i in range(count):
        u[i] = trial_rng(seed, point, start + i).random(n)
    a = channel.px
    b = a + channel.py
    c = b + channel.pz
    out = np.empty((count, 2 * n), dtype=np.uint8)
    out[:, :n] = u < b
    out[:, n:] = (u >= a) & (u < c)
    return out


class PointRunner:
    """Everything needed to run trials of one (code, channel, decoder) point."""

    def __init__(self, code, channel: PauliChannelParams, spec: DecoderSpec, seed: int, point: int):
        self.code = code
        self.channel = channel
        self.seed = int(seed)
        self.point = int(point)
        self.n = code.n_qubits
        self.decoder = make_decoder(code, channel, spec)
        self.smat_t = code.syndrome_matrix.T.tocsr().astype(np.int32)
        self._kb = None

    @property
    def kb(self):
        if self._kb is None:
            self._kb = kernel_basis(self.code.qpcm)
        return self._kb

    def syndromes(self, bits: np.ndarray) -> np.ndarray:
        return ((self.smat_t.T @ bits.T.astype(np.int32)).T & 1).astype(np.uint8)

    def run(self, start: int, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-trial outcome codes, erroneous-qubit counts and iteration counts."""
        n = self.n
        e = sample_chunk(self.channel, n, self.seed, self.point, start, count)
        w = self.syndromes(e)
        dec = self.decoder
        if dec.batchable:
            e_hat, conv, iters = dec.decode_batch(w)
        else:
            e_hat = np.empty_like(e)
            conv = np.empty(count, dtype=bool)
            iters = np.empty(count, dtype=np.int64)
            for i in range(count):
                res = dec.decode(w[i], trial_rng(self.seed, self.point, start + i, stream=1))
                e_hat[i], conv[i], iters[i] = res.e_hat_bits, res.converged, res.iterations
        diff = e ^ e_hat
        qerr = np.count_nonzero(diff[:, :n] | diff[:, n:], axis=1)
        outcome = np.zeros(count, dtype=np.int64)
        fail = np.flatnonzero(qerr > 0)
        if fail.size:
            w_hat = self.syndromes(e_hat[fail])
            e1 = (~conv[fail]) | np.any(w_hat != w[fail], axis=1)
            outcome[fail[e1]] = OUTCOME_E1
            rest = fail[~e1]
            if rest.size:
                degenerate = self.kb.annihilates(diff[rest])
                outcome[rest] = np.where(degenerate, OUTCOME_E3, OUTCOME_E2)
        return outcome, qerr, iters


_WORKER: dict = {}


def _worker_init(code, channel, spec, seed, point):
    _WORKER["runner"] = PointRunner(code, channel, spec, seed, point)


def _worker_run(start: int, count: int):
    return _WORKER["runner"].run(start, count)


def _chunks(total: Optional[int]):
    start = 0
    while total is None or start < total:
        count = CHUNK if total is None else min(CHUNK, total - start)
        yield start, count
        start += count


def run_point(code, channel: PauliChannelParams, decoder_cfg, stop: StopRule, seed: int,
              point: int = 0, workers: int = 1) -> PointStats:
    """Run trials until the stop rule is met and return the accumulated statistics.

    With ``error_events`` the run ends at exactly the trial that brings the
    physical word-error count to the target.  Chunks are merged in trial
    order, so the result is the same for any ``workers``.
    """
    spec = decoder_cfg if isinstance(decoder_cfg, DecoderSpec) else DecoderSpec.from_config(decoder_cfg)
    stats = PointStats(n_qubits=code.n_qubits)
    t0 = time.perf_counter()
    if stop.mode == "fixed_trials":
        total = stop.target
    else:
        total = stop.max_trials
    if channel.p == 0.0 and stop.mode == "error_events" and total is None:
        raise ValueError("error_events stopping needs max_trials when the channel is noiseless")

    def consume(result) -> bool:
        outcome, qerr, iters = result
        if stop.mode == "error_events":
            need = stop.target - stats.phys_word_errors
            cum = np.cumsum(outcome != OUTCOME_SUCCESS)
            if cum.size and cum[-1] >= need:
                cut = int(np.searchsorted(cum, need)) + 1
                stats.add(outcome[:cut], qerr[:cut], iters[:cut])
                return True
        stats.add(outcome, qerr, iters)
        return False

    if workers <= 1:
        runner = PointRunner(code, channel, spec, seed, point)
        for start, count in _chunks(total):
            if consume(runner.run(start, count)):
                break
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(code, channel, spec, seed, point)) as pool:
            gen = _chunks(total)
            done = False
            while not done:
                wave = [c for _, c in zip(range(workers), gen)]
                if not wave:
                    break
                futures = [pool.submit(_worker_run, s, c) for s, c in wave]
                for fut in futures:
                    if done:
                        fut.cancel()
                        continue
                    done = consume(fut.result())
    stats.wall_time = time.perf_counter() - t0
    stats.check_ledger()
    return stats


@dataclass
class SweepRow:
    point: int
    p: float
    channel: PauliChannelParams
    stats: PointStats
    seed: int


def sweep(code, channel_cfg: dict, p_values: Sequence[float], decoder_cfg, stop: StopRule, seed: int,
          workers: int = 1) -> list[SweepRow]:
    """One :func:`run_point` per grid value; point ``i`` uses stream index ``i``."""
    p_values = list(p_values)
    if not p_values:
        raise ValueError("p grid is empty")
    rows = []
    for i, p in enumerate(p_values):
        ch = channel_from_config(channel_cfg, p)
        stats = run_point(code, ch, decoder_cfg, stop, seed, point=i, workers=workers)
        rows.append(SweepRow(i, float(p), ch, stats, int(seed)))
    return rows


def monotone_flags(rows: Sequence[SweepRow]) -> list[int]:
    """Indices where the physical WER drops as ``p`` grows (a warning, not an error)."""
    order = sorted(rows, key=lambda r: r.p)
    return [order[i].point for i in range(1, len(order)) if order[i].stats.wer_phys < order[i - 1].stats.wer_phys]


CSV_COLUMNS = ["point", "p", "px", "py", "pz", "trials", "phys_word_errors", "logical_word_errors",
               "qubit_errors", "wer_phys", "wer_log", "qber", "e1", "e2", "e3", "e1_ratio", "e2_ratio",
               "e3_ratio", "ci_low", "ci_high", "mean_iterations", "seed", "wall_time"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.6g}"


def csv_text(rows: Iterable[SweepRow], timing_in_csv: bool = False) -> str:
    """CSV with a fixed column set; ``wall_time`` stays empty unless requested,
    so reruns with the same seed produce identical files."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in rows:
        s = r.stats
        r1, r2, r3 = s.ratios
        lo, hi = s.ci
        wr.writerow([_fmt(x) for x in (
            r.point, r.p, r.channel.px, r.channel.py, r.channel.pz, s.trials, s.phys_word_errors,
            s.logical_word_errors, s.qubit_errors, s.wer_phys, s.wer_log, s.qber, s.e1, s.e2, s.e3,
            r1, r2, r3, lo, hi, s.iterations / s.trials if s.trials else 0.0, r.seed,
            s.wall_time if timing_in_csv else None)])
    return buf.getvalue()


def write_csv(rows: Iterable[SweepRow], path, timing_in_csv: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(rows, timing_in_csv))
