"""Acceptance criteria 1-8.

Run with ``pytest tests/test_acceptance.py -v -s``; the terminal summary
ends with one ``criterion N: PASS/FAIL`` line per criterion.  Criterion 7
is marked ``slow`` (tens of minutes on one core) but is not deselected by
default.
"""
from __future__ import annotations

import json
import math
import sys
import time

import numpy as np
import pytest
from click.testing import CliRunner

from _oracles import exact_bit_marginals, random_tree_checks, symplectic_span
from qldgm import channels, codes, decoder, gf2
from qldgm import montecarlo as mc
from qldgm.cli import main as cli_main
from qldgm.codes import ConstructionError
from qldgm.decoder import PriorTable, SpaConfig
from qldgm.degeneracy import ErrorClass, classify, is_degenerate_oracle, kernel_basis
from qldgm.graph import from_parity_checks


def _report(num: int, text: str) -> None:
    print(f"[criterion {num}] {text}")


def _trunc4(x: float) -> float:
    return math.floor(x * 1e4) / 1e4


# --- 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_criterion_1_closed_forms():
    t0 = time.perf_counter()
    p_star = channels.noise_limit(0.25)
    d1 = channels.hashing_distance(0.127, 0.0825)
    d2 = channels.hashing_distance(0.127, 0.0865)
    grid = np.round(np.arange(0.01, 0.1801, 0.01), 2)
    gap = max(abs(channels.asymmetric_hashing_bound(p, 1.0) - channels.hashing_bound(p)) for p in grid)
    elapsed = time.perf_counter() - t0
    _report(1, f"p*={p_star:.6f} d(0.0825)={d1:.4f} dB d(0.0865)={d2:.4f} dB gap={gap:.1e} t={elapsed:.3f}s")
    assert abs(p_star - 0.127) <= 0.001
    assert abs(d1 - 1.873) <= 0.01
    assert abs(d2 - 1.668) <= 0.01
    assert gap <= 1e-12
    assert elapsed < 1.0


# --- 2 ------------------------------------------------------------------------

LARGE_CSS = {"N": 19014, "ldgm": [[8, 8], [3, 60]], "m": 7131, "t": 4361, "y": 3}


def _random_spec(rng: np.random.Generator) -> dict:
    """A feasible random css / noncss / asymmetric spec with N <= 2000."""
    big = rng.random() < 0.01
    n = 1000 if big else int(rng.integers(30, 151))
    deg = int(rng.integers(3, 6))

    def side():
        # Per-side rows for a CSS rate in [0.05, 0.6]: R = 1 - m / n.
        m = int(min(max(round(n * (1 - rng.uniform(0.05, 0.6))), 4), n))
        x_target = rng.uniform(3.0 * n / m + 0.5, 3.0 * n / m + 6.0)
        # (m - t) x + t = 3 n  =>  t = (x m - 3 n) / (x - 1)
        t = int(round((x_target * m - 3 * n) / (x_target - 1)))
        t = int(min(max(t, 0), m - 1, n))
        return {"m": m, "t": t, "y": 3}

    kind = rng.choice(["css", "noncss", "asymmetric"])
    if kind == "asymmetric":
        return {"type": "asymmetric", "N": 2 * n, "ldgm": deg, "x_side": side(), "z_side": side()}
    s = side()
    spec = {"type": "css", "N": 2 * n, "ldgm": deg, **s}
    if kind == "noncss":
        q = 2 * int(rng.integers(0, max(1, s["t"] // 4) + 1))
        spec.update(type="noncss", q=q, method=int(rng.integers(1, 3)))
    return spec


@pytest.mark.criterion(2)
def test_criterion_2_construction():
    t0 = time.perf_counter()
    base = codes.build_code(dict(LARGE_CSS, type="css"), seed=0)
    rates = [base.rate]
    for q in (100, 750):
        nc = codes.assemble_noncss(base, q, 2, np.random.default_rng(q))
        assert nc.satisfies_criterion() and nc.is_full_rank()
        rates.append(nc.rate)
    assert base.is_full_rank()
    xs = [codes.solve_doping(7131, 9507, 3, 4361), codes.solve_doping(7131, 9507, 3, 5000),
          codes.solve_doping(12262, 9507, 3, 9507), codes.solve_doping(11500, 9507, 3, 9507)]

    rng = np.random.default_rng(20240601)
    built = criterion_ok = infeasible = 0
    kinds = {"css": 0, "noncss": 0, "asymmetric": 0}
    while built < 1000:
        spec = _random_spec(rng)
        try:
            code = codes.build_code(spec, seed=int(rng.integers(2**31)))
        except ConstructionError:
            infeasible += 1
            continue
        built += 1
        kinds[spec["type"]] += 1
        criterion_ok += bool(gf2.check_symplectic_criterion(code.hx_sparse, code.hz_sparse))
        assert code.n_qubits <= 2000
    elapsed = time.perf_counter() - t0
    _report(2, f"rates={[round(r, 5) for r in rates]} x={[round(x, 3) for x in xs]} "
               f"criterion {criterion_ok}/{built} kinds={kinds} rejected_specs={infeasible} t={elapsed:.1f}s")
    assert [_trunc4(r) for r in rates] == [0.2499, 0.2551, 0.2893]
    for x, ref in zip(xs, (8.72, 11.04, 6.9, 9.54)):
        assert abs(x - ref) <= 0.01
    assert criterion_ok == built == 1000
    assert elapsed < 60.0


# --- 3 ------------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_criterion_3_three_qubit_golden():
    t0 = time.perf_counter()
    h = codes.three_qubit_code().qpcm
    stab = sorted(str(gf2.SymplecticVec.from_bits(v)) for v in symplectic_span(h.stacked))
    assert stab == ["III", "XYZ", "YXI", "ZZZ"]
    assert str(gf2.star("XYZ", "YXI")) == "ZZZ"
    assert str(gf2.star(gf2.star("YII", "YIY"), "XYZ")) == "XYX"
    assert gf2.syndrome(h, "ZII").tolist() == [1, 1]
    ch = channels.PauliChannelParams(0.26, 0.28, 0.15)
    q = decoder.qmld_exhaustive(h, [0, 0], ch)
    d = decoder.dqmld_exhaustive(h, [0, 0], ch)
    assert str(q) == "III"
    # d must lie in the coset YIY * S.
    assert classify(d, "YIY", h) in (ErrorClass.SUCCESS, ErrorClass.DEGENERATE_E3)
    classes = [classify(e, "III", h).value for e in ("XYZ", "IIZ", "XII")]
    assert classes == ["E3", "E2", "E1"]
    elapsed = time.perf_counter() - t0
    _report(3, f"S={stab} QMLD={q} DQMLD={d} classes={classes} t={elapsed:.3f}s")
    assert elapsed < 1.0


# --- 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_criterion_4_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    agree = total = e3 = e2 = 0
    for _ in range(200):
        n = int(rng.integers(2, 13))
        h = codes.random_stabilizer_code(n, int(rng.integers(1, n + 1)), rng)
        kb = kernel_basis(h)
        centralizer = gf2.nullspace_basis(np.concatenate([h.hz, h.hx], axis=1))
        for _ in range(5):
            e = rng.integers(0, 2, 2 * n).astype(np.uint8)
            if rng.random() < 0.5:
                s = gf2.matmul(rng.integers(0, 2, h.n_checks)[None, :], h.stacked)[0]
            else:
                s = gf2.matmul(rng.integers(0, 2, centralizer.shape[0])[None, :], centralizer)[0]
            e_hat = e ^ s
            if not s.any():
                continue
            cls = classify(e, e_hat, h, kb)
            oracle = is_degenerate_oracle(e, e_hat, h)
            total += 1
            e3 += cls is ErrorClass.DEGENERATE_E3
            e2 += cls is ErrorClass.IDENTICAL_SYNDROME_E2
            agree += (cls is ErrorClass.DEGENERATE_E3) == oracle and cls is not ErrorClass.DIFFERENT_SYNDROME_E1
    elapsed = time.perf_counter() - t0
    _report(4, f"agreement {agree}/{total} (E3={e3}, E2={e2}) t={elapsed:.1f}s")
    assert agree == total and e3 > 0 and e2 > 0
    assert elapsed < 30.0


# --- 5 ------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_criterion_5_spa_tree_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 13))
        h = random_tree_checks(rng, n)
        flip = rng.uniform(0.02, 0.5, n)
        e = (rng.random(n) < flip).astype(np.uint8)
        w = (h.astype(np.int64) @ e % 2).astype(np.uint8)
        cfg = SpaConfig(max_iters=2 * (n + h.shape[0]), early_stop=False)
        res = decoder.spa_decode(from_parity_checks(h), w, PriorTable(flip), cfg)
        p1 = 1.0 / (1.0 + np.exp(res.posterior))
        worst = max(worst, float(np.max(np.abs(p1 - exact_bit_marginals(h, w, flip)))))
    elapsed = time.perf_counter() - t0
    _report(5, f"max |SPA - exact| = {worst:.2e} over 50 trees t={elapsed:.1f}s")
    assert worst < 1e-9
    assert elapsed < 30.0


# --- 6 ------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_criterion_6_ledgers_and_ordering():
    t0 = time.perf_counter()
    lines = []
    e3_r01 = et_r01 = 0
    for rate in (0.1, 0.2, 0.25, 0.5):
        code = codes.build_code(codes.degeneracy_study_spec(100, rate), seed=1)
        for p in (0.01, 0.02, 0.03):
            s = mc.run_point(code, channels.depolarizing(p), {"decoder": "css"}, mc.StopRule("error_events", 300),
                             seed=7, workers=mc.default_workers())
            s.check_ledger()
            assert s.e1 + s.e2 + s.e3 == s.phys_word_errors == 300
            assert s.wer_log <= s.wer_phys
            lines.append(f"R={rate} p={p}: trials={s.trials} e1/e2/e3={s.e1}/{s.e2}/{s.e3} "
                         f"E3/E_T={s.ratios[2]:.3f}")
            if rate == 0.1:
                e3_r01 += s.e3
                et_r01 += s.phys_word_errors
    elapsed = time.perf_counter() - t0
    ratio = e3_r01 / et_r01
    for ln in lines:
        _report(6, ln)
    _report(6, f"R=0.1 pooled E3/E_T = {ratio:.3f} t={elapsed:.1f}s")
    assert ratio > 0.05
    assert elapsed < 600.0


# --- 7 ------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(7)
def test_criterion_7_e3_ratio_n500():
    t0 = time.perf_counter()
    code = codes.build_code(codes.degeneracy_study_spec(500, 0.1), seed=1)
    s = mc.run_point(code, channels.depolarizing(0.005), {"decoder": "css"}, mc.StopRule("error_events", 1000),
                     seed=2024, workers=mc.default_workers())
    s.check_ledger()
    ratio = s.ratios[2]
    elapsed = time.perf_counter() - t0
    _report(7, f"trials={s.trials} e1/e2/e3={s.e1}/{s.e2}/{s.e3} E3/E_T={ratio:.3f} "
               f"(target 0.198 +- 0.04) t={elapsed / 60:.1f} min")
    assert abs(ratio - 0.198) <= 0.04


# --- 8 ------------------------------------------------------------------------

DETERMINISM_CONFIGS = {
    "three_qubit_qmld": {"code": {"type": "three_qubit"}, "decoder": {"decoder": "qmld"},
                         "p": [0.02, 0.1], "stop": {"mode": "fixed_trials", "target": 2500}},
    "css_events": {"code": codes.degeneracy_study_spec(100, 0.25), "decoder": {"decoder": "css"},
                   "p": [0.01, 0.03], "stop": {"mode": "error_events", "target": 40}},
    "noncss_augmented": {"code": dict(codes.degeneracy_study_spec(100, 0.5), type="noncss", q=4, method=2),
                         "decoder": {"decoder": "augmented", "max_iters": 30},
                         "p": [0.02], "stop": {"mode": "fixed_trials", "target": 300}},
    "asymmetric_channel": {"code": codes.degeneracy_study_spec(100, 0.1),
                           "channel": {"kind": "asymmetric", "alpha": 10},
                           "decoder": {"decoder": "spa"}, "p": [0.03],
                           "stop": {"mode": "fixed_trials", "target": 1500}},
}


@pytest.mark.criterion(8)
def test_criterion_8_determinism(tmp_path):
    runner = CliRunner()
    for name, cfg in DETERMINISM_CONFIGS.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(dict(cfg, seed=11)))
        outs = []
        for workers in (1, 8, 1):
            out = tmp_path / f"{name}-{workers}-{len(outs)}.csv"
            r = runner.invoke(cli_main, ["run", "--config", str(path), "--workers", str(workers), "--out", str(out)])
            assert r.exit_code == 0, r.output
            outs.append(out.read_bytes())
        same = outs[0] == outs[1] == outs[2]
        _report(8, f"{name}: workers 1 vs 8 vs 1 byte-identical = {same}")
        assert same


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
