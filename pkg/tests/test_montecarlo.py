from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qldgm import channels, codes, gf2
from qldgm import montecarlo as mc
from qldgm.degeneracy import ErrorClass, classify
from qldgm.montecarlo import PointStats, StopRule


@pytest.fixture(scope="module")
def css100():
    return codes.build_code(codes.degeneracy_study_spec(100, 0.25), seed=5)


def test_required_rounds():
    assert mc.required_rounds(1e-3) == 100000
    assert mc.required_rounds(1.0) == 100
    assert mc.required_rounds(0.5) == 200
    for bad in (0.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            mc.required_rounds(bad)


def test_qber_of():
    assert mc.qber_of("XYZ", "XYZ") == 0
    assert mc.qber_of("XYZ", "III") == 3
    assert mc.qber_of("XYZ", "XYI") == 1
    assert mc.qber_of("XZ", "YZ") == 1
    with pytest.raises(ValueError):
        mc.qber_of("XY", "XYZ")


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule("forever", 10)
    with pytest.raises(ValueError):
        StopRule("fixed_trials", 0)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=200))
def test_ledger_identity(outcomes):
    s = PointStats(n_qubits=10)
    o = np.array(outcomes)
    s.add(o, (o > 0).astype(int), np.ones_like(o))
    s.check_ledger()
    assert s.wer_log <= s.wer_phys
    if s.phys_word_errors:
        assert sum(s.ratios) == pytest.approx(1.0)
    assert 0 <= s.qber <= 1


def test_ci_needs_100_events():
    s = PointStats(trials=1000, phys_word_errors=99, e1=99, logical_word_errors=99)
    assert all(math.isnan(v) for v in s.ci)
    s = PointStats(trials=1000, phys_word_errors=100, e1=100, logical_word_errors=100)
    assert s.ci == pytest.approx((0.08, 0.125))


def test_noiseless_channel(css100):
    s = mc.run_point(css100, channels.depolarizing(0.0), {"decoder": "css"}, StopRule("fixed_trials", 300), 1)
    assert s.trials == 300
    assert s.phys_word_errors == s.qubit_errors == s.e1 == s.e2 == s.e3 == 0
    with pytest.raises(ValueError):
        mc.run_point(css100, channels.depolarizing(0.0), {"decoder": "css"}, StopRule("error_events", 5), 1)


def test_error_events_stop_exactly(css100):
    s = mc.run_point(css100, channels.depolarizing(0.08), {"decoder": "css"}, StopRule("error_events", 37), 4)
    assert s.phys_word_errors == 37
    s.check_ledger()


def test_error_events_respects_max_trials(css100):
    s = mc.run_point(css100, channels.depolarizing(0.001), {"decoder": "css"},
                     StopRule("error_events", 1000, max_trials=250), 4)
    assert s.trials == 250 and s.phys_word_errors < 1000


def test_sample_chunk_is_chunking_independent():
    ch = channels.PauliChannelParams(0.1, 0.05, 0.2)
    whole = mc.sample_chunk(ch, 20, 7, 0, 0, 50)
    parts = np.concatenate([mc.sample_chunk(ch, 20, 7, 0, 0, 13), mc.sample_chunk(ch, 20, 7, 0, 13, 37)])
    assert np.array_equal(whole, parts)
    assert not np.array_equal(whole, mc.sample_chunk(ch, 20, 7, 1, 0, 50))


def test_runner_outcomes_match_classification(css100):
    ch = channels.depolarizing(0.08)
    runner = mc.PointRunner(css100, ch, mc.DecoderSpec(), seed=3, point=0)
    outcome, qerr, _ = runner.run(0, 80)
    e = mc.sample_chunk(ch, 100, 3, 0, 0, 80)
    dec = runner.decoder
    names = {ErrorClass.SUCCESS: mc.OUTCOME_SUCCESS, ErrorClass.DIFFERENT_SYNDROME_E1: mc.OUTCOME_E1,
             ErrorClass.IDENTICAL_SYNDROME_E2: mc.OUTCOME_E2, ErrorClass.DEGENERATE_E3: mc.OUTCOME_E3}
    for i in range(80):
        res = dec.decode(gf2.syndrome(css100.qpcm, e[i]))
        assert names[classify(e[i], res.e_hat_bits, css100.qpcm)] == outcome[i]
        assert mc.qber_of(e[i], res.e_hat_bits) == qerr[i]


def test_workers_do_not_change_results(css100):
    # Spans several chunks and ends mid-chunk.
    stop = StopRule("error_events", 8)
    a = mc.run_point(css100, channels.depolarizing(0.004), {"decoder": "css"}, stop, 9, workers=1)
    b = mc.run_point(css100, channels.depolarizing(0.004), {"decoder": "css"}, stop, 9, workers=3)
    assert a.trials > mc.CHUNK
    assert a == b


def test_sweep_and_csv_schema(css100):
    rows = mc.sweep(css100, {"kind": "depolarizing"}, [0.03, 0.06], {"decoder": "css"},
                    StopRule("fixed_trials", 200), seed=2)
    assert [r.point for r in rows] == [0, 1]
    text = mc.csv_text(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == mc.CSV_COLUMNS
    assert len(parsed) == 3
    rec = dict(zip(parsed[0], parsed[1]))
    assert rec["wall_time"] == ""
    assert rec["trials"] == "200"
    assert float(rec["p"]) == 0.03
    assert mc.csv_text(rows) == text
    assert mc.csv_text(rows, timing_in_csv=True) != text
    assert isinstance(mc.monotone_flags(rows), list)
    with pytest.raises(ValueError):
        mc.sweep(css100, {"kind": "depolarizing"}, [], {"decoder": "css"}, StopRule(), 0)


def test_monotone_flags():
    def row(i, p, errs):
        return mc.SweepRow(i, p, channels.depolarizing(p), PointStats(trials=100, phys_word_errors=errs), 0)
    assert mc.monotone_flags([row(0, 0.1, 5), row(1, 0.2, 3), row(2, 0.3, 9)]) == [1]


def test_non_batch_decoder_path(css100):
    s = mc.run_point(css100, channels.depolarizing(0.06), {"decoder": "augmented", "max_iters": 40},
                     StopRule("fixed_trials", 60), 5)
    s.check_ledger()
    assert s.trials == 60


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv(mc.WORKERS_ENV, "3")
    assert mc.default_workers() == 3
    monkeypatch.setenv(mc.WORKERS_ENV, "lots")
    assert mc.default_workers() == 1
