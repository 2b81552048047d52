from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from qldgm import codes
from qldgm.cli import main


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


THREE_QUBIT = {"code": {"type": "three_qubit"}, "channel": {"kind": "depolarizing"},
               "decoder": {"decoder": "qmld"}, "p": [0.05], "stop": {"mode": "fixed_trials", "target": 100},
               "seed": 1}


@pytest.fixture
def runner():
    return CliRunner()


def test_run_minimal(tmp_path, runner):
    out = tmp_path / "res.csv"
    r = runner.invoke(main, ["run", "--config", _write(tmp_path, THREE_QUBIT), "--out", str(out)])
    assert r.exit_code == 0, r.output
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    manifest = json.loads((tmp_path / "res.csv.manifest.json").read_text())
    assert manifest["seed"] == 1
    assert manifest["code_fingerprint"] == codes.three_qubit_code().fingerprint()
    assert manifest["config"]["decoder"]["decoder"] == "qmld"


def test_rerun_is_byte_identical(tmp_path, runner):
    cfg = _write(tmp_path, THREE_QUBIT)
    outs = []
    for i, workers in enumerate(("1", "2")):
        path = tmp_path / f"r{i}.csv"
        r = runner.invoke(main, ["run", "--config", cfg, "--out", str(path), "--workers", workers])
        assert r.exit_code == 0, r.output
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_manifest_config_reproduces_run(tmp_path, runner):
    out = tmp_path / "a.csv"
    runner.invoke(main, ["run", "--config", _write(tmp_path, THREE_QUBIT), "--out", str(out)])
    resolved = json.loads((tmp_path / "a.csv.manifest.json").read_text())["config"]
    resolved["output"] = str(tmp_path / "b.csv")
    r = runner.invoke(main, ["run", "--config", _write(tmp_path, resolved, "resolved.json")])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "b.csv").read_bytes() == out.read_bytes()


def test_odd_q_exits_2(tmp_path, runner):
    cfg = dict(THREE_QUBIT, code=dict(codes.degeneracy_study_spec(100, 0.25), type="noncss", q=3, method=1))
    r = runner.invoke(main, ["run", "--config", _write(tmp_path, cfg)])
    assert r.exit_code == 2
    assert "code.q" in r.output


@pytest.mark.parametrize("patch,field", [({"channel": {"kind": "erasure"}}, "channel.kind"),
                                         ({"decoder": {"decoder": "osd"}}, "decoder"),
                                         ({"p": [1.5]}, "p"),
                                         ({"seed": -1}, "seed"),
                                         ({"stop": {"mode": "never"}}, "stop")])
def test_validation_errors_name_field(tmp_path, runner, patch, field):
    r = runner.invoke(main, ["run", "--config", _write(tmp_path, {**THREE_QUBIT, **patch})])
    assert r.exit_code == 2
    assert f"error: {field}" in r.output


def test_unreadable_config_exits_2(tmp_path, runner):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert runner.invoke(main, ["run", "--config", str(bad)]).exit_code == 2
    assert runner.invoke(main, ["run", "--config", str(tmp_path / "missing.json")]).exit_code == 2


def test_construction_failure_exits_3(tmp_path, runner):
    cfg = dict(THREE_QUBIT, code={"type": "css", "N": 20, "ldgm": 3, "m": 8, "t": 8, "y": 3})
    r = runner.invoke(main, ["run", "--config", _write(tmp_path, cfg)])
    assert r.exit_code == 3


def test_inspect_reports(tmp_path, runner):
    cfg = _write(tmp_path, {"code": codes.degeneracy_study_spec(100, 0.25), "seed": 3})
    r = runner.invoke(main, ["inspect", "--config", cfg, "--p", "0.0825", "--json"])
    assert r.exit_code == 0, r.output
    rep = json.loads(r.output)
    assert rep["N"] == 100 and rep["k"] == 24
    assert rep["symplectic_criterion"] is True
    assert "hashing_distance_db" in rep
    text = runner.invoke(main, ["inspect", "--config", cfg]).output
    assert "rate = 0.240000" in text and "symplectic criterion: pass" in text


def test_inspect_q0_method2_matches_base(tmp_path, runner):
    base = codes.degeneracy_study_spec(100, 0.25)
    a = runner.invoke(main, ["inspect", "--json", "--config", _write(tmp_path, {"code": base, "seed": 4}, "a.json")])
    nc = dict(base, type="noncss", q=0, method=2)
    b = runner.invoke(main, ["inspect", "--json", "--config", _write(tmp_path, {"code": nc, "seed": 4}, "b.json")])
    assert a.exit_code == b.exit_code == 0
    assert a.output == b.output


def test_export_matrices(tmp_path, runner):
    cfg = _write(tmp_path, {"code": codes.degeneracy_study_spec(100, 0.25), "seed": 3})
    out = tmp_path / "mats"
    r = runner.invoke(main, ["export-matrices", "--config", cfg, "--out", str(out)])
    assert r.exit_code == 0, r.output
    from qldgm import gf2
    code = codes.build_code(codes.degeneracy_study_spec(100, 0.25), 3)
    with open(out / "qpcm.alist") as fh:
        assert (gf2.read_alist(fh) == code.qpcm.stacked).all()
    assert (out / "p.txt").exists() and (out / "md.alist").exists()


@pytest.mark.parametrize("e,expected", [("XYZ", "E3"), ("IIZ", "E2"), ("XII", "E1"), ("III", "success")])
def test_classify(tmp_path, runner, e, expected):
    cfg = _write(tmp_path, {"code": {"type": "three_qubit"}})
    r = runner.invoke(main, ["classify", "--config", cfg, "--e", e, "--e-hat", "III"])
    assert r.exit_code == 0
    assert r.output.strip() == expected


def test_classify_bad_pauli(tmp_path, runner):
    cfg = _write(tmp_path, {"code": {"type": "three_qubit"}})
    assert runner.invoke(main, ["classify", "--config", cfg, "--e", "XQZ", "--e-hat", "III"]).exit_code == 2
