"""Command-line front end: ``qldgm run | inspect | export-matrices | classify``."""
from __future__ import annotations

import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import __version__, gf2
from .channels import channel_from_config, hashing_distance, noise_limit
from .codes import ConfigError, ConstructionError, ExplicitCode, build_code, validate_code_spec
from .decoder import DecoderSpec
from .degeneracy import classify as classify_pair
from .degeneracy import kernel_basis
from .montecarlo import StopRule, csv_text, default_workers, monotone_flags, sweep

EXIT_VALIDATION = 2
EXIT_CONSTRUCTION = 3

log = logging.getLogger("qldgm")

CHANNEL_KINDS = ("depolarizing", "asymmetric", "iid_xz", "relaxation")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    return cfg


def resolve_config(cfg: dict, seed: Optional[int] = None, workers: Optional[int] = None,
                   out: Optional[str] = None) -> dict:
    """Validate an experiment config and fill in defaults.

    Raises :class:`ConfigError` naming the first offending field.
    """
    res = dict(cfg)
    if "code" not in res or not isinstance(res["code"], dict):
        raise ConfigError("code", "required object")
    validate_code_spec(res["code"])
    channel = dict(res.get("channel") or {"kind": "depolarizing"})
    if channel.get("kind") not in CHANNEL_KINDS:
        raise ConfigError("channel.kind", f"must be one of {', '.join(CHANNEL_KINDS)}")
    if channel["kind"] == "asymmetric" and not isinstance(channel.get("alpha"), (int, float)):
        raise ConfigError("channel.alpha", "required number for the asymmetric channel")
    if channel["kind"] == "relaxation":
        for key in ("t1", "t2", "t"):
            if not isinstance(channel.get(key), (int, float)):
                raise ConfigError(f"channel.{key}", "required number for the relaxation channel")
    res["channel"] = channel
    try:
        res["decoder"] = DecoderSpec.from_config(res.get("decoder") or {}).to_config()
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg.split(":")[0] if msg.startswith("decoder.") else "decoder", msg) from exc
    stop = dict(res.get("stop") or {"mode": "fixed_trials", "target": 100})
    try:
        StopRule(**stop)
    except (TypeError, ValueError) as exc:
        raise ConfigError("stop", str(exc)) from exc
    res["stop"] = stop
    grid = res.get("p", [0.05] if channel["kind"] != "relaxation" else [None])
    if not isinstance(grid, list):
        grid = [grid]
    if not grid:
        raise ConfigError("p", "grid must not be empty")
    for v in grid:
        if v is not None and not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
            raise ConfigError("p", f"values must lie in [0, 1], got {v!r}")
    res["p"] = grid
    if seed is not None:
        res["seed"] = seed
    res.setdefault("seed", 0)
    if not (isinstance(res["seed"], int) and res["seed"] >= 0):
        raise ConfigError("seed", f"must be a non-negative integer, got {res['seed']!r}")
    if workers is not None:
        res["workers"] = workers
    res.setdefault("workers", default_workers())
    if not (isinstance(res["workers"], int) and res["workers"] >= 1):
        raise ConfigError("workers", "must be a positive integer")
    if out is not None:
        res["output"] = out
    res.setdefault("output", "results.csv")
    res["timing_in_csv"] = bool(res.get("timing_in_csv", False))
    return res


def _build(spec: dict, seed: int):
    try:
        return build_code(spec, seed)
    except ConfigError:
        raise
    except (ConstructionError, ValueError) as exc:
        _fail(EXIT_CONSTRUCTION, f"code construction failed: {exc}")


def code_report(code, p: Optional[float] = None) -> dict:
    n = code.n_qubits
    k = n - code.n_checks
    rate = code.rate
    report = {
        "N": n,
        "k": k,
        "rate": rate,
        "css": bool(code.is_css),
        "symplectic_criterion": bool(code.satisfies_criterion()),
        "degree_histograms": code.degree_histograms(),
        "fingerprint": code.fingerprint(),
    }
    if 0 < rate < 1:
        p_star = noise_limit(rate)
        report["noise_limit"] = p_star
        if p is not None:
            report["p"] = p
            report["hashing_distance_db"] = hashing_distance(p_star, p)
            report["hashing_distance_db_rounded_limit"] = hashing_distance(round(p_star, 3), p)
    rate_inc = getattr(code, "rate_increase", None)
    if rate_inc is not None and getattr(code, "method", 1) == 2 and code.q > 0:
        report["rate_increase"] = rate_inc
    return report


@click.group()
@click.version_option(__version__, prog_name="qldgm")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Build, decode and evaluate LDGM-based quantum codes."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--workers", type=int, default=None, help=f"Worker processes (default ${'QLDGM_WORKERS'} or 1).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output CSV path.")
def run(config_path, seed, workers, out):
    """Run a Monte Carlo sweep and write CSV + manifest."""
    try:
        cfg = resolve_config(load_config(config_path), seed, workers, out)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    code = _build(cfg["code"], cfg["seed"])
    stop = StopRule(**cfg["stop"])
    log.info("code built: N=%d rate=%.4f", code.n_qubits, code.rate)
    try:
        rows = sweep(code, cfg["channel"], cfg["p"], cfg["decoder"], stop, cfg["seed"], cfg["workers"])
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    out_path = Path(cfg["output"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(csv_text(rows, cfg["timing_in_csv"]))
    manifest = {
        "version": __version__,
        "config": cfg,
        "seed": cfg["seed"],
        "code_fingerprint": code.fingerprint(),
        "code": {"N": code.n_qubits, "checks": code.n_checks, "rate": code.rate},
        "wall_time": [r.stats.wall_time for r in rows],
        "non_monotone_points": monotone_flags(rows),
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out_path} ({len(rows)} rows)")


def _code_spec_from(path) -> tuple[dict, int]:
    cfg = load_config(path)
    spec = cfg.get("code", cfg)
    validate_code_spec(spec)
    return spec, int(cfg.get("seed", 0))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--p", "p", type=float, default=None, help="Operating point for the Hashing distance.")
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
def inspect(config_path, seed, p, as_json):
    """Report size, rate, degrees and Hashing-bound figures of a code."""
    try:
        spec, cfg_seed = _code_spec_from(config_path)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    code = _build(spec, cfg_seed if seed is None else seed)
    rep = code_report(code, p)
    if as_json:
        click.echo(json.dumps(rep, indent=2, sort_keys=True))
        return
    click.echo(f"N = {rep['N']}, k = {rep['k']}, rate = {rep['rate']:.6f} ({math.floor(rep['rate'] * 1e4) / 1e4:.4f})")
    click.echo(f"CSS: {rep['css']}; symplectic criterion: {'pass' if rep['symplectic_criterion'] else 'FAIL'}")
    for name, hist in rep["degree_histograms"].items():
        click.echo(f"  {name}: " + ", ".join(f"{d}:{c}" for d, c in sorted(hist.items())))
    if "noise_limit" in rep:
        click.echo(f"noise limit p* = {rep['noise_limit']:.6f}")
    if "hashing_distance_db" in rep:
        click.echo(f"distance at p = {p}: {rep['hashing_distance_db']:.4f} dB "
                   f"({rep['hashing_distance_db_rounded_limit']:.4f} dB with p* rounded to 3 decimals)")
    if "rate_increase" in rep:
        ri = rep["rate_increase"]
        click.echo(f"rate increase: {ri['per_block_length']:.6f} (q/N), {ri['per_base_logical']:.6f} (q/(N-2m))")
    click.echo(f"fingerprint: {rep['fingerprint']}")


@main.command("export-matrices")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(["alist", "dense", "both"]), default="both")
def export_matrices(config_path, seed, out, fmt):
    """Write the stabilizer matrix (and LDGM layers) as alist and/or dense text."""
    try:
        spec, cfg_seed = _code_spec_from(config_path)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    code = _build(spec, cfg_seed if seed is None else seed)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mats = {"qpcm": code.qpcm.stacked}
    if not isinstance(code, ExplicitCode):
        mats["p"] = code.ldgm.p_matrix.toarray()
        mats["md"] = code.upper.toarray()
    for name, m in mats.items():
        if fmt in ("alist", "both"):
            gf2.write_alist(m, out_dir / f"{name}.alist")
        if fmt in ("dense", "both"):
            gf2.write_dense(m, out_dir / f"{name}.txt")
    click.echo(f"wrote {', '.join(mats)} to {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--e", "e", required=True, help="True error as a Pauli string, e.g. XYZ.")
@click.option("--e-hat", "e_hat", required=True, help="Estimate as a Pauli string.")
def classify(config_path, seed, e, e_hat):
    """Classify one (error, estimate) pair as success, E1, E2 or E3."""
    try:
        spec, cfg_seed = _code_spec_from(config_path)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    code = _build(spec, cfg_seed if seed is None else seed)
    h = code.qpcm
    try:
        a = gf2.pauli_to_symplectic(e)
        b = gf2.pauli_to_symplectic(e_hat)
        result = classify_pair(a, b, h, kernel_basis(h))
    except ValueError as exc:
        _fail(EXIT_VALIDATION, f"e: {exc}")
    click.echo(result.value)


if __name__ == "__main__":  # pragma: no cover
    main()
