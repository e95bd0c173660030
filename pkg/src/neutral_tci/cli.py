"""Command-line experiment runner.

Exit codes: 0 pass, 2 verdict or audit failure, 1 execution/config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, build_model, build_perturbation, build_xi, load_config
from .pathspace import PathMetric

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
CSV_COLUMNS = ("stream_id", "energy", "d_inf1_sq", "d_inf2_sq", "d_l2_sq")
_CSV_METRIC = {"d_inf1_sq": PathMetric.SUM_SUP_SQUARES, "d_inf2_sq": PathMetric.UNIFORM_SUP,
               "d_l2_sq": PathMetric.L2_IN_TIME}


# ---------------------------------------------------------------------------
# output helpers

def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _finite(obj):
    """Replace non-finite floats by None so every emitted number is finite."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, PathMetric):
        return obj.value
    return obj


def samples_csv(ensemble) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in ensemble.summaries:
        row = [s.stream_id, repr(float(s.energy))]
        for col in CSV_COLUMNS[2:]:
            kind = _CSV_METRIC[col]
            row.append(repr(float(s.d2[kind])) if kind in s.d2 else "")
        w.writerow(row)
    return buf.getvalue()


def gnuplot_script(csv_name: str, metrics) -> str:
    cols = {c: i + 1 for i, c in enumerate(CSV_COLUMNS)}
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'energy'",
        "set ylabel 'squared coupling distance'",
        "set terminal pngcairo size 900,600",
        "set output 'samples.png'",
    ]
    plots = [f"'{csv_name}' using 2:{cols[c]} with points" for c, k in _CSV_METRIC.items() if k in metrics]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def summary_document(command: str, cfg: ExperimentConfig, payload: dict, started: float, workers) -> str:
    payload = _finite({"command": command, "schema": cfg.schema, "versions": {
        "neutral_tci": __version__, "numpy": np.__version__, "scipy": scipy.__version__}, **payload})
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    doc = {
        "payload": payload,
        "payload_sha256": hashlib.sha256(body.encode()).hexdigest(),
        "run_info": {"wall_time_s": time.perf_counter() - started, "workers": workers,
                     "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def config_echo(cfg: ExperimentConfig) -> dict:
    r = cfg.run
    return {
        "source": cfg.source,
        "model": {"name": cfg.model.name, "params": cfg.model.params, "constants": cfg.model.constants,
                  "xi": cfg.model.xi},
        "grid": {"tau": cfg.grid.tau, "horizon": cfg.grid.horizon, "dt": cfg.grid.dt},
        "perturbation": {"kind": cfg.perturbation.kind, "value": list(cfg.perturbation.value),
                         "gain": cfg.perturbation.gain, "energy_cap": cfg.perturbation.energy_cap},
        "run": {"n_paths": r.n_paths, "seed": r.seed, "metrics": [m.value for m in r.metrics],
                "t_independent": r.t_independent, "epsilon": r.epsilon, "empirical_w2": r.empirical_w2,
                "audit_pairs": r.audit_pairs},
    }


def _emit(cfg: ExperimentConfig, name: str, text: str) -> Path:
    path = Path(cfg.output.dir) / name
    atomic_write(path, text)
    return path


# ---------------------------------------------------------------------------
# subcommands

def _audit(cfg: ExperimentConfig, model):
    if cfg.is_spde:
        from .galerkin import audit_heat_example

        rep = audit_heat_example(model, cfg.grid.dt, cfg.run.audit_pairs, cfg.run.seed, cfg.run.audit_box)
        return rep, rep.passed
    from .model import audit_assumptions, default_sampler

    sampler = default_sampler(model.dim, cfg.grid.tau, cfg.grid.dt, cfg.run.seed, cfg.run.audit_box)
    rep = audit_assumptions(model, sampler, cfg.run.audit_pairs)
    return rep, rep.gating_passed


def _constants(cfg: ExperimentConfig, model) -> dict:
    from .transport import assemble_constants

    return {m: assemble_constants(model, m, cfg.grid.horizon, cfg.run.epsilon, cfg.run.t_independent,
                                  cfg.grid.tau) for m in cfg.run.metrics}


def cmd_list(args) -> int:
    from .builtins import list_builtins

    print(json.dumps(_finite(list_builtins()), indent=2))
    return EXIT_PASS


def cmd_audit(cfg: ExperimentConfig, args) -> int:
    started = time.perf_counter()
    model = build_model(cfg)
    rep, ok = _audit(cfg, model)
    _emit(cfg, "audit.json", summary_document("audit", cfg, {"config": config_echo(cfg), "audit": rep.to_dict()},
                                              started, None))
    print(f"audit {'PASS' if ok else 'FAIL'}")
    if not ok and hasattr(rep, "failed"):
        print("failed conditions: " + ", ".join(rep.failed()), file=sys.stderr)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_constants(cfg: ExperimentConfig, args) -> int:
    started = time.perf_counter()
    model = build_model(cfg)
    if cfg.is_spde:
        from .galerkin import assemble_spde_constants

        reports = {PathMetric.UNIFORM_SUP: assemble_spde_constants(model, cfg.grid.horizon)}
    else:
        reports = _constants(cfg, model)
    _emit(cfg, "constants.json", summary_document(
        "constants", cfg, {"config": config_echo(cfg), "constants": {m.value: r.to_dict() for m, r in reports.items()}},
        started, None))
    for m, r in reports.items():
        print(f"{m.value}: C = {r.c_metric!r}")
    return EXIT_PASS


def _write_run(cfg: ExperimentConfig, args, command: str, ensemble, payload: dict, metrics, started, workers):
    if "csv" in cfg.output.formats:
        _emit(cfg, "samples.csv", samples_csv(ensemble))
        if args.emit_gnuplot:
            _emit(cfg, "plot_samples.gp", gnuplot_script("samples.csv", metrics))
    if "json" in cfg.output.formats:
        _emit(cfg, "summary.json", summary_document(command, cfg, payload, started, workers))


def _report_verdicts(verdicts) -> bool:
    ok = True
    for v in verdicts.values():
        print(f"{v.metric.value}: H = {v.entropy.mean:.6g}  E d^2 = {v.coupling_sq.mean:.6g}  "
              f"C = {v.theoretical_c.c_metric:.6g}  ratio = {v.ratio:.6g}  {'PASS' if v.passed else 'FAIL'}")
        ok &= v.passed
    return ok


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    from .simulate import EnsembleJob, run_ensemble, simulate_many
    from .transport import INDEPENDENT_STREAM_OFFSET, empirical_w2, verdict_from_ensemble

    started = time.perf_counter()
    if cfg.is_spde:
        raise ValueError("the heat example runs through 'spde-verify'")
    model = build_model(cfg)
    audit, audit_ok = _audit(cfg, model)
    constants = _constants(cfg, model)
    xi, h = build_xi(cfg, model), build_perturbation(cfg, model)
    run = cfg.run
    keep = min(run.n_paths, 512) if run.empirical_w2 else 0
    job = EnsembleJob(model, xi, h, cfg.grid, run.metrics)
    ens = run_ensemble(job, run.n_paths, run.seed, run.workers, keep_paths=keep)
    refs = None
    if run.empirical_w2 == "coupled":
        refs = [s.y for s in ens.kept]
    elif run.empirical_w2 == "independent":
        refs = simulate_many(model, xi, cfg.grid, run.seed, [INDEPENDENT_STREAM_OFFSET + i for i in range(keep)])
    verdicts = {}
    for m in run.metrics:
        emp = empirical_w2([s.x for s in ens.kept], refs, m) if refs is not None else None
        verdicts[m] = verdict_from_ensemble(ens, constants[m], emp)
    ok = _report_verdicts(verdicts) and audit_ok
    if not audit_ok:
        print("audit FAIL: " + ", ".join(audit.failed()), file=sys.stderr)
    payload = {"config": config_echo(cfg), "audit": audit.to_dict(),
               "verdicts": {m.value: v.to_dict() for m, v in verdicts.items()}, "passed": ok}
    _write_run(cfg, args, "verify", ens, payload, run.metrics, started, run.workers)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_spde_verify(cfg: ExperimentConfig, args) -> int:
    from .galerkin import SpdeEnsembleJob, assemble_spde_constants, check_smallness
    from .simulate import run_ensemble
    from .transport import verdict_from_ensemble

    started = time.perf_counter()
    if not cfg.is_spde:
        raise ValueError("spde-verify needs model.name = 'heat-example'")
    model = build_model(cfg)
    audit, audit_ok = _audit(cfg, model)
    small = check_smallness(model, cfg.grid.horizon)
    constants = assemble_spde_constants(model, cfg.grid.horizon)
    run = cfg.run
    metric = PathMetric.UNIFORM_SUP
    job = SpdeEnsembleJob(model, build_xi(cfg, model), build_perturbation(cfg, model), cfg.grid, (metric,))
    ens = run_ensemble(job, run.n_paths, run.seed, run.workers)
    verdict = verdict_from_ensemble(ens, constants)
    ok = _report_verdicts({metric: verdict}) and audit_ok and small.passed
    payload = {"config": config_echo(cfg), "audit": audit.to_dict(), "smallness": small.to_dict(),
               "verdicts": {metric.value: verdict.to_dict()}, "passed": ok}
    _write_run(cfg, args, "spde-verify", ens, payload, (metric,), started, run.workers)
    return EXIT_PASS if ok else EXIT_FAIL


COMMANDS = {"audit": cmd_audit, "constants": cmd_constants, "verify": cmd_verify, "spde-verify": cmd_spde_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neutral-tci", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="print the registered built-in models")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int, help="overrides run.seed")
        sp.add_argument("--workers", type=int, help="worker processes (default: $NEUTRAL_TCI_WORKERS or 1)")
        sp.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        sp.add_argument("--emit-gnuplot", action="store_true", help="write a gnuplot script next to the CSV")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            return cmd_list(args)
        cfg = load_config(args.config).with_overrides(args.seed, args.workers, args.out)
        return COMMANDS[args.command](cfg, args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
