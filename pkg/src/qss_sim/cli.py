"""Command-line front end.

    qss-sim keyrate  --config run.cfg --out results/
    qss-sim simulate --config run.cfg --seed 42 --emit-events --emit-transcript
    qss-sim sweep    --config sweep.cfg
    qss-sim analyze  --config run.cfg --log s1.csv --log s2.csv
    qss-sim tomography --counts counts.csv

Exit codes: 0 success, 1 protocol aborted (l = 0), 2 configuration error,
3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig, echo, load_config, parse_config, sweep_configs, with_overrides
from .detection import read_event_log, worker_count, write_event_log
from .keyrate import KeyReport, analytic_model
from .pipeline import run_analysis, run_montecarlo
from .postmatch import write_transcript
from .qmath import bell_state, fidelity, fringe_visibility, read_counts_csv, tomographic_reconstruction

EXIT_OK, EXIT_ABORTED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

REPORT_HEADER = (
    "loss_db", "p_x", "N", "n_x", "E_X", "max_phi_bar",
    "l_bits", "rate_per_pulse", "rate_bps", "aborted", "params",
)


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def report_row(cfg: RunConfig, rep: KeyReport) -> list[str]:
    est = rep.estimation
    loss = max(max(c.loss_db_dealer, c.loss_db_player) for c in cfg.channels)
    return [
        _num(loss), _num(cfg.channels[0].p_x), _num(rep.n_pulses), _num(est.n_x),
        _num(est.e_x_total), _num(est.max_phi_bar), _num(rep.l_bits),
        _num(rep.rate_per_pulse), _num(rep.rate_bps), _num(rep.aborted), echo(cfg),
    ]


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return _jsonable(float(v))
    return v


def report_dict(rep: KeyReport) -> dict:
    est = rep.estimation
    return {
        "n_pulses": _jsonable(rep.n_pulses),
        "rep_rate_hz": rep.rep_rate_hz,
        "n_x": _jsonable(est.n_x),
        "n_z": _jsonable(est.n_z),
        "E_X": _jsonable(est.e_x_total),
        "E_X_pair": _jsonable(est.e_x_pair),
        "E_Z_pair": _jsonable(est.e_z_pair),
        "phi_bar": _jsonable(est.phi_bar),
        "epsilon_bar": est.epsilon_bar,
        "leak_ec_bits": _jsonable(rep.leak_ec_bits),
        "l_bits": rep.l_bits,
        "rate_per_pulse": rep.rate_per_pulse,
        "rate_bps": rep.rate_bps,
        "aborted": rep.aborted,
    }


def write_report_csv(path: Path, rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerows(rows)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------- commands

def _need_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("montecarlo runs need a seed (config key or --seed)", "seed")
    return cfg.seed


def _run_point(cfg: RunConfig) -> KeyReport:
    if cfg.mode == "analytic":
        return analytic_model(cfg.sources, cfg.channels, cfg.security, cfg.pulses)
    if cfg.mode == "montecarlo":
        return run_montecarlo(
            cfg.sources, cfg.channels, cfg.security, cfg.pulses, _need_seed(cfg), cfg.z_sample_fraction
        ).report
    raise ConfigError(f"mode {cfg.mode!r} cannot be swept", "mode")


def cmd_keyrate(cfg: RunConfig, out: Path) -> int:
    rep = analytic_model(cfg.sources, cfg.channels, cfg.security, cfg.pulses)
    write_report_csv(out / "report.csv", [report_row(cfg, rep)])
    write_json(out / "report.json", report_dict(rep))
    return EXIT_ABORTED if rep.aborted else EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    seed = _need_seed(cfg)
    res = run_montecarlo(cfg.sources, cfg.channels, cfg.security, cfg.pulses, seed, cfg.z_sample_fraction)
    write_report_csv(out / "report.csv", [report_row(cfg, res.report)])
    write_json(out / "report.json", report_dict(res.report))
    if cfg.emit_events:
        for j, (dealer, player) in enumerate(res.sessions, start=1):
            write_event_log(out / f"events_session{j}.csv", (dealer, player))
    if cfg.emit_transcript:
        write_transcript(out / "transcript.csv", (res.x_rounds, res.z_rounds))
    return EXIT_ABORTED if res.report.aborted else EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    points = sweep_configs(cfg)
    if cfg.mode == "montecarlo":
        _need_seed(cfg)
    # Monte-Carlo points already parallelize over blocks
    workers = 1 if cfg.mode == "montecarlo" else worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(_run_point, [c for _, c in points]))
    write_report_csv(out / "report.csv", [report_row(c, r) for (_, c), r in zip(points, reports)])
    return EXIT_ABORTED if all(r.aborted for r in reports) else EXIT_OK


def _resolve(path: str, base: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def cmd_analyze(cfg: RunConfig, out: Path, base: Path) -> int:
    need = cfg.n_players - 1
    if len(cfg.logs) != need:
        raise ConfigError(f"{cfg.n_players} participants need {need} session logs, got {len(cfg.logs)}", "analyze.logs")
    logs = [read_event_log(_resolve(p, base)) for p in cfg.logs]
    res = run_analysis(
        logs,
        cfg.n_players,
        cfg.security,
        cfg.n_pulses,
        cfg.channels[0].rep_rate_hz,
        window_ns=cfg.channels[0].window_ns,
        base_states=[s.base_state for s in cfg.sources],
        seed=cfg.seed or 0,
        z_sample_fraction=cfg.z_sample_fraction,
    )
    write_report_csv(out / "report.csv", [report_row(cfg, res.report)])
    write_json(out / "report.json", report_dict(res.report))
    if cfg.emit_transcript:
        write_transcript(out / "transcript.csv", (res.x_rounds, res.z_rounds))
    return EXIT_ABORTED if res.report.aborted else EXIT_OK


def cmd_tomography(cfg: RunConfig, out: Path, base: Path) -> int:
    if cfg.tomography_counts is None:
        raise ConfigError("no counts file (tomography.counts or --counts)", "tomography.counts")
    counts = read_counts_csv(_resolve(cfg.tomography_counts, base))
    rho = tomographic_reconstruction(counts)
    with open(out / "density_matrix.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "col", "re", "im"))
        for (r, c), v in np.ndenumerate(rho.entries):
            w.writerow((r, c, _num(v.real), _num(v.imag)))
    summary = {
        "target": cfg.tomography_target,
        "fidelity": fidelity(rho, bell_state(cfg.tomography_target)),
        "purity": float(np.trace(rho.entries @ rho.entries).real),
        "visibility_rectilinear": fringe_visibility(rho, "rectilinear"),
        "visibility_diagonal": fringe_visibility(rho, "diagonal"),
    }
    with open(out / "tomography.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary.keys())
        w.writerow(_num(v) if not isinstance(v, str) else v for v in summary.values())
    return EXIT_OK


# ------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--emit-events", action="store_true", help="write per-session event logs")
    common.add_argument("--emit-transcript", action="store_true", help="write the postmatched round transcript")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    p = argparse.ArgumentParser(prog="qss-sim", description="Secret-sharing simulator with postmatched pair sources.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo run, detection to key length")
    sub.add_parser("keyrate", parents=[common], help="closed-form expected key rate")
    sub.add_parser("sweep", parents=[common], help="one report row per grid point")
    a = sub.add_parser("analyze", parents=[common], help="full pipeline on recorded event logs")
    a.add_argument("--log", action="append", default=[], help="session event log (repeat per player)")
    t = sub.add_parser("tomography", parents=[common], help="density matrix from projective counts")
    t.add_argument("--counts", help="counts CSV (projector_signal,projector_idler,count)")
    return p


_MODES = {"simulate": "montecarlo", "keyrate": "analytic", "analyze": "analyze"}


def _load(args) -> tuple[RunConfig, Path]:
    if args.config is not None:
        cfg, base = load_config(args.config), args.config.resolve().parent
    else:
        cfg, base = parse_config(""), Path.cwd()
    overrides: dict[str, object] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("expected KEY=VALUE", f"--set {item}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = with_overrides(cfg, overrides)
    if args.command in _MODES:
        cfg = replace(cfg, mode=_MODES[args.command])
    if args.out is not None:
        cfg = replace(cfg, out_dir=str(args.out))
    cfg = replace(cfg, emit_events=cfg.emit_events or args.emit_events,
                  emit_transcript=cfg.emit_transcript or args.emit_transcript)
    if getattr(args, "log", None):
        cfg = replace(cfg, logs=tuple(str(Path(p).resolve()) for p in args.log))
    if getattr(args, "counts", None):
        cfg = replace(cfg, tomography_counts=str(Path(args.counts).resolve()))
    return cfg, base


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, base = _load(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "keyrate":
            return cmd_keyrate(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        if args.command == "analyze":
            return cmd_analyze(cfg, out, base)
        return cmd_tomography(cfg, out, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed input files (event logs, counts)
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
