"""Batch runner: `run`, `sweep`, `theory` and `validate` subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import engine
from .gossip import GainMode, write_messages_csv
from .metrics import Report, RunSummary, aggregate
from .scenario import ALGORITHMS, ConfigError, Params, ScenarioConfig, resolve
from .theory import TheoryInputs, report as theory_report

log = logging.getLogger("cobandit")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

TRACE_HEADER = (
    "slot", "device", "network", "exploring", "gain", "comm",
    "max_prob", "switched", "delay_s", "distance", "counts",
)
COMM_NAMES = {-1: "", 0: "idle", 1: "listen", 2: "broadcast"}


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def write_trace(record: engine.RunRecord, path: Path) -> None:
    net_ids = record.network_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for i in range(record.horizon):
            sl = record.slot(i + 1)
            counts = ";".join(str(int(c)) for c in sl.counts)
            dist = repr(sl.distance)
            for j, dev in enumerate(record.device_ids):
                if sl.choices[j] < 0:
                    continue
                w.writerow([
                    sl.slot, dev, net_ids[sl.choices[j]], int(sl.exploring[j]),
                    repr(float(sl.gains[j])), COMM_NAMES[int(sl.comm[j])],
                    repr(float(sl.max_prob[j])), int(sl.switched[j]), repr(float(sl.delay_s[j])),
                    dist, counts,
                ])


def _run_one(job: tuple) -> dict:
    """Worker: simulate one seed, write its traces, return its summary dict."""
    config_json, seed, runs_dir, r, traces, messages = job
    cfg = replace(ScenarioConfig.from_json(config_json), seed=seed)
    record = engine.run(cfg)
    if traces:
        write_trace(record, Path(runs_dir) / f"run_{r}.csv")
    if messages:
        with open(Path(runs_dir) / f"messages_{r}.csv", "w", newline="") as fh:
            write_messages_csv(engine.messages_from_record(record), fh)
    summary = RunSummary.from_record(record)
    return {"summary": summary, "run": r}


def run_experiment(
    cfg: ScenarioConfig,
    runs: int,
    base_seed: int,
    out: Optional[Path],
    parallel: int = 1,
    traces: bool = True,
    messages: bool = False,
) -> tuple:
    """Run seeds base_seed + r for r in range(runs); returns (summaries, report)."""
    if runs < 1:
        raise ConfigError(["runs must be >= 1"])
    runs_dir = None
    if out is not None:
        runs_dir = out / "runs"
        runs_dir.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json() + "\n")
    cfg_json = cfg.to_json()
    jobs = [
        (cfg_json, base_seed + r, str(runs_dir) if runs_dir else None, r, traces and out is not None,
         messages and out is not None)
        for r in range(runs)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    summaries = [res["summary"] for res in sorted(results, key=lambda x: x["run"])]
    rep = aggregate(summaries)
    if out is not None:
        write_outputs(out, cfg, summaries, rep, base_seed)
    return summaries, rep


def write_outputs(out: Path, cfg: ScenarioConfig, summaries, rep: Report, base_seed: int) -> None:
    body = {
        "scenario": cfg.name,
        "algorithms": sorted({d.algorithm for d in cfg.devices}),
        "base_seed": base_seed,
        "report": rep.to_dict(),
        "runs": [s.to_dict() for s in summaries],
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "distance.csv", "w", newline="") as fh:
        rep.write_distance_csv(fh)
    (out / "report.txt").write_text(format_report([(cfg.name or "scenario", rep)]))


def format_report(rows: Sequence[tuple]) -> str:
    header = f"{'setting':<28}{'% stable':>10}{'% at NE':>10}{'median slot':>13}{'median GB':>11}"
    lines = [header, "-" * len(header)]
    for label, rep in rows:
        med = "-" if rep.median_stabilization_slot is None else f"{rep.median_stabilization_slot:g}"
        lines.append(
            f"{label:<28}{rep.pct_stable:>10.1f}{rep.pct_stable_at_nash:>10.1f}{med:>13}{rep.median_download_gb:>11.3f}"
        )
    return "\n".join(lines) + "\n"


def _load(args) -> ScenarioConfig:
    cfg = resolve(args.scenario)
    if getattr(args, "algo", None):
        cfg = cfg.with_algorithm(args.algo)
    changes = {}
    if getattr(args, "minimal_reset", None) is not None:
        changes["minimal_reset"] = args.minimal_reset
    if getattr(args, "gain_mode", None) is not None:
        changes["gain_mode"] = args.gain_mode
    if changes:
        cfg = cfg.with_params(**changes)
    if getattr(args, "horizon", None) is not None:
        kept = tuple(e for e in cfg.events if e.slot <= args.horizon)
        if len(kept) < len(cfg.events):
            log.info("--horizon %d drops %d later events", args.horizon, len(cfg.events) - len(kept))
        cfg = replace(cfg, horizon=args.horizon, events=kept)
    return cfg


def _coerce(name: str, text: str):
    field = Params.__dataclass_fields__.get(name)
    if field is None:
        raise ConfigError([f"unknown parameter {name!r}"])
    default = field.default
    if isinstance(default, bool):
        return parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, str):
        return text
    if text.strip().lower() in ("none", "auto"):
        return None
    return float(text)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out) if args.out else None
    _, rep = run_experiment(cfg, args.runs, args.seed, out, args.parallel, args.traces, args.messages)
    sys.stdout.write(json.dumps(rep.to_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [_coerce(args.param, v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError(["--values is empty"])
    out = Path(args.out) if args.out else None
    rows = []
    table = []
    for v in values:
        sub = cfg.with_params(**{args.param: v})
        sub_out = out / f"{args.param}={v}" if out else None
        _, rep = run_experiment(sub, args.runs, args.seed, sub_out, args.parallel, args.traces, False)
        rows.append((f"{args.param}={v}", rep))
        table.append({"param": args.param, "value": v, **rep.to_dict()})
    text = format_report(rows)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        with open(out / "sweep.json", "w") as fh:
            json.dump(table, fh, indent=2, sort_keys=True)
            fh.write("\n")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_theory(args) -> int:
    inputs = TheoryInputs(k=args.k, d=args.d, T=args.T, b0=args.b0, n=args.n, eta=args.eta)
    body = theory_report(inputs, args.max_delay)
    sys.stdout.write(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if "error" not in body else EXIT_INVALID


def cmd_validate(args) -> int:
    resolve(args.scenario)
    sys.stdout.write(json.dumps({"valid": True, "errors": []}) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cobandit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_flags(sp):
        sp.add_argument("--scenario", required=True, help="scenario JSON file or built-in name")
        sp.add_argument("--algo", choices=ALGORITHMS, help="override every device's algorithm")
        sp.add_argument("--runs", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0, help="run r uses seed + r")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--parallel", type=int, default=1, help="worker processes")
        sp.add_argument("--minimal-reset", type=parse_bool, default=None)
        sp.add_argument("--gain-mode", choices=[m.value for m in GainMode], default=None)
        sp.add_argument("--horizon", type=int, default=None, help="override the number of slots")
        sp.add_argument("--traces", dest="traces", action="store_true", default=True)
        sp.add_argument("--no-traces", dest="traces", action="store_false")

    run_p = sub.add_parser("run", help="simulate one scenario for several seeds")
    experiment_flags(run_p)
    run_p.add_argument("--messages", action="store_true", help="also dump every feedback message")
    run_p.set_defaults(func=cmd_run, messages=False)

    sweep_p = sub.add_parser("sweep", help="repeat `run` over values of one parameter")
    experiment_flags(sweep_p)
    sweep_p.add_argument("--param", required=True)
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.set_defaults(func=cmd_sweep, messages=False)

    th = sub.add_parser("theory", help="print the regret bound and hearing probabilities")
    th.add_argument("--k", type=int, default=5)
    th.add_argument("--d", type=int, default=5)
    th.add_argument("--T", type=int, default=1200)
    th.add_argument("--b0", type=float, default=0.05)
    th.add_argument("--n", type=int, default=20)
    th.add_argument("--eta", type=float, default=None)
    th.add_argument("--max-delay", type=int, default=None)
    th.set_defaults(func=cmd_theory)

    va = sub.add_parser("validate", help="check a scenario file")
    va.add_argument("--scenario", required=True)
    va.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("COBANDIT_LOG", "WARNING").upper(), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stdout.write(json.dumps({"valid": False, "errors": exc.errors}) + "\n")
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"cobandit: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
