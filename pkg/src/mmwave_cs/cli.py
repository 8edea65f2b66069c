"""Experiment runner: sweeps protocols and parameters, runs analysis and/or simulation, writes tables."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analysis import coverage_curve
from .config import ConfigError, ExperimentConfig, load_config
from .protocols import Family, Protocol
from .simulator import run_simulation

log = logging.getLogger("mmwave_cs")

COLUMNS = ("protocol", "mode", "rho", "p_th_offset_db", "p_th_a_offset_db", "z_db", "p_c", "p_t", "stderr", "seed")


@dataclass
class ResultRow:
    protocol: str
    mode: str
    rho: float
    p_th_offset_db: float
    p_th_a_offset_db: float
    z_db: float
    p_c: float | None
    p_t: float | None
    stderr: float | None = None
    seed: int | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (protocol, mode, reason)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.failed]


@dataclass(frozen=True)
class _Job:
    protocol: Protocol
    mode: str
    point: tuple  # sorted (key, value) sweep overrides


def _jobs(cfg: ExperimentConfig, table: ResultTable) -> list[_Job]:
    modes = ("analysis", "sim") if cfg.mode == "both" else (cfg.mode,)
    out = []
    for protocol in cfg.protocols:
        for point in cfg.sweep_points():
            for mode in modes:
                if mode == "analysis" and protocol.family is Family.CST:
                    reason = f"{protocol}: no closed-form coverage for transmitter-side sensing; simulate it instead"
                    if cfg.mode == "analysis":
                        out.append(_Job(protocol, "refused:" + reason, tuple(point.items())))
                    elif (protocol, mode, reason) not in table.skipped:
                        table.skipped.append((protocol.value, mode, reason))
                    continue
                out.append(_Job(protocol, mode, tuple(point.items())))
    return out


def _run_job(cfg: ExperimentConfig, job: _Job) -> list[ResultRow]:
    point = dict(job.point)
    net = {**cfg.network, **point}
    base = dict(
        protocol=job.protocol.value,
        rho=net["rho"],
        p_th_offset_db=net["p_th_offset_db"],
        p_th_a_offset_db=net["p_th_a_offset_db"],
    )
    mode = job.mode.split(":", 1)[0]
    try:
        if job.mode.startswith("refused:"):
            raise ValueError(job.mode.split(":", 1)[1])
        ctx = cfg.context(job.protocol, point)
        if mode == "analysis":
            res = coverage_curve(cfg.z_grid_db, ctx)
            return [
                ResultRow(**base, mode="analysis", z_db=float(z), p_c=float(pc), p_t=float(res.p_t))
                for z, pc in zip(res.z_db, res.p_c)
            ]
        res = run_simulation(cfg.sim, job.protocol, ctx)
        return [
            ResultRow(**base, mode="sim", z_db=float(z), p_c=float(pc), p_t=float(res.p_t), stderr=float(se), seed=res.seed)
            for z, pc, se in zip(res.z_db, res.p_c, res.stderr)
        ]
    except Exception as e:  # a failed row must not abort the sweep
        msg = f"{type(e).__name__}: {e}"
        return [
            ResultRow(**base, mode=mode if mode != "refused" else "analysis", z_db=float(z), p_c=None, p_t=None, error=msg)
            for z in cfg.z_grid_db
        ]


def _run_job_packed(args):
    return _run_job(*args)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Run every (protocol, sweep point, mode) combination.

    With ``threads > 1`` rows are farmed out to worker processes. Simulation seeds
    are counter based, so the table does not depend on the worker count.
    """
    table = ResultTable()
    jobs = _jobs(cfg, table)
    for proto, mode, reason in table.skipped:
        log.warning("skipping %s %s: %s", proto, mode, reason)
    if threads > 1 and len(jobs) > 1:
        inner = replace(cfg, sim=replace(cfg.sim, workers=1))
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_job_packed, [(inner, j) for j in jobs]))
    else:
        if threads > 1:
            cfg = replace(cfg, sim=replace(cfg.sim, workers=threads))
        results = [_run_job(cfg, j) for j in jobs]
    for rows in results:
        table.rows.extend(rows)
        if rows and rows[0].failed:
            log.error("row %s/%s failed: %s", rows[0].protocol, rows[0].mode, rows[0].error)
    return table


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    return format(float(v), ".6g")


def _json_value(v):
    s = _fmt(v)
    if s == "" or isinstance(v, str):
        return None if s == "" else s
    return int(s) if isinstance(v, int) else float(s)


def table_records(table: ResultTable) -> list[dict]:
    return [{c: getattr(r, c) for c in COLUMNS} for r in table.rows]


def emit(table: ResultTable, fmt: str, path) -> Path:
    """Write the table as CSV or JSON. ``path`` may be a directory."""
    path = Path(path)
    if path.suffix.lower() not in (".csv", ".json"):
        path = path / f"results.{fmt}"
    path.parent.mkdir(parents=True, exist_ok=True)
    records = table_records(table)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for rec in records:
                w.writerow([_fmt(rec[c]) for c in COLUMNS])
    elif fmt == "json":
        data = [{c: _json_value(rec[c]) for c in COLUMNS} for rec in records]
        path.write_text(json.dumps({"columns": list(COLUMNS), "rows": data}, indent=1) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def read_table(path) -> list[dict]:
    """Parse an emitted file back into records (numbers as floats, blanks as None)."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    out = []
    with path.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for c in COLUMNS:
                v = rec[c]
                if c in ("protocol", "mode"):
                    row[c] = v
                elif v == "":
                    row[c] = None
                elif c == "seed":
                    row[c] = int(v)
                else:
                    row[c] = float(v)
            out.append(row)
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmwave-cs", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="YAML or JSON experiment file")
    run.add_argument("--mode", choices=("analysis", "sim", "both"))
    run.add_argument("--protocol", action="append", help="protocol(s) to run; repeat or comma-separate")
    run.add_argument("--out", help="output directory or file")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--seed", type=int, help="master seed for the simulator")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--trace", help="dump per-iteration simulator records (JSON lines) here")
    run.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.mode:
            cfg.mode = args.mode
        if args.protocol:
            names = [n for item in args.protocol for n in item.split(",") if n.strip()]
            cfg.protocols = [Protocol.parse(n) for n in names]
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed: must be >= 0")
            cfg.sim = replace(cfg.sim, master_seed=args.seed)
        if args.trace:
            cfg.sim = replace(cfg.sim, trace_path=args.trace)
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    table = run_experiment(cfg, threads=args.threads)
    fmt = args.format or cfg.output.get("format", "csv")
    path = emit(table, fmt, args.out or cfg.output.get("path", "results"))
    print(f"wrote {len(table.rows)} rows to {path}")
    for proto, mode, reason in table.skipped:
        print(f"skipped {proto} ({mode}): {reason}", file=sys.stderr)
    if table.failures:
        print(f"{len(table.failures)} rows failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
