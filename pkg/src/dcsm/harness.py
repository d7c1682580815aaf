"""Experiment sweeps and their reports.

A sweep runs every (solver, axis value, seed) triple on a generated
scenario, validates the deployment and records one ``RunRecord``.  Records
are appended to a JSON-lines file as they finish, so an interrupted sweep
resumes by skipping the keys already on disk.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .absa import AnnealConfig, run_absa
from .delay import chain_delay
from .exact import EnumerationCaps, enumerate_exact, solve_exact
from .feasibility import economics, validate
from .generate import generate_scenario
from .mldg import run_mldg
from .model import Scenario, ScenarioError, derive_loads, load_scenario

logger = logging.getLogger(__name__)

AXES = ("num_sfcs", "sfc_length", "theta")
SOLVERS = ("mldg", "absa", "exact")
JOBS_ENV = "DCSM_JOBS"
# generated topologies small enough for the exact solver
DESK_SCALE = ("tiny", "stress", "small", "illustrative")
COLUMNS = ("solver", "axis", "axis_value", "seed", "gain", "acceptance_rate", "wall_time", "status")


@dataclass
class SweepSpec:
    axis: str
    values: list
    seeds: list
    solvers: list
    scenario_template: dict = field(default_factory=lambda: {"topology": "bteurope"})
    options: dict = field(default_factory=dict)  # solver name -> keyword options

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values or not self.seeds:
            raise ValueError("values and seeds must be non-empty")
        bad = [x for x in self.solvers if x not in SOLVERS]
        if bad or not self.solvers:
            raise ValueError(f"solvers must be a non-empty subset of {SOLVERS}, got {self.solvers!r}")
        topo = self.scenario_template.get("topology")
        if "exact" in self.solvers and topo not in DESK_SCALE and "file" not in self.scenario_template:
            raise ValueError(f"the exact solver is limited to desk-scale templates {DESK_SCALE}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        tmpl = d.pop("template", None)
        if tmpl is not None:
            d.setdefault("scenario_template", tmpl)
        d.pop("output", None)
        return cls(**d)


@dataclass
class RunRecord:
    solver: str
    axis: str
    axis_value: object
    seed: int
    gain: float = float("nan")
    acceptance_rate: float = float("nan")
    wall_time: float = 0.0
    delay_margins: dict = field(default_factory=dict)
    status: str = "ok"
    error: str = ""

    @property
    def key(self):
        return (self.solver, json.dumps(self.axis_value), self.seed)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["delay_margins"] = {str(k): v for k, v in self.delay_margins.items()}
        return d


def build_scenario(template: dict, axis: str, value, seed: int) -> Scenario:
    """Scenario for one sweep point."""
    t = dict(template)
    if "file" in t or t.get("topology") == "illustrative":
        if "file" in t:
            s = load_scenario(t["file"])
        else:
            from . import illustrative_scenario
            s = illustrative_scenario()
        if axis == "num_sfcs":
            return s.with_requests(s.requests[:int(value)])
        if axis == "theta":
            return replace(s, theta=float(value))
        raise ScenarioError(f"axis {axis!r} cannot be applied to a fixed scenario file", "template")
    t[axis] = value
    return generate_scenario(t, seed)


def _solve(solver: str, s: Scenario, seed: int, opts: dict):
    if solver == "mldg":
        return run_mldg(s, **opts)[0]
    if solver == "absa":
        cfg = AnnealConfig(**{"seed": seed, **opts})
        return run_absa(s, cfg)[0]
    opts = dict(opts)
    if opts.pop("enumerate", False):
        return enumerate_exact(s, EnumerationCaps(**opts.pop("caps", {}))).deployment
    return solve_exact(s, **opts).deployment


def delay_model_of(solver: str) -> str:
    return "fixed" if solver == "absa" else "queuing"


def run_one(solver: str, axis: str, value, seed: int, template: dict, opts: dict) -> RunRecord:
    rec = RunRecord(solver, axis, value, seed)
    start = time.perf_counter()
    try:
        s = build_scenario(template, axis, value, seed)
        d = _solve(solver, s, seed, opts)
        rec.wall_time = time.perf_counter() - start
        mode = delay_model_of(solver)
        rep = validate(s, d, delay_model=mode, enforce_instance_limit=solver != "absa")
        if rep:
            rec.status, rec.error = "failed", "invalid deployment: " + "; ".join(map(str, rep))
            return rec
        loads = derive_loads(s, d)
        rec.gain = economics(s, d, loads).gain
        rec.acceptance_rate = d.acceptance_rate(len(s.requests))
        rec.delay_margins = {r: s.request[r].delay_threshold - chain_delay(s, d, r, loads, mode=mode).total
                             for r in d.accepted_ids}
    except Exception as e:  # a failed run is data, never fatal for the sweep
        rec.wall_time = time.perf_counter() - start
        rec.status, rec.error = "failed", f"{type(e).__name__}: {e}"
        logger.debug("run failed\n%s", traceback.format_exc())
    return rec


def _read_done(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        try:
            d = json.loads(line)
        except json.JSONDecodeError:
            continue  # a torn last line from an interrupted write
        rec = RunRecord(**d)
        if rec.status == "ok":
            done[rec.key] = rec
    return done


def _append(path: Path, rec: RunRecord) -> None:
    # one write call per record so concurrent readers never see half a line
    with open(path, "a") as f:
        f.write(json.dumps(rec.as_dict()) + "\n")
        f.flush()
        os.fsync(f.fileno())


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, records_path=None, jobs: int | None = None) -> list[RunRecord]:
    """One record per (solver, axis value, seed), in that order.

    With ``records_path`` completed runs found in the file are reused and
    new ones are appended as they finish.
    """
    jobs = default_jobs() if jobs is None else max(1, jobs)
    path = Path(records_path) if records_path is not None else None
    done = _read_done(path) if path else {}
    keys = [(sv, v, sd) for sv in spec.solvers for v in spec.values for sd in spec.seeds]
    todo = [k for k in keys if (k[0], json.dumps(k[1]), k[2]) not in done]
    out = dict(done)

    def args(k):
        sv, v, sd = k
        return (sv, spec.axis, v, sd, spec.scenario_template, spec.options.get(sv, {}))

    if jobs == 1 or len(todo) <= 1:
        for k in todo:
            rec = run_one(*args(k))
            if path:
                _append(path, rec)
            out[rec.key] = rec
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(run_one, *args(k)) for k in todo]
            for f in futs:
                rec = f.result()
                if path:
                    _append(path, rec)
                out[rec.key] = rec
    return [out[(sv, json.dumps(v), sd)] for sv, v, sd in keys]


def aggregate(records) -> list[dict]:
    """Mean and sample standard deviation per (solver, axis, value); failed runs excluded."""
    groups = {}
    for r in records:
        if r.status != "ok":
            continue
        groups.setdefault((r.solver, r.axis, json.dumps(r.axis_value)), []).append(r)
    rows = []
    for (solver, axis, value), rs in groups.items():
        row = {"solver": solver, "axis": axis, "axis_value": json.loads(value), "n": len(rs)}
        for name in ("gain", "acceptance_rate", "wall_time"):
            xs = [getattr(r, name) for r in rs]
            row[f"{name}_mean"] = statistics.fmean(xs)
            row[f"{name}_std"] = statistics.stdev(xs) if len(xs) > 1 else 0.0
        rows.append(row)
    return rows


def report(records, path, fmt: str | None = None) -> list[Path]:
    """Write the records and their aggregate table; returns the files written.

    CSV writes ``<path>`` and ``<stem>_aggregate.csv`` next to it; JSON
    writes one file holding both tables.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".") or "csv"
    agg = aggregate(records)
    if fmt == "json":
        path.write_text(json.dumps({"records": [r.as_dict() for r in records], "aggregate": agg}, indent=1))
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([getattr(r, c) for c in COLUMNS])
    agg_path = path.with_name(path.stem + "_aggregate.csv")
    with open(agg_path, "w", newline="") as f:
        cols = ["solver", "axis", "axis_value", "n", "gain_mean", "gain_std", "acceptance_rate_mean",
                "acceptance_rate_std", "wall_time_mean", "wall_time_std"]
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        w.writerows(agg)
    return [path, agg_path]
