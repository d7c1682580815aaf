"""Command-line front end.

Exit codes: 0 success, 1 infeasible or failed validation, 2 usage or input
error, 3 internal numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import yaml

from .absa import AnnealConfig, run_absa
from .exact import CapExceeded, EnumerationCaps, enumerate_exact, solve_exact
from .feasibility import economics, validate
from .generate import PRESETS, Template, generate_scenario
from .harness import SweepSpec, default_jobs, delay_model_of, report, run_sweep
from .mldg import SubstrateExhausted, run_mldg
from .model import (Scenario, ScenarioError, import_graphml, load_deployment, load_scenario,
                    save_deployment, save_scenario, scenario_to_dict)

OK, INFEASIBLE, USAGE, NUMERICAL = 0, 1, 2, 3


def _emit(obj, out=None):
    text = json.dumps(obj, indent=1, default=str)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_solve(a) -> int:
    s = load_scenario(a.scenario)
    start = time.perf_counter()
    extra = {}
    if a.solver == "mldg":
        d, econ = run_mldg(s, a.theta, tie_break=a.tie_break, max_resolve=a.max_resolve)
    elif a.solver == "absa":
        cfg = AnnealConfig(a.absa_temp, a.absa_cooling, a.absa_lambda, a.absa_iterations, a.seed)
        d, econ = run_absa(s, cfg)
    elif a.enumerate:
        res = enumerate_exact(s, EnumerationCaps())
        d, econ = res.deployment, economics(s, res.deployment)
    else:
        res = solve_exact(s, gap_limit=a.gap, time_limit=a.time_limit)
        d, econ = res.deployment, economics(s, res.deployment)
        extra = {"bound": res.bound, "gap": res.gap, "nodes_explored": res.nodes_explored,
                 "timed_out": res.timed_out}
    wall = time.perf_counter() - start
    rep = validate(s, d, delay_model=delay_model_of(a.solver), enforce_instance_limit=a.solver != "absa")
    if a.out:
        save_deployment(d, a.out)
    _emit({"scenario": s.name, "solver": a.solver, "gain": econ.gain, "economics": econ.as_dict(),
           "accepted": d.accepted_ids, "acceptance_rate": d.acceptance_rate(len(s.requests)),
           "wall_time": wall, "violations": [str(v) for v in rep], **extra})
    return INFEASIBLE if rep else OK


def cmd_sweep(a) -> int:
    data = yaml.safe_load(Path(a.spec).read_text())
    if not isinstance(data, dict):
        raise ScenarioError("sweep spec must be a mapping", "")
    out = Path(a.out or data.get("output") or Path(a.spec).with_suffix(".csv"))
    spec = SweepSpec.from_dict(data)
    records = run_sweep(spec, out.with_suffix(".jsonl"), a.jobs)
    paths = report(records, out, a.format)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} runs, {failed} failed; wrote {', '.join(map(str, paths))}")
    return INFEASIBLE if failed else OK


def cmd_gen(a) -> int:
    if a.template in PRESETS:
        tmpl = a.template
    else:
        tmpl = Template.from_dict(yaml.safe_load(Path(a.template).read_text()))
    s = generate_scenario(tmpl, a.seed)
    if a.out:
        save_scenario(s, a.out)
    else:
        sys.stdout.write(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))
    return OK


def cmd_validate(a) -> int:
    s = load_scenario(a.scenario)
    d = load_deployment(a.deployment)
    rep = validate(s, d, delay_model=a.delay_model, enforce_instance_limit=not a.no_instance_limit)
    sys.stdout.write(rep.to_text())
    if not rep:
        print(f"gain {economics(s, d).gain:.6g}")
    return INFEASIBLE if rep else OK


def cmd_import(a) -> int:
    sub = import_graphml(a.graphml)
    s = Scenario(sub, (), (), name=Path(a.graphml).stem)
    if a.out:
        save_scenario(s, a.out)
    else:
        sys.stdout.write(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))
    print(f"{len(sub.nodes)} nodes, {len(sub.links)} directed links", file=sys.stderr)
    return OK


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcsm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("solve", help="solve a scenario file")
    q.add_argument("scenario")
    q.add_argument("--solver", choices=("mldg", "absa", "exact"), default="mldg")
    q.add_argument("--out", help="write the deployment here")
    q.add_argument("--gap", type=float, default=0.05)
    q.add_argument("--time-limit", type=float, default=60.0)
    q.add_argument("--enumerate", action="store_true", help="exhaustive enumeration instead of branch and bound")
    q.add_argument("--theta", type=float)
    q.add_argument("--tie-break", choices=("lowest", "highest"), default="lowest")
    q.add_argument("--max-resolve", type=int)
    q.add_argument("--absa-temp", type=float, default=1000.0)
    q.add_argument("--absa-cooling", type=float, default=0.05)
    q.add_argument("--absa-lambda", type=int, default=3)
    q.add_argument("--absa-iterations", type=int, default=AnnealConfig.max_iterations)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("sweep", help="run a sweep spec and write CSV/JSON")
    q.add_argument("spec")
    q.add_argument("--out")
    q.add_argument("--format", choices=("csv", "json"))
    q.add_argument("--jobs", type=int, default=default_jobs())
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("gen", help="generate a scenario from a template")
    q.add_argument("template", help=f"preset ({', '.join(PRESETS)}) or template file")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_gen)

    q = sub.add_parser("validate", help="check a deployment against a scenario")
    q.add_argument("scenario")
    q.add_argument("deployment")
    q.add_argument("--delay-model", choices=("queuing", "fixed"), default="queuing")
    q.add_argument("--no-instance-limit", action="store_true")
    q.set_defaults(func=cmd_validate)

    q = sub.add_parser("import-topo", help="convert a GraphML topology into a substrate-only scenario")
    q.add_argument("graphml")
    q.add_argument("--out")
    q.set_defaults(func=cmd_import)
    return p


def main(argv=None) -> int:
    p = parser()
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except (ScenarioError, CapExceeded, FileNotFoundError, ValueError, yaml.YAMLError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except SubstrateExhausted as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return INFEASIBLE
    except (ArithmeticError, RuntimeError) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
