"""Command line entry point: ``potopt run|sweep|recipe``.

Exit codes: 0 all solves converged, 2 some solve did not converge,
1 configuration error.  Output files go to $POTOPT_OUT_DIR (default
./potopt_out): <name>.json (schema-versioned record), <name>.csv
(coordinate, u, V, f; hard walls written as inf) and, for sweeps,
<name>_sweep.csv with one row per value.

Potential values of +inf (hard walls) are represented internally by the
clamp value 1e12.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .config import RECIPES, echo, load_config, load_recipe, parse_config, set_param
from .errors import ConfigError, PotoptError
from .runner import RunOutcome, execute

log = logging.getLogger("potopt")

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV = 0, 1, 2


def out_dir() -> Path:
    d = Path(os.environ.get("POTOPT_OUT_DIR", "potopt_out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _fmt(x: float) -> str:
    # repr round-trips doubles exactly, which keeps reruns bit-identical
    return "inf" if x == float("inf") else repr(float(x))


def write_table(path: Path, table: dict):
    cols = ["coordinate", "u", "V", "f"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*(table[c] for c in cols)):
            w.writerow([_fmt(x) for x in row])


def write_outputs(name: str, outcome: RunOutcome, outputs: Sequence[str]) -> list[Path]:
    d = out_dir()
    paths = []
    if "json" in outputs:
        p = d / f"{name}.json"
        p.write_text(json.dumps(outcome.record, indent=2, sort_keys=True))
        paths.append(p)
    if "csv" in outputs and outcome.table is not None:
        p = d / f"{name}.csv"
        write_table(p, outcome.table)
        paths.append(p)
    return paths


def _finish(cfg, outcome: RunOutcome) -> int:
    write_outputs(cfg.name, outcome, cfg.outputs)
    if "summary" in cfg.outputs:
        print(outcome.summary)
    return EXIT_OK if outcome.converged else EXIT_NOCONV


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    return _finish(cfg, execute(cfg))


def cmd_recipe(args) -> int:
    if args.show:
        from .config import recipe_text

        print(recipe_text(args.name), end="")
        return EXIT_OK
    cfg = load_recipe(args.name)
    return _finish(cfg, execute(cfg))


def _sweep_job(data: dict) -> dict:
    cfg = parse_config(data)
    out = execute(cfg)
    return {"record": out.record, "table": out.table, "converged": out.converged, "summary": out.summary}


def parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"cannot parse --values {text!r}: {exc}") from exc
    if not vals:
        raise ConfigError("--values is empty")
    return vals


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    values = parse_values(args.values)
    data = echo(base)
    jobs = []
    for k, v in enumerate(values):
        d = set_param(data, args.param, v)
        d["name"] = f"{base.name}_{k:03d}"
        parse_config(d)  # validate every job before solving anything
        jobs.append(d)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))  # map keeps the input order
    else:
        results = [_sweep_job(d) for d in jobs]
    d = out_dir()
    rows = []
    for v, job, res in zip(values, jobs, results):
        outcome = RunOutcome(res["record"], res["table"], res["converged"], res["summary"])
        write_outputs(job["name"], outcome, base.outputs)
        rec = res["record"]
        rows.append([args.param, _fmt(v), rec.get("headline", ""), _fmt(rec.get("objective_value", float("nan"))),
                     _fmt(rec.get("duality_gap", float("nan"))), str(res["converged"])])
        if "summary" in base.outputs:
            print(res["summary"])
    with open(d / f"{base.name}_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "value", "headline", "objective_value", "duality_gap", "converged"])
        w.writerows(rows)
    return EXIT_OK if all(r["converged"] for r in results) else EXIT_NOCONV


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="potopt", description="Optimal Schrodinger potentials: solve and verify.",
                                 epilog="Potentials equal to +inf (hard walls) are clamped to 1e12; "
                                        "POTOPT_OUT_DIR sets the output directory.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve one configured problem")
    p.add_argument("config", help="YAML experiment file")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="solve a problem for several values of one numeric field")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="dotted config path, e.g. problem.constraint.p")
    p.add_argument("--values", required=True, help="comma separated list, e.g. 1.1,1.5,2,4")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("recipe", help="run a built-in experiment")
    p.add_argument("name", choices=RECIPES)
    p.add_argument("--show", action="store_true", help="print the recipe config instead of running it")
    p.set_defaults(func=cmd_recipe)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PotoptError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
