"""Turn a validated ExperimentConfig into a result record and a CSV table.

Each problem kind has one solve routine returning a ``Solution``; the
runner repeats it on the refined grid (spacing h/2) for the refinement
pair and, when requested, on a doubled truncation for support stability.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis
from .config import SCHEMA_VERSION, ExperimentConfig, echo
from .errors import NoConvergence
from .functionals import EnergyExp, JInvP, Jp, Lambda1Exp
from .grid import Field, Grid, integrate
from .operators import CLAMP, energy_of_potential, l2_distance, lambda1, solve_linear
from .optimize import minimize, minimize_on_sphere, minimize_smoothed, minimize_sup_norm
from .recover import contact_identity_residual, recover_exponential, recover_inverse_lp, recover_l1, recover_lp


@dataclass
class Solution:
    grid: Optional[Grid]
    headline: str
    value: float
    converged: bool
    u: Optional[Field] = None
    V: Optional[Field] = None
    f: Optional[Field] = None
    metrics: dict = field(default_factory=dict)


def _el_residual(V: Field, f: Field, u: Field) -> float:
    """Relative L2 distance between u and the solution for its own potential."""
    return l2_distance(solve_linear(V, f), u) / max(math.sqrt(integrate(u.map(np.square))), 1e-300)


def _solve_energy(cfg: ExperimentConfig, grid: Grid) -> Solution:
    pb, opts = cfg.problem, cfg.solver.options()
    c = pb.constraint
    f = pb.source.field(grid)
    if c.family == "lp" and c.p == 1:
        s = minimize_sup_norm(f, opts)
        rec = recover_l1(s.u, f)
        E = energy_of_potential(rec.V, f)
        plus = [float(x) for x in grid.nodes[rec.plus_set]]
        minus = [float(x) for x in grid.nodes[rec.minus_set]]
        m = {"M": s.M, "J1": s.value, "energy": E, "duality_gap": E - s.value,
             "constraint_residual": integrate(rec.V) - 1.0, "contact_plus": plus, "contact_minus": minus,
             "contact_identity_residual": contact_identity_residual(rec, f),
             "continuation_stable": s.stable, "continuation": [list(map(float, t)) for t in s.continuation]}
        return Solution(grid, "M", s.M, s.converged, s.u, rec.V, f, m)
    if c.family == "lp":
        res = minimize(Jp(c.p, f), grid.zeros(), opts)
        rec = recover_lp(res.u, c.p)
        E = energy_of_potential(rec.V, f)
        m = {"J": res.value, "energy": E, "duality_gap": E - res.value,
             "constraint_residual": rec.constraint_integral(c.p) - 1.0, "el_residual": _el_residual(rec.V, f, res.u)}
        return Solution(grid, "energy", E, res.converged, res.u, rec.V, f, m)
    if c.family == "inverse_lp":
        kind = JInvP(p=c.p, budget=c.budget, f=f)
        res = minimize_smoothed(kind, grid.zeros(), opts)
        rec = recover_inverse_lp(res.u, c.p, budget=c.budget)
        E = energy_of_potential(rec.V, f)
        m = {"J": res.value, "energy": E, "duality_gap": E - res.value,
             "constraint_residual": rec.constraint_integral(c.p) / c.budget - 1.0,
             "el_residual": _el_residual(rec.V, f, res.u), "epsilon": kind.epsilon}
        return Solution(grid, "energy", E, res.converged, res.u, rec.V, f, m)
    kind = EnergyExp(alpha=c.alpha, f=f)
    res = minimize(kind, grid.zeros(), opts)
    rec = recover_exponential(res.u, c.alpha)
    # the closed form is negative where u^2 exceeds int u^2
    E = energy_of_potential(rec.V, f, signed=True)
    m = {"J": res.value, "energy": E, "duality_gap": E - res.value,
         "constraint_residual": rec.constraint_integral(alpha=c.alpha) - 1.0,
         "min_potential": float(rec.V.values[rec.finite].min())}
    return Solution(grid, "energy", E, res.converged, res.u, rec.V, f, m)


def _solve_lambda1(cfg: ExperimentConfig, grid: Grid) -> Solution:
    c, opts = cfg.problem.constraint, cfg.solver.options()
    if c.family == "inverse_lp":
        run = analysis.solve_lambda1(grid, c.p, c.budget, opts)
        lam_V = lambda1(run.V)
        d = grid.d
        m = {"lambda1_of_potential": lam_V, "duality_gap": lam_V - run.lam,
             "constraint_residual": float(np.dot(grid.weights[run.finite], run.V.values[run.finite] ** (-c.p))) / c.budget - 1.0,
             "gns_stationarity": analysis.gns_stationarity(run.u, c.p, d),
             "gns_ratio": analysis.gns_ratio(run.u, c.p, d)}
        return Solution(grid, "lambda1", run.lam, run.result.converged, run.u, run.V, None, m)
    x = grid.distance_from_center()
    kind = Lambda1Exp(alpha=c.alpha)
    res = minimize_on_sphere(kind, grid.field(np.exp(-(x / max(grid.radius / 4, 3 * grid.h)) ** 2)), opts)
    rec = recover_exponential(res.u, c.alpha)
    lam_V = lambda1(rec.V, signed=True)
    m = {"lambda1_of_potential": lam_V, "duality_gap": lam_V - res.value,
         "constraint_residual": rec.constraint_integral(alpha=c.alpha) - 1.0,
         "min_potential": float(rec.V.values[rec.finite].min())}
    return Solution(grid, "lambda1", res.value, res.converged, res.u, rec.V, None, m)


def _solve_lambda2(cfg: ExperimentConfig, grid: Grid) -> Solution:
    c = cfg.problem.constraint
    half = 0.5 * (grid.upper - grid.lower)
    rep = analysis.lambda2_two_ball(c.p, 1, half, grid.n, cfg.twowell.separation, cfg.solver.options())
    m = {"lambda1": float(rep.eigenvalues[0]), "lambda2": float(rep.eigenvalues[1]),
         "single_well_lambda1": rep.single_well, "double_gap": rep.double_gap, "single_gap": rep.single_gap,
         "duality_gap": float(rep.eigenvalues[1] - rep.single_well)}
    return Solution(rep.V.grid, "lambda2", float(rep.eigenvalues[1]), True, rep.eigenfunctions[1], rep.V, None, m)


def _solve_counterexample(cfg: ExperimentConfig, nodes: Optional[int]) -> Solution:
    ce = cfg.counterexample
    rep = analysis.counterexample_energy(ce.n, ce.j, ce.p, nodes)
    m = {"energy": rep.energy, "wall_energy": rep.wall_energy, "limit_energy": rep.limit_energy,
         "wall_error": rep.wall_energy - rep.limit_energy, "grid_nodes": rep.grid_nodes}
    return Solution(None, "energy", rep.energy, True, None, None, None, m)


def solve(cfg: ExperimentConfig, grid: Optional[Grid] = None) -> Solution:
    if cfg.counterexample is not None:
        return _solve_counterexample(cfg, None if grid is None else grid.n)
    grid = grid or cfg.problem.domain.grid()
    obj = cfg.problem.objective
    if obj == "energy":
        return _solve_energy(cfg, grid)
    if obj == "lambda1":
        return _solve_lambda1(cfg, grid)
    return _solve_lambda2(cfg, grid)


@dataclass
class RunOutcome:
    record: dict
    table: Optional[dict]
    converged: bool
    summary: str


def _support(cfg: ExperimentConfig, sol: Solution) -> Optional[dict]:
    if sol.u is None or cfg.problem.objective == "lambda2":
        return None
    rerun = None
    if cfg.analysis.support_rerun:
        rerun = solve(cfg, analysis.enlarged(sol.grid)).u
    return analysis.support_radius(sol.u, rerun=rerun).as_dict()


def _finite(x):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_finite(v) for v in x]
    return x


def table_of(sol: Solution) -> Optional[dict]:
    """Columns coordinate, u, V, f; V at the clamp becomes the token inf."""
    g = sol.V.grid if sol.V is not None else None
    if g is None:
        return None
    n = g.n

    def col(F):
        # eigenvalue problems have no source: the f column is zero
        return F.values if F is not None else np.zeros(n)

    V = col(sol.V)
    return {"coordinate": g.nodes, "u": col(sol.u), "V": np.where(V >= CLAMP, np.inf, V), "f": col(sol.f)}


def summary_line(name: str, sol: Solution, record: dict) -> str:
    m = sol.metrics
    parts = [f"{name}:", f"{sol.headline}={sol.value:.6g}"]
    if "contact_plus" in m:
        parts.append("contact={" + ",".join(f"{x:g}" for x in m["contact_plus"]) + "}")
        parts.append(f"J1={m['J1']:.6g}")
    if "lambda1" in m and sol.headline == "lambda2":
        parts.append(f"lambda1={m['lambda1']:.10g} single={m['single_well_lambda1']:.10g}")
    if "wall_energy" in m:
        parts.append(f"wall={m['wall_energy']:.6g} limit={m['limit_energy']:.6g}")
    sup = record.get("support")
    if sup:
        parts.append(f"support={sup['supportRadius']:.4g} stable={sup['stable']}")
        if sup.get("decaySlope") is not None:
            parts.append(f"slope={sup['decaySlope']:.4f}")
    parts.append("converged" if sol.converged else "NOT converged")
    return " ".join(parts)


def execute(cfg: ExperimentConfig) -> RunOutcome:
    t0 = time.perf_counter()
    try:
        sol = solve(cfg)
    except NoConvergence as exc:
        record = {"schema_version": SCHEMA_VERSION, "config": echo(cfg), "converged": False, "error": str(exc)}
        return RunOutcome(record, None, False, f"{cfg.name}: no convergence ({exc})")
    record = {"schema_version": SCHEMA_VERSION, "config": echo(cfg), "converged": bool(sol.converged),
              "headline": sol.headline, "objective_value": sol.value}
    record.update({k: v for k, v in sol.metrics.items()})
    record["support"] = _support(cfg, sol)
    if cfg.analysis.refinement:
        if cfg.counterexample is not None:
            fine = solve(cfg, _CounterGrid(2 * sol.metrics["grid_nodes"] - 1))
            h = 1.0 / (sol.metrics["grid_nodes"] - 1)
        else:
            g = cfg.problem.domain.grid()
            fine = solve(cfg, g.refined())
            h = g.h
        record["refinement"] = {"h": h, "h_value": sol.value, "h2": h / 2.0, "h2_value": fine.value}
    record["wall_time"] = time.perf_counter() - t0
    record = _finite(record)
    return RunOutcome(record, table_of(sol), bool(sol.converged), summary_line(cfg.name, sol, record))


@dataclass(frozen=True)
class _CounterGrid:
    """Stand-in carrying only a node count for the counterexample refinement."""

    n: int
