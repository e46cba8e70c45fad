"""Builds simulations from configs, runs single experiments and sweeps, writes CSVs."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .algorithms import make_policy, theory_params
from .bounds import (
    check_upper_regime,
    kbar,
    lower_bound_fixed,
    lower_bound_universal,
    t_of_R,
    time_recursion_universal,
    time_upper_bound_fixed,
)
from .config import PolicySpec, RunConfig
from .errors import RingsimError
from .hardinstance import GatedOracle, ZeroChain, lb_params
from .numkit import RngStream, snap_ceil
from .problems import NoisyOracle, quad_build
from .simulator import FixedDeterministic, FixedStochastic, SimulationResult, Universal, simulate

log = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "policy", "eta", "R", "seed", "time_bin", "f_gap", "grad_norm",
    "f_gap_median", "f_gap_q10", "f_gap_q90",
)
BOUNDS_COLUMNS = ("quantity", "value", "note")


def build_problem(cfg: RunConfig):
    pr = cfg.problem
    if pr.kind == "zero_chain":
        return ZeroChain(d=pr.dim, L=pr.L, lam=pr.lam)
    data = np.zeros((pr.rows, pr.dim)) if pr.identity else None
    return quad_build(pr.dim, pr.rows, pr.ridge, RngStream(pr.seed, 0), scale=pr.scale, data=data)


def build_workers(cfg: RunConfig) -> list:
    out = []
    for g in cfg.workers:
        if g.model == "deterministic":
            prof = FixedDeterministic(g.tau)
        elif g.model == "exponential":
            prof = FixedStochastic("exponential", g.mean, cap=g.cap)
        elif g.model == "pareto":
            prof = FixedStochastic("pareto", g.mean, shape=g.shape, cap=g.cap)
        else:
            prof = Universal([tuple(s) for s in g.segments])
        out.extend([prof] * g.count)
    return out


def build_oracles(problem, cfg: RunConfig, seed: int, n: int) -> list:
    noise = cfg.noise.model()
    if noise.kind == "bernoulli_gate":
        return [GatedOracle(problem, noise.q, RngStream(seed, 1 + 2 * i)) for i in range(n)]
    return [NoisyOracle(problem, noise, RngStream(seed, 1 + 2 * i)) for i in range(n)]


def build_policy(spec: PolicySpec):
    return make_policy(
        spec.name,
        spec.eta,
        R=math.inf if spec.R is None else spec.R,
        beta=0.9 if spec.beta is None else spec.beta,
        batch=spec.batch,
    )


def run_config(cfg: RunConfig, *, seed: int | None = None, problem=None, **sim_kwargs) -> SimulationResult:
    seed = cfg.seed if seed is None else seed
    problem = build_problem(cfg) if problem is None else problem
    workers = build_workers(cfg)
    oracles = build_oracles(problem, cfg, seed, len(workers))
    sim_kwargs.setdefault("trace_stride", cfg.trace_stride)
    return simulate(
        problem,
        oracles,
        build_policy(cfg.resolved_policy()),
        workers,
        max_k=cfg.horizon.max_k,
        max_time=cfg.horizon.max_time,
        seed=seed,
        **sim_kwargs,
    )


def summary_line(cfg: RunConfig, res: SimulationResult) -> str:
    tr = res.trace
    return (
        f"policy={cfg.policy.name} seed={cfg.seed} time={res.final_time:.6g} k={res.state.k} "
        f"grad_norm={tr.grad_norm[-1]:.6g} f_gap={tr.f_gap[-1]:.6g} "
        f"accepted={res.state.accepted} discarded={res.state.discarded}"
    )


def cli_run(cfg: RunConfig, out_dir=None) -> list[tuple[Path, str]]:
    """Run ``policy`` and each ``compare`` entry; one trace CSV per policy."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    written = []
    for pol in cfg.run_policies():
        c = replace(cfg, policy=pol, compare=[])
        res = run_config(c, problem=problem)
        path = out / f"trace_{pol.name}_seed{cfg.seed}.csv"
        res.trace.to_csv(path, policy=pol.name, seed=cfg.seed)
        written.append((path, summary_line(c, res)))
    return written


def value_at(trace, column: str, t: float) -> float:
    """Last recorded value of ``column`` at or before virtual time ``t``."""
    times = trace.time_s
    idx = int(np.searchsorted(times, t, side="right")) - 1
    return getattr(trace, column)[max(idx, 0)]


@dataclass(frozen=True)
class SweepRun:
    policy: str
    eta: float
    R: float
    seed: int


def _sweep_one(args):
    cfg, run, problem, stride = args
    pol = replace(cfg.policy, name=run.policy, eta=run.eta, R=run.R, theory=False)
    c = replace(cfg, policy=pol)
    res = run_config(c, seed=run.seed, problem=problem, trace_stride=stride)
    return run, res.trace, res.final_time


def sweep_runs(cfg: RunConfig) -> list[SweepRun]:
    sw = cfg.sweep
    policies = sw.policies or [cfg.policy.name]
    base = cfg.resolved_policy()
    etas = sw.eta_grid or [base.eta]
    runs = []
    for name in policies:
        uses_R = name in ("ransgdm", "ringmaster_asgd")
        Rs = (sw.R_grid or [base.R]) if uses_R else [None]
        for eta, R, seed in itertools.product(etas, Rs, sw.seeds):
            runs.append(SweepRun(name, float(eta), math.inf if R is None else R, int(seed)))
    return runs


def execute_sweep(cfg: RunConfig, *, trace_stride: int | None = None) -> list:
    """Run the sweep cross product; returns ``(run, trace, final_time)`` tuples in run order."""
    problem = build_problem(cfg)
    stride = cfg.trace_stride if trace_stride is None else trace_stride
    jobs = [(cfg, run, problem, stride) for run in sweep_runs(cfg)]
    if cfg.sweep.jobs > 1:
        with ProcessPoolExecutor(cfg.sweep.jobs) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(j) for j in jobs]


def aggregate_sweep(results, bins: int) -> list[dict]:
    horizon = min(final for _, _, final in results)
    edges = np.linspace(0.0, horizon, bins + 1)[1:]
    rows = []
    by_group: dict = {}
    for run, trace, _ in results:
        key = (run.policy, run.eta, run.R)
        for tb in edges:
            row = {
                "policy": run.policy, "eta": run.eta, "R": run.R, "seed": run.seed, "time_bin": float(tb),
                "f_gap": value_at(trace, "f_gap", tb), "grad_norm": value_at(trace, "grad_norm", tb),
            }
            rows.append(row)
            by_group.setdefault((key, float(tb)), []).append(row["f_gap"])
    for row in rows:
        vals = by_group[((row["policy"], row["eta"], row["R"]), row["time_bin"])]
        row["f_gap_median"] = float(np.median(vals))
        row["f_gap_q10"] = float(np.quantile(vals, 0.1))
        row["f_gap_q90"] = float(np.quantile(vals, 0.9))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def cli_sweep(cfg: RunConfig, out_dir=None, write_traces: bool = False) -> tuple[Path, list[dict]]:
    if cfg.sweep is None:
        raise RingsimError("config has no sweep block")
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    results = execute_sweep(cfg)
    if write_traces:
        for run, trace, _ in results:
            trace.to_csv(out / f"trace_{run.policy}_eta{run.eta:g}_R{run.R:g}_seed{run.seed}.csv", run.policy, run.seed)
    rows = aggregate_sweep(results, cfg.sweep.bins)
    path = out / "sweep.csv"
    write_rows(path, SWEEP_COLUMNS, rows)
    return path, best_settings(results)


def best_settings(results) -> list[dict]:
    """Per policy, the (eta, R) with the lowest median final f_gap across seeds."""
    groups: dict = {}
    for run, trace, _ in results:
        groups.setdefault((run.policy, run.eta, run.R), []).append(trace.f_gap[-1])
    best: dict = {}
    for (policy, eta, R), gaps in groups.items():
        med = float(np.median(gaps))
        if not math.isfinite(med):
            med = math.inf
        if policy not in best or med < best[policy]["median_final_f_gap"]:
            best[policy] = {"policy": policy, "eta": eta, "R": R, "median_final_f_gap": med}
    return list(best.values())


@dataclass
class BoundsReport:
    inputs: dict
    rows: list  # (quantity, value, note)

    def value(self, name: str) -> float:
        for q, v, _ in self.rows:
            if q == name:
                return v
        raise KeyError(name)

    def table(self) -> str:
        width = max(len(q) for q, _, _ in self.rows)
        lines = [f"{k} = {v}" for k, v in self.inputs.items()]
        lines.append("")
        for q, v, note in self.rows:
            val = "" if v is None else f"{v:.12g}"
            lines.append(f"{q:<{width}}  {val:>20}  {note}".rstrip())
        return "\n".join(lines)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BOUNDS_COLUMNS)
        for q, v, note in self.rows:
            w.writerow([q, "" if v is None else repr(float(v)), note])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def cli_bounds(L: float, delta: float, sigma: float, p: float, eps: float, taus, profiles=None,
               universal_prefix: int = 5) -> BoundsReport:
    """Every applicable complexity bound for the given inputs; no randomness involved.

    ``profiles`` (universal workers) default to the constant-power lift of ``taus``.
    """
    taus = [float(t) for t in taus]
    inputs = {"L": L, "delta": delta, "sigma": sigma, "p": p, "eps": eps, "taus": taus}
    rows = []
    tp = theory_params(L, delta, sigma, p, eps)
    rows += [
        ("alpha", tp.alpha, ""),
        ("R", float(tp.R), ""),
        ("eta", tp.eta, ""),
        ("beta", tp.beta, ""),
        ("K", float(tp.K), "server rounds for E||grad f(x_hat)|| <= eps"),
        ("Kbar", float(kbar(L, delta, eps)), "universal-model round blocks"),
        ("t_of_R", t_of_R(taus, tp.R), "time for any R consecutive accepted updates"),
    ]
    rows.append(("time_total_fixed", t_of_R(taus, tp.R) * snap_ceil(tp.K / tp.R), "t(R) * ceil(K/R)"))
    try:
        check_upper_regime(L, delta, eps)
        rows.append(("upper_bound_fixed", time_upper_bound_fixed(L, delta, sigma, p, eps, taus), ""))
    except RingsimError:
        rows.append(("upper_bound_fixed", None, "trivial regime: eps > sqrt(2 L Delta), x0 is already eps-stationary"))

    try:
        lb = lb_params(L, delta, sigma, p, eps)
        rows += [
            ("lb_lambda", lb.lam, ""),
            ("lb_d", float(lb.d), ""),
            ("lb_q", lb.q, ""),
            ("lower_bound_fixed", lower_bound_fixed(L, delta, sigma, p, eps, taus), "holds with probability >= 1/2"),
        ]
    except RingsimError as exc:
        rows.append(("lower_bound_fixed", None, f"not applicable: {exc}"))

    if profiles is None:
        profiles = [Universal.from_tau(t) for t in taus]
    prefix = time_recursion_universal(profiles, tp.R, universal_prefix)
    for i, t in enumerate(prefix, start=1):
        rows.append((f"T_universal_{i}", t, "upper-bound recursion, work 4R per block"))
    try:
        lbu = lower_bound_universal(profiles, L, delta, sigma, p, eps)
        rows += [
            ("Ktilde", float(lbu.K), ""),
            ("T_lower_universal", lbu.T, f"work per epoch ceil(1/(4q)) = {lbu.work_per_epoch}"),
        ]
    except RingsimError as exc:
        rows.append(("T_lower_universal", None, f"not applicable: {exc}"))
    return BoundsReport(inputs=inputs, rows=rows)

