"""Experiment configuration: one YAML file describes one experiment.

Schema (all keys optional unless noted; defaults shown)::

    problem:  {kind: quadratic, dim: 50, rows: 20000, ridge: 0.01, scale: 1.0,
               identity: false, seed: 0}
              {kind: zero_chain, dim: 10, L: 1.0, lam: 1.0}
    noise:    {kind: student_t, nu: 1.5, scale: 1.0}      # none|gaussian|student_t|pareto|bernoulli_gate
    workers:  [{count: 20, model: exponential, mean: 0.001}, ...]   # required
              # model: deterministic(tau) | exponential(mean) | pareto(mean, shape)
              #        | universal(segments: [[t0, rate0], [t1, rate1], ...]); optional cap
    policy:   {name: ransgdm, eta: 0.001, R: 10, beta: 0.9, batch: 6, theory: false}
    theory:   {L: 1.0, delta: 1.0, sigma: 1.0, p: 2.0, eps: 0.1}  # used when policy.theory is true
    horizon:  {max_k: null, max_time: 5.0}                # at least one required
    seed: 0
    output: out
    trace_stride: 1
    sweep:    {seeds: [0, 1], policies: [ransgdm], eta_grid: [], R_grid: [], bins: 50, jobs: 1}
    compare:  [{name: ringmaster_asgd, eta: 0.01, R: 10}, ...]   # extra policies for `run`;
              # each entry overrides fields of `policy`, one trace CSV per entry
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import InvalidParameterError, RingsimError
from .numkit import NOISE_KINDS, NoiseModel

log = logging.getLogger(__name__)

WORKER_MODELS = ("deterministic", "exponential", "pareto", "universal")


class ConfigError(InvalidParameterError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ProblemSpec:
    kind: str = "quadratic"
    dim: int = 50
    rows: int = 20000
    ridge: float = 0.01
    scale: float = 1.0
    identity: bool = False
    seed: int = 0
    L: float = 1.0
    lam: float = 1.0


@dataclass
class NoiseSpec:
    kind: str = "none"
    scale: float = 1.0
    nu: float | None = None
    shape: float | None = None
    q: float | None = None

    def model(self) -> NoiseModel:
        return NoiseModel(kind=self.kind, scale=self.scale, nu=self.nu, shape=self.shape, q=self.q)


@dataclass
class WorkerGroup:
    count: int = 1
    model: str = "deterministic"
    tau: float | None = None
    mean: float | None = None
    shape: float | None = None
    cap: float | None = None
    segments: list | None = None


@dataclass
class PolicySpec:
    name: str = "ransgdm"
    eta: float | None = None
    R: float | None = None
    beta: float | None = None
    batch: int = 6
    theory: bool = False


@dataclass
class TheorySpec:
    L: float = 1.0
    delta: float = 1.0
    sigma: float = 1.0
    p: float = 2.0
    eps: float = 0.1


@dataclass
class Horizon:
    max_k: int | None = None
    max_time: float | None = None


@dataclass
class SweepSpec:
    seeds: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    eta_grid: list = field(default_factory=list)
    R_grid: list = field(default_factory=list)
    bins: int = 50
    jobs: int = 1


@dataclass
class RunConfig:
    workers: list
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    theory: TheorySpec | None = None
    horizon: Horizon = field(default_factory=Horizon)
    seed: int = 0
    output: str = "out"
    trace_stride: int = 1
    sweep: SweepSpec | None = None
    compare: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _prune(asdict(self))

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def n_workers(self) -> int:
        return sum(g.count for g in self.workers)

    def run_policies(self) -> list[PolicySpec]:
        """``policy`` followed by every ``compare`` entry layered over it."""
        return [self.policy] + [replace(self.policy, **entry) for entry in self.compare]

    def resolved_policy(self) -> PolicySpec:
        """Policy with theory-derived parameters filled in (explicit values win)."""
        pol = self.policy
        if not pol.theory:
            return pol
        from .algorithms import theory_params

        if self.theory is None:
            raise ConfigError("theory", "policy.theory is true but no theory block was given")
        th = self.theory
        tp = theory_params(th.L, th.delta, th.sigma, th.p, th.eps)
        derived = {"eta": tp.eta, "R": tp.R, "beta": tp.beta}
        out = {}
        for key, val in derived.items():
            explicit = getattr(pol, key)
            if explicit is not None and explicit != val:
                log.warning("policy.%s=%r overrides the theory-derived value %r", key, explicit, val)
                out[key] = explicit
            else:
                out[key] = val
        return replace(pol, **out)


def _prune(d):
    if isinstance(d, dict):
        return {k: _prune(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_prune(v) for v in d]
    return d


def _build(cls, raw, path: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected a mapping, got {type(raw).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(path, f"unknown keys {sorted(unknown)}; allowed: {sorted(names)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


def _num(path, val, *, positive=False, nonneg=False, integer=False, allow_inf=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path, f"expected a number, got {val!r}")
    if integer and not (isinstance(val, int) or (allow_inf and val == math.inf)):
        raise ConfigError(path, f"expected an integer, got {val!r}")
    if math.isnan(val) or (math.isinf(val) and not allow_inf):
        raise ConfigError(path, f"must be finite, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(path, f"must be > 0, got {val!r}")
    if nonneg and val < 0:
        raise ConfigError(path, f"must be >= 0, got {val!r}")


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    allowed = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError("<root>", f"unknown keys {sorted(unknown)}")
    if "workers" not in raw or not raw["workers"]:
        raise ConfigError("workers", "at least one worker group is required")
    if not isinstance(raw["workers"], list):
        raise ConfigError("workers", "expected a list of worker groups")
    workers = [_build(WorkerGroup, w, f"workers[{i}]") for i, w in enumerate(raw["workers"])]
    cfg = RunConfig(
        workers=workers,
        problem=_build(ProblemSpec, raw.get("problem"), "problem"),
        noise=_build(NoiseSpec, raw.get("noise"), "noise"),
        policy=_build(PolicySpec, raw.get("policy"), "policy"),
        theory=None if raw.get("theory") is None else _build(TheorySpec, raw["theory"], "theory"),
        horizon=_build(Horizon, raw.get("horizon"), "horizon"),
        seed=raw.get("seed", 0),
        output=raw.get("output", "out"),
        trace_stride=raw.get("trace_stride", 1),
        sweep=None if raw.get("sweep") is None else _build(SweepSpec, raw["sweep"], "sweep"),
        compare=raw.get("compare") or [],
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    from .algorithms import POLICY_NAMES

    pr = cfg.problem
    if pr.kind not in ("quadratic", "zero_chain"):
        raise ConfigError("problem.kind", f"expected quadratic or zero_chain, got {pr.kind!r}")
    _num("problem.dim", pr.dim, positive=True, integer=True)
    if pr.kind == "quadratic":
        _num("problem.rows", pr.rows, positive=True, integer=True)
        _num("problem.ridge", pr.ridge, positive=True)
        _num("problem.scale", pr.scale, nonneg=True)
        _num("problem.seed", pr.seed, nonneg=True, integer=True)
    else:
        _num("problem.L", pr.L, positive=True)
        _num("problem.lam", pr.lam, positive=True)

    nz = cfg.noise
    if nz.kind not in NOISE_KINDS:
        raise ConfigError("noise.kind", f"expected one of {NOISE_KINDS}, got {nz.kind!r}")
    gated = nz.kind == "bernoulli_gate"
    if gated != (pr.kind == "zero_chain"):
        raise ConfigError("noise.kind", "bernoulli_gate noise goes with (and only with) problem.kind zero_chain")
    try:
        nz.model()
    except RingsimError as exc:
        raise ConfigError("noise", str(exc)) from None

    for i, g in enumerate(cfg.workers):
        path = f"workers[{i}]"
        _num(f"{path}.count", g.count, positive=True, integer=True)
        if g.model not in WORKER_MODELS:
            raise ConfigError(f"{path}.model", f"expected one of {WORKER_MODELS}, got {g.model!r}")
        if g.model == "deterministic":
            _num(f"{path}.tau", g.tau, positive=True)
        elif g.model in ("exponential", "pareto"):
            _num(f"{path}.mean", g.mean, positive=True)
            if g.model == "pareto":
                _num(f"{path}.shape", g.shape, positive=True)
                if not g.shape > 1:
                    raise ConfigError(f"{path}.shape", "pareto delays need shape > 1")
            if g.cap is not None:
                _num(f"{path}.cap", g.cap, positive=True)
        else:
            if not g.segments:
                raise ConfigError(f"{path}.segments", "universal workers need a list of [start, rate] pairs")
            for j, seg in enumerate(g.segments):
                if not isinstance(seg, (list, tuple)) or len(seg) != 2:
                    raise ConfigError(f"{path}.segments[{j}]", "expected [start, rate]")
                _num(f"{path}.segments[{j}][0]", seg[0], nonneg=True)
                _num(f"{path}.segments[{j}][1]", seg[1], nonneg=True)
            if g.segments[0][0] != 0:
                raise ConfigError(f"{path}.segments[0][0]", "first segment must start at 0")

    if not isinstance(cfg.compare, list):
        raise ConfigError("compare", "expected a list of policy mappings")
    for j, entry in enumerate(cfg.compare):
        _build(PolicySpec, entry, f"compare[{j}]")
        name = entry.get("name")
        if name not in POLICY_NAMES:
            raise ConfigError(f"compare[{j}].name", f"expected one of {POLICY_NAMES}, got {name!r}")
        for key in ("eta", "R", "beta"):
            if entry.get(key) is not None:
                _num(f"compare[{j}].{key}", entry[key], positive=key != "beta", nonneg=True,
                     integer=key == "R", allow_inf=key == "R")

    pol = cfg.policy
    if pol.name not in POLICY_NAMES:
        raise ConfigError("policy.name", f"expected one of {POLICY_NAMES}, got {pol.name!r}")
    if pol.theory:
        if cfg.theory is None:
            raise ConfigError("theory", "policy.theory is true but no theory block was given")
        th = cfg.theory
        for key in ("L", "delta", "eps"):
            _num(f"theory.{key}", getattr(th, key), positive=True)
        _num("theory.sigma", th.sigma, nonneg=True)
        _num("theory.p", th.p)
        if not 1 < th.p <= 2:
            raise ConfigError("theory.p", f"must lie in (1, 2], got {th.p}")
    elif pol.eta is None and not (cfg.sweep and cfg.sweep.eta_grid):
        raise ConfigError("policy.eta", "give eta explicitly or set policy.theory: true")
    if pol.eta is not None:
        _num("policy.eta", pol.eta, positive=True)
    if pol.R is not None:
        _num("policy.R", pol.R, positive=True, integer=True, allow_inf=True)
    if pol.beta is not None:
        _num("policy.beta", pol.beta, nonneg=True)
        if not pol.beta < 1:
            raise ConfigError("policy.beta", "must lie in [0, 1)")
    _num("policy.batch", pol.batch, positive=True, integer=True)

    hz = cfg.horizon
    if hz.max_k is None and hz.max_time is None:
        raise ConfigError("horizon", "set max_k and/or max_time")
    if hz.max_k is not None:
        _num("horizon.max_k", hz.max_k, positive=True, integer=True)
    if hz.max_time is not None:
        _num("horizon.max_time", hz.max_time, positive=True)
    _num("seed", cfg.seed, nonneg=True, integer=True)
    _num("trace_stride", cfg.trace_stride, positive=True, integer=True)

    sw = cfg.sweep
    if sw is not None:
        if not sw.seeds:
            raise ConfigError("sweep.seeds", "seed list must not be empty")
        for j, s in enumerate(sw.seeds):
            _num(f"sweep.seeds[{j}]", s, nonneg=True, integer=True)
        for j, name in enumerate(sw.policies):
            if name not in POLICY_NAMES:
                raise ConfigError(f"sweep.policies[{j}]", f"unknown policy {name!r}")
        for j, eta in enumerate(sw.eta_grid):
            _num(f"sweep.eta_grid[{j}]", eta, positive=True)
        for j, R in enumerate(sw.R_grid):
            _num(f"sweep.R_grid[{j}]", R, positive=True, integer=True)
        _num("sweep.bins", sw.bins, positive=True, integer=True)
        _num("sweep.jobs", sw.jobs, positive=True, integer=True)


def load_config(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from None
    return parse_config(raw)
