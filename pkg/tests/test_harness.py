import csv

import numpy as np
import pytest
import yaml

from ringsim.cli import main
from ringsim.config import ConfigError, load_config, parse_config
from ringsim.harness import (
    SWEEP_COLUMNS,
    aggregate_sweep,
    best_settings,
    build_oracles,
    build_problem,
    build_workers,
    cli_run,
    cli_sweep,
    execute_sweep,
    run_config,
)
from ringsim.hardinstance import GatedOracle
from ringsim.simulator import FixedDeterministic, FixedStochastic, Universal

TRIVIAL = {
    "problem": {"kind": "quadratic", "dim": 5, "rows": 10, "ridge": 1.0, "identity": True, "seed": 3},
    "noise": {"kind": "none"},
    "workers": [{"count": 1, "model": "deterministic", "tau": 1.0}],
    "policy": {"name": "ringmaster_asgd", "eta": 1.0, "R": 1},
    "horizon": {"max_k": 60},
}

SMALL = {
    "problem": {"kind": "quadratic", "dim": 6, "rows": 50, "ridge": 0.1, "seed": 1},
    "noise": {"kind": "student_t", "nu": 1.5},
    "workers": [{"count": 3, "model": "exponential", "mean": 0.01}, {"count": 2, "model": "exponential", "mean": 0.05}],
    "policy": {"name": "ransgdm", "eta": 0.01, "R": 5},
    "compare": [{"name": "ringmaster_asgd", "eta": 0.01}, {"name": "vanilla_asgd", "eta": 0.01},
                {"name": "delay_adaptive_asgd", "eta": 0.01}, {"name": "rennala", "eta": 0.01, "batch": 3}],
    "horizon": {"max_time": 0.5},
    "seed": 4,
}


def write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def with_(raw, **changes):
    out = yaml.safe_load(yaml.safe_dump(raw))
    for dotted, val in changes.items():
        node = out
        keys = dotted.split("__")
        for k in keys[:-1]:
            node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
        if isinstance(node, list):
            node[int(keys[-1])] = val
        else:
            node[keys[-1]] = val
    return out


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = parse_config(SMALL)
        cfg.dump(tmp_path / "c.yaml")
        assert load_config(tmp_path / "c.yaml") == cfg

    def test_defaults(self):
        cfg = parse_config({"workers": [{"count": 2, "tau": 1.0}], "policy": {"eta": 0.1}, "horizon": {"max_k": 3}})
        assert cfg.problem.dim == 50 and cfg.noise.kind == "none" and cfg.n_workers() == 2

    @pytest.mark.parametrize(
        "changes, path",
        [
            (dict(workers=[]), "workers"),
            (dict(workers__0__mean=-1.0), "workers[0].mean"),
            (dict(workers__1__model="gamma"), "workers[1].model"),
            (dict(noise__kind="cauchy"), "noise.kind"),
            (dict(noise__nu=1.0), "noise"),
            (dict(policy__name="adam"), "policy.name"),
            (dict(policy__eta=0.0), "policy.eta"),
            (dict(policy__R=2.5), "policy.R"),
            (dict(policy__beta=1.0), "policy.beta"),
            (dict(horizon={}), "horizon"),
            (dict(problem__kind="zero_chain"), "noise.kind"),
            (dict(problem__dim=0), "problem.dim"),
            (dict(sweep={"seeds": []}), "sweep.seeds"),
            (dict(sweep={"seeds": [0], "policies": ["sgd"]}), "sweep.policies[0]"),
            (dict(compare=[{"name": "adam"}]), "compare[0].name"),
            (dict(extra=1), "<root>"),
            (dict(problem__bogus=1), "problem"),
            (dict(policy={"name": "ransgdm", "theory": True}), "theory"),
        ],
    )
    def test_field_path_errors(self, changes, path):
        with pytest.raises(ConfigError) as exc:
            parse_config(with_(SMALL, **changes))
        assert exc.value.path == path
        assert str(exc.value).startswith(path)

    def test_bad_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("workers: [unclosed")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_theory_policy(self, caplog):
        raw = with_(SMALL, policy={"name": "ransgdm", "theory": True},
                    theory={"L": 1.0, "delta": 1.0, "sigma": 1.0, "p": 2.0, "eps": 0.1})
        pol = parse_config(raw).resolved_policy()
        assert pol.R == 7200 and pol.beta == pytest.approx(1 - 1 / 7200)
        raw["policy"]["eta"] = 0.5
        assert parse_config(raw).resolved_policy().eta == 0.5
        assert "overrides" in caplog.text


class TestBuilders:
    def test_workers(self):
        raw = with_(SMALL, workers=[{"count": 2, "model": "deterministic", "tau": 2.0},
                                    {"count": 1, "model": "pareto", "mean": 1.0, "shape": 3.0},
                                    {"count": 1, "model": "universal", "segments": [[0, 0], [1, 2]]}])
        ws = build_workers(parse_config(raw))
        assert ws[:2] == [FixedDeterministic(2.0)] * 2
        assert isinstance(ws[2], FixedStochastic) and isinstance(ws[3], Universal)

    def test_gated_oracles(self):
        raw = with_(SMALL, problem={"kind": "zero_chain", "dim": 5, "lam": 0.5}, noise={"kind": "bernoulli_gate", "q": 0.2})
        cfg = parse_config(raw)
        orcs = build_oracles(build_problem(cfg), cfg, 0, 5)
        assert all(isinstance(o, GatedOracle) and o.q == 0.2 for o in orcs)

    def test_trivial_converges(self):
        res = run_config(parse_config(TRIVIAL))
        assert res.trace.f_gap[-1] < 1e-10
        assert res.state.k == 60


class TestCliRun:
    def test_five_csvs_one_per_policy(self, tmp_path):
        written = cli_run(parse_config(SMALL), tmp_path)
        names = sorted(p.name for p, _ in written)
        assert names == sorted(f"trace_{n}_seed4.csv" for n in
                               ("ransgdm", "ringmaster_asgd", "vanilla_asgd", "delay_adaptive_asgd", "rennala"))
        with open(written[0][0]) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["time_s", "k", "grad_norm", "f_gap", "accepted", "discarded", "policy", "seed"]
        assert rows[-1]["time_s"] == "0.5" and rows[0]["policy"] == "ransgdm"

    def test_byte_identical(self, tmp_path):
        cfg = parse_config(SMALL)
        a = cli_run(cfg, tmp_path / "a")
        b = cli_run(cfg, tmp_path / "b")
        for (pa, _), (pb, _) in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_seed_matters(self, tmp_path):
        a = cli_run(parse_config(SMALL), tmp_path / "a")[0][0].read_bytes()
        b = cli_run(parse_config(with_(SMALL, seed=5)), tmp_path / "b")[0][0].read_bytes()
        assert a != b


class TestSweep:
    RAW = with_(SMALL, sweep={"seeds": [0, 1, 2], "policies": ["ransgdm", "vanilla_asgd"], "eta_grid": [0.001, 0.01],
                              "R_grid": [2, 6], "bins": 4})

    def test_schema_and_counts(self, tmp_path):
        path, best = cli_sweep(parse_config(self.RAW), tmp_path)
        with open(path) as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        assert tuple(reader.fieldnames) == SWEEP_COLUMNS
        # (2 eta x 2 R + 2 eta) configs x 3 seeds x 4 bins
        assert len(rows) == (4 + 2) * 3 * 4
        assert {b["policy"] for b in best} == {"ransgdm", "vanilla_asgd"}

    def test_aggregate_quantiles(self):
        results = execute_sweep(parse_config(self.RAW))
        rows = aggregate_sweep(results, 4)
        group = [r for r in rows if r["policy"] == "ransgdm" and r["eta"] == 0.01 and r["R"] == 6 and
                 r["time_bin"] == rows[-1]["time_bin"]]
        vals = [r["f_gap"] for r in group]
        assert group[0]["f_gap_median"] == np.median(vals)
        assert group[0]["f_gap_q10"] <= group[0]["f_gap_median"] <= group[0]["f_gap_q90"]

    def test_best_settings_picks_minimum(self):
        results = execute_sweep(parse_config(self.RAW))
        best = {b["policy"]: b for b in best_settings(results)}
        finals: dict = {}
        for run, trace, _ in results:
            finals.setdefault((run.policy, run.eta, run.R), []).append(trace.f_gap[-1])
        want = min((np.median(v), k) for k, v in finals.items() if k[0] == "ransgdm")
        assert (best["ransgdm"]["eta"], best["ransgdm"]["R"]) == want[1][1:]

    def test_sweep_deterministic(self, tmp_path):
        a, _ = cli_sweep(parse_config(self.RAW), tmp_path / "a")
        b, _ = cli_sweep(parse_config(self.RAW), tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()


class TestCommandLine:
    def test_run(self, tmp_path, capsys):
        cfg = write(tmp_path, TRIVIAL)
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert "f_gap=0" in capsys.readouterr().out
        assert (tmp_path / "o" / "trace_ringmaster_asgd_seed0.csv").exists()

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, TRIVIAL)
        assert main(["run", str(cfg), "--out", str(tmp_path), "--seed", "9"]) == 0
        assert (tmp_path / "trace_ringmaster_asgd_seed9.csv").exists()

    def test_validation_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, with_(TRIVIAL, policy__eta=-1.0))
        assert main(["run", str(cfg)]) == 1
        assert "policy.eta" in capsys.readouterr().err

    def test_guard_exit_code(self, tmp_path):
        raw = with_(TRIVIAL, workers=[{"count": 1, "model": "universal", "segments": [[0, 1], [2, 0]]}])
        assert main(["run", str(write(tmp_path, raw)), "--out", str(tmp_path)]) == 3

    def test_bounds(self, tmp_path, capsys):
        assert main(["bounds", "--eps", "0.001", "--taus", "1", "2", "4", "--out", str(tmp_path)]) == 0
        assert "lower_bound_fixed" in capsys.readouterr().out
        text = (tmp_path / "bounds.csv").read_text()
        assert text.startswith("quantity,value,note\n")

    def test_bounds_from_config(self, tmp_path, capsys):
        raw = with_(TRIVIAL, theory={"L": 1.0, "delta": 1.0, "sigma": 1.0, "p": 2.0, "eps": 0.1})
        assert main(["bounds", "--config", str(write(tmp_path, raw))]) == 0
        assert "t_of_R" in capsys.readouterr().out

    def test_bounds_invalid(self):
        assert main(["bounds", "--p", "3"]) == 1

    def test_sweep(self, tmp_path, capsys):
        raw = with_(TRIVIAL, horizon={"max_k": 3}, sweep={"seeds": [0, 1], "eta_grid": [0.5, 1.0], "R_grid": [1]})
        assert main(["sweep", str(write(tmp_path, raw)), "--out", str(tmp_path)]) == 0
        assert "best ringmaster_asgd: eta=1" in capsys.readouterr().out
        assert (tmp_path / "sweep.csv").exists() and (tmp_path / "best.csv").exists()

    def test_verify_and_fault(self, tmp_path, capsys):
        assert main(["verify", "--quick", "--out", str(tmp_path)]) == 0
        assert "FAIL" not in (tmp_path / "verify_report.txt").read_text()
        assert main(["verify", "--quick", "--inject-fault", "eta"]) == 2
        assert "[FAIL] staleness" in capsys.readouterr().out
