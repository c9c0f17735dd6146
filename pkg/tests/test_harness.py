import csv
import json

import numpy as np
import pytest

from calibeat import cli
from calibeat import procedures as proc
from calibeat.adversaries import AdaptiveWorstCase, BetaBinomialSource, ConstantSide, CyclicSide
from calibeat.geometry import Space, make_grid, make_log_grid
from calibeat.harness import config as cfgmod
from calibeat.harness.compare import compare, ranking_rows
from calibeat.harness.experiments import aggregate, run_many, run_replication
from calibeat.harness.montecarlo import (
    calibrated_batch,
    log_calibrated_batch,
    lowerbound_batch,
    replication_seeds,
)
from calibeat.harness.runner import simulate
from calibeat.harness.traces import (
    ScoreFileError,
    read_forecast_csv,
    score_file,
    trace_text,
    verify_trace,
    write_trace,
)

UNIT = Space.cube(1)


def small_cfg(**kw):
    cfg = {
        "space": {"kind": "cube", "dim": 1},
        "procedure": {"name": "simple_calibeat"},
        "source": {"name": "iid", "params": {"p": 0.3}},
        "sides": [{"name": "cyclic", "params": {"period": 2}}],
        "horizon": 200,
    }
    cfg.update(kw)
    return cfgmod.validate(cfg)


class TestConfig:
    def test_defaults_filled(self):
        cfg = small_cfg()
        assert cfg["seeds"] == [0] and cfg["resolution"] == 10 and cfg["bounds"] is True

    def test_unknown_key_rejected(self):
        with pytest.raises(cfgmod.ConfigError, match="horizn|Additional"):
            cfgmod.validate({**small_cfg(), "horizn": 3})

    def test_unknown_procedure(self):
        with pytest.raises(cfgmod.ConfigError):
            small_cfg(procedure={"name": "oracle"})

    def test_procedure_xor_procedures(self):
        with pytest.raises(cfgmod.ConfigError):
            small_cfg(procedures=[{"name": "simple_calibeat"}])

    def test_log_needs_simplex(self):
        with pytest.raises(cfgmod.ConfigError, match="simplex"):
            small_cfg(procedure={"name": "log_simple_calibeat"})

    def test_presets_valid(self):
        for name in cfgmod.PRESETS:
            cfgmod.load(name)

    def test_env_overrides(self):
        cfg = cfgmod.apply_env(small_cfg(), {"CALIBEAT_OUT": "/tmp/x"})
        assert cfg["out"] == "/tmp/x"
        assert cfgmod.worker_count({"CALIBEAT_WORKERS": "3"}) == 3
        assert cfgmod.worker_count({}) == 1
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.worker_count({"CALIBEAT_WORKERS": "many"})

    def test_hash_ignores_out(self):
        a = small_cfg(out="a")
        b = small_cfg(out="b")
        assert cfgmod.config_hash(a) == cfgmod.config_hash(b)
        assert cfgmod.config_hash(a) != cfgmod.config_hash(small_cfg(horizon=201))

    def test_stream_seeds_distinct(self):
        s = cfgmod.stream_seeds(0)
        assert len(set(s)) == 3 and s == cfgmod.stream_seeds(0)

    def test_replication_seeds(self):
        a = replication_seeds(5, 10)
        assert a == replication_seeds(5, 10) and len(set(a)) == 10
        assert replication_seeds(5, 12)[:10] == a


class TestExperiments:
    def test_prefix_consistency(self):
        short = run_replication(small_cfg()["procedure"], small_cfg(horizon=100), 3)
        long = run_replication(small_cfg()["procedure"], small_cfg(horizon=200), 3)
        assert np.array_equal(short.forecasts, long.forecasts[:100])
        for k in short.series:
            assert np.array_equal(short.series[k], long.series[k][:100])

    def test_workers_do_not_change_results(self):
        cfg = small_cfg(seeds=[1, 2, 3])
        a = run_many(cfg["procedure"], cfg, cfg["seeds"], 1)
        b = run_many(cfg["procedure"], cfg, cfg["seeds"], 2)
        assert [trace_text(r) for r in a] == [trace_text(r) for r in b]

    def test_aggregate(self):
        cfg = small_cfg(seeds=[1, 2])
        reps = run_many(cfg["procedure"], cfg, cfg["seeds"])
        s = aggregate(reps, cfg)
        assert s["seeds"] == [1, 2]
        assert s["bounds"][0]["passed"]
        assert s["final_scores"]["mean"]["B"] == pytest.approx(np.mean([r.final["B"] for r in reps]))


class TestTraces:
    def test_write_and_verify(self, tmp_path):
        cfg = small_cfg()
        rep = run_replication(cfg["procedure"], cfg, 0)
        path = tmp_path / "t.csv"
        digest = write_trace(rep, path)
        assert len(digest) == 64
        ver = verify_trace(path)
        assert ver.ok and ver.rows == 200 and ver.max_error <= 1e-12

    def test_verify_detects_tampering(self, tmp_path):
        cfg = small_cfg()
        path = tmp_path / "t.csv"
        write_trace(run_replication(cfg["procedure"], cfg, 0), path)
        rows = list(csv.reader(open(path)))
        col = rows[0].index("B")
        rows[50][col] = repr(float(rows[50][col]) + 1e-3)
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        ver = verify_trace(path)
        assert not ver.ok and "row 50" in ver.errors[0]

    def test_byte_reproducible(self):
        cfg = small_cfg()
        assert trace_text(run_replication(cfg["procedure"], cfg, 4)) == trace_text(
            run_replication(cfg["procedure"], cfg, 4)
        )


def write_csv(path, text):
    path.write_text(text)
    return path


class TestScoreFile:
    def test_figure_one_rows(self, tmp_path):
        lines = ["t,a_1,c_1"] + [f"{t},{1 - (t - 1) % 2},0.5" for t in range(1, 11)]
        res = score_file(write_csv(tmp_path / "f.csv", "\n".join(lines) + "\n"))
        assert res["B"] == 0.25 and res["K_l2"] == 0.0 and res["R"] == 0.25

    def test_side_binning(self, tmp_path):
        lines = ["t,a_1,c_1,b_1"] + [f"{t},{1 - (t - 1) % 2},0.5,{(t - 1) % 2}" for t in range(1, 11)]
        res = score_file(write_csv(tmp_path / "f.csv", "\n".join(lines) + "\n"), "side")
        assert res["R_side"] == 0.0 and res["gap"] == 0.25 and res["N_side"] == 2

    def test_joint_binning(self, tmp_path):
        lines = ["t,a_1,c_1,b_1"] + [f"{t},{1 - (t - 1) % 2},0.5,{(t - 1) % 2}" for t in range(1, 11)]
        res = score_file(write_csv(tmp_path / "f.csv", "\n".join(lines) + "\n"), "joint")
        assert res["R"] == 0.0 and res["K_l2"] == 0.25

    def test_malformed_rows_reported_with_lines(self, tmp_path):
        text = "t,a_1,c_1\n1,1,0.5\n2,x,0.5\n3,1.5,0.5\n5,0,0.5\n6,0\n"
        with pytest.raises(ScoreFileError) as exc:
            read_forecast_csv(write_csv(tmp_path / "bad.csv", text))
        probs = exc.value.problems
        assert any(p.startswith("line 3:") for p in probs)
        assert any(p.startswith("line 4:") and "outside" in p for p in probs)
        assert any(p.startswith("line 5:") and "expected 4" in p for p in probs)
        assert any(p.startswith("line 6:") and "fields" in p for p in probs)

    def test_bad_header(self, tmp_path):
        with pytest.raises(ScoreFileError):
            read_forecast_csv(write_csv(tmp_path / "h.csv", "a_1,c_1\n1,1\n"))

    def test_side_needs_b(self, tmp_path):
        with pytest.raises(ValueError):
            score_file(write_csv(tmp_path / "f.csv", "t,a_1,c_1\n1,1,0.5\n"), "side")


class TestCompare:
    def test_shared_stream_and_single_expert(self):
        cfg = cfgmod.validate({
            "space": {"kind": "cube", "dim": 1},
            "procedures": [
                {"name": "simple_calibeat"},
                {"name": "multi_simple"},
                {"name": "centered_calibeat"},
            ],
            "source": {"name": "iid", "params": {"p": 0.4}},
            "sides": [{"name": "random", "params": {"labels": 3}}],
            "horizon": 300,
        })
        reps = compare(cfg, 2)
        assert all(np.array_equal(reps[0].actions, r.actions) for r in reps)
        rows = ranking_rows(reps)
        by = {r["label"]: r for r in rows}
        assert by["simple_calibeat"]["forecast_hash"] == by["multi_simple"]["forecast_hash"]
        assert [r["rank"] for r in rows] == [1, 2, 3]
        assert all(rows[i]["B"] <= rows[i + 1]["B"] for i in range(2))

    def test_adaptive_rejected(self):
        cfg = small_cfg(source={"name": "adaptive"})
        with pytest.raises(cfgmod.ConfigError):
            compare(cfg, 0)


class TestBatchEquivalence:
    """The vectorized kernels reproduce the object-level runs exactly."""

    @pytest.mark.parametrize("period", [1, 2])
    def test_calibrated(self, period):
        seeds = replication_seeds(3, 4)
        batch = calibrated_batch(seeds, 400, side_period=period, keep_paths=True)
        grid = make_grid(UNIT, 10)
        for i, s in enumerate(seeds):
            if period == 1:
                f, sides = proc.calibrated_forecaster(UNIT, grid, seed=s), []
            else:
                f, sides = proc.calibrated_calibeat(UNIT, grid, seed=s), [CyclicSide(2)]
            sim = simulate(f, AdaptiveWorstCase(UNIT, "announced"), sides, 400)
            assert np.array_equal(batch.forecasts[i], sim.forecasts[:, 0])
            assert np.array_equal(batch.actions[i], sim.actions[:, 0])
            assert batch.B[i, -1] == pytest.approx(sim.ledger.brier(), abs=1e-12)
            assert batch.K[i, -1] == pytest.approx(sim.ledger.calibration_l2(), abs=1e-12)
            if period == 2:
                assert batch.R_side[i, -1] == pytest.approx(sim.side_refinements[0].final(), abs=1e-12)

    def test_log_calibrated(self):
        seeds = replication_seeds(4, 3)
        batch = log_calibrated_batch(seeds, 300, keep_paths=True)
        sp = Space.simplex(2)
        grid = make_log_grid(2, 10)
        for i, s in enumerate(seeds):
            sim = simulate(proc.log_calibrated(sp, grid, seed=s), AdaptiveWorstCase(sp, "announced"), [], 300,
                           flavor="log")
            assert np.array_equal(grid.points[batch.forecasts[i]], sim.forecasts)
            sc = sim.ledger.scores()
            assert batch.L[i] == pytest.approx(sc.L, abs=1e-12)
            assert batch.K_log[i] == pytest.approx(sc.K_log, abs=1e-12)
            assert batch.R_log[i] == pytest.approx(sc.R_log, abs=1e-12)
            assert batch.R_log_online[i] == pytest.approx(sc.online_R_log, abs=1e-12)

    def test_lowerbound(self):
        seeds = replication_seeds(5, 5)
        batch = lowerbound_batch(50.0, 300, seeds)
        for i, s in enumerate(seeds):
            sim = simulate(proc.simple_calibeat(UNIT), BetaBinomialSource(50.0, s), [ConstantSide()], 300)
            assert batch.abar[i] == pytest.approx(sim.actions.mean(), abs=1e-14)
            gap = sim.ledger.brier() - sim.side_refinements[0].final()
            assert batch.gap[i] == pytest.approx(gap, abs=1e-12)


class TestCLI:
    def test_schema(self, capsys):
        assert cli.main(["schema"]) == 0
        assert json.loads(capsys.readouterr().out)["title"] == "calibeat experiment"

    def test_run_writes_traces(self, tmp_path, capsys):
        cfgp = tmp_path / "cfg.json"
        cfgp.write_text(json.dumps({
            "space": {"kind": "cube", "dim": 1},
            "procedure": {"name": "simple_calibeat"},
            "source": {"name": "adaptive"},
            "sides": [{"name": "cyclic", "params": {"period": 2}}],
            "horizon": 100,
        }))
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfgp), "--reps", "2", "--seed", "1", "--out", str(out)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["bounds"][0]["passed"]
        assert len(list(out.glob("trace_simple_calibeat_seed*.csv"))) == 2
        assert (out / "summary_simple_calibeat.json").exists()

    def test_run_bad_config_exit_2(self, tmp_path, capsys):
        cfgp = tmp_path / "cfg.json"
        cfgp.write_text(json.dumps({"space": {"kind": "cube", "dim": 1}}))
        assert cli.main(["run", "--config", str(cfgp)]) == 2
        assert "invalid config" in capsys.readouterr().err

    def test_score_exit_codes(self, tmp_path, capsys):
        good = write_csv(tmp_path / "g.csv", "t,a_1,c_1\n1,1,1\n2,0,0\n")
        assert cli.main(["score", str(good)]) == 0
        assert json.loads(capsys.readouterr().out)["B"] == 0.0
        bad = write_csv(tmp_path / "b.csv", "t,a_1,c_1\n1,1,2\n")
        assert cli.main(["score", str(bad)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_figure1_csv(self, capsys):
        assert cli.main(["figure1", "--t", "10", "--format", "csv"]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        got = {r["forecast"]: (float(r["K"]), float(r["R"]), float(r["B"])) for r in rows}
        assert got["F1"] == (0.0, 0.0, 0.0)
        assert got["F2"][0] == 0.0 and got["F2"][1] == pytest.approx(0.25, abs=1e-14)
        assert got["F3"][0] == pytest.approx(1 / 16, abs=1e-15) and got["F3"][1] == 0.0

    def test_compare(self, tmp_path, capsys):
        cfgp = tmp_path / "cfg.json"
        cfgp.write_text(json.dumps({
            "space": {"kind": "cube", "dim": 1},
            "procedures": [{"name": "simple_calibeat"}, {"name": "centered_calibeat"}],
            "source": {"name": "iid", "params": {"p": 0.5}},
            "sides": [{"name": "cyclic", "params": {"period": 3}}],
            "horizon": 200,
        }))
        assert cli.main(["compare", "--config", str(cfgp), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "ranking.csv").exists() and (tmp_path / "o" / "curves.csv").exists()
        assert len(json.loads(capsys.readouterr().out)["ranking"]) == 2

    def test_lowerbound_small(self, capsys):
        code = cli.main(["lowerbound", "--alpha", "5", "--t", "50", "--reps", "500"])
        res = json.loads(capsys.readouterr().out)
        assert res["replications"] == 500 and code in (0, 1)
        assert res["abar_mean_pass"]
