import argparse
import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ajpq import cli
from ajpq.evaluator import Dataset, evaluate, load_dataset, save_dataset
from ajpq.ir import load_model
from ajpq.quantizer import QuantPlan, load_plan, save_plan
from ajpq.search import read_trace


@pytest.fixture(scope="module")
def search_run(mininet_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("search")
    code = cli.main(["search", "--model", str(mininet_files["model"]), "--data", str(mininet_files["val"]),
                     "--out", str(out), "--sc", "0.3", "--episodes", "4", "--seed", "1"])
    return code, out


def test_search_writes_artifacts(search_run):
    code, out = search_run
    assert code == 0
    for name in ("best_plan.json", "compressed.model", "trace.jsonl", "trace_plans.jsonl", "agent.ckpt"):
        assert (out / name).exists()
    assert len(read_trace(out / "trace.jsonl")) == 4
    doc = json.loads((out / "best_plan.json").read_text())
    assert set(doc["provenance"]) >= {"episode", "reward"}


def test_search_summary_row(mininet_files, tmp_path, capsys):
    cli.main(["search", "--model", str(mininet_files["model"]), "--data", str(mininet_files["val"]),
              "--out", str(tmp_path), "--sc", "0.3", "--episodes", "1"])
    row = capsys.readouterr().out.strip()
    fields = dict(kv.split("=") for kv in row.split())
    assert {"reward", "r_comp", "r_flops", "top1", "top5", "metric", "episodes"} <= set(fields)


def test_missing_model_names_path(tmp_path, capsys):
    code = cli.main(["search", "--model", str(tmp_path / "ghost.model"), "--data", "x", "--out", str(tmp_path)])
    assert code == 2
    assert "ghost.model" in capsys.readouterr().err


def test_bad_sc_is_config_error(tmp_path):
    assert cli.main(["search", "--model", "m", "--data", "d", "--out", str(tmp_path), "--sc", "1.5"]) == 1


def test_unknown_flag_exits_one():
    with pytest.raises(SystemExit) as exc:
        cli.main(["search", "--frobnicate"])
    assert exc.value.code == 1


def test_infeasible_best_exit_code(mininet_files, tmp_path):
    code = cli.main(["search", "--model", str(mininet_files["model"]), "--data", str(mininet_files["val"]),
                     "--out", str(tmp_path), "--sc", "0.001", "--episodes", "2"])
    assert code == 3
    assert (tmp_path / "best_plan.json").exists()


class TestConfigPrecedence:
    def ns(self, **kw):
        base = {k: None for k in cli.SEARCH_FLAGS}
        base["config"] = None
        base.update(kw)
        return argparse.Namespace(**base)

    def test_defaults(self):
        cfg = cli.build_search_config(self.ns())
        assert (cfg.sc, cfg.bit_max, cfg.batch, cfg.a_min_conv, cfg.a_min_fc, cfg.agent.sigma) == \
            (0.2, 8, 60, 0.6, 0.7, 0.9)

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"sc": 0.4, "episodes": 7, "agent": {"hidden": [8, 8]}}))
        cfg = cli.build_search_config(self.ns(config=str(path), episodes=3))
        assert (cfg.sc, cfg.episodes, cfg.agent.hidden) == (0.4, 3, (8, 8))

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"scc": 0.4}))
        with pytest.raises(cli.UsageError):
            cli.build_search_config(self.ns(config=str(path)))

    def test_malformed_json_exit(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{nope")
        assert cli.main(["search", "--model", "m", "--data", "d", "--out", str(tmp_path),
                         "--config", str(path)]) == 1


class TestApply:
    def test_reproduces_reported_size(self, search_run, mininet_files, tmp_path, capsys):
        _, out = search_run
        code = cli.main(["apply", "--model", str(mininet_files["model"]), "--plan", str(out / "best_plan.json"),
                         "--out", str(tmp_path / "c.model")])
        assert code == 0
        fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
        best = json.loads((out / "best_plan.json").read_text())["provenance"]["episode"]
        assert int(fields["size_bits"]) == read_trace(out / "trace.jsonl")[best]["size_bits"]
        assert (tmp_path / "c.model").read_bytes() == (out / "compressed.model").read_bytes()

    def test_float_plan_round_trips_model(self, mininet, mininet_files, tmp_path):
        save_plan(QuantPlan.uniform(mininet, 32), tmp_path / "p.json")
        assert cli.main(["apply", "--model", str(mininet_files["model"]), "--plan", str(tmp_path / "p.json"),
                         "--out", str(tmp_path / "same.model")]) == 0
        assert (tmp_path / "same.model").read_bytes() == mininet_files["model"].read_bytes()

    def test_shape_mismatch(self, mininet, mininet_files, tmp_path, capsys):
        bits = [np.full(c + 1, 8) for c in mininet.channel_counts]
        save_plan(QuantPlan(tuple(bits), 8, "fixed"), tmp_path / "p.json")
        code = cli.main(["apply", "--model", str(mininet_files["model"]), "--plan", str(tmp_path / "p.json"),
                         "--out", str(tmp_path / "x.model")])
        assert code == 2 and "do not match" in capsys.readouterr().err

    def test_malformed_plan(self, mininet_files, tmp_path):
        (tmp_path / "p.json").write_text('{"bits": 3}')
        assert cli.main(["apply", "--model", str(mininet_files["model"]), "--plan", str(tmp_path / "p.json"),
                         "--out", str(tmp_path / "x.model")]) == 2


class TestEval:
    def test_self_baseline_has_zero_delta(self, mininet_files, capsys):
        m = str(mininet_files["model"])
        assert cli.main(["eval", "--model", m, "--data", str(mininet_files["val"]), "--baseline", m]) == 0
        fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
        assert float(fields["d_top1"]) == 0.0 and float(fields["d_top5"]) == 0.0

    def test_compressed_model_matches_trace_metric(self, search_run, mininet_files):
        _, out = search_run
        best = load_plan(out / "best_plan.json")
        rows = read_trace(out / "trace.jsonl")
        ep = json.loads((out / "best_plan.json").read_text())["provenance"]["episode"]
        rep = evaluate(load_model(out / "compressed.model"), load_dataset(mininet_files["val"]))
        assert rep.top1 == rows[ep]["metric"] == rows[ep]["metrics"]["top1"]
        assert rep.top5 == rows[ep]["metrics"]["top5"]
        assert rows[ep]["plan_digest"] == best.digest()

    def test_plan_flag_reports_ratios(self, search_run, mininet_files, capsys):
        _, out = search_run
        cli.main(["eval", "--model", str(mininet_files["model"]), "--data", str(mininet_files["val"]),
                  "--plan", str(out / "best_plan.json")])
        assert "r_comp=" in capsys.readouterr().out

    def test_empty_dataset(self, mininet, mininet_files, tmp_path):
        save_dataset(Dataset(np.zeros((0,) + mininet.input_shape), np.zeros(0, int), 10), tmp_path / "e.dataset")
        assert cli.main(["eval", "--model", str(mininet_files["model"]), "--data", str(tmp_path / "e.dataset")]) != 0


class TestReport:
    def test_csv_contents(self, search_run, mininet, tmp_path):
        _, out = search_run
        assert cli.main(["report", "--trace", str(out / "trace.jsonl"), "--out", str(tmp_path)]) == 0
        trace = read_trace(out / "trace.jsonl")
        with open(tmp_path / "rewards.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(trace)
        assert [float(r["reward"]) for r in rows] == [t["reward"] for t in trace]
        with open(tmp_path / "heatmap.csv") as fh:
            heat = list(csv.reader(fh))
        assert len(heat) - 1 == sum(mininet.channel_counts)
        assert len(heat[0]) == 2 + len(trace)

    def test_missing_trace(self, tmp_path):
        assert cli.main(["report", "--trace", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 2


def test_fixtures_subcommand(tmp_path, monkeypatch, capsys):
    seen = {}

    def fake(spec, out):
        seen["seed"] = spec.seed
        return {"model": tmp_path / "m.model"}

    monkeypatch.setattr(cli, "make_fixtures", fake)
    assert cli.main(["fixtures", "make", "--seed", "5", "--out", str(tmp_path)]) == 0
    assert seen["seed"] == 5 and "m.model" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ajpq.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "search" in res.stdout
