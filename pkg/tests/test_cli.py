"""End-to-end CLI tests: real config files, subprocesses, and output trees."""

import csv
import json
import sys

import pytest

from conftest import FIXTURES, STUB, make_entry, make_events, make_log
from edgebench import storage
from edgebench.cli import main
from edgebench.model import ConfigPoint
from edgebench.orchestrator import RunStatus
from edgebench.recommender import Dataset


def write_sweep_config(tmp_path, extra="", iterations=2, name="bench.toml"):
    """A one-point sweep against the scripted stub, deterministic sampler."""
    body = f"""
[[device]]
name = "dev-a"
cuda_cores = 512
memory_mb = 4096
power_models = ["MAXN"]

[[model]]
id = "m1"
parameters = 1000

[sweep]
quantizations = ["int4"]
iterations = {iterations}
token_target = 8
idle_seconds = 0.05

[sampler]
interval_s = 0.25
deterministic = true
trace_text = "0.0 5.0 0.0 100.0"

[workload]
command = "{sys.executable} {STUB} --exact --tokens {{tokens}} --model {{model}} --quant {{quant}} {extra}"
timeout_s = 10.0
"""
    path = tmp_path / name
    path.write_text(body)
    return path


class TestSweepCommand:
    def test_writes_one_log_per_run(self, tmp_path, capsys):
        cfg = write_sweep_config(tmp_path)
        out = tmp_path / "logs"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        for i in range(2):
            assert (out / f"dev-a_MAXN_m1_int4_iter{i}.jsonl").is_file()
        log = storage.parse_log(out / "dev-a_MAXN_m1_int4_iter0.jsonl")
        assert log.status.is_completed
        assert log.tokens_generated == 8
        assert len(log.events) == 6
        assert log.samples
        stdout = capsys.readouterr().out
        assert "dev-a/MAXN/m1/int4 iter0: completed" in stdout
        assert "2 runs, 0 failed" in stdout

    def test_workload_failures_are_recorded_not_fatal(self, tmp_path, capsys):
        cfg = write_sweep_config(tmp_path, extra="--fail gen")
        out = tmp_path / "logs"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        log = storage.parse_log(out / "dev-a_MAXN_m1_int4_iter0.jsonl")
        assert log.status.reason == "crash"
        stdout = capsys.readouterr().out
        assert "failed (crash)" in stdout
        assert "2 failed" in stdout

    def test_invalid_config_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "broken.toml"
        cfg.write_text('[[device]]\nname = "dev-a"\n')
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_unusable_out_path_exits_2_before_running(self, tmp_path, capsys):
        cfg = write_sweep_config(tmp_path)
        occupied = tmp_path / "occupied"
        occupied.write_text("not a directory")
        assert main(["sweep", "--config", str(cfg), "--out", str(occupied)]) == 2
        assert capsys.readouterr().err.startswith("error:")
        assert occupied.is_file()


class TestAnalyzeCommand:
    A = ConfigPoint("dev-a", "MAXN", "m1", "int4")
    B = ConfigPoint("dev-b", "MAXN", "m1", "int4")

    def write_logs(self, log_dir):
        log_dir.mkdir()
        for i in range(2):
            log = make_log(config=self.A, iteration=i)
            storage.write_log(log, log_dir / storage.log_filename(self.A, i))
        storage.write_log(
            make_log(config=self.B, iteration=0),
            log_dir / storage.log_filename(self.B, 0),
        )
        failed = make_log(
            events=make_events()[:3],
            tokens=0,
            status=RunStatus.failed("crash"),
            config=self.B,
            iteration=1,
        )
        storage.write_log(failed, log_dir / storage.log_filename(self.B, 1))

    def test_builds_dataset_and_exclusions(self, tmp_path, capsys):
        log_dir = tmp_path / "logs"
        self.write_logs(log_dir)
        out = tmp_path / "results"
        assert main(["analyze", str(log_dir), "--out", str(out)]) == 0
        dataset = storage.read_dataset(out / "dataset.csv")
        assert set(dataset.entries) == {self.A}
        assert dataset.entries[self.A].medians.load_latency_s == pytest.approx(1.0)
        assert dataset.entries[self.A].iteration_count == 2
        excluded = storage.read_exclusions(out / "excluded.csv")
        assert [(e.config, e.reason) for e in excluded] == [(self.B, "crash")]
        assert "1 excluded" in capsys.readouterr().out

    def test_json_lines_format(self, tmp_path):
        log_dir = tmp_path / "logs"
        self.write_logs(log_dir)
        out = tmp_path / "results"
        assert main(["analyze", str(log_dir), "--out", str(out), "--format", "json-lines"]) == 0
        assert (out / "dataset.jsonl").is_file()
        assert set(storage.read_dataset(out / "dataset.jsonl").entries) == {self.A}

    def test_empty_log_dir_exits_1(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["analyze", str(empty), "--out", str(tmp_path / "o")]) == 1
        assert "no parseable run logs" in capsys.readouterr().err


class TestIngestCommand:
    def test_merges_both_fixture_tables(self, tmp_path):
        out = tmp_path / "ds"
        rc = main(
            ["ingest", str(FIXTURES / "load_latency.csv"), "--schema", "load-latency",
             "--out", str(out)]
        )
        assert rc == 0
        rc = main(
            ["ingest", str(FIXTURES / "gen_latency.csv"), "--schema", "gen-latency",
             "--out", str(out)]
        )
        assert rc == 0
        dataset = storage.read_dataset(out / "dataset.csv")
        assert len(dataset.entries) == 204
        devkit = ConfigPoint("AGX Orin Devkit", "MAXN", "70m", "int4")
        assert dataset.entries[devkit].medians.load_latency_s == pytest.approx(2.280)
        assert dataset.entries[devkit].medians.gen_latency_s is not None
        excluded = storage.read_exclusions(out / "excluded.csv")
        assert len(excluded) == 6
        assert all(e.config.device == "Orin Nano 4GB" for e in excluded)

    def test_unknown_schema_rejected_by_parser(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["ingest", str(FIXTURES / "gen_latency.csv"), "--schema", "sideways",
                  "--out", str(tmp_path)])


@pytest.fixture
def fixture_dataset(tmp_path):
    """dataset.csv built from both shipped tables, via the ingest command."""
    out = tmp_path / "ds"
    for table, schema in (("load_latency.csv", "load-latency"), ("gen_latency.csv", "gen-latency")):
        assert main(["ingest", str(FIXTURES / table), "--schema", schema, "--out", str(out)]) == 0
    return out / "dataset.csv"


class TestRecommendCommand:
    def test_inline_objective(self, fixture_dataset, capsys):
        rc = main(["recommend", str(fixture_dataset), "--objective", "gen-latency"])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "AGX Orin Devkit/MAXN/70m/none" in stdout
        assert "7.033" in stdout

    def test_infeasible_query_is_an_answer(self, fixture_dataset, capsys):
        rc = main(
            ["recommend", str(fixture_dataset), "--constraint", "gen-latency<=7.0",
             "--objective", "gen-latency"]
        )
        assert rc == 0
        assert "infeasible" in capsys.readouterr().out

    def test_query_file_and_csv_output(self, fixture_dataset, tmp_path, capsys):
        query = tmp_path / "queries.toml"
        query.write_text(
            '[[query]]\nconstraints = ["gen-latency<=7.1"]\nobjective = "gen-latency"\n\n'
            '[[query]]\nobjective = "gen-latency"\ndirection = "max"\n'
        )
        out = tmp_path / "rec"
        rc = main(["recommend", str(fixture_dataset), "--query", str(query), "--out", str(out)])
        assert rc == 0
        with open(out / "recommend.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "constraints"
        assert len(rows) == 3
        assert rows[1][3:7] == ["AGX Orin Devkit", "MAXN", "70m", "none"]
        assert float(rows[1][7]) == pytest.approx(7.033)
        assert rows[2][2] == "max"

    def test_query_file_missing_objective_exits_1(self, fixture_dataset, tmp_path, capsys):
        query = tmp_path / "queries.toml"
        query.write_text('[[query]]\nconstraints = ["gen-latency<=7.1"]\n')
        assert main(["recommend", str(fixture_dataset), "--query", str(query)]) == 1
        assert "objective" in capsys.readouterr().err

    def test_query_and_inline_flags_conflict(self, fixture_dataset, tmp_path, capsys):
        query = tmp_path / "queries.toml"
        query.write_text('[[query]]\nobjective = "gen-latency"\n')
        rc = main(
            ["recommend", str(fixture_dataset), "--query", str(query),
             "--objective", "gen-latency"]
        )
        assert rc == 1
        assert "mutually exclusive" in capsys.readouterr().err

    def test_unknown_metric_exits_1(self, fixture_dataset, capsys):
        assert main(["recommend", str(fixture_dataset), "--objective", "warp-speed"]) == 1
        assert "unknown metric" in capsys.readouterr().err

    def test_no_objective_exits_1(self, fixture_dataset, capsys):
        assert main(["recommend", str(fixture_dataset)]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_missing_dataset_file_exits_2(self, tmp_path, capsys):
        rc = main(["recommend", str(tmp_path / "nope.csv"), "--objective", "gen-latency"])
        assert rc == 2
        assert capsys.readouterr().err.startswith("error:")


def full_entry(quant, scale=1.0):
    return make_entry(
        "dev-a", "MAXN", "m1", quant,
        load_latency_s=2.0 * scale,
        gen_latency_s=10.0 * scale,
        time_per_token_s=0.02 * scale,
        peak_power_gen_w=30.0,
        energy_load_j=40.0,
        energy_gen_j=300.0,
        peak_gpu_mem_mb=900.0,
        peak_ram_mb=2000.0,
    )


class TestReportCommand:
    def write_full_dataset(self, tmp_path):
        entries = {e.config: e for e in (full_entry("int4"), full_entry("none", scale=1.5))}
        path = tmp_path / "dataset.csv"
        storage.write_dataset(Dataset(entries), path)
        return path

    def test_all_families_render_series_and_png(self, tmp_path, capsys):
        ds = self.write_full_dataset(tmp_path)
        out = tmp_path / "figs"
        assert main(["report", str(ds), "--out", str(out)]) == 0
        for family in ("latency", "memory", "power", "energy", "time_per_token", "quant_comp"):
            assert (out / f"{family}.csv").is_file()
            png = out / f"{family}.png"
            assert png.is_file()
            assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert capsys.readouterr().out.count(" + ") == 6

    def test_time_per_token_falls_back_to_gen_latency(self, tmp_path):
        entry = make_entry("dev-a", "MAXN", "m1", "int4", gen_latency_s=7.033)
        ds = tmp_path / "dataset.csv"
        storage.write_dataset(Dataset({entry.config: entry}), ds)
        out = tmp_path / "figs"
        rc = main(["report", str(ds), "--figure", "time-per-token", "--out", str(out)])
        assert rc == 0
        with open(out / "time_per_token.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][-1] == "time_per_token_s"
        assert float(rows[1][-1]) == pytest.approx(7.033 / 512, abs=5e-7)
        assert float(rows[1][-1]) == pytest.approx(0.013736, abs=5e-7)

    def test_config_overrides_token_target(self, tmp_path):
        entry = make_entry("dev-a", "MAXN", "m1", "int4", gen_latency_s=7.033)
        ds = tmp_path / "dataset.csv"
        storage.write_dataset(Dataset({entry.config: entry}), ds)
        cfg = write_sweep_config(tmp_path)  # token_target = 8
        out = tmp_path / "figs"
        rc = main(
            ["report", str(ds), "--figure", "time-per-token", "--out", str(out),
             "--config", str(cfg)]
        )
        assert rc == 0
        with open(out / "time_per_token.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert float(rows[1][-1]) == pytest.approx(7.033 / 8)

    def test_json_lines_series(self, tmp_path):
        ds = self.write_full_dataset(tmp_path)
        out = tmp_path / "figs"
        rc = main(
            ["report", str(ds), "--figure", "power", "--out", str(out),
             "--format", "json-lines"]
        )
        assert rc == 0
        lines = (out / "power.jsonl").read_text().splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert rec["peak_power_gen_w"] == 30.0

    def test_missing_metric_exits_1(self, tmp_path, capsys):
        entry = make_entry("dev-a", "MAXN", "m1", "int4", gen_latency_s=7.0)
        ds = tmp_path / "dataset.csv"
        storage.write_dataset(Dataset({entry.config: entry}), ds)
        rc = main(["report", str(ds), "--figure", "memory", "--out", str(tmp_path / "f")])
        assert rc == 1
        assert "memory" in capsys.readouterr().err

    def test_empty_dataset_exits_1(self, tmp_path, capsys):
        ds = tmp_path / "dataset.csv"
        storage.write_dataset(Dataset({}), ds)
        assert main(["report", str(ds), "--out", str(tmp_path / "f")]) == 1
        assert "no entries" in capsys.readouterr().err

    def test_unknown_figure_rejected_by_parser(self, tmp_path):
        ds = self.write_full_dataset(tmp_path)
        with pytest.raises(SystemExit):
            main(["report", str(ds), "--figure", "sparkline"])
