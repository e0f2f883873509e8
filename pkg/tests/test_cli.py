import json

import numpy as np
import pytest

from memforecast import fixtures, store, synth
from memforecast.cli import main
from memforecast.synth import write_token_file_for_masks


WORKED_PATTERNS = [
    [0, 1, 1, 0, 1, 1, 1, 1, 0, 1],
    [0] * 10,
    [1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
    [1] * 10,
]


def write_worked_token_file(path):
    masks = np.array([sum(1 << i for i, b in enumerate(p) if b)
                      for p in WORKED_PATTERNS], dtype=np.uint64)
    write_token_file_for_masks(path, np.arange(4, dtype=np.uint64), masks,
                               prompt_len=4, max_cont_len=10)


def synth_config_file(tmp_path):
    config = synth.SynthConfig(
        seed=9, universe=5000,
        models=(synth.SynthModel("s", 10**7, 0.05),
                synth.SynthModel("l", 10**8, 0.10)),
        checkpoints=(2500, 5000), mode="nested")
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(synth.config_to_dict(config)))
    return path


class TestScoreSetsPipeline:
    def test_worked_example_extraction(self, tmp_path, capsys):
        tok = tmp_path / "t.mtok"
        write_worked_token_file(tok)
        out = tmp_path / "out"
        assert main(["--out-dir", str(out), "score", "--tokens", str(tok),
                     "--records", "t.mrec", "--model", "m",
                     "--checkpoint", "c"]) == 0
        assert main(["--out-dir", str(out), "sets", "--records",
                     str(out / "t.mrec"), "--set", "t.mset",
                     "--threshold", "10"]) == 0
        threshold, ids = store.read_set_file(out / "t.mset")
        assert threshold == 10
        assert ids.tolist() == [3]  # only the fully matched sequence

    def test_no_writes_outside_out_dir(self, tmp_path, monkeypatch):
        tok = tmp_path / "in" / "t.mtok"
        tok.parent.mkdir()
        write_worked_token_file(tok)
        out = tmp_path / "only-here"
        before = set(p for p in tmp_path.rglob("*"))
        main(["--out-dir", str(out), "score", "--tokens", str(tok),
              "--records", "t.mrec", "--model", "m", "--checkpoint", "c"])
        created = set(tmp_path.rglob("*")) - before
        assert all(out in p.parents or p == out for p in created)


class TestSynthCheckValidate:
    def test_pipeline(self, tmp_path, capsys):
        cfg = synth_config_file(tmp_path)
        out = tmp_path / "out"
        assert main(["--out-dir", str(out), "synth", "--config", str(cfg),
                     "--dir", "suite"]) == 0
        manifest = out / "suite" / "manifest.json"
        truth = out / "suite" / "ground_truth.json"
        assert main(["--out-dir", str(out), "validate", "--manifest",
                     str(manifest)]) == 0
        assert main(["--out-dir", str(out), "check", "--manifest",
                     str(manifest), "--truth", str(truth)]) == 0
        assert "overall: PASS" in (out / "check.txt").read_text()

    def test_validate_failure_exits_1(self, tmp_path, capsys):
        cfg = synth_config_file(tmp_path)
        out = tmp_path / "out"
        main(["--out-dir", str(out), "synth", "--config", str(cfg),
              "--dir", "suite"])
        (out / "suite" / "records" / "s__c2500.mrec").unlink()
        assert main(["--out-dir", str(out), "validate", "--manifest",
                     str(out / "suite" / "manifest.json")]) == 1

    def test_check_failure_exits_1(self, tmp_path):
        cfg = synth_config_file(tmp_path)
        out = tmp_path / "out"
        main(["--out-dir", str(out), "synth", "--config", str(cfg),
              "--dir", "suite"])
        victim = out / "suite" / "records" / "l__c5000.mrec"
        raw = bytearray(victim.read_bytes())
        raw[30] ^= 4
        victim.write_bytes(bytes(raw))
        assert main(["--out-dir", str(out), "check", "--manifest",
                     str(out / "suite" / "manifest.json"), "--truth",
                     str(out / "suite" / "ground_truth.json")]) == 1


class TestAnalytics:
    def make_suite(self, tmp_path):
        cfg = synth_config_file(tmp_path)
        out = tmp_path / "out"
        main(["--out-dir", str(out), "synth", "--config", str(cfg),
              "--dir", "suite"])
        return out, out / "suite" / "manifest.json"

    def test_predict_on_suite(self, tmp_path):
        out, manifest = self.make_suite(tmp_path)
        assert main(["--out-dir", str(out), "predict", "--suite", str(manifest),
                     "--predictor", "s@c5000", "--target", "l@c5000"]) == 0
        report = json.loads((out / "predict.json").read_text())
        assert report["precision"] == 1.0  # nested mode: small subset of large
        assert 0 < report["recall"] < 1

    def test_predict_on_fixture_grid(self, tmp_path):
        grid = tmp_path / "size.csv"
        grid.write_text(fixtures.fixture_text(fixtures.SIZE_GRID))
        out = tmp_path / "out"
        assert main(["--out-dir", str(out), "predict", "--grid-csv", str(grid),
                     "--predictor", "70M@final"]) == 0
        report = json.loads((out / "predict.json").read_text())
        assert report["precision"] == 0.956
        assert report["recall"] == 0.197

    def test_correlate(self, tmp_path):
        out, manifest = self.make_suite(tmp_path)
        assert main(["--out-dir", str(out), "correlate", "--suite",
                     str(manifest), "--model", "l"]) == 0
        header, rows = store.parse_csv((out / "correlation.csv").read_text())
        assert header == ["", "l@c2500", "l@c5000"]
        assert rows[0][1] == "1"

    def test_grid_from_csv_reproduces_fixture(self, tmp_path):
        src = tmp_path / "fix.csv"
        text = fixtures.fixture_text(fixtures.SIZE_GRID)
        src.write_text(text)
        out = tmp_path / "out"
        assert main(["--out-dir", str(out), "grid", "--from-csv", str(src),
                     "--grid", "replay.csv"]) == 0
        assert (out / "replay.csv").read_text() == text

    def test_frontier_and_recommend(self, tmp_path):
        grid = tmp_path / "g.csv"
        grid.write_text(fixtures.fixture_text(fixtures.SIZE_GRID))
        out = tmp_path / "out"
        budget = str(max(r.cost for r in fixtures.load_grid(fixtures.SIZE_GRID)))
        assert main(["--out-dir", str(out), "frontier", "--grid-csv", str(grid),
                     "--budgets", f"1,{budget}"]) == 0
        header, rows = store.parse_csv((out / "frontier.csv").read_text())
        assert rows[0][1] == "false"  # budget 1: infeasible
        assert rows[1][2] == "6.9B"
        assert main(["--out-dir", str(out), "recommend", "--grid-csv",
                     str(grid), "--budget", budget]) == 0
        report = json.loads((out / "recommend.json").read_text())
        assert report["feasible"] is True
        assert report["row"]["model"] == "6.9B"

    def test_recommend_budget_zero_infeasible_exit_0(self, tmp_path, capsys):
        grid = tmp_path / "g.csv"
        grid.write_text(fixtures.fixture_text(fixtures.SIZE_GRID))
        out = tmp_path / "out"
        code = main(["--out-dir", str(out), "recommend", "--grid-csv",
                     str(grid), "--budget", "0"])
        assert code == 0
        assert "infeasible" in capsys.readouterr().out
        report = json.loads((out / "recommend.json").read_text())
        assert report["feasible"] is False

    def test_distribution(self, tmp_path):
        out, manifest = self.make_suite(tmp_path)
        records = out / "suite" / "records" / "l__c5000.mrec"
        assert main(["--out-dir", str(out), "distribution", "--records",
                     str(records), "--threshold", "32", "--no-fit"]) == 0
        header, rows = store.parse_csv((out / "histogram.csv").read_text())
        assert header == ["matched_tokens", "score", "count"]
        assert len(rows) == 33

    def test_compare_suites(self, tmp_path):
        out, manifest = self.make_suite(tmp_path)
        assert main(["--out-dir", str(out), "compare-suites",
                     "--suite-a", str(manifest), "--suite-b", str(manifest)]) == 0
        header, rows = store.parse_csv((out / "compare.csv").read_text())
        assert [r[3] for r in rows] == ["0", "0"]


class TestCliContract:
    def test_unknown_flag_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as err:
            main(["--out-dir", str(tmp_path), "recommend", "--grid-csv", "x",
                  "--budget", "1", "--frobnicate"])
        assert err.value.code == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_subcommand_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_analysis_error_exits_1(self, tmp_path, capsys):
        assert main(["--out-dir", str(tmp_path), "validate", "--manifest",
                     str(tmp_path / "nope.json")]) == 1

    def test_reruns_byte_identical(self, tmp_path):
        cfg = synth_config_file(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            main(["--out-dir", str(out), "synth", "--config", str(cfg),
                  "--dir", "suite"])
            main(["--out-dir", str(out), "predict",
                  "--suite", str(out / "suite" / "manifest.json"),
                  "--predictor", "s@c5000", "--target", "l@c5000"])
        assert (out1 / "predict.json").read_bytes() \
            == (out2 / "predict.json").read_bytes()

    def test_env_var_out_dir(self, tmp_path, monkeypatch):
        grid = tmp_path / "g.csv"
        grid.write_text(fixtures.fixture_text(fixtures.SIZE_GRID))
        target = tmp_path / "from-env"
        monkeypatch.setenv("MEMFORECAST_OUT", str(target))
        # parser default is read at build time, so build a fresh one
        assert main(["recommend", "--grid-csv", str(grid), "--budget", "0"]) == 0
        assert (target / "recommend.json").exists()
