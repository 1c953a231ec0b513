import json

import pytest

from shipplume.cli import main, parse_config_file
from shipplume.fileio import write_atomic

BRIGHT = ["--grid-rows", "70", "--grid-cols", "70",
          "--ships-per-scene", "1", "--emission-scale", "0.0003",
          "--puff-sigma-m", "1500", "--decay-halflife-s", "2400"]


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def small_corpus(tmp_path):
    scenes = tmp_path / "scenes"
    assert run(["synth", "--scenes-dir", scenes, "--n-scenes", "4",
                "--seed", "5", *BRIGHT]) == 0
    return scenes


class TestConfig:
    def test_unknown_key_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("not-a-key=3\n")
        assert run(["synth", "--config", cfg]) == 1
        assert "not-a-key" in capsys.readouterr().err

    def test_comments_and_overrides(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# a comment\nseed=7\nn-scenes=2  # trailing comment\n")
        parsed = parse_config_file(cfg)
        assert parsed == {"seed": 7, "n-scenes": 2}

    def test_missing_input_exits_2(self, tmp_path):
        assert run(["features", "--scenes-dir", tmp_path / "nowhere"]) == 2

    def test_bad_flag_value_exits_1(self):
        assert run(["synth", "--n-scenes", "many"]) == 1


class TestWriteAtomic:
    def test_creates_parents_and_no_tmp_left(self, tmp_path):
        target = tmp_path / "deep" / "dir" / "out.txt"
        write_atomic(target, "payload")
        assert target.read_text() == "payload"
        assert list(target.parent.glob("*.tmp")) == []

    def test_overwrites_previous(self, tmp_path):
        target = tmp_path / "out.txt"
        write_atomic(target, "one")
        write_atomic(target, "two")
        assert target.read_text() == "two"


class TestPipelineCommands:
    def test_synth_then_ingest_zero_drops(self, small_corpus, capsys):
        before = [(p, (small_corpus / p / "grid.csv").read_bytes())
                  for p in ("scene_000", "scene_001")]
        assert run(["ingest", "--scenes-dir", small_corpus,
                    "--grid-rows", "70", "--grid-cols", "70"]) == 0
        out = capsys.readouterr().out
        assert "samples_dropped=0" in out
        for name, payload in before:
            assert (small_corpus / name / "grid.csv").read_bytes() == payload

    def test_sectors_geojson(self, small_corpus, tmp_path):
        out = tmp_path / "sectors.geojson"
        assert run(["sectors", "--scenes-dir", small_corpus,
                    "--sectors-file", out]) == 0
        obj = json.loads(out.read_text())
        assert obj["type"] == "FeatureCollection"
        assert len(obj["features"]) == 4

    def test_enhance_variants(self, small_corpus, tmp_path):
        grid_in = small_corpus / "scene_000" / "grid.csv"
        for variant in ("moran", "moran-high"):
            out = tmp_path / f"{variant}.csv"
            assert run(["enhance", "--grid-in", grid_in, "--grid-out", out,
                        "--variant", variant]) == 0
            assert out.exists()
        assert run(["enhance", "--grid-in", grid_in,
                    "--grid-out", tmp_path / "x.csv",
                    "--variant", "sharpen"]) == 1

    def test_features_train_evaluate_deterministic(self, small_corpus,
                                                   tmp_path, capsys):
        dataset = tmp_path / "dataset.csv"
        assert run(["features", "--scenes-dir", small_corpus,
                    "--dataset-file", dataset]) == 0
        assert dataset.exists()

        model = tmp_path / "model.json"
        assert run(["train", "--dataset-file", dataset, "--model", "gbt",
                    "--model-file", model, "--gbt-n-trees", "10",
                    "--seed", "3"]) == 0
        assert json.loads(model.read_text())["type"] == "gbt"

        def evaluate(report):
            return run(["evaluate", "--dataset-file", dataset,
                        "--model", "logistic", "--outer-folds", "4",
                        "--n-candidates", "1", "--seed", "9",
                        "--logistic-max-iter", "60",
                        "--report-file", report,
                        "--pr-file", tmp_path / "pr.csv",
                        "--oof-file", tmp_path / "oof.csv"])

        r1 = tmp_path / "report1.json"
        r2 = tmp_path / "report2.json"
        assert evaluate(r1) == 0
        assert evaluate(r2) == 0
        assert r1.read_bytes() == r2.read_bytes()

    def test_proxy_report_with_perfect_predictions(self, small_corpus,
                                                   tmp_path, capsys):
        dataset = tmp_path / "dataset.csv"
        assert run(["features", "--scenes-dir", small_corpus,
                    "--dataset-file", dataset]) == 0
        proxy = tmp_path / "proxy.csv"
        assert run(["proxy-report", "--dataset-file", dataset,
                    "--use-labels", "1", "--proxy-file", proxy]) == 0
        out = capsys.readouterr().out
        r = float(out.split("pearson_r=")[1].split()[0])
        assert r >= 0.99
        lines = proxy.read_text().splitlines()
        assert lines[0] == "mmsi,date,no2_sum,e_s"
        assert len(lines) == 5

    def test_proxy_report_from_model(self, small_corpus, tmp_path):
        dataset = tmp_path / "dataset.csv"
        run(["features", "--scenes-dir", small_corpus,
             "--dataset-file", dataset])
        model = tmp_path / "model.json"
        run(["train", "--dataset-file", dataset, "--model", "no2",
             "--model-file", model])
        assert run(["proxy-report", "--dataset-file", dataset,
                    "--model-file", model,
                    "--proxy-file", tmp_path / "proxy.csv"]) == 0
