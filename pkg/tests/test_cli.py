import json
import os

import numpy as np
import pytest

from geomimic.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, load_config, main
from geomimic.io import read_demo_dir
from geomimic.model import load_model


def run(argv):
    return main(argv)


def small_config(tmp_path, **overrides):
    doc = {
        "sim": {
            "categories": 2,
            "holdout_categories": 1,
            "videos_per_category": 2,
            "holdout_videos": 1,
            "frames": 14,
            "distractors": 5,
        },
        "train": {
            "outer_iters": 2,
            "temporal_steps": 2,
            "sim_steps": 1,
            "batch_size": 8,
            "sim_batch_size": 8,
            "stride": 2,
            "max_candidates": 32,
            "hidden_width": 8,
            "embedding_dim": 4,
            "rounds": 2,
        },
        "servo": {"max_iters": 40},
        "eval_videos": 1,
        "correspondence_steps": 6,
        "trials": 1,
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """demo-gen -> train once for the whole module."""
    root = tmp_path_factory.mktemp("pipeline")
    config = small_config(root)
    data_dir = str(root / "data")
    assert run(["demo-gen", "--config", config, "--out", data_dir, "--seed", "3"]) == EXIT_OK
    model_dir = str(root / "model")
    assert (
        run(["train", "--config", config, "--demos", data_dir, "--out", model_dir, "--seed", "3"])
        == EXIT_OK
    )
    return root, config, data_dir, model_dir


class TestDemoGen:
    def test_writes_expected_files(self, pipeline):
        _, _, data_dir, _ = pipeline
        demos = read_demo_dir(os.path.join(data_dir, "demos"))
        assert len(demos) == 2 * 2 + 1
        assert os.path.exists(os.path.join(data_dir, "scenes.json"))
        assert os.path.exists(os.path.join(data_dir, "config.json"))

    def test_videos_per_category_override(self, tmp_path):
        config = small_config(tmp_path)
        out = str(tmp_path / "one")
        assert (
            run(["demo-gen", "--config", config, "--out", out, "--seed", "1",
                 "--videos-per-category", "1"])
            == EXIT_OK
        )
        assert len(read_demo_dir(os.path.join(out, "demos"))) == 3  # 2 cats + 1 holdout

    def test_reproducible_bitwise(self, tmp_path):
        config = small_config(tmp_path)
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        run(["demo-gen", "--config", config, "--out", a, "--seed", "7"])
        run(["demo-gen", "--config", config, "--out", b, "--seed", "7"])
        for name in sorted(os.listdir(os.path.join(a, "demos"))):
            fa = open(os.path.join(a, "demos", name), "rb").read()
            fb = open(os.path.join(b, "demos", name), "rb").read()
            assert fa == fb, name

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"simulationz": {}}))
        assert run(["demo-gen", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestTrain:
    def test_outputs(self, pipeline):
        _, _, _, model_dir = pipeline
        models = load_model(os.path.join(model_dir, "model.json"))
        assert len(models) == 2
        assert os.path.exists(os.path.join(model_dir, "metrics_pp.csv"))
        assert os.path.exists(os.path.join(model_dir, "metrics_ll.csv"))
        header = open(os.path.join(model_dir, "metrics_pp.csv")).readline().strip()
        assert header == "outer_iter,temporal_loss,sim_loss,grad_norm,wall_ms"

    def test_missing_demo_path_is_config_error(self, tmp_path):
        config = small_config(tmp_path)
        code = run(
            ["train", "--config", config, "--demos", str(tmp_path / "nope"),
             "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_CONFIG

    def test_n2_zero_ablation_flag(self, pipeline, tmp_path):
        _, config, data_dir, _ = pipeline
        out = str(tmp_path / "ablation")
        assert (
            run(["train", "--config", config, "--demos", data_dir, "--out", out,
                 "--seed", "3", "--n2", "0", "--constraints", "pp"])
            == EXIT_OK
        )
        archived = json.loads(open(os.path.join(out, "config.json")).read())
        assert archived["train"]["sim_steps"] == 0
        assert archived["constraints"] == ["pp"]


class TestSelectEval:
    def test_report_and_correspondence(self, pipeline, tmp_path):
        _, config, data_dir, model_dir = pipeline
        out = str(tmp_path / "eval")
        code = run(
            ["select-eval", "--config", config, "--model",
             os.path.join(model_dir, "model.json"), "--demos", data_dir,
             "--out", out, "--seed", "3"]
        )
        assert code == EXIT_OK
        report = open(os.path.join(out, "report.csv")).read().splitlines()
        assert report[0] == "block,category,video_id,ctype,acc,conacc"
        assert any("extrapolation" in line for line in report[1:])
        assert os.path.exists(os.path.join(out, "correspondence_pp.csv"))
        assert os.path.exists(os.path.join(out, "correspondence_pp_random.csv"))
        dispersion = json.loads(open(os.path.join(out, "dispersion.json")).read())
        assert "pp" in dispersion and "pp_random" in dispersion

    def test_eval_on_files(self, pipeline, tmp_path):
        _, config, data_dir, model_dir = pipeline
        out = str(tmp_path / "eval-files")
        code = run(
            ["select-eval", "--config", config, "--model",
             os.path.join(model_dir, "model.json"), "--demos", data_dir,
             "--out", out, "--seed", "3", "--eval-source", "files"]
        )
        assert code == EXIT_OK


class TestServo:
    def test_trials_and_summary(self, pipeline, tmp_path):
        _, config, data_dir, model_dir = pipeline
        out = str(tmp_path / "servo")
        code = run(
            ["servo", "--config", config, "--model",
             os.path.join(model_dir, "model.json"), "--scenes", data_dir,
             "--out", out, "--seed", "3", "--trials", "1", "--max-iters", "25",
             "--baseline", "random"]
        )
        assert code == EXIT_OK
        summary = open(os.path.join(out, "summary.csv")).read().splitlines()
        assert summary[0] == "category,role,selector,trials,success_rate"
        assert len(summary) == 1 + 3 * 2  # 3 categories x (model, random)
        traces = os.listdir(os.path.join(out, "traces"))
        assert len(traces) == 3 * 1 * 2

    def test_zero_trials_empty_summary(self, pipeline, tmp_path):
        _, config, data_dir, model_dir = pipeline
        out = str(tmp_path / "servo0")
        code = run(
            ["servo", "--config", config, "--model",
             os.path.join(model_dir, "model.json"), "--scenes", data_dir,
             "--out", out, "--seed", "3", "--trials", "0"]
        )
        assert code == EXIT_OK
        summary = open(os.path.join(out, "summary.csv")).read().splitlines()
        assert len(summary) == 1 + 3  # header + one nan row per category


class TestConfig:
    def test_defaults_load(self):
        config = load_config()
        assert config.sim.categories == 3
        assert config.train.seed == 0

    def test_seed_override_propagates(self):
        config = load_config(seed=9)
        assert config.seed == 9
        assert config.train.seed == 9

    def test_nested_unknown_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"train": {"learning": 1}}))
        from geomimic.exceptions import ConfigError

        with pytest.raises(ConfigError, match="train"):
            load_config(str(path))
