import json

import pytest

from seqvad.cli import main
from seqvad.data_model import load_feature_stream, save_feature_stream, save_ground_truth
from seqvad.model import load_model
from seqvad.synth import ScenarioConfig, generate_scenario, save_scenario

SCENARIO = ScenarioConfig(
    m=3,
    n_train_frames=250,
    n_test_frames=120,
    objects_per_frame=(1, 2),
    anomaly_shift=0.5,
    anomaly_windows=(((40, 70),),),
    n_videos=1,
    seed=21,
)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    train, test, truth = generate_scenario(SCENARIO)
    save_feature_stream(train, root / "train.jsonl")
    save_feature_stream(test, root / "test.jsonl")
    save_ground_truth(truth, root / "truth.jsonl")
    save_scenario(SCENARIO, root / "scenario.json")
    return root


@pytest.fixture(scope="module")
def model_file(workspace):
    path = workspace / "model.json"
    status = main(
        [
            "calibrate",
            "--train", str(workspace / "train.jsonl"),
            "--model", str(path),
            "--alpha", "0.05",
            "--beta", "0.05",
            "--k", "5",
        ]
    )
    assert status == 0
    return path


class TestSynthCommand:
    def test_writes_all_outputs(self, tmp_path):
        status = main(
            ["synth", "--out-dir", str(tmp_path), "--m", "3",
             "--n-train-frames", "50", "--n-test-frames", "60", "--seed", "3"]
        )
        assert status == 0
        for name in ("train.jsonl", "test.jsonl", "truth.jsonl", "scenario.json"):
            assert (tmp_path / name).exists()
        frames = load_feature_stream(tmp_path / "train.jsonl")
        assert len(frames) == 50

    def test_deterministic_bytes(self, tmp_path):
        args = ["synth", "--m", "3", "--n-train-frames", "30", "--n-test-frames",
                "40", "--seed", "5"]
        main(args + ["--out-dir", str(tmp_path / "a")])
        main(args + ["--out-dir", str(tmp_path / "b")])
        for name in ("train.jsonl", "test.jsonl", "truth.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCalibrateCommand:
    def test_model_file_written(self, model_file):
        model = load_model(model_file)
        assert model.k == 5
        assert model.calibration.far_bound <= 0.05 + 1e-12

    def test_missing_input_names_path(self, tmp_path, capsys):
        status = main(
            ["calibrate", "--train", str(tmp_path / "nope.jsonl"),
             "--model", str(tmp_path / "m.json")]
        )
        assert status == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_rerun_identical_bytes(self, workspace, tmp_path):
        out1 = tmp_path / "m1.json"
        out2 = tmp_path / "m2.json"
        for out in (out1, out2):
            assert main(
                ["calibrate", "--train", str(workspace / "train.jsonl"),
                 "--model", str(out), "--k", "5"]
            ) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_usage_error_without_model(self, workspace):
        assert main(["calibrate", "--train", str(workspace / "train.jsonl")]) == 1

    def test_config_file_provides_defaults(self, workspace, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(
            f"train = {workspace / 'train.jsonl'}\n"
            "k = 5  # neighbor count\n"
            "beta = 0.02\n"
        )
        out = tmp_path / "m.json"
        assert main(["calibrate", "--config", str(config), "--model", str(out)]) == 0
        assert load_model(out).calibration.beta == 0.02

    def test_flags_override_config(self, workspace, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(f"train = {workspace / 'train.jsonl'}\nk = 5\nbeta = 0.02\n")
        out = tmp_path / "m.json"
        assert main(
            ["calibrate", "--config", str(config), "--model", str(out), "--beta", "0.07"]
        ) == 0
        assert load_model(out).calibration.beta == 0.07


class TestDetectCommand:
    def test_output_counts_match_input(self, workspace, model_file, tmp_path):
        detections = tmp_path / "det.jsonl"
        events = tmp_path / "events.jsonl"
        status = main(
            ["detect", "--model", str(model_file),
             "--features", str(workspace / "test.jsonl"),
             "--out-detections", str(detections),
             "--out-events", str(events)]
        )
        assert status == 0
        lines = detections.read_text().strip().splitlines()
        assert len(lines) == SCENARIO.n_test_frames
        record = json.loads(lines[0])
        assert set(record) == {"video_id", "frame_index", "statistic", "alarm", "evidence"}

    def test_nominal_stream_high_threshold_no_events(self, workspace, model_file, tmp_path):
        detections = tmp_path / "det.jsonl"
        events = tmp_path / "events.jsonl"
        status = main(
            ["detect", "--model", str(model_file),
             "--features", str(workspace / "train.jsonl"),
             "--out-detections", str(detections),
             "--out-events", str(events),
             "--threshold-override", "1e9"]
        )
        assert status == 0
        assert events.read_text() == ""

    def test_zero_threshold_alarms_on_first_positive_statistic(
        self, workspace, model_file, tmp_path
    ):
        detections = tmp_path / "det.jsonl"
        status = main(
            ["detect", "--model", str(model_file),
             "--features", str(workspace / "test.jsonl"),
             "--out-detections", str(detections),
             "--threshold-override", "0"]
        )
        assert status == 0
        records = [json.loads(line) for line in detections.read_text().splitlines()]
        assert all(r["alarm"] for r in records)  # statistic >= 0 always

    def test_dimension_mismatch_exit_code(self, model_file, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(
            json.dumps({"video_id": "v", "frame_index": 0, "objects": [[1.0, 2.0]]})
            + "\n"
        )
        status = main(
            ["detect", "--model", str(model_file), "--features", str(bad),
             "--out-detections", str(tmp_path / "d.jsonl")]
        )
        assert status == 2


class TestEvaluateCommand:
    @pytest.fixture(scope="class")
    def detections(self, workspace, model_file, tmp_path_factory):
        out = tmp_path_factory.mktemp("eval") / "det.jsonl"
        main(
            ["detect", "--model", str(model_file),
             "--features", str(workspace / "test.jsonl"),
             "--out-detections", str(out)]
        )
        return out

    def test_report_written(self, workspace, detections, tmp_path):
        report_path = tmp_path / "report.json"
        status = main(
            ["evaluate", "--detections", str(detections),
             "--truth", str(workspace / "truth.jsonl"),
             "--out-report", str(report_path)]
        )
        assert status == 0
        report = json.loads(report_path.read_text())
        assert set(report) == {"apd", "frame_auc", "empirical_far", "false_alarm_period"}
        assert 0.0 <= report["apd"] <= 1.0
        assert 0.0 <= report["frame_auc"] <= 1.0

    def test_empty_truth_reports_far_only(self, workspace, detections, tmp_path):
        truth = tmp_path / "empty.jsonl"
        truth.write_text("")
        report_path = tmp_path / "report.json"
        status = main(
            ["evaluate", "--detections", str(detections), "--truth", str(truth),
             "--out-report", str(report_path)]
        )
        assert status == 0
        report = json.loads(report_path.read_text())
        assert report["apd"] is None and report["frame_auc"] is None
        assert report["empirical_far"] is not None

    def test_truth_without_matching_videos_fails(self, detections, tmp_path):
        truth = tmp_path / "other.jsonl"
        truth.write_text(
            json.dumps(
                {"video_id": "missing", "start_frame": 0, "end_frame": 5,
                 "segment_length": 50}
            )
            + "\n"
        )
        status = main(
            ["evaluate", "--detections", str(detections), "--truth", str(truth)]
        )
        assert status == 2

    def test_rerun_identical(self, workspace, detections, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        for out in (a, b):
            main(
                ["evaluate", "--detections", str(detections),
                 "--truth", str(workspace / "truth.jsonl"), "--out-report", str(out)]
            )
        assert a.read_bytes() == b.read_bytes()


class TestVerifyFarCommand:
    def test_table_rows_and_periods(self, workspace, model_file, tmp_path, capsys):
        out = tmp_path / "far.tsv"
        status = main(
            ["verify-far", "--model", str(model_file),
             "--scenario", str(workspace / "scenario.json"),
             "--betas", "0.5,0.1", "--frames", "4000", "--seed", "2",
             "--out", str(out)]
        )
        assert status == 0
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 3  # header + one row per beta
        header = rows[0].split("\t")
        assert header == ["beta", "h", "alarms", "far", "period", "bound_ok"]

    def test_beta_one_alarms_immediately(self, workspace, model_file, tmp_path):
        out = tmp_path / "far.tsv"
        status = main(
            ["verify-far", "--model", str(model_file),
             "--scenario", str(workspace / "scenario.json"),
             "--betas", "1.0", "--frames", "2000", "--seed", "2", "--out", str(out)]
        )
        assert status == 0
        row = out.read_text().strip().splitlines()[1].split("\t")
        assert float(row[1]) == 0.0  # h = 0
        assert float(row[3]) > 0.2  # alarms dominate


class TestUsageErrors:
    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_no_command(self):
        assert main([]) == 1
