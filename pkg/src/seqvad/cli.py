"""Command-line pipeline: synth, calibrate, detect, evaluate, verify-far.

Options resolve in three layers: built-in defaults, then a ``key = value``
config file (``--config``), then explicit flags, which win. Every command is
deterministic given its options and seed. Exit codes: 0 success, 1 usage
error, 2 data or validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import detector as det
from . import metrics as met
from . import synth as syn
from .data_model import (
    group_by_video,
    load_feature_stream,
    load_ground_truth,
    normalize,
    save_feature_stream,
    save_ground_truth,
)
from .errors import EngineError, NumericError, ValidationError
from .evidence import RegressorTrainingConfig
from .model import load_model, save_model


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def read_config_file(path) -> dict[str, str]:
    """Parse a ``key = value`` per line config file; ``#`` starts a comment."""
    options: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            options[key.strip()] = value.strip()
    return options


class Options:
    """Layered option lookup: flags beat the config file, which beats defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_options = (
            read_config_file(args.config) if getattr(args, "config", None) else {}
        )

    def get(self, name, default, convert=str):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.file_options:
            raw = self.file_options[name]
            if convert is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            return convert(raw)
        return default


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} file does not exist: {p}")
    return p


def _write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def cmd_synth(opts: Options) -> int:
    args = opts.args
    if args.scenario:
        config = syn.load_scenario(_require_file(args.scenario, "scenario"))
    else:
        config = syn.ScenarioConfig()
    overrides = {}
    for name in ("m", "n_train_frames", "n_test_frames", "n_videos", "seed"):
        value = opts.get(name, None, int)
        if value is not None:
            overrides[name] = value
    if overrides:
        from dataclasses import replace

        if "m" in overrides and config.nominal_components is not None:
            overrides.setdefault("nominal_components", None)
        config = replace(config, **overrides)
    out_dir = Path(opts.get("out_dir", ".", str))
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test, truth = syn.generate_scenario(config)
    save_feature_stream(train, out_dir / "train.jsonl")
    save_feature_stream(test, out_dir / "test.jsonl")
    save_ground_truth(truth, out_dir / "truth.jsonl")
    syn.save_scenario(config, out_dir / "scenario.json")
    print(
        f"wrote {len(train)} training frames, {len(test)} test frames, "
        f"{len(truth)} truth events to {out_dir}"
    )
    return 0


def cmd_calibrate(opts: Options) -> int:
    args = opts.args
    train_path = _require_file(opts.get("train", None), "training feature")
    model_path = opts.get("model", None)
    if model_path is None:
        raise _UsageError("calibrate requires --model")
    frames = load_feature_stream(train_path)
    config = RegressorTrainingConfig(
        learning_rate=opts.get("regressor_learning_rate", 0.2, float),
        epochs=opts.get("regressor_epochs", 2000, int),
        batch_size=opts.get("regressor_batch_size", None, int),
    )
    model = cal.calibrate(
        frames,
        alpha=opts.get("alpha", 0.05, float),
        beta=opts.get("beta", 0.05, float),
        k=opts.get("k", 10, int),
        phi_safety=opts.get("phi_safety", 1.0, float),
        train_regressor=opts.get("train_regressor", False, bool),
        regressor_lambda=opts.get("regressor_lambda", 1e-6, float),
        regressor_config=config,
        seed=opts.get("seed", 0, int),
    )
    save_model(model, model_path)
    c = model.calibration
    print(f"model written to {model_path}")
    print(
        f"m={model.m} k={model.k} N={model.training.size}\n"
        f"d_alpha={c.d_alpha:.6g} d_max={c.d_max:.6g} phi={c.phi:.6g}\n"
        f"v_m={c.v_m:.6g} omega0={c.omega0:.6g} h={c.h:.6g} "
        f"far_bound={c.far_bound:.6g}"
    )
    return 0


def cmd_detect(opts: Options) -> int:
    args = opts.args
    model = load_model(_require_file(opts.get("model", None), "model"))
    features_path = _require_file(opts.get("features", None), "feature")
    out_detections = opts.get("out_detections", None)
    out_events = opts.get("out_events", None)
    if out_detections is None:
        raise _UsageError("detect requires --out-detections")
    use_regressor = opts.get("use_regressor", None, bool)
    if use_regressor is not None:
        if use_regressor and model.regressor is None:
            raise ValidationError("model file carries no regressor")
        model.use_regressor = use_regressor
    h_override = opts.get("threshold_override", None, float)
    drop_window = opts.get("drop_window", 5, int)
    frames = load_feature_stream(features_path)
    grouped = group_by_video(frames)
    records = []
    all_events = []
    for video_id, video_frames in grouped.items():
        evidences = model.evidence_series(video_frames)
        statistics, alarms, events = det.detect_stream(
            video_id, evidences, model, h=h_override, drop_window=drop_window
        )
        all_events.extend(events)
        for frame, evid, stat, alarm in zip(video_frames, evidences, statistics, alarms):
            records.append(
                {
                    "video_id": video_id,
                    "frame_index": frame.frame_index,
                    "statistic": float(stat),
                    "alarm": bool(alarm),
                    "evidence": float(evid),
                }
            )
    with open(out_detections, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
    if out_events is not None:
        with open(out_events, "w", encoding="utf-8") as fh:
            for event in all_events:
                fh.write(
                    json.dumps(
                        {
                            "video_id": event.video_id,
                            "alarm_frame": event.alarm_frame,
                            "start_frame": event.start_frame,
                            "end_frame": event.end_frame,
                            "peak_statistic": event.peak_statistic,
                        },
                        sort_keys=True,
                    )
                )
                fh.write("\n")
    print(
        f"processed {len(records)} frames in {len(grouped)} videos, "
        f"{len(all_events)} events"
    )
    return 0


def _load_detections(path):
    per_video: dict[str, list[dict]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                per_video.setdefault(record["video_id"], []).append(record)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad detection record ({exc})")
    for records in per_video.values():
        records.sort(key=lambda r: r["frame_index"])
    return dict(sorted(per_video.items()))


def cmd_evaluate(opts: Options) -> int:
    args = opts.args
    detections_path = _require_file(opts.get("detections", None), "detection")
    truth_path = _require_file(opts.get("truth", None), "ground-truth")
    out_report = opts.get("out_report", None)
    per_video = _load_detections(detections_path)
    truth = load_ground_truth(truth_path)

    statistics = {
        vid: np.array([r["statistic"] for r in records])
        for vid, records in per_video.items()
    }
    evidences = {
        vid: np.array([r.get("evidence", r["statistic"]) for r in records])
        for vid, records in per_video.items()
    }
    alarms = {
        vid: np.array([bool(r["alarm"]) for r in records])
        for vid, records in per_video.items()
    }

    apd_value = None
    auc_value = None
    curve = None
    if truth:
        if not any(ev.video_id in statistics for ev in truth):
            raise ValidationError(
                "ground truth covers no video present in the detection output"
            )
        thresholds = met.default_threshold_grid(
            statistics, opts.get("n_thresholds", 200, int)
        )
        curve = met.precision_delay_curve(statistics, truth, thresholds)
        apd_value = met.apd(curve)
        labels = []
        scores = []
        truth_by_video: dict[str, list] = {}
        for ev in truth:
            truth_by_video.setdefault(ev.video_id, []).append(ev)
        for vid, records in per_video.items():
            events = truth_by_video.get(vid, [])
            for record, evid in zip(records, evidences[vid]):
                frame = record["frame_index"]
                labels.append(
                    int(any(e.start_frame <= frame <= e.end_frame for e in events))
                )
                scores.append(float(evid))
        try:
            auc_value = met.frame_auc(scores, labels)
        except ValidationError:
            auc_value = None  # single-class corpus

    truth_videos = {ev.video_id for ev in truth}
    nominal_videos = [vid for vid in per_video if vid not in truth_videos]
    far_value = None
    period_value = None
    if nominal_videos:
        runs = []
        frames = 0
        for vid in nominal_videos:
            flags = alarms[vid]
            runs.extend(met.alarm_runs(flags.astype(float), 0.5))
            frames += flags.size
        far_value, period = met.measure_far(runs, frames)
        period_value = None if math.isinf(period) else period

    report = {
        "apd": apd_value,
        "frame_auc": auc_value,
        "empirical_far": far_value,
        "false_alarm_period": period_value,
    }
    if out_report:
        _write_json(report, out_report)
    curve_out = opts.get("out_curve", None)
    if curve_out and curve is not None:
        with open(curve_out, "w", encoding="utf-8") as fh:
            fh.write("threshold\tgamma\tprecision\n")
            for h, g, p in zip(curve.thresholds, curve.gammas, curve.precisions):
                fh.write(f"{h!r}\t{g!r}\t{p!r}\n")
    def _fmt(v):
        return "undefined" if v is None else f"{v:.6g}"

    print(
        f"apd={_fmt(apd_value)} frame_auc={_fmt(auc_value)} "
        f"far={_fmt(far_value)} period={_fmt(period_value)}"
    )
    return 0


def cmd_verify_far(opts: Options) -> int:
    args = opts.args
    model = load_model(_require_file(opts.get("model", None), "model"))
    scenario_path = opts.get("scenario", None)
    if scenario_path is None:
        raise _UsageError("verify-far requires --scenario")
    config = syn.load_scenario(_require_file(scenario_path, "scenario"))
    betas = [float(b) for b in str(opts.get("betas", "0.1,0.05,0.01", str)).split(",")]
    n_frames = opts.get("frames", 100_000, int)
    seed = opts.get("seed", 1, int)

    if config.objects_per_frame == (1, 1):
        raw = syn.generate_nominal_matrix(config, n_frames, seed)
        normalized = normalize(raw, model.stats)
        from .evidence import knn_distances

        evidences = knn_distances(
            normalized if model.feature_mask is None else normalized[:, model.feature_mask],
            model.training,
        )
    else:
        frames = syn.generate_nominal_stream(config, n_frames, seed)
        evidences = model.evidence_series(frames)

    rows = []
    for beta in betas:
        h = cal.compute_threshold(model.omega0, beta)
        n_alarms = det.count_restart_alarms(evidences, model, h)
        far, period = met.measure_far([None] * n_alarms, n_frames)
        bound_ok = far <= beta
        rows.append((beta, h, n_alarms, far, period, bound_ok))
    header = f"{'beta':>8} {'h':>12} {'alarms':>8} {'far':>12} {'period':>12} {'bound_ok':>8}"
    print(header)
    for beta, h, n_alarms, far, period, ok in rows:
        period_s = "inf" if math.isinf(period) else f"{period:.6g}"
        print(
            f"{beta:>8g} {h:>12.6g} {n_alarms:>8d} {far:>12.6g} {period_s:>12} "
            f"{str(ok):>8}"
        )
    out = opts.get("out", None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("beta\th\talarms\tfar\tperiod\tbound_ok\n")
            for beta, h, n_alarms, far, period, ok in rows:
                period_s = "inf" if math.isinf(period) else repr(period)
                fh.write(f"{beta!r}\t{h!r}\t{n_alarms}\t{far!r}\t{period_s}\t{ok}\n")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="seqvad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file; flags override it")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    add_common(p)
    p.add_argument("--scenario", help="scenario JSON to start from")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--n-train-frames", dest="n_train_frames", type=int, default=None)
    p.add_argument("--n-test-frames", dest="n_test_frames", type=int, default=None)
    p.add_argument("--n-videos", dest="n_videos", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit a nominal model from training features")
    add_common(p)
    p.add_argument("--train", default=None, help="training feature stream")
    p.add_argument("--model", default=None, help="output model file")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--phi-safety", dest="phi_safety", type=float, default=None)
    p.add_argument(
        "--train-regressor",
        dest="train_regressor",
        action="store_const",
        const=True,
        default=None,
    )
    p.add_argument("--regressor-lambda", dest="regressor_lambda", type=float, default=None)
    p.add_argument("--regressor-epochs", dest="regressor_epochs", type=int, default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="run streaming detection over a feature stream")
    add_common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--out-detections", dest="out_detections", default=None)
    p.add_argument("--out-events", dest="out_events", default=None)
    p.add_argument(
        "--threshold-override", dest="threshold_override", type=float, default=None
    )
    p.add_argument("--drop-window", dest="drop_window", type=int, default=None)
    p.add_argument(
        "--use-regressor",
        dest="use_regressor",
        choices=("on", "off"),
        default=None,
    )
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    add_common(p)
    p.add_argument("--detections", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--out-report", dest="out_report", default=None)
    p.add_argument("--out-curve", dest="out_curve", default=None)
    p.add_argument("--n-thresholds", dest="n_thresholds", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "verify-far", help="empirical false-alarm rates vs the calibrated bound"
    )
    add_common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--scenario", default=None)
    p.add_argument("--betas", default=None, help="comma-separated list")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify_far)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "use_regressor", None) is not None:
        args.use_regressor = args.use_regressor == "on"
    try:
        opts = Options(args)
        return args.func(opts)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
