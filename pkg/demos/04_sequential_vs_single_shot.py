#!/usr/bin/env python3
"""Why accumulate evidence at all? Outlier frames punish single-shot rules.

Real nominal footage contains occasional frames whose instantaneous evidence
looks anomalous (detector glitches, odd poses, lighting). A rule that
thresholds the per-frame drift fires on every such outlier. The sequential
statistic integrates drift over time, so isolated spikes barely move it
while sustained events drive it across the threshold quickly.
"""

import numpy as np

from seqvad import (
    ScenarioConfig,
    calibrate,
    generate_scenario,
    inject_outlier_frames,
    run_statistics,
)
from seqvad.metrics import apd, default_threshold_grid, precision_delay_curve

config = ScenarioConfig(
    m=4,
    n_train_frames=1200,
    n_test_frames=400,
    nominal_components=(((0.4, 0.4, 0.4, 0.4), 0.06),),
    anomaly_shift=0.35,
    n_videos=3,
    seed=101,
)
train, test, truth = generate_scenario(config)
model = calibrate(train, alpha=0.05, beta=0.05, k=10)

rng = np.random.default_rng(48)
in_window = {}
for event in truth:
    in_window.setdefault(event.video_id, set()).update(
        range(event.start_frame, event.end_frame + 1)
    )

sequential = {}
single_shot = {}
n_outliers = 0
for video_id in sorted({f.video_id for f in test}):
    frames = [f for f in test if f.video_id == video_id]
    candidates = [
        i for i in range(len(frames)) if i not in in_window.get(video_id, set())
    ]
    outliers = rng.choice(candidates, size=6, replace=False)
    n_outliers += len(outliers)
    noisy = inject_outlier_frames(frames, outliers, config.shift_vector())
    evidences = model.evidence_series(noisy)
    sequential[video_id] = run_statistics(evidences, model)
    single_shot[video_id] = evidences**model.m - model.drift_offset

apd_seq = apd(
    precision_delay_curve(sequential, truth, default_threshold_grid(sequential, 200))
)
apd_one = apd(
    precision_delay_curve(single_shot, truth, default_threshold_grid(single_shot, 200))
)

print(f"injected {n_outliers} isolated outlier frames into nominal regions")
print(f"sequential statistic:  average precision over delay = {apd_seq:.4f}")
print(f"single-shot drift rule: average precision over delay = {apd_one:.4f}")
print("\nthe sequential detector keeps its precision because one outlying")
print("frame cannot push the accumulated statistic over a sensible threshold.")
