"""Evaluation of online detection and offline localization.

Online detection is event based: an alarm run (maximal contiguous frames
with the statistic at or above a threshold) either overlaps a true event or
is a false alarm. Sweeping the threshold yields a precision-vs-delay curve;
its integral over the normalized delay is the headline score (``apd``).
Offline localization quality is the ROC area over per-frame scores
concatenated across all videos, never averaged per video.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .data_model import GroundTruthEvent
from .errors import ValidationError


@dataclass(frozen=True)
class PrecisionDelayCurve:
    """(gamma, precision) points sorted by gamma, with their thresholds."""

    gammas: tuple[float, ...]
    precisions: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if not len(self.gammas) == len(self.precisions) == len(self.thresholds):
            raise ValidationError("curve fields must have equal lengths")
        for g, p in zip(self.gammas, self.precisions):
            if not (0.0 <= g <= 1.0 and 0.0 <= p <= 1.0):
                raise ValidationError(f"curve point ({g}, {p}) outside the unit square")
        if any(b < a for a, b in zip(self.gammas, self.gammas[1:])):
            raise ValidationError("curve gammas must be sorted ascending")

    @property
    def is_empty(self) -> bool:
        return not self.gammas


@dataclass(frozen=True)
class EvalReport:
    """Summary scores; fields are None when undefined for the given inputs."""

    apd: float | None
    frame_auc: float | None
    empirical_far: float | None
    false_alarm_period: float | None


def alarm_runs(values: Sequence[float], threshold: float) -> list[tuple[int, int]]:
    """Maximal contiguous index runs with value >= threshold, as (start, end)."""
    arr = np.asarray(values, dtype=float)
    above = arr >= threshold
    if not above.any():
        return []
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    starts = [0] if above[0] else []
    starts += list(edges[~above[edges]] + 1)
    ends = list(edges[above[edges]])
    if above[-1]:
        ends.append(arr.size - 1)
    return list(zip(starts, ends))


def count_alarm_runs(values: Sequence[float], threshold: float) -> int:
    arr = np.asarray(values, dtype=float)
    above = arr >= threshold
    if arr.size == 0:
        return 0
    rises = int(np.count_nonzero(above[1:] & ~above[:-1]))
    return rises + int(above[0])


def default_threshold_grid(
    statistics: Mapping[str, Sequence[float]], n: int = 200
) -> np.ndarray:
    """Unique statistic values subsampled evenly to at most ``n`` thresholds."""
    values = np.unique(np.concatenate([np.asarray(v, float) for v in statistics.values()]))
    if values.size <= n:
        return values
    idx = np.linspace(0, values.size - 1, n).round().astype(int)
    return values[np.unique(idx)]


def precision_delay_curve(
    statistics: Mapping[str, Sequence[float]],
    truth: Sequence[GroundTruthEvent],
    thresholds: Sequence[float],
) -> PrecisionDelayCurve:
    """Event-based precision and normalized average delay per threshold.

    For each threshold: alarm runs are computed per video; a run is a true
    alarm when it overlaps a truth event. An event's delay is
    ``max(0, first overlapping alarm frame - event start)`` normalized by
    ``segment_length - event start`` (a run already active when the event
    begins detects it with zero delay); undetected events count as delay 1.
    Thresholds that produce no alarms at all have undefined precision and
    are skipped; a detector that never alarms yields an empty curve.
    """
    if len(thresholds) == 0:
        raise ValidationError("threshold list must not be empty")
    if not truth:
        raise ValidationError("precision-delay curve needs at least one truth event")
    for event in truth:
        if event.video_id not in statistics:
            raise ValidationError(
                f"no statistic series for ground-truth video {event.video_id!r}"
            )
    series = {vid: np.asarray(v, float) for vid, v in statistics.items()}
    events_by_video: dict[str, list[GroundTruthEvent]] = {}
    for event in truth:
        events_by_video.setdefault(event.video_id, []).append(event)

    gammas, precisions, kept = [], [], []
    for h in thresholds:
        total_runs = 0
        true_runs = 0
        delays = []
        for vid, values in series.items():
            runs = alarm_runs(values, h)
            total_runs += len(runs)
            events = events_by_video.get(vid, [])
            for run_start, run_end in runs:
                if any(
                    run_start <= ev.end_frame and run_end >= ev.start_frame
                    for ev in events
                ):
                    true_runs += 1
            for ev in events:
                horizon = ev.segment_length - ev.start_frame
                detected = None
                for run_start, run_end in runs:
                    if run_start <= ev.end_frame and run_end >= ev.start_frame:
                        detected = run_start
                        break
                if detected is None:
                    delays.append(1.0)
                else:
                    delays.append(max(0, detected - ev.start_frame) / horizon)
        if total_runs == 0:
            continue
        gammas.append(float(np.mean(delays)))
        precisions.append(true_runs / total_runs)
        kept.append(float(h))
    order = np.argsort(gammas, kind="stable")
    return PrecisionDelayCurve(
        gammas=tuple(gammas[i] for i in order),
        precisions=tuple(precisions[i] for i in order),
        thresholds=tuple(kept[i] for i in order),
    )


def apd(curve: PrecisionDelayCurve) -> float:
    """Integral of precision over normalized delay on [0, 1].

    Trapezoidal rule with constant extension of the boundary precisions down
    to gamma 0 and up to gamma 1; an empty curve scores 0.
    """
    if curve.is_empty:
        return 0.0
    x = np.concatenate(([0.0], curve.gammas, [1.0]))
    y = np.concatenate(([curve.precisions[0]], curve.precisions, [curve.precisions[-1]]))
    return float(np.trapezoid(y, x))


def frame_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """ROC area over concatenated per-frame scores via the rank statistic.

    Ties contribute half. Raises when only one class is present.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC is undefined with a single class")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def measure_far(alarm_run_list: Sequence, nominal_frames: int) -> tuple[float, float]:
    """False alarm rate (runs per frame) and its reciprocal period.

    ``alarm_run_list`` must come from nominal-only streams. Zero runs give a
    rate of 0 and an infinite period.
    """
    if nominal_frames <= 0:
        raise ValidationError(f"nominal_frames must be positive, got {nominal_frames}")
    runs = len(alarm_run_list)
    far = runs / nominal_frames
    period = math.inf if runs == 0 else 1.0 / far
    return far, period
