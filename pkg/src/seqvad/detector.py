"""Sequential decision making on streaming anomaly evidence.

The core recursion accumulates per-frame drift

    statistic_t = max(statistic_{t-1} + evidence_t**m - d_alpha**m, 0)

and raises an alarm when the statistic reaches the calibrated threshold
``h``. The same recursion is expressible as a single-unit rectifier RNN whose
state and input weights are fixed to one; the general (trainable) RNN form
lives here too, together with offline localization of the anomalous window
and few-shot recalibration for a new scene.

Numerical range: with distances bounded by sqrt(m) in the normalized unit
cube, ``evidence**m`` stays below m**(m/2) (about 2e11 for m = 18), far
inside float64 range; overflow is still checked and reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .calibration import (
    compute_d_alpha,
    compute_omega0,
    compute_theta,
    compute_threshold,
    compute_v_m,
    estimate_phi,
    training_evidences,
)
from .data_model import FrameObservation, fit_normalization, normalize_frame
from .errors import (
    CalibrationError,
    InsufficientDataError,
    NumericError,
    ValidationError,
)
from .evidence import TrainingSet
from .model import CalibrationResult, NominalModel

_HISTORY_LIMIT = 32
SHOT_FRAMES = 10  # one "shot" of adaptation data is a sequence of 10 frames


@dataclass(frozen=True)
class DetectorState:
    """Running state of one stream; never share across concurrent updates."""

    statistic: float = 0.0
    frame_index: int = -1
    in_alarm: bool = False
    alarm_frame: int | None = None
    drop_count: int = 0
    statistic_history: tuple[float, ...] = ()


@dataclass(frozen=True)
class DetectionEvent:
    """One detected anomalous event with its localized frame window."""

    video_id: str
    alarm_frame: int
    start_frame: int
    end_frame: int
    peak_statistic: float

    def __post_init__(self):
        if not self.start_frame <= self.alarm_frame <= self.end_frame:
            raise ValidationError(
                f"event frames out of order: start={self.start_frame} "
                f"alarm={self.alarm_frame} end={self.end_frame}"
            )


def _step(statistic: float, evidence_power: float, offset: float) -> float:
    # Shared by the scalar update and the batch fold so both produce
    # bit-identical series.
    return max(statistic + evidence_power - offset, 0.0)


def _power(evidence: float, m: int) -> float:
    # Scalar C pow everywhere: the numpy vectorized power can differ from it
    # in the last ulp, so batch recursions reuse this exact call per element.
    if evidence < 0 or not math.isfinite(evidence):
        raise ValidationError(f"evidence must be finite and non-negative, got {evidence}")
    value = evidence**m
    if not math.isfinite(value):
        raise NumericError(f"evidence**m overflowed for evidence={evidence}, m={m}")
    return value


def update(
    state: DetectorState,
    evidence: float,
    model: NominalModel,
    h: float | None = None,
    drop_window: int = 5,
) -> tuple[DetectorState, float, bool]:
    """Advance one frame; returns (new state, statistic, alarm flag).

    ``h`` overrides the model's calibrated threshold when given. Alarm and
    drop bookkeeping feed streaming localization in ``detect_stream``.
    """
    threshold = model.h if h is None else h
    statistic = _step(state.statistic, _power(evidence, model.m), model.drift_offset)
    alarm = statistic >= threshold
    if state.in_alarm:
        in_alarm = True
        alarm_frame = state.alarm_frame
        drop_count = state.drop_count + 1 if statistic < state.statistic else 0
        drop_count = min(drop_count, drop_window)
    elif alarm:
        in_alarm = True
        alarm_frame = state.frame_index + 1
        drop_count = 0
    else:
        in_alarm = False
        alarm_frame = None
        drop_count = 0
    history = (state.statistic_history + (statistic,))[-_HISTORY_LIMIT:]
    new_state = DetectorState(
        statistic=statistic,
        frame_index=state.frame_index + 1,
        in_alarm=in_alarm,
        alarm_frame=alarm_frame,
        drop_count=drop_count,
        statistic_history=history,
    )
    return new_state, statistic, alarm


def run_statistics(evidences: Sequence[float], model: NominalModel) -> np.ndarray:
    """The full statistic series for an evidence sequence (no event handling).

    Equals folding ``update`` frame by frame; kept as a plain loop over the
    shared scalar step so the equality is exact.
    """
    values = np.asarray(evidences, dtype=float)
    offset = model.drift_offset
    m = model.m
    out = np.empty(values.size)
    s = 0.0
    for i, e in enumerate(values.tolist()):
        s = _step(s, _power(e, m), offset)
        out[i] = s
    return out


def count_restart_alarms(
    evidences: Sequence[float], model: NominalModel, h: float | None = None
) -> int:
    """Alarms under the renewal convention: reset to zero after each alarm.

    This is the repeated-detection scheme the false-alarm-rate bound
    describes; at h = 0 every frame alarms. ``measure_far`` over this count
    is the Monte-Carlo estimate the threshold calibration is checked against.
    """
    threshold = model.h if h is None else h
    values = np.asarray(evidences, dtype=float)
    offset = model.drift_offset
    m = model.m
    count = 0
    s = 0.0
    for e in values.tolist():
        s = _step(s, _power(e, m), offset)
        if s >= threshold:
            count += 1
            s = 0.0
    return count


def localize(
    statistics: Sequence[float],
    alarm_index: int,
    drop_window: int = 5,
    video_id: str = "",
) -> DetectionEvent:
    """Anomalous window for an alarm raised at ``alarm_index``.

    The start is the alarm frame itself. The end is the first index ``e``
    after the alarm where the statistic strictly decreases over
    ``drop_window`` consecutive frames (ties break the run); if no such
    window occurs before the series ends, the last index is the end.
    """
    values = np.asarray(statistics, dtype=float)
    n = values.size
    if not 0 <= alarm_index < n:
        raise ValidationError(f"alarm_index {alarm_index} outside series of length {n}")
    if drop_window < 1:
        raise ValidationError(f"drop_window must be >= 1, got {drop_window}")
    drops = values[1:] < values[:-1]  # drops[i]: value[i+1] dropped below value[i]
    end = n - 1
    for e in range(alarm_index + 1, n - drop_window + 1):
        if np.all(drops[e - 1 : e - 1 + drop_window]):
            end = e
            break
    return DetectionEvent(
        video_id=video_id,
        alarm_frame=alarm_index,
        start_frame=alarm_index,
        end_frame=end,
        peak_statistic=float(values[alarm_index : end + 1].max()),
    )


def detect_stream(
    video_id: str,
    evidences: Sequence[float],
    model: NominalModel,
    h: float | None = None,
    drop_window: int = 5,
) -> tuple[np.ndarray, np.ndarray, list[DetectionEvent]]:
    """Streaming detection over one video's evidence sequence.

    Returns the per-frame statistic series, the per-frame alarm flags
    (statistic >= threshold), and the localized events. After an event closes
    (the statistic dropped for ``drop_window`` consecutive frames) the
    statistic is reset to 0 before detection resumes, so one long excursion
    cannot re-alarm instantly.
    """
    values = np.asarray(evidences, dtype=float)
    statistics = np.empty(values.size)
    alarms = np.zeros(values.size, dtype=bool)
    events: list[DetectionEvent] = []
    state = DetectorState()
    for i, evidence in enumerate(values):
        state, statistic, alarm = update(
            state, float(evidence), model, h=h, drop_window=drop_window
        )
        statistics[i] = statistic
        alarms[i] = alarm
        if state.in_alarm and state.drop_count >= drop_window:
            start = state.alarm_frame
            end = i - drop_window + 1
            peak = float(statistics[start : end + 1].max())
            events.append(
                DetectionEvent(
                    video_id=video_id,
                    alarm_frame=start,
                    start_frame=start,
                    end_frame=end,
                    peak_statistic=peak,
                )
            )
            state = replace(state, statistic=0.0, in_alarm=False, alarm_frame=None, drop_count=0)
    if state.in_alarm:
        start = state.alarm_frame
        end = values.size - 1
        peak = float(statistics[start : end + 1].max())
        events.append(
            DetectionEvent(
                video_id=video_id,
                alarm_frame=start,
                start_frame=start,
                end_frame=end,
                peak_statistic=peak,
            )
        )
    return statistics, alarms, events


def generate_synthetic_evidence(model: NominalModel, n: int, seed: int) -> np.ndarray:
    """Stand-in anomalous evidence, i.i.d. uniform on (d_alpha, 2 * d_max).

    There is no training data for the anomalous class, so the detector's
    trainable form learns against these synthetic distances.
    """
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    lo = model.d_alpha
    hi = 2.0 * model.d_max
    if hi <= lo:
        raise CalibrationError(
            f"2 * d_max = {hi} does not exceed d_alpha = {lo}; "
            "calibration is inconsistent"
        )
    rng = np.random.default_rng(seed)
    values = rng.uniform(lo, hi, size=n)
    # The interval is open; endpoint hits have probability ~0 but are nudged.
    values[values <= lo] = np.nextafter(lo, hi)
    values[values >= hi] = np.nextafter(hi, lo)
    return values


# ---------------------------------------------------------------------------
# General RNN form of the detector: one rectifier unit whose state carries
# the decision statistic. With both weights fixed to one and the bias set to
# -d_alpha**m it reduces exactly to `update`.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RnnDetector:
    w_state: float
    w_input: float
    bias: float
    sharpness: float  # training-time sigmoid scale around the threshold
    h: float
    m: int = 1
    use_power: bool = True  # feed evidence**m rather than the raw distance

    def __post_init__(self):
        for name in ("w_state", "w_input", "bias", "sharpness", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.sharpness <= 0:
            raise ValidationError("sharpness must be positive")


def fixed_weight_detector(model: NominalModel, sharpness: float = 50.0) -> RnnDetector:
    """The configuration that reproduces the simplified recursion exactly."""
    return RnnDetector(
        w_state=1.0,
        w_input=1.0,
        bias=-model.drift_offset,
        sharpness=sharpness,
        h=model.h,
        m=model.m,
        use_power=True,
    )


def rnn_update(r: RnnDetector, state: float, evidence: float) -> tuple[float, bool]:
    """One step of the rectifier recursion; returns (new state, alarm)."""
    x = _power(evidence, r.m) if r.use_power else float(evidence)
    new_state = max(r.w_state * state + r.w_input * x + r.bias, 0.0)
    return new_state, new_state >= r.h


def rnn_run(r: RnnDetector, evidences: Sequence[float], state: float = 0.0) -> np.ndarray:
    out = np.empty(len(evidences))
    for i, evidence in enumerate(evidences):
        state, _ = rnn_update(r, state, float(evidence))
        out[i] = state
    return out


@dataclass(frozen=True)
class RnnTrainingConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    truncation: int = 20  # backpropagation-through-time window
    segment_length: int = 50
    n_anomalous_segments: int = 8
    sharpness: float = 30.0


def _rnn_forward(params, inputs):
    w_s, w_i, b = params
    states = np.empty(inputs.size)
    pres = np.empty(inputs.size)
    s = 0.0
    for t in range(inputs.size):
        z = w_s * s + w_i * inputs[t] + b
        s = z if z > 0.0 else 0.0
        pres[t] = z
        states[t] = s
    return states, pres


def rnn_loss_and_grad(
    params: tuple[float, float, float],
    inputs: np.ndarray,
    labels: np.ndarray,
    sharpness: float,
    h: float,
    truncation: int | None = None,
) -> tuple[float, np.ndarray]:
    """Per-frame cross-entropy of sigmoid(sharpness * (state - h)).

    Gradients flow through backpropagation through time, truncated at
    ``truncation`` steps (None or >= length means full backpropagation).
    """
    w_s = float(params[0])
    states, pres = _rnn_forward((w_s, float(params[1]), float(params[2])), inputs)
    n = inputs.size
    z = sharpness * (states - h)
    # Stable log-sigmoid forms.
    log_p = -np.logaddexp(0.0, -z)
    log_q = -np.logaddexp(0.0, z)
    loss = float(-(labels * log_p + (1.0 - labels) * log_q).mean())
    sig = 1.0 / (1.0 + np.exp(-z))
    direct = sharpness * (sig - labels) / n  # dL/d state_t (direct term)
    active = pres > 0.0
    span = n if truncation is None else min(truncation, n)
    grad = np.zeros(3)
    carry = 0.0  # accumulated dL/d state_t flowing backwards
    for t in range(n - 1, -1, -1):
        if (t + 1) % span == 0:
            carry = 0.0  # truncate: stop gradient across window boundaries
        g = direct[t] + carry
        if active[t]:
            prev_state = states[t - 1] if t > 0 else 0.0
            grad[0] += g * prev_state
            grad[1] += g * inputs[t]
            grad[2] += g
            carry = g * w_s
        else:
            carry = 0.0
    return loss, grad


def train_rnn_detector(
    nominal_evidence: Sequence[float],
    model: NominalModel,
    config: RnnTrainingConfig = RnnTrainingConfig(),
    seed: int = 0,
) -> RnnDetector:
    """Fit the rectifier detector on nominal plus synthetic anomalous evidence.

    Nominal frames carry label 0; synthetic anomalous segments (uniform on
    the open interval above the nominal percentile) carry label 1. Plain
    gradient descent on the truncated-backpropagation gradient; deterministic
    per seed.
    """
    nominal = np.asarray(nominal_evidence, dtype=float)
    if nominal.size == 0:
        raise InsufficientDataError("nominal evidence is empty")
    rng = np.random.default_rng(seed)
    seg = config.segment_length
    synthetic = generate_synthetic_evidence(
        model, config.n_anomalous_segments * seg, seed=int(rng.integers(2**31))
    )
    # Alternate nominal and synthetic segments. Each segment is a separate
    # sequence (state restarts at 0): carrying an inflated post-anomaly state
    # into label-0 frames saturates the loss and blows up the first step.
    segments: list[tuple[np.ndarray, np.ndarray]] = []
    n_chunks = max(config.n_anomalous_segments, 1)
    for i, chunk in enumerate(np.array_split(nominal, n_chunks)):
        if chunk.size:
            segments.append((chunk, np.zeros(chunk.size)))
        if i < config.n_anomalous_segments:
            segments.append((synthetic[i * seg : (i + 1) * seg], np.ones(seg)))
    prepared = []
    total = 0
    for x, y in segments:
        if model.m != 1:
            x = x**model.m
            if not np.all(np.isfinite(x)):
                raise NumericError(
                    "evidence**m overflowed while building RNN training data"
                )
        prepared.append((x, y))
        total += x.size

    params = np.array([1.0, 1.0, -model.drift_offset])
    for epoch in range(config.epochs):
        loss = 0.0
        grad = np.zeros(3)
        for x, y in prepared:
            seg_loss, seg_grad = rnn_loss_and_grad(
                tuple(params), x, y, config.sharpness, model.h, config.truncation
            )
            weight = x.size / total
            loss += seg_loss * weight
            grad += seg_grad * weight
        if not math.isfinite(loss):
            raise NumericError(f"RNN training diverged at epoch {epoch}")
        params -= config.learning_rate * grad
    return RnnDetector(
        w_state=float(params[0]),
        w_input=float(params[1]),
        bias=float(params[2]),
        sharpness=config.sharpness,
        h=model.h,
        m=model.m,
        use_power=True,
    )


def adapt_few_shot(
    base: NominalModel,
    shots: Sequence[FrameObservation],
    n_shots: int,
    beta: float,
    feature_mask: np.ndarray | None = None,
) -> NominalModel:
    """Recalibrate the decision parameters from a few shots of a new scene.

    One shot is a sequence of ``SHOT_FRAMES`` frames. With ``n_shots = 0``
    the base model is returned unchanged. Otherwise normalization stats,
    per-frame evidences, ``d_alpha``, ``d_max``, ``phi``, ``omega0`` and the
    threshold are recomputed from the shot frames alone; ``k``, ``m`` and any
    trained regressor are retained. Only statistical parameters adapt, never
    the regressor.
    """
    if n_shots < 0:
        raise ValidationError(f"n_shots must be non-negative, got {n_shots}")
    if n_shots == 0:
        return base
    needed = n_shots * SHOT_FRAMES
    frames = list(shots)
    if len(frames) < needed:
        raise InsufficientDataError(
            f"{n_shots}-shot adaptation needs {needed} frames, got {len(frames)}"
        )
    frames = frames[:needed]
    stats = fit_normalization(frames)
    if stats.dim != base.m:
        raise ValidationError(
            f"shot dimensionality {stats.dim} does not match model m={base.m}"
        )
    mask = base.feature_mask if feature_mask is None else np.asarray(feature_mask, bool)
    normalized = [normalize_frame(f, stats) for f in frames]
    features = np.vstack([f.objects for f in normalized if f.n_objects])
    if mask is not None:
        features = features[:, mask]
    _, evidences = training_evidences(normalized, features, base.k)

    d_alpha = compute_d_alpha(evidences, base.calibration.alpha)
    d_max = float(evidences.max())
    phi = estimate_phi(evidences, d_alpha, base.m)
    v_m = compute_v_m(base.m)
    omega0 = compute_omega0(v_m, d_alpha, base.m, phi)
    h = compute_threshold(omega0, beta)
    calibration = CalibrationResult(
        alpha=base.calibration.alpha,
        d_alpha=d_alpha,
        d_max=d_max,
        phi=phi,
        v_m=v_m,
        theta=compute_theta(v_m, d_alpha, base.m),
        omega0=omega0,
        beta=beta,
        h=h,
    )
    return NominalModel(
        training=TrainingSet(features, base.k),
        stats=stats,
        m=base.m,
        calibration=calibration,
        regressor=base.regressor,
        use_regressor=base.use_regressor,
        feature_mask=mask,
    )
