"""Seeded synthetic scenarios: the desk-scale data source for experiments.

Nominal objects are drawn from a Gaussian mixture clipped to the unit cube.
Test videos contain configured anomaly windows; inside a window one object
per frame is displaced by a fixed shift, mimicking an unseen object class or
a deviation from nominal paths. Identical seeds produce byte-identical
streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import FrameObservation, GroundTruthEvent
from .errors import ValidationError

Window = tuple[int, int]


def _default_components(m: int) -> tuple[tuple[tuple[float, ...], float], ...]:
    return ((tuple([0.5] * m), 0.3),)


# Fractional (start, end) window patterns cycled over test videos when no
# explicit windows are configured.
_WINDOW_PATTERNS = (
    ((0.20, 0.30), (0.55, 0.68)),
    ((0.35, 0.45),),
    ((0.15, 0.24), (0.50, 0.60), (0.80, 0.90)),
)


@dataclass(frozen=True)
class ScenarioConfig:
    m: int = 10
    n_train_frames: int = 2500
    n_test_frames: int = 600
    objects_per_frame: tuple[int, int] = (1, 2)
    # (mean vector, isotropic standard deviation) per mixture component;
    # None resolves to one interior blob.
    nominal_components: tuple[tuple[tuple[float, ...], float], ...] | None = None
    anomaly_shift: tuple[float, ...] | float = 0.45
    # One tuple of (start, end) windows per test video; None derives windows
    # from fixed fractional positions so they fit any video length.
    anomaly_windows: tuple[tuple[Window, ...], ...] | None = None
    n_videos: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError(f"m must be >= 1, got {self.m}")
        lo, hi = self.objects_per_frame
        if not 0 <= lo <= hi:
            raise ValidationError(f"bad objects_per_frame range ({lo}, {hi})")
        self._validate_windows(self.windows())

    def windows(self) -> tuple[tuple[Window, ...], ...]:
        if self.anomaly_windows is not None:
            return self.anomaly_windows
        derived = []
        for v in range(self.n_videos):
            pattern = _WINDOW_PATTERNS[v % len(_WINDOW_PATTERNS)]
            derived.append(
                tuple(
                    (
                        int(round(f0 * (self.n_test_frames - 1))),
                        int(round(f1 * (self.n_test_frames - 1))),
                    )
                    for f0, f1 in pattern
                )
            )
        return tuple(derived)

    def _validate_windows(self, windows) -> None:
        if len(windows) != self.n_videos:
            raise ValidationError(
                f"{self.n_videos} test videos need {self.n_videos} window tuples, "
                f"got {len(windows)}"
            )
        for video_windows in windows:
            ordered = sorted(video_windows)
            for start, end in ordered:
                if not 0 <= start <= end < self.n_test_frames:
                    raise ValidationError(
                        f"window ({start}, {end}) outside video of "
                        f"{self.n_test_frames} frames"
                    )
            for (s1, e1), (s2, e2) in zip(ordered, ordered[1:]):
                if s2 <= e1:
                    raise ValidationError(
                        f"overlapping anomaly windows ({s1}, {e1}) and ({s2}, {e2})"
                    )

    def components(self) -> tuple[tuple[np.ndarray, float], ...]:
        raw = self.nominal_components or _default_components(self.m)
        resolved = []
        for mean, scale in raw:
            vec = np.asarray(mean, dtype=float)
            if vec.shape != (self.m,):
                raise ValidationError(
                    f"component mean length {vec.shape} does not match m={self.m}"
                )
            if scale <= 0:
                raise ValidationError("component scale must be positive")
            resolved.append((vec, float(scale)))
        return tuple(resolved)

    def shift_vector(self) -> np.ndarray:
        if np.isscalar(self.anomaly_shift):
            return np.full(self.m, float(self.anomaly_shift))
        vec = np.asarray(self.anomaly_shift, dtype=float)
        if vec.shape != (self.m,):
            raise ValidationError(f"anomaly_shift length {vec.shape} != m={self.m}")
        return vec

    def mixture_mean(self) -> np.ndarray:
        comps = self.components()
        return np.mean([mean for mean, _ in comps], axis=0)


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "m": config.m,
        "n_train_frames": config.n_train_frames,
        "n_test_frames": config.n_test_frames,
        "objects_per_frame": list(config.objects_per_frame),
        "nominal_components": (
            None
            if config.nominal_components is None
            else [[list(mean), scale] for mean, scale in config.nominal_components]
        ),
        "anomaly_shift": (
            config.anomaly_shift
            if np.isscalar(config.anomaly_shift)
            else list(config.anomaly_shift)
        ),
        "anomaly_windows": (
            None
            if config.anomaly_windows is None
            else [[list(w) for w in video] for video in config.anomaly_windows]
        ),
        "n_videos": config.n_videos,
        "seed": config.seed,
    }


def scenario_from_dict(payload: dict) -> ScenarioConfig:
    kwargs = dict(payload)
    kwargs["objects_per_frame"] = tuple(kwargs["objects_per_frame"])
    if kwargs.get("nominal_components") is not None:
        kwargs["nominal_components"] = tuple(
            (tuple(mean), float(scale)) for mean, scale in kwargs["nominal_components"]
        )
    if not np.isscalar(kwargs["anomaly_shift"]):
        kwargs["anomaly_shift"] = tuple(kwargs["anomaly_shift"])
    if kwargs.get("anomaly_windows") is not None:
        kwargs["anomaly_windows"] = tuple(
            tuple(tuple(w) for w in video) for video in kwargs["anomaly_windows"]
        )
    return ScenarioConfig(**kwargs)


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(config), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def _draw_objects(
    rng: np.random.Generator,
    count: int,
    components: tuple[tuple[np.ndarray, float], ...],
    m: int,
) -> np.ndarray:
    if count == 0:
        return np.empty((0, m))
    which = rng.integers(0, len(components), size=count)
    out = np.empty((count, m))
    for i, comp in enumerate(which):
        mean, scale = components[comp]
        out[i] = mean + scale * rng.standard_normal(m)
    return np.clip(out, 0.0, 1.0)


def _video_frames(
    rng: np.random.Generator,
    config: ScenarioConfig,
    video_id: str,
    n_frames: int,
    windows: tuple[Window, ...],
) -> list[FrameObservation]:
    components = config.components()
    shift = config.shift_vector()
    lo, hi = config.objects_per_frame
    in_window = np.zeros(n_frames, dtype=bool)
    for start, end in windows:
        in_window[start : end + 1] = True
    frames = []
    for t in range(n_frames):
        count = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        objects = _draw_objects(rng, count, components, config.m)
        if in_window[t]:
            if objects.shape[0] == 0:
                objects = _draw_objects(rng, 1, components, config.m)
            objects = objects.copy()
            objects[0] = np.clip(objects[0] + shift, 0.0, 1.0)
        frames.append(FrameObservation(video_id, t, objects))
    return frames


def generate_scenario(
    config: ScenarioConfig,
) -> tuple[list[FrameObservation], list[FrameObservation], list[GroundTruthEvent]]:
    """Training frames, test frames, and the matching ground-truth events."""
    rng = np.random.default_rng(config.seed)
    train = _video_frames(rng, config, "train-000", config.n_train_frames, ())
    test: list[FrameObservation] = []
    truth: list[GroundTruthEvent] = []
    resolved = config.windows()
    for v in range(config.n_videos):
        video_id = f"test-{v:03d}"
        windows = resolved[v]
        test.extend(
            _video_frames(rng, config, video_id, config.n_test_frames, windows)
        )
        for start, end in sorted(windows):
            truth.append(
                GroundTruthEvent(
                    video_id=video_id,
                    start_frame=start,
                    end_frame=end,
                    segment_length=config.n_test_frames,
                )
            )
    return train, test, truth


def generate_nominal_stream(
    config: ScenarioConfig, n_frames: int, seed: int, video_id: str = "nominal-000"
) -> list[FrameObservation]:
    """A pure-nominal stream for false-alarm measurements; seeded separately."""
    rng = np.random.default_rng(seed)
    return _video_frames(rng, config, video_id, n_frames, ())


def generate_nominal_matrix(config: ScenarioConfig, n_frames: int, seed: int) -> np.ndarray:
    """Vectorized nominal generation for single-object-per-frame scenarios.

    Returns an ``(n_frames, m)`` matrix of raw features, one object per
    frame; the fast path behind long false-alarm simulations.
    """
    lo, hi = config.objects_per_frame
    if (lo, hi) != (1, 1):
        raise ValidationError(
            "matrix generation requires objects_per_frame == (1, 1)"
        )
    rng = np.random.default_rng(seed)
    components = config.components()
    which = rng.integers(0, len(components), size=n_frames)
    out = np.empty((n_frames, config.m))
    for c, (mean, scale) in enumerate(components):
        idx = np.flatnonzero(which == c)
        out[idx] = mean + scale * rng.standard_normal((idx.size, config.m))
    return np.clip(out, 0.0, 1.0)


def inject_outlier_frames(
    frames: Sequence[FrameObservation],
    indices: Sequence[int],
    shift: np.ndarray | float,
) -> list[FrameObservation]:
    """Displace one object in each selected frame without updating any truth.

    Produces nominal outliers: isolated frames whose instantaneous evidence
    looks anomalous even though no event is annotated there.
    """
    marked = set(int(i) for i in indices)
    out = []
    for i, frame in enumerate(frames):
        if i in marked and frame.n_objects:
            objects = frame.objects.copy()
            objects[0] = np.clip(objects[0] + shift, 0.0, 1.0)
            out.append(FrameObservation(frame.video_id, frame.frame_index, objects))
        else:
            out.append(frame)
    return out
