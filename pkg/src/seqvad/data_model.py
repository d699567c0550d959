"""Domain types, feature-stream and ground-truth file ingestion, normalization.

File formats (both UTF-8, one JSON record per line):

* feature stream -- ``{"video_id": str, "frame_index": int, "objects": [[...], ...]}``
  where ``objects`` is a possibly empty list of equal-length numeric arrays.
  For the default 18-dimensional layout the slots are: indices 0-14 class
  probabilities, 15 optical-flow mean, 16 optical-flow variance, 17 pose
  prediction error (0 for non-humans). The dimensionality ``m`` is otherwise
  free; it is established by the first object seen in a stream.
* ground truth -- ``{"video_id": str, "start_frame": int, "end_frame": int,
  "segment_length": int}``, one record per anomalous event.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)


@dataclass(eq=False)
class FrameObservation:
    """All detected objects of one frame as an ``(n_objects, m)`` float matrix."""

    video_id: str
    frame_index: int
    objects: np.ndarray

    def __post_init__(self):
        obj = np.asarray(self.objects, dtype=float)
        if obj.ndim == 1:
            obj = obj.reshape(1, -1) if obj.size else obj.reshape(0, 0)
        if obj.ndim != 2:
            raise ValidationError(
                f"objects must form a 2-D matrix, got ndim={obj.ndim}"
            )
        if self.frame_index < 0:
            raise ValidationError(
                f"frame_index must be non-negative, got {self.frame_index}"
            )
        if obj.size and not np.all(np.isfinite(obj)):
            raise ValidationError(
                f"non-finite feature value in frame {self.frame_index} "
                f"of video {self.video_id!r}"
            )
        self.objects = obj

    @property
    def n_objects(self) -> int:
        return self.objects.shape[0]

    @property
    def dim(self) -> int | None:
        """Feature dimensionality, or None for a frame with no objects."""
        return self.objects.shape[1] if self.objects.shape[0] else None

    def __eq__(self, other):
        if not isinstance(other, FrameObservation):
            return NotImplemented
        if (self.video_id, self.frame_index) != (other.video_id, other.frame_index):
            return False
        if self.n_objects == 0 and other.n_objects == 0:
            return True
        return self.objects.shape == other.objects.shape and np.array_equal(
            self.objects, other.objects
        )


@dataclass(frozen=True)
class GroundTruthEvent:
    """One annotated anomalous event inside a video segment."""

    video_id: str
    start_frame: int
    end_frame: int
    segment_length: int

    def __post_init__(self):
        if not 0 <= self.start_frame <= self.end_frame < self.segment_length:
            raise ValidationError(
                f"event {self.video_id!r} [{self.start_frame}, {self.end_frame}] "
                f"violates 0 <= start <= end < segment_length={self.segment_length}"
            )


@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension minimum and maximum observed in training data."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=float)
        hi = np.asarray(self.maximum, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("normalization bounds must be equal-length vectors")
        if np.any(lo > hi):
            raise ValidationError("normalization minimum exceeds maximum")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @property
    def dim(self) -> int:
        return self.minimum.shape[0]


def _as_line_iterator(stream) -> Iterator[bytes]:
    if isinstance(stream, (bytes, bytearray)):
        return iter(io.BytesIO(stream))
    return iter(stream)


def parse_feature_stream(stream) -> Iterator[FrameObservation]:
    """Parse a line-delimited feature stream into frame observations.

    Accepts a binary file object, an iterable of byte lines, or raw bytes.
    Yields frames in file order. The object dimensionality must be consistent
    across the whole stream and frame indices must be strictly increasing per
    video.
    """
    dim: int | None = None
    last_index: dict[str, int] = {}
    for lineno, raw in enumerate(_as_line_iterator(stream), start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            video_id = record["video_id"]
            frame_index = record["frame_index"]
            objects = record["objects"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"malformed feature record ({exc})", lineno) from exc
        if not isinstance(video_id, str) or not isinstance(frame_index, int):
            raise ParseError("video_id must be a string and frame_index an integer", lineno)
        try:
            matrix = np.asarray(objects, dtype=float)
        except (ValueError, TypeError) as exc:
            raise ParseError(f"objects are not equal-length numeric arrays ({exc})", lineno) from exc
        if matrix.size and matrix.ndim != 2:
            raise ParseError("objects must be a list of feature arrays", lineno)
        if matrix.size:
            if dim is None:
                dim = matrix.shape[1]
            elif matrix.shape[1] != dim:
                raise DimensionMismatchError(
                    f"line {lineno}: object dimensionality {matrix.shape[1]} "
                    f"differs from established m={dim}"
                )
        else:
            matrix = np.empty((0, dim if dim is not None else 0))
        prev = last_index.get(video_id)
        if prev is not None and frame_index <= prev:
            raise ValidationError(
                f"line {lineno}: frame_index {frame_index} not increasing for "
                f"video {video_id!r} (previous {prev})"
            )
        last_index[video_id] = frame_index
        try:
            yield FrameObservation(video_id, frame_index, matrix)
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from exc


def serialize_frame(frame: FrameObservation) -> str:
    record = {
        "video_id": frame.video_id,
        "frame_index": frame.frame_index,
        "objects": [list(row) for row in frame.objects],
    }
    return json.dumps(record, sort_keys=True)


def write_feature_stream(frames: Iterable[FrameObservation], stream: IO[bytes]) -> None:
    for frame in frames:
        stream.write(serialize_frame(frame).encode("utf-8"))
        stream.write(b"\n")


def parse_ground_truth(stream) -> list[GroundTruthEvent]:
    """Parse ground-truth events; returns them sorted by (video_id, start_frame).

    Events must be non-overlapping within each video.
    """
    events: list[GroundTruthEvent] = []
    for lineno, raw in enumerate(_as_line_iterator(stream), start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            event = GroundTruthEvent(
                video_id=record["video_id"],
                start_frame=int(record["start_frame"]),
                end_frame=int(record["end_frame"]),
                segment_length=int(record["segment_length"]),
            )
        except ValidationError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed ground-truth record ({exc})", lineno) from exc
        events.append(event)
    events.sort(key=lambda e: (e.video_id, e.start_frame))
    for prev, cur in zip(events, events[1:]):
        if prev.video_id == cur.video_id and cur.start_frame <= prev.end_frame:
            raise ValidationError(
                f"overlapping events in video {cur.video_id!r}: "
                f"[{prev.start_frame}, {prev.end_frame}] and "
                f"[{cur.start_frame}, {cur.end_frame}]"
            )
    return events


def write_ground_truth(events: Iterable[GroundTruthEvent], stream: IO[bytes]) -> None:
    for event in events:
        record = {
            "video_id": event.video_id,
            "start_frame": event.start_frame,
            "end_frame": event.end_frame,
            "segment_length": event.segment_length,
        }
        stream.write(json.dumps(record, sort_keys=True).encode("utf-8"))
        stream.write(b"\n")


def load_feature_stream(path) -> list[FrameObservation]:
    with open(path, "rb") as fh:
        return list(parse_feature_stream(fh))


def save_feature_stream(frames: Iterable[FrameObservation], path) -> None:
    with open(path, "wb") as fh:
        write_feature_stream(frames, fh)


def load_ground_truth(path) -> list[GroundTruthEvent]:
    with open(path, "rb") as fh:
        return parse_ground_truth(fh)


def save_ground_truth(events: Iterable[GroundTruthEvent], path) -> None:
    with open(path, "wb") as fh:
        write_ground_truth(events, fh)


def fit_normalization(training: Iterable[FrameObservation]) -> NormalizationStats:
    """Per-dimension min/max over every object feature in the training frames."""
    lo = hi = None
    for frame in training:
        if frame.n_objects == 0:
            continue
        fmin = frame.objects.min(axis=0)
        fmax = frame.objects.max(axis=0)
        if lo is None:
            lo, hi = fmin, fmax
        else:
            if fmin.shape != lo.shape:
                raise DimensionMismatchError(
                    f"frame dimensionality {fmin.shape[0]} differs from {lo.shape[0]}"
                )
            lo = np.minimum(lo, fmin)
            hi = np.maximum(hi, fmax)
    if lo is None:
        raise InsufficientDataError("no objects in training data to fit normalization")
    return NormalizationStats(minimum=lo, maximum=hi)


def normalize(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Map features to [0, 1] per dimension using training min/max.

    Values outside the training range clamp to the boundary; dimensions with
    min == max map to 0 (a constant feature carries no information).
    Accepts a single vector or an ``(n, m)`` matrix.
    """
    arr = np.asarray(values, dtype=float)
    if arr.shape[-1] != stats.dim:
        raise DimensionMismatchError(
            f"feature dimensionality {arr.shape[-1]} differs from stats m={stats.dim}"
        )
    span = stats.maximum - stats.minimum
    safe = np.where(span > 0, span, 1.0)
    out = (arr - stats.minimum) / safe
    out = np.where(span > 0, out, 0.0)
    return np.clip(out, 0.0, 1.0)


def normalize_frame(frame: FrameObservation, stats: NormalizationStats) -> FrameObservation:
    if frame.n_objects == 0:
        return FrameObservation(frame.video_id, frame.frame_index, np.empty((0, stats.dim)))
    return FrameObservation(frame.video_id, frame.frame_index, normalize(frame.objects, stats))


def group_by_video(frames: Sequence[FrameObservation]) -> dict[str, list[FrameObservation]]:
    """Split a parsed stream into per-video frame lists, sorted by video id."""
    grouped: dict[str, list[FrameObservation]] = {}
    for frame in frames:
        grouped.setdefault(frame.video_id, []).append(frame)
    return {vid: grouped[vid] for vid in sorted(grouped)}
