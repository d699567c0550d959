import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqvad.data_model import (
    FrameObservation,
    GroundTruthEvent,
    NormalizationStats,
    fit_normalization,
    normalize,
    parse_feature_stream,
    parse_ground_truth,
    write_feature_stream,
    write_ground_truth,
)
from seqvad.errors import (
    DimensionMismatchError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)


def make_line(video_id, frame_index, objects):
    return json.dumps(
        {"video_id": video_id, "frame_index": frame_index, "objects": objects}
    ).encode() + b"\n"


class TestParseFeatureStream:
    def test_one_line_two_objects(self):
        data = make_line("v1", 0, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        frames = list(parse_feature_stream(data))
        assert len(frames) == 1
        assert frames[0].video_id == "v1"
        assert frames[0].n_objects == 2
        assert frames[0].objects.shape == (2, 3)

    def test_empty_input(self):
        assert list(parse_feature_stream(b"")) == []

    def test_dimension_mismatch_across_stream(self):
        data = make_line("v1", 0, [[1.0, 2.0, 3.0, 4.0]]) + make_line(
            "v1", 1, [[1.0, 2.0, 3.0]]
        )
        with pytest.raises(DimensionMismatchError):
            list(parse_feature_stream(data))

    def test_malformed_line_names_line_number(self):
        data = make_line("v1", 0, [[1.0]]) + b"{broken\n"
        with pytest.raises(ParseError) as exc:
            list(parse_feature_stream(data))
        assert exc.value.line_number == 2
        assert "line 2" in str(exc.value)

    def test_non_increasing_frame_index_rejected(self):
        data = make_line("v1", 5, [[1.0]]) + make_line("v1", 5, [[2.0]])
        with pytest.raises(ValidationError):
            list(parse_feature_stream(data))

    def test_interleaved_videos_ok(self):
        data = (
            make_line("a", 0, [[1.0]])
            + make_line("b", 0, [[2.0]])
            + make_line("a", 1, [[3.0]])
        )
        frames = list(parse_feature_stream(data))
        assert [f.video_id for f in frames] == ["a", "b", "a"]

    def test_empty_object_list(self):
        data = make_line("v1", 0, []) + make_line("v1", 1, [[1.0, 2.0]])
        frames = list(parse_feature_stream(data))
        assert frames[0].n_objects == 0
        assert frames[1].dim == 2

    def test_non_finite_rejected(self):
        data = make_line("v1", 0, [[1.0, None]])
        with pytest.raises(ParseError):
            list(parse_feature_stream(data))


class TestRoundTrip:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_serialize_parse_identity(self, seed):
        rng = np.random.default_rng(seed)
        frames = []
        index = 0
        for _ in range(rng.integers(1, 8)):
            index += int(rng.integers(1, 3))
            count = int(rng.integers(0, 4))
            frames.append(
                FrameObservation("vid", index, rng.normal(size=(count, 3)))
            )
        buf = io.BytesIO()
        write_feature_stream(frames, buf)
        parsed = list(parse_feature_stream(buf.getvalue()))
        assert parsed == frames

    def test_ground_truth_round_trip(self):
        events = [
            GroundTruthEvent("v2", 0, 10, 100),
            GroundTruthEvent("v1", 10, 20, 100),
            GroundTruthEvent("v1", 50, 60, 100),
        ]
        buf = io.BytesIO()
        write_ground_truth(events, buf)
        parsed = parse_ground_truth(buf.getvalue())
        assert parsed == sorted(events, key=lambda e: (e.video_id, e.start_frame))


class TestParseGroundTruth:
    def test_single_event(self):
        line = json.dumps(
            {"video_id": "v1", "start_frame": 10, "end_frame": 20, "segment_length": 100}
        ).encode()
        events = parse_ground_truth(line)
        assert events == [GroundTruthEvent("v1", 10, 20, 100)]

    def test_overlap_rejected(self):
        lines = b"\n".join(
            json.dumps(
                {"video_id": "v1", "start_frame": s, "end_frame": e, "segment_length": 100}
            ).encode()
            for s, e in [(10, 20), (15, 30)]
        )
        with pytest.raises(ValidationError):
            parse_ground_truth(lines)

    def test_end_before_start_rejected(self):
        line = json.dumps(
            {"video_id": "v1", "start_frame": 20, "end_frame": 10, "segment_length": 100}
        ).encode()
        with pytest.raises(ValidationError):
            parse_ground_truth(line)

    def test_empty_is_fine(self):
        assert parse_ground_truth(b"") == []


class TestNormalization:
    def test_fit_basic(self):
        frames = [FrameObservation("v", 0, [[0.0, 2.0], [1.0, 4.0]])]
        stats = fit_normalization(frames)
        assert np.array_equal(stats.minimum, [0.0, 2.0])
        assert np.array_equal(stats.maximum, [1.0, 4.0])

    def test_fit_single_object_degenerate(self):
        frames = [FrameObservation("v", 0, [[0.5, 0.5]])]
        stats = fit_normalization(frames)
        assert np.array_equal(stats.minimum, stats.maximum)

    def test_fit_negative_values(self):
        frames = [FrameObservation("v", 0, [[-1.0, 0.0]]), FrameObservation("v", 1, [[3.0, 0.0]])]
        stats = fit_normalization(frames)
        assert np.array_equal(stats.minimum, [-1.0, 0.0])
        assert np.array_equal(stats.maximum, [3.0, 0.0])

    def test_fit_no_objects(self):
        with pytest.raises(InsufficientDataError):
            fit_normalization([FrameObservation("v", 0, [])])

    def test_normalize_midpoint(self):
        stats = NormalizationStats(np.array([0.0]), np.array([1.0]))
        assert normalize(np.array([0.5]), stats) == pytest.approx([0.5])

    def test_normalize_clamps(self):
        stats = NormalizationStats(np.array([0.0]), np.array([1.0]))
        assert normalize(np.array([5.0]), stats)[0] == 1.0
        assert normalize(np.array([-5.0]), stats)[0] == 0.0

    def test_normalize_degenerate_dimension_maps_to_zero(self):
        stats = NormalizationStats(np.array([7.0]), np.array([7.0]))
        assert normalize(np.array([7.0]), stats)[0] == 0.0

    def test_dimension_mismatch(self):
        stats = NormalizationStats(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        with pytest.raises(DimensionMismatchError):
            normalize(np.array([1.0]), stats)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_training_data_needs_no_clamping(self, seed):
        # Every normalized training feature must land in [0, 1] exactly.
        rng = np.random.default_rng(seed)
        values = rng.normal(scale=10.0, size=(rng.integers(2, 30), 4))
        frames = [FrameObservation("v", i, row[None, :]) for i, row in enumerate(values)]
        stats = fit_normalization(frames)
        normalized = normalize(values, stats)
        assert normalized.min() >= 0.0 and normalized.max() <= 1.0
        span = stats.maximum > stats.minimum
        raw = (values - stats.minimum) / np.where(span, stats.maximum - stats.minimum, 1.0)
        assert np.array_equal(normalized[:, span], raw[:, span])

    def test_unit_stats_idempotent(self):
        stats = NormalizationStats(np.zeros(3), np.ones(3))
        x = np.array([[0.1, 0.5, 0.9], [0.0, 1.0, 0.3]])
        once = normalize(x, stats)
        assert np.array_equal(once, normalize(once, stats))
