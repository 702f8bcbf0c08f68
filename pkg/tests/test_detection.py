"""Frame scoring, enrollment construction, and event extraction."""

import numpy as np
import pytest

from localdeg.detection import (
    DetectionEvent,
    build_enrollment,
    events_from_labels,
    events_from_scores,
    median_filter,
    score_frames_embedding,
    score_frames_mos,
)
from localdeg.errors import ConfigError, DimensionError
from localdeg.metrics import ScoredFrames, frame_eer


class TestEnrollment:
    def test_single_constant_utterance(self):
        v = np.array([0.6, 0.8])
        enr = build_enrollment([np.tile(v, (10, 1))])
        np.testing.assert_allclose(enr.vector, v, atol=1e-12)

    def test_two_utterance_formula(self):
        a = np.tile([1.0, 0.0], (4, 1))
        b = np.tile([0.0, 1.0], (6, 1))
        enr = build_enrollment([a, b])
        expected = np.array([0.5, 0.5])
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(enr.vector, expected, atol=1e-12)

    def test_order_invariance(self):
        rng = np.random.default_rng(0)
        utts = [rng.standard_normal((rng.integers(5, 9), 3)) for _ in range(4)]
        a = build_enrollment(utts).vector
        b = build_enrollment(utts[::-1]).vector
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            build_enrollment([])

    def test_unit_norm(self):
        rng = np.random.default_rng(1)
        enr = build_enrollment([rng.standard_normal((7, 5)) * 3.0])
        assert np.linalg.norm(enr.vector) == pytest.approx(1.0, abs=1e-6)


class TestScoring:
    def test_mos_scores_flip_sign(self):
        np.testing.assert_array_equal(score_frames_mos([5.0, 1.0]), [-5.0, -1.0])

    def test_mos_roc_equals_direct_thresholding(self):
        rng = np.random.default_rng(2)
        q = rng.uniform(1, 5, 500)
        labels = q < 3.0
        eer_scores = frame_eer(ScoredFrames(score_frames_mos(q), labels))
        eer_direct = frame_eer(ScoredFrames(-q, labels))
        assert eer_scores == eer_direct

    def test_embedding_extremes(self):
        enr = build_enrollment([np.tile([1.0, 0.0], (3, 1))])
        frames = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        scores = score_frames_embedding(frames, enr)
        np.testing.assert_allclose(scores, [-1.0, 1.0, 0.0], atol=1e-12)

    def test_embedding_scale_invariance(self):
        rng = np.random.default_rng(3)
        enr = build_enrollment([rng.standard_normal((5, 4))])
        frames = rng.standard_normal((8, 4))
        a = score_frames_embedding(frames, enr)
        b = score_frames_embedding(frames * 7.5, enr)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_zero_frame_scores_zero(self, caplog):
        enr = build_enrollment([np.tile([1.0, 0.0], (3, 1))])
        frames = np.array([[0.0, 0.0], [1.0, 0.0]])
        with caplog.at_level("WARNING"):
            scores = score_frames_embedding(frames, enr)
        assert scores[0] == 0.0
        assert any("zero-vector" in m for m in caplog.messages)

    def test_dimension_mismatch(self):
        enr = build_enrollment([np.tile([1.0, 0.0], (3, 1))])
        with pytest.raises(DimensionError):
            score_frames_embedding(np.zeros((4, 3)), enr)


class TestEvents:
    def test_all_below_threshold(self):
        assert events_from_scores([0.1, 0.2, 0.3], 0.5) == []

    def test_run_length_case(self):
        events = events_from_scores([0, 1, 1, 0, 1], 0.5)
        assert [(e.onset, e.offset) for e in events] == [(1, 3), (4, 5)]
        assert events[0].peak_score == 1.0

    def test_lowering_threshold_never_splits(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            scores = rng.standard_normal(60)
            t_hi, t_lo = sorted(rng.standard_normal(2), reverse=True)
            hi = events_from_scores(scores, t_hi)
            lo = events_from_scores(scores, t_lo)
            for e in hi:
                assert any(c.onset <= e.onset and e.offset <= c.offset for c in lo)

    def test_min_duration_filter(self):
        events = events_from_scores([1, 0, 1, 1, 0], 0.5, min_duration=2)
        assert [(e.onset, e.offset) for e in events] == [(2, 4)]

    def test_invalid_event_rejected(self):
        with pytest.raises(DimensionError):
            DetectionEvent(5, 5, 0.0)

    def test_events_from_labels(self):
        labels = np.array([7, 7, 2, 2, 7, 3])
        assert events_from_labels(labels, clean_class=7) == [(2, 4), (5, 6)]


class TestMedianFilter:
    def test_removes_single_spike(self):
        scores = np.zeros(11)
        scores[5] = 10.0
        assert median_filter(scores, 5).max() == 0.0

    def test_preserves_length(self):
        assert median_filter(np.arange(30.0), 5).shape == (30,)
