"""Frame scoring and event extraction for degradation detection.

Scores follow one convention: higher = more degraded. Score-based detection
negates the frame quality estimate; embedding-based detection negates the
cosine similarity to a clean enrollment embedding.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


@dataclass
class Enrollment:
    """Unit-norm reference embedding with its provenance (set id, kind)."""

    vector: np.ndarray
    source: tuple = ("", "")


@dataclass
class DetectionEvent:
    """Contiguous detected region in frames, half-open."""

    onset: int
    offset: int
    peak_score: float

    def __post_init__(self):
        if self.onset >= self.offset:
            raise DimensionError("event onset must precede offset")

    @property
    def duration(self):
        return self.offset - self.onset


def build_enrollment(frame_embeddings, source=("", "")) -> Enrollment:
    """Mean of per-utterance mean embeddings, renormalized to unit length.

    ``frame_embeddings``: one [L, D] array per enrollment utterance.
    """
    frame_embeddings = list(frame_embeddings)
    if not frame_embeddings:
        raise ConfigError("enrollment set is empty")
    utt_means = np.stack([e.mean(axis=0) for e in frame_embeddings])
    v = utt_means.mean(axis=0)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ConfigError("enrollment vector has zero norm")
    return Enrollment(v / norm, source)


def score_frames_mos(q_hat) -> np.ndarray:
    """Degradation score from frame quality estimates (monotone flip)."""
    return -np.asarray(q_hat, dtype=np.float64)


def score_frames_embedding(frames, enrollment: Enrollment) -> np.ndarray:
    """Negative cosine similarity of each frame embedding to the enrollment."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != enrollment.vector.shape[0]:
        raise DimensionError(
            f"frames {frames.shape} vs enrollment {enrollment.vector.shape}"
        )
    norms = np.linalg.norm(frames, axis=1)
    zero = norms == 0.0
    if zero.any():
        logger.warning("%d zero-vector frames scored as similarity 0", zero.sum())
    sims = frames @ enrollment.vector / np.where(zero, 1.0, norms)
    sims[zero] = 0.0
    return -sims


def median_filter(scores, width: int = 5) -> np.ndarray:
    """Odd-width running median with edge replication."""
    scores = np.asarray(scores, dtype=np.float64)
    half = width // 2
    padded = np.pad(scores, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)
    return np.median(windows, axis=1)


def events_from_scores(scores, threshold: float, min_duration: int = 0):
    """Maximal runs of frames with score > threshold, in onset order."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = scores > threshold
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    events = []
    for on, off in zip(edges[0::2], edges[1::2]):
        if off - on >= max(min_duration, 1):
            events.append(DetectionEvent(int(on), int(off), float(scores[on:off].max())))
    return events


def events_from_labels(labels, clean_class: int):
    """Ground-truth degradation events from a frame label sequence."""
    mask = np.asarray(labels) != clean_class
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))
