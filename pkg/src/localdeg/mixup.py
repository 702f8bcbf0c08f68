"""Partial mix-up: splice segments of the degraded signal into its aligned
clean reference, with frame-level pseudo scores and class labels.

Masks are binary with hard boundaries. Segments snap to the 320-sample frame
grid by default so the sample mask and the frame mask cover exactly the same
time points; the >= 50% overlap rule only matters with snapping disabled.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .corpus import ParallelUtterance, Waveform
from .errors import ConfigError, DimensionError
from .features import FRAME_SAMPLES

logger = logging.getLogger(__name__)

# Segment duration bounds in frames (320 samples each).
TRAIN_DURATION_FRAMES = (10, 50)  # 200 ms .. 1 s
EVAL_DURATION_FRAMES = (20, 100)  # 400 ms .. 2 s
MAX_SEGMENTS = 3
REJECTION_BUDGET = 100

MIN_REF_SCORE = 3.5
MAX_DEG_SCORE = 4.0
MIN_SCORE_GAP = 0.5


@dataclass
class SampleMask:
    """Sorted, non-overlapping half-open sample segments."""

    segments: list
    total_length: int

    def __post_init__(self):
        prev = 0
        for on, off in self.segments:
            if not 0 <= on < off <= self.total_length:
                raise DimensionError(f"segment ({on}, {off}) out of range")
            if on < prev:
                raise DimensionError("segments must be sorted and disjoint")
            prev = off

    def indicator(self) -> np.ndarray:
        m = np.zeros(self.total_length, dtype=bool)
        for on, off in self.segments:
            m[on:off] = True
        return m


def frame_mask_from_samples(mask: SampleMask) -> np.ndarray:
    """Frame l is masked iff >= 50% of its 320-sample span is masked."""
    L = mask.total_length // FRAME_SAMPLES
    ind = mask.indicator()[: L * FRAME_SAMPLES].reshape(L, FRAME_SAMPLES)
    return ind.sum(axis=1) * 2 >= FRAME_SAMPLES


@dataclass
class MixupExample:
    signal: Waveform
    q_pseudo: np.ndarray
    labels: np.ndarray  # per-frame class in {1..K+1}
    frame_mask: np.ndarray
    sample_mask: SampleMask
    source_id: str
    class_id: int
    kinds: tuple = ()

    @property
    def y(self) -> float:
        return float(self.q_pseudo.mean())


def _duration_bounds(mode: str):
    if mode == "train":
        return TRAIN_DURATION_FRAMES
    if mode == "eval":
        return EVAL_DURATION_FRAMES
    raise ConfigError(f"unknown mask mode: {mode}")


def eligible_frames(u: ParallelUtterance, per_segment_mean: bool = False):
    """Frames usable for mask placement; None if the utterance is gated out."""
    if u.y_ref < MIN_REF_SCORE or u.y_deg > MAX_DEG_SCORE:
        return None
    ok = u.speech_mask.copy()
    if not per_segment_mean:
        ok &= (u.q_ref - u.q_deg) > MIN_SCORE_GAP
    return ok


def sample_mask(u: ParallelUtterance, mode: str, rng, snap: bool = True,
                per_segment_mean: bool = False):
    """Sample a constrained mix-up mask, or None when infeasible.

    Constraints in constrained (``train``/``eval``) sampling: 1..3 segments
    with mode-specific duration bounds, placement inside speech regions,
    reference/degraded utterance score gates, and a per-frame quality gap
    (or per-segment mean gap when ``per_segment_mean``).
    """
    lo, hi = _duration_bounds(mode)
    L = u.n_frames
    ok = eligible_frames(u, per_segment_mean)
    if ok is None or not ok.any():
        return None
    gap = u.q_ref - u.q_deg

    for _ in range(REJECTION_BUDGET):
        n_seg = int(rng.integers(1, MAX_SEGMENTS + 1))
        taken = np.zeros(L, dtype=bool)
        placed = []
        feasible = True
        for _ in range(n_seg):
            dur = int(rng.integers(lo, hi + 1))
            free = ok & ~taken
            run = np.convolve(free.astype(np.int64), np.ones(dur, dtype=np.int64),
                              "valid") if dur <= L else np.zeros(0, dtype=np.int64)
            starts = np.flatnonzero(run == dur)
            if per_segment_mean and starts.size:
                means = np.convolve(gap, np.ones(dur) / dur, "valid")[starts]
                starts = starts[means > MIN_SCORE_GAP]
            if starts.size == 0:
                feasible = False
                break
            start = int(starts[rng.integers(0, starts.size)])
            # Guard band keeps segments from touching and merging into one
            # longer effective region.
            taken[max(start - 1, 0) : start + dur + 1] = True
            placed.append((start, start + dur))
        if feasible:
            placed.sort()
            if snap:
                segments = [(s * FRAME_SAMPLES, e * FRAME_SAMPLES) for s, e in placed]
            else:
                jitter = int(rng.integers(0, FRAME_SAMPLES))
                segments = [
                    (
                        max(s * FRAME_SAMPLES - jitter, 0),
                        min(e * FRAME_SAMPLES - jitter, len(u.ref)),
                    )
                    for s, e in placed
                ]
            return SampleMask(segments, len(u.ref))
    return None


def apply_mixup(u: ParallelUtterance, mask: SampleMask, clean_class: int) -> MixupExample:
    """Splice degraded audio into the reference under the mask (exact)."""
    if mask.total_length != len(u.ref):
        raise DimensionError(
            f"mask length {mask.total_length} != utterance length {len(u.ref)}"
        )
    ind = mask.indicator()
    signal = np.where(ind, u.deg.samples, u.ref.samples)
    fm = frame_mask_from_samples(mask)
    q_pseudo = np.where(fm, u.q_deg, u.q_ref)
    labels = np.where(fm, u.class_id, clean_class).astype(np.int64)
    return MixupExample(
        signal=Waveform(signal, u.ref.sample_rate),
        q_pseudo=q_pseudo,
        labels=labels,
        frame_mask=fm,
        sample_mask=mask,
        source_id=u.utt_id,
        class_id=u.class_id,
        kinds=u.kinds,
    )


@dataclass
class TrainingExample:
    """One sampler emission: either a mix-up example or a plain utterance."""

    signal: Waveform
    y: float
    labels: np.ndarray
    mixup_applied: bool
    q_pseudo: np.ndarray = None
    frame_mask: np.ndarray = None
    source_id: str = ""


def plain_example(u: ParallelUtterance, use_deg: bool, clean_class: int):
    L = u.n_frames
    if use_deg:
        labels = np.full(L, u.class_id, dtype=np.int64)
        return TrainingExample(u.deg, u.y_deg, labels, False, source_id=u.utt_id)
    labels = np.full(L, clean_class, dtype=np.int64)
    return TrainingExample(u.ref, u.y_ref, labels, False, source_id=u.utt_id)


class BatchSampler:
    """Deterministic infinite stream of training examples.

    With probability ``p_mixup`` an utterance goes through constrained mask
    sampling; infeasible draws fall back to the plain utterance and are
    counted. Plain emissions use the degraded or reference signal with its
    utterance label; mixed emissions use the mean pseudo score as target.
    """

    def __init__(self, utterances, p_mixup: float, mode: str, rng, clean_class: int,
                 snap: bool = True, per_segment_mean: bool = False):
        if not utterances:
            raise ConfigError("empty corpus")
        if not 0.0 <= p_mixup <= 1.0:
            raise ConfigError(f"p_mixup must be in [0, 1], got {p_mixup}")
        self.utterances = list(utterances)
        self.p_mixup = p_mixup
        self.mode = mode
        self.rng = rng
        self.clean_class = clean_class
        self.snap = snap
        self.per_segment_mean = per_segment_mean
        self.fallbacks = 0
        self.emitted = 0

    def __iter__(self):
        while True:
            order = self.rng.permutation(len(self.utterances))
            for idx in order:
                yield self._emit(self.utterances[idx])

    def _emit(self, u):
        self.emitted += 1
        if self.rng.random() < self.p_mixup:
            mask = sample_mask(u, self.mode, self.rng, self.snap, self.per_segment_mean)
            if mask is not None:
                ex = apply_mixup(u, mask, self.clean_class)
                return TrainingExample(
                    signal=ex.signal,
                    y=ex.y,
                    labels=ex.labels,
                    mixup_applied=True,
                    q_pseudo=ex.q_pseudo,
                    frame_mask=ex.frame_mask,
                    source_id=u.utt_id,
                )
            self.fallbacks += 1
            if self.fallbacks in (1, 10, 100) or self.fallbacks % 1000 == 0:
                logger.info("mix-up infeasible fallbacks so far: %d", self.fallbacks)
        return plain_example(u, bool(self.rng.integers(0, 2)), self.clean_class)


def materialize_eval_set(utterances, out_dir, rng, clean_class: int) -> list[dict]:
    """Write an eval-mode mix-up set: WAV + LDL1 labels + manifest records.

    Utterances where no feasible mask exists are skipped (logged).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    skipped = 0
    for u in utterances:
        mask = sample_mask(u, "eval", rng)
        if mask is None:
            skipped += 1
            continue
        ex = apply_mixup(u, mask, clean_class)
        wav_path = f"{u.utt_id}_mix.wav"
        lab_path = f"{u.utt_id}_mix.ldl"
        fileio.write_wav(out_dir / wav_path, ex.signal.samples)
        fileio.write_frame_labels(out_dir / lab_path, ex.labels)
        records.append(
            {
                "id": f"{u.utt_id}-mix",
                "wav_path": wav_path,
                "labels_path": lab_path,
                "source_id": u.utt_id,
                "class_id": u.class_id,
                "kinds": list(u.kinds),
                "n_kinds": len(u.kinds),
            }
        )
    fileio.write_manifest(out_dir / "manifest.jsonl", records)
    if skipped:
        logger.warning("eval mix-up set: skipped %d infeasible utterances", skipped)
    return records
