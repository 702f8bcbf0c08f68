"""Threshold-free detection metrics: frame EER, frame minDCF, and the area
under an intersection-based event ROC.

Score convention everywhere: higher means more degraded, and a frame is
detected at threshold t iff score > t. Sweeps always cover every distinct
score value plus the +/- infinity endpoints, with no binning.

The event ROC counts a detection as valid when at least ``rho_dtc`` of its
duration intersects ground truth, and a ground-truth event as hit when at
least ``rho_gtc`` of its duration is covered by valid detections. False
positives are duration-weighted by default (one second of invalid detection
counts as one event), normalized per second of audio, and the curve is the
running-maximum staircase over operating points, integrated on
``[0, e_max]`` and normalized by ``e_max``. Absolute values therefore depend
on ``e_max`` and are comparable only within this toolkit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError

FRAME_RATE = 50.0


@dataclass
class ScoredFrames:
    """Detection scores with binary ground truth (True = degraded)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise DimensionError(
                f"scores {self.scores.shape} vs labels {self.labels.shape}"
            )


@dataclass
class OperatingPoint:
    threshold: float
    p_miss: float
    p_fa: float
    event_tpr: float = 0.0
    event_fp_rate: float = 0.0


def _sweep(sf: ScoredFrames):
    """Miss/false-alarm rates over all distinct thresholds plus endpoints.

    Returns arrays ordered by descending threshold, starting at the
    detect-nothing endpoint and ending at detect-everything.
    """
    n_pos = int(sf.labels.sum())
    n_neg = sf.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("need at least one positive and one negative frame")
    order = np.argsort(-sf.scores, kind="mergesort")
    s_sorted = sf.scores[order]
    l_sorted = sf.labels[order]
    firsts = np.flatnonzero(np.concatenate(([True], s_sorted[1:] != s_sorted[:-1])))
    detected = np.concatenate((firsts, [sf.scores.size]))
    cum_pos = np.concatenate(([0], np.cumsum(l_sorted)))
    tp = cum_pos[detected]
    p_miss = (n_pos - tp) / n_pos
    p_fa = (detected - tp) / n_neg
    thresholds = np.concatenate((s_sorted[firsts], [-np.inf]))
    return thresholds, p_miss, p_fa


def frame_eer(sf: ScoredFrames) -> float:
    """Equal error rate, linearly interpolated between the two operating
    points bracketing the miss == false-alarm crossing."""
    _, p_miss, p_fa = _sweep(sf)
    diff = p_miss - p_fa
    k = int(np.argmax(diff < 0.0))
    if diff[k] >= 0.0:  # never goes negative: crossing at the last point
        return float(p_miss[-1])
    if k == 0:
        return float(p_fa[0])
    d1, d2 = diff[k - 1], diff[k]
    t = d1 / (d1 - d2)
    return float(p_fa[k - 1] + t * (p_fa[k] - p_fa[k - 1]))


def frame_min_dcf(sf: ScoredFrames, p_target: float = 0.01, c_miss: float = 1.0,
                  c_fa: float = 1.0) -> float:
    """Minimum normalized detection cost over the exhaustive sweep.

    The sweep includes the always-reject and always-accept endpoints, so the
    result never exceeds 1.0 under the standard normalization.
    """
    _, p_miss, p_fa = _sweep(sf)
    norm = min(c_miss * p_target, c_fa * (1.0 - p_target))
    cost = (c_miss * p_target * p_miss + c_fa * (1.0 - p_target) * p_fa) / norm
    return float(cost.min())


# ---------------------------------------------------------------------------
# intersection-based event ROC


def _runs(mask: np.ndarray):
    """Maximal runs of True as half-open (onset, offset) pairs."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[0::2], edges[1::2]))


def _level_stats(scores, gt_events, rho_dtc, rho_gtc, duration_weighted):
    """Per-utterance operating states at each of its distinct score levels.

    Level j activates the j largest distinct scores; returns parallel arrays
    of false-positive weight and ground-truth hit count, index 0 = nothing.
    """
    levels = np.unique(scores)[::-1]
    L = scores.size
    gt_mask = np.zeros(L, dtype=bool)
    for on, off in gt_events:
        gt_mask[on:off] = True
    gt_cum = np.concatenate(([0], np.cumsum(gt_mask)))
    fp = np.zeros(levels.size + 1)
    hits = np.zeros(levels.size + 1, dtype=np.int64)
    for j, v in enumerate(levels, start=1):
        mask = scores >= v
        valid_mask = np.zeros(L, dtype=bool)
        fp_w = 0.0
        for on, off in _runs(mask):
            inter = gt_cum[off] - gt_cum[on]
            if inter >= rho_dtc * (off - on):
                valid_mask[on:off] = True
            else:
                fp_w += (off - on) if duration_weighted else 1.0
        valid_cum = np.concatenate(([0], np.cumsum(valid_mask)))
        h = 0
        for on, off in gt_events:
            if valid_cum[off] - valid_cum[on] >= rho_gtc * (off - on):
                h += 1
        fp[j] = fp_w
        hits[j] = h
    return levels, fp, hits


def staircase_area(fp, tpr, e_max: float) -> float:
    """Area under the running-max staircase through the operating points,
    restricted to [0, e_max] on the false-positive axis and normalized."""
    fp = np.asarray(fp, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    order = np.argsort(fp, kind="mergesort")
    fp_s = fp[order]
    env = np.maximum.accumulate(tpr[order])
    area = 0.0
    prev_fp = 0.0
    prev_tp = 0.0
    for x, v in zip(fp_s, env):
        if x > prev_fp:
            area += (min(x, e_max) - min(prev_fp, e_max)) * prev_tp
            prev_fp = x
        prev_tp = max(prev_tp, v)
    area += (e_max - min(prev_fp, e_max)) * prev_tp
    return area / e_max


def intersection_auc(gt_events_per_utt, scores_per_utt, rho_dtc: float = 0.7,
                     rho_gtc: float = 0.7, e_max: float = 0.1,
                     duration_weighted: bool = True) -> float:
    """Event-level detection AUC with intersection tolerance criteria.

    ``gt_events_per_utt``: per utterance, a list of half-open frame spans.
    ``scores_per_utt``: per utterance, per-frame degradation scores.
    """
    if len(gt_events_per_utt) != len(scores_per_utt):
        raise DimensionError("one ground-truth event list per score vector required")
    total_gt = sum(len(ev) for ev in gt_events_per_utt)
    if total_gt == 0:
        raise UndefinedMetricError("no ground-truth events in the evaluation set")
    total_seconds = sum(len(s) for s in scores_per_utt) / FRAME_RATE

    per_utt = [
        _level_stats(np.asarray(s, dtype=np.float64), ev, rho_dtc, rho_gtc,
                     duration_weighted)
        for s, ev in zip(scores_per_utt, gt_events_per_utt)
    ]
    sweep = np.unique(np.concatenate([np.asarray(s, dtype=np.float64).ravel()
                                      for s in scores_per_utt]))[::-1]
    fp_total = np.zeros(sweep.size + 2)
    hit_total = np.zeros(sweep.size + 2)
    for levels, fp, hits in per_utt:
        asc = levels[::-1]
        # state index at threshold t: number of this utterance's levels > t
        js = np.concatenate(
            ([0], levels.size - np.searchsorted(asc, sweep, side="right"),
             [levels.size])
        )
        fp_total += fp[js]
        hit_total += hits[js]

    tpr = hit_total / total_gt
    if duration_weighted:
        fp_rate = fp_total / FRAME_RATE / total_seconds
    else:
        fp_rate = fp_total / total_seconds
    return float(staircase_area(fp_rate, tpr, e_max))
