"""Evaluation pipeline: forward a trained model over materialized mix-up
sets, score frames, and assemble detection / embedding-analysis reports.

Forward passes over utterances are read-only on the model and parallelize
over a thread pool capped by ``LOCALDEG_NUM_THREADS`` (default 1); results
reduce in utterance order, so reports do not depend on the pool size.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import fileio
from .config import RunConfig
from .corpus import Waveform, load_split
from .detection import (
    Enrollment,
    build_enrollment,
    events_from_labels,
    events_from_scores,
    median_filter,
    score_frames_embedding,
    score_frames_mos,
)
from .embed_eval import (
    adjusted_rand_index,
    agglomerative_cluster,
    clean_cluster_accuracy,
    extract_segments,
    prototype_retrieval,
    verification_eer,
)
from .errors import ConfigError, IoError
from .metrics import ScoredFrames, _level_stats, frame_eer, frame_min_dcf, intersection_auc
from .model import EMBEDDING_KINDS, Model

logger = logging.getLogger(__name__)

MAX_KINDS_FOR_CLUSTERING = 2  # regions with more simultaneous degradations are dropped


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("LOCALDEG_NUM_THREADS", "1")))
    except ValueError:
        return 1


def forward_utterances(model: Model, signals):
    """Eval-mode forwards in utterance order, optionally thread-parallel."""
    signals = list(signals)
    workers = _max_workers()
    with ad.no_grad():
        if workers == 1 or len(signals) < 2:
            return [model.forward(s) for s in signals]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(model.forward, signals))


@dataclass
class EvalUtterance:
    utt_id: str
    samples: np.ndarray
    labels: np.ndarray
    class_id: int
    n_kinds: int


def load_eval_set(corpus_dir, split: str):
    set_dir = Path(corpus_dir) / "mixeval" / split
    records = fileio.read_manifest(set_dir / "manifest.jsonl")
    out = []
    for rec in records:
        out.append(
            EvalUtterance(
                utt_id=rec["id"],
                samples=fileio.read_wav(set_dir / rec["wav_path"]),
                labels=fileio.read_frame_labels(set_dir / rec["labels_path"]),
                class_id=rec["class_id"],
                n_kinds=rec["n_kinds"],
            )
        )
    if not out:
        raise IoError(f"no evaluation utterances under {set_dir}")
    return out


def read_meta(corpus_dir) -> dict:
    path = Path(corpus_dir) / "meta.json"
    try:
        import json

        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise IoError(f"corpus metadata not found: {path}") from e


def enrollment_for_kind(model, enroll_waves, kind: str, source_id: str) -> Enrollment:
    outputs = forward_utterances(model, enroll_waves)
    return build_enrollment([o.embedding(kind) for o in outputs], (source_id, kind))


def detection_report(model: Model, corpus_dir, cfg: RunConfig, variant: str,
                     kinds=None) -> dict:
    """Frame EER / minDCF / intersection AUC for embedding-based detection
    plus intersection AUC for score-based detection, on the test mix-up set."""
    kinds = list(kinds) if kinds else list(EMBEDDING_KINDS)
    for kind in kinds:
        if kind not in EMBEDDING_KINDS:
            raise ConfigError(f"unknown embedding kind {kind!r}")
    meta = read_meta(corpus_dir)
    clean = meta["clean_label"]
    test = load_eval_set(corpus_dir, "test")
    enroll_utts = load_split(corpus_dir, cfg.eval.enrollment_split)
    if not enroll_utts:
        raise ConfigError(f"empty enrollment split {cfg.eval.enrollment_split!r}")
    enroll_waves = [u.ref for u in enroll_utts]
    enroll_outputs = forward_utterances(model, enroll_waves)
    test_outputs = forward_utterances(model, [Waveform(e.samples) for e in test])

    gt_events = [events_from_labels(e.labels, clean) for e in test]
    gt_frames = np.concatenate([e.labels != clean for e in test])
    source_id = f"{cfg.eval.enrollment_split}/ref"

    rows = []
    for kind in kinds:
        enr = build_enrollment(
            [o.embedding(kind) for o in enroll_outputs], (source_id, kind)
        )
        scores = [
            score_frames_embedding(o.embedding(kind), enr) for o in test_outputs
        ]
        if cfg.eval.median_filter:
            scores = [median_filter(s) for s in scores]
        sf = ScoredFrames(np.concatenate(scores), gt_frames)
        rows.append({"metric": "frame_eer", "embedding_kind": kind,
                     "value": frame_eer(sf)})
        rows.append({"metric": "frame_min_dcf", "embedding_kind": kind,
                     "value": frame_min_dcf(sf, cfg.eval.p_target)})
        rows.append({"metric": "iauc", "embedding_kind": kind,
                     "value": intersection_auc(
                         gt_events, scores, cfg.eval.rho_dtc, cfg.eval.rho_gtc,
                         cfg.eval.e_max, cfg.eval.duration_weighted)})
    mos_scores = [score_frames_mos(o.q_hat.data) for o in test_outputs]
    if cfg.eval.median_filter:
        mos_scores = [median_filter(s) for s in mos_scores]
    rows.append({"metric": "iauc", "embedding_kind": "mos",
                 "value": intersection_auc(
                     gt_events, mos_scores, cfg.eval.rho_dtc, cfg.eval.rho_gtc,
                     cfg.eval.e_max, cfg.eval.duration_weighted)})
    return {
        "config_digest": cfg.digest(),
        "variant": variant,
        "enrollment_set": source_id,
        "metrics": rows,
    }


def best_f1_threshold(gt_events_per_utt, scores_per_utt, rho_dtc, rho_gtc) -> float:
    """Threshold maximizing the intersection-based F1 over the whole set;
    ties resolve to the highest threshold."""
    per_utt = [
        _level_stats(np.asarray(s, dtype=np.float64), ev, rho_dtc, rho_gtc, False)
        for s, ev in zip(scores_per_utt, gt_events_per_utt)
    ]
    total_gt = sum(len(ev) for ev in gt_events_per_utt)
    sweep = np.unique(np.concatenate([np.asarray(s).ravel() for s in scores_per_utt]))[::-1]
    best_f1, best_thr = -1.0, np.inf
    fp_at = np.zeros(sweep.size)
    tp_at = np.zeros(sweep.size)
    for levels, fp, hits in per_utt:
        asc = levels[::-1]
        js = levels.size - np.searchsorted(asc, sweep, side="right")
        fp_at += fp[js]
        tp_at += hits[js]
    for t, tp, fp in zip(sweep, tp_at, fp_at):
        denom = 2 * tp + fp + (total_gt - tp)
        f1 = 2 * tp / denom if denom > 0 else 0.0
        if f1 > best_f1:
            best_f1, best_thr = f1, t
    # Detect strictly above the threshold: step just below the best level.
    return float(np.nextafter(best_thr, -np.inf))


def detected_regions(det_model: Model, test, enroll_waves, kind, cfg: RunConfig,
                     clean: int):
    """Embedding-based detection events per utterance at the F1-best threshold."""
    enr = enrollment_for_kind(det_model, enroll_waves, kind, "detect")
    outputs = forward_utterances(det_model, [Waveform(e.samples) for e in test])
    scores = [score_frames_embedding(o.embedding(kind), enr) for o in outputs]
    gt_events = [events_from_labels(e.labels, clean) for e in test]
    thr = best_f1_threshold(gt_events, scores, cfg.eval.rho_dtc, cfg.eval.rho_gtc)
    return [
        [(ev.onset, ev.offset) for ev in events_from_scores(s, thr)] for s in scores
    ]


def _segments_for_set(model, eval_set, regions_per_utt, clean):
    outputs = forward_utterances(model, [Waveform(e.samples) for e in eval_set])
    segments = []
    for e, out, regions in zip(eval_set, outputs, regions_per_utt):
        emb = out.embedding("zscl")
        assert emb.shape[0] == e.labels.shape[0], "frame grids must match"
        segments.extend(extract_segments(emb, e.labels, regions, e.utt_id, clean))
    return segments


def embedding_report(model: Model, corpus_dir, cfg: RunConfig, variant: str,
                     detection: str = "oracle", det_model: Model = None,
                     det_variant: str = "") -> dict:
    """Verification, retrieval, and clustering quality of segment embeddings.

    ``detection`` is "oracle" for ground-truth regions or a model id; in the
    latter case ``det_model`` finds regions (possibly a different model than
    the one embedding them, for cross-model evaluation).
    """
    meta = read_meta(corpus_dir)
    clean = meta["clean_label"]
    n_kinds_of = {int(c): len(k) for c, k in meta["classes"].items()}
    n_kinds_of[clean] = 0
    val = load_eval_set(corpus_dir, "val")
    test = load_eval_set(corpus_dir, "test")

    oracle_val = [events_from_labels(e.labels, clean) for e in val]
    oracle_test = [events_from_labels(e.labels, clean) for e in test]
    val_segments = _segments_for_set(model, val, oracle_val, clean)
    test_segments = _segments_for_set(model, test, oracle_test, clean)

    single_classes = {int(c) for c, k in meta["classes"].items() if len(k) == 1}
    test_single = [s for s in test_segments if s.class_id in single_classes]
    val_single = [s for s in val_segments if s.class_id in single_classes]

    report = {
        "config_digest": cfg.digest(),
        "variant": variant,
        "detection": detection,
        "embedding_kind": "zscl",
        "verification_eer_all": verification_eer(test_segments),
        "verification_eer_single": verification_eer(test_single),
        "retrieval_acc_all": prototype_retrieval(val_segments, test_segments),
        "retrieval_acc_single": prototype_retrieval(val_single, test_single),
    }

    if detection == "oracle":
        cluster_segments = test_segments
    else:
        if det_model is None:
            det_model = model
        enroll_waves = [u.ref for u in load_split(corpus_dir, cfg.eval.enrollment_split)]
        regions = detected_regions(det_model, test, enroll_waves, "zscl", cfg, clean)
        cluster_segments = _segments_for_set(model, test, regions, clean)

    # Keep the cluster count tractable: drop regions with too many
    # simultaneous degradations before clustering.
    cluster_segments = [
        s for s in cluster_segments if n_kinds_of[s.class_id] <= MAX_KINDS_FOR_CLUSTERING
    ]
    truth = np.array([s.class_id for s in cluster_segments])
    k_target = int(np.unique(truth).size)
    result = agglomerative_cluster(cluster_segments, k_target)
    report["ari_dist"] = adjusted_rand_index(result.assignment, truth, exclude=(clean,))
    if detection == "oracle":
        report["ari"] = None
        report["clean_acc"] = None
    else:
        report["ari"] = adjusted_rand_index(result.assignment, truth)
        report["clean_acc"] = clean_cluster_accuracy(result.assignment, truth, clean)
        report["detection_variant"] = det_variant or variant
    return report


def export_trace(model: Model, corpus_dir, cfg: RunConfig, utt_id: str, out_path,
                 kind: str = "zscl"):
    """Per-frame CSV trace (score-based, embedding-based, ground truth)."""
    test = load_eval_set(corpus_dir, "test")
    matches = [e for e in test if e.utt_id == utt_id]
    if not matches:
        raise IoError(f"utterance {utt_id!r} not in the test manifest")
    e = matches[0]
    meta = read_meta(corpus_dir)
    enroll_waves = [u.ref for u in load_split(corpus_dir, cfg.eval.enrollment_split)]
    enr = enrollment_for_kind(model, enroll_waves, kind, cfg.eval.enrollment_split)
    out = forward_utterances(model, [Waveform(e.samples)])[0]
    mos = score_frames_mos(out.q_hat.data)
    emb = score_frames_embedding(out.embedding(kind), enr)
    gt = (e.labels != meta["clean_label"]).astype(int)
    rows = [
        (l, repr(float(mos[l])), repr(float(emb[l])), gt[l]) for l in range(mos.size)
    ]
    fileio.write_csv(out_path, ["frame_index", "mos_score", "emb_score", "ground_truth"], rows)
    return len(rows)
