"""Degradation-type analysis on segment embeddings: verification EER,
prototype retrieval, average-linkage clustering, adjusted Rand index, and
clean-cluster accuracy.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UndefinedMetricError
from .metrics import ScoredFrames, frame_eer

logger = logging.getLogger(__name__)


@dataclass
class SegmentEmbedding:
    """Unit-norm mean embedding of one contiguous region."""

    vector: np.ndarray
    class_id: int
    utterance_id: str
    frame_range: tuple

    def __post_init__(self):
        if self.frame_range[0] >= self.frame_range[1]:
            raise ConfigError("segment frame range must be non-empty")


@dataclass
class ClusteringResult:
    assignment: np.ndarray  # cluster id per segment, dense in [0, k)
    k_clusters: int


def majority_label(labels, clean_class: int) -> int:
    """Most frequent label; ties resolve away from clean, then lowest id."""
    vals, counts = np.unique(np.asarray(labels), return_counts=True)
    cands = vals[counts == counts.max()]
    non_clean = cands[cands != clean_class]
    return int(non_clean.min()) if non_clean.size else int(clean_class)


def extract_segments(frame_embeddings, frame_labels, regions, utterance_id: str,
                     clean_class: int):
    """One segment per contiguous region: mean embedding, majority label.

    ``regions`` are half-open frame spans (oracle mask runs or detected
    events); an empty list yields an empty result.
    """
    frame_embeddings = np.asarray(frame_embeddings, dtype=np.float64)
    frame_labels = np.asarray(frame_labels)
    segments = []
    for on, off in sorted(regions):
        if not 0 <= on < off <= frame_embeddings.shape[0]:
            raise ConfigError(f"region ({on}, {off}) outside utterance")
        v = frame_embeddings[on:off].mean(axis=0)
        v = v / max(np.linalg.norm(v), 1e-12)
        segments.append(
            SegmentEmbedding(
                vector=v,
                class_id=majority_label(frame_labels[on:off], clean_class),
                utterance_id=utterance_id,
                frame_range=(int(on), int(off)),
            )
        )
    return segments


def verification_eer(segments) -> float:
    """EER of same-class verification over all unordered segment pairs,
    scored by cosine similarity."""
    if len(segments) < 2:
        raise UndefinedMetricError("verification needs at least two segments")
    vecs = np.stack([s.vector for s in segments])
    classes = np.array([s.class_id for s in segments])
    sims = vecs @ vecs.T
    iu = np.triu_indices(len(segments), k=1)
    scores = sims[iu]
    same = classes[iu[0]] == classes[iu[1]]
    return frame_eer(ScoredFrames(scores, same))


def prototype_retrieval(val_segments, test_segments) -> float:
    """Accuracy of nearest-prototype classification.

    Prototypes are normalized class means over the validation segments; test
    segments whose class has no prototype are dropped (logged).
    """
    if not val_segments:
        raise ConfigError("no validation segments to build prototypes from")
    by_class = {}
    for s in val_segments:
        by_class.setdefault(s.class_id, []).append(s.vector)
    class_ids = sorted(by_class)
    protos = np.stack(
        [np.mean(by_class[c], axis=0) for c in class_ids]
    )
    protos /= np.maximum(np.linalg.norm(protos, axis=1, keepdims=True), 1e-12)

    usable = [s for s in test_segments if s.class_id in by_class]
    dropped = len(test_segments) - len(usable)
    if dropped:
        logger.warning("retrieval: dropped %d segments with unseen classes", dropped)
    if not usable:
        raise UndefinedMetricError("no test segments share a class with validation")
    if len(class_ids) == 1:
        logger.warning("retrieval with a single class is degenerate")
    vecs = np.stack([s.vector for s in usable])
    pred = np.argmax(vecs @ protos.T, axis=1)
    truth = np.array([class_ids.index(s.class_id) for s in usable])
    return float(np.mean(pred == truth))


def agglomerative_cluster(segments, k_target: int) -> ClusteringResult:
    """Bottom-up average-linkage clustering under cosine distance.

    Merges the pair of clusters with the smallest average pairwise distance
    until ``k_target`` remain; distance ties break on the lowest segment
    index pair. O(n^2) memory, O(n^3) time: fine for desk-scale n.
    """
    n = len(segments)
    if k_target < 1:
        raise ConfigError("k_target must be at least 1")
    if k_target > n:
        raise ConfigError(f"k_target {k_target} exceeds {n} segments")
    vecs = np.stack([s.vector for s in segments])
    dist = 1.0 - vecs @ vecs.T
    np.fill_diagonal(dist, np.inf)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    members = {i: [i] for i in range(n)}
    for _ in range(n - k_target):
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if i > j:
            i, j = j, i
        # Lance-Williams update for average linkage.
        merged = (sizes[i] * dist[i] + sizes[j] * dist[j]) / (sizes[i] + sizes[j])
        dist[i] = merged
        dist[:, i] = merged
        dist[i, i] = np.inf
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        sizes[i] += sizes[j]
        active[j] = False
        members[i].extend(members.pop(j))
    assignment = np.empty(n, dtype=np.int64)
    for cluster_id, rep in enumerate(sorted(members)):
        assignment[members[rep]] = cluster_id
    return ClusteringResult(assignment, k_target)


def adjusted_rand_index(assignment, ground_truth, exclude=None) -> float:
    """Pair-counting ARI in [-0.5, 1]; optionally drops segments whose true
    class is in ``exclude`` before counting."""
    assignment = np.asarray(assignment)
    ground_truth = np.asarray(ground_truth)
    if assignment.shape != ground_truth.shape:
        raise ConfigError("assignment and ground truth must align")
    if exclude is not None and len(exclude):
        keep = ~np.isin(ground_truth, np.asarray(list(exclude)))
        assignment = assignment[keep]
        ground_truth = ground_truth[keep]
    n = assignment.size
    if n < 2:
        raise UndefinedMetricError("ARI needs at least two segments")
    _, gi = np.unique(ground_truth, return_inverse=True)
    _, ai = np.unique(assignment, return_inverse=True)
    contingency = np.zeros((gi.max() + 1, ai.max() + 1), dtype=np.int64)
    np.add.at(contingency, (gi, ai), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(contingency).sum()
    sum_a = comb2(contingency.sum(axis=1)).sum()
    sum_b = comb2(contingency.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def clean_cluster_accuracy(assignment, ground_truth, clean_class: int) -> float:
    """Recall of the clean class under per-cluster majority-vote mapping."""
    assignment = np.asarray(assignment)
    ground_truth = np.asarray(ground_truth)
    clean = ground_truth == clean_class
    if not clean.any():
        raise UndefinedMetricError("no clean segments in ground truth")
    correct = 0
    for c in np.unique(assignment):
        in_cluster = assignment == c
        vals, counts = np.unique(ground_truth[in_cluster], return_counts=True)
        mapped = int(vals[counts == counts.max()].min())
        if mapped == clean_class:
            correct += int((in_cluster & clean).sum())
    return correct / int(clean.sum())
