"""Independent brute-force reference implementations used as test oracles.

These deliberately avoid the production code paths: explicit Python loops,
padded windows, and per-threshold re-evaluation.
"""

import math

import numpy as np


def conv1d_oracle(x, w, b):
    """Direct sliding-window sum over a zero-padded input."""
    L, c_in = x.shape
    k, _, c_out = w.shape
    p = (k - 1) // 2
    xp = np.zeros((L + 2 * p, c_in))
    xp[p : p + L] = x
    out = np.zeros((L, c_out))
    for l in range(L):
        window = xp[l : l + k]
        for co in range(c_out):
            out[l, co] = (window * w[:, :, co]).sum() + b[co]
    return out


def finite_difference(f, params, h=1e-5):
    """Central finite differences of a re-runnable scalar function."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.zeros_like(n) if a is None else a
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def scl_oracle(z, labels, utt, frames, temperature, window, excluded):
    """Double-loop supervised contrastive loss with both exclusions."""
    n = len(labels)

    def dropped(i, j):
        return i == j or (utt[i] == utt[j] and abs(frames[i] - frames[j]) < window)

    total, count = 0.0, 0
    for i in range(n):
        if labels[i] in excluded:
            continue
        positives = [
            j for j in range(n) if not dropped(i, j) and labels[j] == labels[i]
        ]
        if not positives:
            continue
        denom = sum(
            math.exp(float(z[i] @ z[j]) / temperature)
            for j in range(n)
            if not dropped(i, j)
        )
        term = sum(
            math.log(math.exp(float(z[i] @ z[j]) / temperature) / denom)
            for j in positives
        ) / len(positives)
        total += -term
        count += 1
    return total / count if count else 0.0


def sweep_oracle(scores, labels):
    """Operating points by re-counting the whole set at every threshold."""
    scores = list(map(float, scores))
    labels = list(map(bool, labels))
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    thresholds = sorted(set(scores), reverse=True) + [float("-inf")]
    points = []
    for t in thresholds:
        missed = sum(1 for s, l in zip(scores, labels) if l and s <= t)
        fp = sum(1 for s, l in zip(scores, labels) if not l and s > t)
        points.append((t, missed / n_pos, fp / n_neg))
    return points


def eer_oracle(scores, labels):
    points = sweep_oracle(scores, labels)
    for k in range(1, len(points)):
        _, m1, f1 = points[k - 1]
        _, m2, f2 = points[k]
        d1, d2 = m1 - f1, m2 - f2
        if d2 < 0.0:
            t = d1 / (d1 - d2)
            return f1 + t * (f2 - f1)
    return points[-1][1]


def min_dcf_oracle(scores, labels, p_target=0.01, c_miss=1.0, c_fa=1.0):
    points = sweep_oracle(scores, labels)
    norm = min(c_miss * p_target, c_fa * (1.0 - p_target))
    return min(
        (c_miss * p_target * m + c_fa * (1.0 - p_target) * f) / norm
        for _, m, f in points
    )


def _runs_py(mask):
    runs, start = [], None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def iauc_oracle(gt_events_per_utt, scores_per_utt, rho_dtc=0.7, rho_gtc=0.7,
                e_max=0.1, duration_weighted=True, frame_rate=50.0):
    """Per-threshold re-evaluation of the intersection criteria, followed by
    an independently coded staircase integration."""
    total_gt = sum(len(ev) for ev in gt_events_per_utt)
    total_seconds = sum(len(s) for s in scores_per_utt) / frame_rate
    thresholds = sorted({float(v) for s in scores_per_utt for v in s}, reverse=True)
    points = [(0.0, 0.0)]
    for t in thresholds + [float("-inf")]:
        fp_w, hits = 0.0, 0
        for events_gt, s in zip(gt_events_per_utt, scores_per_utt):
            mask = [float(v) > t for v in s]
            gt_ind = [False] * len(s)
            for on, off in events_gt:
                for i in range(on, off):
                    gt_ind[i] = True
            valid_ind = [False] * len(s)
            for on, off in _runs_py(mask):
                inter = sum(gt_ind[on:off])
                if inter >= rho_dtc * (off - on):
                    for i in range(on, off):
                        valid_ind[i] = True
                else:
                    fp_w += (off - on) if duration_weighted else 1.0
            for on, off in events_gt:
                if sum(valid_ind[on:off]) >= rho_gtc * (off - on):
                    hits += 1
        if duration_weighted:
            fp_rate = fp_w / frame_rate / total_seconds
        else:
            fp_rate = fp_w / total_seconds
        points.append((fp_rate, hits / total_gt))
    points.sort(key=lambda p: p[0])
    area, prev_fp, prev_tp = 0.0, 0.0, 0.0
    for fp, tp in points:
        if fp > prev_fp:
            area += (min(fp, e_max) - min(prev_fp, e_max)) * prev_tp
            prev_fp = fp
        prev_tp = max(prev_tp, tp)
    area += (e_max - min(prev_fp, e_max)) * prev_tp
    return area / e_max


def average_linkage_oracle(vectors, k_target):
    """Exhaustive average-linkage agglomeration over cosine distances."""
    n = len(vectors)
    clusters = [[i] for i in range(n)]
    dist = 1.0 - np.asarray(vectors) @ np.asarray(vectors).T

    def linkage(a, b):
        return sum(dist[i, j] for i in a for j in b) / (len(a) * len(b))

    while len(clusters) > k_target:
        best = None
        for p in range(len(clusters)):
            for q in range(p + 1, len(clusters)):
                d = linkage(clusters[p], clusters[q])
                lo, hi = sorted((min(clusters[p]), min(clusters[q])))
                key = (d, lo, hi)
                if best is None or key < best[0]:
                    best = (key, p, q)
        _, p, q = best
        clusters[p] = clusters[p] + clusters[q]
        del clusters[q]
    assignment = np.empty(n, dtype=int)
    for cid, members in enumerate(sorted(clusters, key=min)):
        assignment[members] = cid
    return assignment


def ari_oracle(assignment, truth):
    """Pair-counting adjusted Rand index, one pair at a time."""
    n = len(truth)
    both = same_a = same_t = 0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            pairs += 1
            sa = assignment[i] == assignment[j]
            st = truth[i] == truth[j]
            both += sa and st
            same_a += sa
            same_t += st
    expected = same_a * same_t / pairs
    max_index = 0.5 * (same_a + same_t)
    if max_index == expected:
        return 1.0
    return (both - expected) / (max_index - expected)
