"""Independent brute-force reference implementations used as test oracles.

Everything here is deliberately written with plain Python loops (and the
occasional basic numpy call for random data), independent of the library's
own code paths, so a test that compares the two is a genuine cross-check.
"""

from __future__ import annotations

import itertools
import math
import random


# ---------------------------------------------------------------------------
# Gram-matrix texture embedding
# ---------------------------------------------------------------------------

def ref_texture_embedding(frames_by_layer: dict[int, list[list[float]]],
                          projection: list[list[float]]) -> list[float]:
    """Plain-loop reimplementation: project, per-layer Gram, average,
    flatten row-major, L2-normalize."""
    d = len(projection)
    gram_avg = [[0.0] * d for _ in range(d)]
    layers = sorted(frames_by_layer)
    for layer in layers:
        frames = frames_by_layer[layer]
        t = len(frames)
        projected = []
        for frame in frames:
            projected.append([sum(p_k * x for p_k, x in zip(row, frame)) for row in projection])
        gram = [[0.0] * d for _ in range(d)]
        for frame in projected:
            for i in range(d):
                for j in range(d):
                    gram[i][j] += frame[i] * frame[j]
        for i in range(d):
            for j in range(d):
                gram_avg[i][j] += gram[i][j] / t
    flat = [gram_avg[i][j] / len(layers) for i in range(d) for j in range(d)]
    norm = math.sqrt(sum(x * x for x in flat))
    return [x / norm for x in flat]


# ---------------------------------------------------------------------------
# Parameter metrics
# ---------------------------------------------------------------------------

def ref_flatten(tree: dict, prefix: str = "") -> dict[str, float]:
    out: dict[str, float] = {}
    for key, value in tree.items():
        path = prefix + "." + key if prefix else key
        if isinstance(value, dict):
            out.update(ref_flatten(value, path))
        elif isinstance(value, bool):
            out[path] = 1.0 if value else 0.0
        elif isinstance(value, (int, float)):
            out[path] = float(value)
    return out


def ref_l2(gt: dict[str, float], pred: dict[str, float]) -> float:
    keys = set(gt) | set(pred)
    total = 0.0
    for k in keys:
        total += (gt.get(k, 0.0) - pred.get(k, 0.0)) ** 2
    return math.sqrt(total / len(keys))


def ref_acc(gt: dict[str, float], pred: dict[str, float], tol: float = 0.1) -> float:
    keys = set(gt) | set(pred)
    hits = sum(1 for k in keys if abs(gt.get(k, 0.0) - pred.get(k, 0.0)) <= tol)
    return hits / len(keys)


def ref_recall(gt, pred, active=0.05, tol=0.1):
    active_keys = [k for k, v in gt.items() if abs(v) > active]
    if not active_keys:
        return None
    hits = sum(1 for k in active_keys if abs(gt[k] - pred.get(k, 0.0)) <= tol)
    return hits / len(active_keys)


def ref_cosine(gt, pred):
    keys = set(gt) | set(pred)
    dot = sum(gt.get(k, 0.0) * pred.get(k, 0.0) for k in keys)
    ng = math.sqrt(sum(v * v for v in gt.values()))
    np_ = math.sqrt(sum(v * v for v in pred.values()))
    if ng == 0.0 or np_ == 0.0:
        return None
    return dot / (ng * np_)


def ref_module_jaccard(gt_tree: dict, pred_tree: dict):
    def active(tree):
        mods = set()
        for key, value in tree.items():
            if key.endswith("On"):
                if ref_flatten({key: value}):
                    mods.add(key)
        return mods

    a, b = active(gt_tree), active(pred_tree)
    if not (a | b):
        return None
    return len(a & b) / len(a | b)


def ref_norm_l2(gt, pred, ranges: dict[str, tuple[float, float]],
                default: tuple[float, float] | None = None):
    def norm(key, value):
        lo, hi = ranges.get(key, default)
        x = (value - lo) / (hi - lo)
        return min(1.0, max(0.0, x))

    keys = set(gt) | set(pred)
    total = 0.0
    for k in keys:
        total += (norm(k, gt.get(k, 0.0)) - norm(k, pred.get(k, 0.0))) ** 2
    return math.sqrt(total / len(keys))


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------

def ref_cosine_ranking(entries: dict[str, list[float]], query: list[float]) -> list[str]:
    """Exhaustive sort by cosine, ties by ascending id."""
    qn = math.sqrt(sum(x * x for x in query))

    def cosine(vec):
        vn = math.sqrt(sum(x * x for x in vec))
        dot = sum(a * b for a, b in zip(vec, query))
        return dot / (vn * qn)

    scored = [(rid, cosine(vec)) for rid, vec in entries.items()]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [rid for rid, _ in scored]


def ref_weighted_ranking(text_scores: dict[str, float], audio_cosines: dict[str, float],
                         w_text: float, w_audio: float) -> list[str]:
    fused = {
        rid: w_text * text_scores[rid] + w_audio * (audio_cosines[rid] + 1.0) / 2.0
        for rid in text_scores
    }
    ordered = sorted(fused.items(), key=lambda item: (-item[1], item[0]))
    return [rid for rid, _ in ordered]


# ---------------------------------------------------------------------------
# TF-IDF text scoring
# ---------------------------------------------------------------------------

def ref_tfidf_cosine(doc_tokens: dict[str, list[str]], query_tokens: list[str],
                     record_id: str) -> float:
    n = len(doc_tokens)
    df: dict[str, int] = {}
    for tokens in doc_tokens.values():
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1

    def idf(tok):
        return math.log((n + 1) / (df.get(tok, 0) + 1)) + 1.0

    def weights(tokens):
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        return {tok: tf * idf(tok) for tok, tf in counts.items()}

    q = weights(query_tokens)
    d = weights(doc_tokens[record_id])
    dot = sum(w * d[tok] for tok, w in q.items() if tok in d)
    qn = math.sqrt(sum(w * w for w in q.values()))
    dn = math.sqrt(sum(w * w for w in d.values()))
    if qn == 0.0 or dn == 0.0:
        return 0.0
    return dot / (qn * dn)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def ref_exact_sign_flip_p(diffs: list[float]) -> float:
    """Enumerate every sign assignment with itertools; two-sided on the mean."""
    n = len(diffs)
    obs = abs(sum(diffs) / n)
    count = 0
    for signs in itertools.product((1, -1), repeat=n):
        mean = abs(sum(s * d for s, d in zip(signs, diffs)) / n)
        if mean >= obs - 1e-12:
            count += 1
    return count / 2 ** n


def ref_bootstrap_ci(diffs: list[float], level: float = 0.95,
                     resamples: int = 100_000, seed: int = 1234) -> tuple[float, float]:
    """Independent percentile bootstrap with Python's Mersenne Twister."""
    rng = random.Random(seed)
    n = len(diffs)
    means = []
    for _ in range(resamples):
        total = 0.0
        for _ in range(n):
            total += diffs[rng.randrange(n)]
        means.append(total / n)
    means.sort()
    alpha = (1.0 - level) / 2.0

    def quantile(q):
        pos = q * (len(means) - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, len(means) - 1)
        frac = pos - lo
        return means[lo] * (1 - frac) + means[hi] * frac

    return quantile(alpha), quantile(1.0 - alpha)


def ref_holm(p_values: list[float]) -> list[float]:
    m = len(p_values)
    indexed = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(indexed):
        running = max(running, (m - rank) * p_values[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted
