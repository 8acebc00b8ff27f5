"""Brute-force reference implementations, deliberately loop-based and independent
of the vectorized library code they check."""

import math


def dist(a, b, metric):
    if metric == "euclidean":
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return 0.5 * sum((x / na - y / nb) ** 2 for x, y in zip(a, b))


def count_matches(e, gallery, metric, theta):
    n = 0
    for g in gallery:
        if dist(e, g, metric) < theta:
            n += 1
    return n


def coverage_fitness(e, gallery, metric, theta):
    return 1.0 - count_matches(e, gallery, metric, theta) / len(gallery)


def msc(e, gallery, metric, theta):
    return 100.0 * count_matches(e, gallery, metric, theta) / len(gallery)


def far_frr(genuine, impostor, theta):
    fa = 0
    for d in impostor:
        if d < theta:
            fa += 1
    fr = 0
    for d in genuine:
        if not d < theta:
            fr += 1
    return fa / len(impostor), fr / len(genuine)


def nearest_rank(values, p):
    s = sorted(values)
    rank = math.ceil(p / 100.0 * len(s))
    if rank < 1:
        rank = 1
    return s[rank - 1]


def relabel(fitness, p):
    cut = nearest_rank(fitness, p)
    return [1 if f < cut else 0 for f in fitness]


def centroid_coverage(gallery, centroids, metric, theta):
    hit = 0
    for g in gallery:
        for c in centroids:
            if dist(c, g, metric) < theta:
                hit += 1
                break
    return 100.0 * hit / len(gallery)


def combined_grid(a_gen, a_imp, b_gen, b_imp, resolution):
    """Exhaustive grid search, tie broken toward the smallest (theta_a, theta_b)."""
    best = None
    for i in range(resolution):
        ta = i / (resolution - 1)
        for j in range(resolution):
            tb = j / (resolution - 1)
            fa = sum(1 for x, y in zip(a_imp, b_imp) if x < ta and y < tb) / len(a_imp)
            ok = sum(1 for x, y in zip(a_gen, b_gen) if x < ta and y < tb)
            fr = 1.0 - ok / len(a_gen)
            gap = abs(fa - fr)
            if best is None or gap < best[0]:
                best = (gap, ta, tb, (fa + fr) / 2)
    return best
