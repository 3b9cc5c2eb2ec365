"""Brute-force reference segmentation for verifying the vectorized Quickshift.

Pure-Python re-derivation from the definitions: exact fsum densities, all
pairwise distances materialized, explicit candidate scans. Shares no code
with the production path so the two can check each other.
"""

from __future__ import annotations

import math

__all__ = ["brute_force_labels"]


def brute_force_labels(values, mask, kernel_size, max_dist, ratio):
    """Region label per cell (-1 masked), as nested lists."""
    n_rows = len(values)
    n_cols = len(values[0]) if n_rows else 0
    cells = []
    for r in range(n_rows):
        for c in range(n_cols):
            if not mask[r][c]:
                cells.append((r, c))

    def coord(rc):
        r, c = rc
        return (float(r), float(c), ratio * float(values[r][c]))

    def sqdist(p, q):
        a, b = coord(p), coord(q)
        return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2

    def flat(rc):
        return rc[0] * n_cols + rc[1]

    density = {}
    for p in cells:
        terms = [math.exp(-sqdist(p, q) / (2.0 * kernel_size * kernel_size)) for q in cells]
        density[p] = math.fsum(terms) + 1e-12 * flat(p)

    parent = {}
    for p in cells:
        best = None
        for q in cells:
            if q == p or density[q] <= density[p]:
                continue
            d = math.sqrt(sqdist(p, q))
            if d > max_dist:
                continue
            if best is None or d < best[0] or (d == best[0] and flat(q) < best[1]):
                best = (d, flat(q), q)
        parent[p] = p if best is None else best[2]

    def root(p):
        while parent[p] != p:
            p = parent[p]
        return p

    root_flats = sorted({flat(root(p)) for p in cells})
    label_of = {rf: i for i, rf in enumerate(root_flats)}
    labels = [[-1] * n_cols for _ in range(n_rows)]
    for p in cells:
        labels[p[0]][p[1]] = label_of[flat(root(p))]
    return labels
