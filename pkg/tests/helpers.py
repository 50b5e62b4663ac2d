"""Small builders shared by several test modules."""

import math
from fractions import Fraction

import numpy as np

from osp_pipeline.frames import N_CLASSES, FrameClass, FrameProbabilitySequence

D = int(FrameClass.DETACHED)
H = int(FrameClass.HEAD)
B = int(FrameClass.BACKGROUND)


def onehot(labels) -> FrameProbabilitySequence:
    labels = np.asarray(labels, dtype=np.int64)
    p = np.zeros((labels.size, N_CLASSES))
    p[np.arange(labels.size), labels] = 1.0
    return FrameProbabilitySequence(p)


def runs_layout(lengths, gap=5, fill=B):
    """Detached gaps around runs of ``fill``; returns (labels, [(start, end)])."""
    labels, spans = [D] * gap, []
    for n in lengths:
        spans.append((len(labels), len(labels) + n))
        labels += [fill] * n + [D] * gap
    return np.array(labels), spans


def ellipse_points(cx, cy, a, b, angle, n=32, phase=0.0):
    t = phase + 2 * math.pi * np.arange(n) / n
    c, s = math.cos(angle), math.sin(angle)
    x = cx + a * np.cos(t) * c - b * np.sin(t) * s
    y = cy + a * np.cos(t) * s + b * np.sin(t) * c
    return np.column_stack([x, y])


def filled_ellipse(a, b, angle, margin=6, cx_frac=0.0, cy_frac=0.0):
    """Mask with pixel centres inside the ellipse (no jitter)."""
    c, s = math.cos(angle), math.sin(angle)
    hx = math.sqrt((a * c) ** 2 + (b * s) ** 2)
    hy = math.sqrt((a * s) ** 2 + (b * c) ** 2)
    w, h = int(math.ceil(2 * (hx + margin))), int(math.ceil(2 * (hy + margin)))
    cx, cy = (w - 1) / 2 + cx_frac, (h - 1) / 2 + cy_frac
    yy, xx = np.mgrid[0:h, 0:w]
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.uint8)


def brute_best_split(X, y, n_classes):
    """Independent oracle: exact rational Gini gains, plain loops."""

    def gini(labels):
        n = len(labels)
        return 1 - sum(Fraction(labels.count(c), n) ** 2 for c in range(n_classes))

    y = [int(v) for v in y]
    n = len(y)
    parent = gini(y)
    best = None
    for f in range(len(X[0])):
        values = sorted(set(float(r[f]) for r in X))
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) / 2
            left = [y[i] for i in range(n) if X[i][f] <= t]
            right = [y[i] for i in range(n) if X[i][f] > t]
            gain = parent - Fraction(len(left), n) * gini(left) - Fraction(len(right), n) * gini(right)
            if gain > 0 and (best is None or gain > best[2]):
                best = (f, t, gain)
    return best
