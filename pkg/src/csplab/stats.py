"""Small statistics helpers shared by the Monte Carlo modules."""

from __future__ import annotations

import numpy as np
from scipy.stats import binomtest


def wilson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion; (0, 1) when there are no trials."""
    if trials <= 0:
        return 0.0, 1.0
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


def isotonic_decreasing(y, w=None) -> np.ndarray:
    """Weighted least-squares non-increasing fit (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    blocks: list[list[float]] = []  # [mean, weight, count]
    for yi, wi in zip(y, w):
        blocks.append([yi, wi, 1])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, w2, c2 = blocks.pop()
            m1, w1, c1 = blocks.pop()
            tw = w1 + w2
            mean = (m1 * w1 + m2 * w2) / tw if tw > 0 else (m1 + m2) / 2
            blocks.append([mean, tw, c1 + c2])
    out = []
    for m, _, c in blocks:
        out += [m] * c
    return np.array(out)


def crossing(xs, ys, level: float) -> float:
    """First x where the non-increasing piecewise-linear curve through (xs, ys) reaches
    ``level``; -inf if it starts below, +inf if it never gets there."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) == 0:
        return float("nan")
    if ys[0] <= level:
        return float(xs[0]) if ys[0] == level else float("-inf")
    for i in range(1, len(xs)):
        if ys[i] <= level:
            if ys[i - 1] == ys[i]:
                return float(xs[i])
            f = (ys[i - 1] - level) / (ys[i - 1] - ys[i])
            return float(xs[i - 1] + f * (xs[i] - xs[i - 1]))
    return float("inf")
