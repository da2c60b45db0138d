"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np


def rotated_corners(w, h, theta):
    """Frame corners rotated about the frame centre with an explicit 2x2 matrix."""
    c, s = math.cos(theta), math.sin(theta)
    out = []
    for x, y in ((0, 0), (w, 0), (w, h), (0, h)):
        dx, dy = x - w / 2, y - h / 2
        out.append((w / 2 + c * dx - s * dy, h / 2 + s * dx + c * dy))
    return np.array(out)


def vertical_extent(poly: np.ndarray, xs: np.ndarray):
    """For each x, the [lo, hi] y-interval of a convex polygon on that vertical line (nan outside)."""
    lo = np.full(xs.shape, np.inf)
    hi = np.full(xs.shape, -np.inf)
    n = len(poly)
    for k in range(n):
        (x0, y0), (x1, y1) = poly[k], poly[(k + 1) % n]
        if x0 == x1:
            on = np.isclose(xs, x0)
            lo = np.where(on, np.minimum(lo, min(y0, y1)), lo)
            hi = np.where(on, np.maximum(hi, max(y0, y1)), hi)
            continue
        t = (xs - x0) / (x1 - x0)
        inside = (t >= 0) & (t <= 1)
        y = y0 + t * (y1 - y0)
        lo = np.where(inside, np.minimum(lo, y), lo)
        hi = np.where(inside, np.maximum(hi, y), hi)
    bad = lo > hi
    lo[bad], hi[bad] = np.nan, np.nan
    return lo, hi


def brute_force_inscribed_area(w, h, theta, n=400):
    """Largest axis-aligned rectangle inside the rotated frame, over every pair of
    vertical edges on an ``n``-point grid.  A rectangle [x0,x1]x[y0,y1] lies in
    a convex polygon iff its four corners do, which pins the best y-range for
    each x-pair."""
    poly = rotated_corners(w, h, theta)
    xs = np.linspace(poly[:, 0].min(), poly[:, 0].max(), n)
    lo, hi = vertical_extent(poly, xs)
    top = np.maximum.outer(lo, lo)
    bottom = np.minimum.outer(hi, hi)
    width = np.abs(np.subtract.outer(xs, xs))
    area = width * np.clip(bottom - top, 0.0, None)
    return float(np.nanmax(area))


def point_in_convex(poly: np.ndarray, pts: np.ndarray, tol: float) -> np.ndarray:
    """True where points lie inside (or within ``tol`` of) a convex polygon, either orientation."""
    n = len(poly)
    cross = []
    for k in range(n):
        a, b = poly[k], poly[(k + 1) % n]
        e = b - a
        L = math.hypot(*e)
        cross.append((e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])) / L)
    cross = np.array(cross)
    return np.all(cross >= -tol, axis=0) | np.all(cross <= tol, axis=0)


def levenshtein_recursive(a, b) -> int:
    """Exponential textbook recursion; only for short inputs."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(levenshtein_recursive(a[1:], b) + 1,
               levenshtein_recursive(a, b[1:]) + 1,
               levenshtein_recursive(a[1:], b[1:]) + (a[0] != b[0]))


def schedule_angle(n, N, C, theta_max, r, terms):
    rho = 2 * math.pi * (C * n / N + r)
    return theta_max * sum(lam * math.sin(gam * rho) for lam, gam in terms)
