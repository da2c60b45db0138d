"""Primary-region rule and rotation-augmentation geometry.

Pixel coordinates have the origin at the top-left corner with y growing
downwards.  Angles are radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> np.ndarray:
        return np.array([[self.x, self.y], [self.right, self.y],
                         [self.right, self.bottom], [self.x, self.bottom]], dtype=float)

    def contains(self, other: "Rect", tol: float = 1e-9) -> bool:
        return (other.x >= self.x - tol and other.y >= self.y - tol
                and other.right <= self.right + tol and other.bottom <= self.bottom + tol)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "Rect":
        return cls(float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"]))


@dataclass
class SkinMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool).reshape(self.height, self.width)

    @classmethod
    def empty(cls, width: int, height: int) -> "SkinMask":
        return cls(width, height, np.zeros((height, width), dtype=bool))


def read_pbm(path: str | Path) -> SkinMask:
    """Read a P1/P4 bitmap; PBM ``1`` (black) pixels are skin."""
    from PIL import Image

    with Image.open(path) as img:
        if img.format != "PPM" or img.mode != "1":
            raise ValueError(f"{path}: expected a PBM bitmap, got {img.format}/{img.mode}")
        arr = np.array(img)
    # Pillow maps PBM black (bit 1) to False
    return SkinMask(arr.shape[1], arr.shape[0], ~arr)


def write_pbm(mask: SkinMask, path: str | Path) -> None:
    rows = ["P1", f"{mask.width} {mask.height}"]
    rows += [" ".join("1" if b else "0" for b in row) for row in mask.bits]
    Path(path).write_text("\n".join(rows) + "\n")


def read_points(path: str | Path) -> list[Point2D]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("points", [data])
    return [Point2D(float(p["x"]), float(p["y"])) for p in data]


# ---------------------------------------------------------------------------
# Primary region


def _clip(x0: float, y0: float, x1: float, y1: float, W: float, H: float) -> Rect:
    x0, x1 = max(0.0, min(x0, W)), max(0.0, min(x1, W))
    y0, y1 = max(0.0, min(y0, H)), max(0.0, min(y1, H))
    # inflate degenerate boxes to one pixel, staying inside the frame
    if x1 - x0 < 1.0:
        x1 = min(W, x0 + 1.0)
        x0 = x1 - 1.0
    if y1 - y0 < 1.0:
        y1 = min(H, y0 + 1.0)
        y0 = y1 - 1.0
    return Rect(x0, y0, x1 - x0, y1 - y0)


def primary_region(mask: SkinMask | None, wrists: list[Point2D], frame: tuple[float, float],
                   fixed_box: tuple[float, float] | None = None) -> Rect:
    """Box around the hands from a skin mask and up to two wrist points.

    * nothing detected: the full frame;
    * skin only: tight box around all skin pixels;
    * wrists only: a ``fixed_box`` sized box centred on the wrist centroid;
    * both: wrists give the left, right and bottom edges, the highest skin
      pixel gives the top edge.  With a single wrist the horizontal extent is
      ``x +- fixed_w / 2``.

    ``fixed_box`` defaults to a quarter of the frame in each dimension.
    """
    W, H = frame
    if W <= 0 or H <= 0:
        raise ValueError("frame dimensions must be positive")
    if len(wrists) > 2:
        raise ValueError("at most two wrist points")
    fw, fh = fixed_box if fixed_box is not None else (W / 4.0, H / 4.0)
    has_skin = mask is not None and bool(mask.bits.any())
    if not has_skin and not wrists:
        return Rect(0.0, 0.0, float(W), float(H))
    if has_skin:
        ys, xs = np.nonzero(mask.bits)
    if not wrists:
        # pixel (i, j) covers [j, j+1) x [i, i+1)
        return _clip(xs.min(), ys.min(), xs.max() + 1.0, ys.max() + 1.0, W, H)
    wx = np.array([p.x for p in wrists])
    wy = np.array([p.y for p in wrists])
    if not has_skin:
        cx, cy = wx.mean(), wy.mean()
        return _clip(cx - fw / 2, cy - fh / 2, cx + fw / 2, cy + fh / 2, W, H)
    if len(wrists) == 1:
        left, right = wx[0] - fw / 2, wx[0] + fw / 2
    else:
        left, right = wx.min(), wx.max()
    return _clip(left, float(ys.min()), right, wy.max(), W, H)


# ---------------------------------------------------------------------------
# Rotation schedule


@dataclass
class RotationSchedule:
    """Smooth per-frame rotation angles for one video.

    ``theta(n) = theta_max * sum_i lambda_i * sin(gamma_i * rho(n))`` with
    ``rho(n) = 2 pi (C n / N + r)``.
    """

    C: float
    theta_max: float
    terms: list[tuple[float, float]]  # (lambda_i, gamma_i)
    r: float
    num_frames: int

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if not 0 < self.theta_max <= math.pi / 4 + 1e-15:
            raise ValueError("theta_max must be in (0, pi/4]")
        if not self.terms:
            raise ValueError("need at least one sinusoid term")
        lam = [t[0] for t in self.terms]
        if any(x < 0 for x in lam) or abs(sum(lam) - 1.0) > 1e-9:
            raise ValueError("term weights must be non-negative and sum to 1")
        if any(t[1] <= 0 for t in self.terms):
            raise ValueError("term frequencies must be positive")
        if not 0 <= self.r <= 0.5:
            raise ValueError("phase r must be in [0, 1/2]")
        if self.num_frames < 1:
            raise ValueError("num_frames must be positive")

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    @classmethod
    def random(cls, num_frames: int, theta_max: float, rng: np.random.Generator, C: float = 1.0,
               terms: list[tuple[float, float]] | None = None) -> "RotationSchedule":
        """Schedule with the phase ``r`` drawn uniformly from [0, 1/2]."""
        return cls(C, theta_max, terms or [(1.0, 1.0)], float(rng.uniform(0.0, 0.5)), num_frames)


def rotation_angle(n: int, sched: RotationSchedule) -> float:
    if not 0 <= n < sched.num_frames:
        raise ValueError(f"frame index {n} outside [0, {sched.num_frames})")
    rho = 2.0 * math.pi * (sched.C / sched.num_frames * n + sched.r)
    return sched.theta_max * sum(lam * math.sin(gam * rho) for lam, gam in sched.terms)


def rotation_angles(sched: RotationSchedule) -> np.ndarray:
    return np.array([rotation_angle(n, sched) for n in range(sched.num_frames)])


# ---------------------------------------------------------------------------
# Crops and box transfer


def inscribed_size(w: float, h: float, theta: float) -> tuple[float, float]:
    """Size of the largest axis-aligned rectangle inside a ``w x h`` frame rotated by ``theta``."""
    if w <= 0 or h <= 0:
        raise ValueError("w and h must be positive")
    if abs(theta) > math.pi / 4 + 1e-12:
        raise ValueError("|theta| must not exceed pi/4")
    sa, ca = abs(math.sin(theta)), abs(math.cos(theta))
    s, l = min(w, h), max(w, h)
    if s / l > 2.0 * sa * ca:
        c2 = math.cos(2.0 * theta)
        return (w * ca - h * sa) / c2, (h * ca - w * sa) / c2
    if w > h:
        return s / (2.0 * sa), s / (2.0 * ca)
    return s / (2.0 * ca), s / (2.0 * sa)


def inscribed_crop(w: float, h: float, theta: float) -> tuple[float, float, Rect]:
    """``(w_r, h_r, crop)`` with the crop centred on the frame centre.

    The rotation keeps the canvas centre fixed, so the crop is expressed in
    the original frame's pixel coordinates.
    """
    wr, hr = inscribed_size(w, h, theta)
    return wr, hr, Rect(w / 2.0 - wr / 2.0, h / 2.0 - hr / 2.0, wr, hr)


def rotate_points(pts: np.ndarray, theta: float, center: Point2D) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    d = np.asarray(pts, dtype=float) - [center.x, center.y]
    return np.stack([center.x + c * d[:, 0] - s * d[:, 1],
                     center.y + s * d[:, 0] + c * d[:, 1]], axis=1)


def rotated_frame_polygon(w: float, h: float, theta: float) -> np.ndarray:
    """Corners of a ``w x h`` frame rotated about its centre (4 x 2)."""
    return rotate_points(Rect(0, 0, w, h).corners(), theta, Point2D(w / 2.0, h / 2.0))


def rotate_rect(rect: Rect, theta: float, center: Point2D) -> Rect:
    """Axis-aligned bounding box of ``rect``'s corners rotated about ``center``."""
    pts = rotate_points(rect.corners(), theta, center)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return Rect(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


def augment_frame_geometry(primary: Rect, frame: tuple[float, float], theta: float):
    """Transfer a primary box onto the rotated-and-cropped frame.

    Returns ``(box, crop)``; ``box`` is in crop coordinates, or ``None`` when
    the rotated box falls entirely outside the crop.
    """
    W, H = frame
    _, _, crop = inscribed_crop(W, H, theta)
    if theta == 0.0:
        rot = primary
    else:
        rot = rotate_rect(primary, theta, Point2D(W / 2.0, H / 2.0))
    x0 = max(rot.x - crop.x, 0.0)
    y0 = max(rot.y - crop.y, 0.0)
    x1 = min(rot.right - crop.x, crop.w)
    y1 = min(rot.bottom - crop.y, crop.h)
    if x1 <= x0 or y1 <= y0:
        return None, crop
    return Rect(x0, y0, x1 - x0, y1 - y0), crop


@dataclass
class GeomAugmentResult:
    thetas: np.ndarray
    crops: list[Rect] = field(default_factory=list)
    boxes: list[Rect | None] = field(default_factory=list)

    def records(self) -> list[dict]:
        return [{"n": n, "theta": float(t), "crop": c.to_dict(),
                 "primary": None if b is None else b.to_dict()}
                for n, (t, c, b) in enumerate(zip(self.thetas, self.crops, self.boxes))]


def augment_video(frame: tuple[float, float], sched: RotationSchedule,
                  primaries: list[Rect] | None = None) -> GeomAugmentResult:
    """Angles, crops and transferred primary boxes for every frame of a video."""
    return augment_angles(frame, rotation_angles(sched), primaries)


def augment_angles(frame: tuple[float, float], thetas, primaries: list[Rect] | None = None) -> GeomAugmentResult:
    thetas = np.asarray(thetas, dtype=float)
    out = GeomAugmentResult(thetas)
    for n, t in enumerate(thetas):
        prim = primaries[n] if primaries is not None else Rect(0.0, 0.0, float(frame[0]), float(frame[1]))
        box, crop = augment_frame_geometry(prim, frame, float(t))
        out.crops.append(crop)
        out.boxes.append(box)
    return out
