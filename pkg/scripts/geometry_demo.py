"""Rotation schedule and inscribed crops for one synthetic video.

Prints a per-frame table (angle, crop size, kept area fraction, transferred
hand box) and writes it to CSV.

    python scripts/geometry_demo.py --frames 60 --theta-max-deg 12 --out geom.csv
"""

import argparse
import math

import numpy as np

from egoact.geometry import Rect, RotationSchedule, augment_video
from egoact.serialize import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=float, default=640)
    ap.add_argument("--height", type=float, default=480)
    ap.add_argument("--frames", type=int, default=60)
    ap.add_argument("--theta-max-deg", type=float, default=12.0)
    ap.add_argument("--C", type=float, default=1.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="geometry_demo.csv")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    sched = RotationSchedule.random(args.frames, math.radians(args.theta_max_deg), rng, C=args.C,
                                    terms=[(0.7, 1.0), (0.3, 3.0)])
    hand = Rect(args.width * 0.35, args.height * 0.55, args.width * 0.3, args.height * 0.35)
    res = augment_video((args.width, args.height), sched, [hand] * args.frames)
    rows = []
    for n, (t, crop, box) in enumerate(zip(res.thetas, res.crops, res.boxes)):
        kept = crop.area / (args.width * args.height)
        bx = (box.x, box.y, box.w, box.h) if box else (float("nan"),) * 4
        rows.append([n, math.degrees(t), crop.w, crop.h, kept, *bx])
        if n % max(1, args.frames // 12) == 0:
            print(f"n={n:3d} theta={math.degrees(t):+6.2f} deg crop={crop.w:6.1f}x{crop.h:6.1f} kept={kept:.3f}")
    write_csv(["n", "theta_deg", "crop_w", "crop_h", "kept_fraction", "box_x", "box_y", "box_w", "box_h"],
              rows, args.out)


if __name__ == "__main__":
    main()
