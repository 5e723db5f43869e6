#!/usr/bin/env python3
"""Writes the synthetic optimization suite: one directory per scene with
room.json, inventory.json and program.scene.

    make_suite.py <out dir> [--scenes 12] [--seed 7]
"""

import argparse
import json
import math
import random
from pathlib import Path

ANCHORS = [
    ("table", "dining table", (0.9, 1.6, 0.75)),
    ("desk", "office desk", (0.7, 1.4, 0.75)),
    ("sofa", "three-seat sofa", (0.9, 2.1, 0.85)),
    ("bed", "double bed", (2.0, 1.5, 0.5)),
]
SATELLITES = [
    ("chair", "side chair", (0.5, 0.5, 0.9)),
    ("stool", "round stool", (0.4, 0.4, 0.6)),
    ("armchair", "armchair", (0.8, 0.8, 0.8)),
]
LOOSE = [
    ("plant", "potted plant", (0.4, 0.4, 1.1)),
    ("cabinet", "low cabinet", (0.45, 1.0, 0.8)),
    ("bin", "waste bin", (0.3, 0.3, 0.4)),
]
WALLS = {"wall_south": 90, "wall_north": -90, "wall_west": 0, "wall_east": 180}


def fmt(v):
    return f"{v:.3f}"


def scene(rng, index):
    width, depth = rng.uniform(4.0, 7.0), rng.uniform(3.5, 6.0)
    room = {"width": round(width, 2), "depth": round(depth, 2), "height": 2.8}
    inventory, lines = [], []

    name, desc, dims = ANCHORS[index % len(ANCHORS)]
    anchor = f"{name}_0"
    wall = rng.choice(sorted(WALLS))
    rot = WALLS[wall]
    half = dims[0] / 2
    ax = {"wall_west": half, "wall_east": width - half}.get(wall, rng.uniform(1.5, width - 1.5))
    ay = {"wall_south": half, "wall_north": depth - half}.get(wall, rng.uniform(1.5, depth - 1.5))
    inventory.append({"id": anchor, "description": desc, "dims": list(dims), "placement": {"onFloor": True}})
    lines.append(f"{anchor}.set_pose(x={fmt(ax)}, y={fmt(ay)}, z={fmt(dims[2] / 2)}, "
                 f"rotation={rot + rng.uniform(-8, 8):.1f})")
    relations = [f"constraints.against_wall({anchor}, {wall})"]

    sname, sdesc, sdims = rng.choice(SATELLITES)
    for k in range(rng.randint(2, 4)):
        sid = f"{sname}_{k}"
        inventory.append({"id": sid, "description": sdesc, "dims": list(sdims), "placement": {"onFloor": True}})
        a = math.radians(rot) + rng.uniform(-1.2, 1.2)
        r = rng.uniform(0.6, 1.6)
        sx = min(max(ax + r * math.cos(a), 0.3), width - 0.3)
        sy = min(max(ay + r * math.sin(a), 0.3), depth - 0.3)
        facing = math.degrees(math.atan2(ay - sy, ax - sx)) + rng.uniform(-40, 40)
        lines.append(f"{sid}.set_pose(x={fmt(sx)}, y={fmt(sy)}, z={fmt(sdims[2] / 2)}, rotation={facing:.1f})")
        lo = round(max(dims[0], dims[1]) / 2 + 0.2, 2)
        relations.append(f"constraints.distance({sid}, {anchor}, min={lo}, max={lo + 0.6:.2f})")
        relations.append(f"constraints.point_towards({sid}, {anchor})")

    for k in range(rng.randint(1, 3)):
        lname, ldesc, ldims = rng.choice(LOOSE)
        lid = f"{lname}_{k}"
        if any(a["id"] == lid for a in inventory):
            continue
        inventory.append({"id": lid, "description": ldesc, "dims": list(ldims), "placement": {"onFloor": True}})
        lines.append(f"{lid}.set_pose(x={fmt(rng.uniform(0.5, width - 0.5))}, "
                     f"y={fmt(rng.uniform(0.5, depth - 0.5))}, z={fmt(ldims[2] / 2)}, "
                     f"rotation={rng.uniform(-180, 180):.1f})")
        if rng.random() < 0.5:
            lwall = rng.choice(sorted(WALLS))
            relations.append(f"constraints.against_wall({lid}, {lwall})")
    return room, inventory, "\n".join(lines + relations) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", type=Path)
    parser.add_argument("--scenes", type=int, default=12)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    rng = random.Random(args.seed)
    for i in range(args.scenes):
        room, inventory, program = scene(rng, i)
        d = args.out / f"scene_{i:02d}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "room.json").write_text(json.dumps(room) + "\n")
        (d / "inventory.json").write_text(json.dumps(inventory, indent=2) + "\n")
        (d / "program.scene").write_text(program)


if __name__ == "__main__":
    main()
