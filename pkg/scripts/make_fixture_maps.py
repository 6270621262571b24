#!/usr/bin/env python3
"""Regenerate the committed fixture maps in maps/ (deterministic)."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from anyplan.grid2d import GridMap, serialize_map  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "maps"


def blocks(width: int, height: int, rects: list[tuple[int, int, int, int]]) -> GridMap:
    occ = np.zeros((height, width), dtype=bool)
    for x0, y0, x1, y1 in rects:  # half-open [x0, x1) x [y0, y1)
        occ[y0:y1, x0:x1] = True
    return GridMap(width=width, height=height, occupancy=occ)


def main() -> None:
    OUT.mkdir(exist_ok=True)
    fixtures = {
        "open64.map": blocks(64, 64, []),
        "open128.map": blocks(128, 128, []),
        # two offset walls force an S-shaped detour; corridors stay wide
        # enough for the desk-scale footprints used in the benchmarks
        "maze64.map": blocks(64, 64, [(20, 0, 28, 44), (40, 20, 48, 64)]),
        "maze128.map": blocks(128, 128, [(36, 0, 52, 88), (78, 40, 94, 128), (0, 52, 20, 64)]),
        # small parser/collision fixture: a wall with one gap
        "cross32.map": blocks(32, 32, [(14, 0, 18, 12), (14, 20, 18, 32)]),
    }
    for name, grid in fixtures.items():
        path = OUT / name
        path.write_text(serialize_map(grid))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
