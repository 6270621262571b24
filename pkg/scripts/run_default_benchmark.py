#!/usr/bin/env python3
"""Run the desk-scale default experiment grid and emit the output files.

Grid: the four fixture maps (open/maze at 64 and 128), both cost models,
all five algorithms; engine algorithms sweep thread counts, and a slow-edge
cell (2 ms evaluations) exercises the parallel payoff.  Use --quick for a
fast smoke pass.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from anyplan.bench import aggregate, build_run_spec, emit_outputs, run_experiment  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
MAPS = [("open64.map", 4, 6), ("maze64.map", 4, 6),
        ("open128.map", 8, 12), ("maze128.map", 8, 12)]
SERIAL_ALGOS = ("wastar", "arastar")
ENGINE_ALGOS = ("epase", "aepase", "aepase_naive")


def cells(quick: bool):
    pairs = 3 if quick else 10
    maps = MAPS[:2] if quick else MAPS
    for map_name, footprint, move in maps:
        for cost in ("euclidean", "random"):
            base = {
                "map": str(ROOT / "maps" / map_name), "cost": cost,
                "cost_seed": 7, "pairs": pairs, "pair_seed": 11,
                "footprint": footprint, "move": move, "w0": 50.0, "dw": 0.5,
            }
            for algo in SERIAL_ALGOS:
                yield {**base, "algo": algo, "threads": 1,
                       "w0": 1.0 if algo == "wastar" else 50.0}
            for algo in ("epase", "aepase"):
                for threads in ((4,) if quick else (1, 4, 8)):
                    yield {**base, "algo": algo, "threads": threads,
                           "w0": 1.0 if algo == "epase" else 50.0}
            # the restart baseline is a reference point, not a scaling study
            yield {**base, "algo": "aepase_naive", "threads": 4}
    if not quick:
        # slow-edge cells on the large maps: evaluation latency dominates
        for map_name, footprint, move in MAPS[2:]:
            for cost in ("euclidean", "random"):
                for algo in ("epase", "aepase"):
                    for threads in (1, 8):
                        yield {
                            "map": str(ROOT / "maps" / map_name), "cost": cost,
                            "cost_seed": 7, "pairs": pairs, "pair_seed": 11,
                            "footprint": footprint, "move": move,
                            "w0": 1.0 if algo == "epase" else 50.0, "dw": 0.5,
                            "algo": algo, "threads": threads,
                            "eval_delay_us": 2000.0,
                        }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(ROOT / "bench_out"))
    parser.add_argument("--quick", action="store_true",
                        help="3 pairs, 2 maps, single thread count, no slow-edge cell")
    args = parser.parse_args()

    metrics = []
    t0 = time.monotonic()
    for values in cells(args.quick):
        spec = build_run_spec(values)
        label = (f"{Path(spec.map_path).stem}/{spec.cost_kind}/{spec.algorithm}"
                 f"/t{spec.planner.n_threads}"
                 f"{'/slow' if spec.domain.eval_delay else ''}")
        cell_t0 = time.monotonic()
        cell = run_experiment(spec)
        metrics.extend(cell)
        failed = sum(1 for m in cell if m.status == "error")
        print(f"{label}: {len(cell)} runs in {time.monotonic() - cell_t0:.1f}s"
              + (f" ({failed} FAILED)" if failed else ""), flush=True)

    summary = aggregate(metrics)
    for path in emit_outputs(summary, args.out):
        print(f"wrote {path}")
    print(f"total {time.monotonic() - t0:.1f}s, {len(metrics)} runs")
    return 1 if any(m.status == "error" for m in metrics) else 0


if __name__ == "__main__":
    raise SystemExit(main())
