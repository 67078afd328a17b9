"""Frame reduction versus cluster size on a synthetic lane scene.

    python3 scripts/cluster_size_sweep.py --agents 12 --frames 3000 --sizes 1 5 10 15 20
"""
import argparse
import csv
import sys
import time

from vidsyn.config import Config
from vidsyn.synopsis import TubeProducer, frame_reduction, schedule
from vidsyn.synthgen import generate, lane_script


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--agents", type=int, default=10)
    ap.add_argument("--frames", type=int, default=2000)
    ap.add_argument("--tube-len", type=int, default=50)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1, 2, 5, 10, 15, 20])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()

    scene = generate(lane_script(args.agents, args.frames, args.tube_len, seed=args.seed))
    t0 = time.perf_counter()
    # tubes do not depend on the cluster size, so extract them once
    tubes = [t for batch in TubeProducer(scene.source, Config()) for t in batch]
    print(f"{len(tubes)} tubes from {args.frames} frames in {time.perf_counter() - t0:.1f} s", file=sys.stderr)

    rows = []
    for cs in args.sizes:
        tsv = len(schedule(tubes, cs))
        rows.append((cs, tsv, args.frames, frame_reduction(tsv, args.frames)))
    print(f"{'CS':>4} {'TSV':>6} {'TOV':>6} {'FR':>8}")
    for cs, tsv, tov, fr in rows:
        print(f"{cs:>4} {tsv:>6} {tov:>6} {fr:>8.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cluster_size", "tsv", "tov", "fr"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
