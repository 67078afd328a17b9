"""Deletion detection rate and clean false-alarm rate of the forgery scan.

Each seed yields a panning scene with a few slow agents; the tampered copy has
``--cut-len`` frames deleted at a seed-dependent position.

    python3 scripts/forgery_benchmark.py --seeds 20 --k 3 --window 50
"""
import argparse

import numpy as np

from vidsyn.config import ForgeryConfig
from vidsyn.forensics import forgery_scan
from vidsyn.synthgen import Agent, Background, Edit, SceneScript, generate

PANS = [(2, 0), (-2, 0), (0, 1), (1, 1), (3, 0), (0, -2), (-1, 2)]


def script(seed, frames, cut=None, cut_len=20):
    rng = np.random.default_rng([9, seed])
    agents = [Agent((12, 12), (float(rng.uniform(20, 90)), float(rng.uniform(20, 60))),
                    (float(rng.uniform(-0.1, 0.1)), float(rng.uniform(-0.1, 0.1))))
              for _ in range(int(rng.integers(0, 3)))]
    edits = [] if cut is None else [Edit("delete", cut, cut + cut_len)]
    total = frames + (0 if cut is None else cut_len)
    return SceneScript(total, 18.0, 128, 96, 1, Background(pan=PANS[seed % len(PANS)]), agents, edits, seed)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--frames", type=int, default=150)
    ap.add_argument("--cut-len", type=int, default=20)
    ap.add_argument("--k", type=float, default=3.0)
    ap.add_argument("--window", type=int, default=50)
    args = ap.parse_args()
    cfg = ForgeryConfig(window=args.window, k=args.k)

    hits = alarms = frames = 0
    for seed in range(args.seeds):
        cut = 40 + seed % max(1, args.frames - 90)
        events, _ = forgery_scan(generate(script(seed, args.frames, cut, args.cut_len)).source, cfg)
        hit = any(e.overlaps(cut - 1, cut) for e in events)
        clean, seq = forgery_scan(generate(script(seed, args.frames)).source, cfg)
        hits += hit
        alarms += len(clean)
        frames += len(seq) + 1
        print(f"seed {seed:3d}  cut@{cut:3d}  {'hit ' if hit else 'MISS'}  clean alarms {len(clean)}")
    print(f"detected {hits}/{args.seeds}; {alarms} false alarms in {frames} clean frames "
          f"({1000.0 * alarms / frames:.2f} per 1000)")


if __name__ == "__main__":
    main()
