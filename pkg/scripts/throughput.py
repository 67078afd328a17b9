"""Synopsis build throughput (original frames per second of wall time) by resolution.

    python3 scripts/throughput.py --frames 600 --sizes 160x120 320x240 640x480
"""
import argparse
import time

from vidsyn.config import Config
from vidsyn.synopsis import run_synopsis
from vidsyn.synthgen import generate, lane_script


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--frames", type=int, default=600)
    ap.add_argument("--sizes", nargs="+", default=["160x120", "320x240"])
    ap.add_argument("--agents", type=int, default=4)
    ap.add_argument("--render", action="store_true", help="include compositing of synopsis frames")
    args = ap.parse_args()

    print(f"{'size':>9} {'frames':>7} {'seconds':>8} {'fps':>8} {'TSV':>5}")
    for spec in args.sizes:
        w, h = (int(v) for v in spec.lower().split("x"))
        size = max(8, h // 15)
        speed = (w - 2 * size) / 60.0   # a 50-frame tube crosses most of the width
        scene = generate(lane_script(args.agents, args.frames, width=w, height=h, size=size, speed=speed))
        t0 = time.perf_counter()
        res = run_synopsis(scene.source, Config(), keep_frames=args.render)
        wall = time.perf_counter() - t0
        print(f"{spec:>9} {args.frames:>7} {wall:>8.2f} {args.frames / wall:>8.1f} {res.manifest.tsv:>5}")


if __name__ == "__main__":
    main()
