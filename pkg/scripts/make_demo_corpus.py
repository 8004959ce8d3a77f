#!/usr/bin/env python3
"""Generate a small synthetic corpus for exercising the pipeline offline.

The corpus contains all three source layouts (real video clips, editable
image pairs, static stills) with procedurally banded content, so a full
mock run produces visually distinct clips without any model weights.
"""
import argparse

from tripletforge.synthetic import make_demo_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="corpus root to create")
    parser.add_argument("--real", type=int, default=4, help="real video sources")
    parser.add_argument("--pairs", type=int, default=3, help="image pair sources")
    parser.add_argument("--static", type=int, default=3, help="static image sources")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=1024)
    parser.add_argument("--height", type=int, default=576)
    parser.add_argument("--frames", type=int, default=25)
    parser.add_argument(
        "--oversize-first", action="store_true",
        help="make the first source of each bucket larger than the target "
             "geometry, exercising the normalization path")
    args = parser.parse_args()

    root = make_demo_corpus(
        args.out_dir,
        n_real=args.real,
        n_pairs=args.pairs,
        n_static=args.static,
        seed=args.seed,
        frame_size=(args.width, args.height),
        n_frames=args.frames,
        oversize_first=args.oversize_first,
    )
    total = args.real + args.pairs + args.static
    print(f"wrote {total} sources under {root}")


if __name__ == "__main__":
    main()
