"""Landmark strategy shoot-out at a reduced scale: subspace error and
selection time for random, full, and temporally subsampled farthest point
sampling.

Run:  python3 demos/04_landmark_quality.py
"""

import numpy as np

from driftscope import FlowSpec, eval_landmarks, integrate_flow, write_eval_csv


def main():
    spec = FlowSpec("double-gyre", grid=(60, 30), tau=2 * np.pi, T=50, jitter=0.001)
    ds = integrate_flow(spec)
    rows = eval_landmarks(
        ds,
        strategies=("random", "fps", "tfps"),
        n_l_grid=(150, 400),
        subspace_sizes=(30, 80),
        trials=3,
        stride=5,
    )
    write_eval_csv(rows, "landmark_eval.csv")
    print("wrote landmark_eval.csv")

    for n_l in (150, 400):
        for sub in (30, 80):
            line = f"n_l={n_l:4d} subspace={sub:3d}:"
            for strategy in ("random", "fps", "tfps"):
                errs = [
                    r["error"]
                    for r in rows
                    if r["strategy"] == strategy and r["n_l"] == n_l and r["subspace"] == sub
                ]
                line += f"  {strategy} {np.median(errs):.3f}"
            print(line)
    for strategy in ("fps", "tfps"):
        secs = [r["select_seconds"] for r in rows if r["strategy"] == strategy]
        print(f"{strategy} median selection time: {np.median(secs):.2f}s")


if __name__ == "__main__":
    main()
