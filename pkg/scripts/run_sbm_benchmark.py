#!/usr/bin/env python3
"""Desk-scale benchmark: diversity-guided pruning vs similarity-only and
random pruning on a 4-block SBM, clean and under structural/feature noise.

Writes reports under results/sbm_benchmark/. Runtime is a few minutes
single-threaded; set INGSL_THREADS to parallelize cells.
"""

import json
import sys
from pathlib import Path

from ingsl.cli import main

RESULTS = Path(__file__).resolve().parent.parent / "results" / "sbm_benchmark"

BASE = {
    "dataset": {
        "sbm": {
            "block_sizes": [50, 50, 50, 50],
            "p_in": 0.1,
            "p_out": 0.01,
            "feature_dim": 8,
            "feature_noise": 1.0,
            "seed": 7,
        }
    },
    "k": 30,
    "beta": 0.5,
    "metric": "cosine",
    "seeds": list(range(10)),
    "modes": ["ingsl", "similarity_only", "random_prune", "no_reduction"],
}

RUNS = [
    ("clean_r50", dict(BASE, reduction_levels=[0.5])),
    ("sweep", dict(BASE, reduction_levels=[0.3, 0.5, 0.7], seeds=list(range(5)))),
    (
        "edge_deletion",
        dict(
            BASE,
            reduction_levels=[0.5],
            noise={"del_ratio": 0.3},
            modes=["ingsl", "similarity_only"],
        ),
    ),
    (
        "feature_masking",
        dict(
            BASE,
            reduction_levels=[0.5],
            noise={"feature_mask_ratio": 0.3},
            modes=["ingsl", "similarity_only"],
        ),
    ),
]


def run() -> int:
    RESULTS.mkdir(parents=True, exist_ok=True)
    for name, cfg in RUNS:
        cfg_path = RESULTS / f"{name}.json"
        cfg_path.write_text(json.dumps(cfg, indent=2))
        command = "sweep" if name == "sweep" else "train"
        print(f"== {name} ==")
        code = main([command, "--config", str(cfg_path), "--out", str(RESULTS / name)])
        if code != 0:
            return code
    print(f"\nreports under {RESULTS}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
