"""Calibration run for the RIP distortion thresholds used in the tests.

Gaussian ensemble, L=1000, sparsity 5, m=200, 10000 trials (10x the test
size) over several projection seeds.  Prints max and quantiles per seed.
"""

import sys

from ripml.projection import ProjectionSpec, rip_check

TRIAL_SEED = 20240601


def main(n_trials=10_000, seeds=(0, 1, 2, 3, 4)):
    print("proj_seed,mode,max,q0.5,q0.9,q0.95,q0.99,mean_ratio")
    for seed in seeds:
        spec = ProjectionSpec("gaussian", 200, 1000, seed)
        for mode in ("sparse", "pairs"):
            r = rip_check(spec, 5, n_trials, TRIAL_SEED, mode=mode)
            qs = ",".join(f"{q:.4f}" for _, q in r.quantiles)
            print(f"{seed},{mode},{r.max_distortion:.4f},{qs},{r.mean_ratio:.4f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10_000)
