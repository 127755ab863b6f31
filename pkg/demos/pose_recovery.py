"""Closed-form pose recovery and the refiner's fixed point.

Runs the SVD estimator and the iterative refiner on ball-cloud problems at
three source-noise levels and prints per-seed pose errors. On clean data the
estimate matches the ground truth to machine precision and every refinement
step repeats it exactly; under clamped Gaussian noise the error scales with
the noise floor and refinement still holds the closed-form fixed point.
"""

import argparse

from rigid_refine import (
    ProblemSpec,
    Xoshiro256PlusPlus,
    augmented_loss,
    ball_cloud,
    estimate_pose_kabsch,
    make_problem,
    pose_error,
    refine,
)


def run_family(sigma, seeds, n_points):
    print(f"\nnoise sigma = {sigma:g}")
    header = (
        f"{'seed':>6} {'iso rot (deg)':>14} {'trans l2':>12}"
        f" {'loss initial':>13} {'loss refined':>13}"
    )
    print(header)
    print("-" * len(header))
    for seed in seeds:
        rng = Xoshiro256PlusPlus(seed)
        spec = ProblemSpec(n_points=n_points, noise_sigma=sigma, seed=seed)
        problem = make_problem(spec, ball_cloud(n_points, rng), rng)
        initial = estimate_pose_kabsch(problem.correspondences)
        trace = refine(problem.correspondences, initial, n_refinements=5)
        err = pose_error(trace.poses[-1], problem.gt)
        print(
            f"{seed:>6} {err.iso_rot_deg:>14.3e} {err.trans_err:>12.3e}"
            f" {augmented_loss([initial], problem.gt):>13.3e}"
            f" {augmented_loss(trace, problem.gt):>13.3e}"
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=2000, help="first seed of each family")
    parser.add_argument("--trials", type=int, default=5, help="problems per noise level")
    parser.add_argument("--n-points", type=int, default=64)
    args = parser.parse_args()
    seeds = range(args.seed, args.seed + args.trials)
    for sigma in (0.0, 0.001, 0.01):
        run_family(sigma, seeds, args.n_points)
    print("\nClean problems are recovered to machine precision. Noise moves the")
    print("optimum away from the ground truth, but the refined loss staying equal")
    print("to the initial loss shows the refiner sits at the closed-form solution.")


if __name__ == "__main__":
    main()
