"""Derivative checks: the refine step versus finite differences, and the
conditioning cliff of differentiating through the SVD estimator.

Part one compares the analytic Jacobian of a single refinement step against
central finite differences on random noisy problems. Part two sweeps designed
spectra whose smallest singular-value gap shrinks toward a tie: when the tied
pair sits in the reflection regime (negative determinant side) the estimator's
numerical Jacobian rows grow like 1/gap, while the same gaps on the proper
side stay flat, and an exact tie is refused outright.
"""

import argparse

import numpy as np

from rigid_refine import (
    CorrespondenceSet,
    IllConditioned,
    ProblemSpec,
    Xoshiro256PlusPlus,
    ball_cloud,
    center,
    estimate_pose_kabsch,
    finite_difference_jacobian,
    flatten_inputs,
    jacobian_kabsch,
    jacobian_refine_step,
    make_problem,
    max_relative_error,
    refine_step_outputs,
)


def designed_spectrum(s1, s2, s3):
    # +-pair construction: weighted means are exactly zero, so the centered
    # cross covariance is exactly 2 * diag(s1, s2, s3) (signs included).
    src = np.array(
        [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
    )
    scale = np.array([s1, s1, s2, s2, s3, s3]) / 2.0
    return center(CorrespondenceSet.from_arrays(src, src * scale[:, None]))


def check_refine_step(seeds, n_points):
    print("refine-step Jacobian vs central finite differences")
    print(f"{'seed':>6} {'points':>7} {'max relative error':>20}")
    worst = 0.0
    for seed in seeds:
        rng = Xoshiro256PlusPlus(seed)
        spec = ProblemSpec(n_points=n_points, noise_sigma=0.02, seed=seed)
        problem = make_problem(spec, ball_cloud(n_points, rng), rng)
        cc = center(problem.correspondences)
        r_prev = estimate_pose_kabsch(problem.correspondences).rotation
        analytic = jacobian_refine_step(cc, r_prev)
        x0, n = flatten_inputs(cc)
        fd = finite_difference_jacobian(lambda x: refine_step_outputs(x, n, r_prev), x0)
        err = max_relative_error(analytic.matrix, fd)
        worst = max(worst, err)
        print(f"{seed:>6} {n_points:>7} {err:>20.3e}")
    print(f"worst over sweep: {worst:.3e}\n")


def sweep_gaps():
    gaps = [0.2, 0.1, 0.05, 0.02, 0.01]
    print("SVD-estimator Jacobian row norms as the smallest gap closes")
    print(f"{'gap':>8} {'reflection side':>16} {'x gap':>10} {'proper side':>12}")
    for gap in gaps:
        flipped = jacobian_kabsch(designed_spectrum(3.0, 1.0 + gap, -1.0))
        proper = jacobian_kabsch(designed_spectrum(3.0, 1.0 + gap, 1.0))
        row_flipped = float(np.linalg.norm(flipped.matrix, axis=1).max())
        row_proper = float(np.linalg.norm(proper.matrix, axis=1).max())
        print(f"{gap:>8.2f} {row_flipped:>16.2f} {row_flipped * gap:>10.3f} {row_proper:>12.2f}")
    try:
        jacobian_kabsch(designed_spectrum(3.0, 1.0, -1.0))
        print("exact tie: unexpectedly differentiated")
    except IllConditioned as exc:
        print(f"exact tie: refused ({exc})")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=4000, help="first refine-step seed")
    parser.add_argument("--trials", type=int, default=5)
    parser.add_argument("--n-points", type=int, default=16)
    args = parser.parse_args()
    check_refine_step(range(args.seed, args.seed + args.trials), args.n_points)
    sweep_gaps()
    print("\nThe near-constant 'x gap' column is the 1/gap law: sensitivities of")
    print("the estimator blow up only when the closing gap straddles a sign flip.")


if __name__ == "__main__":
    main()
