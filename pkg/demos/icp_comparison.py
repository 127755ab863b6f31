"""Known correspondences versus nearest-neighbor matching on a symmetric cloud.

Points on a unit sphere are rotated 40 degrees about z with no translation
and no noise. From an identity initialization, nearest-neighbor ICP locks
onto a self-consistent but wrong matching (a local minimum of its cost),
while the closed-form estimator with the true correspondences recovers the
rotation exactly. This is the failure mode that motivates learning point
correspondences instead of inferring them from proximity.
"""

import argparse

import numpy as np

from rigid_refine import (
    ProblemSpec,
    RigidTransform,
    Rotation,
    Xoshiro256PlusPlus,
    estimate_pose_kabsch,
    icp_baseline,
    make_problem,
    rotation_error,
    sphere_cloud,
)

WIN_MARGIN_DEG = 1.0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=300, help="first trial seed")
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--n-points", type=int, default=64)
    parser.add_argument("--angle-deg", type=float, default=40.0)
    args = parser.parse_args()

    spec_kwargs = dict(
        n_points=args.n_points,
        rot_range_deg=((args.angle_deg, args.angle_deg), (0.0, 0.0), (0.0, 0.0)),
        trans_range=(0.0, 0.0),
    )
    identity = RigidTransform(Rotation(np.eye(3)), np.zeros(3))

    print(f"unit sphere, {args.angle_deg:g} degree z-rotation, identity-initialized ICP")
    print(f"{'seed':>6} {'icp err (deg)':>14} {'closed form (deg)':>18}")
    icp_losses = 0
    for seed in range(args.seed, args.seed + args.trials):
        rng = Xoshiro256PlusPlus(seed)
        problem = make_problem(ProblemSpec(seed=seed, **spec_kwargs), sphere_cloud(args.n_points, rng), rng)
        src, tgt = problem.correspondences.source, problem.correspondences.target
        icp_err = rotation_error(icp_baseline(src, tgt, identity).rotation, problem.gt.rotation)[0]
        kabsch_err = rotation_error(
            estimate_pose_kabsch(problem.correspondences).rotation, problem.gt.rotation
        )[0]
        icp_losses += icp_err > kabsch_err + WIN_MARGIN_DEG
        print(f"{seed:>6} {icp_err:>14.4f} {kabsch_err:>18.3e}")

    print(f"\nICP ended at least {WIN_MARGIN_DEG:g} degree worse in {icp_losses} of {args.trials} trials.")
    print("Proximity matching cannot see past the sphere's rotational symmetry,")
    print("so ICP settles where nearest neighbors agree with themselves; given")
    print("the true correspondences, the closed-form solve is exact every time.")


if __name__ == "__main__":
    main()
