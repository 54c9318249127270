"""One-time derivation of the frozen solver-test constants.

Run from the repository root:  python3 tests/_derive_solver_constants.py [--full]

Prints the reference alphas for the three worked solver examples.  --full uses
the advertised iteration budgets (about a minute); without it the group
subgradient runs a shorter sanity budget.
"""

import sys

import numpy as np

sys.path.insert(0, "tests")
from reference_solvers import grid_fused_path, projected_subgradient_group

from hsic_explain.graphs import UnitId
from hsic_explain.kernels import center_normalize, gaussian_gram
from hsic_explain.perturb import GroupStructure
from hsic_explain.solvers import (
    FusedPenalty,
    GroupPenalty,
    L1Penalty,
    SolverConfig,
    SolverProblem,
    qp_oracle,
    solve_fused,
    solve_group,
    solve_l1,
)


def l1_example_problem():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(4, 3))
    y = rng.normal(size=(4, 1))
    atoms = [
        (UnitId.node(j), center_normalize(gaussian_gram(X[:, [j]], sigma=1.0)))
        for j in range(3)
    ]
    target = center_normalize(gaussian_gram(y, sigma=1.0))
    return SolverProblem.from_grams(atoms, target)


def group_example_problem():
    rng = np.random.default_rng(23)
    X = rng.normal(size=(4, 4))
    y = rng.normal(size=(4, 1))
    atoms = [
        (UnitId.node(j), center_normalize(gaussian_gram(X[:, [j]], sigma=1.0)))
        for j in range(4)
    ]
    target = center_normalize(gaussian_gram(y, sigma=1.0))
    return SolverProblem.from_grams(atoms, target)


def main():
    full = "--full" in sys.argv
    np.set_printoptions(precision=12, floatmode="fixed")

    prob = l1_example_problem()
    print("L1 example: c =", prob.lin, " Q offdiag =", prob.quad[0, 1], prob.quad[0, 2], prob.quad[1, 2])
    ref = qp_oracle(prob, L1Penalty(0.1), iters=10**6)
    print("L1 projected-gradient oracle:", ref)
    got = solve_l1(prob, SolverConfig(lam=0.1))
    print("solve_l1:", got.alpha, "maxdiff", np.max(np.abs(got.alpha - ref)), "converged", got.converged, "iters", got.iterations)

    prob = group_example_problem()
    groups = GroupStructure(
        (
            (UnitId.node(0), UnitId.node(1), UnitId.node(2)),
            (UnitId.node(2), UnitId.node(3)),
        )
    )
    idx_groups = [[0, 1, 2], [2, 3]]
    print("\nGroup example: c =", prob.lin)
    lam = 0.1
    iters = 10**7 if full else 10**5
    sub = projected_subgradient_group(np.asarray(prob.quad), np.asarray(prob.lin), idx_groups, lam, iters)
    print(f"subgradient oracle ({iters} iters):", sub)
    cvx = qp_oracle(prob, GroupPenalty(lam, groups))
    print("cone-program oracle:          ", cvx, "maxdiff", np.max(np.abs(sub - cvx)))
    got = solve_group(prob, groups, SolverConfig(lam=lam, tol=1e-12, max_iters=100000))
    print("solve_group:", got.alpha, "maxdiff vs sub", np.max(np.abs(got.alpha - sub)), "converged", got.converged, "iters", got.iterations)

    units = tuple(UnitId.node(i) for i in range(3))
    prob = SolverProblem(units=units, quad=np.eye(3), lin=np.array([0.9, 0.85, 0.1]))
    adj = ((units[0], units[1]), (units[1], units[2]))
    grid = grid_fused_path([0.9, 0.85, 0.1], lam=0.0, mu=0.2)
    print("\nFused path example grid oracle:", grid)
    cvx = qp_oracle(prob, FusedPenalty(0.0, 0.2, adj))
    print("cone-program oracle:           ", cvx)
    got = solve_fused(prob, adj, SolverConfig(lam=0.0, mu=0.2))
    print("solve_fused:", got.alpha, "converged", got.converged, "iters", got.iterations)


if __name__ == "__main__":
    main()
