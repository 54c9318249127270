"""Convex programs that score units by how well their Gram matrices explain the output.

All three solvers minimize

    0.5 * ||Lbar - sum_u alpha_u Kbar_u||_F^2 + penalty(alpha),    alpha >= 0

where Kbar_u and Lbar are centered, Frobenius-normalized Gram matrices.
Expanding the square turns the data term into a quadratic in alpha with
Q[u, w] = <Kbar_u, Kbar_w>_F and c[u] = <Kbar_u, Lbar>_F, so solver cost is
independent of the sample count once (Q, c) are assembled.

Penalties: plain L1 (`solve_l1`), overlapping-group via latent copies
(`solve_group`), and L1 plus a fused total-variation term over an adjacency
(`solve_fused`).  `qp_oracle` provides an independent reference solution for
small problems and is meant for tests only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .graphs import UnitId
from .kernels import GramMatrix
from .perturb import GroupStructure

__all__ = [
    "SolverConfig",
    "SolverProblem",
    "Explanation",
    "L1Penalty",
    "GroupPenalty",
    "FusedPenalty",
    "solve_l1",
    "solve_group",
    "solve_fused",
    "qp_oracle",
]

# Unit-diagonal entries of Q are 1 for live atoms and 0 for degenerate ones;
# anything in between means the atoms were not normalized upstream.
_DIAG_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for the three solvers.

    `lam` weights the L1 term, `mu` the fused term (ignored elsewhere).
    `tol` is a relative objective-decrease threshold for the descent methods
    and a residual scale for ADMM.
    """

    lam: float = 1e-3
    mu: float = 0.0
    max_iters: int = 10000
    tol: float = 1e-8
    admm_rho: float = 1.0

    def __post_init__(self) -> None:
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.tol > 0.0 and math.isfinite(self.tol)):
            raise ValueError("tol must be finite and > 0")
        if not (self.admm_rho > 0.0 and math.isfinite(self.admm_rho)):
            raise ValueError("admm_rho must be finite and > 0")


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SolverProblem:
    """The quadratic data (Q, c) plus the unit labels it is indexed by.

    `target_norm_sq` is <Lbar, Lbar>_F; it only shifts the objective value,
    never the minimizer.  Degenerate atoms (all-zero Gram) are recognized by
    their zero diagonal and pinned to score 0 by every solver.
    """

    units: tuple[UnitId, ...]
    quad: np.ndarray
    lin: np.ndarray
    target_norm_sq: float = 1.0

    def __post_init__(self) -> None:
        units = tuple(self.units)
        if not units:
            raise ValueError("problem needs at least one unit")
        quad = np.asarray(self.quad, dtype=np.float64)
        lin = np.asarray(self.lin, dtype=np.float64)
        P = len(units)
        if quad.shape != (P, P):
            raise ValueError(f"quad must be {P}x{P}, got {quad.shape}")
        if lin.shape != (P,):
            raise ValueError(f"lin must have shape ({P},), got {lin.shape}")
        if not np.all(np.isfinite(quad)) or not np.all(np.isfinite(lin)):
            raise ValueError("quad and lin must be finite")
        if np.max(np.abs(quad - quad.T)) > 1e-8:
            raise ValueError("quad must be symmetric")
        quad = 0.5 * (quad + quad.T)
        if not math.isfinite(self.target_norm_sq) or self.target_norm_sq < 0:
            raise ValueError("target_norm_sq must be finite and >= 0")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "quad", _as_readonly(quad))
        object.__setattr__(self, "lin", _as_readonly(lin))

    @classmethod
    def from_grams(
        cls,
        atoms: Sequence[tuple[UnitId, GramMatrix]],
        target: GramMatrix,
    ) -> "SolverProblem":
        """Assemble (Q, c) from per-unit Gram matrices and the output Gram."""
        if not atoms:
            raise ValueError("need at least one atom")
        units = tuple(u for u, _ in atoms)
        if len(set(units)) != len(units):
            raise ValueError("duplicate units in atoms")
        M = target.values.shape[0]
        for u, gm in atoms:
            if gm.values.shape != (M, M):
                raise ValueError(
                    f"gram for {u.key} has shape {gm.values.shape}, expected {(M, M)}"
                )
        A = np.stack([gm.values.ravel() for _, gm in atoms])
        t = target.values.ravel()
        quad = A @ A.T
        lin = np.clip(A @ t, -1.0, 1.0)
        tns = float(t @ t)
        return cls(units=units, quad=quad, lin=lin, target_norm_sq=tns)

    @property
    def num_units(self) -> int:
        return len(self.units)

    @cached_property
    def unit_index(self) -> Mapping[UnitId, int]:
        return {u: i for i, u in enumerate(self.units)}

    @cached_property
    def degenerate_mask(self) -> np.ndarray:
        mask = np.diag(self.quad) < 0.5
        mask.setflags(write=False)
        return mask

    def validate(self) -> None:
        """Check the structural invariants (Q PSD, diag in {0,1}, c in [-1,1])."""
        diag = np.diag(self.quad)
        near01 = np.minimum(np.abs(diag), np.abs(diag - 1.0))
        if np.max(near01) > _DIAG_TOL:
            raise ValueError("quad diagonal entries must be 0 or 1")
        if np.min(np.linalg.eigvalsh(self.quad)) < -1e-8:
            raise ValueError("quad must be positive semidefinite")
        if np.max(np.abs(self.lin)) > 1.0 + 1e-8:
            raise ValueError("lin entries must lie in [-1, 1]")


@dataclass(frozen=True)
class Explanation:
    """Solver output: one non-negative score per unit, plus run metadata."""

    solver: str
    units: tuple[UnitId, ...]
    alpha: np.ndarray
    objective_value: float
    converged: bool
    iterations: int
    lam: float
    mu: float | None = None

    def __post_init__(self) -> None:
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.shape != (len(self.units),):
            raise ValueError("alpha length must match units")
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "alpha", _as_readonly(alpha))

    @cached_property
    def scores(self) -> dict[UnitId, float]:
        return {u: float(a) for u, a in zip(self.units, self.alpha)}

    def to_obj(self) -> dict:
        obj: dict = {
            "solver": self.solver,
            "lambda": self.lam,
            "scores": {u.key: float(a) for u, a in zip(self.units, self.alpha)},
            "objective_value": self.objective_value,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.mu is not None:
            obj["mu"] = self.mu
        return obj


def _objective_l1(problem: SolverProblem, alpha: np.ndarray, lam: float) -> float:
    Qa = problem.quad @ alpha
    return float(
        0.5 * problem.target_norm_sq
        - problem.lin @ alpha
        + 0.5 * (alpha @ Qa)
        + lam * alpha.sum()
    )


def _l1_kkt_residual(problem: SolverProblem, alpha: np.ndarray, lam: float) -> float:
    """Max violation of the stationarity conditions for the L1 program."""
    g = problem.lin - problem.quad @ alpha - lam
    pos = alpha > 0
    viol = np.where(pos, np.abs(g), np.maximum(g, 0.0))
    return float(np.max(viol)) if viol.size else 0.0


def solve_l1(problem: SolverProblem, config: SolverConfig) -> Explanation:
    """Non-negative L1 program by cyclic coordinate descent.

    The coordinate update is closed-form because live atoms have unit
    Frobenius norm.  Iterates until the relative objective decrease per sweep
    drops below tol and the KKT residual is within 10*tol.
    """
    Q, c, lam = problem.quad, problem.lin, config.lam
    P = problem.num_units
    live = np.flatnonzero(~problem.degenerate_mask)
    alpha = np.zeros(P)
    Qa = np.zeros(P)
    obj = 0.5 * problem.target_norm_sq
    kkt_gate = 10.0 * config.tol
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_iters + 1):
        for u in live:
            new = max(0.0, c[u] - (Qa[u] - Q[u, u] * alpha[u]) - lam)
            delta = new - alpha[u]
            if delta != 0.0:
                alpha[u] = new
                Qa += delta * Q[:, u]
        Qa = Q @ alpha
        new_obj = float(
            0.5 * problem.target_norm_sq - c @ alpha + 0.5 * (alpha @ Qa) + lam * alpha.sum()
        )
        assert new_obj <= obj + 1e-10 * max(1.0, abs(obj)), "coordinate descent increased the objective"
        decrease = obj - new_obj
        obj = new_obj
        if decrease <= config.tol * max(abs(new_obj), 1e-8):
            if _l1_kkt_residual(problem, alpha, lam) <= kkt_gate:
                converged = True
                break
    alpha[problem.degenerate_mask] = 0.0
    return Explanation(
        solver="l1",
        units=problem.units,
        alpha=alpha,
        objective_value=obj,
        converged=converged,
        iterations=sweeps,
        lam=lam,
    )


def _index_groups(problem: SolverProblem, groups: GroupStructure) -> list[np.ndarray]:
    idx = problem.unit_index
    out = []
    for g in groups.groups:
        members = []
        for u in g:
            if u not in idx:
                raise ValueError(f"group member {u.key} is not a problem unit")
            members.append(idx[u])
        out.append(np.asarray(members, dtype=np.intp))
    covered = set()
    for g in out:
        covered.update(int(i) for i in g)
    missing = [problem.units[i].key for i in range(problem.num_units) if i not in covered]
    if missing:
        raise ValueError(f"groups do not cover units: {', '.join(missing)}")
    return out


def _power_iteration_norm(M: np.ndarray, iters: int = 120) -> float:
    rng = np.random.default_rng(0)
    v = rng.normal(size=M.shape[0])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    for _ in range(iters):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw <= 1e-300:
            return 0.0
        v = w / nw
    return float(v @ (M @ v))


def _group_prox(v: np.ndarray, starts: np.ndarray, sizes: np.ndarray, tau: float) -> np.ndarray:
    """Prox of (nonneg indicator + tau * sum of group L2 norms), blockwise.

    Projecting onto the orthant first and then group-soft-thresholding is the
    exact prox of this composite: coordinates that the projection zeroes stay
    zero under the shrink, and the shrink solves the restricted problem.
    """
    w = np.maximum(v, 0.0)
    nrm = np.sqrt(np.add.reduceat(w * w, starts))
    scale = np.where(nrm > 0.0, np.maximum(0.0, 1.0 - tau / np.where(nrm > 0.0, nrm, 1.0)), 0.0)
    return w * np.repeat(scale, sizes)


def solve_group(
    problem: SolverProblem, groups: GroupStructure, config: SolverConfig
) -> Explanation:
    """Overlapping-group program in latent form, by accelerated proximal gradient.

    Each group gets its own non-negative copy of its members' scores; a unit's
    alpha is the sum of its copies.  Momentum restarts whenever the objective
    would increase, which keeps the accepted iterates monotone.
    """
    idx_groups = _index_groups(problem, groups)
    Q, c, lam = problem.quad, problem.lin, config.lam
    P = problem.num_units
    sizes = np.asarray([len(g) for g in idx_groups], dtype=np.intp)
    starts = np.zeros(len(sizes), dtype=np.intp)
    np.cumsum(sizes[:-1], out=starts[1:])
    R = int(sizes.sum())
    members = np.concatenate(idx_groups)
    B = np.zeros((P, R))
    B[members, np.arange(R)] = 1.0

    QB = B.T @ Q @ B
    cB = B.T @ c
    L = _power_iteration_norm(QB)
    tns = problem.target_norm_sq

    def objective(beta: np.ndarray) -> float:
        nrm = np.sqrt(np.add.reduceat(beta * beta, starts))
        return float(0.5 * tns - cB @ beta + 0.5 * (beta @ (QB @ beta)) + lam * nrm.sum())

    if L <= 1e-12:
        # All atoms degenerate: zero is optimal and nothing can move.
        alpha = np.zeros(P)
        return Explanation(
            solver="group",
            units=problem.units,
            alpha=alpha,
            objective_value=objective(np.zeros(R)),
            converged=True,
            iterations=1,
            lam=lam,
        )

    step = 1.0 / (1.01 * L)
    tau = step * lam
    beta = np.zeros(R)
    y = beta
    t = 1.0
    obj = objective(beta)
    converged = False
    iters = 0
    for iters in range(1, config.max_iters + 1):
        cand = _group_prox(y - step * (QB @ y - cB), starts, sizes, tau)
        new_obj = objective(cand)
        if new_obj > obj:
            # Momentum overshoot: retry as a plain proximal step from beta.
            cand = _group_prox(beta - step * (QB @ beta - cB), starts, sizes, tau)
            new_obj = objective(cand)
            t = 1.0
        assert new_obj <= obj + 1e-10 * max(1.0, abs(obj)), "proximal step increased the objective"
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_next) * (cand - beta)
        beta = cand
        t = t_next
        decrease = obj - new_obj
        obj = new_obj
        if decrease <= config.tol * max(abs(new_obj), 1e-8):
            converged = True
            break
    alpha = B @ beta
    alpha[problem.degenerate_mask] = 0.0
    return Explanation(
        solver="group",
        units=problem.units,
        alpha=alpha,
        objective_value=obj,
        converged=converged,
        iterations=iters,
        lam=lam,
    )


def _index_pairs(
    problem: SolverProblem, adjacency: Sequence[tuple[UnitId, UnitId]]
) -> tuple[np.ndarray, np.ndarray]:
    idx = problem.unit_index
    left, right = [], []
    for a, b in adjacency:
        if a not in idx or b not in idx:
            missing = a if a not in idx else b
            raise ValueError(f"adjacency endpoint {missing.key} is not a problem unit")
        if a == b:
            raise ValueError(f"adjacency pairs a unit with itself: {a.key}")
        left.append(idx[a])
        right.append(idx[b])
    return np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp)


def _cd_general(
    At: np.ndarray,
    ceff: np.ndarray,
    lam: float,
    alpha: np.ndarray,
    live: np.ndarray,
    max_sweeps: int,
    move_tol: float,
) -> None:
    """In-place coordinate descent for 0.5 a'At a - ceff'a + lam sum(a), a >= 0."""
    Aa = At @ alpha
    for _ in range(max_sweeps):
        biggest = 0.0
        for u in live:
            duu = At[u, u]
            if duu <= 0.0:
                continue
            new = max(0.0, (ceff[u] - (Aa[u] - duu * alpha[u]) - lam) / duu)
            delta = new - alpha[u]
            if delta != 0.0:
                alpha[u] = new
                Aa += delta * At[:, u]
                biggest = max(biggest, abs(delta))
        if biggest <= move_tol:
            break


def _fused_objective(
    problem: SolverProblem,
    alpha: np.ndarray,
    lam: float,
    mu: float,
    li: np.ndarray,
    ri: np.ndarray,
) -> float:
    base = _objective_l1(problem, alpha, lam)
    if li.size:
        base += mu * float(np.abs(alpha[li] - alpha[ri]).sum())
    return base


def solve_fused(
    problem: SolverProblem,
    adjacency: Sequence[tuple[UnitId, UnitId]],
    config: SolverConfig,
) -> Explanation:
    """L1 plus fused penalty over an adjacency, by ADMM.

    Splits z = D alpha where D stacks mu-weighted signed difference rows, so
    the z update is a soft-threshold at 1/rho.  The alpha subproblem is
    solved by warm-started coordinate descent.  Stops when both residual
    norms fall below tol * sqrt(dim).
    """
    li, ri = _index_pairs(problem, adjacency)
    Q, c, lam, mu, rho = problem.quad, problem.lin, config.lam, config.mu, config.admm_rho
    P = problem.num_units
    live = np.flatnonzero(~problem.degenerate_mask)
    E = li.size
    alpha = np.zeros(P)
    move_tol = max(1e-13, 1e-2 * config.tol)

    if E == 0 or mu == 0.0:
        # No fusion pressure: the program is exactly the L1 one.
        _cd_general(Q, c.copy(), lam, alpha, live, config.max_iters, move_tol)
        converged = _l1_kkt_residual(problem, alpha, lam) <= 10.0 * config.tol
        alpha[problem.degenerate_mask] = 0.0
        return Explanation(
            solver="fused",
            units=problem.units,
            alpha=alpha,
            objective_value=_fused_objective(problem, alpha, lam, mu, li, ri),
            converged=converged,
            iterations=1,
            lam=lam,
            mu=mu,
        )

    # At = Q + rho D'D with D = mu * (e_l - e_r) rows.
    lap = np.zeros((P, P))
    np.add.at(lap, (li, li), 1.0)
    np.add.at(lap, (ri, ri), 1.0)
    np.add.at(lap, (li, ri), -1.0)
    np.add.at(lap, (ri, li), -1.0)
    At = Q + rho * mu * mu * lap

    z = np.zeros(E)
    w = np.zeros(E)
    eps_pri = config.tol * math.sqrt(E)
    eps_dual = config.tol * math.sqrt(P)
    converged = False
    iters = 0
    for iters in range(1, config.max_iters + 1):
        adj = z - w
        ceff = c.copy()
        np.add.at(ceff, li, rho * mu * adj)
        np.add.at(ceff, ri, -rho * mu * adj)
        sweeps = 200 if iters == 1 else 25
        _cd_general(At, ceff, lam, alpha, live, sweeps, move_tol)
        Da = mu * (alpha[li] - alpha[ri])
        z_old = z
        z = np.sign(Da + w) * np.maximum(np.abs(Da + w) - 1.0 / rho, 0.0)
        w = w + Da - z
        primal = np.linalg.norm(Da - z)
        dz = z - z_old
        dual_vec = np.zeros(P)
        np.add.at(dual_vec, li, rho * mu * dz)
        np.add.at(dual_vec, ri, -rho * mu * dz)
        if primal <= eps_pri and np.linalg.norm(dual_vec) <= eps_dual:
            converged = True
            break
    alpha[problem.degenerate_mask] = 0.0
    return Explanation(
        solver="fused",
        units=problem.units,
        alpha=alpha,
        objective_value=_fused_objective(problem, alpha, lam, mu, li, ri),
        converged=converged,
        iterations=iters,
        lam=lam,
        mu=mu,
    )


@dataclass(frozen=True)
class L1Penalty:
    lam: float


@dataclass(frozen=True)
class GroupPenalty:
    lam: float
    groups: GroupStructure


@dataclass(frozen=True)
class FusedPenalty:
    lam: float
    mu: float
    adjacency: tuple[tuple[UnitId, UnitId], ...]


_ORACLE_MAX_UNITS = 8


def _oracle_l1(problem: SolverProblem, lam: float, iters: int) -> np.ndarray:
    """Long-run projected gradient on the exact L1 objective."""
    Q, c = problem.quad, problem.lin
    L = max(float(np.max(np.linalg.eigvalsh(Q))), 1e-12)
    step = 1.0 / L
    alpha = np.zeros(problem.num_units)
    for k in range(iters):
        nxt = np.maximum(0.0, alpha - step * (Q @ alpha - c + lam))
        if k % 1000 == 0 and np.max(np.abs(nxt - alpha)) < 1e-15:
            alpha = nxt
            break
        alpha = nxt
    alpha[problem.degenerate_mask] = 0.0
    return alpha


def _oracle_cvxpy_group(problem: SolverProblem, penalty: GroupPenalty) -> np.ndarray:
    import cvxpy as cp

    idx_groups = _index_groups(problem, penalty.groups)
    P = problem.num_units
    betas = [cp.Variable(len(g), nonneg=True) for g in idx_groups]
    alpha = 0
    for g, b in zip(idx_groups, betas):
        sel = np.zeros((P, len(g)))
        sel[g, np.arange(len(g))] = 1.0
        alpha = alpha + sel @ b
    expr = (
        0.5 * cp.quad_form(alpha, cp.psd_wrap(problem.quad))
        - problem.lin @ alpha
        + penalty.lam * cp.sum([cp.norm(b, 2) for b in betas])
    )
    cons = [alpha[i] == 0 for i in np.flatnonzero(problem.degenerate_mask)]
    prob = cp.Problem(cp.Minimize(expr), cons)
    _cvxpy_solve(prob)
    out = np.zeros(P)
    for g, b in zip(idx_groups, betas):
        out[g] += np.maximum(np.asarray(b.value).ravel(), 0.0)
    out[problem.degenerate_mask] = 0.0
    return out


def _oracle_cvxpy_fused(problem: SolverProblem, penalty: FusedPenalty) -> np.ndarray:
    import cvxpy as cp

    li, ri = _index_pairs(problem, penalty.adjacency)
    alpha = cp.Variable(problem.num_units, nonneg=True)
    expr = (
        0.5 * cp.quad_form(alpha, cp.psd_wrap(problem.quad))
        - problem.lin @ alpha
        + penalty.lam * cp.sum(alpha)
    )
    if li.size:
        expr = expr + penalty.mu * cp.sum(cp.abs(alpha[li] - alpha[ri]))
    cons = [alpha[i] == 0 for i in np.flatnonzero(problem.degenerate_mask)]
    prob = cp.Problem(cp.Minimize(expr), cons)
    _cvxpy_solve(prob)
    out = np.maximum(np.asarray(alpha.value).ravel(), 0.0)
    out[problem.degenerate_mask] = 0.0
    return out


def _cvxpy_solve(prob) -> None:
    import cvxpy as cp

    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-10, max_iters=200000)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed with status {prob.status}")


def qp_oracle(
    problem: SolverProblem,
    penalty: L1Penalty | GroupPenalty | FusedPenalty,
    iters: int = 10**6,
) -> np.ndarray:
    """Reference minimizer for small problems; tests only.

    The L1 route runs long projected gradient descent.  The group and fused
    routes hand the cone program to an interior-point solver, a deliberately
    different algorithm family from the production solvers.
    """
    if problem.num_units > _ORACLE_MAX_UNITS:
        raise ValueError(
            f"oracle handles at most {_ORACLE_MAX_UNITS} units, got {problem.num_units}"
        )
    if isinstance(penalty, L1Penalty):
        return _oracle_l1(problem, penalty.lam, iters)
    if isinstance(penalty, GroupPenalty):
        return _oracle_cvxpy_group(problem, penalty)
    if isinstance(penalty, FusedPenalty):
        return _oracle_cvxpy_fused(problem, penalty)
    raise TypeError(f"unknown penalty type: {type(penalty).__name__}")
