"""End-to-end pipeline from a target and a black-box model to ranked unit scores.

The flow is: perturb the target, collect model predictions, turn each unit's
perturbation trace and the prediction matrix into centered normalized Gram
matrices, then solve one of the three programs.  `prepare` stops just short
of solving so hyperparameter sweeps can reuse the expensive part.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace, asdict
from typing import Callable, Sequence

from .graphs import Graph, GraphSeries, UnitId
from .kernels import KernelConfig, output_gram, unit_gram
from .models import BlackBoxModel
from .perturb import (
    GroupStructure,
    PerturbationScheme,
    generate,
    replicate_groups_over_time,
    scheme_to_obj,
    walk_groups,
)
from .solvers import (
    Explanation,
    SolverConfig,
    SolverProblem,
    solve_fused,
    solve_group,
    solve_l1,
)

__all__ = [
    "ExplainRequest",
    "PreparedProblem",
    "LAMBDA_GRID",
    "MU_GRID",
    "prepare",
    "explain",
    "rank_units",
    "select_lambda",
    "select_lambda_prepared",
    "fused_adjacency",
    "ensure_cover",
    "explanation_obj",
    "walk_group_structure",
]

METHODS = ("l1", "group", "fused")

LAMBDA_GRID: tuple[float, ...] = tuple(10.0**-k for k in range(9, -1, -1))
MU_GRID: tuple[float, ...] = (1e-7, 1e-5, 1e-3, 1e-1, 1.0)

# Walk-group defaults when no explicit GroupStructure is supplied.
_WALK_LEN = 3
_WALKS_PER_NODE = 2


@dataclass(frozen=True)
class ExplainRequest:
    """Everything `explain` needs: target, model, and how to score it."""

    target: Graph | GraphSeries
    model: BlackBoxModel
    unit_kind: str
    scheme: PerturbationScheme
    kernels: KernelConfig = field(default_factory=KernelConfig)
    method: str = "l1"
    solver: SolverConfig = field(default_factory=SolverConfig)
    groups: GroupStructure | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.unit_kind not in ("node", "edge", "node_time"):
            raise ValueError(f"unknown unit kind: {self.unit_kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method: {self.method!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


def _union_graph(series: GraphSeries) -> Graph:
    edges = set()
    for g in series.snapshots:
        edges.update(g.edges)
    return Graph(series.num_nodes, tuple(sorted(edges)), None)


def walk_group_structure(
    target: Graph | GraphSeries,
    unit_kind: str,
    n_walks: int | None = None,
    walk_len: int = _WALK_LEN,
    seed: int = 0,
) -> GroupStructure:
    """Random-walk groups for any unit kind.

    A series is walked on its edge-union graph and the node groups are
    replicated per snapshot.  n_walks defaults to twice the node count.
    """
    if isinstance(target, GraphSeries):
        base = _union_graph(target)
        if n_walks is None:
            n_walks = _WALKS_PER_NODE * base.num_nodes
        node_groups = walk_groups(base, n_walks, walk_len, seed=seed, unit_kind="node")
        return replicate_groups_over_time(node_groups, len(target.snapshots))
    if n_walks is None:
        n_walks = _WALKS_PER_NODE * target.num_nodes
    return walk_groups(target, n_walks, walk_len, seed=seed, unit_kind=unit_kind)


def _default_groups(req: ExplainRequest) -> GroupStructure:
    return walk_group_structure(req.target, req.unit_kind, seed=req.scheme.seed)


def ensure_cover(groups: GroupStructure, units: Sequence[UnitId]) -> GroupStructure:
    """Wrap units missing from every group as singletons, with a warning."""
    covered = groups.covered()
    missing = tuple(u for u in units if u not in covered)
    if not missing:
        return groups
    warnings.warn(
        f"{len(missing)} unit(s) not covered by any group; adding singletons",
        RuntimeWarning,
        stacklevel=2,
    )
    return GroupStructure(groups.groups + tuple((u,) for u in missing))


def fused_adjacency(
    target: Graph | GraphSeries, unit_kind: str
) -> tuple[tuple[UnitId, UnitId], ...]:
    """Adjacency over units for the fused penalty.

    Node units inherit the graph's edges.  Edge units are adjacent when they
    share an endpoint.  Node-time units link along each snapshot's edges and
    along time for the same node.
    """
    if unit_kind == "node":
        assert isinstance(target, Graph)
        return tuple((UnitId.node(u), UnitId.node(v)) for u, v in target.edges)
    if unit_kind == "edge":
        assert isinstance(target, Graph)
        pairs = []
        incident: dict[int, list[tuple[int, int]]] = {}
        for e in target.edges:
            incident.setdefault(e[0], []).append(e)
            incident.setdefault(e[1], []).append(e)
        for shared in sorted(incident):
            es = incident[shared]
            for i in range(len(es)):
                for j in range(i + 1, len(es)):
                    pairs.append((UnitId.edge(*es[i]), UnitId.edge(*es[j])))
        return tuple(pairs)
    assert isinstance(target, GraphSeries)
    pairs = []
    T = len(target.snapshots)
    for t, g in enumerate(target.snapshots):
        for u, v in g.edges:
            pairs.append((UnitId.node_time(u, t), UnitId.node_time(v, t)))
    for v in range(target.num_nodes):
        for t in range(T - 1):
            pairs.append((UnitId.node_time(v, t), UnitId.node_time(v, t + 1)))
    return tuple(pairs)


@dataclass(frozen=True)
class PreparedProblem:
    """The solver-ready problem plus the structures the methods need.

    Solving is cheap relative to perturbation and gram assembly, so grid
    sweeps should call `solve` repeatedly on one prepared instance.
    """

    request: ExplainRequest
    problem: SolverProblem
    groups: GroupStructure
    adjacency: tuple[tuple[UnitId, UnitId], ...]

    def solve(
        self, solver: SolverConfig | None = None, method: str | None = None
    ) -> Explanation:
        cfg = solver if solver is not None else self.request.solver
        how = method if method is not None else self.request.method
        if how == "l1":
            return solve_l1(self.problem, cfg)
        if how == "group":
            return solve_group(self.problem, self.groups, cfg)
        if how == "fused":
            return solve_fused(self.problem, self.adjacency, cfg)
        raise ValueError(f"unknown method: {how!r}")


def prepare(req: ExplainRequest) -> PreparedProblem:
    """Run perturbation and gram assembly; return a reusable solver problem."""
    aux = generate(req.target, req.model, req.scheme, req.unit_kind, jobs=req.jobs)
    atoms = [
        (u, unit_gram(aux.unit_features[u], aux.feature_kind, req.kernels, label=u.key))
        for u in aux.units
    ]
    target_gram = output_gram(aux.predictions, req.kernels)
    problem = SolverProblem.from_grams(atoms, target_gram)
    groups = req.groups if req.groups is not None else _default_groups(req)
    groups = ensure_cover(groups, problem.units)
    adjacency = fused_adjacency(req.target, req.unit_kind)
    return PreparedProblem(request=req, problem=problem, groups=groups, adjacency=adjacency)


def explain(req: ExplainRequest) -> Explanation:
    """Full pipeline: perturb, build grams, solve with the requested method."""
    return prepare(req).solve()


def rank_units(explanation: Explanation, top_k: int) -> list[UnitId]:
    """Top units by score, excluding exact zeros; ties broken by ascending id."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    positive = [(u, s) for u, s in explanation.scores.items() if s > 0.0]
    positive.sort(key=lambda us: (-us[1], us[0]))
    return [u for u, _ in positive[:top_k]]


def explanation_obj(explanation: Explanation, req: ExplainRequest) -> dict:
    """Serializable explanation plus the request echo that reproduces it."""
    obj = explanation.to_obj()
    obj["request"] = {
        "target_kind": "series" if isinstance(req.target, GraphSeries) else "graph",
        "unit_kind": req.unit_kind,
        "method": req.method,
        "scheme": scheme_to_obj(req.scheme),
        "kernels": asdict(req.kernels),
    }
    return obj


def select_lambda_prepared(
    prepared: Sequence[tuple[PreparedProblem, Sequence[UnitId]]],
    metric: Callable[[Explanation, Sequence[UnitId]], float],
    base: SolverConfig,
    method: str | None = None,
    lam_grid: Sequence[float] = LAMBDA_GRID,
    mu_grid: Sequence[float] | None = None,
) -> SolverConfig:
    """Grid-search over already-prepared validation problems.

    Maximizes the mean metric; among ties prefers the config producing the
    fewest positive-score units.
    """
    if not prepared:
        raise ValueError("validation set is empty")
    mus = tuple(mu_grid) if mu_grid is not None else (base.mu,)
    grid = [(float(lam), float(mu)) for mu in mus for lam in lam_grid]
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    best_cfg = None
    best_key: tuple[float, float] | None = None
    for lam, mu in grid:
        cfg = replace(base, lam=lam, mu=mu)
        total_metric = 0.0
        total_positive = 0
        for prep, truth in prepared:
            expl = prep.solve(cfg, method=method)
            total_metric += metric(expl, tuple(truth))
            total_positive += int(sum(1 for s in expl.scores.values() if s > 0.0))
        key = (total_metric / len(prepared), -float(total_positive))
        if best_key is None or key > best_key:
            best_key = key
            best_cfg = cfg
    assert best_cfg is not None
    return best_cfg


def select_lambda(
    req: ExplainRequest,
    validation: Sequence[tuple[Graph | GraphSeries, Sequence[UnitId]]],
    metric: Callable[[Explanation, Sequence[UnitId]], float],
    lam_grid: Sequence[float] = LAMBDA_GRID,
    mu_grid: Sequence[float] | None = None,
) -> SolverConfig:
    """Grid-search the solver config on validation instances.

    `req.target` is a placeholder; each validation instance is substituted
    in turn.  See `select_lambda_prepared` for the selection rule.
    """
    if not validation:
        raise ValueError("validation set is empty")
    prepared = [
        (prepare(replace(req, target=tgt)), tuple(truth)) for tgt, truth in validation
    ]
    return select_lambda_prepared(
        prepared, metric, req.solver, method=None, lam_grid=lam_grid, mu_grid=mu_grid
    )
