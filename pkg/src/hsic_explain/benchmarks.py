"""Synthetic benchmarks with oracle models and exactly known ground truth.

Five families: single-hub wheels vs cycles, bridged wheel pairs, glasses
graphs with a bridge edge, 4x4 feature-pattern grids, and short graph series
with a lit-up chunk.  Each runner selects hyperparameters on small validation
instances, evaluates on held-out instances, and aggregates per-seed means.

Ranking metrics are computed on instances with nonempty ground truth; the
all-negative siblings (cycles, disconnected cycle pairs, empty patterns)
exist so the generator/oracle consistency tests can exercise both classes.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import networkx as nx
import numpy as np

from .explain import (
    LAMBDA_GRID,
    MU_GRID,
    ExplainRequest,
    PreparedProblem,
    prepare,
    rank_units,
    select_lambda_prepared,
)
from .graphs import Graph, GraphSeries, UnitId
from .kernels import KernelConfig
from .models import oracle_bridge, oracle_hub, oracle_pattern, oracle_series_chunk
from .perturb import (
    FeatureNoise,
    PerturbationScheme,
    RemoveEdges,
    RemoveNodes,
    WalkFeatureNoise,
)
from .solvers import Explanation, SolverConfig

__all__ = [
    "CASE_IDS",
    "BenchmarkCase",
    "MetricReport",
    "CaseResult",
    "default_case",
    "gen_cycle",
    "gen_wheel",
    "gen_two_connected",
    "gen_glasses",
    "gen_disconnected_cycles",
    "gen_grid_pattern",
    "gen_series",
    "top_k_acc",
    "aacc",
    "oacc",
    "precision_at",
    "fidelity",
    "sparsity",
    "run_case",
    "write_csv",
    "write_json",
]

CASE_IDS = (
    "hub-one-node",
    "hub-two-nodes",
    "bridge-edge",
    "grid-pattern",
    "series-chunk",
)

METHOD_CHOICES = ("l1", "group", "fused", "random")

# Instance size ranges, one tuple per family.
WHEEL_SIZES = (6, 21)
CYCLE_SIZES = (5, 20)
PAIR_WHEEL_SIZES = (6, 16)
PAIR_CYCLE_SIZES = (5, 15)
GLASSES_SIZES = (3, 10)


# ---------------------------------------------------------------------------
# Generators


def gen_cycle(n: int) -> Graph:
    if n < 3:
        raise ValueError("cycle needs at least 3 nodes")
    edges = tuple(sorted(tuple(sorted((i, (i + 1) % n))) for i in range(n)))
    return Graph(n, edges, None)


def gen_wheel(n: int) -> Graph:
    """n nodes total: an (n-1)-cycle plus a hub (index n-1) joined to every rim node.

    The hub goes last so that rank ties broken by ascending unit id can never
    hand it an unearned win.
    """
    if n < 4:
        raise ValueError("wheel needs at least 4 nodes")
    rim = n - 1
    edges = [tuple(sorted((i, (i + 1) % rim))) for i in range(rim)]
    edges += [(i, rim) for i in range(rim)]
    return Graph(n, tuple(sorted(edges)), None)


def _component(kind: str, n: int) -> tuple[Graph, int | None]:
    """Build one side of a composite graph; returns (graph, hub index or None)."""
    if kind == "wheel":
        return gen_wheel(n), n - 1
    if kind == "cycle":
        return gen_cycle(n), None
    raise ValueError(f"unknown component kind: {kind!r}")


def gen_two_connected(
    kind_left: str, kind_right: str, n_left: int, n_right: int, seed: int = 0
) -> tuple[Graph, tuple[UnitId, ...]]:
    """Two components joined by a single bridge between uniformly chosen rim nodes.

    Hubs are never bridge endpoints.  Ground truth is the set of hub nodes
    present (two, one, or zero depending on the kinds).
    """
    left, hub_l = _component(kind_left, n_left)
    right, hub_r = _component(kind_right, n_right)
    rng = np.random.default_rng(seed)
    rim_l = n_left - 1 if hub_l is not None else n_left
    rim_r = n_right - 1 if hub_r is not None else n_right
    a = int(rng.integers(rim_l))
    b = n_left + int(rng.integers(rim_r))
    edges = list(left.edges)
    edges += [(u + n_left, v + n_left) for u, v in right.edges]
    edges.append((a, b))
    g = Graph(n_left + n_right, tuple(sorted(edges)), None)
    truth = []
    if hub_l is not None:
        truth.append(UnitId.node(hub_l))
    if hub_r is not None:
        truth.append(UnitId.node(n_left + hub_r))
    return g, tuple(truth)


def gen_glasses(n_left: int, n_right: int) -> tuple[Graph, UnitId]:
    """Two cycles joined by one bridge edge; the bridge is the ground truth."""
    left = gen_cycle(n_left)
    right = gen_cycle(n_right)
    edges = list(left.edges)
    edges += [(u + n_left, v + n_left) for u, v in right.edges]
    edges.append((0, n_left))
    g = Graph(n_left + n_right, tuple(sorted(edges)), None)
    return g, UnitId.edge(0, n_left)


def gen_disconnected_cycles(n_left: int, n_right: int) -> tuple[Graph, None]:
    left = gen_cycle(n_left)
    right = gen_cycle(n_right)
    edges = list(left.edges) + [(u + n_left, v + n_left) for u, v in right.edges]
    return Graph(n_left + n_right, tuple(sorted(edges)), None), None


_GRID_SIDE = 4
_PATTERNS = ("none", "rectangle", "line", "rectline")


def _grid_edges() -> tuple[tuple[int, int], ...]:
    edges = []
    for r in range(_GRID_SIDE):
        for c in range(_GRID_SIDE):
            v = r * _GRID_SIDE + c
            if c + 1 < _GRID_SIDE:
                edges.append((v, v + 1))
            if r + 1 < _GRID_SIDE:
                edges.append((v, v + _GRID_SIDE))
    return tuple(sorted(edges))


def _rectangle_nodes(rng: np.random.Generator) -> set[int]:
    r = int(rng.integers(_GRID_SIDE - 1))
    c = int(rng.integers(_GRID_SIDE - 1))
    v = r * _GRID_SIDE + c
    return {v, v + 1, v + _GRID_SIDE, v + _GRID_SIDE + 1}


def _line_nodes(rng: np.random.Generator) -> set[int]:
    k = int(rng.integers(2 * _GRID_SIDE))
    if k < _GRID_SIDE:
        return {k * _GRID_SIDE + c for c in range(_GRID_SIDE)}
    return {r * _GRID_SIDE + (k - _GRID_SIDE) for r in range(_GRID_SIDE)}


def gen_grid_pattern(pattern: str, seed: int = 0) -> tuple[Graph, tuple[UnitId, ...]]:
    """4x4 grid; the pattern nodes carry feature 1, everything else 0.

    Placement is uniform over valid anchor positions: nine 2x2 blocks for
    rectangles, the four rows and four columns for lines.
    """
    if pattern not in _PATTERNS:
        raise ValueError(f"unknown pattern: {pattern!r}")
    rng = np.random.default_rng(seed)
    chosen: set[int] = set()
    if pattern in ("rectangle", "rectline"):
        chosen |= _rectangle_nodes(rng)
    if pattern in ("line", "rectline"):
        chosen |= _line_nodes(rng)
    feats = np.zeros((_GRID_SIDE * _GRID_SIDE, 1))
    feats[sorted(chosen), 0] = 1.0
    g = Graph(_GRID_SIDE * _GRID_SIDE, _grid_edges(), feats)
    return g, tuple(UnitId.node(v) for v in sorted(chosen))


_SERIES_NODES = 20
_SERIES_LEN = 3
_BA_M = 2


def gen_series(seed: int = 0, positive: bool = True) -> tuple[GraphSeries, tuple[UnitId, ...]]:
    """Three snapshots over one random preferential-attachment structure.

    Positive instances light up a chunk (a node and two of its neighbors)
    with feature 1 at one uniformly chosen time; negatives stay all-zero.
    """
    rng = np.random.default_rng(seed)
    ba = nx.barabasi_albert_graph(_SERIES_NODES, _BA_M, seed=int(rng.integers(2**31)))
    edges = tuple(sorted(tuple(sorted(e)) for e in ba.edges()))
    feats = [np.zeros((_SERIES_NODES, 1)) for _ in range(_SERIES_LEN)]
    truth: tuple[UnitId, ...] = ()
    if positive:
        degrees = np.array([ba.degree(v) for v in range(_SERIES_NODES)])
        eligible = np.flatnonzero(degrees >= 2)
        center = int(rng.choice(eligible))
        neighbors = rng.choice(sorted(ba.neighbors(center)), size=2, replace=False)
        chunk = sorted({center, int(neighbors[0]), int(neighbors[1])})
        t = int(rng.integers(_SERIES_LEN))
        feats[t][chunk, 0] = 1.0
        truth = tuple(UnitId.node_time(v, t) for v in chunk)
    snaps = tuple(Graph(_SERIES_NODES, edges, f) for f in feats)
    return GraphSeries(snaps), truth


# ---------------------------------------------------------------------------
# Metrics


def top_k_acc(ranked: Sequence[UnitId], truth: Sequence[UnitId], k: int) -> float:
    """1 iff any ground-truth unit appears in the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = set(ranked[:k])
    return 1.0 if any(t in top for t in truth) else 0.0


def aacc(ranked: Sequence[UnitId], truth: Sequence[UnitId], k: int) -> float:
    """1 iff every ground-truth unit appears in the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = set(ranked[:k])
    return 1.0 if truth and all(t in top for t in truth) else 0.0


def oacc(ranked: Sequence[UnitId], truth: Sequence[UnitId], k: int) -> float:
    """1 iff at least one ground-truth unit appears in the top k."""
    return top_k_acc(ranked, truth, k)


def precision_at(ranked: Sequence[UnitId], truth: Sequence[UnitId], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    top = set(ranked[:k])
    return len(top.intersection(truth)) / k


def fidelity(model, instances: Sequence[tuple[Graph, Sequence[int]]]) -> float:
    """Mean drop in the originally predicted class probability after masking.

    Masking zeroes the features of the listed nodes; the structure stays.
    """
    if not instances:
        raise ValueError("fidelity needs at least one instance")
    total = 0.0
    for g, mask in instances:
        probs = model.predict(g)
        cls = int(np.argmax(probs))
        masked = g
        mask = sorted(set(mask))
        if mask and g.features is not None:
            feats = np.array(g.features)
            feats[mask, :] = 0.0
            masked = g.with_features(feats)
        total += float(probs[cls]) - float(model.predict(masked)[cls])
    return total / len(instances)


def sparsity(instances: Sequence[tuple[Graph, Sequence[int]]]) -> float:
    """Mean fraction of nodes left out of the mask."""
    if not instances:
        raise ValueError("sparsity needs at least one instance")
    return float(
        np.mean([1.0 - len(set(mask)) / g.num_nodes for g, mask in instances])
    )


# ---------------------------------------------------------------------------
# Case runners


@dataclass(frozen=True)
class BenchmarkCase:
    """One benchmark family plus the knobs its runner needs."""

    case_id: str
    m_samples: int = 201
    noise_std: float = 0.5
    noise_fraction: float = 0.5
    solver: SolverConfig = SolverConfig(tol=1e-6, max_iters=4000)
    lam_grid: tuple[float, ...] = LAMBDA_GRID
    mu_grid: tuple[float, ...] = MU_GRID
    kernels: KernelConfig = field(default_factory=KernelConfig)

    def __post_init__(self) -> None:
        if self.case_id not in CASE_IDS:
            raise ValueError(f"unknown case id: {self.case_id!r}")
        if self.m_samples < 2:
            raise ValueError("m_samples must be >= 2")
        if not 0.0 < self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in (0, 1]")


def default_case(case_id: str) -> BenchmarkCase:
    if case_id == "series-chunk":
        return BenchmarkCase(case_id=case_id, m_samples=251, noise_std=0.6)
    if case_id == "hub-two-nodes":
        # The label only flips when both hubs die in the same sample, a rare
        # joint event; more samples keep its estimate out of the noise floor.
        return BenchmarkCase(case_id=case_id, m_samples=401)
    if case_id == "grid-pattern":
        # Delta kernel on binarized features matches the threshold the count
        # oracle applies; the Gaussian-on-raw default costs about 0.2
        # precision here.
        return BenchmarkCase(
            case_id=case_id,
            noise_std=0.5,
            noise_fraction=0.5,
            kernels=KernelConfig(input_kernel="delta"),
        )
    return BenchmarkCase(case_id=case_id)


@dataclass(frozen=True)
class MetricReport:
    case_id: str
    method: str
    metric: str
    mean: float
    stddev: float
    n: int

    def __post_init__(self) -> None:
        if self.stddev < 0:
            raise ValueError("stddev must be >= 0")


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    rows: tuple[MetricReport, ...]
    detail: dict


def _summarize(case_id: str, per_method: dict, n: int) -> tuple[MetricReport, ...]:
    rows = []
    for method in per_method:
        for metric, seed_values in per_method[method].items():
            rows.append(
                MetricReport(
                    case_id=case_id,
                    method=method,
                    metric=metric,
                    mean=float(np.mean(seed_values)),
                    stddev=float(np.std(seed_values)),
                    n=n,
                )
            )
    return tuple(rows)


def _random_ranking(units: Sequence[UnitId], rng: np.random.Generator) -> list[UnitId]:
    order = rng.permutation(len(units))
    return [units[i] for i in order]


def _select_for_method(
    case: BenchmarkCase,
    method: str,
    validation: Sequence[tuple[PreparedProblem, Sequence[UnitId]]],
    metric: Callable[[Explanation, Sequence[UnitId]], float],
) -> SolverConfig:
    return select_lambda_prepared(
        validation,
        metric,
        case.solver,
        method=method,
        lam_grid=case.lam_grid,
        mu_grid=case.mu_grid if method == "fused" else None,
    )


def _eval_methods(
    case: BenchmarkCase,
    methods: Sequence[str],
    seed: int,
    validation: list[tuple[PreparedProblem, tuple[UnitId, ...]]],
    evaluation: list[tuple[PreparedProblem, tuple[UnitId, ...]]],
    metrics: dict[str, Callable[[Sequence[UnitId], Sequence[UnitId]], float]],
    rank_depth: int,
    select_metric: str,
    acc: dict,
    detail: list,
    jobs: int = 1,
) -> None:
    """Shared per-seed loop: pick a config on validation, score evaluation.

    Evaluation instances run concurrently when jobs > 1; results are
    aggregated by instance index either way, so the report is deterministic.
    """
    for method in methods:
        if method == "random":
            scored = []
            for i, (prep, truth) in enumerate(evaluation):
                rng = np.random.default_rng(seed * 7919 + i)
                ranked = _random_ranking(prep.problem.units, rng)
                scored.append({m: fn(ranked, truth) for m, fn in metrics.items()})
            chosen = {"lambda": None, "mu": None}
        else:
            sel = metrics[select_metric]
            cfg = _select_for_method(
                case,
                method,
                validation,
                lambda e, t: sel(rank_units(e, rank_depth), t),
            )

            def score(item):
                prep, truth = item
                ranked = rank_units(prep.solve(cfg, method=method), rank_depth)
                return {m: fn(ranked, truth) for m, fn in metrics.items()}

            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as ex:
                    scored = list(ex.map(score, evaluation))
            else:
                scored = [score(item) for item in evaluation]
            chosen = {"lambda": cfg.lam, "mu": cfg.mu if method == "fused" else None}
        values = {m: [s[m] for s in scored] for m in metrics}
        for m in metrics:
            acc.setdefault(method, {}).setdefault(m, []).append(float(np.mean(values[m])))
        detail.append(
            {"seed": seed, "method": method, "chosen": chosen, "values": values}
        )


def _prep_graph(
    case: BenchmarkCase, g: Graph | GraphSeries, model, unit_kind: str, scheme, jobs: int
) -> PreparedProblem:
    req = ExplainRequest(
        target=g,
        model=model,
        unit_kind=unit_kind,
        scheme=scheme,
        kernels=case.kernels,
        solver=case.solver,
        jobs=jobs,
    )
    return prepare(req)


def _run_hub_one_node(case, methods, seeds, jobs, model=None) -> CaseResult:
    acc: dict = {}
    detail: list = []
    for seed in seeds:
        mdl = model if model is not None else oracle_hub()
        def scheme(tag):
            return PerturbationScheme(
                RemoveNodes(2), m_samples=case.m_samples, seed=seed * 100003 + tag
            )
        validation = [
            (_prep_graph(case, gen_wheel(n), mdl, "node", scheme(n), jobs), (UnitId.node(n - 1),))
            for n in (6, 7, 8)
        ]
        evaluation = [
            (_prep_graph(case, gen_wheel(n), mdl, "node", scheme(n), jobs), (UnitId.node(n - 1),))
            for n in range(9, 22)
        ]
        _eval_methods(
            case, methods, seed, validation, evaluation,
            metrics={"top1_acc": lambda r, t: top_k_acc(r, t, 1)},
            rank_depth=1, select_metric="top1_acc", acc=acc, detail=detail, jobs=jobs,
        )
    return CaseResult(case.case_id, _summarize(case.case_id, acc, len(seeds)), {"runs": detail})


def _run_hub_two_nodes(case, methods, seeds, jobs, model=None) -> CaseResult:
    acc: dict = {}
    detail: list = []
    for seed in seeds:
        mdl = model if model is not None else oracle_hub()
        rng = np.random.default_rng(seed)
        def instance(lo, hi):
            nl = int(rng.integers(lo, hi + 1))
            nr = int(rng.integers(lo, hi + 1))
            g, truth = gen_two_connected("wheel", "wheel", nl, nr, seed=int(rng.integers(2**31)))
            # Six removals per sample so that losing both hubs at once stays
            # a few-percent event even on the largest pairs.
            sch = PerturbationScheme(
                RemoveNodes(6), m_samples=case.m_samples, seed=int(rng.integers(2**31))
            )
            return (_prep_graph(case, g, mdl, "node", sch, jobs), truth)
        validation = [instance(6, 8) for _ in range(3)]
        evaluation = [instance(9, 16) for _ in range(10)]
        _eval_methods(
            case, methods, seed, validation, evaluation,
            metrics={
                "aacc@2": lambda r, t: aacc(r, t, 2),
                "aacc@6": lambda r, t: aacc(r, t, 6),
                "oacc@2": lambda r, t: oacc(r, t, 2),
                "oacc@6": lambda r, t: oacc(r, t, 6),
            },
            rank_depth=6, select_metric="aacc@6", acc=acc, detail=detail, jobs=jobs,
        )
    return CaseResult(case.case_id, _summarize(case.case_id, acc, len(seeds)), {"runs": detail})


def _run_bridge_edge(case, methods, seeds, jobs, model=None) -> CaseResult:
    acc: dict = {}
    detail: list = []
    for seed in seeds:
        mdl = model if model is not None else oracle_bridge()
        rng = np.random.default_rng(seed)
        def instance(lo, hi):
            nl = int(rng.integers(lo, hi + 1))
            nr = int(rng.integers(lo, hi + 1))
            g, bridge = gen_glasses(nl, nr)
            sch = PerturbationScheme(
                RemoveEdges(1), m_samples=case.m_samples, seed=int(rng.integers(2**31))
            )
            return (_prep_graph(case, g, mdl, "edge", sch, jobs), (bridge,))
        validation = [instance(3, 4) for _ in range(2)]
        evaluation = [instance(5, 10) for _ in range(8)]
        _eval_methods(
            case, methods, seed, validation, evaluation,
            metrics={
                "top1_acc": lambda r, t: top_k_acc(r, t, 1),
                "top2_acc": lambda r, t: top_k_acc(r, t, 2),
            },
            rank_depth=2, select_metric="top2_acc", acc=acc, detail=detail, jobs=jobs,
        )
    return CaseResult(case.case_id, _summarize(case.case_id, acc, len(seeds)), {"runs": detail})


def _run_grid_pattern(case, methods, seeds, jobs, model=None) -> CaseResult:
    if model is not None:
        raise ValueError("grid-pattern ties its oracle threshold to each instance")
    acc: dict = {}
    detail: list = []
    patterns = ("rectangle", "line", "rectline")
    for seed in seeds:
        rng = np.random.default_rng(seed)
        def instance(pattern):
            g, truth = gen_grid_pattern(pattern, seed=int(rng.integers(2**31)))
            # The count threshold tracks the planted pattern size, standing in
            # for a classifier that knows each pattern class.  With partial
            # noise only pattern nodes can push the count below threshold, so
            # label flips are driven by the ground-truth nodes.
            model = oracle_pattern(target_count=len(truth))
            sch = PerturbationScheme(
                FeatureNoise(case.noise_fraction, case.noise_std),
                m_samples=case.m_samples,
                seed=int(rng.integers(2**31)),
            )
            return (_prep_graph(case, g, model, "node", sch, jobs), truth)
        validation = [instance(p) for p in patterns]
        evaluation = [instance(p) for p in patterns for _ in range(3)]
        _eval_methods(
            case, methods, seed, validation, evaluation,
            metrics={"precision@4": lambda r, t: precision_at(r, t, 4)},
            rank_depth=4, select_metric="precision@4", acc=acc, detail=detail, jobs=jobs,
        )
    return CaseResult(case.case_id, _summarize(case.case_id, acc, len(seeds)), {"runs": detail})


def _run_series_chunk(case, methods, seeds, jobs, model=None) -> CaseResult:
    acc: dict = {}
    detail: list = []
    for seed in seeds:
        mdl = model if model is not None else oracle_series_chunk()
        rng = np.random.default_rng(seed)
        def instance():
            series, truth = gen_series(seed=int(rng.integers(2**31)), positive=True)
            sch = PerturbationScheme(
                WalkFeatureNoise(3, case.noise_std),
                m_samples=case.m_samples,
                seed=int(rng.integers(2**31)),
            )
            return (_prep_graph(case, series, mdl, "node_time", sch, jobs), truth)
        validation = [instance() for _ in range(3)]
        evaluation = [instance() for _ in range(10)]
        # Precision at the true-unit count; chunks always have three units.
        _eval_methods(
            case, methods, seed, validation, evaluation,
            metrics={"precision@tn": lambda r, t: precision_at(r, t, len(t))},
            rank_depth=3, select_metric="precision@tn", acc=acc, detail=detail, jobs=jobs,
        )
    return CaseResult(case.case_id, _summarize(case.case_id, acc, len(seeds)), {"runs": detail})


_RUNNERS = {
    "hub-one-node": _run_hub_one_node,
    "hub-two-nodes": _run_hub_two_nodes,
    "bridge-edge": _run_bridge_edge,
    "grid-pattern": _run_grid_pattern,
    "series-chunk": _run_series_chunk,
}


def run_case(
    case: BenchmarkCase,
    methods: Sequence[str] = ("l1", "group", "fused"),
    seeds: Sequence[int] = (0, 1, 2),
    jobs: int = 1,
    model=None,
) -> CaseResult:
    """Run one benchmark family; returns summary rows plus per-run detail.

    `model` substitutes an externally served predictor for the builtin
    oracle, so a wire-protocol server can be scored on the same instances.
    grid-pattern rejects the substitution: its oracle varies per instance.
    """
    for m in methods:
        if m not in METHOD_CHOICES:
            raise ValueError(f"unknown method: {m!r}")
    if not seeds:
        raise ValueError("need at least one seed")
    return _RUNNERS[case.case_id](case, tuple(methods), tuple(seeds), jobs, model)


def write_csv(rows: Sequence[MetricReport], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "method", "metric", "mean", "stddev", "n"])
        for r in rows:
            w.writerow([r.case_id, r.method, r.metric, f"{r.mean:.6f}", f"{r.stddev:.6f}", r.n])


def write_json(result: CaseResult, path: str) -> None:
    obj = {
        "case": result.case_id,
        "rows": [
            {
                "method": r.method,
                "metric": r.metric,
                "mean": r.mean,
                "stddev": r.stddev,
                "n": r.n,
            }
            for r in result.rows
        ],
        "detail": result.detail,
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
