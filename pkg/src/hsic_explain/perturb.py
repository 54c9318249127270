"""Perturbation schemes and auxiliary dataset generation.

An auxiliary dataset pairs M perturbed copies of the target with the
model's prediction on each copy, and projects every sample onto per-unit
features: existence bits for removal schemes, perturbed feature vectors
for noise schemes, category indices for resampling.  Sample 0 is always
the unperturbed original.

All randomness flows from one seeded generator consumed in sample order,
so a (target, scheme) pair regenerates the identical dataset.  Model
calls may be pipelined or parallel; results are joined in sample order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .graphs import Graph, GraphSeries, UnitId, random_walk, remove_edges, remove_nodes
from .models import BlackBoxModel


class IncompatibleSchemeError(ValueError):
    """Scheme, target, and unit kind do not fit together."""


@dataclass(frozen=True)
class RemoveNodes:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RemoveEdges:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class FeatureNoise:
    node_fraction: float
    noise_std: float

    def __post_init__(self):
        if not (0.0 < self.node_fraction <= 1.0):
            raise ValueError("node_fraction must lie in (0, 1]")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")


@dataclass(frozen=True)
class WalkRemoveNodes:
    walk_len: int

    def __post_init__(self):
        if self.walk_len < 1:
            raise ValueError("walk_len must be >= 1")


@dataclass(frozen=True)
class WalkFeatureNoise:
    walk_len: int
    noise_std: float

    def __post_init__(self):
        if self.walk_len < 1:
            raise ValueError("walk_len must be >= 1")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")


@dataclass(frozen=True)
class ResampleCategories:
    """Uniformly redraws the category of selected nodes.

    Node features must be one-hot category indicators.
    """

    node_fraction: float

    def __post_init__(self):
        if not (0.0 < self.node_fraction <= 1.0):
            raise ValueError("node_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class WalkResampleCategories:
    walk_len: int

    def __post_init__(self):
        if self.walk_len < 1:
            raise ValueError("walk_len must be >= 1")


SchemeKind = Union[
    RemoveNodes,
    RemoveEdges,
    FeatureNoise,
    WalkRemoveNodes,
    WalkFeatureNoise,
    ResampleCategories,
    WalkResampleCategories,
]

_NOISE_KINDS = (FeatureNoise, WalkFeatureNoise)
_RESAMPLE_KINDS = (ResampleCategories, WalkResampleCategories)
_REMOVAL_KINDS = (RemoveNodes, WalkRemoveNodes, RemoveEdges)


@dataclass(frozen=True)
class PerturbationScheme:
    kind: SchemeKind
    m_samples: int = 201
    seed: int = 0

    def __post_init__(self):
        if self.m_samples < 2:
            raise ValueError("m_samples must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    @property
    def feature_kind(self) -> str:
        if isinstance(self.kind, _NOISE_KINDS):
            return "continuous"
        if isinstance(self.kind, _RESAMPLE_KINDS):
            return "categorical"
        return "binary"


_KIND_NAMES = {
    "remove_nodes": RemoveNodes,
    "remove_edges": RemoveEdges,
    "feature_noise": FeatureNoise,
    "walk_remove_nodes": WalkRemoveNodes,
    "walk_feature_noise": WalkFeatureNoise,
    "resample_categories": ResampleCategories,
    "walk_resample_categories": WalkResampleCategories,
}


def scheme_kind_name(kind: SchemeKind) -> str:
    for name, cls in _KIND_NAMES.items():
        if isinstance(kind, cls):
            return name
    raise TypeError(f"unknown scheme kind {type(kind).__name__}")


def scheme_to_obj(scheme: PerturbationScheme) -> dict:
    obj = {"kind": scheme_kind_name(scheme.kind)}
    obj.update(vars(scheme.kind))
    obj["m_samples"] = scheme.m_samples
    obj["seed"] = scheme.seed
    return obj


def scheme_from_obj(obj: dict) -> PerturbationScheme:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("scheme must be an object with a kind field")
    body = dict(obj)
    name = body.pop("kind")
    cls = _KIND_NAMES.get(name)
    if cls is None:
        raise ValueError(f"unknown scheme kind {name!r}; choices: {sorted(_KIND_NAMES)}")
    m_samples = body.pop("m_samples", 201)
    seed = body.pop("seed", 0)
    try:
        kind = cls(**body)
    except TypeError as exc:
        raise ValueError(f"bad parameters for scheme {name!r}: {exc}") from exc
    return PerturbationScheme(kind, m_samples=m_samples, seed=seed)


@dataclass(frozen=True)
class PerturbationRecord:
    """What one sample changed relative to the original."""

    removed_nodes: tuple[int, ...] = ()
    removed_edges: tuple[tuple[int, int], ...] = ()
    noised_nodes: tuple[int, ...] = ()
    time: int | None = None


@dataclass
class AuxiliaryDataset:
    units: tuple[UnitId, ...]
    records: list[PerturbationRecord]
    predictions: np.ndarray  # (M, n_classes)
    unit_features: dict[UnitId, np.ndarray]  # (M,) or (M, d) per unit
    feature_kind: str
    scheme: PerturbationScheme

    @property
    def m_samples(self) -> int:
        return len(self.records)


def enumerate_units(target: Graph | GraphSeries, unit_kind: str) -> tuple[UnitId, ...]:
    """All units of one kind, in ascending UnitId order."""
    if unit_kind == "node":
        if not isinstance(target, Graph):
            raise IncompatibleSchemeError("node units require a single graph")
        return tuple(UnitId.node(v) for v in range(target.num_nodes))
    if unit_kind == "edge":
        if not isinstance(target, Graph):
            raise IncompatibleSchemeError("edge units require a single graph")
        return tuple(UnitId.edge(u, v) for u, v in target.edges)
    if unit_kind == "node_time":
        if not isinstance(target, GraphSeries):
            raise IncompatibleSchemeError("node_time units require a graph series")
        return tuple(
            UnitId.node_time(v, t)
            for v in range(target.num_nodes)
            for t in range(len(target))
        )
    raise ValueError(f"unknown unit kind {unit_kind!r}")


def _check_compat(target, scheme: PerturbationScheme, unit_kind: str):
    kind = scheme.kind
    if isinstance(target, GraphSeries):
        if unit_kind != "node_time":
            raise IncompatibleSchemeError("series targets take node_time units")
        if isinstance(kind, RemoveEdges):
            raise IncompatibleSchemeError("edge removal is not defined for series targets")
        snaps = target.snapshots
    else:
        if unit_kind == "node_time":
            raise IncompatibleSchemeError("node_time units require a graph series")
        if unit_kind == "edge" and not isinstance(kind, RemoveEdges):
            raise IncompatibleSchemeError("edge units require an edge removal scheme")
        if unit_kind == "node" and isinstance(kind, RemoveEdges):
            raise IncompatibleSchemeError("edge removal cannot explain node units")
        snaps = (target,)
    for g in snaps:
        if isinstance(kind, RemoveNodes) and kind.k >= g.num_nodes:
            raise IncompatibleSchemeError(
                f"cannot remove {kind.k} of {g.num_nodes} nodes"
            )
        if isinstance(kind, RemoveEdges) and kind.k > len(g.edges):
            raise IncompatibleSchemeError(
                f"cannot remove {kind.k} of {len(g.edges)} edges"
            )
        if isinstance(kind, _NOISE_KINDS) and g.num_features == 0:
            raise IncompatibleSchemeError("feature noise needs at least one feature")
        if isinstance(kind, _RESAMPLE_KINDS):
            f = g.features
            if g.num_features < 2:
                raise IncompatibleSchemeError(
                    "category resampling needs one-hot features (d >= 2)"
                )
            one_hot = np.all((f == 0.0) | (f == 1.0)) and np.all(f.sum(axis=1) == 1.0)
            if not one_hot:
                raise IncompatibleSchemeError(
                    "category resampling needs one-hot features"
                )


def _walk_victims(g: Graph, walk_len: int, rng: np.random.Generator) -> list[int]:
    """Distinct nodes of one uniform-start walk, in first-visit order."""
    start = int(rng.integers(g.num_nodes))
    walk = random_walk(g, start, walk_len, rng)
    seen: list[int] = []
    for v in walk:
        if v not in seen:
            seen.append(v)
    return seen


def _choose_nodes(g: Graph, fraction: float, rng: np.random.Generator) -> list[int]:
    count = max(1, math.ceil(fraction * g.num_nodes))
    return sorted(int(v) for v in rng.choice(g.num_nodes, size=count, replace=False))


def _perturb_graph(
    g: Graph, kind: SchemeKind, rng: np.random.Generator
) -> tuple[Graph, PerturbationRecord]:
    if isinstance(kind, RemoveNodes):
        victims = sorted(int(v) for v in rng.choice(g.num_nodes, size=kind.k, replace=False))
        out, _ = remove_nodes(g, victims)
        return out, PerturbationRecord(removed_nodes=tuple(victims))
    if isinstance(kind, WalkRemoveNodes):
        victims = _walk_victims(g, kind.walk_len, rng)
        if len(victims) >= g.num_nodes:
            victims = victims[:-1]  # a walk may cover a tiny graph; keep one node
        out, _ = remove_nodes(g, victims)
        return out, PerturbationRecord(removed_nodes=tuple(sorted(victims)))
    if isinstance(kind, RemoveEdges):
        idx = rng.choice(len(g.edges), size=kind.k, replace=False)
        victims = sorted(g.edges[int(i)] for i in idx)
        return remove_edges(g, victims), PerturbationRecord(removed_edges=tuple(victims))
    if isinstance(kind, FeatureNoise):
        nodes = _choose_nodes(g, kind.node_fraction, rng)
        feats = g.features.copy()
        feats[nodes] += rng.normal(0.0, kind.noise_std, size=(len(nodes), g.num_features))
        return g.with_features(feats), PerturbationRecord(noised_nodes=tuple(nodes))
    if isinstance(kind, WalkFeatureNoise):
        nodes = sorted(_walk_victims(g, kind.walk_len, rng))
        feats = g.features.copy()
        feats[nodes] += rng.normal(0.0, kind.noise_std, size=(len(nodes), g.num_features))
        return g.with_features(feats), PerturbationRecord(noised_nodes=tuple(nodes))
    if isinstance(kind, ResampleCategories):
        nodes = _choose_nodes(g, kind.node_fraction, rng)
    elif isinstance(kind, WalkResampleCategories):
        nodes = sorted(_walk_victims(g, kind.walk_len, rng))
    else:
        raise TypeError(f"unknown scheme kind {type(kind).__name__}")
    feats = g.features.copy()
    cats = rng.integers(g.num_features, size=len(nodes))
    for v, c in zip(nodes, cats):
        feats[v] = 0.0
        feats[v, c] = 1.0
    return g.with_features(feats), PerturbationRecord(noised_nodes=tuple(nodes))


def _detach_nodes(g: Graph, victims: list[int]) -> Graph:
    """Remove a node's presence at one time step without renumbering.

    Snapshots of a series must share the node set, so per-snapshot removal
    drops the victims' incident edges and zeroes their features instead of
    deleting rows.
    """
    vs = set(victims)
    edges = tuple(e for e in g.edges if e[0] not in vs and e[1] not in vs)
    if g.num_features:
        feats = g.features.copy()
        feats[sorted(vs)] = 0.0
    else:
        feats = None
    return Graph(g.num_nodes, edges, feats)


def _perturb_series(
    s: GraphSeries, kind: SchemeKind, rng: np.random.Generator
) -> tuple[GraphSeries, PerturbationRecord]:
    t = int(rng.integers(len(s)))
    g = s.snapshots[t]
    if isinstance(kind, RemoveNodes):
        victims = sorted(int(v) for v in rng.choice(g.num_nodes, size=kind.k, replace=False))
        snap = _detach_nodes(g, victims)
        record = PerturbationRecord(removed_nodes=tuple(victims))
    elif isinstance(kind, WalkRemoveNodes):
        victims = sorted(_walk_victims(g, kind.walk_len, rng))
        snap = _detach_nodes(g, victims)
        record = PerturbationRecord(removed_nodes=tuple(victims))
    else:
        snap, record = _perturb_graph(g, kind, rng)
    snaps = list(s.snapshots)
    snaps[t] = snap
    return GraphSeries(tuple(snaps)), PerturbationRecord(
        removed_nodes=record.removed_nodes,
        removed_edges=record.removed_edges,
        noised_nodes=record.noised_nodes,
        time=t,
    )


def _unit_features_graph(
    g: Graph,
    units: tuple[UnitId, ...],
    unit_kind: str,
    scheme: PerturbationScheme,
    records: list[PerturbationRecord],
    perturbed: list[Graph],
) -> dict[UnitId, np.ndarray]:
    M = len(records)
    feats: dict[UnitId, np.ndarray] = {}
    fk = scheme.feature_kind
    if fk == "binary":
        if unit_kind == "node":
            removed = [set(r.removed_nodes) for r in records]
            for u in units:
                v = u.index[0]
                feats[u] = np.array([0.0 if v in removed[i] else 1.0 for i in range(M)])
        else:
            removed = [set(r.removed_edges) for r in records]
            for u in units:
                e = u.index
                feats[u] = np.array([0.0 if e in removed[i] else 1.0 for i in range(M)])
        return feats
    d = g.num_features
    stacked = np.stack([p.features for p in perturbed])  # (M, n, d)
    if fk == "continuous":
        for u in units:
            v = u.index[0]
            col = stacked[:, v, :]
            feats[u] = col[:, 0].copy() if d == 1 else col.copy()
    else:  # categorical: delta kernel on the category index
        idx = np.argmax(stacked, axis=2)  # (M, n)
        for u in units:
            feats[u] = idx[:, u.index[0]].astype(np.float64)
    return feats


def _unit_features_series(
    s: GraphSeries,
    units: tuple[UnitId, ...],
    scheme: PerturbationScheme,
    records: list[PerturbationRecord],
    perturbed: list[GraphSeries],
) -> dict[UnitId, np.ndarray]:
    M = len(records)
    fk = scheme.feature_kind
    feats: dict[UnitId, np.ndarray] = {}
    if fk == "binary":
        for u in units:
            v, t = u.index
            col = np.ones(M)
            for i, r in enumerate(records):
                if r.time == t and v in r.removed_nodes:
                    col[i] = 0.0
            feats[u] = col
        return feats
    d = s.snapshots[0].num_features
    # (M, T, n, d) would be wasteful; index directly
    if fk == "continuous":
        for u in units:
            v, t = u.index
            col = np.stack([p.snapshots[t].features[v] for p in perturbed])
            feats[u] = col[:, 0].copy() if d == 1 else col
    else:
        for u in units:
            v, t = u.index
            col = np.array(
                [float(np.argmax(p.snapshots[t].features[v])) for p in perturbed]
            )
            feats[u] = col
    return feats


def generate(
    target: Graph | GraphSeries,
    model: BlackBoxModel,
    scheme: PerturbationScheme,
    unit_kind: str,
    jobs: int = 1,
) -> AuxiliaryDataset:
    """Build the auxiliary dataset for one explanation.

    Draws m_samples - 1 perturbations (sample 0 is the original), asks the
    model about every sample, and projects each sample onto per-unit
    features.
    """
    units = enumerate_units(target, unit_kind)
    _check_compat(target, scheme, unit_kind)
    rng = np.random.default_rng(scheme.seed)
    is_series = isinstance(target, GraphSeries)
    records: list[PerturbationRecord] = [PerturbationRecord()]
    perturbed: list[Graph | GraphSeries] = [target]
    for _ in range(scheme.m_samples - 1):
        if is_series:
            p, rec = _perturb_series(target, scheme.kind, rng)
        else:
            p, rec = _perturb_graph(target, scheme.kind, rng)
        perturbed.append(p)
        records.append(rec)
    probs = model.predict_many(perturbed, jobs=jobs)
    predictions = np.stack(probs)
    if is_series:
        unit_features = _unit_features_series(target, units, scheme, records, perturbed)
    else:
        unit_features = _unit_features_graph(
            target, units, unit_kind, scheme, records, perturbed
        )
    if scheme.feature_kind == "binary" and units:
        varied = any(np.unique(f).size > 1 for f in unit_features.values())
        if not varied:
            warnings.warn(
                "vacuous scheme: no unit's existence varies across samples",
                RuntimeWarning,
                stacklevel=2,
            )
    return AuxiliaryDataset(
        units=units,
        records=records,
        predictions=predictions,
        unit_features=unit_features,
        feature_kind=scheme.feature_kind,
        scheme=scheme,
    )


# ---------------------------------------------------------------------------
# Walk-derived group structures


@dataclass(frozen=True)
class GroupStructure:
    """Overlapping groups of units for the latent group penalty."""

    groups: tuple[tuple[UnitId, ...], ...]

    def __post_init__(self):
        canon = tuple(tuple(sorted(set(g))) for g in self.groups)
        for g in canon:
            if not g:
                raise ValueError("empty group")
        object.__setattr__(self, "groups", canon)

    def covered(self) -> set[UnitId]:
        return {u for g in self.groups for u in g}


def walk_groups(
    g: Graph,
    n_walks: int,
    walk_len: int,
    seed: int = 0,
    unit_kind: str = "node",
) -> GroupStructure:
    """Groups from random walks: one group per walk.

    Node groups hold the distinct nodes visited; edge groups the distinct
    edges traversed.  Extra walks are drawn from uncovered units until
    every unit appears in some group (attempt cap 100 * n_walks, then
    singleton groups fill the gaps).
    """
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    if unit_kind not in ("node", "edge"):
        raise ValueError("walk groups cover node or edge units")
    rng = np.random.default_rng(seed)
    want: set[UnitId] = set(enumerate_units(g, unit_kind))
    groups: list[tuple[UnitId, ...]] = []
    covered: set[UnitId] = set()

    def walk_group(start: int) -> tuple[UnitId, ...]:
        walk = random_walk(g, start, walk_len, rng)
        if unit_kind == "node":
            return tuple(sorted({UnitId.node(v) for v in walk}))
        return tuple(sorted({UnitId.edge(a, b) for a, b in zip(walk, walk[1:])}))

    attempts = 0
    cap = 100 * n_walks
    while attempts < cap and (len(groups) < n_walks or covered != want):
        attempts += 1
        if len(groups) < n_walks:
            start = int(rng.integers(g.num_nodes))
        else:
            # aim the walk at something uncovered
            missing = sorted(want - covered)
            pick = missing[int(rng.integers(len(missing)))]
            start = pick.index[0]
        grp = walk_group(start)
        if not grp:
            continue
        if len(groups) < n_walks or any(u not in covered for u in grp):
            groups.append(grp)
            covered.update(grp)
    for u in sorted(want - covered):
        groups.append((u,))
    return GroupStructure(tuple(groups))


def replicate_groups_over_time(groups: GroupStructure, n_times: int) -> GroupStructure:
    """Node groups copied once per time step as node_time groups."""
    out = []
    for grp in groups.groups:
        for t in range(n_times):
            out.append(tuple(UnitId.node_time(u.index[0], t) for u in grp))
    return GroupStructure(tuple(out))
