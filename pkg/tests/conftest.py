import numpy as np
from hypothesis import strategies as st

from hsic_explain.graphs import Graph, UnitId
from hsic_explain.kernels import center_normalize, gaussian_gram
from hsic_explain.solvers import SolverProblem


def random_problem(rng, num_units, m_samples, degenerate=()):
    """Solver problem from random scalar features, one Gaussian gram per unit.

    Units listed in `degenerate` get a constant feature column, which centers
    to the zero gram.
    """
    atoms = []
    for j in range(num_units):
        col = np.zeros((m_samples, 1)) if j in degenerate else rng.normal(size=(m_samples, 1))
        atoms.append((UnitId.node(j), center_normalize(gaussian_gram(col, sigma=1.0))))
    y = rng.normal(size=(m_samples, 1))
    target = center_normalize(gaussian_gram(y, sigma=1.0))
    return SolverProblem.from_grams(atoms, target)


@st.composite
def graphs(draw, min_nodes=1, max_nodes=12, max_features=3, connected=False):
    n = draw(st.integers(min_value=min_nodes, max_value=max_nodes))
    all_pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = draw(st.sets(st.sampled_from(all_pairs)) if all_pairs else st.just(set()))
    edges = set(edges)
    if connected and n > 1:
        # thread a random spanning path through every node
        order = draw(st.permutations(list(range(n))))
        for a, b in zip(order, order[1:]):
            edges.add((min(a, b), max(a, b)))
    d = draw(st.integers(min_value=0, max_value=max_features))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    feats = np.random.default_rng(seed).normal(size=(n, d)) if d else None
    return Graph(n, tuple(sorted(edges)), feats)
