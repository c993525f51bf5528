"""Random instance generators shared by the tests."""

import numpy as np

from auxamg.topology import ELASTICITY, SCALAR, Agglomeration, AuxTopology, kernel_dim


def random_psd(rng, k, rank=None):
    rank = k if rank is None else rank
    g = rng.standard_normal((k, rank))
    return g @ g.T


def random_topology(rng, kind=SCALAR, d=2, n=8, extra_edges=6, vertex_weights=False, n_dirichlet=0):
    """Connected random topology: a random spanning path plus extra edges."""
    k = 1 if kind == SCALAR else kernel_dim(kind, d)
    perm = rng.permutation(n)
    pairs = {tuple(sorted((int(perm[i]), int(perm[i + 1])))) for i in range(n - 1)}
    for _ in range(extra_edges):
        i, j = rng.choice(n, 2, replace=False)
        pairs.add(tuple(sorted((int(i), int(j)))))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    ew = np.array([random_psd(rng, k) for _ in range(len(edges))]).reshape(-1, k, k)
    if vertex_weights:
        vw = np.array([random_psd(rng, k) * rng.uniform(0, 1) for _ in range(n)])
    else:
        vw = np.zeros((n, k, k))
    dirichlet = np.zeros(n, dtype=bool)
    if n_dirichlet:
        dirichlet[rng.choice(n, n_dirichlet, replace=False)] = True
    return AuxTopology(kind, rng.uniform(0, 1, (n, d)), vw, edges, ew, dirichlet)


def random_agglomeration(rng, topo, drop_fraction=0.1, centroids=True):
    """Random partition of the non-Dirichlet vertices (some extra vertices dropped)."""
    n = topo.n_vertices
    free = [i for i in range(n) if not topo.dirichlet[i] and rng.uniform() > drop_fraction]
    free = list(rng.permutation(free))
    members = []
    while free:
        size = int(rng.integers(1, 5))
        members.append(np.array(sorted(int(v) for v in free[:size])))
        free = free[size:]
    if centroids:
        return Agglomeration.from_members(members, n, fine_positions=topo.positions)
    pos = rng.uniform(0, 1, (len(members), topo.dim))
    return Agglomeration.from_members(members, n, positions=pos)


def path_topology(n, weight=1.0, h=1.0, dirichlet=()):
    """Scalar path 0-1-...-(n-1) with equal edge weights and zero vertex weights."""
    edges = np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64).reshape(-1, 2)
    flags = np.zeros(n, dtype=bool)
    flags[list(dirichlet)] = True
    return AuxTopology(SCALAR, np.arange(n, dtype=float)[:, None] * h, np.zeros((n, 1, 1)),
                       edges, np.full((len(edges), 1, 1), weight), flags)


KINDS = [(SCALAR, 2), (ELASTICITY, 2), (ELASTICITY, 3)]
