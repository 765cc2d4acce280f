"""Constraint-hypergraph analytics.

A cycle is a closed walk ``v0, e1, v1, ..., er, v0`` with distinct edges and
distinct vertices, so two edges sharing two variables already form a cycle
of size 2.  Equivalently: the bipartite variable/edge incidence graph has a
cycle.  For a connected instance that gives the counting rule used by
``classify``: with edge sizes k_i and v variables, ``sum(k_i - 1)`` equals
``v - 1`` for a hypertree and ``v`` for a unicyclic instance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Instance
from .errors import InputError

TREE = "tree"
UNICYCLIC = "unicyclic"
MULTICYCLIC = "multicyclic"


class _DSU:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> bool:
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        if b < a:
            a, b = b, a
        self.parent[b] = a
        return True


def components(inst: Instance) -> list[frozenset[int]]:
    """Connected components of the constraint hypergraph, largest first
    (ties by smallest variable)."""
    dsu = _DSU(inst.n)
    for vs, _ in inst.edges:
        for v in vs[1:]:
            dsu.union(vs[0], v)
    groups: dict[int, list[int]] = {}
    for v in range(inst.n):
        groups.setdefault(dsu.find(v), []).append(v)
    out = [frozenset(g) for g in groups.values()]
    out.sort(key=lambda g: (-len(g), min(g)))
    return out


def largest_component_size(inst: Instance) -> int:
    return len(components(inst)[0]) if inst.n else 0


@dataclass(frozen=True)
class Classification:
    kind: str
    # For unicyclic: cycle vertices v0..v_{r-1} and edges e1..er, where edge
    # ``edges[i]`` contains ``vertices[i]`` and ``vertices[(i + 1) % r]``.
    vertices: tuple[int, ...] = ()
    edges: tuple[int, ...] = ()

    @property
    def walk(self) -> tuple[int, ...]:
        """``(v0, e1, v1, ..., er, v0)`` with edges as edge indices."""
        out: list[int] = []
        for v, e in zip(self.vertices, self.edges):
            out += [v, e]
        return tuple(out + [self.vertices[0]]) if self.vertices else ()


def excess(inst: Instance) -> int:
    """``sum(k_i - 1) - (n - 1)``: 0 for a hypertree, 1 for unicyclic (when connected)."""
    return sum(len(vs) - 1 for vs, _ in inst.edges) - (inst.n - 1)


def classify(inst: Instance) -> Classification:
    """Tree / unicyclic (with its cycle) / multicyclic for a connected instance."""
    if inst.n == 0:
        raise InputError("classify needs at least one variable")
    if len(components(inst)) != 1:
        raise InputError("classify needs a connected instance; classify each component separately")
    x = excess(inst)
    if x == 0:
        return Classification(TREE)
    if x > 1:
        return Classification(MULTICYCLIC)
    verts, edges = find_cycle(inst)
    return Classification(UNICYCLIC, verts, edges)


def find_cycle(inst: Instance) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """The cycle of a unicyclic instance, found by peeling leaves of the incidence graph.

    Incidence nodes are variables ``0..n-1`` and edges ``n..n+m-1``.  The
    walk starts at the smallest cycle variable and leaves through its
    lower-numbered cycle edge.
    """
    n, m = inst.n, inst.m
    adj: list[list[int]] = [[] for _ in range(n + m)]
    for i, (vs, _) in enumerate(inst.edges):
        for v in vs:
            adj[v].append(n + i)
            adj[n + i].append(v)
    deg = [len(a) for a in adj]
    alive = [True] * (n + m)
    leaves = deque(x for x in range(n + m) if deg[x] <= 1)
    while leaves:
        x = leaves.popleft()
        if not alive[x]:
            continue
        alive[x] = False
        for y in adj[x]:
            if alive[y]:
                deg[y] -= 1
                if deg[y] == 1:
                    leaves.append(y)
    left = [x for x in range(n + m) if alive[x]]
    if not left:
        raise InputError("instance has no cycle")
    if any(deg[x] != 2 for x in left):
        raise InputError("instance has more than one cycle")
    start = min(x for x in left if x < n)
    verts, edges = [start], []
    prev, cur = -1, start
    while True:
        nxt = min(y for y in adj[cur] if alive[y] and y != prev)
        if cur < n:
            edges.append(nxt - n)
        elif nxt == start:
            break
        else:
            verts.append(nxt)
        prev, cur = cur, nxt
    return tuple(verts), tuple(edges)


def distances(inst: Instance, sources: Iterable[int], limit: int | None = None) -> list[int]:
    """BFS distance from the source set (walk length over hyperedges); -1 if
    unreachable or beyond ``limit``."""
    inc = inst.incidence()
    dist = [-1] * inst.n
    q = deque()
    for s in sources:
        if not 0 <= s < inst.n:
            raise InputError(f"source {s} outside 0..{inst.n - 1}")
        if dist[s] < 0:
            dist[s] = 0
            q.append(s)
    used = [False] * inst.m
    while q:
        v = q.popleft()
        if limit is not None and dist[v] >= limit:
            continue
        for e in inc[v]:
            if used[e]:
                continue
            used[e] = True
            for u in inst.edges[e][0]:
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    q.append(u)
    return dist


def contract(inst: Instance, groups: Sequence[Iterable[int]], allow_repeats: bool = False) -> Instance:
    """Merge each group of variables into one fresh variable.

    Ungrouped variables keep their relative order and come first; group g
    becomes variable ``len(ungrouped) + g``.  An edge that ends up with a
    repeated variable is an input error unless ``allow_repeats``, in which
    case it is rewritten as a constraint on its distinct variables.
    """
    from .solver import collapse_repeats

    groups = [sorted(set(g)) for g in groups]
    owner: dict[int, int] = {}
    for gi, g in enumerate(groups):
        if not g:
            raise InputError(f"group {gi} is empty")
        for v in g:
            if not 0 <= v < inst.n:
                raise InputError(f"variable {v} outside 0..{inst.n - 1}")
            if v in owner:
                raise InputError(f"variable {v} appears in two groups")
            owner[v] = gi
    rest = [v for v in range(inst.n) if v not in owner]
    relabel = {v: i for i, v in enumerate(rest)}
    for v, gi in owner.items():
        relabel[v] = len(rest) + gi
    new = []
    for i, (vs, cid) in enumerate(inst.edges):
        ws = tuple(relabel[v] for v in vs)
        c = inst.table[cid]
        if len(set(ws)) != len(ws):
            if not allow_repeats:
                _, c2 = collapse_repeats(ws, c)
                note = " (no value satisfies it)" if c2.nres == c2.size else ""
                raise InputError(f"edge {i} becomes a repeated-variable edge {ws}{note}")
            ws, c = collapse_repeats(ws, c)
        new.append((ws, c))
    empty = Instance(len(rest) + len(groups), inst.d, inst.k, flavor=inst.flavor)
    try:
        return empty.add_edges(new)
    except InputError:
        # merging can put two constraints on one tuple; that is a hat instance
        return empty.with_flavor("hat").add_edges(new)


def is_forest(inst: Instance, edge_ids: Iterable[int] | None = None) -> bool:
    """True iff the (sub)hypergraph has no cycle, i.e. its incidence graph is a forest."""
    dsu = _DSU(inst.n)
    ids = range(inst.m) if edge_ids is None else edge_ids
    for e in ids:
        vs = inst.edges[e][0]
        for v in vs[1:]:
            if not dsu.union(vs[0], v):
                return False
    return True


@dataclass(frozen=True)
class NeighborhoodStats:
    max_one_var_per_edge: bool
    forest_within_r: bool
    ball_size: int
    within_bound: bool | None = None


def ball_size_bound(c: float, t: int, r: int, eps: float) -> float:
    """A size L with Pr(ball of radius r around t roots has more than L vertices) <= eps/2,
    from Markov's inequality on the expected ball size ``t * sum_{i<=r} c^i``
    (the root layer included)."""
    if eps <= 0:
        raise InputError("eps must be positive")
    mean = t * sum(c**i for i in range(r + 1))
    return 2 * mean / eps


def neighborhood_stats(inst: Instance, T: Sequence[int], r: int, L: float | None = None) -> NeighborhoodStats:
    """The three local events around a variable set ``T``: no edge holds two of
    ``T``; the edges inside the radius-``r`` ball form a forest; the ball size
    (compared with ``L`` when given)."""
    Tset = set(T)
    one = all(sum(v in Tset for v in vs) <= 1 for vs, _ in inst.edges)
    dist = distances(inst, Tset, limit=r)
    ball = {v for v, x in enumerate(dist) if 0 <= x <= r}
    inside = [e for e, (vs, _) in enumerate(inst.edges) if all(v in ball for v in vs)]
    forest = is_forest(inst, inside)
    size = len(ball)
    return NeighborhoodStats(one, forest, size, None if L is None else size <= L)


def random_t_set(n: int, t: int, rng: np.random.Generator) -> list[int]:
    return sorted(int(x) for x in rng.choice(n, size=t, replace=False))


def census(inst: Instance) -> list[tuple[int, int, str]]:
    """(size, edge count, class) per component, largest first."""
    inc = inst.incidence()
    out = []
    for comp in components(inst):
        eids = sorted({e for v in comp for e in inc[v]})
        k_sum = sum(len(inst.edges[e][0]) - 1 for e in eids)
        x = k_sum - (len(comp) - 1)
        kind = TREE if x == 0 else UNICYCLIC if x == 1 else MULTICYCLIC
        out.append((len(comp), len(eids), kind))
    return out


def to_dot(inst: Instance) -> str:
    """Incidence graph in DOT: circles for variables, boxes for constraints."""
    lines = ["graph incidence {"]
    for v in range(inst.n):
        lines.append(f'  x{v} [label="{v}"];')
    for i, (vs, cid) in enumerate(inst.edges):
        lines.append(f'  c{i} [shape=box,label="C{cid}"];')
        for v in vs:
            lines.append(f"  c{i} -- x{v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def hypergraph_instance(G) -> Instance:
    """Constraint hypergraph of a simple HypergraphH (vertex v becomes variable v - 1),
    every edge carrying the same trivial constraint."""
    from .core import Constraint

    c = Constraint.empty(1, G.k)
    edges = [tuple(v - 1 for v in e) for e in sorted(G.edges)]
    return Instance(G.d, 1, G.k, flavor="hat").add_edges((e, c) for e in edges)


def random_hypertree_edges(k: int, m: int, rng: np.random.Generator) -> tuple[int, list[tuple[int, ...]]]:
    """A random k-uniform hypertree with m edges, grown by attaching each new
    edge at one existing vertex.  Returns (vertex count, edges on 0..v-1)."""
    nv = 1
    edges = []
    for _ in range(m):
        anchor = int(rng.integers(nv))
        e = [anchor] + list(range(nv, nv + k - 1))
        nv += k - 1
        rng.shuffle(e)
        edges.append(tuple(e))
    return nv, edges


def random_unicyclic_edges(k: int, m: int, rng: np.random.Generator) -> tuple[int, list[tuple[int, ...]]]:
    """A random connected k-uniform unicyclic hypergraph with m >= 2 edges: a
    hypertree plus one edge through two existing vertices.  Vertices are
    relabelled uniformly at random."""
    if m < 2 or (k == 2 and m < 3):
        raise InputError("need m >= 2 edges (m >= 3 for graphs)")
    while True:
        nv, edges = random_hypertree_edges(k, m - 1, rng)
        a, b = (int(x) for x in rng.choice(nv, size=2, replace=False))
        if k == 2 and ((a, b) in edges or (b, a) in edges):
            continue
        e = [a, b] + list(range(nv, nv + k - 2))
        nv += k - 2
        rng.shuffle(e)
        edges.append(tuple(e))
        perm = rng.permutation(nv)
        return nv, [tuple(int(perm[v]) for v in e) for e in edges]
