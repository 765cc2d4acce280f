"""Is every tree or unicyclic instance over a support satisfiable?

For binary supports the question is decided exactly by two finite closures:

* the family of *achievable sets*: candidate sets a hanging tree can impose
  on its root.  It contains the full domain and is closed under images
  ``f_R(S) = {a : (a, b) in R for some b in S}`` and under intersection;
* the semigroup of relations generated by the allowed-pair relations (both
  orientations) and the diagonals of achievable sets.  A cycle with hanging
  trees is unsatisfiable exactly when the product along it has an empty
  diagonal.

``audit_bounded`` is a second, independent route: it enumerates trees and
cycles (any arity) up to a variable budget and decides every candidate with
the solver.  Candidates are grouped by the relation they induce between
their interface variables, and only the smallest candidate per relation is
extended.  Two pieces inducing the same interface relation are
interchangeable inside any larger instance, so nothing is lost.

Relations on ``{1..d}`` are int bitmasks with bit ``(a-1)*d + (b-1)`` for the
pair ``(a, b)``; sets are bitmasks with bit ``a-1``.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field

from .core import HAT, ConstraintDistribution, Instance
from .errors import CSPLabError, InputError, UnsupportedError
from .models import HypergraphH
from .solver import Compiled, homomorphic, is_homomorphism, solve
from .structure import TREE, UNICYCLIC, classify, hypergraph_instance

ALL_SATISFIABLE = "ALL-SATISFIABLE"
NO_COUNTEREXAMPLE = "NO-COUNTEREXAMPLE"
COUNTEREXAMPLE = "COUNTEREXAMPLE"


# ---------------------------------------------------------------- relations


def full_set(d: int) -> int:
    return (1 << d) - 1


def mask_to_set(mask: int) -> frozenset[int]:
    return frozenset(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


def diagonal(S: int, d: int) -> int:
    return sum(1 << (a * d + a) for a in range(d) if S >> a & 1)


def rows(Q: int, d: int) -> list[int]:
    full = full_set(d)
    return [(Q >> (a * d)) & full for a in range(d)]


def compose(Q1: int, Q2: int, d: int) -> int:
    """Pairs (a, c) with (a, b) in Q1 and (b, c) in Q2 for some b."""
    r2 = rows(Q2, d)
    out = 0
    for a, row in enumerate(rows(Q1, d)):
        acc = 0
        b = 0
        while row:
            if row & 1:
                acc |= r2[b]
            row >>= 1
            b += 1
        out |= acc << (a * d)
    return out


def restrict_columns(Q: int, S: int, d: int) -> int:
    """Q followed by the diagonal of S."""
    return sum((r & S) << (a * d) for a, r in enumerate(rows(Q, d)))


def diag_set(Q: int, d: int) -> int:
    return sum(1 << a for a in range(d) if Q >> (a * d + a) & 1)


def image(Q: int, S: int, d: int) -> int:
    """Values a with (a, b) in Q for some b in S."""
    return sum(1 << a for a, r in enumerate(rows(Q, d)) if r & S)


def relation_of(matrix) -> int:
    d = len(matrix)
    return sum(1 << (a * d + b) for a in range(d) for b in range(d) if matrix[a][b])


@dataclass(frozen=True)
class Generator:
    """Allowed-pair relation of support constraint ``cid`` read from the variable
    in position 1 to the one in position 2, or the reverse when ``transposed``."""

    cid: int
    transposed: bool
    rel: int


def generators(dist: ConstraintDistribution) -> list[Generator]:
    if dist.k != 2:
        raise UnsupportedError(f"binary audit needs k=2 (got k={dist.k}); use audit_bounded")
    out = []
    for cid, c in enumerate(dist.support):
        m = c.allowed_matrix()
        out.append(Generator(cid, False, relation_of(m)))
        out.append(Generator(cid, True, relation_of(m.T)))
    return out


# ---------------------------------------------------------- witness building


class _Builder:
    """Accumulates edges over fresh variables; ``merge`` identifies two variables."""

    def __init__(self):
        self.nv = 0
        self.edges: list[tuple[tuple[int, ...], int]] = []
        self.parent: list[int] = []

    def new(self) -> int:
        self.parent.append(self.nv)
        self.nv += 1
        return self.nv - 1

    def find(self, v: int) -> int:
        while self.parent[v] != v:
            v = self.parent[v]
        return v

    def merge(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)
        return min(a, b)

    def add(self, vs: tuple[int, ...], cid: int) -> None:
        self.edges.append((vs, cid))

    def instance(self, dist: ConstraintDistribution) -> tuple[Instance, dict[int, int]]:
        roots = sorted({self.find(v) for v in range(self.nv)})
        relabel = {r: i for i, r in enumerate(roots)}
        lab = {v: relabel[self.find(v)] for v in range(self.nv)}
        edges = tuple((tuple(lab[v] for v in vs), cid) for vs, cid in self.edges)
        inst = Instance(len(roots), dist.d, dist.k, edges, tuple(dist.support), HAT)
        return inst, lab


# ------------------------------------------------------------ achievable sets


@dataclass
class SetFamily:
    d: int
    size: dict[int, int]          # set mask -> variables in the smallest known tree
    how: dict[int, tuple]         # derivation of that tree

    @property
    def masks(self) -> list[int]:
        return sorted(self.size, key=lambda S: (self.size[S], S))

    @property
    def sets(self) -> frozenset[frozenset[int]]:
        return frozenset(mask_to_set(S) for S in self.size)

    def __contains__(self, S) -> bool:
        if not isinstance(S, int):
            S = sum(1 << (x - 1) for x in S)
        return S in self.size

    def realize(self, S: int, b: _Builder) -> int:
        """Add a tree whose root's arc-consistent candidate set is ``S``; return the root."""
        kind = self.how[S]
        if kind[0] == "full":
            return b.new()
        if kind[0] == "image":
            _, g, child = kind
            root = b.new()
            sub = self.realize(child, b)
            b.add((sub, root) if g.transposed else (root, sub), g.cid)
            return root
        _, S1, S2 = kind
        return b.merge(self.realize(S1, b), self.realize(S2, b))


def achievable_sets(dist: ConstraintDistribution) -> SetFamily:
    """Closure of the full domain under generator images and intersection,
    with a smallest-tree derivation for every member."""
    d = dist.d
    gens = generators(dist)
    full = full_set(d)
    size = {full: 1}
    how: dict[int, tuple] = {full: ("full",)}
    changed = True
    while changed:
        changed = False
        items = sorted(size.items())
        for S, s in items:
            for g in gens:
                T = image(g.rel, S, d)
                if size.get(T, 1 << 60) > s + 1:
                    size[T], how[T] = s + 1, ("image", g, S)
                    changed = True
        items = sorted(size.items())
        for (S1, s1), (S2, s2) in itertools.combinations(items, 2):
            T = S1 & S2
            if size.get(T, 1 << 60) > s1 + s2 - 1:
                size[T], how[T] = s1 + s2 - 1, ("meet", S1, S2)
                changed = True
    assert len(size) <= 1 << d
    return SetFamily(d, size, how)


# ------------------------------------------------------------------ results


@dataclass(frozen=True)
class AuditResult:
    verdict: str
    witness: Instance | None = None
    kind: str | None = None            # "tree" or "cycle" for counterexamples
    max_vars: int | None = None
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.verdict != COUNTEREXAMPLE

    def summary(self) -> str:
        if self.verdict == COUNTEREXAMPLE:
            return f"{COUNTEREXAMPLE} {self.kind} n={self.witness.n} m={self.witness.m}"
        if self.verdict == NO_COUNTEREXAMPLE:
            return f"{NO_COUNTEREXAMPLE} up to {self.max_vars} variables"
        return ALL_SATISFIABLE


def _certify(inst: Instance, kind: str) -> AuditResult:
    """Re-check a witness: tree or unicyclic, and unsatisfiable."""
    shape = classify(inst).kind
    if shape not in (TREE, UNICYCLIC):
        raise CSPLabError(f"audit witness is {shape}, expected tree or unicyclic")
    if solve(inst).status != "unsat":
        raise CSPLabError("audit witness is satisfiable")
    return AuditResult(COUNTEREXAMPLE, inst, kind)


# ------------------------------------------------------------- binary audit


def relation_semigroup(dist: ConstraintDistribution, family: SetFamily | None = None):
    """Breadth-first closure over words ``D_S0 (R1 D_S1) (R2 D_S2) ...``.

    States are (relation, number of R factors capped at 2).  Returns
    ``(parent, order)`` where ``parent[state]`` is ``(previous state, (generator, S))``
    or ``(None, S0)`` for a start state.
    """
    d = dist.d
    fam = family or achievable_sets(dist)
    gens = generators(dist)
    blocks = [(g, S) for g in gens for S in fam.masks]
    parent: dict[tuple[int, int], tuple] = {}
    order = []
    q = deque()
    for S0 in fam.masks:
        st = (diagonal(S0, d), 0)
        if st not in parent:
            parent[st] = (None, S0)
            q.append(st)
    cap = 3 << (d * d)
    while q:
        st = q.popleft()
        order.append(st)
        rel, cnt = st
        for g, S in blocks:
            nxt = (restrict_columns(compose(rel, g.rel, d), S, d), min(cnt + 1, 2))
            if nxt not in parent:
                parent[nxt] = (st, (g, S))
                q.append(nxt)
                if len(parent) > cap:
                    raise CSPLabError("relation closure exceeded 2^(d^2) elements")
    return parent, order


def audit_binary(dist: ConstraintDistribution) -> AuditResult:
    """Exact verdict for k=2 (hat model, so two constraints on one pair form a 2-cycle)."""
    d = dist.d
    fam = achievable_sets(dist)
    if 0 in fam.size:
        b = _Builder()
        fam.realize(0, b)
        inst, _ = b.instance(dist)
        return _certify(inst, "tree")
    parent, order = relation_semigroup(dist, fam)
    for st in order:
        rel, cnt = st
        if cnt == 2 and diag_set(rel, d) == 0:
            return _certify(_cycle_witness(dist, fam, parent, st), "cycle")
    return AuditResult(ALL_SATISFIABLE, stats={"sets": len(fam.size), "relations": len(parent)})


def _cycle_witness(dist, fam: SetFamily, parent, st) -> Instance:
    blocks = []
    while parent[st][0] is not None:
        st, blk = parent[st]
        blocks.append(blk)
    blocks.reverse()
    b = _Builder()
    cycle = [fam.realize(parent[st][1], b)]
    for i, (g, S) in enumerate(blocks):
        nxt = fam.realize(S, b)
        if i == len(blocks) - 1:
            nxt = b.merge(cycle[0], nxt)
        cur = cycle[-1]
        b.add((nxt, cur) if g.transposed else (cur, nxt), g.cid)
        cycle.append(nxt)
    inst, _ = b.instance(dist)
    return inst


# ------------------------------------------------------------ bounded audit


@dataclass(frozen=True)
class _Frag:
    """A small instance over support ids with marked variables ``start`` and ``end``."""

    n: int
    edges: tuple[tuple[tuple[int, ...], int], ...]
    start: int = 0
    end: int = 0

    def shift(self, off: int) -> tuple[tuple[tuple[int, ...], int], ...]:
        return tuple((tuple(v + off for v in vs), c) for vs, c in self.edges)


class _Oracle:
    def __init__(self, dist: ConstraintDistribution):
        self.dist = dist
        self.table = tuple(dist.support)
        self.solves = 0
        self.memo: dict[tuple, int] = {}

    def instance(self, f: _Frag) -> Instance:
        return Instance(f.n, self.dist.d, self.dist.k, f.edges, self.table, HAT)

    def projection(self, f: _Frag) -> int:
        key = ("p", f)
        if key not in self.memo:
            self.memo[key] = self._projection(f)
        return self.memo[key]

    def _projection(self, f: _Frag) -> int:
        comp = Compiled(self.instance(f))
        out = 0
        for a in range(1, self.dist.d + 1):
            self.solves += 1
            if comp.sat({f.start: a}):
                out |= 1 << (a - 1)
        return out

    def relation(self, f: _Frag) -> int:
        d = self.dist.d
        comp = Compiled(self.instance(f))
        out = 0
        for a in range(1, d + 1):
            self.solves += 1
            if not comp.sat({f.start: a}):
                continue
            for b in range(1, d + 1):
                self.solves += 1
                if comp.sat({f.start: a, f.end: b}):
                    out |= 1 << ((a - 1) * d + (b - 1))
        return out


def _attach(base: _Frag, cid: int, slots: dict[int, int], fill: dict[int, _Frag], k: int):
    """Add one edge: positions in ``slots`` take existing variables of ``base``,
    positions in ``fill`` take the roots of fresh copies of those trees.
    Returns the new fragment and the variable at each position."""
    n = base.n
    edges = list(base.edges)
    pos = [-1] * k
    for p, v in slots.items():
        pos[p] = v
    for p in range(k):
        if p in fill:
            t = fill[p]
            edges.extend(t.shift(n))
            pos[p] = n + t.start
            n += t.n
    if min(pos) < 0:
        raise CSPLabError("bounded audit: unfilled edge position")
    edges.append((tuple(pos), cid))
    return _Frag(n, tuple(edges), base.start, base.end), pos


def audit_bounded(dist: ConstraintDistribution, max_vars: int) -> AuditResult:
    """Exhaustive search for an unsatisfiable tree or unicyclic hat instance with
    at most ``max_vars`` variables, any arity k >= 2."""
    k, d = dist.k, dist.d
    if k < 2:
        raise InputError("audit needs arity k >= 2")
    if max_vars < 1:
        raise InputError("max_vars must be positive")
    orc = _Oracle(dist)
    cids = range(len(dist.support))

    # rooted trees, keyed by the candidate set they leave at the root
    trees: dict[int, _Frag] = {full_set(d): _Frag(1, ())}
    changed = True
    while changed:
        changed = False
        snap = sorted(trees.items(), key=lambda kv: (kv[1].n, kv[0]))
        for _, base in snap:
            for cid in cids:
                for j in range(k):
                    for combo in itertools.product([t for _, t in snap], repeat=k - 1):
                        if base.n + sum(t.n for t in combo) > max_vars:
                            continue
                        others = [p for p in range(k) if p != j]
                        frag, _ = _attach(base, cid, {j: base.start}, dict(zip(others, combo)), k)
                        proj = orc.projection(frag)
                        old = trees.get(proj)
                        if old is None or frag.n < old.n:
                            trees[proj] = frag
                            changed = True
    if 0 in trees:
        return _certify(orc.instance(trees[0]), "tree")

    tree_list = sorted(trees.values(), key=lambda t: t.n)
    # edge blocks: support id, entry position, exit position, subtrees elsewhere
    blocks = []
    for cid in cids:
        for p, q in itertools.permutations(range(k), 2):
            for combo in itertools.product(tree_list, repeat=k - 2):
                others = [x for x in range(k) if x not in (p, q)]
                blocks.append((cid, p, q, dict(zip(others, combo)), 1 + sum(t.n for t in combo)))
    blocks.sort(key=lambda b: b[4])

    # paths from start to end with at least one edge, keyed by induced relation
    best: dict[int, _Frag] = {}
    heap = []
    tick = itertools.count()

    def extend(path: _Frag):
        for cid, p, q, combo, extra in blocks:
            for t in tree_list:
                if path.n + extra - 1 + t.n > max_vars:
                    continue
                frag, pos = _attach(path, cid, {p: path.end}, {**combo, q: t}, k)
                frag = _Frag(frag.n, frag.edges, frag.start, pos[q])
                rel = orc.relation(frag)
                old = best.get(rel)
                if old is None or frag.n < old.n:
                    best[rel] = frag
                    heapq.heappush(heap, (frag.n, next(tick), rel))

    for t in tree_list:
        extend(_Frag(t.n, t.edges, t.start, t.start))
    done = set()
    while heap:
        n, _, rel = heapq.heappop(heap)
        if rel in done or best[rel].n != n:
            continue
        done.add(rel)
        extend(best[rel])

    # close each path with one more edge back to its start
    witness = None
    for rel in sorted(best, key=lambda r: (best[r].n, r)):
        path = best[rel]
        for cid, p, q, combo, extra in blocks:
            total = path.n + extra - 1
            if total > max_vars or (witness is not None and total >= witness.n):
                continue
            frag, _ = _attach(path, cid, {p: path.end, q: path.start}, combo, k)
            if frag.n != total:
                raise CSPLabError("bounded audit: size bookkeeping")
            orc.solves += 1
            if not Compiled(orc.instance(frag)).sat():
                witness = frag
    stats = {"tree_classes": len(trees), "path_classes": len(best), "solves": orc.solves}
    if witness is not None:
        res = _certify(orc.instance(witness), "cycle")
        return AuditResult(res.verdict, res.witness, res.kind, max_vars, stats)
    return AuditResult(NO_COUNTEREXAMPLE, max_vars=max_vars, stats=stats)


def audit(dist: ConstraintDistribution, max_vars: int = 8) -> AuditResult:
    """Exact closure audit for k=2, bounded enumeration otherwise."""
    if dist.k == 2:
        return audit_binary(dist)
    return audit_bounded(dist, max_vars)


# ------------------------------------------------------ explicit homomorphisms


def _as_instance(G) -> Instance:
    return hypergraph_instance(G) if isinstance(G, HypergraphH) else G


def single_edge(k: int) -> HypergraphH:
    return HypergraphH.from_edges(k, [tuple(range(1, k + 1))], k)


def unicyclic_homomorphism(G) -> dict[int, int]:
    """Map a unicyclic hypergraph with k >= 3 onto the single edge ``(1, ..., k)``.

    Around the cycle ``v0, ..., v_{r-1}`` the images alternate 1, 2, 1, ...
    and the last cycle vertex gets 3; every edge then fills its remaining
    positions with the unused values, hanging trees included.  Keys are
    variables of the instance (vertex - 1 for a HypergraphH input).
    """
    inst = _as_instance(G)
    if inst.k < 3:
        raise InputError(f"needs k >= 3 (got k={inst.k})")
    if any(len(vs) != inst.k for vs, _ in inst.edges):
        raise InputError("needs a k-uniform hypergraph")
    cls = classify(inst)
    if cls.kind != UNICYCLIC:
        raise InputError(f"input is {cls.kind}, not unicyclic")
    r = len(cls.vertices)
    h: dict[int, int] = {}
    for i, v in enumerate(cls.vertices):
        h[v] = 3 if i == r - 1 else 1 + i % 2
    values = set(range(1, inst.k + 1))
    inc = inst.incidence()
    placed = [False] * inst.m
    q = deque()
    for e in cls.edges:
        placed[e] = True
        q.append(e)
    while q:
        e = q.popleft()
        vs = inst.edges[e][0]
        free = sorted(values - {h[v] for v in vs if v in h})
        for v in vs:
            if v not in h:
                h[v] = free.pop(0)
        for v in vs:
            for f in inc[v]:
                if not placed[f]:
                    placed[f] = True
                    q.append(f)
    for vs, _ in inst.edges:
        if sorted(h[v] for v in vs) != sorted(values):
            raise CSPLabError(f"edge {vs} is not mapped onto the target edge")
    return h


def verify_homomorphism(G, H: HypergraphH, h: dict[int, int]) -> bool:
    """Direct check plus an independent existence check by the solver."""
    inst = _as_instance(G)
    graph = HypergraphH.from_edges(max(inst.n, 1), [tuple(v + 1 for v in vs) for vs, _ in inst.edges], inst.k)
    direct = is_homomorphism(graph, H, {v + 1: h[v] for v in range(inst.n) if v in h})
    return direct and homomorphic(inst, H) is not None


def find_triangle(H: HypergraphH) -> tuple[int, int, int] | None:
    adj = H.neighbors()
    for a in sorted(adj):
        for b in sorted(adj[a]):
            if b <= a:
                continue
            common = sorted(x for x in adj[a] & adj[b] if x > b)
            if common:
                return a, b, common[0]
    return None


def _walk_to(adj: dict[int, set[int]], src: int, dst: int, length: int) -> list[int]:
    """A walk of exactly ``length`` steps from src to dst, or [] if none exists."""
    reach = [{dst}]
    for _ in range(length):
        reach.append({x for y in reach[-1] for x in adj[y]})
    if src not in reach[length]:
        return []
    walk = [src]
    for j in range(length - 1, -1, -1):
        walk.append(min(x for x in adj[walk[-1]] if x in reach[j]))
    return walk


def distance_homomorphism(M, H: HypergraphH, u: int, r: int) -> dict[int, int]:
    """A homomorphism of the unicyclic graph M into H sending every vertex at
    distance exactly r from M's cycle to ``u``.

    The cycle goes onto a triangle of H; each vertex at distance j <= r hangs
    off a unique cycle vertex w' and is sent to step j of a fixed walk of
    length r from h(w') to u.  Farther vertices copy their parent's walk
    predecessor.  Keys are variables of M (vertex - 1 for a HypergraphH).
    """
    inst = _as_instance(M)
    if inst.k != 2 or H.k != 2:
        raise InputError("distance homomorphism is for graphs (k=2)")
    if not 1 <= u <= H.d:
        raise InputError(f"u={u} is not a vertex of H")
    if r < H.d + 3:
        raise InputError(f"needs r >= |V(H)| + 3 = {H.d + 3}")
    tri = find_triangle(H)
    if tri is None:
        raise InputError("H has no triangle")
    adj = H.neighbors()
    cls = classify(inst)
    if cls.kind != UNICYCLIC:
        raise InputError(f"M is {cls.kind}, not unicyclic")
    L = len(cls.vertices)
    h: dict[int, int] = {}
    for i, v in enumerate(cls.vertices):
        h[v] = tri[2] if (L % 2 and i == L - 1) else tri[i % 2]
    walks = {}
    for t in set(h.values()):
        w = _walk_to(adj, t, u, r)
        if not w:
            raise InputError(f"H has no walk of length {r} from {t} to {u}; is H connected?")
        walks[t] = w
    # BFS outward from the cycle; each vertex remembers its cycle root and depth
    root = {v: v for v in cls.vertices}
    depth = {v: 0 for v in cls.vertices}
    parent: dict[int, int] = {}
    inc = inst.incidence()
    q = deque(cls.vertices)
    while q:
        v = q.popleft()
        for e in inc[v]:
            for w in inst.edges[e][0]:
                if w not in depth:
                    depth[w], root[w], parent[w] = depth[v] + 1, root[v], v
                    q.append(w)
    for v in sorted(depth, key=depth.get):
        if depth[v] == 0:
            continue
        j = depth[v]
        if j <= r:
            h[v] = walks[h[root[v]]][j]
        else:
            h[v] = walks[h[root[v]]][r - 1] if j % 2 == (r + 1) % 2 else u
    for vs, _ in inst.edges:
        a, b = (h[x] for x in vs)
        if b not in adj[a]:
            raise CSPLabError(f"edge {vs} maps to non-edge ({a}, {b})")
    return h
