"""Forcing chains in binary instances.

``v:a`` forces ``u:b`` when some constraint on (v, u), with v assigned a,
leaves b as u's only allowed value.  Chains of forcings are explored by BFS
over (variable, value) states.  At value level the same rows give a digraph
on {1..d}; weighted by how often each forcing constraint meets a variable it
is a multitype branching process whose mean offspring matrix decides whether
forced sets grow to linear size.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .core import PLAIN, ConstraintDistribution, Instance
from .errors import InputError, UnsupportedError
from .sampler import GenSpec, derive_seed, sample, trial_rng
from .solver import solve_restricted
from .stats import wilson

DEFAULT_BETA = 0.01
DEFAULT_ZETA = 0.05
NEAR_CRITICAL = 0.1

PERCOLATES = "percolates"
SUBCRITICAL = "subcritical"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ForcingEdge:
    """Assigning ``src`` at one end of constraint ``cid`` leaves only ``dst`` at the
    other end.  ``transposed`` means the assigned variable sits in position 2."""

    src: int
    dst: int
    cid: int
    transposed: bool


@dataclass
class ForcingDigraph:
    d: int
    c: float
    edges: tuple[ForcingEdge, ...]
    mean: np.ndarray  # mean[a-1, b-1]: expected number of a->b forcings per variable

    def adjacency(self) -> np.ndarray:
        return self.mean > 0

    def perron_root(self, delta: int | None = None, gamma: int | None = None) -> float:
        """Spectral radius of the mean matrix, or for a (delta, gamma) pair the largest
        one over strongly connected value classes reachable from delta that reach gamma."""
        if delta is None:
            return _rho(self.mean)
        adj = self.adjacency()
        ncomp, label = connected_components(csr_matrix(adj.astype(np.int8)), directed=True, connection="strong")
        down = _reach(adj, delta - 1)
        up = _reach(adj.T, gamma - 1)
        best = 0.0
        for s in range(ncomp):
            members = np.flatnonzero(label == s)
            if not (down[members].any() and up[members].any()):
                continue
            best = max(best, _rho(self.mean[np.ix_(members, members)]))
        return best


def _rho(A: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _reach(adj: np.ndarray, src: int) -> np.ndarray:
    seen = np.zeros(len(adj), dtype=bool)
    seen[src] = True
    q = deque([src])
    while q:
        a = q.popleft()
        for b in np.flatnonzero(adj[a]):
            if not seen[b]:
                seen[b] = True
                q.append(b)
    return seen


def _forcing_rows(c, transposed: bool):
    m = c.allowed_matrix()
    if transposed:
        m = m.T
    for a in range(c.d):
        allowed = np.flatnonzero(m[a])
        if len(allowed) == 1:
            yield a + 1, int(allowed[0]) + 1


def build_forcing_digraph(dist: ConstraintDistribution, c: float) -> ForcingDigraph:
    """Forcing edges of every support constraint in both orientations.

    Each variable meets about ``c`` constraints, each drawn as C with
    probability P(C) and oriented either way with probability 1/2, so a
    forcing row of (C, orientation) contributes ``c * P(C) / 2``.
    """
    if dist.k != 2:
        raise UnsupportedError(f"forcing analysis needs k=2 (got k={dist.k})")
    d = dist.d
    edges = []
    mean = np.zeros((d, d))
    for cid, (con, w) in enumerate(dist.entries):
        for tr in (False, True):
            for a, b in _forcing_rows(con, tr):
                edges.append(ForcingEdge(a, b, cid, tr))
                mean[a - 1, b - 1] += c * w / 2
    return ForcingDigraph(d, c, tuple(edges), mean)


def forcing_sequence_exists(dist: ConstraintDistribution, delta: int, mu: int):
    """Shortest nonempty chain of (constraint id, transposed) steps forcing delta to mu,
    or None."""
    g = build_forcing_digraph(dist, 1.0)
    out: dict[int, list[ForcingEdge]] = {}
    for e in g.edges:
        out.setdefault(e.src, []).append(e)
    prev: dict[int, tuple[int, ForcingEdge]] = {}
    q = deque()
    for e in out.get(delta, []):
        if e.dst not in prev:
            prev[e.dst] = (delta, e)
            q.append(e.dst)
    while q:
        a = q.popleft()
        for e in out.get(a, []):
            if e.dst not in prev:
                prev[e.dst] = (a, e)
                q.append(e.dst)
    if mu not in prev:
        return None
    seq = []
    cur = mu
    while True:
        a, e = prev[cur]
        seq.append((e.cid, e.transposed))
        if a == delta:
            break
        cur = a
    return seq[::-1]


# ------------------------------------------------------------ instance level


class StateGraph:
    """Forcing digraph over (variable, value) states of a binary instance.
    State ``v * d + (a - 1)`` stands for v:a."""

    def __init__(self, inst: Instance):
        self.inst = inst
        d = inst.d
        rows: dict[tuple[int, bool], list[tuple[int, int]]] = {}
        src, dst, eid = [], [], []
        for e, (vs, cid) in enumerate(inst.edges):
            if len(vs) != 2:
                continue
            con = inst.table[cid]
            for tr in (False, True):
                key = (cid, tr)
                if key not in rows:
                    rows[key] = list(_forcing_rows(con, tr))
                x, y = (vs[1], vs[0]) if tr else (vs[0], vs[1])
                for a, b in rows[key]:
                    src.append(x * d + a - 1)
                    dst.append(y * d + b - 1)
                    eid.append(e)
        size = inst.n * d
        self.eid = np.array(eid, dtype=np.int64)
        order = np.lexsort((dst, src)) if src else np.zeros(0, dtype=np.int64)
        self.src = np.array(src, dtype=np.int64)[order]
        self.dst = np.array(dst, dtype=np.int64)[order]
        self.eid = self.eid[order]
        self.graph = csr_matrix(
            (np.ones(len(self.src), dtype=np.int32), (self.src, self.dst)), shape=(size, size)
        )
        self.rev = self.graph.T.tocsr()
        self._pairs: dict[tuple[int, int], list[int]] | None = None

    def _without(self, e: int) -> csr_matrix:
        keep = self.eid != e
        size = self.inst.n * self.inst.d
        return csr_matrix((np.ones(int(keep.sum()), dtype=np.int32), (self.src[keep], self.dst[keep])),
                          shape=(size, size))

    def return_chain(self, v: int, a: int, states: np.ndarray | None = None) -> list[int] | None:
        """Edge ids of a nonempty chain leading v:a back to v:a, or None.

        Stepping out over an edge and straight back over the same edge does not
        count: some edge e into v:a must be entered from a state that v:a reaches
        without using e.
        """
        d = self.inst.d
        start = v * d + a - 1
        if states is None:
            states = self.reached(v, a)
        seen = np.zeros(self.inst.n * d, dtype=bool)
        seen[states] = True
        into = np.flatnonzero(self.dst == start)
        for i in sorted(into.tolist(), key=lambda i: int(self.eid[i])):
            s, e = int(self.src[i]), int(self.eid[i])
            if not seen[s]:
                continue
            _, pred = breadth_first_order(self._without(e), start, directed=True, return_predecessors=True)
            if s != start and pred[s] < 0:
                continue
            steps = []
            cur = s
            while cur != start:
                steps.append((int(pred[cur]), cur))
                cur = int(pred[cur])
            return [self._edge(p, q, e) for p, q in reversed(steps)] + [e]
        return None

    def _edge(self, s: int, t: int, avoid: int) -> int:
        if self._pairs is None:
            self._pairs = {}
            for x, y, e in zip(self.src.tolist(), self.dst.tolist(), self.eid.tolist()):
                self._pairs.setdefault((x, y), []).append(e)
        return min(e for e in self._pairs[(s, t)] if e != avoid)

    def reached(self, v: int, a: int, predecessors: bool = False):
        d = self.inst.d
        start = v * d + a - 1
        if predecessors:
            return breadth_first_order(self.graph, start, directed=True, return_predecessors=True)
        return breadth_first_order(self.graph, start, directed=True, return_predecessors=False)

    def sizes(self, v: int, a: int) -> np.ndarray:
        """|F_{a,b}(v)| for b = 1..d (v counted only if re-reached by a nonempty chain)."""
        d = self.inst.d
        start = v * d + a - 1
        states = self.reached(v, a)
        counts = np.bincount(states % d, minlength=d)
        preds = self.rev.indices[self.rev.indptr[start]:self.rev.indptr[start + 1]]
        if not np.isin(preds, states).any() or self.return_chain(v, a, states) is None:
            counts[a - 1] -= 1
        return counts


@dataclass
class ForcedSet:
    v: int
    delta: int
    sets: dict[int, frozenset[int]]
    paths: dict[tuple[int, int], list[int]] = field(repr=False, default_factory=dict)

    @property
    def union(self) -> frozenset[int]:
        out: set[int] = set()
        for s in self.sets.values():
            out |= s
        return frozenset(out)

    @property
    def conflicts(self) -> frozenset[int]:
        """Variables forced to two different values (v counts if forced off delta)."""
        seen: dict[int, int] = {}
        bad = set()
        for g, s in self.sets.items():
            for u in s:
                if u in seen and seen[u] != g:
                    bad.add(u)
                seen.setdefault(u, g)
        for g, s in self.sets.items():
            if g != self.delta and self.v in s:
                bad.add(self.v)
        return frozenset(bad)

    @property
    def contradictory(self) -> bool:
        return bool(self.conflicts)

    def size(self, gamma: int | None = None) -> int:
        return len(self.union) if gamma is None else len(self.sets.get(gamma, ()))


def forced_set(inst: Instance, v: int, delta: int, graph: StateGraph | None = None) -> ForcedSet:
    """F_{delta,gamma}(v) for every gamma, with the forcing chain (edge ids) behind
    each member."""
    if not 0 <= v < inst.n:
        raise InputError(f"variable {v} outside 0..{inst.n - 1}")
    if not 1 <= delta <= inst.d:
        raise InputError(f"value {delta} outside 1..{inst.d}")
    g = graph or StateGraph(inst)
    d = inst.d
    start = v * d + delta - 1
    # BFS by hand so the start state can be re-reached by a nonempty chain
    out_edges: dict[int, list[tuple[int, int]]] = {}
    for s, t, e in zip(g.src.tolist(), g.dst.tolist(), g.eid.tolist()):
        out_edges.setdefault(s, []).append((t, e))
    prev: dict[int, tuple[int, int]] = {}
    q = deque([start])
    expanded = {start}
    while q:
        s = q.popleft()
        for t, e in out_edges.get(s, ()):
            if t not in prev:
                prev[t] = (s, e)
                if t not in expanded:
                    expanded.add(t)
                    q.append(t)
    prev.pop(start, None)
    sets: dict[int, set[int]] = {b: set() for b in range(1, d + 1)}
    paths = {}
    back = g.return_chain(v, delta)
    if back is not None:
        sets[delta].add(v)
        paths[(v, delta)] = back
    for t in prev:
        u, b = divmod(t, d)
        sets[b + 1].add(u)
        chain = []
        cur = t
        while True:
            s, e = prev[cur]
            chain.append(e)
            if s == start:
                break
            cur = s
        paths[(u, b + 1)] = chain[::-1]
    return ForcedSet(v, delta, {b: frozenset(s) for b, s in sets.items()}, paths)


def _replay(inst: Instance, v: int, delta: int, chain: list[int]) -> tuple[int, int] | None:
    """Follow the chain's forcings from v:delta; the final (variable, value) or None
    if some step does not force."""
    cur, val = v, delta
    for e in chain:
        vs, cid = inst.edges[e]
        if cur not in vs or len(vs) != 2:
            return None
        tr = vs[1] == cur
        rows = dict(_forcing_rows(inst.table[cid], tr))
        if val not in rows:
            return None
        cur, val = (vs[0] if tr else vs[1]), rows[val]
    return cur, val


def verify_forcing(inst: Instance, fs: ForcedSet, u: int, gamma: int) -> bool:
    """Replay the stored chain step by step, then check with the solver that on
    the chain's edges alone v=delta rules out every value of u other than gamma."""
    chain = fs.paths[(u, gamma)]
    if not chain or _replay(inst, fs.v, fs.delta, chain) != (u, gamma):
        return False
    sub = inst.subinstance(sorted(set(chain)))
    allowed = [set(range(1, inst.d + 1)) for _ in range(inst.n)]
    allowed[fs.v] = {fs.delta}
    if u == fs.v:
        return gamma == fs.delta or solve_restricted(sub, allowed).status == "unsat"
    allowed[u] = set(range(1, inst.d + 1)) - {gamma}
    return solve_restricted(sub, allowed).status == "unsat"


# -------------------------------------------------------------- percolation


@dataclass
class PairVerdict:
    delta: int
    gamma: int
    perron_root: float
    analytic: str
    empirical: str
    verdict: str
    fractions: dict[int, tuple[int, int, float, float]]  # n -> (hits, trials, lo, hi)
    note: str = ""


@dataclass
class PercolationReport:
    model: str
    c: float
    n_list: tuple[int, ...]
    trials: int
    beta: float
    zeta: float
    pairs: dict[tuple[int, int], PairVerdict]
    samples: list[tuple[int, int, int, int, int, int]]  # (n, trial, root, delta, gamma, size)

    def verdict(self, delta: int, gamma: int) -> str:
        return self.pairs[(delta, gamma)].verdict


def sample_forced_sizes(dist, c, n, trials, seed, flavor=PLAIN):
    """For each trial: an instance, a uniform root, and |F_{a,b}(root)| for all a, b.
    Returns an int array of shape (trials, d, d) and the roots."""
    d = dist.d
    out = np.zeros((trials, d, d), dtype=np.int64)
    roots = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        inst = sample(GenSpec(dist, n, c, flavor, seed, t))
        root = int(trial_rng(derive_seed(seed, 1), t).integers(n))
        roots[t] = root
        g = StateGraph(inst)
        for a in range(1, d + 1):
            out[t, a - 1] = g.sizes(root, a)
    return out, roots


def percolation_verdict(
    dist: ConstraintDistribution,
    c: float,
    n_list,
    trials: int = 400,
    beta: float = DEFAULT_BETA,
    zeta: float = DEFAULT_ZETA,
    seed: int = 0,
    flavor: str = PLAIN,
) -> PercolationReport:
    """Empirical and branching-process verdicts per (delta, gamma).

    Empirical: percolates when the Wilson lower bound of Pr(|F| >= beta n) is at
    least zeta at every n, subcritical otherwise.  Analytic: percolates when the
    relevant Perron root exceeds 1.  Disagreement gives "inconclusive".
    """
    if not 0 < beta <= 1 or not 0 < zeta < 1:
        raise InputError("need 0 < beta <= 1 and 0 < zeta < 1")
    d = dist.d
    fd = build_forcing_digraph(dist, c)
    n_list = tuple(int(n) for n in n_list)
    data = {}
    samples = []
    for i, n in enumerate(n_list):
        sizes, roots = sample_forced_sizes(dist, c, n, trials, derive_seed(seed, i), flavor)
        data[n] = sizes
        for t in range(trials):
            for a in range(d):
                for b in range(d):
                    samples.append((n, t, int(roots[t]), a + 1, b + 1, int(sizes[t, a, b])))
    pairs = {}
    for a in range(1, d + 1):
        for b in range(1, d + 1):
            root = fd.perron_root(a, b)
            analytic = PERCOLATES if root > 1 else SUBCRITICAL
            fr = {}
            perc = True
            for n in n_list:
                hits = int((data[n][:, a - 1, b - 1] >= beta * n).sum())
                lo, hi = wilson(hits, trials)
                fr[n] = (hits, trials, lo, hi)
                perc &= lo >= zeta
            empirical = PERCOLATES if perc else SUBCRITICAL
            verdict = analytic if analytic == empirical else INCONCLUSIVE
            note = "near-critical" if abs(root - 1) <= NEAR_CRITICAL else ""
            pairs[(a, b)] = PairVerdict(a, b, root, analytic, empirical, verdict, fr, note)
    return PercolationReport(dist.name, c, n_list, trials, beta, zeta, pairs, samples)


def claim1_check(
    dist: ConstraintDistribution,
    c: float,
    delta: int,
    gamma: int,
    n_list,
    trials: int = 400,
    xi: float = 0.05,
    seed: int = 0,
    flavor: str = PLAIN,
) -> dict:
    """Bounded forced sets below criticality: pick L as the (1 - xi/2) quantile of
    |F| at the smallest n, then require Pr(|F| <= L) > 1 - xi at every n."""
    n_list = sorted(int(n) for n in n_list)
    per_n = {}
    for i, n in enumerate(n_list):
        sizes, _ = sample_forced_sizes(dist, c, n, trials, derive_seed(seed, 7, i), flavor)
        per_n[n] = sizes[:, delta - 1, gamma - 1]
    L = int(np.quantile(per_n[n_list[0]], 1 - xi / 2, method="higher"))
    frac = {n: float((s <= L).mean()) for n, s in per_n.items()}
    return {"L": L, "xi": xi, "fraction_le_L": frac, "holds": all(f > 1 - xi for f in frac.values())}


def claim2_count(inst: Instance, delta: int, gamma: int, beta: float = DEFAULT_BETA) -> int:
    """Number of roots v with |F_{delta,gamma}(v)| >= beta n."""
    g = StateGraph(inst)
    thresh = beta * inst.n
    return sum(1 for v in range(inst.n) if g.sizes(v, delta)[gamma - 1] >= thresh)


def claim2_check(
    dist: ConstraintDistribution,
    c: float,
    delta: int,
    gamma: int,
    n_list,
    trials: int = 5,
    beta: float = DEFAULT_BETA,
    z_min: float = DEFAULT_ZETA,
    seed: int = 0,
    flavor: str = PLAIN,
) -> dict:
    """Linear number of percolating roots: the smallest observed fraction of roots
    with |F| >= beta n, per n, must stay above ``z_min``."""
    z = {}
    for i, n in enumerate(sorted(int(n) for n in n_list)):
        fr = []
        for t in range(trials):
            inst = sample(GenSpec(dist, n, c, flavor, derive_seed(seed, 11, i), t))
            fr.append(claim2_count(inst, delta, gamma, beta) / n)
        z[n] = min(fr)
    return {"z": z, "z_min": z_min, "holds": all(v >= z_min for v in z.values())}


# ------------------------------------------------------- three-value checker


@dataclass
class T23Report:
    delta: int
    b_holds: bool
    c_holds: bool
    perron_root: float
    percolation: str
    claim2: dict
    witness: dict
    note: str = "condition (a) is a threshold statement; see the probe module"

    @property
    def ok(self) -> bool:
        return self.b_holds and self.c_holds


def check_t23(
    dist: ConstraintDistribution,
    M: Instance,
    delta: int,
    c: float,
    n_list=(500, 1000, 2000),
    trials: int = 200,
    beta: float = DEFAULT_BETA,
    zeta: float = DEFAULT_ZETA,
    seed: int = 0,
) -> T23Report:
    """Conditions (b) and (c) for a d=3 binary model, a unicyclic M and a value delta.

    (b) M is unsatisfiable with delta removed from every candidate set.
    (c) F_{delta,delta} percolates and a linear number of roots reach beta n.
    The witness for (c) is one sampled root v and one u in F_{delta,delta}(v):
    with v pinned to delta and u barred from delta the instance must be unsatisfiable.
    """
    from .structure import UNICYCLIC, classify

    if dist.d != 3 or dist.k != 2:
        raise InputError("the three-value checker needs d=3, k=2")
    if M.d != 3:
        raise InputError("M must have domain size 3")
    if classify(M).kind != UNICYCLIC:
        raise InputError("M must be unicyclic")
    others = set(range(1, 4)) - {delta}
    b_res = solve_restricted(M, others)
    b_holds = b_res.status == "unsat"
    perc = percolation_verdict(dist, c, n_list, trials, beta, zeta, seed)
    pv = perc.pairs[(delta, delta)]
    n_big = max(n_list)
    c2 = claim2_check(dist, c, delta, delta, [n_big], trials=2, beta=beta, z_min=zeta, seed=seed)
    witness = {"b_status": b_res.status}
    c_holds = pv.verdict == PERCOLATES and c2["holds"]
    if c_holds:
        witness.update(_forcing_witness(dist, c, n_big, delta, beta, seed))
        c_holds = witness.get("verified", False)
    return T23Report(delta, b_holds, c_holds, pv.perron_root, pv.verdict, c2, witness)


def _forcing_witness(dist, c, n, delta, beta, seed) -> dict:
    for t in range(50):
        inst = sample(GenSpec(dist, n, c, PLAIN, derive_seed(seed, 13), t))
        g = StateGraph(inst)
        rng = trial_rng(derive_seed(seed, 14), t)
        for v in rng.permutation(n)[:50]:
            v = int(v)
            if g.sizes(v, delta)[delta - 1] < beta * n:
                continue
            fs = forced_set(inst, v, delta, g)
            members = sorted(fs.sets[delta] - {v})
            u = members[len(members) // 2]
            allowed = [set(range(1, 4)) for _ in range(n)]
            allowed[v] = {delta}
            allowed[u] = set(range(1, 4)) - {delta}
            res = solve_restricted(inst, allowed)
            return {"trial": t, "v": v, "u": u, "size": len(fs.sets[delta]),
                    "verified": res.status == "unsat"}
    return {"verified": False}


def borel_tail(lam: float, t: int) -> float:
    """Pr(total progeny of a Poisson(lam) Galton-Watson tree >= t)."""
    below = sum(math.exp(-lam * s + (s - 1) * math.log(lam * s) - math.lgamma(s + 1)) for s in range(1, t))
    return 1 - below
