"""Exact satisfiability for mixed-arity instances.

``solve`` splits the constraint hypergraph into connected components and runs
generalized arc consistency plus backtracking on each (smallest candidate set
first, value order ascending).  ``brute_force`` is the exhaustive oracle used
by the tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _engine
from .core import HAT, Constraint, Instance, evaluate
from .errors import CapacityError, InputError
from .models import HypergraphH, build_homomorphism

DEFAULT_BUDGET = 10**8
BRUTE_FORCE_LIMIT = 10**7
MAX_DOMAIN = 62

RESTART_BASE = 2000
RESTART_GROWTH = 8

SAT = "sat"
UNSAT = "unsat"
BUDGET = "budget"


@dataclass(frozen=True)
class Result:
    status: str
    assignment: tuple[int, ...] | None = None
    nodes: int = 0

    @property
    def sat(self) -> bool:
        return self.status == SAT

    def __bool__(self) -> bool:
        return self.sat


_STATUS = {_engine.SAT: SAT, _engine.UNSAT: UNSAT, _engine.BUDGET: BUDGET}


def _compile_table(table: Sequence[Constraint]):
    offs, cnts, masks = [], [], []
    pos = 0
    for c in table:
        allowed = np.flatnonzero(c.table == 0)
        digits = np.empty((len(allowed), c.k), dtype=np.int64)
        r = allowed.copy()
        for j in range(c.k - 1, -1, -1):
            r, digits[:, j] = np.divmod(r, c.d)
        offs.append(pos)
        cnts.append(len(allowed))
        masks.append((np.int64(1) << digits).ravel())
        pos += digits.size
    return (
        np.array(offs, dtype=np.int64),
        np.array(cnts, dtype=np.int64),
        np.concatenate(masks) if masks else np.zeros(0, dtype=np.int64),
    )


def _compile(inst: Instance):
    if inst.d > MAX_DOMAIN:
        raise InputError(f"domain size {inst.d} exceeds the solver limit {MAX_DOMAIN}")
    m = inst.m
    lens = np.fromiter((len(vs) for vs, _ in inst.edges), dtype=np.int64, count=m)
    e_off = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(lens, out=e_off[1:])
    e_vars = np.fromiter((v for vs, _ in inst.edges for v in vs), dtype=np.int64, count=int(e_off[-1]))
    e_cid = np.fromiter((cid for _, cid in inst.edges), dtype=np.int64, count=m)
    owner = np.repeat(np.arange(m, dtype=np.int64), lens)
    order = np.argsort(e_vars, kind="stable")
    v_edges = owner[order]
    v_off = np.zeros(inst.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(e_vars, minlength=inst.n), out=v_off[1:])
    at_off, at_cnt, at_masks = _compile_table(inst.table)
    return e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges


def _initial_domains(inst: Instance, allowed) -> np.ndarray:
    full = (1 << inst.d) - 1
    dom = np.full(inst.n, full, dtype=np.int64)
    if allowed is None:
        return dom
    if isinstance(allowed, (set, frozenset)):
        allowed = [allowed] * inst.n
    if len(allowed) != inst.n:
        raise InputError(f"{len(allowed)} allowed-value sets for {inst.n} variables")
    for v, vals in enumerate(allowed):
        mask = 0
        for x in vals:
            if not 1 <= x <= inst.d:
                raise InputError(f"allowed value {x} outside 1..{inst.d}")
            mask |= 1 << (x - 1)
        dom[v] = mask
    return dom


def _search(n: int, d: int, dom: np.ndarray, arrays, budget: int, lookahead: int) -> tuple[int, int]:
    """Run the kernel; ``dom`` holds the witness on SAT.

    With lookahead, run i stops after RESTART_BASE * RESTART_GROWTH^(i-1) nodes.
    Run 1 is the plain search; later runs try values in descending order on
    a seeded random half of the variables.  Value order does not change the
    size of a refuted subtree, so unsat proofs cost the same in every run and
    the geometric caps bound the overhead.  Answers are unchanged and runs
    are reproducible.
    """
    flip = np.zeros(n, dtype=np.uint8)
    if lookahead <= 0:
        return _engine.search(n, d, dom, *arrays, budget, lookahead, flip)
    dom0 = dom.copy()
    rng = np.random.default_rng(0)
    used = 0
    run = 1
    while True:
        cap = min(budget - used, RESTART_BASE * RESTART_GROWTH ** min(run - 1, 30))
        status, nodes = _engine.search(n, d, dom, *arrays, cap, lookahead, flip)
        if status != _engine.BUDGET:
            return status, used + nodes
        used += cap
        if used >= budget:
            return status, used
        dom[:] = dom0
        run += 1
        flip = (rng.random(n) < 0.5).astype(np.uint8)


def solve_restricted(
    inst: Instance,
    allowed: Iterable[int] | Sequence[Iterable[int]] | None,
    budget: int = DEFAULT_BUDGET,
    lookahead: int = 0,
) -> Result:
    """``solve`` with initial candidate sets intersected with ``allowed``.

    ``allowed`` is either one set of values applied to every variable or a
    per-variable sequence of sets.  ``lookahead`` > 0 enables failed-value
    probing on that many variables per node (same answers, fewer nodes on
    hard instances).
    """
    dom = _initial_domains(inst, allowed)
    if inst.n == 0:
        return Result(SAT, (), 0)
    if (dom == 0).any():
        return Result(UNSAT, None, 0)
    arrays = _compile(inst)
    status, nodes = _search(inst.n, inst.d, dom, arrays, budget, lookahead)
    status = _STATUS[status]
    if status != SAT:
        return Result(status, None, int(nodes))
    a = tuple(int(x) for x in _engine.witness(dom))
    bad = evaluate(inst, a)
    assert bad is None, f"solver witness violates edge {bad}"
    return Result(SAT, a, int(nodes))


class Compiled:
    """An instance compiled once and solved repeatedly under different
    candidate-set restrictions (pins)."""

    def __init__(self, inst: Instance, lookahead: int = 0):
        if inst.d > MAX_DOMAIN:
            raise InputError(f"domain size {inst.d} exceeds the solver limit {MAX_DOMAIN}")
        self.inst = inst
        self.lookahead = lookahead
        self.arrays = _compile(inst)
        self.full = (1 << inst.d) - 1

    def status(self, pins: dict[int, int] | None = None, masks: dict[int, int] | None = None,
               budget: int = DEFAULT_BUDGET) -> str:
        """Decide with ``pins`` (variable -> value) and ``masks`` (variable -> bitmask,
        bit x-1 for value x) applied on top of full candidate sets."""
        inst = self.inst
        if inst.n == 0:
            return SAT
        dom = np.full(inst.n, self.full, dtype=np.int64)
        for v, m in (masks or {}).items():
            dom[v] &= m
        for v, x in (pins or {}).items():
            dom[v] &= 1 << (x - 1)
        if (dom == 0).any():
            return UNSAT
        status, _ = _search(inst.n, inst.d, dom, self.arrays, budget, self.lookahead)
        return _STATUS[status]

    def sat(self, pins: dict[int, int] | None = None, masks: dict[int, int] | None = None) -> bool:
        st = self.status(pins, masks)
        if st == BUDGET:
            raise CapacityError("node budget exceeded")
        return st == SAT


def solve(inst: Instance, budget: int = DEFAULT_BUDGET, lookahead: int = 0) -> Result:
    """Exact decision with witness; ``budget`` caps the number of search nodes."""
    return solve_restricted(inst, None, budget, lookahead)


def _assignments(start: int, stop: int, n: int, d: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((len(idx), n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        idx, out[:, j] = np.divmod(idx, d)
    return out


def satisfying_mask(inst: Instance, chunk: int = 1 << 16):
    """Yield (start, boolean mask) blocks over all d^n assignments in lexicographic order
    (variable 0 most significant)."""
    total = inst.d**inst.n
    if total > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"d^n = {total} exceeds the brute-force limit {BRUTE_FORCE_LIMIT}")
    tables = [c.table for c in inst.table]
    for start in range(0, total, chunk):
        vals = _assignments(start, min(total, start + chunk), inst.n, inst.d)
        ok = np.ones(len(vals), dtype=bool)
        for vs, cid in inst.edges:
            code = np.zeros(len(vals), dtype=np.int64)
            for v in vs:
                code = code * inst.d + vals[:, v]
            ok &= tables[cid][code] == 0
        yield start, vals, ok


def brute_force(inst: Instance) -> Result:
    """Exhaustive search; returns the lexicographically first satisfying assignment."""
    for _, vals, ok in satisfying_mask(inst):
        hit = np.flatnonzero(ok)
        if len(hit):
            return Result(SAT, tuple(int(x) + 1 for x in vals[hit[0]]))
    return Result(UNSAT)


def graph_instance(G: HypergraphH | Instance, H: HypergraphH) -> Instance:
    """Variables = vertices of G, every edge of G carrying H's constraint.

    Edges of G that repeat a vertex become lower-arity constraints on the
    distinct vertices (the diagonal of H's constraint).
    """
    if isinstance(G, Instance):
        n = G.n
        tuples = [vs for vs, _ in G.edges]
    else:
        n = G.d
        tuples = [tuple(v - 1 for v in e) for e in sorted(G.edges)]
    c = build_homomorphism(H).support[0]
    out = []
    for vs in tuples:
        if len(vs) != H.k:
            raise InputError(f"edge {vs} has arity {len(vs)}, H has arity {H.k}")
        out.append(collapse_repeats(vs, c))
    return Instance(n, H.d, H.k, flavor=HAT).add_edges(out)


def collapse_repeats(vs: Sequence[int], c: Constraint) -> tuple[tuple[int, ...], Constraint]:
    """Rewrite a constraint on a tuple with repeated variables as one on its distinct variables."""
    distinct = tuple(dict.fromkeys(vs))
    if len(distinct) == len(vs):
        return tuple(vs), c
    where = [distinct.index(v) for v in vs]
    ok = [
        t
        for t in itertools.product(range(1, c.d + 1), repeat=len(distinct))
        if c.permits([t[w] for w in where])
    ]
    return distinct, Constraint.from_allowed(c.d, len(distinct), ok)


def is_homomorphism(G: HypergraphH, H: HypergraphH, h: dict[int, int]) -> bool:
    targets = H.edges if H.directed else H.closed()
    return all(tuple(h[v] for v in e) in targets for e in G.edges)


def homomorphic(G: HypergraphH | Instance, H: HypergraphH, budget: int = DEFAULT_BUDGET) -> dict[int, int] | None:
    """A homomorphism G -> H as ``{vertex of G: vertex of H}`` or None.

    Vertices of a HypergraphH G are ``1..G.d``; for an Instance G the keys are
    its variables ``0..n-1``.
    """
    inst = graph_instance(G, H)
    res = solve(inst, budget)
    if res.status == BUDGET:
        raise CapacityError(f"homomorphism search exceeded {budget} nodes")
    if not res.sat:
        return None
    if isinstance(G, Instance):
        return dict(enumerate(res.assignment))
    h = {v + 1: x for v, x in enumerate(res.assignment)}
    assert is_homomorphism(G, H, h)
    return h
