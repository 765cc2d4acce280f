"""Named constraint distributions and the model DSL.

DSL, one expression per model::

    dkt:<d>,<k>,<t>     uniform over constraints with exactly t restrictions
    hom:<path>          H-homomorphism, H read from an HGRAPH file
    coloring:<d>        proper d-colouring (hom of the loopless complete graph)
    ed3                 the binary d=3 coarse-threshold example
    s3:<q>              the d=5 two-constraint family with weight q on C1
    file:<path>         explicit CSPDIST listing
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .core import Constraint, ConstraintDistribution, parse_tuples
from .errors import CapacityError, InputError

DKT_SUPPORT_CAP = 10**6


@dataclass(frozen=True)
class HypergraphH:
    """k-uniform hypergraph on vertices ``1..d``; tuples may repeat a vertex."""

    d: int
    k: int
    edges: frozenset[tuple[int, ...]]
    directed: bool = False

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise InputError(f"hypergraph needs d>=1, k>=1 (got {self.d}, {self.k})")
        for e in self.edges:
            if len(e) != self.k or not all(1 <= x <= self.d for x in e):
                raise InputError(f"edge {e} is not a {self.k}-tuple over 1..{self.d}")

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[Sequence[int]], k: int = 2, directed: bool = False) -> HypergraphH:
        return cls(d, k, frozenset(tuple(e) for e in edges), directed)

    @property
    def loops(self) -> list[tuple[int, ...]]:
        return sorted(e for e in self.edges if len(set(e)) == 1)

    def closed(self) -> frozenset[tuple[int, ...]]:
        """Edge set closed under all permutations of tuple positions."""
        out = set()
        for e in self.edges:
            out.update(itertools.permutations(e))
        return frozenset(out)

    def neighbors(self) -> dict[int, set[int]]:
        """Undirected adjacency (k=2)."""
        adj: dict[int, set[int]] = {v: set() for v in range(1, self.d + 1)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def to_text(self) -> str:
        lines = ["HGRAPH 1", f"d={self.d} k={self.k} directed={int(self.directed)}"]
        lines += [" ".join(map(str, e)) for e in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> HypergraphH:
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0] != ["HGRAPH", "1"]:
            raise InputError("expected header 'HGRAPH 1'")
        if len(rows) < 2:
            raise InputError("missing 'd=.. k=.. directed=..' line")
        head = dict(tok.split("=", 1) for tok in rows[1] if "=" in tok)
        try:
            d, k, directed = int(head["d"]), int(head["k"]), int(head.get("directed", "0"))
        except (KeyError, ValueError):
            raise InputError("HGRAPH line 2 must be 'd=<int> k=<int> directed=<0|1>'") from None
        try:
            edges = [tuple(int(x) for x in r) for r in rows[2:]]
        except ValueError:
            raise InputError("HGRAPH edge lines must be integers") from None
        return cls.from_edges(d, edges, k, bool(directed))

    @classmethod
    def load(cls, path: str | Path) -> HypergraphH:
        return cls.from_text(Path(path).read_text())


def complete_graph(d: int) -> HypergraphH:
    return HypergraphH.from_edges(d, itertools.combinations(range(1, d + 1), 2))


def cycle_graph(length: int) -> HypergraphH:
    return HypergraphH.from_edges(length, [(i + 1, (i + 1) % length + 1) for i in range(length)])


def build_dkt(d: int, k: int, t: int, cap: int = DKT_SUPPORT_CAP) -> ConstraintDistribution:
    """Uniform distribution over all constraints with exactly ``t`` restrictions."""
    if d < 2 or k < 1 or not 0 <= t <= d**k:
        raise InputError(f"dkt needs d>=2, k>=1, 0<=t<=d^k (got {d},{k},{t})")
    count = math.comb(d**k, t)
    if count > cap:
        raise CapacityError(f"dkt:{d},{k},{t} has {count} support constraints (cap {cap})")
    w = 1.0 / count
    entries = tuple(
        (Constraint(d, k, sum(1 << i for i in combo)), w)
        for combo in itertools.combinations(range(d**k), t)
    )
    flags = frozenset()
    if t >= d ** (k - 1):
        flags = frozenset({"degenerate"})
        warnings.warn(
            f"dkt:{d},{k},{t} has t >= d^(k-1); unsatisfiable already at o(n) constraints",
            stacklevel=2,
        )
    return ConstraintDistribution(d, k, entries, f"dkt:{d},{k},{t}", flags)


def build_homomorphism(H: HypergraphH, name: str = "") -> ConstraintDistribution:
    """Single-constraint distribution whose allowed tuples are the edges of H.

    Undirected H is closed under position permutations first, so the
    constraint is symmetric.
    """
    if H.d < 1:
        raise InputError("H needs at least one vertex")
    edges = H.edges if H.directed else H.closed()
    c = Constraint.from_allowed(H.d, H.k, edges)
    flags = set()
    if not edges:
        flags.add("trivial-unsat")
    if H.loops:
        flags.add("trivial-sat")
    return ConstraintDistribution(H.d, H.k, ((c, 1.0),), name or f"hom:{H.d}", frozenset(flags))


def build_coloring(d: int) -> ConstraintDistribution:
    return build_homomorphism(complete_graph(d), f"coloring:{d}")


def ed3_constraints() -> tuple[Constraint, Constraint]:
    c1 = Constraint.from_allowed(3, 2, [(1, 1)] + list(itertools.product((2, 3), repeat=2)))
    c2 = Constraint.from_restrictions(3, 2, [(v, v) for v in (1, 2, 3)])
    return c1, c2


def build_paper_ed3() -> ConstraintDistribution:
    """d=3, k=2: C1 = "both are 1 or neither is" (weight 2/3), C2 = disequality (1/3)."""
    c1, c2 = ed3_constraints()
    return ConstraintDistribution(3, 2, ((c1, 2 / 3), (c2, 1 / 3)), "ed3")


def s3_constraints() -> tuple[Constraint, Constraint]:
    low, high = (1, 2), (3, 4, 5)
    cross = list(itertools.product(low, high)) + list(itertools.product(high, low))
    c1 = Constraint.from_restrictions(5, 2, [(1, 1), (2, 2)] + cross)
    c2 = Constraint.from_restrictions(5, 2, [(3, 3), (4, 4), (5, 5)] + cross)
    return c1, c2


def s3_boundary(q: float) -> float:
    """Case boundary c(q) = (1 - q) / q of the d=5 family."""
    return (1 - q) / q


def build_paper_s3(q: float) -> ConstraintDistribution:
    if not 0 < q < 1:
        raise InputError(f"s3 needs 0 < q < 1 (got {q})")
    c1, c2 = s3_constraints()
    return ConstraintDistribution(
        5, 2, ((c1, q), (c2, 1 - q)), f"s3:{q:g}", meta={"c_q": s3_boundary(q), "inv_q": 1 / q}
    )


def _weight(s: str, lineno: int) -> float:
    try:
        return float(Fraction(s))
    except (ValueError, ZeroDivisionError):
        raise InputError(f"line {lineno}: bad weight {s!r}") from None


def parse_listing(text: str, name: str = "file") -> ConstraintDistribution:
    """Explicit ``CSPDIST 1`` listing: header, ``d= k=`` line, then
    ``w=<prob> nres=<int> : <tuples>`` per support entry.  Weights accept
    fractions such as ``2/3``."""
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not rows or rows[0][1].split() != ["CSPDIST", "1"]:
        raise InputError("line 1: expected header 'CSPDIST 1'")
    if len(rows) < 2:
        raise InputError("missing 'd=<int> k=<int>' line")
    lineno, ln = rows[1]
    head = dict(tok.split("=", 1) for tok in ln.split() if "=" in tok)
    try:
        d, k = int(head["d"]), int(head["k"])
    except (KeyError, ValueError):
        raise InputError(f"line {lineno}: expected 'd=<int> k=<int>'") from None
    entries = []
    for lineno, ln in rows[2:]:
        left, sep, right = ln.partition(":")
        kv = dict(tok.split("=", 1) for tok in left.split() if "=" in tok)
        if not sep or "w" not in kv or "nres" not in kv:
            raise InputError(f"line {lineno}: expected 'w=<prob> nres=<int> : <tuples>'")
        tuples = parse_tuples(right, d, k, lineno)
        if len(tuples) != int(kv["nres"]):
            raise InputError(f"line {lineno}: nres={kv['nres']} but {len(tuples)} tuples listed")
        entries.append((Constraint.from_restrictions(d, k, tuples), _weight(kv["w"], lineno)))
    return ConstraintDistribution(d, k, tuple(entries), name)


def parse_distribution(text: str) -> ConstraintDistribution:
    """Resolve one model DSL expression (see module docstring)."""
    expr = text.strip()
    kind, _, arg = expr.partition(":")
    try:
        if kind == "dkt":
            d, k, t = (int(x) for x in arg.split(","))
            return build_dkt(d, k, t)
        if kind == "coloring":
            return build_coloring(int(arg))
        if kind == "ed3" and not arg:
            return build_paper_ed3()
        if kind == "s3":
            return build_paper_s3(float(arg))
        if kind == "hom":
            H = HypergraphH.load(arg)
            return build_homomorphism(H, f"hom:{Path(arg).stem}")
        if kind == "file":
            return parse_listing(Path(arg).read_text(), f"file:{Path(arg).stem}")
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"model {expr!r}: {exc}") from None
    except OSError as exc:
        raise InputError(f"model {expr!r}: {exc}") from None
    raise InputError(f"unknown model expression {expr!r}")
