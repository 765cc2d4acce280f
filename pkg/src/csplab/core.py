"""Constraints, distributions over constraints, instances and assignments.

Values are 1-based (``1..d``) throughout.  A constraint of arity ``k`` is kept
as its set of restrictions (forbidden tuples), packed into an integer bit
vector of length ``d**k``.  Tuple ``(x_1, ..., x_k)`` lives at the mixed-radix
index ``sum((x_i - 1) * d**(k - i))``, i.e. position 1 is most significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError

PLAIN = "plain"
HAT = "hat"
FLAVORS = (PLAIN, HAT)

Tuple = tuple[int, ...]
Edge = tuple[Tuple, int]


def encode(values: Sequence[int], d: int) -> int:
    idx = 0
    for x in values:
        idx = idx * d + (x - 1)
    return idx


def decode(index: int, d: int, k: int) -> Tuple:
    out = [0] * k
    for pos in range(k - 1, -1, -1):
        index, r = divmod(index, d)
        out[pos] = r + 1
    return tuple(out)


@dataclass(frozen=True)
class Constraint:
    """Arity-``k`` relation over ``{1..d}`` stored by its restrictions.

    ``bits`` has bit ``i`` set iff the tuple with index ``i`` is forbidden.
    """

    d: int
    k: int
    bits: int = 0

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise InputError(f"constraint needs d>=1, k>=1 (got d={self.d}, k={self.k})")
        if self.bits < 0 or self.bits >> (self.d**self.k):
            raise InputError("restriction bit vector longer than d**k")

    @classmethod
    def from_restrictions(cls, d: int, k: int, tuples: Iterable[Sequence[int]]) -> Constraint:
        bits = 0
        for t in tuples:
            _check_tuple(t, d, k)
            bits |= 1 << encode(t, d)
        return cls(d, k, bits)

    @classmethod
    def from_allowed(cls, d: int, k: int, tuples: Iterable[Sequence[int]]) -> Constraint:
        allowed = cls.from_restrictions(d, k, tuples)
        return allowed.complement()

    @classmethod
    def empty(cls, d: int, k: int) -> Constraint:
        return cls(d, k, 0)

    @classmethod
    def full(cls, d: int, k: int) -> Constraint:
        return cls(d, k, (1 << d**k) - 1)

    @property
    def size(self) -> int:
        return self.d**self.k

    @property
    def nres(self) -> int:
        return self.bits.bit_count()

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    def complement(self) -> Constraint:
        return Constraint(self.d, self.k, ((1 << self.size) - 1) ^ self.bits)

    def forbids(self, values: Sequence[int]) -> bool:
        return bool(self.bits >> encode(values, self.d) & 1)

    def permits(self, values: Sequence[int]) -> bool:
        return not self.forbids(values)

    def restrictions(self) -> list[Tuple]:
        return [decode(i, self.d, self.k) for i in range(self.size) if self.bits >> i & 1]

    def allowed(self) -> list[Tuple]:
        return [decode(i, self.d, self.k) for i in range(self.size) if not self.bits >> i & 1]

    def reorder(self, order: Sequence[int]) -> Constraint:
        """Constraint whose position ``j`` plays the role of old position ``order[j]``.

        ``order`` is a 0-based permutation of ``range(k)``.
        """
        if sorted(order) != list(range(self.k)):
            raise InputError(f"not a permutation of range({self.k}): {order}")
        return Constraint.from_restrictions(
            self.d, self.k, (tuple(t[o] for o in order) for t in self.restrictions())
        )

    def transpose(self) -> Constraint:
        if self.k != 2:
            raise InputError("transpose is defined for binary constraints only")
        return self.reorder((1, 0))

    def is_symmetric(self) -> bool:
        return all(self.reorder(p) == self for p in itertools.permutations(range(self.k)))

    @cached_property
    def table(self) -> np.ndarray:
        """uint8 array of length d**k, 1 where the tuple is forbidden."""
        raw = np.frombuffer(self.bits.to_bytes((self.size + 7) // 8 or 1, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.size].copy()

    def allowed_matrix(self) -> np.ndarray:
        """``d x d`` boolean matrix ``A[a-1, b-1]`` = pair (a, b) permitted.  k=2 only."""
        if self.k != 2:
            raise InputError("allowed_matrix is defined for binary constraints only")
        return (self.table == 0).reshape(self.d, self.d)

    def describe(self) -> str:
        return ";".join(",".join(map(str, t)) for t in self.restrictions())


def _check_tuple(t: Sequence[int], d: int, k: int) -> None:
    if len(t) != k:
        raise InputError(f"tuple {tuple(t)} has {len(t)} entries, expected {k}")
    for x in t:
        if not 1 <= x <= d:
            raise InputError(f"value {x} in tuple {tuple(t)} outside 1..{d}")


def allowed_rows(c: Constraint, position: int, value: int) -> set[Tuple]:
    """All (k-1)-tuples that, with ``value`` inserted at 1-based ``position``, are permitted by ``c``."""
    if not 1 <= position <= c.k:
        raise InputError(f"position {position} outside 1..{c.k}")
    if not 1 <= value <= c.d:
        raise InputError(f"value {value} outside 1..{c.d}")
    out = set()
    for rest in itertools.product(range(1, c.d + 1), repeat=c.k - 1):
        full = rest[: position - 1] + (value,) + rest[position - 1 :]
        if c.permits(full):
            out.add(rest)
    return out


def restrict_constraint(c: Constraint, position: int, value: int) -> Constraint:
    """Residual (k-1)-ary constraint after fixing the variable at ``position`` to ``value``."""
    if c.k == 1:
        raise InputError("cannot restrict a unary constraint (arity 0 residuals are unsupported)")
    ok = allowed_rows(c, position, value)
    return Constraint.from_allowed(c.d, c.k - 1, ok)


@dataclass(frozen=True)
class ConstraintDistribution:
    """Finitely supported distribution over constraints sharing (d, k).

    ``entries`` lists exactly the support: every probability is positive.
    ``flags`` carries builder diagnostics (e.g. ``"degenerate"``) and ``meta``
    free-form derived quantities such as a case boundary.
    """

    d: int
    k: int
    entries: tuple[tuple[Constraint, float], ...]
    name: str = ""
    flags: frozenset[str] = frozenset()
    meta: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.entries:
            raise InputError("distribution has empty support")
        total = 0.0
        seen = set()
        for c, w in self.entries:
            if (c.d, c.k) != (self.d, self.k):
                raise InputError(f"constraint with (d,k)=({c.d},{c.k}) in a ({self.d},{self.k}) distribution")
            if not w > 0:
                raise InputError(f"non-positive probability {w}")
            if c in seen:
                raise InputError(f"duplicate constraint {c.describe()!r}")
            seen.add(c)
            total += w
        if abs(total - 1.0) > 1e-9:
            raise InputError(f"probabilities sum to {total!r}, not 1")

    @property
    def support(self) -> list[Constraint]:
        return [c for c, _ in self.entries]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Instance:
    """A CSP on variables ``0..n-1``.

    ``edges`` is an ordered list of ``(variables, cid)`` pairs where
    ``table[cid]`` is applied to the variables in tuple order.  Arities may be
    mixed (unary pins next to k-ary constraints); ``k`` is the nominal arity
    of the model the instance came from.
    """

    n: int
    d: int
    k: int
    edges: tuple[Edge, ...] = ()
    table: tuple[Constraint, ...] = ()
    flavor: str = PLAIN

    def __post_init__(self):
        if self.n < 0 or self.d < 1 or self.k < 1:
            raise InputError(f"bad dimensions n={self.n} d={self.d} k={self.k}")
        if self.flavor not in FLAVORS:
            raise InputError(f"unknown flavor {self.flavor!r}")
        for c in self.table:
            if c.d != self.d:
                raise InputError(f"constraint domain {c.d} differs from instance domain {self.d}")
        seen = set()
        for i, (vs, cid) in enumerate(self.edges):
            if not 0 <= cid < len(self.table):
                raise InputError(f"edge {i}: constraint id {cid} out of range")
            if len(vs) != self.table[cid].k:
                raise InputError(f"edge {i}: {len(vs)} variables for a constraint of arity {self.table[cid].k}")
            if len(set(vs)) != len(vs):
                raise InputError(f"edge {i}: repeated variable in {vs}")
            for v in vs:
                if not 0 <= v < self.n:
                    raise InputError(f"edge {i}: variable {v} outside 0..{self.n - 1}")
            if self.flavor == PLAIN:
                key = frozenset(vs)
                if key in seen:
                    raise InputError(f"edge {i}: second constraint on {sorted(key)} in a plain instance")
                seen.add(key)

    @property
    def m(self) -> int:
        return len(self.edges)

    def constraint(self, e: int) -> Constraint:
        return self.table[self.edges[e][1]]

    def incidence(self) -> list[list[int]]:
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for i, (vs, _) in enumerate(self.edges):
            for v in vs:
                inc[v].append(i)
        return inc

    def with_flavor(self, flavor: str) -> Instance:
        return Instance(self.n, self.d, self.k, self.edges, self.table, flavor)

    def add_edges(
        self,
        edges: Iterable[tuple[Sequence[int], Constraint]],
        flavor: str | None = None,
        n: int | None = None,
    ) -> Instance:
        """New instance with extra ``(variables, constraint)`` edges appended."""
        table = list(self.table)
        index = {c: i for i, c in enumerate(table)}
        out = list(self.edges)
        for vs, c in edges:
            cid = index.get(c)
            if cid is None:
                cid = index[c] = len(table)
                table.append(c)
            out.append((tuple(vs), cid))
        return Instance(
            self.n if n is None else n, self.d, self.k, tuple(out), tuple(table), flavor or self.flavor
        )

    def subinstance(self, edge_ids: Iterable[int]) -> Instance:
        """Same variables, only the listed edges (table left untouched)."""
        return Instance(self.n, self.d, self.k, tuple(self.edges[i] for i in edge_ids), self.table, self.flavor)

    def induced(self, variables: Sequence[int]) -> tuple[Instance, dict[int, int]]:
        """Instance on ``variables`` (relabelled ``0..len-1`` in the given order) keeping
        edges that lie entirely inside."""
        relabel = {v: i for i, v in enumerate(variables)}
        kept = tuple(
            (tuple(relabel[v] for v in vs), cid)
            for vs, cid in self.edges
            if all(v in relabel for v in vs)
        )
        return Instance(len(variables), self.d, self.k, kept, self.table, self.flavor), relabel

    def to_text(self) -> str:
        lines = [
            "CSPINST 1",
            f"d={self.d} k={self.k} n={self.n} flavor={self.flavor}",
            f"ncons={len(self.table)}",
        ]
        for i, c in enumerate(self.table):
            lines.append(f"cons {i} arity={c.k} nres={c.nres} : {c.describe()}".rstrip())
        lines.append(f"nedges={len(self.edges)}")
        for vs, cid in self.edges:
            lines.append(f"edge {cid} " + " ".join(map(str, vs)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Instance:
        return parse_instance(text)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def load(cls, path: str | Path) -> Instance:
        return parse_instance(Path(path).read_text(encoding="ascii"))


def _kv(tokens: Iterable[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise InputError(f"line {lineno}: expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        out[key] = val
    return out


def _int(s: str, what: str, lineno: int) -> int:
    try:
        return int(s)
    except ValueError:
        raise InputError(f"line {lineno}: {what} must be an integer, got {s!r}") from None


def parse_tuples(body: str, d: int, k: int, lineno: int = 0) -> list[Tuple]:
    body = body.strip()
    if not body:
        return []
    out = []
    for chunk in body.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            t = tuple(int(x) for x in chunk.split(","))
        except ValueError:
            raise InputError(f"line {lineno}: bad tuple {chunk!r}") from None
        try:
            _check_tuple(t, d, k)
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        out.append(t)
    return out


def parse_instance(text: str) -> Instance:
    """Parse the ``CSPINST 1`` text format.  Blank lines and ``#`` lines are skipped."""
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0][1].split() != ["CSPINST", "1"]:
        raise InputError("line 1: expected header 'CSPINST 1'")
    it = iter(lines[1:])
    try:
        lineno, ln = next(it)
        head = _kv(ln.split(), lineno)
        for key in ("d", "k", "n", "flavor"):
            if key not in head:
                raise InputError(f"line {lineno}: missing key {key!r}")
        d, k, n = (_int(head[x], x, lineno) for x in ("d", "k", "n"))
        flavor = head["flavor"]
        lineno, ln = next(it)
        ncons = _int(_kv([ln], lineno).get("ncons", ""), "ncons", lineno)
        table = []
        for expect in range(ncons):
            lineno, ln = next(it)
            left, sep, right = ln.partition(":")
            toks = left.split()
            if not sep or len(toks) < 2 or toks[0] != "cons":
                raise InputError(f"line {lineno}: expected 'cons <id> arity=.. nres=.. : ...'")
            if _int(toks[1], "constraint id", lineno) != expect:
                raise InputError(f"line {lineno}: constraint ids must be consecutive from 0")
            kv = _kv(toks[2:], lineno)
            arity = _int(kv.get("arity", ""), "arity", lineno)
            nres = _int(kv.get("nres", ""), "nres", lineno)
            tuples = parse_tuples(right, d, arity, lineno)
            if len(tuples) != nres:
                raise InputError(f"line {lineno}: nres={nres} but {len(tuples)} tuples listed")
            table.append(Constraint.from_restrictions(d, arity, tuples))
        lineno, ln = next(it)
        nedges = _int(_kv([ln], lineno).get("nedges", ""), "nedges", lineno)
        edges = []
        for _ in range(nedges):
            lineno, ln = next(it)
            toks = ln.split()
            if len(toks) < 3 or toks[0] != "edge":
                raise InputError(f"line {lineno}: expected 'edge <cid> <v1> ...'")
            cid = _int(toks[1], "constraint id", lineno)
            vs = tuple(_int(t, "variable", lineno) for t in toks[2:])
            edges.append((vs, cid))
    except StopIteration:
        raise InputError("unexpected end of CSPINST input") from None
    extra = next(it, None)
    if extra is not None:
        raise InputError(f"line {extra[0]}: trailing content {extra[1]!r}")
    return Instance(n, d, k, tuple(edges), tuple(table), flavor)


def check_assignment(inst: Instance, a: Sequence[int]) -> None:
    if len(a) != inst.n:
        raise InputError(f"assignment has {len(a)} values for {inst.n} variables")
    for v, x in enumerate(a):
        if not 1 <= x <= inst.d:
            raise InputError(f"variable {v} has value {x} outside 1..{inst.d}")


def evaluate(inst: Instance, a: Sequence[int]) -> int | None:
    """Index of the first violated edge under complete assignment ``a``, or None if satisfied."""
    check_assignment(inst, a)
    for i, (vs, cid) in enumerate(inst.edges):
        if inst.table[cid].forbids([a[v] for v in vs]):
            return i
    return None


def satisfies(inst: Instance, a: Sequence[int]) -> bool:
    return evaluate(inst, a) is None
