"""Random instance generation.

All randomness flows through numpy's PCG64 generator.  A trial's stream is
derived by hashing ``(seed, trial)`` with ``SeedSequence``, so trials can be
generated in any order (or in parallel) and still reproduce bit for bit.

Edges are drawn by geometric skip-sampling over the lexicographic order of
the candidate tuples: the gap to the next selected tuple is Geometric(p), so
the work is proportional to the number of selected tuples rather than to the
size of the candidate space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HAT, PLAIN, Constraint, ConstraintDistribution, Instance
from .errors import InputError
from .models import HypergraphH

MASK64 = (1 << 64) - 1
_INDEX_LIMIT = 1 << 62


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, trial)``."""
    ss = np.random.SeedSequence(entropy=seed & MASK64, spawn_key=(trial,))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit child seed from a master seed and integer keys."""
    ss = np.random.SeedSequence(entropy=seed & MASK64, spawn_key=tuple(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class GenSpec:
    dist: ConstraintDistribution
    n: int
    c: float
    flavor: str = PLAIN
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        if self.n < self.dist.k:
            raise InputError(f"n={self.n} is smaller than the arity k={self.dist.k}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise InputError(f"density c must be finite and >= 0 (got {self.c})")
        if self.flavor not in (PLAIN, HAT):
            raise InputError(f"unknown flavor {self.flavor!r}")
        if self.p > 1:
            raise InputError(f"edge probability p = c/n^(k-1) = {self.p} exceeds 1")

    @property
    def p(self) -> float:
        return self.c / self.n ** (self.dist.k - 1)

    def rng(self) -> np.random.Generator:
        return trial_rng(self.seed, self.trial)


def skip_sample(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Sorted indices in ``[0, total)``, each present independently with probability ``p``."""
    if total <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(total, dtype=np.int64)
    if total >= _INDEX_LIMIT:
        raise InputError(f"candidate space of {total} tuples is too large to index")
    mean = total * p
    batch = int(mean + 5 * math.sqrt(mean) + 16)
    chunks = []
    pos = -1
    while True:
        gaps = rng.geometric(p, size=batch)
        # cut at the first gap that alone leaves the range so cumsum cannot overflow
        far = np.flatnonzero(gaps > total)
        if len(far):
            gaps = gaps[: far[0] + 1]
            gaps[-1] = total + 1
        idx = pos + np.cumsum(gaps)
        if idx[-1] >= total:
            chunks.append(idx[idx < total])
            break
        chunks.append(idx)
        pos = int(idx[-1])
    return np.concatenate(chunks)


def _comb_table(n: int, i: int) -> np.ndarray:
    return np.array([math.comb(a, i) for a in range(n)], dtype=np.int64)


def unrank_subsets(ranks: np.ndarray, n: int, k: int) -> np.ndarray:
    """Rows of ascending k-subsets of ``range(n)`` at the given lexicographic ranks."""
    total = math.comb(n, k)
    r = (total - 1) - ranks.astype(np.int64)
    out = np.empty((len(ranks), k), dtype=np.int64)
    # colex unranking of the complement-reversed set
    for i in range(k, 0, -1):
        tab = _comb_table(n, i)
        a = np.searchsorted(tab, r, side="right") - 1
        out[:, k - i] = (n - 1) - a
        r = r - tab[a]
    return out


def unrank_arrangements(ranks: np.ndarray, n: int, k: int) -> np.ndarray:
    """Rows of ordered k-tuples of distinct elements of ``range(n)`` at lexicographic ranks."""
    radices = [n - j for j in range(k)]
    digits = np.empty((len(ranks), k), dtype=np.int64)
    r = ranks.astype(np.int64)
    for j in range(k - 1, -1, -1):
        r, digits[:, j] = np.divmod(r, radices[j])
    out = digits.copy()
    for j in range(1, k):
        prev = np.sort(out[:, :j], axis=1)
        v = digits[:, j].copy()
        for t in range(j):
            v += v >= prev[:, t]
        out[:, j] = v
    return out


def falling(n: int, k: int) -> int:
    return math.perm(n, k)


def _instance(dist, n, tuples, cids, flavor) -> Instance:
    edges = tuple((tuple(map(int, t)), int(c)) for t, c in zip(tuples, cids))
    return Instance(n, dist.d, dist.k, edges, tuple(dist.support), flavor)


def sample_plain(spec: GenSpec) -> Instance:
    """Plain model: each unordered k-set present with probability p, with a uniform
    position permutation and a constraint drawn from the distribution."""
    if spec.flavor != PLAIN:
        raise InputError("sample_plain needs flavor=plain")
    dist, n, k = spec.dist, spec.n, spec.dist.k
    rng = spec.rng()
    idx = skip_sample(rng, math.comb(n, k), spec.p)
    sets = unrank_subsets(idx, n, k)
    perms = np.argsort(rng.random((len(idx), k)), axis=1)
    tuples = np.take_along_axis(sets, perms, axis=1)
    if len(dist) == 1:
        cids = np.zeros(len(idx), dtype=np.int64)
    else:
        cids = rng.choice(len(dist), size=len(idx), p=dist.weights)
    return _instance(dist, n, tuples, cids, PLAIN)


def sample_hat(spec: GenSpec) -> Instance:
    """Hat model: every (ordered tuple, support constraint) pair independently
    with probability P(C) * p / k!."""
    if spec.flavor != HAT:
        raise InputError("sample_hat needs flavor=hat")
    dist, n, k = spec.dist, spec.n, spec.dist.k
    rng = spec.rng()
    total = falling(n, k)
    ranks, cids = [], []
    for j, (_, w) in enumerate(dist.entries):
        q = w * spec.p / math.factorial(k)
        if q > 1:
            raise InputError(f"per-tuple rate P(C)p/k! = {q} exceeds 1")
        idx = skip_sample(rng, total, q)
        ranks.append(idx)
        cids.append(np.full(len(idx), j, dtype=np.int64))
    ranks_a = np.concatenate(ranks)
    cids_a = np.concatenate(cids)
    order = np.lexsort((cids_a, ranks_a))
    ranks_a, cids_a = ranks_a[order], cids_a[order]
    tuples = unrank_arrangements(ranks_a, n, k)
    return _instance(dist, n, tuples, cids_a, HAT)


def sample(spec: GenSpec) -> Instance:
    return sample_plain(spec) if spec.flavor == PLAIN else sample_hat(spec)


def sample_digraph(n: int, p: float, seed: int | np.random.Generator) -> HypergraphH:
    """D_{n,p}: each of the n(n-1) ordered pairs is an arc with probability p.
    Vertices are ``1..n``."""
    if not 0 <= p <= 1:
        raise InputError(f"p must lie in [0, 1] (got {p})")
    rng = as_rng(seed)
    idx = skip_sample(rng, n * (n - 1), p)
    arcs = unrank_arrangements(idx, n, 2) + 1
    return HypergraphH(max(n, 1), 2, frozenset(map(tuple, arcs.tolist())), directed=True)


def plant_sub_csp(inst: Instance, M: Instance, rng: np.random.Generator | int | None = None) -> Instance:
    """F + M: copy M onto a uniformly random injective placement of its variables.

    The result is hat-flavoured since the copy may duplicate existing tuples.
    """
    if M.d != inst.d:
        raise InputError(f"domain mismatch: M has d={M.d}, instance has d={inst.d}")
    if M.k != inst.k:
        raise InputError(f"arity mismatch: M has k={M.k}, instance has k={inst.k}")
    if M.n > inst.n:
        raise InputError(f"M has {M.n} variables, more than the instance's {inst.n}")
    place = as_rng(rng).choice(inst.n, size=M.n, replace=False)
    new = ((tuple(int(place[v]) for v in vs), M.table[cid]) for vs, cid in M.edges)
    return inst.add_edges(new, flavor=HAT)


def pin(d: int, value: int) -> Constraint:
    """Unary constraint forcing a variable to ``value``."""
    return Constraint.from_allowed(d, 1, [(value,)])


def plant_assignment(
    inst: Instance, values: list[int], rng: np.random.Generator | int | None = None
) -> Instance:
    """F + A: pin a uniformly random ordered tuple of distinct variables to ``values``."""
    if len(values) > inst.n:
        raise InputError(f"{len(values)} pinned values for {inst.n} variables")
    for x in values:
        if not 1 <= x <= inst.d:
            raise InputError(f"pinned value {x} outside 1..{inst.d}")
    chosen = as_rng(rng).choice(inst.n, size=len(values), replace=False)
    new = [((int(v),), pin(inst.d, x)) for v, x in zip(chosen, values)]
    unary_taken = {vs for vs, _ in inst.edges if len(vs) == 1}
    clash = any(vs in unary_taken for vs, _ in new)
    flavor = HAT if clash else inst.flavor
    return inst.add_edges(new, flavor=flavor)


def duplicate_sets(inst: Instance) -> int:
    """Number of variable sets carrying two or more constraints."""
    counts: dict[frozenset[int], int] = {}
    for vs, _ in inst.edges:
        key = frozenset(vs)
        counts[key] = counts.get(key, 0) + 1
    return sum(1 for x in counts.values() if x >= 2)
