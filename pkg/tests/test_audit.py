import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csplab.audit import (
    ALL_SATISFIABLE,
    COUNTEREXAMPLE,
    NO_COUNTEREXAMPLE,
    achievable_sets,
    audit,
    audit_binary,
    audit_bounded,
    compose,
    distance_homomorphism,
    image,
    relation_of,
    relation_semigroup,
    single_edge,
    unicyclic_homomorphism,
    verify_homomorphism,
)
from csplab.core import Constraint, ConstraintDistribution, Instance
from csplab.errors import InputError, UnsupportedError
from csplab.models import (
    HypergraphH,
    build_coloring,
    build_dkt,
    build_homomorphism,
    build_paper_ed3,
    build_paper_s3,
    complete_graph,
    cycle_graph,
)
from csplab.solver import homomorphic, solve
from csplab.structure import TREE, UNICYCLIC, classify, hypergraph_instance, random_unicyclic_edges


def single(c):
    return ConstraintDistribution(c.d, c.k, ((c, 1.0),), "single")


def test_relation_helpers_against_matrix_product():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = 3
        A = rng.random((d, d)) < 0.4
        B = rng.random((d, d)) < 0.4
        want = relation_of((A.astype(int) @ B.astype(int)) > 0)
        assert compose(relation_of(A), relation_of(B), d) == want
        S = int(rng.integers(1, 1 << d))
        svec = np.array([(S >> i) & 1 for i in range(d)], dtype=bool)
        img = sum(1 << a for a in range(d) if (A[a] & svec).any())
        assert image(relation_of(A), S, d) == img


def test_achievable_sets_examples():
    assert achievable_sets(single(Constraint.empty(3, 2))).sets == {frozenset({1, 2, 3})}
    assert achievable_sets(build_coloring(2)).sets == {frozenset({1, 2})}
    fam = achievable_sets(build_paper_ed3())
    assert frozenset() not in fam.sets and frozenset({1, 2, 3}) in fam.sets


def tree_root_sets(dist, max_vars):
    """Oracle: root candidate sets after arc consistency, over every labelled tree
    with at most ``max_vars`` variables and every constraint/orientation choice."""
    from csplab.solver import solve_restricted

    d = dist.d
    out = set()
    for nv in range(1, max_vars + 1):
        # Pruefer-free enumeration: parent pointers 1..nv-1 -> earlier vertex
        for parents in itertools.product(*[range(i) for i in range(1, nv)]):
            for cons in itertools.product(range(len(dist)), repeat=nv - 1):
                for orient in itertools.product((0, 1), repeat=nv - 1):
                    edges = []
                    for i, (p, c, o) in enumerate(zip(parents, cons, orient)):
                        edges.append(((p, i + 1) if o == 0 else (i + 1, p), dist.support[c]))
                    inst = Instance(nv, d, 2, flavor="hat").add_edges(edges)
                    ok = frozenset(a for a in range(1, d + 1)
                                   if solve_restricted(inst, [{a}] + [set(range(1, d + 1))] * (nv - 1)).sat)
                    out.add(ok)
    return out


@pytest.mark.parametrize("dist,max_vars", [(build_paper_ed3(), 5), (build_coloring(2), 4),
                                           (build_dkt(3, 2, 2), 3)], ids=["ed3", "col2", "dkt322"])
def test_achievable_sets_exact_on_small_trees(dist, max_vars):
    """Every root set of a tree is a member of F (trees are arc consistent, so the
    root set is exact).  Members of F come with a realising tree."""
    from csplab.audit import _Builder
    from csplab.solver import solve_restricted

    fam = achievable_sets(dist)
    roots = tree_root_sets(dist, max_vars)
    masks = {sum(1 << (a - 1) for a in s) for s in roots}
    assert masks <= set(fam.size)
    for S in fam.size:
        b = _Builder()
        r = fam.realize(S, b)
        inst, lab = b.instance(dist)
        r = lab[r]
        ok = sum(1 << (a - 1) for a in range(1, dist.d + 1)
                 if solve_restricted(inst, [{a} if v == r else set(range(1, dist.d + 1))
                                            for v in range(inst.n)]).sat)
        assert ok == S


@pytest.mark.parametrize("dist", [build_paper_ed3(), build_dkt(3, 2, 1), build_dkt(3, 2, 2),
                                  build_paper_s3(0.25)], ids=lambda d: d.name)
def test_binary_audit_all_satisfiable(dist):
    assert audit_binary(dist).verdict == ALL_SATISFIABLE


def test_two_colouring_counterexample_is_odd_cycle():
    res = audit_binary(build_coloring(2))
    assert res.verdict == COUNTEREXAMPLE and res.kind == "cycle"
    w = res.witness
    cl = classify(w)
    assert cl.kind == UNICYCLIC and len(cl.vertices) % 2 == 1
    assert solve(w).status == "unsat"


def test_full_constraint_gives_single_edge_witness():
    res = audit(single(Constraint.full(2, 2)))
    assert res.verdict == COUNTEREXAMPLE and res.witness.m == 1
    res3 = audit_bounded(single(Constraint.full(2, 3)), 4)
    assert res3.verdict == COUNTEREXAMPLE and res3.witness.m == 1
    assert classify(res3.witness).kind == TREE


@pytest.mark.parametrize("dist", [build_paper_ed3(), build_coloring(2), build_dkt(3, 2, 2),
                                  build_paper_s3(0.25), build_dkt(3, 2, 1)], ids=lambda d: d.name)
def test_bounded_audit_agrees_with_binary(dist):
    b = audit_binary(dist)
    e = audit_bounded(dist, 8)
    assert (b.verdict == COUNTEREXAMPLE) == (e.verdict == COUNTEREXAMPLE)
    if e.verdict == COUNTEREXAMPLE:
        assert classify(e.witness).kind in (TREE, UNICYCLIC)
        assert solve(e.witness).status == "unsat"


def test_single_hyperedge_model_has_no_small_counterexample():
    dist = build_homomorphism(single_edge(3))
    assert audit_bounded(dist, 8).verdict == NO_COUNTEREXAMPLE
    with pytest.raises(UnsupportedError):
        audit_binary(dist)


def test_semigroup_closure_is_idempotent_and_bounded():
    dist = build_paper_ed3()
    fam = achievable_sets(dist)
    p1, o1 = relation_semigroup(dist, fam)
    p2, o2 = relation_semigroup(dist, fam)
    assert o1 == o2 and set(p1) == set(p2)
    assert len({rel for rel, _ in p1}) <= 1 << 9


@pytest.mark.parametrize("r", [3, 4, 5, 6])
def test_unicyclic_homomorphism_on_cycles(r):
    edges = [(2 * i + 1, 2 * i + 2, (2 * i + 2) % (2 * r) + 1) for i in range(r)]
    G = HypergraphH.from_edges(2 * r, edges, k=3)
    h = unicyclic_homomorphism(G)
    assert verify_homomorphism(G, single_edge(3), h)
    cyc = classify(hypergraph_instance(G))
    images = [h[v] for v in cyc.vertices]
    assert images[-1] == 3 and images[:-1] == [1 + i % 2 for i in range(r - 1)]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([3, 4]), st.integers(2, 9), st.integers(0, 10**6))
def test_unicyclic_homomorphism_random(k, m, seed):
    nv, edges = random_unicyclic_edges(k, m, np.random.default_rng(seed))
    inst = Instance(nv, 1, k, flavor="hat").add_edges((e, Constraint.empty(1, k)) for e in edges)
    h = unicyclic_homomorphism(inst)
    assert verify_homomorphism(inst, single_edge(k), h)


def test_unicyclic_homomorphism_errors():
    tree = Instance(5, 1, 3).add_edges([((0, 1, 2), Constraint.empty(1, 3)), ((2, 3, 4), Constraint.empty(1, 3))])
    with pytest.raises(InputError):
        unicyclic_homomorphism(tree)
    with pytest.raises(InputError):
        unicyclic_homomorphism(cycle_graph(5))


def test_distance_homomorphism_on_k4():
    K4 = complete_graph(4)
    r = 7
    path = [(1, 2), (2, 3), (3, 1), (3, 4)] + [(4 + i, 5 + i) for i in range(r - 1)]
    M = HypergraphH.from_edges(3 + r, path)
    for u in (1, 2, 3, 4):
        h = distance_homomorphism(M, K4, u, r)
        assert h[3 + r - 1] == u
        assert verify_homomorphism(M, K4, h)
    with pytest.raises(InputError):
        distance_homomorphism(M, K4, 1, 3)
    with pytest.raises(InputError):
        distance_homomorphism(M, cycle_graph(5), 1, 9)


def test_triangle_to_h_iff_h_has_triangle():
    from csplab.audit import find_triangle

    rng = np.random.default_rng(8)
    for _ in range(100):
        pairs = [(a, b) for a, b in itertools.combinations(range(1, 9), 2) if rng.random() < 0.3]
        H = HypergraphH.from_edges(8, pairs)
        brute = any({(a, b), (b, c), (a, c)} <= set(pairs) for a, b, c in itertools.combinations(range(1, 9), 3))
        assert (homomorphic(complete_graph(3), H) is not None) == brute == (find_triangle(H) is not None)
