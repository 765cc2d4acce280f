import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import naive_sat
from csplab.core import HAT, PLAIN, Constraint, Instance, satisfies
from csplab.errors import CapacityError
from csplab.models import (
    HypergraphH,
    build_coloring,
    build_dkt,
    build_paper_ed3,
    build_paper_s3,
    complete_graph,
    cycle_graph,
)
from csplab.sampler import GenSpec, sample
from csplab.solver import (
    BUDGET,
    SAT,
    UNSAT,
    Compiled,
    brute_force,
    graph_instance,
    homomorphic,
    is_homomorphism,
    solve,
    solve_restricted,
)

MODELS = {
    "3sat": (build_dkt(2, 3, 1), 4.0),
    "ed3": (build_paper_ed3(), 2.0),
    "col3": (build_coloring(3), 3.0),
    "s3": (build_paper_s3(0.25), 3.0),
}


@settings(max_examples=120, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.integers(5, 9), st.integers(0, 10**6),
       st.sampled_from([PLAIN, HAT]), st.sampled_from([0, 3, 20]))
def test_solve_agrees_with_naive_enumeration(name, n, seed, flavor, width):
    dist, c = MODELS[name]
    if dist.d**n > 20000:
        n = 5
    inst = sample(GenSpec(dist, n, c * n ** (dist.k - 2), flavor, seed))
    r = solve(inst, lookahead=width)
    assert r.sat == brute_force(inst).sat
    if r.sat:
        assert satisfies(inst, r.assignment)


def test_brute_force_and_solver_match_naive_on_small_cases():
    for name, (dist, c) in MODELS.items():
        for seed in range(15):
            n = 6 if dist.d < 5 else 4
            inst = sample(GenSpec(dist, n, c * n ** (dist.k - 2), HAT, seed))
            want = naive_sat(inst)
            assert brute_force(inst).sat == want
            assert solve(inst).sat == want


def test_trivial_instances():
    assert solve(Instance(0, 2, 2)).status == SAT
    assert solve(Instance(3, 2, 2)).assignment == (1, 1, 1)
    empty = Constraint.from_restrictions(2, 1, [(1,), (2,)])
    assert solve(Instance(1, 2, 1).add_edges([((0,), empty)])).status == UNSAT


def test_contract_mode_is_deterministic_smallest_value_first():
    inst = Instance(3, 3, 2).add_edges([((0, 1), build_coloring(3).support[0])])
    assert solve(inst).assignment == (1, 2, 1)


def test_budget_exhaustion_reports_budget():
    inst = sample(GenSpec(build_dkt(2, 3, 1), 120, 4.3 * 6, PLAIN, 3))
    r = solve(inst, budget=5)
    assert r.status == BUDGET and r.assignment is None


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.integers(6, 9), st.integers(0, 10**6))
def test_restarts_keep_answers_exact(name, n, seed):
    # a one-node restart cap forces many perturbed runs per instance
    import csplab.solver as solver

    dist, c = MODELS[name]
    if dist.d**n > 20000:
        n = 6
    inst = sample(GenSpec(dist, n, c * n ** (dist.k - 2), PLAIN, seed))
    old = solver.RESTART_BASE
    solver.RESTART_BASE = 1
    try:
        r = solve(inst, lookahead=3)
    finally:
        solver.RESTART_BASE = old
    assert r.sat == brute_force(inst).sat
    if r.sat:
        assert satisfies(inst, r.assignment)


def test_restarted_search_is_reproducible():
    inst = sample(GenSpec(build_coloring(3), 300, 4.4, PLAIN, 7))
    a, b = solve(inst, lookahead=20), solve(inst, lookahead=20)
    assert a == b and a.status != BUDGET


def test_solve_restricted_per_variable_and_global():
    inst = graph_instance(cycle_graph(5), complete_graph(3))
    assert solve_restricted(inst, {1, 2}).status == UNSAT
    allowed = [{1}, {2, 3}, {1, 2, 3}, {1, 2, 3}, {2}]
    r = solve_restricted(inst, allowed)
    assert r.sat and r.assignment[0] == 1 and r.assignment[4] == 2


def test_compiled_instance_reused_across_restrictions():
    inst = graph_instance(cycle_graph(4), complete_graph(2))
    comp = Compiled(inst)
    assert comp.sat()
    assert comp.status(pins={0: 1, 2: 1}) == SAT
    assert comp.status(pins={0: 1, 1: 1}) == UNSAT
    assert comp.status(masks={0: 0b01, 3: 0b01}) == UNSAT


def test_brute_force_limit():
    with pytest.raises(CapacityError):
        brute_force(Instance(30, 3, 2))


@pytest.mark.parametrize("r", range(3, 16))
def test_cycles_map_to_triangle(r):
    h = homomorphic(cycle_graph(r), complete_graph(3))
    assert h is not None and is_homomorphism(cycle_graph(r), complete_graph(3), h)


def test_triangle_does_not_map_to_c5():
    assert homomorphic(complete_graph(3), cycle_graph(5)) is None


def test_odd_cycle_not_two_colourable():
    assert homomorphic(cycle_graph(7), complete_graph(2)) is None
    assert homomorphic(cycle_graph(8), complete_graph(2)) is not None


def test_graph_instance_collapses_loops():
    G = HypergraphH.from_edges(2, [(1, 1), (1, 2)])
    H = HypergraphH.from_edges(2, [(1, 2)])
    assert homomorphic(G, H) is None
    H2 = HypergraphH.from_edges(2, [(1, 1), (1, 2)])
    assert homomorphic(G, H2) is not None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_homomorphism_matches_naive(seed):
    rng = np.random.default_rng(seed)
    def rand_graph(n, p):
        e = [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1) if rng.random() < p]
        return HypergraphH.from_edges(n, e)
    G, H = rand_graph(5, 0.5), rand_graph(4, 0.5)
    import itertools
    brute = any(is_homomorphism(G, H, dict(zip(range(1, 6), img)))
                for img in itertools.product(range(1, 5), repeat=5))
    assert (homomorphic(G, H) is not None) == brute
