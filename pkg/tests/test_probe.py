import math
import time
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from csplab.core import HAT, PLAIN, Instance
from csplab.errors import InputError
from csplab.models import build_coloring, build_dkt, build_paper_ed3, build_paper_s3
from csplab.probe import (
    GRID_HEADER,
    INCONCLUSIVE,
    NON_SHARPENING,
    SHARPENING,
    Cell,
    ThresholdCurve,
    case_predicate,
    constraints_per_variable,
    duplicate_csv,
    duplicate_experiment,
    exact_predicate,
    fact9_experiment,
    locate_threshold,
    parse_grid,
    psat_grid,
    sharpness_diagnostic,
    width_of,
)
from csplab.sampler import GenSpec, plant_sub_csp, sample
from csplab.solver import solve

SAT2 = build_dkt(2, 2, 1)
SAT3 = build_dkt(2, 3, 1)


def logistic_curve(n_list, c_grid, centre, scale_of_n, trials=1000):
    """Synthetic curve with P_sat exactly on a logistic of width scale_of_n(n)."""
    curve = ThresholdCurve("synthetic", PLAIN, tuple(n_list), tuple(c_grid))
    for n in n_list:
        for c in c_grid:
            p = 1 / (1 + math.exp((c - centre) / scale_of_n(n)))
            sat = round(p * trials)
            curve.cells[(n, c)] = Cell(n, c, trials, sat, trials - sat)
    return curve


def test_parse_grid():
    assert parse_grid("1:2:0.25") == (1.0, 1.25, 1.5, 1.75, 2.0)
    assert parse_grid("0.1, 0.3") == (0.1, 0.3)
    for bad in ("2:1:0.1", "1:2:0", "a,b"):
        with pytest.raises(InputError):
            parse_grid(bad)


def test_constraints_per_variable():
    # plain 3-SAT: C(n,3) c / n^2 / n -> c / 6
    assert constraints_per_variable(SAT3, 1000, 6.0) == pytest.approx(math.comb(1000, 3) * 6 / 1000**3)
    assert constraints_per_variable(SAT2, 10**6, 2.0) == pytest.approx(1.0, rel=1e-5)


def test_width_of_logistic_matches_closed_form():
    # logistic: c(P=1/4) - c(P=3/4) = 2 s ln 3
    grid = [1 + 0.01 * i for i in range(201)]
    curve = logistic_curve([100], grid, 2.0, lambda n: 0.1)
    w = curve.widths()[100]
    assert w.c_half == pytest.approx(2.0, abs=0.01)
    assert w.width == pytest.approx(2 * 0.1 * math.log(3), abs=0.01)
    assert w.lo <= w.width <= w.hi


def test_sharpness_diagnostic_on_synthetic_curves():
    grid = [1 + 0.02 * i for i in range(101)]
    sharp = logistic_curve([50, 100, 200, 400], grid, 2.0, lambda n: 2 / math.sqrt(n))
    assert sharpness_diagnostic(sharp).verdict == SHARPENING
    flat = logistic_curve([50, 100, 200, 400], grid, 2.0, lambda n: 0.2)
    d = sharpness_diagnostic(flat)
    assert d.verdict == NON_SHARPENING and "not proof" in d.label
    assert sharpness_diagnostic(logistic_curve([50], grid, 2.0, lambda n: 0.2)).verdict == INCONCLUSIVE


def test_zero_density_column_is_always_satisfiable():
    curve = psat_grid(SAT3, PLAIN, [30], [0.0, 10.0], 25, seed=1)
    assert curve.cell(30, 0.0).sat == 25 and curve.cell(30, 0.0).phat == 1.0


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_cell_invariants(sat, unsat, budget):
    cl = Cell(10, 1.0, sat + unsat + budget, sat, unsat, budget)
    lo, hi = cl.interval
    assert 0 <= lo <= hi <= 1
    assert cl.sat <= cl.trials
    assert cl.unreliable == (budget > 0.1 * cl.trials)


def test_grid_csv_format():
    curve = psat_grid(build_paper_ed3(), PLAIN, [40], [1.0, 3.0], 10, seed=2)
    lines = curve.to_csv().splitlines()
    assert lines[0] == GRID_HEADER and len(lines) == 3
    assert lines[1].startswith("ed3,plain,40,1,10,")


def test_budget_outcomes_are_excluded_and_flagged():
    curve = psat_grid(SAT3, PLAIN, [150], [25.8], 10, seed=3, budget=2, lookahead=0)
    cl = curve.cell(150, 25.8)
    assert cl.budget > 1 and cl.sat + cl.unsat + cl.budget == 10
    assert cl.unreliable and cl in curve.unreliable_cells()


def test_grid_is_independent_of_worker_count():
    args = (build_paper_ed3(), PLAIN, [60, 120], [1.5, 2.5], 30)
    one = psat_grid(*args, seed=5, jobs=1)
    two = psat_grid(*args, seed=5, jobs=2)
    assert one.to_csv() == two.to_csv()


def test_deadline_marks_curve_incomplete():
    curve = psat_grid(SAT3, PLAIN, [30], [1.0, 2.0], 5, deadline=time.time() - 1)
    assert not curve.complete and not curve.cells


def test_grid_validation():
    with pytest.raises(InputError):
        psat_grid(SAT3, PLAIN, [30], [1.0], 0)
    with pytest.raises(InputError):
        psat_grid(SAT3, PLAIN, [3], [100.0], 5)


def test_planting_never_increases_satisfiability():
    """Instance by instance, adding constraints can only turn sat into unsat."""
    dist = build_coloring(3)
    K4 = Instance(4, 3, 2).add_edges(
        [((a, b), dist.support[0]) for a in range(4) for b in range(a + 1, 4)])
    base = planted = 0
    for t in range(60):
        inst = sample(GenSpec(dist, 100, 3.5, PLAIN, 7, t))
        s0 = solve(inst, lookahead=20).sat
        s1 = solve(plant_sub_csp(inst, K4.subinstance(range(3)), t), lookahead=20).sat
        assert not (s1 and not s0)
        base += s0
        planted += s1
    assert planted <= base


def test_locate_threshold_out_of_range_low():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dist = build_dkt(2, 2, 2)
    # the crossing shrinks like n^-1/2 (about c=0.13 at n=2000), so use a larger n
    est = locate_threshold(dist, PLAIN, 10000, 40, 0.1, seed=1)
    assert est.flag == "out-of-range-low"


def test_locate_threshold_out_of_range_high():
    est = locate_threshold(build_dkt(2, 2, 0), PLAIN, 20, 5, 0.1, seed=1)
    assert est.flag == "out-of-range-high" and math.isinf(est.c_half)


def test_fact9_small():
    rep = fact9_experiment(0.25, [100], 10, seed=1)
    assert rep.header().startswith("# s3 q=0.25 boundary c(q)=(1-q)/q=3 ")
    low, high = rep.rows
    assert low.sat == low.trials
    assert high.agree_exact == high.trials


def test_case_and_exact_predicates_match_solver_on_small_instances():
    dist = build_paper_s3(0.25)
    for c in (0.8, 2.0, 5.0):
        for t in range(10):
            inst = sample(GenSpec(dist, 60, c, PLAIN, 11, t))
            assert exact_predicate(inst) == solve(inst).sat


def test_duplicate_experiment_rows():
    rows = duplicate_experiment([build_coloring(2)], [200], 1.0, 10, seed=0)
    assert rows[0].k == 2 and rows[0].trials == 10
    assert duplicate_csv(rows).splitlines()[0].startswith("k,n,c,trials")
