"""Monte Carlo estimates of Pr(satisfiable) over (n, c) grids.

Every trial is an independent instance drawn with seed ``derive_seed(seed,
n, c_key)`` and trial index t, so a cell's outcome does not depend on which
other cells are in the grid, on the order of evaluation, or on the number of
workers.  Budget-exceeded trials are excluded from the estimate and counted
separately.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import HAT, PLAIN, ConstraintDistribution, Instance
from .errors import CapacityError, InputError
from .sampler import GenSpec, derive_seed, sample
from .solver import BUDGET, DEFAULT_BUDGET, SAT, solve
from .stats import crossing, isotonic_decreasing, wilson

UNRELIABLE_FRACTION = 0.10
DEFAULT_LOOKAHEAD = 20

SHARPENING = "sharpening"
NON_SHARPENING = "non-sharpening"
INCONCLUSIVE = "inconclusive"

GRID_HEADER = "model,flavor,n,c,trials,sat,unsat,budget,phat,lo95,hi95"
SUMMARY_HEADER = "model,n,chalf,width,lo,hi"


def c_key(c: float) -> int:
    """Integer key of a density for seeding (stable under float formatting)."""
    return int(round(c * 10**9))


def fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(x, ".10g")


def constraints_per_variable(dist: ConstraintDistribution, n: int, c: float, flavor: str = PLAIN) -> float:
    """Expected number of constraints divided by n at density c."""
    k = dist.k
    p = c / n ** (k - 1)
    if flavor == HAT:
        return math.perm(n, k) * p / math.factorial(k) / n
    return math.comb(n, k) * p / n


@dataclass
class Cell:
    n: int
    c: float
    trials: int = 0
    sat: int = 0
    unsat: int = 0
    budget: int = 0
    nodes: int = 0

    @property
    def decided(self) -> int:
        return self.sat + self.unsat

    @property
    def phat(self) -> float:
        return self.sat / self.decided if self.decided else float("nan")

    @property
    def interval(self) -> tuple[float, float]:
        return wilson(self.sat, self.decided)

    @property
    def unreliable(self) -> bool:
        return self.budget > UNRELIABLE_FRACTION * self.trials


@dataclass
class Width:
    n: int
    c_half: float
    c75: float
    c25: float
    width: float
    lo: float
    hi: float


@dataclass
class ThresholdCurve:
    model: str
    flavor: str
    n_list: tuple[int, ...]
    c_grid: tuple[float, ...]
    cells: dict[tuple[int, float], Cell] = field(default_factory=dict)
    complete: bool = True

    def cell(self, n: int, c: float) -> Cell:
        return self.cells[(n, c)]

    def column(self, n: int) -> list[Cell]:
        return [self.cells[(n, c)] for c in self.c_grid if (n, c) in self.cells]

    def widths(self) -> dict[int, Width]:
        return {n: width_of(self.column(n)) for n in self.n_list if self.column(n)}

    def unreliable_cells(self) -> list[Cell]:
        return [cl for cl in self.cells.values() if cl.unreliable]

    def monotonicity_violations(self) -> list[tuple[Cell, Cell]]:
        """Pairs c < c' in one column whose intervals show P_sat(c') > P_sat(c)."""
        out = []
        for n in self.n_list:
            col = [cl for cl in self.column(n) if cl.decided]
            for i, a in enumerate(col):
                for b in col[i + 1:]:
                    if a.interval[1] < b.interval[0]:
                        out.append((a, b))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(GRID_HEADER.split(","))
        for n in self.n_list:
            for c in self.c_grid:
                cl = self.cells.get((n, c))
                if cl is None:
                    continue
                lo, hi = cl.interval
                w.writerow([self.model, self.flavor, n, fmt(c), cl.trials, cl.sat, cl.unsat, cl.budget,
                            f"{cl.phat:.6f}", f"{lo:.6f}", f"{hi:.6f}"])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER.split(","))
        for n, wd in self.widths().items():
            w.writerow([self.model, n, fmt(wd.c_half), fmt(wd.width), fmt(wd.lo), fmt(wd.hi)])
        return buf.getvalue()


def width_of(col: Sequence[Cell]) -> Width:
    """Crossings of the monotone fit at 1/2, 3/4, 1/4 and a band for the width
    from the monotone fits of the Wilson bounds."""
    col = [cl for cl in col if cl.decided]
    n = col[0].n if col else 0
    if not col:
        nan = float("nan")
        return Width(n, nan, nan, nan, nan, 0.0, float("inf"))
    cs = [cl.c for cl in col]
    fit = isotonic_decreasing([cl.phat for cl in col], [cl.decided for cl in col])
    upper = isotonic_decreasing([cl.interval[1] for cl in col])
    lower = isotonic_decreasing([cl.interval[0] for cl in col])
    c_half = crossing(cs, fit, 0.5)
    c75, c25 = crossing(cs, fit, 0.75), crossing(cs, fit, 0.25)
    width = c25 - c75 if math.isfinite(c25) and math.isfinite(c75) else float("nan")
    # the upper curve crosses a level later than the lower one
    c25_lo, c25_hi = crossing(cs, lower, 0.25), crossing(cs, upper, 0.25)
    c75_lo, c75_hi = crossing(cs, lower, 0.75), crossing(cs, upper, 0.75)
    lo = _sub(c25_lo, c75_hi, low=True)
    hi = _sub(c25_hi, c75_lo, low=False)
    return Width(n, c_half, c75, c25, width, lo, hi)


def _sub(a: float, b: float, low: bool) -> float:
    """a - b for band ends, resolving out-of-grid crossings conservatively."""
    if math.isnan(a) or math.isnan(b):
        return 0.0 if low else float("inf")
    if low:
        if a == float("-inf") or b == float("inf"):
            return 0.0
        return max(0.0, a - b)
    if a == float("inf") or b == float("-inf"):
        return float("inf")
    return max(0.0, a - b)


# ------------------------------------------------------------------ running


def _run_chunk(args):
    dist, flavor, n, c, seed, t0, t1, budget, lookahead = args
    out = []
    cs = derive_seed(seed, n, c_key(c))
    for t in range(t0, t1):
        inst = sample(GenSpec(dist, n, c, flavor, cs, t))
        res = solve(inst, budget, lookahead)
        out.append((res.status, res.nodes))
    return out


def psat_grid(
    dist: ConstraintDistribution,
    flavor: str,
    n_list: Iterable[int],
    c_grid: Iterable[float],
    trials: int,
    seed: int = 0,
    budget: int = DEFAULT_BUDGET,
    lookahead: int = DEFAULT_LOOKAHEAD,
    jobs: int = 1,
    deadline: float | None = None,
    progress=None,
) -> ThresholdCurve:
    """Estimate Pr(sat) on every (n, c) cell with ``trials`` independent instances.

    ``deadline`` (seconds since the epoch) stops the run between cells; the
    returned curve then has ``complete = False`` and only the finished cells.
    """
    n_list = tuple(int(n) for n in n_list)
    c_grid = tuple(float(c) for c in c_grid)
    if trials < 1:
        raise InputError("trials must be positive")
    if flavor not in (PLAIN, HAT):
        raise InputError(f"unknown flavor {flavor!r}")
    for n in n_list:
        for c in c_grid:
            GenSpec(dist, n, c, flavor)  # validates n, c and p <= 1 up front
    curve = ThresholdCurve(dist.name, flavor, n_list, c_grid)
    cells = [(n, c) for n in n_list for c in c_grid]
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for n, c in cells:
            if deadline is not None and time.time() > deadline:
                curve.complete = False
                break
            if pool is None:
                outcomes = _run_chunk((dist, flavor, n, c, seed, 0, trials, budget, lookahead))
            else:
                step = max(1, math.ceil(trials / (4 * jobs)))
                parts = [
                    (dist, flavor, n, c, seed, t, min(trials, t + step), budget, lookahead)
                    for t in range(0, trials, step)
                ]
                outcomes = [o for chunk in pool.map(_run_chunk, parts) for o in chunk]
            cl = Cell(n, c, trials)
            for status, nodes in outcomes:
                cl.nodes += nodes
                if status == SAT:
                    cl.sat += 1
                elif status == BUDGET:
                    cl.budget += 1
                else:
                    cl.unsat += 1
            curve.cells[(n, c)] = cl
            if progress is not None:
                progress(cl)
    finally:
        if pool is not None:
            pool.shutdown()
    return curve


# --------------------------------------------------------------- diagnostic


@dataclass
class Diagnostic:
    verdict: str
    widths: dict[int, Width]
    reason: str
    label: str = "heuristic evidence, not proof"


def sharpness_diagnostic(curve: ThresholdCurve) -> Diagnostic:
    """Sharpening: finite widths decreasing in n, last < 0.6 x first, and the
    first and last width bands disjoint.  Non-sharpening: some value lies in
    every width band.  Otherwise inconclusive."""
    ws = curve.widths()
    ns = sorted(ws)
    if len(ns) < 2:
        return Diagnostic(INCONCLUSIVE, ws, "fewer than two sizes")
    vals = [ws[n].width for n in ns]
    first, last = ws[ns[0]], ws[ns[-1]]
    finite = all(math.isfinite(v) for v in vals)
    decreasing = finite and all(b < a for a, b in zip(vals, vals[1:]))
    disjoint = last.hi < first.lo or first.hi < last.lo
    if decreasing and vals[-1] < 0.6 * vals[0] and disjoint:
        return Diagnostic(SHARPENING, ws, f"width {vals[0]:.4g} -> {vals[-1]:.4g}, bands disjoint")
    common_lo = max(ws[n].lo for n in ns)
    common_hi = min(ws[n].hi for n in ns)
    if common_lo <= common_hi:
        return Diagnostic(NON_SHARPENING, ws, f"all width bands contain [{fmt(common_lo)}, {fmt(common_hi)}]")
    why = []
    if not finite:
        why.append("some width not measurable on the grid")
    elif not decreasing:
        why.append("widths not decreasing")
    elif vals[-1] >= 0.6 * vals[0]:
        why.append("last width not below 0.6 x first")
    if not disjoint:
        why.append("first and last bands overlap")
    return Diagnostic(INCONCLUSIVE, ws, "; ".join(why) or "bands share no common value")


# --------------------------------------------------------------- bisection


@dataclass
class ThresholdEstimate:
    c_half: float
    ci: tuple[float, float]
    bracket: tuple[float, float]
    flag: str  # "ok", "out-of-range-low", "out-of-range-high"
    per_variable: float
    evaluations: list[tuple[float, int, int]]  # (c, sat, decided)


def locate_threshold(
    dist: ConstraintDistribution,
    flavor: str,
    n: int,
    trials: int,
    tol: float,
    seed: int = 0,
    c_lo: float = 0.1,
    c_hi: float = 1.0,
    max_doublings: int = 12,
    budget: int = DEFAULT_BUDGET,
    lookahead: int = DEFAULT_LOOKAHEAD,
) -> ThresholdEstimate:
    """Bisection on c for P_sat = 1/2 (P_sat assumed non-increasing in c).

    The bracket starts at [c_lo, c_hi] and c_hi doubles until the estimate
    drops below 1/2.  The confidence interval runs from the largest evaluated
    c whose Wilson interval lies above 1/2 to the smallest one whose interval
    lies below.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    if not 0 <= c_lo < c_hi:
        raise InputError("need 0 <= c_lo < c_hi")
    seen: dict[float, tuple[int, int]] = {}

    def est(c: float) -> float:
        if c not in seen:
            outs = _run_chunk((dist, flavor, n, c, seed, 0, trials, budget, lookahead))
            sat = sum(s == SAT for s, _ in outs)
            dec = sum(s != BUDGET for s, _ in outs)
            seen[c] = (sat, dec)
        sat, dec = seen[c]
        return sat / dec if dec else float("nan")

    def result(c_half, lo, hi, flag):
        evals = sorted((c, s, d) for c, (s, d) in seen.items())
        above = [c for c, s, d in evals if d and wilson(s, d)[0] > 0.5]
        below = [c for c, s, d in evals if d and wilson(s, d)[1] < 0.5]
        ci = (max(above) if above else float("-inf"), min(below) if below else float("inf"))
        pv = constraints_per_variable(dist, n, c_half, flavor) if math.isfinite(c_half) else float("nan")
        return ThresholdEstimate(c_half, ci, (lo, hi), flag, pv, evals)

    if est(c_lo) < 0.5:
        return result(c_lo, c_lo, c_lo, "out-of-range-low")
    lo, hi = c_lo, c_hi
    for _ in range(max_doublings):
        if est(hi) < 0.5:
            break
        if 2 * hi > n ** (dist.k - 1):  # p would exceed 1
            return result(float("inf"), hi, hi, "out-of-range-high")
        lo, hi = hi, hi * 2
    else:
        return result(float("inf"), lo, hi, "out-of-range-high")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if est(mid) >= 0.5:
            lo = mid
        else:
            hi = mid
    return result((lo + hi) / 2, lo, hi, "ok")


# --------------------------------------------------------- d=5 case analysis


def _bipartite(n: int, edges: Sequence[tuple[int, int]], nodes: Iterable[int]) -> bool:
    adj: dict[int, list[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    side: dict[int, int] = {}
    for s in nodes:
        if s in side:
            continue
        side[s] = 0
        stack = [s]
        while stack:
            v = stack.pop()
            for u in adj.get(v, ()):
                if u not in side:
                    side[u] = 1 - side[v]
                    stack.append(u)
                elif side[u] == side[v]:
                    return False
    return True


def _three_colourable(n: int, edges: Sequence[tuple[int, int]], lookahead: int) -> bool:
    from .models import build_coloring

    c = build_coloring(3).support[0]
    inst = Instance(n, 3, 2, flavor=HAT).add_edges((e, c) for e in edges)
    res = solve(inst, DEFAULT_BUDGET, lookahead)
    if res.status == BUDGET:
        raise CapacityError("3-colouring check exceeded the node budget")
    return res.sat


@dataclass
class Fact9Row:
    n: int
    c: float
    trials: int
    sat: int
    agree_case: int
    agree_exact: int
    disagreements: list[Instance] = field(default_factory=list, repr=False)

    @property
    def agreement(self) -> float:
        return self.agree_case / self.trials


@dataclass
class Fact9Report:
    q: float
    c_q: float
    rows: list[Fact9Row]

    def header(self) -> str:
        return f"# s3 q={fmt(self.q)} boundary c(q)=(1-q)/q={fmt(self.c_q)} 1/q={fmt(1 / self.q)}"


def case_predicate(inst: Instance, c: float, q: float, lookahead: int = DEFAULT_LOOKAHEAD) -> bool:
    """Satisfiability predicted by the case analysis of the d=5 family.

    c < 1: satisfiable.  c > 1/q: satisfiable iff the C2 graph is 3-colourable.
    Otherwise: iff the C2 graph is 3-colourable or the C1 graph restricted to
    the largest component is bipartite.
    """
    from .structure import components

    c1_edges, c2_edges = _split(inst)
    if c < 1:
        return True
    if _three_colourable(inst.n, c2_edges, lookahead):
        return True
    if c > 1 / q:
        return False
    giant = components(inst)[0]
    inside = [e for e in c1_edges if e[0] in giant]
    return _bipartite(inst.n, inside, giant)


def exact_predicate(inst: Instance, lookahead: int = DEFAULT_LOOKAHEAD) -> bool:
    """Component-wise reduction: every edge keeps both ends in {1,2} or both in
    {3,4,5}, so a component is satisfiable iff its C1 edges are bipartite or its
    C2 edges are 3-colourable."""
    from .structure import components

    c1_edges, c2_edges = _split(inst)
    for comp in components(inst):
        if len(comp) == 1:
            continue
        e1 = [e for e in c1_edges if e[0] in comp]
        if _bipartite(inst.n, e1, comp):
            continue
        e2 = [e for e in c2_edges if e[0] in comp]
        if not _three_colourable(inst.n, e2, lookahead):
            return False
    return True


def _split(inst: Instance):
    from .models import s3_constraints

    c1, c2 = s3_constraints()
    e1, e2 = [], []
    for vs, cid in inst.edges:
        con = inst.table[cid]
        if con == c1:
            e1.append(vs)
        elif con == c2:
            e2.append(vs)
        else:
            raise InputError("instance uses a constraint outside the d=5 family")
    return e1, e2


def fact9_experiment(
    q: float,
    n_list: Iterable[int],
    trials: int,
    c_list: Iterable[float] = (0.8, 5.0),
    seed: int = 0,
    lookahead: int = DEFAULT_LOOKAHEAD,
    keep: int = 5,
) -> Fact9Report:
    """Solve sampled instances of the d=5 family and compare with the case
    predicate and the exact component-wise reduction."""
    from .models import build_paper_s3, s3_boundary

    dist = build_paper_s3(q)
    rows = []
    for n in n_list:
        for c in c_list:
            row = Fact9Row(int(n), float(c), trials, 0, 0, 0)
            cs = derive_seed(seed, int(n), c_key(c))
            for t in range(trials):
                inst = sample(GenSpec(dist, int(n), float(c), PLAIN, cs, t))
                res = solve(inst, DEFAULT_BUDGET, lookahead)
                if res.status == BUDGET:
                    raise CapacityError(f"solver budget exceeded at n={n} c={c} trial {t}")
                row.sat += res.sat
                ok_case = case_predicate(inst, c, q, lookahead) == res.sat
                ok_exact = exact_predicate(inst, lookahead) == res.sat
                row.agree_case += ok_case
                row.agree_exact += ok_exact
                if not (ok_case and ok_exact) and len(row.disagreements) < keep:
                    row.disagreements.append(inst)
            rows.append(row)
    return Fact9Report(q, s3_boundary(q), rows)


def parse_grid(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive, rounded to the step's decimals) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise InputError(f"bad grid {text!r}")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            digits = max(0, -int(math.floor(math.log10(step))) + 6)
            return tuple(round(a + i * step, digits) for i in range(count))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise InputError(f"bad grid {text!r}") from None


def parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise InputError(f"bad integer list {text!r}") from None


@dataclass
class DuplicateRow:
    k: int
    n: int
    c: float
    trials: int
    with_duplicates: int
    mean_plain: float
    mean_hat: float
    expected: float
    sd: float

    @property
    def fraction(self) -> float:
        return self.with_duplicates / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return wilson(self.with_duplicates, self.trials)


DUPLICATE_HEADER = "k,n,c,trials,dup_instances,dup_frac,lo95,hi95,mean_plain,mean_hat,expected,sd"


def duplicate_experiment(
    dists: Sequence[ConstraintDistribution],
    n_list: Iterable[int],
    c: float,
    trials: int,
    seed: int = 0,
) -> list[DuplicateRow]:
    """Hat instances with a variable set carrying two or more constraints, and
    edge counts of both flavours against the binomial mean C(n,k) p."""
    from .sampler import duplicate_sets

    rows = []
    for dist in dists:
        k = dist.k
        for n in n_list:
            n = int(n)
            cs = derive_seed(seed, k, n, c_key(c))
            dup = 0
            m_plain = m_hat = 0
            for t in range(trials):
                hat = sample(GenSpec(dist, n, c, HAT, cs, t))
                plain = sample(GenSpec(dist, n, c, PLAIN, derive_seed(cs, 1), t))
                dup += duplicate_sets(hat) > 0
                m_plain += plain.m
                m_hat += hat.m
            p = c / n ** (k - 1)
            expected = math.comb(n, k) * p
            sd = math.sqrt(math.comb(n, k) * p * (1 - p))
            rows.append(DuplicateRow(k, n, c, trials, dup, m_plain / trials, m_hat / trials, expected, sd))
    return rows


def duplicate_csv(rows: Sequence[DuplicateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DUPLICATE_HEADER.split(","))
    for r in rows:
        lo, hi = r.interval
        w.writerow([r.k, r.n, fmt(r.c), r.trials, r.with_duplicates, f"{r.fraction:.6f}", f"{lo:.6f}",
                    f"{hi:.6f}", f"{r.mean_plain:.4f}", f"{r.mean_hat:.4f}", f"{r.expected:.4f}", f"{r.sd:.4f}"])
    return buf.getvalue()
