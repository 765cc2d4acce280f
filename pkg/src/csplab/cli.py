"""Command-line front end: ``csplab <command> ...``.

Every command resolves its settings as defaults < config file < flags and
echoes the resolved values as ``# key=value`` header lines.  Exit codes:
0 success, 1 input error, 2 budget or capacity exceeded, 3 internal check
failed.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import time
from pathlib import Path

from . import audit as audit_mod
from . import forcing as forcing_mod
from . import probe as probe_mod
from .core import FLAVORS, PLAIN, Instance
from .errors import CapacityError, CSPLabError, InputError
from .models import parse_distribution
from .sampler import GenSpec, sample, trial_rng
from .solver import BUDGET, DEFAULT_BUDGET, SAT, brute_force, solve
from .structure import census, to_dot

EXIT_OK, EXIT_INPUT, EXIT_CAPACITY, EXIT_INTERNAL = 0, 1, 2, 3

# config key -> (section, parser)
CONFIG_KEYS = {
    "model": ("model", str),
    "flavor": ("model", str),
    "n": ("grid", str),
    "c": ("grid", str),
    "scale": ("grid", str),
    "trials": ("grid", int),
    "seed": ("run", int),
    "budget": ("run", int),
    "lookahead": ("run", int),
    "jobs": ("run", int),
    "deadline": ("run", float),
    "out": ("run", str),
    "summary": ("run", str),
}

DEFAULTS = {
    "flavor": PLAIN,
    "scale": "c",
    "trials": 100,
    "budget": DEFAULT_BUDGET,
    "lookahead": probe_mod.DEFAULT_LOOKAHEAD,
    "jobs": 1,
}


class InternalCheckError(CSPLabError):
    """A self-check of the run failed (exit code 3)."""


# ------------------------------------------------------------------ config


def read_config(path: str) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise InputError(f"config {path}: {exc}") from None
    except configparser.Error as exc:
        raise InputError(f"config {path}: {exc}") from None
    out = {}
    for section in cp.sections():
        if section not in ("model", "grid", "run"):
            raise InputError(f"config {path}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in CONFIG_KEYS or CONFIG_KEYS[key][0] != section:
                raise InputError(f"config {path}: unknown key {key!r} in [{section}]")
            try:
                out[key] = CONFIG_KEYS[key][1](raw.strip())
            except ValueError:
                raise InputError(f"config {path}: bad value for {key!r}: {raw!r}") from None
    return out


def resolve(args: argparse.Namespace, keys, **defaults) -> dict:
    """defaults < CSPLAB_SEED (seed only) < config file < flags."""
    cfg = {**DEFAULTS, **defaults}
    env = os.environ.get("CSPLAB_SEED")
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise InputError(f"CSPLAB_SEED must be an integer (got {env!r})") from None
    cfg.setdefault("seed", 0)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return {k: cfg.get(k) for k in keys}


def header(command: str, cfg: dict) -> str:
    lines = [f"# command={command}"]
    for key in sorted(cfg):
        val = cfg[key]
        if val is None:
            val = ""
        elif isinstance(val, (tuple, list)):
            val = ",".join(probe_mod.fmt(x) if isinstance(x, float) else str(x) for x in val)
        elif isinstance(val, float):
            val = probe_mod.fmt(val)
        lines.append(f"# {key}={val}")
    return "\n".join(lines) + "\n"


def require(cfg: dict, *keys) -> None:
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise InputError(f"missing setting {key!r} (flag --{key} or config file)")


def write_text(path: str | None, text: str) -> None:
    if path in (None, "", "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def density_grid(cfg: dict, k: int) -> tuple[float, ...]:
    grid = probe_mod.parse_grid(cfg["c"])
    if cfg["scale"] == "ratio":
        # constraints per variable -> c, with the large-n factor k!
        return tuple(round(x * math.factorial(k), 12) for x in grid)
    if cfg["scale"] != "c":
        raise InputError(f"scale must be 'c' or 'ratio' (got {cfg['scale']!r})")
    return grid


def _flavor(cfg: dict) -> str:
    if cfg["flavor"] not in FLAVORS:
        raise InputError(f"flavor must be one of {FLAVORS} (got {cfg['flavor']!r})")
    return cfg["flavor"]


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = resolve(args, ["model", "flavor", "n", "c", "seed", "trial", "out"], trial=0)
    require(cfg, "model", "n", "c")
    dist = parse_distribution(cfg["model"])
    try:
        n, c = int(cfg["n"]), float(cfg["c"])
    except ValueError:
        raise InputError("n must be an integer and c a number") from None
    inst = sample(GenSpec(dist, n, c, _flavor(cfg), cfg["seed"], cfg["trial"]))
    write_text(cfg["out"], header("gen", cfg) + inst.to_text())
    return EXIT_OK


def _load(path: str) -> Instance:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return Instance.from_text(text)


def cmd_solve(args) -> int:
    cfg = resolve(args, ["budget", "lookahead"], lookahead=0)
    inst = _load(args.instance)
    res = brute_force(inst) if args.brute else solve(inst, cfg["budget"], cfg["lookahead"])
    sys.stdout.write(header("solve", {**cfg, "instance": args.instance, "brute": args.brute}))
    if res.status == SAT:
        print("SAT")
        print("assign " + " ".join(f"v{i}={x}" for i, x in enumerate(res.assignment)))
        return EXIT_OK
    if res.status == BUDGET:
        print(f"BUDGET nodes={res.nodes}")
        return EXIT_CAPACITY
    print("UNSAT")
    return EXIT_OK


def cmd_analyze(args) -> int:
    inst = _load(args.instance)
    sys.stdout.write(header("analyze", {"instance": args.instance, "dot": args.dot}))
    rows = census(inst)
    print(f"n={inst.n} m={inst.m} components={len(rows)}")
    print("size,edges,kind")
    for size, edges, kind in rows:
        print(f"{size},{edges},{kind}")
    if args.dot:
        write_text(args.dot, to_dot(inst))
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = resolve(args, ["model"])
    require(cfg, "model")
    dist = parse_distribution(cfg["model"])
    sys.stdout.write(header("audit", {**cfg, "max_vars": args.max_vars, "witness": args.witness}))
    res = audit_mod.audit(dist, args.max_vars)
    print(res.summary())
    if res.witness is not None and args.witness:
        write_text(args.witness, res.witness.to_text())
    return EXIT_OK


def cmd_forcing(args) -> int:
    cfg = resolve(args, ["model", "c", "n", "trials", "seed", "flavor", "out"])
    require(cfg, "model", "c", "n")
    dist = parse_distribution(cfg["model"])
    if dist.k != 2:
        raise InputError("forcing analysis needs a binary model (k=2)")
    try:
        c = float(cfg["c"])
    except ValueError:
        raise InputError(f"c must be a number (got {cfg['c']!r})") from None
    n_list = probe_mod.parse_ints(cfg["n"])
    rep = forcing_mod.percolation_verdict(
        dist, c, n_list, cfg["trials"], args.beta, args.zeta, cfg["seed"], _flavor(cfg)
    )
    fd = forcing_mod.build_forcing_digraph(dist, c)
    sys.stdout.write(header("forcing", {**cfg, "beta": args.beta, "zeta": args.zeta}))
    print(f"perron_root={fd.perron_root():.12g}")
    print("delta,gamma,root,analytic,empirical,verdict,note")
    for (a, b), pv in sorted(rep.pairs.items()):
        print(f"{a},{b},{pv.perron_root:.6g},{pv.analytic},{pv.empirical},{pv.verdict},{pv.note}")
    if cfg["out"]:
        lines = [header("forcing", cfg), "n,trial,root,delta,gamma,size\n"]
        lines += [",".join(map(str, row)) + "\n" for row in rep.samples]
        write_text(cfg["out"], "".join(lines))
    return EXIT_OK


def cmd_probe(args) -> int:
    keys = ["model", "flavor", "n", "c", "scale", "trials", "seed", "budget", "lookahead",
            "jobs", "deadline", "out", "summary"]
    cfg = resolve(args, keys)
    require(cfg, "model", "n", "c")
    dist = parse_distribution(cfg["model"])
    n_list = probe_mod.parse_ints(cfg["n"])
    grid = density_grid(cfg, dist.k)
    deadline = time.time() + cfg["deadline"] if cfg["deadline"] else None
    curve = probe_mod.psat_grid(
        dist, _flavor(cfg), n_list, grid, cfg["trials"], cfg["seed"], cfg["budget"],
        cfg["lookahead"], cfg["jobs"], deadline,
    )
    text = header("probe", cfg) + scale_notes(dist, curve) + curve.to_csv()
    write_text(cfg["out"], text)
    report = probe_report(curve)
    to_stdout = cfg["out"] in (None, "", "-")
    (sys.stderr if to_stdout else sys.stdout).write(report)
    if cfg["summary"]:
        write_text(cfg["summary"], header("probe", cfg) + curve.summary_csv())
    if curve.monotonicity_violations():
        raise InternalCheckError("P_sat estimate increases in c beyond interval slack")
    return EXIT_OK


def scale_notes(dist, curve) -> str:
    lines = []
    for n in curve.n_list:
        f = probe_mod.constraints_per_variable(dist, n, 1.0, curve.flavor)
        lines.append(f"# constraints_per_variable(n={n}) = {f:.10g} * c")
    return "\n".join(lines) + "\n"


def probe_report(curve) -> str:
    out = []
    for cl in curve.unreliable_cells():
        out.append(f"warning: unreliable cell n={cl.n} c={probe_mod.fmt(cl.c)} ({cl.budget}/{cl.trials} over budget)")
    if not curve.complete:
        out.append("warning: deadline reached, grid incomplete")
    diag = probe_mod.sharpness_diagnostic(curve)
    for n, w in diag.widths.items():
        out.append(
            f"n={n} chalf={probe_mod.fmt(w.c_half)} width={probe_mod.fmt(w.width)} "
            f"band=[{probe_mod.fmt(w.lo)}, {probe_mod.fmt(w.hi)}]"
        )
    out.append(f"diagnostic: {diag.verdict} ({diag.reason}; {diag.label})")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------- recipes


def _check(lines: list[str], name: str, ok: bool) -> bool:
    lines.append(f"check {name}: {'PASS' if ok else 'FAIL'}")
    return ok


def recipe_ed3_coarse(seed, quick, jobs, out_dir, deadline):
    from .models import build_paper_ed3

    n_list = (100, 200) if quick else (500, 1000, 2000)
    trials = 40 if quick else 400
    grid = (1.6, 2.0, 2.5, 2.9)
    cfg = {"model": "ed3", "flavor": PLAIN, "n": n_list, "c": grid, "trials": trials, "seed": seed,
           "lookahead": probe_mod.DEFAULT_LOOKAHEAD}
    curve = probe_mod.psat_grid(build_paper_ed3(), PLAIN, n_list, grid, trials, seed, jobs=jobs,
                                deadline=deadline)
    write_text(str(out_dir / "ed3-coarse.csv"), header("repro ed3-coarse", cfg) + curve.to_csv())
    write_text(str(out_dir / "ed3-coarse-summary.csv"), header("repro ed3-coarse", cfg) + curve.summary_csv())
    lines = [probe_report(curve).rstrip()]
    inside = all(0.05 < cl.phat < 0.95 for cl in curve.cells.values())
    _check(lines, "every cell 0.05 < phat < 0.95", inside and curve.complete)
    _check(lines, "diagnostic non-sharpening", probe_mod.sharpness_diagnostic(curve).verdict == probe_mod.NON_SHARPENING)
    return cfg, lines


def recipe_dkt_sharp(seed, quick, jobs, out_dir, deadline):
    from .models import build_dkt

    n_list = (20, 40) if quick else (50, 100, 200, 400)
    trials = 40 if quick else 400
    ratios = probe_mod.parse_grid("3.0:6.0:0.25")
    grid = tuple(round(6 * r, 12) for r in ratios)
    cfg = {"model": "dkt:2,3,1", "flavor": PLAIN, "n": n_list, "c": grid, "trials": trials, "seed": seed,
           "lookahead": probe_mod.DEFAULT_LOOKAHEAD}
    curve = probe_mod.psat_grid(build_dkt(2, 3, 1), PLAIN, n_list, grid, trials, seed, jobs=jobs,
                                deadline=deadline)
    write_text(str(out_dir / "dkt-sharp.csv"), header("repro dkt-sharp", cfg) + curve.to_csv())
    write_text(str(out_dir / "dkt-sharp-summary.csv"), header("repro dkt-sharp", cfg) + curve.summary_csv())
    lines = [probe_report(curve).rstrip()]
    _check(lines, "diagnostic sharpening", curve.complete and probe_mod.sharpness_diagnostic(curve).verdict == probe_mod.SHARPENING)
    return cfg, lines


def recipe_s3_fact9(seed, quick, jobs, out_dir, deadline):
    n_list = (100,) if quick else (600,)
    trials = 20 if quick else 200
    c_list = (0.8, 5.0)
    cfg = {"model": "s3:0.25", "n": n_list, "c": c_list, "trials": trials, "seed": seed}
    rep = probe_mod.fact9_experiment(0.25, n_list, trials, c_list, seed)
    rows = [rep.header() + "\n", "n,c,trials,sat,agree_case,agree_exact,agreement\n"]
    for r in rep.rows:
        rows.append(f"{r.n},{probe_mod.fmt(r.c)},{r.trials},{r.sat},{r.agree_case},{r.agree_exact},{r.agreement:.6f}\n")
    write_text(str(out_dir / "s3-fact9.csv"), header("repro s3-fact9", cfg) + "".join(rows))
    for r in rep.rows:
        for i, inst in enumerate(r.disagreements):
            write_text(str(out_dir / f"s3-fact9-disagree-n{r.n}-c{probe_mod.fmt(r.c)}-{i}.cspinst"), inst.to_text())
    lines = [rep.header()]
    for r in rep.rows:
        lines.append(f"n={r.n} c={probe_mod.fmt(r.c)} sat={r.sat}/{r.trials} agreement={r.agreement:.4f} exact={r.agree_exact}/{r.trials}")
    _check(lines, "agreement >= 0.95", all(r.agreement >= 0.95 for r in rep.rows))
    _check(lines, "all satisfiable below c=1", all(r.sat == r.trials for r in rep.rows if r.c < 1))
    return cfg, lines


def recipe_homcheck(seed, quick, jobs, out_dir, deadline):
    from .models import HypergraphH
    from .structure import random_unicyclic_edges

    count = 50 if quick else 1000
    cfg = {"count": count, "k": (3, 4), "seed": seed}
    rows = ["trial,k,edges,vertices,verified\n"]
    failures = 0
    for t in range(count):
        rng = trial_rng(seed, t)
        k = 3 + t % 2
        m = int(rng.integers(2, 9))
        nv, edges = random_unicyclic_edges(k, m, rng)
        G = HypergraphH(nv, k, frozenset(tuple(v + 1 for v in e) for e in edges))
        h = audit_mod.unicyclic_homomorphism(G)
        ok = audit_mod.verify_homomorphism(G, audit_mod.single_edge(k), h)
        failures += not ok
        rows.append(f"{t},{k},{m},{nv},{int(ok)}\n")
    write_text(str(out_dir / "homcheck-lemma2.csv"), header("repro homcheck-lemma2", cfg) + "".join(rows))
    lines = [f"verified {count - failures}/{count}"]
    _check(lines, "zero failures", failures == 0)
    return cfg, lines


def recipe_hat_duplicates(seed, quick, jobs, out_dir, deadline):
    from .models import build_coloring, build_dkt

    n_list = (100, 200) if quick else (500, 1000, 2000)
    trials = 20 if quick else 200
    cfg = {"models": ("coloring:2", "dkt:2,3,1"), "n": n_list, "c": 1.0, "trials": trials, "seed": seed}
    rows = probe_mod.duplicate_experiment([build_coloring(2), build_dkt(2, 3, 1)], n_list, 1.0, trials, seed)
    write_text(str(out_dir / "hat-duplicates.csv"), header("repro hat-duplicates", cfg) + probe_mod.duplicate_csv(rows))
    lines = []
    for r in rows:
        lo, hi = r.interval
        lines.append(f"k={r.k} n={r.n} duplicates in {r.with_duplicates}/{r.trials} [{lo:.3f}, {hi:.3f}]")
    k2 = [r for r in rows if r.k == 2]
    k3 = [r for r in rows if r.k == 3]
    _check(lines, "k=2 fraction inside (0, 1)", all(0 < r.interval[0] and r.interval[1] < 1 for r in k2))
    _check(lines, "k=3 fraction non-increasing and small",
           all(b.fraction <= a.fraction for a, b in zip(k3, k3[1:])) and k3[-1].fraction <= 0.05)
    tol = [abs(m - r.expected) <= 4 * r.sd / math.sqrt(r.trials) for r in rows for m in (r.mean_plain, r.mean_hat)]
    _check(lines, "mean edge counts within 4 sigma", all(tol))
    return cfg, lines


RECIPES = {
    "ed3-coarse": recipe_ed3_coarse,
    "dkt-sharp": recipe_dkt_sharp,
    "s3-fact9": recipe_s3_fact9,
    "homcheck-lemma2": recipe_homcheck,
    "hat-duplicates": recipe_hat_duplicates,
}


def cmd_repro(args) -> int:
    cfg = resolve(args, ["seed", "jobs"])
    out_dir = Path(args.out_dir)
    deadline = time.time() + args.deadline if args.deadline else None
    run_cfg, lines = RECIPES[args.recipe](cfg["seed"], args.quick, cfg["jobs"], out_dir, deadline)
    text = header(f"repro {args.recipe}", {**run_cfg, "quick": args.quick}) + "\n".join(lines) + "\n"
    write_text(str(out_dir / f"{args.recipe}-report.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csplab", description="Random CSP laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        sp.add_argument("--config", help="key = value file with [model] [grid] [run] sections")
        if "model" in names:
            sp.add_argument("--model", help="dkt:d,k,t | coloring:d | ed3 | s3:q | hom:FILE | file:FILE")
        if "flavor" in names:
            sp.add_argument("--flavor", choices=FLAVORS)
        if "seed" in names:
            sp.add_argument("--seed", type=int, help="master seed (fallback: CSPLAB_SEED, then 0)")
        if "jobs" in names:
            sp.add_argument("--jobs", type=int, help="worker processes")
        if "budget" in names:
            sp.add_argument("--budget", type=int, help="search node limit")
            sp.add_argument("--lookahead", type=int, help="failed-value lookahead width (0: plain search)")

    g = sub.add_parser("gen", help="sample one instance as CSPINST text")
    common(g, "model", "flavor", "seed")
    g.add_argument("--n")
    g.add_argument("--c")
    g.add_argument("--trial", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="decide a CSPINST instance")
    common(s, "budget")
    s.add_argument("instance", help="CSPINST file or - for stdin")
    s.add_argument("--brute", action="store_true", help="exhaustive enumeration instead of search")
    s.set_defaults(func=cmd_solve, lookahead=None)

    a = sub.add_parser("analyze", help="component census and shapes")
    a.add_argument("instance")
    a.add_argument("--dot", help="write the incidence graph in DOT format")
    a.set_defaults(func=cmd_analyze)

    au = sub.add_parser("audit", help="look for an unsatisfiable tree or unicyclic instance")
    common(au, "model")
    au.add_argument("--max-vars", type=int, default=8)
    au.add_argument("--witness", help="write the counterexample here")
    au.set_defaults(func=cmd_audit)

    f = sub.add_parser("forcing", help="forcing percolation verdicts")
    common(f, "model", "flavor", "seed")
    f.add_argument("--c")
    f.add_argument("--n")
    f.add_argument("--trials", type=int)
    f.add_argument("--beta", type=float, default=forcing_mod.DEFAULT_BETA)
    f.add_argument("--zeta", type=float, default=forcing_mod.DEFAULT_ZETA)
    f.add_argument("--out", help="CSV of forced-set sizes")
    f.set_defaults(func=cmd_forcing)

    pr = sub.add_parser("probe", help="P_sat over an (n, c) grid")
    common(pr, "model", "flavor", "seed", "jobs", "budget")
    pr.add_argument("--n", help="comma list")
    pr.add_argument("--c", help="a:b:step or comma list")
    pr.add_argument("--scale", choices=("c", "ratio"), help="grid values are c or constraints per variable")
    pr.add_argument("--trials", type=int)
    pr.add_argument("--deadline", type=float, help="seconds; stop between cells after this")
    pr.add_argument("--out", help="grid CSV (default stdout)")
    pr.add_argument("--summary", help="summary CSV")
    pr.set_defaults(func=cmd_probe)

    r = sub.add_parser("repro", help="run a bundled experiment")
    common(r, "seed", "jobs")
    r.add_argument("recipe", choices=sorted(RECIPES))
    r.add_argument("--quick", action="store_true", help="small sizes for a smoke run")
    r.add_argument("--out-dir", default=".")
    r.add_argument("--deadline", type=float, help="seconds; grid recipes stop between cells")
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InternalCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (CSPLabError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
