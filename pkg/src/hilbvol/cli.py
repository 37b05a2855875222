"""Command line interface: one subcommand per pipeline.

Every run writes a JSON report (or CSV curves with ``--format csv``) and
exits 0 on PASS/OK, 1 on FAIL, 2 on INCONCLUSIVE and 3 on input errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import acute, banach, besicovitch, dilation, grids, john, lipschitz, periodic

EXIT = {"PASS": 0, "OK": 0, "FAIL": 1, "INCONCLUSIVE": 2, "REFUSED": 3, "ERROR": 3}

INPUT_ERRORS = (
    banach.NormError,
    grids.GridError,
    acute.PolytopeError,
    periodic.StableNormError,
    besicovitch.CheckError,
    lipschitz.LipschitzError,
    john.MVEEError,
    json.JSONDecodeError,
    OSError,
    KeyError,
    ValueError,
)


class InputError(ValueError):
    pass


def thread_count() -> int:
    raw = os.environ.get("HILBVOL_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise InputError(f"HILBVOL_THREADS must be an integer, got {raw!r}")


def ordered_map(fn, items) -> list:
    """Map with at most HILBVOL_THREADS workers; results keep input order."""
    items = list(items)
    workers = min(thread_count(), len(items)) if items else 1
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _read_json(path, what: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} file not found: {path}")
    try:
        if p.suffix == ".gz":
            import gzip

            with gzip.open(p, "rt") as fh:
                return json.load(fh)
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None


def _load_norm(path) -> banach.PolytopeNorm:
    return banach.PolytopeNorm.from_json(_read_json(path, "norm"))


def _load_metric(path, stencil=None, norm=None) -> grids.GridMetric:
    data = _read_json(path, "metric")
    if isinstance(data, dict) and stencil is not None:
        data = dict(data, stencil=stencil)
    return grids.grid_from_json(data, norm)


def _load_periodic(path, stencil=None) -> periodic.PeriodicMetric:
    gm = _load_metric(path, stencil)
    if gm.kind != "torus":
        raise InputError(f"{path}: field 'kind' must be 'torus' for a periodic metric")
    return periodic.PeriodicMetric(gm)


def _load_space(path, stencil=None):
    data = _read_json(path, "metric")
    if isinstance(data, dict) and data.get("kind") == "graph":
        for key in ("n_nodes", "edges"):
            if key not in data:
                raise InputError(f"{path}: missing field '{key}'")
        E = np.asarray(data["edges"], dtype=float).reshape(-1, 3)
        n = int(data["n_nodes"])
        a, b = E[:, 0].astype(np.int64), E[:, 1].astype(np.int64)
        if E.size and (a.min() < 0 or b.min() < 0 or max(a.max(), b.max()) >= n):
            raise InputError(f"{path}: field 'edges' refers to a node outside 0..{n - 1}")
        if E.size and np.any(E[:, 2] <= 0):
            raise InputError(f"{path}: field 'edges' needs positive weights")
        return grids.FiniteMetricSpace.from_edges(n, a, b, E[:, 2])
    if isinstance(data, dict) and stencil is not None:
        data = dict(data, stencil=stencil)
    return grids.grid_from_json(data)


def _parse_dir(text: str) -> np.ndarray:
    try:
        return np.array([int(c) for c in text.split(",")], dtype=np.int64)
    except ValueError:
        raise InputError(f"--dir: expected comma-separated integers, got {text!r}") from None


# subcommands -------------------------------------------------------------------
# each returns (status, result, error_budget, csv_rows or None)

def cmd_john(args):
    norm = _load_norm(args.input)
    jr = john.john_form(norm, tol=args.tol, max_iter=args.max_iter, rng=args.seed)
    vol = john.john_volume_of_unit_ball(norm, jr.form, samples=args.samples, seed=args.seed)
    dual, hdual = john.contact_dual_norms(norm, jr)
    result = jr.to_json()
    result["contact_dual_norms"] = {"norm": dual, "h_diamond": hdual}
    result["volume"] = {
        "hilbert": vol.value,
        "stderr": vol.stderr,
        "lebesgue": vol.lebesgue,
        "method": vol.method,
        "euclidean_ball": john.euclidean_ball_volume(norm.dim),
    }
    gate = 1e-6
    ok = (jr.decomposition_residual <= gate and jr.mass_gap <= gate and jr.domination_violation <= 1e-9
          and np.all(np.abs(dual - 1) <= gate))
    budget = {"decomposition_tol": gate, "mass_tol": gate, "domination_tol": 1e-9, "contact_tol": gate,
              "volume_stderr": vol.stderr}
    rows = [["facet", "weight"] + [f"l{i}" for i in range(norm.dim)]]
    rows += [[a["facet"], a["weight"], *a["functional"]] for a in result["atoms"]]
    return ("OK" if ok else "FAIL"), result, budget, rows


def cmd_stable_norm(args):
    pm = _load_periodic(args.metric, args.stencil)
    dirs = [_parse_dir(d) for d in (args.dir or ["1" + ",0" * (pm.dim - 1)])]
    for d in dirs:
        if d.size != pm.dim:
            raise InputError(f"--dir: direction {d.tolist()} has {d.size} entries, metric has dim {pm.dim}")
    est = ordered_map(lambda v: periodic.stable_norm(pm, v, kmax=args.kmax), dirs)
    ok = all(e.consistent for e in est)
    result = {"estimates": [e.to_json() for e in est]}
    budget = {"bracket_widths": [e.width for e in est], "d_cell": est[0].d_cell}
    rows = [["direction", "k", "a_k"]]
    for e in est:
        label = ",".join(str(int(c)) for c in e.direction)
        rows += [[label, k + 1, a] for k, a in enumerate(e.ak)]
    return ("OK" if ok else "FAIL"), result, budget, rows


def cmd_growth(args):
    pm = _load_periodic(args.metric, args.stencil)
    radii = periodic.default_radii(args.rmax, args.radii)
    fld = periodic.growth_field(pm, args.rmax)
    pts = periodic.ball_growth(pm, radii, fld)
    result = {"growth": [{"R": g.R, "volume": g.volume, "ratio": g.ratio} for g in pts],
              "cell_volume": pm.cell_volume}
    budget = {"certified_radius": fld.certified_radius,
              "quadrature": pm.dim * math.sqrt(pm.dim) * pm.max_phi ** 2 / (pm.m * pm.min_phi * radii[0])}
    rows = [["R", "volume", "ratio"]] + [[g.R, g.volume, g.ratio] for g in pts]
    return "OK", result, budget, rows


def cmd_bi_report(args):
    pm = _load_periodic(args.metric, args.stencil)
    rep = periodic.burago_ivanov_report(pm, args.rmax, height=args.height, mc_samples=args.samples, seed=args.seed)
    result = rep.to_json()
    budget = result.pop("error_budget")
    if rep.verdict == "REFUSED":
        print(rep.message, file=sys.stderr)
    rows = [["R", "volume", "ratio"]] + [[g.R, g.volume, g.ratio] for g in rep.growth]
    return rep.verdict, result, budget, rows


def _verdict_out(v, to_json=None):
    result = (to_json or v.to_json)()
    budget = result.pop("error_budget")
    return v.verdict, result, budget, [["lhs", "rhs", "tol", "verdict"], [v.lhs, v.rhs, v.tol, v.verdict]]


def cmd_cube_check(args):
    gm = _load_metric(args.metric, args.stencil)
    if gm.kind != "cube":
        raise InputError(f"{args.metric}: field 'kind' must be 'cube'")
    return _verdict_out(besicovitch.cube_inequality_check(gm))


def cmd_simplex_check(args):
    if args.factor:
        factors = [_load_metric(p, args.stencil) for p in args.factor]
        for p, f in zip(args.factor, factors):
            if f.kind != "simplex":
                raise InputError(f"{p}: field 'kind' must be 'simplex'")
        pc = besicovitch.simplex_product_check(factors)
        status, result, budget, rows = _verdict_out(pc.verdict, pc.to_json)
        if pc.separable_gap > 1e-9:
            status = "FAIL"
        budget["separable_gap"] = pc.separable_gap
        return status, result, budget, rows
    if not args.metric:
        raise InputError("simplex-check needs --metric or --factor")
    gm = _load_metric(args.metric, args.stencil)
    if gm.kind != "simplex":
        raise InputError(f"{args.metric}: field 'kind' must be 'simplex'")
    if args.n is not None and gm.dim != args.n:
        raise InputError(f"{args.metric}: field 'dim' is {gm.dim}, --n asks for {args.n}")
    return _verdict_out(besicovitch.simplex_inequality_check(gm))


def cmd_filling_check(args):
    norm = _load_norm(args.norm)
    if args.metric:
        gm = _load_metric(args.metric, args.stencil, norm)
        if gm.kind != "region":
            raise InputError(f"{args.metric}: field 'kind' must be 'region'")
    else:
        gm = besicovitch.region_grid(norm, args.resolution or 64, stencil=args.stencil)
    return _verdict_out(besicovitch.filling_extremality_check(norm, gm))


def cmd_acute(args):
    P = acute.HPolytope.from_json(_read_json(args.polytope, "polytope"))
    enum = acute.enumerate_vertices(P, tol=args.tol)
    angles = acute.dihedral_angles(P, enum)
    sharp = acute.is_acute(P, angles=angles)
    fac = acute.simplex_product_factorization(P)
    result = {
        "vertex_count": len(enum.vertices),
        "vertices": enum.vertices,
        "redundant_facets": enum.redundant,
        "dihedral_angles": [{"facets": list(a.facets), "angle": a.angle} for a in angles],
        "is_acute": sharp,
        "factorization": fac.to_json(),
    }
    # an acute polytope that does not factor would contradict the theorem
    status = "FAIL" if sharp and not fac.is_product else "OK"
    budget = {"vertex_tol": args.tol, "orthogonality_tol": acute.ORTHO_TOL, "angle_tol": 1e-9}
    rows = [["facet_i", "facet_j", "angle"]] + [[a.facets[0], a.facets[1], a.angle] for a in angles]
    return status, result, budget, rows


def cmd_extend(args):
    space = _load_space(args.metric, args.stencil)
    data = _read_json(args.input, "partial function")
    for key in ("nodes", "values"):
        if key not in data:
            raise InputError(f"{args.input}: missing field '{key}'")
    nodes = np.asarray(data["nodes"], dtype=np.int64)
    if nodes.ndim == 2:
        if not isinstance(space, grids.GridMetric):
            raise InputError(f"{args.input}: field 'nodes' must be flat indices for a graph")
        nodes = np.array([space.index(i) for i in nodes], dtype=np.int64)
    values = np.asarray(data["values"], dtype=float)
    lam = data.get("lipschitz")
    if lam is None:
        lam = lipschitz.partial_lipschitz(space, nodes, values)
    F = lipschitz.mcshane_extend(space, nodes, values, float(lam))
    again = lipschitz.mcshane_extend(space, nodes, F[nodes], float(lam), check=False)
    lip = lipschitz.edge_lipschitz(space, F)
    result = {"lipschitz": float(lam), "edge_lipschitz": lip, "values": F,
              "idempotence_gap": float(np.nanmax(np.abs(np.where(np.isfinite(F), again - F, 0.0))))}
    ok = lip <= float(lam) * (1 + 1e-12) + 1e-15
    budget = {"lipschitz_rtol": 1e-12}
    rows = [["node", "value"]] + [[i, v] for i, v in enumerate(F)]
    return ("OK" if ok else "FAIL"), result, budget, rows


def cmd_calibrate(args):
    stencil = grids.default_stencil(args.dim) if args.stencil is None else args.stencil
    cal = grids.calibrate(args.dim, stencil, args.resolution or 256, args.directions)
    result = cal.to_json()
    budget = {"eps_stencil": cal.eps}
    rows = [["direction", "ratio"]] + [[",".join(f"{c:.12g}" for c in u), r] for u, r in zip(cal.directions, cal.ratios)]
    return "OK", result, budget, rows


def _selftest_checks(seed: int):
    rng = np.random.default_rng(seed)

    def john_cube():
        worst = 0.0
        for n in range(2, 5):
            jr = john.john_form(banach.linf_norm(n))
            worst = max(worst, float(np.linalg.norm(jr.form.matrix - np.eye(n))), abs(jr.mass - n))
        return worst <= 1e-8, worst

    def john_random():
        norm = banach.PolytopeNorm(rng.standard_normal((12, 3)))
        jr = john.john_form(norm, rng=seed)
        dual, _ = john.contact_dual_norms(norm, jr)
        gap = max(jr.decomposition_residual, jr.mass_gap, float(np.max(np.abs(dual - 1))))
        return gap <= 1e-6 and jr.domination_violation <= 1e-9, gap

    def hadamard():
        worst = -np.inf
        for _ in range(200):
            n = int(rng.integers(1, 7))
            h = dilation.hadamard_check(rng.standard_normal((n, n + int(rng.integers(0, 3)))))
            worst = max(worst, (h.lhs - h.rhs) / max(h.rhs, 1e-300))
        return worst <= 1e-12 and dilation.is_homothety(2.5 * np.eye(4)), worst

    def inverse_lip():
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 7))
            worst = max(worst, dilation.inverse_lip_identity(rng.standard_normal((n, n))).gap)
        return worst <= 1e-9, worst

    def mcshane():
        worst = 0.0
        for _ in range(10):
            N = int(rng.integers(5, 60))
            a = rng.integers(0, N, 3 * N)
            b = rng.integers(0, N, 3 * N)
            keep = a != b
            sp = grids.FiniteMetricSpace.from_edges(N, a[keep], b[keep], rng.uniform(0.1, 2.0, keep.sum()))
            dom = rng.choice(N, 4, replace=False)
            vals = rng.standard_normal(4)
            lam = max(lipschitz.partial_lipschitz(sp, dom, vals), 1e-3)
            if not math.isfinite(lam):
                continue
            fast = lipschitz.mcshane_extend(sp, dom, vals, lam)
            slow = lipschitz.mcshane_naive(sp, dom, vals, lam)
            fin = np.isfinite(slow)
            worst = max(worst, float(np.max(np.abs(fast[fin] - slow[fin]))))
        return worst <= 1e-12, worst

    def calibration():
        eps = grids.calibrate(2, 3, 256).eps
        return eps <= 0.02, eps

    def cube():
        v = besicovitch.cube_inequality_check(grids.cube_grid(32, 2))
        return v.verdict == "PASS", v.margin

    def simplex():
        v = besicovitch.simplex_inequality_check(besicovitch.simplex_grid(2, 32))
        return v.verdict == "PASS", v.margin

    def polytopes():
        ok = acute.simplex_product_factorization(acute.unit_cube(3)).block_dims == [1, 1, 1]
        T = acute.HPolytope.from_vertices([[0, 0], [4, 0], [3.9, 0.2]])
        ok = ok and not acute.is_acute(T) and acute.simplex_product_factorization(T).block_dims == [2]
        hexagon = acute.HPolytope.from_vertices([[math.cos(t), math.sin(t)] for t in np.arange(6) * math.pi / 3])
        ok = ok and not acute.simplex_product_factorization(hexagon).is_product
        return ok, 0.0

    def stable():
        pm = periodic.flat_cell(16)
        e = periodic.stable_norm(pm, [2, 1], kmax=6)
        return bool(e.lo <= math.sqrt(5) <= e.hi), e.width

    def volume():
        norm = banach.linf_norm(2)
        v = john.john_volume_of_unit_ball(norm, john.john_form(norm).form)
        return abs(v.value - 4.0) <= 1e-12, v.value

    return [("john_cube", john_cube), ("john_random", john_random), ("hadamard", hadamard),
            ("inverse_lipschitz", inverse_lip), ("mcshane", mcshane), ("calibration", calibration),
            ("cube_check", cube), ("simplex_check", simplex), ("acute", polytopes),
            ("stable_norm", stable), ("john_volume", volume)]


def cmd_selftest(args):
    checks = _selftest_checks(args.seed)
    results = ordered_map(lambda c: c[1](), checks)
    out = [{"name": name, "passed": bool(ok), "value": float(val)} for (name, _), (ok, val) in zip(checks, results)]
    status = "PASS" if all(r["passed"] for r in out) else "FAIL"
    rows = [["name", "passed", "value"]] + [[r["name"], r["passed"], r["value"]] for r in out]
    return status, {"checks": out}, {"note": "each check carries its own tolerance"}, rows


COMMANDS = {
    "john": cmd_john,
    "stable-norm": cmd_stable_norm,
    "growth": cmd_growth,
    "bi-report": cmd_bi_report,
    "cube-check": cmd_cube_check,
    "simplex-check": cmd_simplex_check,
    "filling-check": cmd_filling_check,
    "acute": cmd_acute,
    "extend": cmd_extend,
    "calibrate": cmd_calibrate,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="solver tolerance")
    common.add_argument("--max-iter", type=int, default=100_000)
    common.add_argument("--resolution", type=int, default=None, help="grid nodes per unit length")
    common.add_argument("--stencil", type=int, default=None, help="override the stencil radius")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", "--report", dest="out", default=None, help="report path (default stdout)")
    common.add_argument("--format", choices=["json", "csv"], default="json")

    p = argparse.ArgumentParser(prog="hilbvol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("john", parents=[common], help="John form, partition and unit-ball volume of a norm")
    s.add_argument("--input", required=True, help="norm JSON {dim, facets}")
    s.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo samples for n >= 3")

    for name, helptext in (("stable-norm", "stable norm brackets"), ("growth", "ball volume growth"),
                           ("bi-report", "volume growth report with error budget")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--metric", required=True, help="torus cell metric file")
        if name == "stable-norm":
            s.add_argument("--dir", action="append", help="lattice direction such as 3,1 (repeatable)")
            s.add_argument("--kmax", type=int, default=12)
        elif name == "growth":
            s.add_argument("--rmax", type=float, required=True)
            s.add_argument("--radii", type=int, default=8, help="number of radii in [rmax/2, rmax]")
        else:
            s.add_argument("--rmax", type=float, default=10.0)
            s.add_argument("--height", type=int, default=None, help="lattice direction height")
            s.add_argument("--samples", type=int, default=200_000)

    s = sub.add_parser("cube-check", parents=[common], help="cube volume versus opposite-face distances")
    s.add_argument("--metric", required=True)
    s = sub.add_parser("simplex-check", parents=[common], help="simplex volume versus the face-distance sum")
    s.add_argument("--metric")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--factor", action="append", help="simplex factor metric for a product check (repeatable)")
    s = sub.add_parser("filling-check", parents=[common], help="volume of a metric on a normed unit ball")
    s.add_argument("--norm", required=True)
    s.add_argument("--metric", default=None, help="region metric file; default is the base density")
    s = sub.add_parser("acute", parents=[common], help="dihedral angles and simplex-product factorization")
    s.add_argument("--polytope", required=True)
    s = sub.add_parser("extend", parents=[common], help="smallest Lipschitz extension of a partial function")
    s.add_argument("--metric", required=True, help="grid metric or graph file")
    s.add_argument("--input", required=True, help="partial function {nodes, values, lipschitz?}")
    s = sub.add_parser("calibrate", parents=[common], help="flat-grid stencil error")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--directions", type=int, default=64)
    sub.add_parser("selftest", parents=[common], help="quick seeded property battery")
    return p


def run(args) -> tuple[int, str]:
    """Execute a parsed configuration; returns the exit code and the report text."""
    if args.command == "john" and args.tol is None:
        args.tol = 1e-10
    if args.command == "acute" and args.tol is None:
        args.tol = 1e-9
    status, result, budget, rows = COMMANDS[args.command](args)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        return EXIT[status], buf.getvalue()
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "format")}
    report = {"command": args.command, "config": config, "status": status, "exit_code": EXIT[status],
              "result": result, "error_budget": budget}
    return EXIT[status], dumps(report)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code, text = run(args)
    except (InputError, *INPUT_ERRORS) as e:
        print(f"hilbvol {args.command}: input error: {e}", file=sys.stderr)
        return 3
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
