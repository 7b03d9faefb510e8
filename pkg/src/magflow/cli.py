"""Command line: ``magflow <subcommand> --config PATH [--out DIR] [--jobs N] [--seed K]``.

Exit codes: 0 pass, 1 a check or bound failed, 2 configuration error.
Every subcommand writes ``<subcommand>.json`` plus gnuplot-ready ``.dat``
files into ``--out``.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build_space, grid_points, load_config
from .dynamics import (
    IntegratorConfig,
    PhaseState,
    RescaleConfig,
    Trajectory,
    convergence_gap,
    integrate,
    sample_region,
    split_components,
)
from .geometry import check_closed, eigenvalue_field, fibre_data, hamiltonian
from .orbits import SearchConfig, orbit_census, orbit_path
from .predictions import bound_report, census_bound
from .reports import write_dat, write_json, write_trajectory_csv
from .symplectic import (
    oracle_suite,
    random_symplectic,
    stable_eigenvalue_sets,
    standard_form,
    williamson,
    williamson_oracle,
)

log = logging.getLogger("magflow")

PASS, FAIL, CONFIG = 0, 1, 2


def _seed(args, section, default=0):
    return args.seed if args.seed is not None else int(section.get("seed", default))


# ---------------------------------------------------------------------------
# williamson


def _fixed_instance(eigs, rng):
    """``A = S^T diag(a, a) S`` for a random symplectic ``S``: known answer."""
    a = np.asarray(eigs, dtype=float)
    s = random_symplectic(rng, len(a))
    return s.T @ np.diag(np.concatenate([a, a])) @ s


def cmd_williamson(cfg, args):
    sec = cfg.section("williamson")
    tol = cfg.tolerances
    seed = _seed(args, sec)
    dims = sec.get("dims", [2, 4, 6, 8])
    rows = oracle_suite(dims, int(sec.get("instances", 100)), seed, float(sec.get("cluster_tol", 1e-8)))
    extra = []
    rng = np.random.default_rng(seed + 1)
    if "cluster" in sec:
        eigs = sec["cluster"]["eigenvalues"]
        a = _fixed_instance(eigs, rng)
        a = 0.5 * (a + a.T)
        j = standard_form(len(eigs))
        res = williamson(j, a, float(sec.get("cluster_tol", 1e-8)))
        rw, ra = res.residuals(j, a)
        extra.append({
            "kind": "cluster",
            "expected": sorted(eigs),
            "eigenvalues": res.eigenvalues.tolist(),
            "clusters": [list(c) for c in res.clusters],
            "omega_residual": rw,
            "form_residual": ra / np.abs(a).max(),
            "oracle_rel_error": float(np.max(np.abs(res.eigenvalues - williamson_oracle(j, a)) / res.eigenvalues)),
        })
    if cfg.has_space:
        space = build_space(cfg)
        for q in grid_points(cfg, space)[: int(sec.get("fibre_points", 8))]:
            pair = fibre_data(space, q)
            res = williamson(pair.omega_f, pair.form)
            rw, ra = res.residuals(pair.omega_f, pair.form)
            ref = williamson_oracle(pair.omega_f, pair.form)
            extra.append({
                "kind": "fibre",
                "point": q,
                "eigenvalues": res.eigenvalues.tolist(),
                "clusters": [list(c) for c in res.clusters],
                "omega_residual": rw / np.abs(pair.omega_f.entries).max(),
                "form_residual": ra / np.abs(pair.form.entries).max(),
                "oracle_rel_error": float(np.max(np.abs(res.eigenvalues - ref) / ref)),
            })
    failures = []
    for r in rows + extra:
        if max(r["omega_residual"], r["form_residual"]) > tol["residual"] or r["oracle_rel_error"] > tol["oracle_rtol"]:
            failures.append(r)
    report = {
        "config": cfg.name,
        "seed": seed,
        "instances": len(rows),
        "max_omega_residual": max(r["omega_residual"] for r in rows),
        "max_form_residual": max(r["form_residual"] for r in rows),
        "max_oracle_rel_error": max(r["oracle_rel_error"] for r in rows),
        "extra": extra,
        "tolerances": {"residual": tol["residual"], "oracle_rtol": tol["oracle_rtol"]},
        "pass": not failures,
        "first_failure": failures[0] if failures else None,
    }
    write_json(args.out / "williamson.json", report)
    write_dat(args.out / "williamson.dat", ["dim", "instance", "omega_residual", "form_residual", "oracle_rel_error"],
              [[r["dim"], r["instance"], r["omega_residual"], r["form_residual"], r["oracle_rel_error"]] for r in rows])
    if failures:
        print(f"williamson: FAIL, first failing instance {failures[0]}", file=sys.stderr)
        return FAIL
    print(f"williamson: pass ({len(rows)} random instances, max residual "
          f"{max(report['max_omega_residual'], report['max_form_residual']):.2e})")
    return PASS


# ---------------------------------------------------------------------------
# grc


def cmd_grc(cfg, args):
    space = build_space(cfg)
    sec = cfg.section("grc")
    grid = grid_points(cfg, space)
    mm, rt = int(sec.get("max_multiple", 16)), float(sec.get("rel_tol", 1e-8))
    closed = check_closed(space.magnetic, grid, cfg.tolerances["h_fd"])
    closed_ok = closed <= cfg.tolerances["closed"]
    report = {"config": cfg.name, "closedness_residual": closed, "closed": closed_ok, "grid_points": len(grid)}
    checks = []
    if "expect_closed" in sec:
        checks.append(("closed", closed_ok == bool(sec["expect_closed"])))
    elif not closed_ok:
        checks.append(("closed", False))
    if closed_ok:
        sf = eigenvalue_field(space, grid, mm, rt)
        stable = stable_eigenvalue_sets(sf.partition, zip(sf.points, sf.eigenvalues))
        br = bound_report(sf.partition, space.dim, space.base.cuplength, space.base.crit, stable)
        report.update({
            "spectrum": {k: v for k, v in sf.to_dict().items() if k != "points"},
            "relative_spread": sf.relative_spread(),
            "partition": sf.partition.to_dict(),
            "stable_sets": stable,
            "bounds": {**br.to_dict(), "census_bound": census_bound(br)},
        })
        report["spectrum"].pop("eigenvalues")
        if "expect_q" in sec:
            checks.append(("q", sf.partition.q == int(sec["expect_q"])))
        if "expect_bound" in sec:
            checks.append(("bound_main", br.bound_main == int(sec["expect_bound"])))
        if sec.get("expect_equal"):
            checks.append(("equal_eigenvalues", sf.relative_spread() <= float(sec.get("spread_max", 1e-9))))
        d = space.dim
        write_dat(args.out / "spectrum.dat", [f"q{i + 1}" for i in range(d)] + [f"a{i + 1}" for i in range(d // 2)],
                  [list(q) + list(a) for q, a in zip(sf.points, sf.eigenvalues)])
    report["checks"] = dict(checks)
    report["pass"] = all(ok for _, ok in checks)
    write_json(args.out / "grc.json", report)
    if closed_ok:
        print(f"grc: q = {report['partition']['q']}, GRC {'holds' if report['partition']['grc_satisfied'] else 'fails'}, "
              f"bound_main = {report['bounds']['bound_main']}")
    else:
        print(f"grc: magnetic form not closed (residual {closed:.3e})")
    return PASS if report["pass"] else FAIL


# ---------------------------------------------------------------------------
# converge


def cmd_converge(cfg, args):
    space = build_space(cfg)
    sec = cfg.section("converge")
    eps_list = [float(e) for e in sec.get("epsilons", [0.2, 0.1, 0.05, 0.025])]
    n = int(sec.get("n_samples", 256))
    seed = _seed(args, sec)
    ratio_max = float(sec.get("ratio_max", 0.6))
    region = sample_region(space, n, seed)
    rows = []
    for eps in eps_list:
        rc = RescaleConfig(eps, max(0.5, eps))
        gap = convergence_gap(space, rc, region)
        fib = convergence_gap(space, rc, region, components="fibre")
        splits = [split_components(space, rc, q, y) for q, y in zip(*region)]
        ratio_bf = max(b / f for b, f in splits if f > 0)
        rows.append({"epsilon": eps, "gap": gap, "fibre_gap": fib, "base_over_fibre": ratio_bf})
    for prev, row in zip(rows, rows[1:]):
        row["ratio"] = row["gap"] / prev["gap"]
    decreasing = all(b["gap"] < a["gap"] for a, b in zip(rows, rows[1:]))
    ratios_ok = all(r.get("ratio", 0) <= ratio_max for r in rows)
    report = {"config": cfg.name, "seed": seed, "n_samples": n, "rows": rows, "strictly_decreasing": decreasing,
              "ratio_max": ratio_max, "ratios_ok": ratios_ok, "pass": decreasing and ratios_ok}
    if sec.get("include_unit", False):
        report["unit_gap"] = convergence_gap(space, RescaleConfig(1.0, 1.0), region)
        report["unit_gap_positive"] = report["unit_gap"] > 0
        report["pass"] = report["pass"] and report["unit_gap_positive"]
    write_json(args.out / "converge.json", report)
    write_dat(args.out / "converge.dat", ["epsilon", "gap", "fibre_gap", "ratio", "base_over_fibre"],
              [[r["epsilon"], r["gap"], r["fibre_gap"], r.get("ratio"), r["base_over_fibre"]] for r in rows])
    for r in rows:
        print(f"eps={r['epsilon']:<8g} gap={r['gap']:.4e} ratio={r.get('ratio', float('nan')):.3f}")
    return PASS if report["pass"] else FAIL


# ---------------------------------------------------------------------------
# census


def cmd_census(cfg, args):
    space = build_space(cfg)
    sec = cfg.section("census")
    search = dict(sec.get("search", {}))
    if args.jobs is not None:
        search["jobs"] = args.jobs
    if args.seed is not None:
        search["seed"] = args.seed
    scfg = SearchConfig.from_dict(search)
    eps_list = [float(e) for e in sec.get("epsilons", [0.1, 0.05, 0.02])]
    census = orbit_census(space, eps_list, scfg, float(sec.get("convergence_threshold", 0.9)))
    dump = int(sec.get("dump_orbits", 8))
    orbit_rows = []
    for eps, orbits in census.orbits.items():
        for k, orb in enumerate(orbits):
            orbit_rows.append({"epsilon": eps, "index": k, **orb.to_dict()})
            if k < dump:
                path, _ = orbit_path(space, orb, scfg.ds_nodes)
                path = np.vstack([path, path[:1]])
                t = np.linspace(0.0, orb.period, len(path))
                d = space.dim
                traj = Trajectory(t, space.base.wrap(path[:, :d]), path[:, d:],
                                  hamiltonian(space, path[:, :d], path[:, d:]), path[:, :d])
                write_trajectory_csv(args.out / "orbits" / f"eps{eps:g}_orbit{k:03d}.csv", traj,
                                     {"config": cfg.name, "epsilon": eps, **orb.to_dict()})
    report = {"config": cfg.name, "search": scfg.__dict__, **census.to_dict(), "orbits": orbit_rows}
    write_json(args.out / "census.json", report)
    write_dat(args.out / "census.dat", ["epsilon", "seeds", "converged", "distinct", "bound"],
              [[r["epsilon"], r["seeds"], r["converged"], r["distinct"], r["bound"]] for r in census.rows])
    d = space.dim
    write_dat(args.out / "orbit_points.dat", ["epsilon"] + [f"q{i + 1}" for i in range(d)] + ["period"],
              [[o["epsilon"], *o["q"], o["period"]] for o in orbit_rows])
    for r in census.rows:
        print(f"eps={r['epsilon']:<6g} seeds={r['seeds']} converged={r['converged']} distinct={r['distinct']} "
              f"bound={r['bound']} {'pass' if r['pass'] else 'FAIL'}")
    h = census.headline
    print(f"headline: eps={h['epsilon']} distinct={h['distinct']} bound={h['bound']} -> {'pass' if h['pass'] else 'FAIL'}")
    return PASS if h["pass"] else FAIL


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg, args):
    space = build_space(cfg)
    sec = cfg.section("simulate")
    try:
        state = PhaseState(sec["q0"], sec["p0"])
        T = float(sec["T"])
    except KeyError as exc:
        raise ConfigError(f"simulate section needs {exc}") from None
    icfg = IntegratorConfig(**sec.get("integrator", {}))
    start = time.perf_counter()
    traj = integrate(space, state, T, icfg)
    closure = float(np.linalg.norm(np.concatenate([
        space.base.delta(traj.q_unwrapped[-1], traj.q_unwrapped[0]), traj.p[-1] - traj.p[0]])))
    report = {
        "config": cfg.name,
        "T": T,
        "samples": len(traj.t),
        "drift": traj.drift,
        "flagged": traj.flagged,
        "error": traj.error,
        "closure": closure,
        "integrator": {k: v for k, v in traj.meta.items() if k != "wall_clock"},
        "timing": {"wall_clock": time.perf_counter() - start},
    }
    ok = not traj.flagged
    if "expect_closure" in sec:
        report["closure_ok"] = closure <= float(sec["expect_closure"])
        ok = ok and report["closure_ok"]
    report["pass"] = ok
    header = {"config": cfg.name, "q0": state.q, "p0": state.p, "T": T, "integrator": report["integrator"]}
    write_trajectory_csv(args.out / "trajectory.csv", traj, header)
    d = space.dim
    write_dat(args.out / "trajectory.dat", ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H"],
              np.column_stack([traj.t, traj.q_unwrapped, traj.p, traj.energy]))
    write_json(args.out / "simulate.json", report)
    print(f"simulate: {len(traj.t)} samples, drift {traj.drift:.3e}, closure {closure:.3e}")
    return PASS if ok else FAIL


COMMANDS = {
    "williamson": cmd_williamson,
    "grc": cmd_grc,
    "converge": cmd_converge,
    "census": cmd_census,
    "simulate": cmd_simulate,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="magflow", description="Magnetic flows near symplectic minima.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON config path or shipped fixture name")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    ap.add_argument("--jobs", type=int, default=None, help="worker processes for the census")
    ap.add_argument("--seed", type=int, default=None, help="override the config's random seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return CONFIG if exc.code else PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("magflow: --jobs must be positive", file=sys.stderr)
        return CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"magflow: configuration error: {exc}", file=sys.stderr)
        return CONFIG


if __name__ == "__main__":
    sys.exit(main())
