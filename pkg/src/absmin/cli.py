"""Scene-driven command line front end.

Usage::

    absmin COMMAND SCENE [--out DIR] [--threads N] [--pgm]
    absmin report [--out DIR]
    absmin scenes

``SCENE`` is a JSON scene file or the name of a bundled scene.  Every
command writes its CSV/JSON artifacts and a ``manifest_<command>.json`` into
the output directory.  The exit status is 0 when every check passed or
failed as expected (``expected_fail`` in the scene), 1 when a check failed
unexpectedly and 2 on usage or scene errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import action as act
from . import flow as fl
from . import solver as so
from . import verify as vf
from .catalog import evaluate
from .errors import AbsminError, ConfigError
from .geometry import distance_dlambda, distance_du
from .hamiltonian import SamplePlan, check_assumptions
from .scene import (Scene, bundled_scenes, load_scene, write_fields_csv, write_heatmaps,
                    write_json, write_manifest)

log = logging.getLogger("absmin")

COMMANDS = ("assumptions", "distance", "action", "flow", "verify", "solve", "patch",
            "counterexample", "report")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class Run:
    """Shared state of one command: scene, grid, spec, output bookkeeping."""

    def __init__(self, scene: Scene | None, out_dir: Path, threads: int, pgm: bool):
        self.scene = scene
        self.out = out_dir
        self.threads = max(1, threads)
        self.pgm = pgm
        self.outputs = []
        self.params = {}
        self._grid = None
        self._spec = None

    @property
    def grid(self):
        if self._grid is None:
            self._grid = self.scene.grid()
        return self._grid

    @property
    def spec(self):
        if self._spec is None:
            self._spec = self.scene.spec()
        return self._spec

    def source_node(self) -> int:
        pt = self.scene.source
        if pt is None:
            lo, hi = self.grid.bbox
            pt = 0.5 * (np.asarray(lo) + np.asarray(hi))
        return self.grid.nearest_node(pt)

    def fields(self, name: str, fields: dict):
        fname = f"{name}.csv"
        write_fields_csv(self.out / fname, self.grid, fields)
        self.outputs.append(fname)
        if self.pgm:
            self.outputs += write_heatmaps(self.out, self.grid, fields, prefix=f"{name}_")

    def json(self, name: str, obj):
        fname = f"{name}.json"
        write_json(self.out / fname, obj)
        self.outputs.append(fname)

    def map(self, fn, items):
        if self.threads == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def _col(prefix, v):
    return f"{prefix}={v:g}"


# -- commands ------------------------------------------------------------------------

def cmd_assumptions(run: Run):
    grid, spec = run.grid, run.spec
    pts = grid.coords[grid.inside]
    step = max(1, len(pts) // 200)
    plan = SamplePlan(x_samples=pts[::step], seed=run.scene.seed)
    rep = check_assumptions(spec, plan)
    run.json("assumptions", {"hamiltonian": spec.to_dict(), **rep.summary()})
    return []


def cmd_distance(run: Run):
    grid, spec = run.grid, run.spec
    src = run.source_node()
    fields = {"d_U": distance_du(grid, src).values}
    for lam in run.scene.lambdas:
        fields[_col("d_lambda", lam)] = distance_dlambda(grid, spec, lam, src, "from").values
    run.fields("distance", fields)
    run.params.update({"source": grid.node_xy(src).tolist(), "lambdas": run.scene.lambdas})
    return []


def cmd_action(run: Run):
    grid, spec = run.grid, run.spec
    src = run.source_node()
    times = run.scene.times or [0.1, 0.25, 0.5]
    A = act.action_slices(grid, spec, src, times)
    fields = {_col("action_t", t): A.slices[k] for k, t in enumerate(A.times)}
    run.fields("action", fields)
    summary = {"times": list(A.times), "notes": A.notes}
    if 0.0 in A.times or run.scene.raw.get("fronts"):
        prof = fl.default_profile(grid, spec)
        lam = run.scene.lambdas[0]
        dist = distance_dlambda(grid, spec, lam, src, "from")
        F = act.extract_fronts(A, dist, lam, profile=prof)
        summary["fronts"] = {"lambda": lam, "sizes": F.fronts.sum(axis=(1, 2)).tolist(),
                             "containment": F.containment}
    run.json("action", summary)
    run.params.update({"source": grid.node_xy(src).tolist(), "times": list(A.times)})
    return []


def cmd_flow(run: Run):
    grid, spec = run.grid, run.spec
    u = evaluate(run.scene.function("u"), grid, spec)
    times = run.scene.times or [2 * grid.h, 4 * grid.h]
    fields = {"u": u}
    info = []
    for t in times:
        i_up, i_lo = {}, {}
        fields[_col("upper_t", t)] = fl.t_upper(grid, spec, u, t, info=i_up)
        fields[_col("lower_t", t)] = fl.t_lower(grid, spec, u, t, info=i_lo)
        info.append({"t": t, "upper": i_up, "lower": i_lo})
    run.fields("flow", fields)
    run.json("flow", {"runs": info})
    run.params["times"] = list(times)
    return []


def _verify_reports(run: Run, u, v=None):
    grid, spec, sc = run.grid, run.spec, run.scene
    tol = sc.tolerances
    jobs = []
    for name in sc.checks:
        if name == "convexity":
            cfg = sc.convexity
            n = int(cfg.get("n_steps", 4))
            dt = float(cfg.get("step", grid.h))
            R = cfg.get("reach") or fl.flow_reach(grid, spec, u, dt)
            V = grid.inner(n * R * grid.h + grid.h)
            jobs.append(lambda V=V, n=n, dt=dt, R=R: vf.check_convexity(
                grid, spec, u, V, n * dt, n, tol["convexity"], reach=R, window_radius=0.25))
        elif name == "cica":
            triples = vf.sample_cica_triples(grid, sc.lambdas, sc.seed)
            jobs.append(lambda t=triples: vf.check_cica(grid, spec, u, t, tol.get("cica")))
        elif name == "slope_identity":
            V = grid.inner(0.25 * grid.diameter / 2 + 2 * grid.h)
            jobs.append(lambda V=V: vf.check_slope_identity(grid, spec, u, V, sc.probe_times,
                                                            tol["slope_identity"]))
        elif name == "comparison":
            if v is None:
                raise ConfigError("scene field 'functions.v' is required for the comparison check")
            jobs.append(lambda: vf.check_comparison(grid, u, v, tol["comparison"]))
        elif name == "small_slope_closeness":
            if v is None:
                raise ConfigError("scene field 'functions.v' is required for small_slope_closeness")
            jobs.append(lambda: vf.check_small_slope_closeness(grid, spec, u, v, sc.probe_times))
    return run.map(lambda job: job(), jobs)


def cmd_verify(run: Run):
    grid, spec = run.grid, run.spec
    u = evaluate(run.scene.function("u"), grid, spec)
    v = evaluate(run.scene.functions["v"], grid, spec) if "v" in run.scene.functions else None
    reports = _verify_reports(run, u, v)
    run.json("verify", vf.reports_to_json(reports))
    return reports


def _solve(run: Run):
    grid, spec, sc = run.grid, run.spec, run.scene
    g = evaluate(sc.function("g"), grid, spec)
    cfg = sc.solver
    res = so.solve_dirichlet(grid, spec, g, delta=cfg.get("delta"), max_iters=int(cfg.get("max_iters", 5000)),
                             eps=float(cfg.get("eps", 1e-9)), reach=cfg.get("reach"),
                             levels=cfg.get("levels"))
    return g, res


def cmd_solve(run: Run):
    grid, spec, sc = run.grid, run.spec, run.scene
    g, res = _solve(run)
    so.attach_checks(grid, spec, res, sc.lambdas, sc.seed, sc.tolerances["convexity"])
    run.fields("solve", {"g": np.where(grid.boundary, g, np.nan), "u": res.u})
    summary = {"iterations": res.iterations, "residual": res.residual, "delta": res.delta,
               "reach": res.reach, "level": res.level, "converged": res.converged,
               "history": res.history, "checks": res.checks}
    run.json("solve", vf._plain(summary))
    reports = [vf.VerificationReport("solver_converged", res.converged, res.residual,
                                     float(sc.solver.get("eps", 1e-9)))]
    for key in ("convexity", "cica"):
        c = res.checks[key]
        reports.append(vf.VerificationReport(c["name"], bool(c["passed"]),
                                             float(c.get("worst_violation", np.nan)),
                                             float(c.get("tolerance", np.nan)), details=c))
    run.params.update({"delta": res.delta, "reach": res.reach})
    return reports


def cmd_patch(run: Run):
    grid, spec, sc = run.grid, run.spec, run.scene
    if "u" in sc.functions:
        u = evaluate(sc.functions["u"], grid, spec)
    else:
        _, res = _solve(run)
        u = res.u
    probes = sc.probe_times or so.default_probe_times(grid)
    sf = fl.slope_fields(grid, spec, u, probes)
    patches = run.map(lambda s: so.patch(grid, spec, u, s, sf), sc.sigmas)
    fields = {"u": u, "s_plus": sf.s_plus}
    for P in patches:
        fields[_col("u_sigma", P.sigma)] = P.u_sigma
    run.fields("patch", fields)
    reports = vf.check_patch_family(grid, spec, u, patches, probes, sc.tolerances["patch_slope"])
    run.json("patch", {"patches": [{"sigma": P.sigma, "noop": P.noop, **P.diagnostics} for P in patches],
                       "reports": vf.reports_to_json(reports)})
    run.params.update({"sigmas": sc.sigmas, "probe_times": list(probes)})
    return reports


def cmd_counterexample(run: Run):
    sc = run.scene
    B = so.counterexample_scenario(sc.h)
    run._grid, run._spec = B.grid, B.spec
    run.fields("counterexample", {"u": B.u, "v": B.v, "u_minus_v": B.u - B.v})
    comp = vf.check_comparison(B.grid, B.u, B.v, sc.tolerances["comparison"])
    close = vf.check_small_slope_closeness(B.grid, B.spec, B.u, B.v, sc.probe_times)
    summary = {"boundary_residual": B.boundary_residual, "energy_u": B.energy_u,
               "energy_v": B.energy_v, "interior_gap": B.interior_gap,
               "gap_location": B.gap_location, "gap_radius": B.gap_radius,
               "reports": vf.reports_to_json([comp, close])}
    run.json("counterexample", summary)
    return [comp, close]


def cmd_report(run: Run):
    entries = []
    for p in sorted(run.out.glob("*.json")):
        if p.name.startswith("manifest_") or p.name == "summary.json":
            continue
        data = json.loads(p.read_text())
        reps = data if isinstance(data, list) else data.get("reports", [])
        for r in reps:
            if isinstance(r, dict) and "passed" in r:
                entries.append({"source": p.name, "name": r["name"], "passed": r["passed"],
                                "worst_violation": r.get("worst_violation"),
                                "tolerance": r.get("tolerance")})
    summary = {"n_reports": len(entries), "n_passed": sum(e["passed"] for e in entries),
               "reports": entries}
    run.json("summary", summary)
    return []


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="absmin", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS + ("scenes",))
    ap.add_argument("scene", nargs="?", help="scene JSON file or bundled scene name")
    ap.add_argument("--out", default="absmin_out", help="output directory (default: %(default)s)")
    ap.add_argument("--threads", type=int, default=1, help="worker pool size (default: 1)")
    ap.add_argument("--pgm", action="store_true", help="also write PGM heatmaps of every field")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(command: str, scene_path, out_dir, threads: int = 1, pgm: bool = False) -> int:
    """Execute one command; returns the process exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = None
    if command != "report":
        if scene_path is None:
            raise ConfigError(f"command {command!r} needs a scene")
        scene = load_scene(scene_path)
    r = Run(scene, out, threads, pgm)
    reports = HANDLERS[command](r)
    expected = set(scene.expected_fail) if scene else set()
    unexpected = [rep.name for rep in reports if not rep.passed and rep.name not in expected]
    r.params["checks"] = {rep.name: {"passed": rep.passed, "expected_fail": rep.name in expected}
                          for rep in reports}
    write_manifest(out, command, scene, vf._plain(r.params), r.outputs)
    for rep in reports:
        tag = "PASS" if rep.passed else ("XFAIL" if rep.name in expected else "FAIL")
        print(f"{tag:5s} {rep.name}: worst={rep.worst_violation:.3g} tol={rep.tolerance:.3g}")
    return EXIT_FAIL if unexpected else EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "scenes":
        print("\n".join(bundled_scenes()))
        return EXIT_OK
    try:
        return run(args.command, args.scene, args.out, args.threads, args.pgm)
    except AbsminError as exc:
        print(f"absmin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
