"""Command-line interface: run / verify / fit / energy-sweep / mesh-info.

Exit codes for ``run``: 0 when the load program completed, 2 when it aborted
with a partial history (the last converged state is still written), 1 on
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, postprocess, scenarios, verify
from .calibration import UniaxialDataset, fit_young_modulus
from .materials import contact_eval, det2
from .mesh import BULK, THIRD_MEDIUM, quadrature
from .solver import run_load_program
from .tensors import embed_plane_strain


def _resolve_config(spec: str) -> dict:
    p = Path(spec)
    if p.is_file():
        return scenarios.load_config(p)
    try:
        return scenarios.load_config(scenarios.preset_path(spec))
    except scenarios.ConfigError:
        if p.suffix == ".json":
            raise scenarios.ConfigError(f"config file not found: {spec}")
        raise


def cmd_run(args) -> int:
    try:
        cfg = _resolve_config(args.config)
    except (scenarios.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        cfg["outputs"]["dir"] = args.out

    built = scenarios.build_scenario(cfg)
    outdir = Path(cfg["outputs"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)

    history = run_load_program(built.problem, built.load, built.solver_config)

    postprocess.write_history_csv(history, outdir / "history.csv")
    if history.extras:
        postprocess.write_probes_csv(history, outdir / "probes.csv")
    sol = postprocess.SolutionState(
        built.mesh,
        built.problem.last_u(),
        built.problem.bulk_model,
        built.problem.medium_model,
        pressure=history.rows[-1].pressure_pa if history.rows else 0.0,
    )
    fields = postprocess.mean_cell_cauchy(sol)
    postprocess.write_vtk(built.mesh, built.problem.last_u(), fields, outdir / "solution_final.vtk")

    manifest = {
        "version": __version__,
        "config": cfg,
        "completed": history.completed,
        "abort_reason": history.abort_reason,
        "n_steps": history.n_steps,
        "results": built.summarize(history),
    }
    with open(outdir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, default=_json_default)
        f.write("\n")

    status = "completed" if history.completed else f"aborted ({history.abort_reason})"
    print(f"{cfg['scenario']}: {status}, {history.n_steps} converged steps -> {outdir}")
    return 0 if history.completed else 2


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def cmd_verify(args) -> int:
    results = verify.run_checks(seed=args.seed, fast=args.fast)
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        ok &= r.passed
    print(f"{'all checks passed' if ok else 'CHECKS FAILED'}")
    return 0 if ok else 1


def cmd_fit(args) -> int:
    try:
        datasets = [UniaxialDataset.from_csv(p) for p in args.files]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    res = fit_young_modulus(datasets, nu=args.nu)
    K_paper_mpa = 91.111
    print(f"E   = {res.E / 1e6:.6g} MPa")
    print(f"G   = {res.G / 1e6:.6g} MPa")
    print(f"K   = {res.K / 1e6:.6g} MPa")
    print(f"rms = {res.rms / 1e6:.6g} MPa over {res.n_points} points")
    print(
        f"note: K follows from E/(3(1-2*nu)); the commonly quoted "
        f"{K_paper_mpa} MPa for E=0.547 MPa, nu=0.499 is a rounding artifact."
    )
    out = Path(args.out) if args.out else Path("fit_report.csv")
    with open(out, "w") as f:
        f.write("e_pa,k_pa,g_pa,rms_pa,n_points\n")
        f.write(
            f"{res.E:.17g},{res.K:.17g},{res.G:.17g},{res.rms:.17g},{res.n_points}\n"
        )
    print(f"report -> {out}")
    return 0


def cmd_energy_sweep(args) -> int:
    if not (0 < args.smin < 1):
        print("error: --smin must lie in (0, 1)", file=sys.stderr)
        return 1
    ss = np.linspace(args.smin, 1.0, args.steps)
    rows = []
    for s in ss:
        F2 = np.diag([s, s])
        J2 = det2(F2)
        F3 = embed_plane_strain(F2)
        I1_2 = np.trace(F3 @ F3.T)
        wvol2 = np.log(J2) ** 2
        wiso2 = J2 ** (-2.0 / 3.0) * I1_2 - 3.0
        J3 = s**3
        I1_3 = 3.0 * s * s
        wvol3 = np.log(J3) ** 2
        wiso3 = J3 ** (-2.0 / 3.0) * I1_3 - 3.0
        rows.append((s, wvol2, wiso2, wvol3, wiso3))
    out = Path(args.out)
    with open(out, "w") as f:
        f.write("stretch,w_vol_inplane,w_iso_inplane,w_vol_triaxial,w_iso_triaxial\n")
        for r in rows:
            f.write(",".join(f"{v:.17g}" for v in r) + "\n")
    print(f"energy sweep ({args.steps} samples, s in [{args.smin}, 1]) -> {out}")
    return 0


def cmd_mesh_info(args) -> int:
    try:
        cfg = _resolve_config(args.config)
    except (scenarios.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    built = scenarios.build_scenario(cfg)
    mesh = built.mesh
    mesh.audit_positive_jacobians()
    print(f"scenario      : {cfg['scenario']}")
    print(f"nodes         : {mesh.n_nodes}")
    print(f"elements      : {mesh.n_elements}")
    print(f"dofs          : {2 * mesh.n_nodes}")
    print(f"bulk elements : {int(np.sum(mesh.regions == BULK))}")
    print(f"void elements : {int(np.sum(mesh.regions == THIRD_MEDIUM))}")
    print(f"bulk area     : {mesh.region_area(BULK):.9g} m^2")
    print(f"void area     : {mesh.region_area(THIRD_MEDIUM):.9g} m^2")
    print(f"node sets     : {', '.join(sorted(mesh.node_sets))}")
    print(f"probe pairs   : {', '.join(sorted(mesh.probe_pairs))}")
    print("jacobian audit: pass (gauss3x3 and lobatto3x3)")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="voidfem",
        description="Plane-strain FEM for pneumatically actuated voids with third-medium contact",
    )
    ap.add_argument("--threads", type=int, default=1, help="linear-algebra thread hint")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario from a config file or preset name")
    p.add_argument("config", help="path to a JSON config, or a preset name")
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("verify", help="run the self-consistency check suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast", action="store_true", help="skip the slow reversibility check")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("fit", help="fit the Young's modulus to uniaxial CSV data")
    p.add_argument("files", nargs="+", help="CSV files with columns lambda1,p11_pa")
    p.add_argument("--nu", type=float, default=0.499)
    p.add_argument("--out", help="report path (default fit_report.csv)")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("energy-sweep", help="tabulate the contact energy terms under compression")
    p.add_argument("--smin", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=96)
    p.add_argument("--out", default="energy_sweep.csv")
    p.set_defaults(fn=cmd_energy_sweep)

    p = sub.add_parser("mesh-info", help="build a scenario mesh and print audits")
    p.add_argument("config", help="path to a JSON config, or a preset name")
    p.set_defaults(fn=cmd_mesh_info)

    p = sub.add_parser("presets", help="list the shipped preset configs")
    p.set_defaults(fn=lambda a: (print("\n".join(scenarios.list_presets())), 0)[1])

    args = ap.parse_args(argv)
    if args.threads != 1:
        import os

        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.fn(args)
    except scenarios.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
