"""Config-driven benchmark scenarios.

A run is fully determined by one JSON document with the sections
``scenario``, ``geometry``, ``bulk``, ``third_medium``, ``load``, ``solver``
and ``outputs``.  Unknown keys are rejected.  Checked-in presets reproduce
the benchmark parameter sets; see the presets directory.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np

from . import generators, gmsh_io, postprocess
from .assembly import ConstraintSet, FemProblem
from .materials import BulkModel, ThirdMediumModel
from .mesh import THIRD_MEDIUM, Mesh
from .solver import LoadProgram, SolverConfig

__all__ = [
    "ConfigError",
    "SCENARIOS",
    "default_config",
    "load_config",
    "validate_config",
    "build_scenario",
    "BuiltScenario",
    "preset_path",
    "list_presets",
]


class ConfigError(ValueError):
    pass


_GEOMETRY_KEYS = {
    "box_suction": {"B": float, "H": float, "t": float, "nx": int, "ny": int},
    "box_force": {"B": float, "H": float, "t": float, "nx": int, "ny": int},
    "patch_test": {
        "gap_height": float,
        "aligned": bool,
        "nx_top": int,
        "nx_bottom": int,
        "ny": int,
    },
    "c_shape": {"B": float, "H": float, "t": float, "n_through": int, "extra_column": bool},
    "metamaterial": {
        "B": float,
        "H": float,
        "d": float,
        "t": float,
        "refinement": int,
        "imperfection": float,
    },
    "from_mesh": {
        "path": str,
        "region_map": dict,
        "fixed_boxes": list,
        "driven_boxes": list,
        "driven_component": str,
    },
}

_SCHEMA = {
    "scenario": str,
    "geometry": dict,
    "bulk": {"K": float, "G": float},
    "third_medium": {
        "gamma": float,
        "k_r": float,
        "regularization": str,
        "include_volumetric": bool,
        "psi_p": float,
        "integration": str,
    },
    "load": {
        "control": str,
        "target": float,
        "initial_step": float,
        "max_step": float,
        "unload": bool,
    },
    "solver": {
        "rel_tol": float,
        "abs_tol": float,
        "max_iterations": int,
        "max_halvings": int,
        "growth": float,
        "min_step": float,
        "mc_pivot_floor": float,
        "mc_shift_growth": float,
        "track_inertia": bool,
        "bisect_critical": bool,
        "bisect_resolution": float,
        "branch_switch_kick": float,
        "endgame_rel": float,
    },
    "outputs": {"dir": str, "vtk_every": int},
}

_DEFAULTS = {
    "bulk": {"K": 2000e6, "G": 10e6},
    "third_medium": {
        "gamma": 1.0,
        "k_r": 2e3,
        "regularization": "lnq_plus_gradj",
        "include_volumetric": False,
        "psi_p": 1.0,
        "integration": "lobatto3x3",
    },
    "load": {"control": "pressure", "target": -20e3, "initial_step": 0.05, "max_step": 0.0, "unload": False},
    "solver": {},
    "outputs": {"dir": "out", "vtk_every": 0},
}

_DEFAULT_GEOMETRY = {
    "box_suction": {"B": 2.0, "H": 0.5, "t": 0.1, "nx": 40, "ny": 10},
    "box_force": {"B": 2.0, "H": 0.5, "t": 0.1, "nx": 40, "ny": 10},
    "patch_test": {"gap_height": 0.1, "aligned": True, "nx_top": 4, "nx_bottom": 4, "ny": 4},
    "c_shape": {"B": 1.0, "H": 0.5, "t": 0.2, "n_through": 3, "extra_column": True},
    "metamaterial": {
        "B": 0.04,
        "H": 0.04,
        "d": 0.015,
        "t": 0.00325,
        "refinement": 1,
        "imperfection": 1e-3,
    },
    "from_mesh": {
        "path": "",
        "region_map": {},
        "fixed_boxes": [],
        "driven_boxes": [],
        "driven_component": "y",
    },
}


def default_config(scenario: str) -> dict:
    if scenario not in _GEOMETRY_KEYS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    cfg = copy.deepcopy(_DEFAULTS)
    cfg["scenario"] = scenario
    cfg["geometry"] = copy.deepcopy(_DEFAULT_GEOMETRY[scenario])
    return cfg


def _check_keys(section: str, given: dict, allowed: dict) -> None:
    for key, val in given.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {section}.{key}")
        want = allowed[key]
        if isinstance(want, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{section}.{key} must be an object")
        elif want is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{section}.{key} must be a number")
        elif want is int:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{section}.{key} must be an integer")
        elif want is bool:
            if not isinstance(val, bool):
                raise ConfigError(f"{section}.{key} must be a boolean")
        elif want is str:
            if not isinstance(val, str):
                raise ConfigError(f"{section}.{key} must be a string")
        elif want is list:
            if not isinstance(val, list):
                raise ConfigError(f"{section}.{key} must be a list")


def validate_config(cfg: dict) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "scenario" not in cfg:
        raise ConfigError("config is missing the scenario key")
    scenario = cfg["scenario"]
    full = default_config(scenario)
    _check_keys("", cfg, {k: (dict if isinstance(v, dict) else type(v)) for k, v in full.items()})
    for section, val in cfg.items():
        if section == "scenario":
            continue
        if section == "geometry":
            _check_keys("geometry", val, _GEOMETRY_KEYS[scenario])
        else:
            _check_keys(section, val, _SCHEMA[section])
        full[section].update(val)
    return full


def load_config(path) -> dict:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


@dataclass
class BuiltScenario:
    problem: FemProblem
    load: LoadProgram
    solver_config: SolverConfig
    mesh: Mesh
    summarize: Callable


def _dofs(nodes: np.ndarray, comp: str | None = None) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    if comp == "x":
        return 2 * nodes
    if comp == "y":
        return 2 * nodes + 1
    return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))


def _models(cfg: dict) -> dict:
    tm = cfg["third_medium"]
    return {
        "bulk": BulkModel(K=cfg["bulk"]["K"], G=cfg["bulk"]["G"]),
        "third_medium": ThirdMediumModel(
            p=0.0,
            gamma=tm["gamma"],
            k_r=tm["k_r"],
            regularization=tm["regularization"],
            include_volumetric=tm["include_volumetric"],
            psi_p=tm["psi_p"],
        ),
    }


def _fem_problem(cfg: dict, mesh: Mesh, constraints) -> FemProblem:
    from .mesh import quadrature

    return FemProblem(
        mesh,
        _models(cfg),
        constraints=constraints,
        medium_rule=quadrature(cfg["third_medium"]["integration"]),
    )


def _load_program(cfg: dict) -> LoadProgram:
    ld = cfg["load"]
    return LoadProgram(
        control=ld["control"],
        target=ld["target"],
        initial_step=ld["initial_step"],
        unload=ld["unload"],
        max_step=ld["max_step"] or None,
    )


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


def _find_node(mesh: Mesh, x: float, y: float) -> int:
    d = np.linalg.norm(mesh.nodes - np.array([x, y]), axis=1)
    i = int(np.argmin(d))
    if d[i] > 1e-8:
        raise ConfigError(f"no mesh node at ({x}, {y})")
    return i


def _build_box_suction(cfg: dict) -> BuiltScenario:
    g = cfg["geometry"]
    mesh = generators.gen_box_with_void(g["B"], g["H"], g["t"], g["nx"], g["ny"])
    fixed = _dofs(mesh.node_sets["bottom"])
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, np.array([], int), np.array([]))
    prob = _fem_problem(cfg, mesh, cons)
    prob.reaction_dofs = fixed

    def summarize(history):
        gaps = history.column("gap_m")
        ps = history.column("pressure_pa")
        width, onset = postprocess.transition_width(ps, gaps)
        return {
            "final_gap_m": gaps[-1] if len(gaps) else None,
            "contact_onset_pressure_pa": onset,
            "transition_width_pa": width,
        }

    return BuiltScenario(prob, _load_program(cfg), _solver_config(cfg), mesh, summarize)


def _build_box_force(cfg: dict) -> BuiltScenario:
    g = cfg["geometry"]
    mesh = generators.gen_box_with_void(g["B"], g["H"], g["t"], g["nx"], g["ny"])
    fixed = _dofs(mesh.node_sets["bottom"])
    center = _find_node(mesh, g["B"] / 2.0, g["H"])
    driven = np.array([2 * center + 1])
    target = cfg["load"]["target"]
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.array([target]))
    prob = _fem_problem(cfg, mesh, cons)
    prob.reaction_dofs = driven

    def summarize(history):
        gaps = history.column("gap_m")
        d = np.abs(history.column("control_disp_m"))
        closed = np.flatnonzero(gaps < 0.02 * gaps[0]) if len(gaps) else []
        return {
            "final_gap_m": gaps[-1] if len(gaps) else None,
            "closure_disp_m": d[closed[0]] if len(closed) else None,
        }

    return BuiltScenario(prob, _load_program(cfg), _solver_config(cfg), mesh, summarize)


def _build_patch_test(cfg: dict) -> BuiltScenario:
    g = cfg["geometry"]
    mesh = generators.gen_patch_test(
        g["gap_height"], g["aligned"], g["nx_top"], g["nx_bottom"], g["ny"]
    )
    fixed = np.concatenate(
        [
            _dofs(mesh.node_sets["bottom"], "y"),
            _dofs(mesh.node_sets["pin"], "x"),
            _dofs(mesh.node_sets["pin_top"], "x"),
        ]
    )
    driven = _dofs(mesh.node_sets["top"], "y")
    target = cfg["load"]["target"]
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.full(driven.size, target))
    prob = _fem_problem(cfg, mesh, cons)
    prob.reaction_dofs = driven
    gap_h = g["gap_height"]

    def summarize(history, _prob=None):
        if not history.rows:
            return {}
        u = prob.last_u()
        sol = postprocess.SolutionState(mesh, u, prob.bulk_model, prob.medium_model)
        sig_b, sig_t = patch_sigma22_lines(sol, g)
        ref = patch_reference_sigma22(cfg)
        dev = max(
            float(np.max(np.abs(sig_b / ref - 1.0))),
            float(np.max(np.abs(sig_t / ref - 1.0))),
        )
        return {
            "sigma22_bottom_mean_pa": float(np.mean(sig_b)),
            "sigma22_top_mean_pa": float(np.mean(sig_t)),
            "sigma22_reference_pa": ref,
            "max_rel_deviation_interior": dev,
            "final_gap_m": history.rows[-1].gap_m,
            "initial_gap_m": gap_h,
        }

    return BuiltScenario(prob, _load_program(cfg), _solver_config(cfg), mesh, summarize)


def patch_sigma22_lines(sol, g, trim_widths=2):
    """sigma22 along the outer block boundaries at superconvergent points.

    Stresses of the nearly incompressible blocks oscillate between element
    boundaries under full integration, so each face is sampled at the 2x2
    Gauss points of its outermost element row, excluding ``trim_widths``
    coarse element widths nearest each vertical edge (where the band's free
    surface leaves its mark).
    """
    gp = 0.5 / np.sqrt(3.0)
    nmax = max(g["nx_top"], g["nx_bottom"])
    lo, hi = trim_widths / nmax, 1.0 - trim_widths / nmax
    hy = 1.0 / g["ny"]
    out = []
    faces = (
        (g["nx_bottom"], 0.0, 1.0),
        (g["nx_top"], 2.0 + g["gap_height"], -1.0),
    )
    for nxf, yface, up in faces:
        w = 1.0 / nxf
        yg = yface + up * hy * (0.5 - gp)
        xs = np.array(
            [(e + 0.5) * w + s * w for e in range(nxf) for s in (-gp, gp)]
        )
        xs = xs[(xs >= lo - 1e-9) & (xs <= hi + 1e-9)]
        pts = np.stack([xs, np.full_like(xs, yg)], axis=1)
        out.append(
            np.array([s[1][1, 1] for s in postprocess.cauchy_at_points(sol, pts)])
        )
    return out[0], out[1]


def patch_reference_sigma22(cfg: dict) -> float:
    """Contact-free monolithic solution: one 1 x 2 block, same net compression.

    The patch displacement splits into closing the gap and straining the two
    blocks, so the reference block of height 2 is compressed by
    ``target + gap_height``.
    """
    from .solver import run_load_program

    g = cfg["geometry"]
    ny_ref = 2 * g["ny"]
    mesh = generators.gen_block(1.0, 2.0, max(g["nx_top"], g["nx_bottom"]), ny_ref)
    fixed = np.concatenate(
        [_dofs(mesh.node_sets["bottom"], "y"), _dofs(mesh.node_sets["pin"], "x")]
    )
    driven = _dofs(mesh.node_sets["top"], "y")
    target = cfg["load"]["target"] + g["gap_height"]
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.full(driven.size, target))
    prob = _fem_problem(cfg, mesh, cons)
    hist = run_load_program(
        prob,
        LoadProgram("displacement", target, initial_step=0.25),
        SolverConfig(track_inertia=False),
    )
    if not hist.completed:
        raise RuntimeError("contact-free reference solve failed")
    sol = postprocess.SolutionState(mesh, prob.last_u(), prob.bulk_model, prob.medium_model)
    pts = np.stack([np.linspace(0.3, 0.7, 5), np.full(5, 1.0)], axis=1)
    sig = [s[1][1, 1] for s in postprocess.cauchy_at_points(sol, pts)]
    return float(np.mean(sig))


def _build_c_shape(cfg: dict) -> BuiltScenario:
    g = cfg["geometry"]
    mesh = generators.gen_c_shape(g["B"], g["H"], g["t"], g["n_through"], g["extra_column"])
    fixed = _dofs(mesh.node_sets["left"])
    tip = mesh.node_sets["tip_load"][0]
    driven = np.array([2 * tip + 1])
    target = cfg["load"]["target"]
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.array([target]))
    prob = _fem_problem(cfg, mesh, cons)
    prob.reaction_dofs = driven
    pair = mesh.probe_pairs["gap"]
    prob.extra_probes["signed_gap"] = lambda m, u: float(
        postprocess.probe_vector(m, u, pair)[1]
    )

    def summarize(history):
        if not history.rows:
            return {}
        d = np.abs(history.column("control_disp_m"))
        R = np.abs(history.column("reaction_n"))
        sg = history.column("signed_gap")
        onset = postprocess.rise_onset(d, R)
        return {
            "last_converged_disp_m": float(d[-1]),
            "force_rise_onset_disp_m": onset,
            "min_signed_gap_m": float(sg.min()),
            "interpenetration": bool(sg.min() < -1e-4),
        }

    return BuiltScenario(prob, _load_program(cfg), _solver_config(cfg), mesh, summarize)


def _hole_ellipticity(mesh: Mesh, hole_set: np.ndarray):
    """Signed in-plane anisotropy of a deformed hole boundary.

    Positive means the hole is wider along x than y (from second moments of
    the boundary nodes about their centroid).
    """
    ids = np.asarray(hole_set, dtype=np.int64)

    def probe(m, u):
        x = m.nodes[ids] + np.asarray(u).reshape(-1, 2)[ids]
        c = x.mean(axis=0)
        dx = x - c
        mxx = np.mean(dx[:, 0] ** 2)
        myy = np.mean(dx[:, 1] ** 2)
        return float((mxx - myy) / (mxx + myy))

    return probe


def _build_metamaterial(cfg: dict) -> BuiltScenario:
    g = cfg["geometry"]
    mesh = generators.gen_metamaterial_plate(
        g["B"], g["H"], g["d"], g["t"], g["refinement"], g["imperfection"]
    )
    fixed = np.concatenate(
        [_dofs(mesh.node_sets["pin"]), _dofs(mesh.node_sets["roller"], "y")]
    )
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, np.array([], int), np.array([]))
    prob = _fem_problem(cfg, mesh, cons)
    prob.reaction_dofs = fixed
    for k in range(4):
        prob.extra_probes[f"ellipticity_{k}"] = _hole_ellipticity(
            mesh, mesh.node_sets[f"hole_{k}"]
        )

    def summarize(history):
        from .solver import detect_bifurcation

        crit = detect_bifurcation(history)
        out = {"critical_pressure_pa": crit}
        if history.rows:
            e = [history.column(f"ellipticity_{k}")[-1] for k in range(4)]
            out["final_ellipticities"] = e
            out["alternating_pattern"] = bool(
                np.sign(e[0]) == np.sign(e[3])
                and np.sign(e[1]) == np.sign(e[2])
                and np.sign(e[0]) == -np.sign(e[1])
                and min(abs(v) for v in e) > 1e-3
            )
            out["final_void_volume_m2"] = history.rows[-1].void_volume_m2
        return out

    return BuiltScenario(prob, _load_program(cfg), _solver_config(cfg), mesh, summarize)


def _build_from_mesh(cfg: dict) -> BuiltScenario:
    g = cfg["geometry"]
    region_map = {int(k): v for k, v in g["region_map"].items()}
    mesh = gmsh_io.import_gmsh_v2(g["path"], region_map)

    def in_boxes(boxes):
        sel = np.zeros(mesh.n_nodes, dtype=bool)
        for x0, y0, x1, y1 in boxes:
            sel |= (
                (mesh.nodes[:, 0] >= x0)
                & (mesh.nodes[:, 0] <= x1)
                & (mesh.nodes[:, 1] >= y0)
                & (mesh.nodes[:, 1] <= y1)
            )
        return np.flatnonzero(sel)

    fixed = _dofs(in_boxes(g["fixed_boxes"]))
    driven_nodes = in_boxes(g["driven_boxes"])
    driven = _dofs(driven_nodes, g["driven_component"]) if driven_nodes.size else np.array([], int)
    target = cfg["load"]["target"]
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.full(driven.size, target))
    prob = _fem_problem(cfg, mesh, cons)
    prob.reaction_dofs = driven if driven.size else fixed

    def summarize(history):
        return {"final_gap_m": history.rows[-1].gap_m if history.rows else None}

    return BuiltScenario(prob, _load_program(cfg), _solver_config(cfg), mesh, summarize)


SCENARIOS = {
    "box_suction": _build_box_suction,
    "box_force": _build_box_force,
    "patch_test": _build_patch_test,
    "c_shape": _build_c_shape,
    "metamaterial": _build_metamaterial,
    "from_mesh": _build_from_mesh,
}


def build_scenario(cfg: dict) -> BuiltScenario:
    cfg = validate_config(cfg)
    return SCENARIOS[cfg["scenario"]](cfg)


def list_presets() -> list[str]:
    pkg = resources.files("voidfem") / "presets"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def preset_path(name: str):
    pkg = resources.files("voidfem") / "presets"
    p = pkg / f"{name}.json"
    if not p.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return p
