"""Derived quantities and file writers.

Per-unit-thickness conventions: forces in N per meter of out-of-plane depth,
void volumes in m^2.  The gap is the Euclidean distance between a designated
pair of probe nodes in the deformed configuration; generators declare the
pairs, so the measure is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import materials
from .mesh import BULK, THIRD_MEDIUM, Mesh, quadrature, shape_q8

__all__ = [
    "HISTORY_COLUMNS",
    "StepRecord",
    "RunHistory",
    "PointOutsideMeshError",
    "SolutionState",
    "gap",
    "probe_vector",
    "void_volume",
    "cauchy_at_points",
    "write_history_csv",
    "write_vtk",
    "transition_width",
    "rise_onset",
]

HISTORY_COLUMNS = (
    "step",
    "time",
    "load_factor",
    "pressure_pa",
    "control_disp_m",
    "reaction_n",
    "gap_m",
    "void_volume_m2",
    "newton_iters",
    "n_modified",
)


@dataclass
class StepRecord:
    step: int
    time: float
    load_factor: float
    pressure_pa: float
    control_disp_m: float
    reaction_n: float
    gap_m: float
    void_volume_m2: float
    newton_iters: int
    n_modified: int


@dataclass
class RunHistory:
    """Per-converged-step record of a load program run."""

    rows: list[StepRecord] = field(default_factory=list)
    extras: dict[str, list[float]] = field(default_factory=dict)
    completed: bool = False
    abort_reason: str | None = None
    bifurcation: tuple[float, float] | None = None  # (stable, unstable) pressure

    def column(self, name: str) -> np.ndarray:
        if name in HISTORY_COLUMNS:
            return np.array([getattr(r, name) for r in self.rows], dtype=float)
        return np.array(self.extras[name], dtype=float)

    def add_extra(self, name: str, value: float) -> None:
        self.extras.setdefault(name, []).append(float(value))

    @property
    def n_steps(self) -> int:
        return len(self.rows)


class PointOutsideMeshError(ValueError):
    pass


@dataclass
class SolutionState:
    """A converged state, sufficient to sample stresses anywhere in the mesh."""

    mesh: Mesh
    u: np.ndarray
    bulk_model: materials.BulkModel
    medium_model: materials.ThirdMediumModel
    pressure: float = 0.0


def gap(mesh: Mesh, u: np.ndarray, probe_pair: tuple[int, int]) -> float:
    """Euclidean distance between the deformed probe nodes."""
    return float(np.linalg.norm(probe_vector(mesh, u, probe_pair)))


def probe_vector(mesh: Mesh, u: np.ndarray, probe_pair: tuple[int, int]) -> np.ndarray:
    """Deformed vector from the second probe node to the first."""
    ua = np.asarray(u, dtype=float).reshape(-1, 2)
    a, b = probe_pair
    return (mesh.nodes[a] + ua[a]) - (mesh.nodes[b] + ua[b])


def void_volume(mesh: Mesh, u: np.ndarray, region: int = THIRD_MEDIUM, rule=None) -> float:
    """Deformed area of a region: integral of det F over the reference region."""
    rule = rule or quadrature("gauss3x3")
    ids = mesh.element_ids(region)
    if ids.size == 0:
        return 0.0
    tab = mesh.tables(rule, ids)
    ue = np.asarray(u, float)[_edofs(mesh.elements[ids])]
    gu = np.einsum("eqak,ead->eqkd", tab.dN_dX, ue.reshape(len(ids), 8, 2))
    F11 = 1.0 + gu[..., 0, 0]
    F22 = 1.0 + gu[..., 1, 1]
    J = F11 * F22 - gu[..., 0, 1] * gu[..., 1, 0]
    return float(np.sum(tab.weights * J))


def _edofs(conn: np.ndarray) -> np.ndarray:
    out = np.empty(conn.shape[:-1] + (16,), dtype=np.int64)
    out[..., 0::2] = 2 * conn
    out[..., 1::2] = 2 * conn + 1
    return out


def _invert_isoparametric(coords8: np.ndarray, X: np.ndarray):
    """Newton-invert the Q8 map for one element; returns xi or None."""
    xi = np.zeros(2)
    for _ in range(30):
        N, dN, _ = shape_q8(xi)
        r = N @ coords8 - X
        J = np.einsum("ak,al->kl", coords8, dN)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return None
        xi = xi - step
        if np.linalg.norm(step) < 1e-13:
            break
    if np.all(np.abs(xi) <= 1.0 + 1e-8):
        return np.clip(xi, -1.0, 1.0)
    return None


def cauchy_at_points(solution: SolutionState, sample_points) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cauchy stress sigma = (1/J) P F^T sampled at material points.

    Each sample is located in its owning element; P comes from that region's
    material evaluated at the interpolated deformation state (the
    rotation-gradient penalty carries no first-order stress, so medium
    samples need no history).
    """
    mesh = solution.mesh
    u = np.asarray(solution.u, float).reshape(-1, 2)
    results = []
    el_coords = mesh.element_coords()
    lo = el_coords.min(axis=1)
    hi = el_coords.max(axis=1)
    for X in np.atleast_2d(np.asarray(sample_points, dtype=float)):
        pad = 1e-9 + 0.05 * (hi - lo).max()
        cand = np.flatnonzero(
            (X[0] >= lo[:, 0] - pad) & (X[0] <= hi[:, 0] + pad)
            & (X[1] >= lo[:, 1] - pad) & (X[1] <= hi[:, 1] + pad)
        )
        found = None
        for e in cand:
            xi = _invert_isoparametric(el_coords[e], X)
            if xi is not None:
                found = (int(e), xi)
                break
        if found is None:
            raise PointOutsideMeshError(f"sample point {X.tolist()} lies outside the mesh")
        e, xi = found
        N, dN, ddN = shape_q8(xi)
        Xe = el_coords[e]
        Jm = np.einsum("ak,al->kl", Xe, dN)
        Jinv = np.linalg.inv(Jm)  # indexed [alpha, k]
        dN_dX = dN @ Jinv  # dN/dX_k = Jinv[alpha, k] dN/dxi_alpha
        ue = u[mesh.elements[e]]
        F = np.eye(2) + np.einsum("ai,ak->ik", ue, dN_dX)
        if mesh.regions[e] == BULK:
            P = materials.bulk_eval(solution.bulk_model, F).P
        else:
            model = solution.medium_model
            resp = materials.PointResponse.zero(())
            p = solution.pressure if solution.pressure else model.p
            if p:
                resp.add(materials.pneumatic_eval(-model.psi_p * p, F))
            if model.gamma > 0:
                resp.add(materials.contact_eval(model.gamma, model.include_volumetric, F))
            if model.psi_r > 0 and model.regularization == "lnq_plus_gradj":
                ddX = np.einsum("ak,aln->kln", Xe, ddN)
                rhs = ddN - np.einsum("ak,kln->aln", dN_dX, ddX)
                d2N = np.einsum("lm,aln,np->amp", Jinv, rhs, Jinv)
                gF = np.einsum("ai,ajm->ijm", ue, d2N)
                resp.add(materials.reg_gradj_eval(model.psi_r, F, gF))
            P = resp.P
        J = np.linalg.det(F)
        sigma = (P @ F.T) / J
        results.append((X.copy(), sigma))
    return results


def write_history_csv(history: RunHistory, path) -> None:
    """Write the run history with the fixed column set, 17 significant digits."""
    with open(path, "w") as f:
        f.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in history.rows:
            vals = [
                str(r.step),
                f"{r.time:.17g}",
                f"{r.load_factor:.17g}",
                f"{r.pressure_pa:.17g}",
                f"{r.control_disp_m:.17g}",
                f"{r.reaction_n:.17g}",
                f"{r.gap_m:.17g}",
                f"{r.void_volume_m2:.17g}",
                str(r.newton_iters),
                str(r.n_modified),
            ]
            f.write(",".join(vals) + "\n")


def write_probes_csv(history: RunHistory, path) -> None:
    """Companion file for scenario-specific per-step probes."""
    names = sorted(history.extras)
    with open(path, "w") as f:
        f.write("step," + ",".join(names) + "\n")
        for i, r in enumerate(history.rows):
            vals = [f"{history.extras[n][i]:.17g}" for n in names]
            f.write(f"{r.step}," + ",".join(vals) + "\n")


def write_vtk(mesh: Mesh, u: np.ndarray, fields: dict, path) -> None:
    """Legacy VTK 3.0 ASCII writer: unstructured grid of quadratic quads.

    ``fields`` maps cell-data names to per-element arrays; the displacement
    goes out as POINT_DATA vectors and the region tag is always included.
    """
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    nel = mesh.n_elements
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("voidfem solution\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_nodes} double\n")
        for (x, y) in mesh.nodes:
            f.write(f"{x:.17g} {y:.17g} 0\n")
        f.write(f"CELLS {nel} {nel * 9}\n")
        for conn in mesh.elements:
            f.write("8 " + " ".join(str(int(n)) for n in conn) + "\n")
        f.write(f"CELL_TYPES {nel}\n")
        for _ in range(nel):
            f.write("23\n")
        f.write(f"POINT_DATA {mesh.n_nodes}\n")
        f.write("VECTORS displacement double\n")
        for (ux, uy) in u:
            f.write(f"{ux:.17g} {uy:.17g} 0\n")
        f.write(f"CELL_DATA {nel}\n")
        f.write("SCALARS region_id int 1\n")
        f.write("LOOKUP_TABLE default\n")
        for r in mesh.regions:
            f.write(f"{int(r)}\n")
        for name, arr in fields.items():
            f.write(f"SCALARS {name} double 1\n")
            f.write("LOOKUP_TABLE default\n")
            for v in np.asarray(arr, dtype=float):
                f.write(f"{v:.17g}\n")


def mean_cell_cauchy(solution: SolutionState, u_committed=None) -> dict[str, np.ndarray]:
    """Mean in-plane Cauchy components per element (for VTK cell data)."""
    mesh = solution.mesh
    rule = quadrature("gauss3x3")
    out = {k: np.zeros(mesh.n_elements) for k in ("cauchy_xx", "cauchy_yy", "cauchy_xy")}
    for region in (BULK, THIRD_MEDIUM):
        ids = mesh.element_ids(region)
        if ids.size == 0:
            continue
        tab = mesh.tables(rule, ids)
        ue = np.asarray(solution.u, float)[_edofs(mesh.elements[ids])].reshape(len(ids), 8, 2)
        gu = np.einsum("eqak,eai->eqik", tab.dN_dX, ue)
        F = np.eye(2) + gu
        J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        # Output sampling points differ from the integration points of the
        # run, so heavily squeezed elements may fold at some of them; mask
        # those instead of failing the export.
        valid = J > 1e-12
        Fv = np.where(valid[..., None, None], F, np.eye(2))
        if region == BULK:
            P = materials.bulk_eval(solution.bulk_model, Fv).P
        else:
            model = solution.medium_model
            resp = materials.PointResponse.zero(Fv.shape[:-2])
            p = solution.pressure if solution.pressure else model.p
            if p:
                resp.add(materials.pneumatic_eval(-model.psi_p * p, Fv))
            if model.gamma > 0:
                resp.add(materials.contact_eval(model.gamma, model.include_volumetric, Fv))
            P = resp.P
        Jv = np.where(valid, J, 1.0)
        sigma = np.einsum("eqij,eqkj->eqik", P, Fv) / Jv[..., None, None]
        sigma = np.where(valid[..., None, None], sigma, 0.0)
        denom = np.maximum(valid.sum(axis=1), 1)
        out["cauchy_xx"][ids] = sigma[..., 0, 0].sum(axis=1) / denom
        out["cauchy_yy"][ids] = sigma[..., 1, 1].sum(axis=1) / denom
        out["cauchy_xy"][ids] = sigma[..., 0, 1].sum(axis=1) / denom
    return out


# -- curve analysis helpers ---------------------------------------------------


def transition_width(x: np.ndarray, y: np.ndarray, drop: float = 10.0):
    """Width of the knee where |dy/dx| falls by ``drop`` from its plateau.

    Slopes are evaluated between consecutive samples; the plateau is the
    median |slope| over the first half of the curve.  Returns
    (width, x_onset) where x_onset is where the slope first stays below
    plateau/drop, or (None, None) if the curve never gets there.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 4:
        return None, None
    dx = np.diff(x)
    good = np.abs(dx) > 1e-30
    s = np.abs(np.diff(y)[good] / dx[good])
    xm = 0.5 * (x[1:] + x[:-1])[good]
    n = len(s)
    plateau = np.median(s[: max(2, n // 2)])
    if plateau <= 0:
        return None, None
    below = s < plateau / drop
    idx = None
    for i in range(n):
        if below[i] and below[i:].all():
            idx = i
            break
    if idx is None:
        return None, None
    x_on = xm[idx]
    # last location where the slope still had at least half the plateau value
    above = np.flatnonzero(s[: idx + 1] >= 0.5 * plateau)
    x_hi = xm[above[-1]] if above.size else xm[0]
    return abs(x_on - x_hi), x_on


def rise_onset(x: np.ndarray, y: np.ndarray, factor: float = 3.0):
    """First x where |dy/dx| exceeds ``factor`` times its early baseline."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 4:
        return None
    dx = np.diff(x)
    good = np.abs(dx) > 1e-30
    s = np.abs(np.diff(y)[good] / dx[good])
    xm = 0.5 * (x[1:] + x[:-1])[good]
    n = len(s)
    base = np.median(s[: max(2, n // 4)])
    floor = max(base * factor, 1e-12)
    for i in range(n):
        if s[i] > floor and (s[i:] > floor).all():
            return xm[i]
    return None
