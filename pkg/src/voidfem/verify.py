"""Independent finite-difference and edge-quadrature oracles.

These routines deliberately avoid calling the analytic implementations they
are used to check: gradients and Hessians come from central differences with
one Richardson extrapolation level, and the follower-load oracle integrates
the pressure traction edge by edge with its own 1D shape functions.

`run_checks` drives the consistency suite behind the ``verify`` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["fd_gradient", "fd_hessian", "follower_oracle", "CheckResult", "run_checks"]


def fd_gradient(energy_fn: Callable[[np.ndarray], float], point: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient with one Richardson extrapolation level.

    ``energy_fn`` maps a flat array to a scalar; ``h`` is the absolute step.
    """
    x = np.asarray(point, dtype=float).ravel()
    n = x.size

    def central(step):
        g = np.empty(n)
        for i in range(n):
            xp = x.copy()
            xm = x.copy()
            xp[i] += step
            xm[i] -= step
            g[i] = (energy_fn(xp) - energy_fn(xm)) / (2.0 * step)
        return g

    g1 = central(h)
    g2 = central(h / 2.0)
    return (4.0 * g2 - g1) / 3.0


def fd_hessian(residual_fn: Callable[[np.ndarray], np.ndarray], point: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian of a residual, Richardson-extrapolated once."""
    x = np.asarray(point, dtype=float).ravel()
    n = x.size
    r0 = np.asarray(residual_fn(x), dtype=float)
    m = r0.size

    def central(step):
        H = np.empty((m, n))
        for i in range(n):
            xp = x.copy()
            xm = x.copy()
            xp[i] += step
            xm[i] -= step
            H[:, i] = (np.asarray(residual_fn(xp)) - np.asarray(residual_fn(xm))) / (2.0 * step)
        return H

    h1 = central(h)
    h2 = central(h / 2.0)
    return (4.0 * h2 - h1) / 3.0


def _edge_shape_1d(s: float):
    """Quadratic 1D shape functions for an (end, mid, end) edge at s in [-1, 1]."""
    N = np.array([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)])
    dN = np.array([s - 0.5, -2.0 * s, s + 0.5])
    return N, dN


def follower_oracle(mesh, boundary: Sequence[tuple[int, int, int]], p: float, u: np.ndarray) -> np.ndarray:
    """Consistent nodal forces of a uniform pressure on a deformed boundary.

    ``boundary`` lists quadratic edges (n0, nmid, n1) traversed
    counterclockwise around the pressurized region, so ``n da = (dy, -dx)``.
    ``p`` is the energy coefficient of the pneumatic term (the hydrostatic
    Cauchy stress carried by the medium).  Returns a global force vector of
    shape (n_nodes * 2,).
    """
    gauss = (
        (-np.sqrt(3.0 / 5.0), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (np.sqrt(3.0 / 5.0), 5.0 / 9.0),
    )
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    x_def = mesh.nodes + u
    f = np.zeros(mesh.n_nodes * 2)
    for n0, nm, n1 in boundary:
        ids = (n0, nm, n1)
        xe = x_def[list(ids)]  # (3, 2), ordered end-mid-end along the edge
        for s, w in gauss:
            N, dN = _edge_shape_1d(s)
            t = dN @ xe  # dx/ds
            nda = np.array([t[1], -t[0]])  # outward normal times |dx/ds|
            for a, nid in enumerate(ids):
                f[2 * nid : 2 * nid + 2] += w * p * N[a] * nda
    return f


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-30)
    return float(np.max(np.abs(a - b)) / scale)


def run_checks(seed: int = 0, mutator: Callable | None = None, fast: bool = False) -> list[CheckResult]:
    """Run the self-consistency suite and return one result per named check.

    ``mutator(name, response)`` may alter a material response before it is
    compared; the test suite uses this to confirm that an injected defect is
    caught and named.
    """
    from . import assembly, materials, scenarios
    from .mesh import quadrature
    from .solver import SolverConfig, run_load_program

    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def record(name, err, tol):
        results.append(CheckResult(name, err < tol, f"max rel err {err:.3e} (tol {tol:.0e})"))

    def random_state():
        F = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        while materials.det2(F) < 0.3:
            F = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        gF = 0.4 * rng.standard_normal((2, 2, 2))
        gf = 0.2 * rng.standard_normal((2, 2, 2))
        hist = 0.1 * rng.standard_normal((2, 2, 2))
        hist = 0.5 * (hist - np.swapaxes(hist, 0, 1))
        return F, gF, gf, hist

    model = materials.ThirdMediumModel(
        p=-3.0, gamma=1.0, k_r=2.0e3, regularization="lnq_plus_gradj"
    )

    def respond(name, F, gF, gf, hist):
        if name == "bulk":
            resp = materials.bulk_eval(materials.BulkModel(K=2000e6, G=10e6), F)
        elif name == "pneumatic":
            resp = materials.pneumatic_eval(4.2, F)
        elif name == "contact":
            resp = materials.contact_eval(1.0, False, F)
        elif name == "reg_lnq":
            resp = materials.reg_lnq_eval(
                2e3, materials.update_grad_ln_q(hist, gf)
            )
        elif name == "reg_gradj":
            resp = materials.reg_gradj_eval(2e3, F, gF)
        elif name == "reg_gradf":
            resp = materials.reg_gradf_eval(2e3, gF)
        else:
            resp, _ = materials.third_medium_eval(model, hist, F, gF, gf)
        if mutator is not None:
            mutator(name, resp)
        return resp

    # --- gradient / tangent checks per material term ----------------------
    terms = ["bulk", "pneumatic", "contact", "reg_lnq", "reg_gradj", "reg_gradf", "third_medium"]
    for name in terms:
        F0, gF0, gf0, hist = random_state()

        def energy(z):
            F = z[:4].reshape(2, 2)
            gF = z[4:].reshape(2, 2, 2)
            # grad F and the increment gradient move together during a step
            return float(respond(name, F, gF, gf0 + (gF - gF0), hist).W)

        def first_var(z):
            F = z[:4].reshape(2, 2)
            gF = z[4:].reshape(2, 2, 2)
            r = respond(name, F, gF, gf0 + (gF - gF0), hist)
            return np.concatenate([r.P.ravel(), r.T.ravel()])

        z0 = np.concatenate([F0.ravel(), gF0.ravel()])
        g_fd = fd_gradient(energy, z0, 1e-6)
        g_an = first_var(z0)
        record(f"gradient[{name}]", _rel_err(g_an, g_fd), 1e-6)

        H_fd = fd_hessian(first_var, z0, 1e-6)
        r0 = respond(name, F0, gF0, gf0, hist)
        H_an = np.zeros((12, 12))
        H_an[:4, :4] = r0.D.reshape(4, 4)
        H_an[:4, 4:] = r0.C_PT.reshape(4, 8)
        H_an[4:, :4] = r0.C_TP.reshape(8, 4)
        H_an[4:, 4:] = r0.C_TT.reshape(8, 8)
        record(f"tangent[{name}]", _rel_err(H_an, H_fd), 1e-5)
        record(
            f"symmetry[{name}]",
            _rel_err(H_an, H_an.T),
            1e-10,
        )

    # --- pneumatic exactness ----------------------------------------------
    n_rand = 100 if fast else 1000
    F = np.eye(2) + 0.4 * rng.standard_normal((n_rand, 2, 2))
    F = F[materials.det2(F) > 0.2]
    p0 = 7.5
    resp = materials.pneumatic_eval(p0, F)
    J = materials.det2(F)
    sigma = np.einsum("...ij,...kj->...ik", resp.P, F) / J[..., None, None]
    err = np.max(np.abs(sigma - p0 * np.eye(2))) / abs(p0)
    record("pneumatic_cauchy_identity", err, 1e-12)

    # --- element and follower-load checks ----------------------------------
    from .generators import gen_box_with_void

    mesh2 = gen_box_with_void(1.2, 0.6, 0.2, nx=6, ny=3)
    models = {"bulk": materials.BulkModel(K=2000e6, G=10e6), "third_medium": model}
    prob = assembly.FemProblem(mesh2, models, medium_rule=quadrature("gauss3x3"))
    u = 1e-2 * rng.standard_normal(prob.n_dofs)

    def global_resid(uv):
        return prob.assemble(uv.copy(), np.zeros_like(uv)).R

    K_num = fd_hessian(global_resid, u, 1e-7)
    Kd = prob.assemble(u, np.zeros_like(u)).K.toarray()
    record("global_tangent_vs_fd", _rel_err(Kd, K_num), 1e-5)
    record("global_tangent_symmetry", _rel_err(Kd, Kd.T), 1e-9)

    f_pneu = prob.pneumatic_internal_force(u)
    f_oracle = follower_oracle(mesh2, mesh2.boundary_loops["void"], -model.p, u)
    record("follower_load_equivalence", _rel_err(f_pneu, f_oracle), 1e-9)

    loop_force = f_oracle.reshape(-1, 2).sum(axis=0)
    record(
        "pneumatic_self_equilibrium",
        float(np.max(np.abs(loop_force)) / max(np.max(np.abs(f_oracle)), 1e-30)),
        1e-9,
    )

    # --- reversibility (small box cycle) -----------------------------------
    if not fast:
        from .scenarios import build_scenario

        cfg = scenarios.default_config("box_force")
        cfg["geometry"].update({"nx": 20, "ny": 5})
        cfg["load"].update({"target": -0.12, "initial_step": 0.25, "unload": True})
        built = build_scenario(cfg)
        hist = run_load_program(built.problem, built.load, SolverConfig())
        u_end = built.problem.last_u()
        err = float(np.max(np.abs(u_end)))
        results.append(
            CheckResult("reversibility", hist.completed and err < 1e-6, f"|u|_inf after cycle {err:.3e}")
        )

    return results
