"""Element kernels and global assembly for the second-gradient formulation.

Nodal displacements map to point quantities through two engineering-layout
operators per quadrature point:

* ``B`` (4 x 16): grad u packed as (u1,1, u1,2, u2,1, u2,2),
* ``H`` (8 x 16): grad grad u packed lexicographically as (i, j, m).

The element residual and tangent are

    f_e = sum_q w_q (B^T P + H^T T)
    K_e = sum_q w_q [B; H]^T [[D, C_PT], [C_TP, C_TT]] [B; H]

where the rotation-gradient part of the regularization enters through T and
C_TT restricted to the per-slot skew subspace (equivalent to contracting with
the skew-combined operator H_w, since T is skew there).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import materials
from .materials import BulkModel, MaterialPointState, ThirdMediumModel
from .mesh import BULK, THIRD_MEDIUM, Mesh, QuadratureRule, quadrature

__all__ = [
    "ConstraintSet",
    "RegionKernel",
    "AssembledSystem",
    "FemProblem",
    "element_residual_tangent",
    "follower_load_vector",
]


@dataclass
class ConstraintSet:
    """Dirichlet data: dof ids with target values at full load factor.

    A dof is either free or prescribed; prescribed values scale linearly with
    the load factor except for ``fixed`` dofs, which stay at zero.
    """

    n_dofs: int
    fixed_dofs: np.ndarray
    driven_dofs: np.ndarray
    driven_targets: np.ndarray

    def __post_init__(self):
        self.fixed_dofs = np.asarray(self.fixed_dofs, dtype=np.int64)
        self.driven_dofs = np.asarray(self.driven_dofs, dtype=np.int64)
        self.driven_targets = np.asarray(self.driven_targets, dtype=float)
        both = np.intersect1d(self.fixed_dofs, self.driven_dofs)
        if both.size:
            raise ValueError(f"dofs {both.tolist()} are both fixed and driven")

    @property
    def prescribed_dofs(self) -> np.ndarray:
        return np.concatenate([self.fixed_dofs, self.driven_dofs])

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.prescribed_dofs] = False
        return np.flatnonzero(mask)

    def apply(self, u: np.ndarray, load_factor: float) -> None:
        u[self.fixed_dofs] = 0.0
        u[self.driven_dofs] = load_factor * self.driven_targets


@dataclass
class RegionKernel:
    """Precomputed per-region element operators at the region's rule."""

    region: int
    elem_ids: np.ndarray  # (nel,)
    edofs: np.ndarray  # (nel, 16)
    B: np.ndarray  # (nel, nq, 4, 16)
    H: np.ndarray  # (nel, nq, 8, 16)
    M: np.ndarray  # (nel, nq, 12, 16)
    w: np.ndarray  # (nel, nq)


def _build_region_kernel(mesh: Mesh, region: int, rule: QuadratureRule) -> RegionKernel | None:
    ids = mesh.element_ids(region)
    if ids.size == 0:
        return None
    tab = mesh.tables(rule, ids)
    nel, nq = tab.weights.shape
    B = np.zeros((nel, nq, 4, 16))
    H = np.zeros((nel, nq, 8, 16))
    for i in range(2):
        for j in range(2):
            B[..., 2 * i + j, i::2] = tab.dN_dX[..., j]
            for m in range(2):
                H[..., 4 * i + 2 * j + m, i::2] = tab.d2N_dX2[..., j, m]
    M = np.concatenate([B, H], axis=2)
    conn = mesh.elements[ids]
    edofs = np.empty((nel, 16), dtype=np.int64)
    edofs[:, 0::2] = 2 * conn
    edofs[:, 1::2] = 2 * conn + 1
    return RegionKernel(region, ids, edofs, B, H, M, tab.w if hasattr(tab, "w") else tab.weights)


@dataclass
class AssembledSystem:
    R: np.ndarray
    K: sp.csc_matrix
    energy: float
    trial_grad_ln_q: np.ndarray | None


class FemProblem:
    """Mesh + materials + constraints, ready for residual/tangent assembly.

    Bulk elements integrate with a 3x3 Gauss rule; third-medium elements
    default to 3x3 Lobatto, which places integration points on element nodes
    and sharpens contact enforcement.
    """

    def __init__(
        self,
        mesh: Mesh,
        models: dict,
        constraints: ConstraintSet | None = None,
        external_force: np.ndarray | None = None,
        bulk_rule: QuadratureRule | None = None,
        medium_rule: QuadratureRule | None = None,
    ):
        self.mesh = mesh
        self.bulk_model: BulkModel = models["bulk"]
        self.medium_model: ThirdMediumModel = models.get("third_medium", ThirdMediumModel())
        self.n_dofs = 2 * mesh.n_nodes
        self.constraints = constraints or ConstraintSet(self.n_dofs, np.array([], int), np.array([], int), np.array([]))
        self.external_force = external_force if external_force is not None else np.zeros(self.n_dofs)
        self.bulk_kernel = _build_region_kernel(mesh, BULK, bulk_rule or quadrature("gauss3x3"))
        self.medium_kernel = _build_region_kernel(mesh, THIRD_MEDIUM, medium_rule or quadrature("lobatto3x3"))
        if self.medium_kernel is not None:
            nel, nq = self.medium_kernel.w.shape
            self.states = MaterialPointState.zero(nel, nq)
        else:
            self.states = None
        self._last_u = np.zeros(self.n_dofs)
        # solver-facing knobs, set by scenarios / run_load_program
        self.reaction_dofs: np.ndarray | None = None
        self.extra_probes: dict = {}
        self.config_track_inertia: bool = True
        self.mc_pivot_floor: float = 1e-8

    # -- helpers -------------------------------------------------------------

    def last_u(self) -> np.ndarray:
        return self._last_u.copy()

    def set_last_u(self, u: np.ndarray) -> None:
        self._last_u = np.asarray(u, dtype=float).copy()

    def _gather(self, kern: RegionKernel, u: np.ndarray) -> np.ndarray:
        return u[kern.edofs]

    def _point_fields(self, kern: RegionKernel, u: np.ndarray):
        ue = self._gather(kern, u)
        gu = np.einsum("eqsd,ed->eqs", kern.B, ue)
        F = gu.reshape(gu.shape[:-1] + (2, 2)) + np.eye(2)
        gF = np.einsum("eqsd,ed->eqs", kern.H, ue).reshape(gu.shape[:-1] + (2, 2, 2))
        return F, gF

    # -- assembly ------------------------------------------------------------

    def assemble(
        self,
        u: np.ndarray,
        u_committed: np.ndarray,
        pressure: float | None = None,
        need_tangent: bool = True,
    ) -> AssembledSystem:
        """Residual, tangent, and total strain energy at displacement u.

        ``u_committed`` is the last converged displacement; the rotation
        gradient accumulates from it.  Raises
        :class:`materials.InvalidStateError` when any integration point has
        J <= 0 (a recoverable step failure).
        """
        R = np.zeros(self.n_dofs)
        energy = 0.0
        triplets = []
        trial = None

        for kern in (self.bulk_kernel, self.medium_kernel):
            if kern is None:
                continue
            F, gF = self._point_fields(kern, u)
            if kern.region == BULK:
                resp = materials.bulk_eval(self.bulk_model, F)
            else:
                model = self.medium_model
                if pressure is not None:
                    model = replace(model, p=pressure)
                due = self._gather(kern, u - u_committed)
                grad_f = np.einsum("eqsd,ed->eqs", kern.H, due).reshape(gF.shape)
                resp, trial = materials.third_medium_eval(
                    model, self.states.grad_ln_q if self.states else None, F, gF, grad_f
                )
            nel, nq = kern.w.shape
            energy += float(np.sum(kern.w * resp.W))
            sv = np.concatenate(
                [resp.P.reshape(nel, nq, 4), resp.T.reshape(nel, nq, 8)], axis=-1
            )
            fe = np.einsum("eqsd,eqs->ed", kern.M, sv * kern.w[..., None])
            np.add.at(R, kern.edofs, fe)
            if need_tangent:
                C = np.empty((nel, nq, 12, 12))
                C[..., :4, :4] = resp.D.reshape(nel, nq, 4, 4)
                C[..., :4, 4:] = resp.C_PT.reshape(nel, nq, 4, 8)
                C[..., 4:, :4] = resp.C_TP.reshape(nel, nq, 8, 4)
                C[..., 4:, 4:] = resp.C_TT.reshape(nel, nq, 8, 8)
                CM = np.matmul(C, kern.M)
                Ke = np.matmul(
                    np.swapaxes(kern.M, -2, -1), CM * kern.w[..., None, None]
                ).sum(axis=1)
                rows = np.broadcast_to(kern.edofs[:, :, None], (nel, 16, 16))
                cols = np.broadcast_to(kern.edofs[:, None, :], (nel, 16, 16))
                triplets.append((rows.ravel(), cols.ravel(), Ke.ravel()))

        if need_tangent:
            rows = np.concatenate([t[0] for t in triplets])
            cols = np.concatenate([t[1] for t in triplets])
            vals = np.concatenate([t[2] for t in triplets])
            K = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsc()
        else:
            K = sp.csc_matrix((self.n_dofs, self.n_dofs))
        return AssembledSystem(R, K, energy, trial)

    def pneumatic_internal_force(self, u: np.ndarray, pressure: float | None = None) -> np.ndarray:
        """Internal-force vector of the pneumatic term alone."""
        f = np.zeros(self.n_dofs)
        kern = self.medium_kernel
        if kern is None:
            return f
        p = self.medium_model.p if pressure is None else pressure
        if p == 0.0:
            return f
        F, _ = self._point_fields(kern, u)
        resp = materials.pneumatic_eval(-self.medium_model.psi_p * p, F)
        nel, nq = kern.w.shape
        fe = np.einsum(
            "eqsd,eqs->ed", kern.B, resp.P.reshape(nel, nq, 4) * kern.w[..., None]
        )
        np.add.at(f, kern.edofs, fe)
        return f

    def commit(self, u: np.ndarray, trial_grad_ln_q: np.ndarray | None) -> None:
        """Accept a converged step: store history trials and the new reference u."""
        if self.states is not None and trial_grad_ln_q is not None:
            self.states.grad_ln_q = trial_grad_ln_q.copy()
        self.set_last_u(u)


def element_residual_tangent(
    mesh: Mesh,
    elem_id: int,
    models: dict,
    u: np.ndarray,
    u_committed: np.ndarray,
    committed_grad_ln_q: np.ndarray | None = None,
    rule: QuadratureRule | None = None,
):
    """Residual, tangent, and history trial for a single element.

    Returns (f_int (16,), K_e (16, 16), trial or None).  Intended for
    element-level verification; production assembly runs vectorized over
    regions.
    """
    region = int(mesh.regions[elem_id])
    rule = rule or quadrature("gauss3x3" if region == BULK else "lobatto3x3")
    sub = Mesh(
        mesh.nodes,
        mesh.elements[[elem_id]],
        mesh.regions[[elem_id]],
    )
    kern = _build_region_kernel(sub, region, rule)
    ue = u[kern.edofs][0]
    gu = np.einsum("qsd,d->qs", kern.B[0], ue)
    F = gu.reshape(-1, 2, 2) + np.eye(2)
    gF = np.einsum("qsd,d->qs", kern.H[0], ue).reshape(-1, 2, 2, 2)
    trial = None
    if region == BULK:
        resp = materials.bulk_eval(models["bulk"], F)
    else:
        due = (u - u_committed)[kern.edofs][0]
        grad_f = np.einsum("qsd,d->qs", kern.H[0], due).reshape(-1, 2, 2, 2)
        resp, trial = materials.third_medium_eval(
            models["third_medium"], committed_grad_ln_q, F, gF, grad_f
        )
    nq = kern.w.shape[1]
    w = kern.w[0]
    sv = np.concatenate([resp.P.reshape(nq, 4), resp.T.reshape(nq, 8)], axis=-1)
    f = np.einsum("qsd,qs->d", kern.M[0], sv * w[:, None])
    C = np.empty((nq, 12, 12))
    C[:, :4, :4] = resp.D.reshape(nq, 4, 4)
    C[:, :4, 4:] = resp.C_PT.reshape(nq, 4, 8)
    C[:, 4:, :4] = resp.C_TP.reshape(nq, 8, 4)
    C[:, 4:, 4:] = resp.C_TT.reshape(nq, 8, 8)
    Ke = np.einsum("qsd,qst,qtf->df", kern.M[0], C * w[:, None, None], kern.M[0])
    return f, Ke, trial


def follower_load_vector(mesh: Mesh, boundary, p: float, u: np.ndarray) -> np.ndarray:
    """Consistent nodal forces of a uniform pressure on a deformed boundary.

    ``boundary`` is an ordered closed polyline of quadratic edges
    (n0, nmid, n1), counterclockwise around the pressurized region; ``p`` is
    the pneumatic energy coefficient.  Edge integrals use 3-point Gauss,
    exact for the cubic integrand of quadratic edges.
    """
    edges = list(boundary)
    if not edges:
        return np.zeros(mesh.n_nodes * 2)
    for (a, _, b), (c, _, _) in zip(edges, edges[1:] + edges[:1]):
        if b != c:
            raise ValueError("boundary polyline is not a closed chain of edges")

    ids = np.asarray(edges, dtype=np.int64)  # (ne, 3)
    x = (mesh.nodes + np.asarray(u, float).reshape(-1, 2))[ids]  # (ne, 3, 2)
    s = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
    wq = np.array([5.0, 8.0, 5.0]) / 9.0
    N = np.stack([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)], axis=1)  # (q, a)
    dN = np.stack([s - 0.5, -2.0 * s, s + 0.5], axis=1)

    t = np.einsum("qa,eak->eqk", dN, x)  # (ne, q, 2)
    nda = np.stack([t[..., 1], -t[..., 0]], axis=-1)  # outward normal * |dx/ds|
    contrib = p * np.einsum("q,qa,eqk->eak", wq, N, nda)  # (ne, a, 2)
    f = np.zeros(mesh.n_nodes * 2)
    np.add.at(f, 2 * ids, contrib[..., 0])
    np.add.at(f, 2 * ids + 1, contrib[..., 1])
    return f
