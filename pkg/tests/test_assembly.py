import numpy as np
import pytest

from voidfem import assembly as A
from voidfem import generators as G
from voidfem import materials as M
from voidfem.mesh import BULK, THIRD_MEDIUM, quadrature
from voidfem.verify import fd_gradient, fd_hessian, follower_oracle


@pytest.fixture(scope="module")
def small_problem():
    mesh = G.gen_box_with_void(1.2, 0.6, 0.2, nx=6, ny=3)
    models = {
        "bulk": M.BulkModel(K=2000e6, G=10e6),
        "third_medium": M.ThirdMediumModel(p=-3.0, gamma=1.0, k_r=2e3),
    }
    return A.FemProblem(mesh, models, medium_rule=quadrature("gauss3x3"))


def test_reference_state_zero_residual():
    mesh = G.gen_box_with_void(1.0, 0.5, 0.125, nx=8, ny=4)
    models = {
        "bulk": M.BulkModel(K=2000e6, G=10e6),
        "third_medium": M.ThirdMediumModel(p=0.0, gamma=1.0, k_r=2e3),
    }
    prob = A.FemProblem(mesh, models)
    u = np.zeros(prob.n_dofs)
    sys = prob.assemble(u, u)
    assert np.max(np.abs(sys.R)) == 0.0
    assert sys.energy == 0.0


def test_single_bulk_element_uniaxial_reaction():
    # one element under prescribed uniform stretch: reaction equals P11 * area
    nodes = np.array(
        [
            [0, 0], [2, 0], [2, 1], [0, 1],
            [1, 0], [2, 0.5], [1, 1], [0, 0.5],
        ],
        dtype=float,
    )
    from voidfem.mesh import Mesh

    mesh = Mesh(nodes, np.arange(8).reshape(1, 8), np.array([BULK]))
    model = M.BulkModel(K=2000e6, G=10e6)
    prob = A.FemProblem(mesh, {"bulk": model})
    lam = 1.04
    u = np.zeros(prob.n_dofs)
    u[0::2] = (lam - 1.0) * nodes[:, 0]  # uniform x-stretch
    sys = prob.assemble(u, np.zeros_like(u))
    right = [1, 2, 5]
    reaction = sum(sys.R[2 * n] for n in right)
    P11 = M.bulk_eval(model, np.diag([lam, 1.0])).P[0, 0]
    assert abs(reaction - P11 * 1.0) < 1e-9 * abs(reaction)


def test_element_residual_matches_energy_gradient(small_problem):
    prob = small_problem
    mesh = prob.mesh
    rng = np.random.default_rng(0)
    models = {"bulk": prob.bulk_model, "third_medium": prob.medium_model}
    # distorted single third-medium element
    eid = int(mesh.element_ids(THIRD_MEDIUM)[0])
    u = 2e-2 * rng.standard_normal(prob.n_dofs)
    u0 = np.zeros_like(u)
    edofs = np.empty(16, dtype=int)
    edofs[0::2] = 2 * mesh.elements[eid]
    edofs[1::2] = 2 * mesh.elements[eid] + 1
    f, Ke, _ = A.element_residual_tangent(mesh, eid, models, u, u0, rule=quadrature("gauss3x3"))

    kern = A._build_region_kernel(
        A.Mesh(mesh.nodes, mesh.elements[[eid]], mesh.regions[[eid]]),
        THIRD_MEDIUM,
        quadrature("gauss3x3"),
    )

    def elem_energy(ue):
        uu = u.copy()
        uu[edofs] = ue
        gu = np.einsum("qsd,d->qs", kern.B[0], ue)
        F = gu.reshape(-1, 2, 2) + np.eye(2)
        gF = np.einsum("qsd,d->qs", kern.H[0], ue).reshape(-1, 2, 2, 2)
        resp, _ = M.third_medium_eval(prob.medium_model, None, F, gF, gF)
        return float(np.sum(kern.w[0] * resp.W))

    g = fd_gradient(elem_energy, u[edofs], 1e-7)
    assert np.max(np.abs(f - g)) < 1e-6 * np.max(np.abs(g))

    def elem_resid(ue):
        uu = u.copy()
        uu[edofs] = ue
        ff, _, _ = A.element_residual_tangent(mesh, eid, models, uu, u0, rule=quadrature("gauss3x3"))
        return ff

    K_fd = fd_hessian(elem_resid, u[edofs], 1e-7)
    assert np.max(np.abs(Ke - K_fd)) < 1e-5 * np.max(np.abs(K_fd))
    assert np.max(np.abs(Ke - Ke.T)) < 1e-9 * np.max(np.abs(Ke))


def test_global_tangent_vs_fd(small_problem):
    prob = small_problem
    rng = np.random.default_rng(1)
    u = 1e-2 * rng.standard_normal(prob.n_dofs)
    u0 = np.zeros_like(u)
    sys = prob.assemble(u, u0)

    def resid(v):
        return prob.assemble(v.copy(), u0).R

    K_fd = fd_hessian(resid, u, 1e-7)
    Kd = sys.K.toarray()
    assert np.max(np.abs(Kd - K_fd)) < 1e-5 * np.max(np.abs(K_fd))
    assert np.max(np.abs(Kd - Kd.T)) < 1e-9 * np.max(np.abs(Kd))


def test_follower_load_equivalence(small_problem):
    # pneumatic internal forces equal the boundary follower loads exactly
    # (discrete Piola identity on affinely mapped elements)
    prob = small_problem
    mesh = prob.mesh
    rng = np.random.default_rng(2)
    u = 1e-2 * rng.standard_normal(prob.n_dofs)
    p_coef = -prob.medium_model.p
    f_int = prob.pneumatic_internal_force(u)
    f_onshore = A.follower_load_vector(mesh, mesh.boundary_loops["void"], p_coef, u)
    f_oracle = follower_oracle(mesh, mesh.boundary_loops["void"], p_coef, u)
    scale = np.max(np.abs(f_oracle))
    assert np.max(np.abs(f_int - f_oracle)) < 1e-9 * scale
    assert np.max(np.abs(f_onshore - f_oracle)) < 1e-12 * scale


def test_follower_load_zero_pressure(small_problem):
    mesh = small_problem.mesh
    f = A.follower_load_vector(mesh, mesh.boundary_loops["void"], 0.0, np.zeros(2 * mesh.n_nodes))
    assert np.all(f == 0.0)


def test_follower_load_closed_loop_self_equilibrated(small_problem):
    mesh = small_problem.mesh
    rng = np.random.default_rng(3)
    u = 5e-2 * rng.standard_normal(2 * mesh.n_nodes)
    f = A.follower_load_vector(mesh, mesh.boundary_loops["void"], 2.5, u)
    net = f.reshape(-1, 2).sum(axis=0)
    assert np.max(np.abs(net)) < 1e-9 * np.max(np.abs(f))


def test_follower_load_undeformed_square_edge_resultants():
    mesh = G.gen_box_with_void(1.0, 1.0, 0.25, nx=4, ny=4)
    p0 = 3.0
    f = A.follower_load_vector(mesh, mesh.boundary_loops["void"], p0, np.zeros(2 * mesh.n_nodes))
    fx = f[0::2]
    fy = f[1::2]
    # bottom void edge (y = 0.25): outward normal of the medium is -e_y
    bottom = np.flatnonzero(
        (np.abs(mesh.nodes[:, 1] - 0.25) < 1e-9)
        & (mesh.nodes[:, 0] > 0.25 - 1e-9)
        & (mesh.nodes[:, 0] < 0.75 + 1e-9)
    )
    assert abs(fy[bottom].sum() + p0 * 0.5) < 1e-12
    assert np.max(np.abs(f.reshape(-1, 2).sum(axis=0))) < 1e-12


def test_open_polyline_rejected(small_problem):
    mesh = small_problem.mesh
    loop = mesh.boundary_loops["void"][:-1]
    with pytest.raises(ValueError):
        A.follower_load_vector(mesh, loop, 1.0, np.zeros(2 * mesh.n_nodes))


def test_constraints_validation():
    with pytest.raises(ValueError):
        A.ConstraintSet(10, np.array([2]), np.array([2]), np.array([1.0]))


def test_invalid_state_propagates(small_problem):
    prob = small_problem
    u = np.zeros(prob.n_dofs)
    # crush the whole mesh far beyond J = 0
    u[0::2] = -1.5 * prob.mesh.nodes[:, 0]
    with pytest.raises(M.InvalidStateError):
        prob.assemble(u, np.zeros_like(u))
