import numpy as np
import pytest
import scipy.sparse as sp

from voidfem import generators as G
from voidfem import materials as M
from voidfem.assembly import ConstraintSet, FemProblem
from voidfem.solver import (
    LoadProgram,
    ModifiedCholesky,
    SolverConfig,
    detect_bifurcation,
    equilibrium_inertia,
    modified_cholesky,
    run_load_program,
)


class TestModifiedCholesky:
    def test_identity_unmodified(self):
        fact, n_mod = modified_cholesky(sp.identity(5, format="csc"))
        assert n_mod == 0
        assert fact.shift == 0.0

    def test_indefinite_2x2_descent(self):
        K = sp.csc_matrix(np.diag([1.0, -1.0]))
        fact, n_mod = modified_cholesky(K)
        assert n_mod == 1
        g = np.array([0.3, -0.7])
        d = fact.solve(-g)
        assert g @ d < 0.0

    def test_random_spd_unmodified_and_accurate(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((50, 50))
        K = sp.csc_matrix(a @ a.T + 50 * np.eye(50))
        fact, n_mod = modified_cholesky(K)
        assert n_mod == 0
        b = rng.standard_normal(50)
        x = fact.solve(b)
        assert np.linalg.norm(K @ x - b) < 1e-10 * np.linalg.norm(b)

    def test_inertia_matches_eigenvalues(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a = rng.standard_normal((40, 40))
            K = 0.5 * (a + a.T)
            n_neg = int(np.sum(np.linalg.eigvalsh(K) < 0))
            fact, n_mod = modified_cholesky(sp.csc_matrix(K))
            assert n_mod == n_neg
            assert equilibrium_inertia(sp.csc_matrix(K)) == n_neg

    def test_descent_for_random_indefinite(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((30, 30))
        K = sp.csc_matrix(0.5 * (a + a.T))
        fact, _ = modified_cholesky(K)
        for _ in range(5):
            g = rng.standard_normal(30)
            d = fact.solve(-g)
            assert g @ d < 0.0

    def test_modified_solve_still_positive_pivots(self):
        K = sp.csc_matrix(np.diag([1e6, -3.0, 2.0, -1e-20]))
        fact = ModifiedCholesky(K)
        assert fact.n_modified == 2
        fact.solve(np.ones(4))
        assert fact.shift > 0


def _box_force_problem(gamma=1.0, k_r=2e3, reg="lnq_plus_gradj", nx=16, ny=4, target=-0.1):
    mesh = G.gen_box_with_void(2.0, 0.5, 0.125, nx=nx, ny=ny)
    models = {
        "bulk": M.BulkModel(K=2000e6, G=10e6),
        "third_medium": M.ThirdMediumModel(p=0.0, gamma=gamma, k_r=k_r, regularization=reg),
    }
    bottom = mesh.node_sets["bottom"]
    xy = mesh.nodes
    tc = int(np.flatnonzero((np.abs(xy[:, 0] - 1.0) < 1e-9) & (np.abs(xy[:, 1] - 0.5) < 1e-9))[0])
    fixed = np.concatenate([2 * bottom, 2 * bottom + 1])
    driven = np.array([2 * tc + 1])
    cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.array([target]))
    prob = FemProblem(mesh, models, constraints=cons)
    prob.reaction_dofs = driven
    return prob, mesh


class TestLoadStepping:
    def test_zero_load_step_converges_immediately(self):
        prob, _ = _box_force_problem()
        hist = run_load_program(
            prob, LoadProgram("displacement", 0.0, initial_step=1.0), SolverConfig()
        )
        assert hist.completed
        assert hist.rows[0].newton_iters <= 1

    def test_small_step_quadratic_endgame(self):
        prob, _ = _box_force_problem(target=-0.02)
        hist = run_load_program(
            prob, LoadProgram("displacement", -0.02, initial_step=0.5), SolverConfig()
        )
        assert hist.completed
        # modest prescribed motion solves in a handful of iterations
        assert all(r.newton_iters <= 8 for r in hist.rows)

    def test_growth_and_caps(self):
        prob, _ = _box_force_problem(target=-0.03)
        hist = run_load_program(
            prob,
            LoadProgram("displacement", -0.03, initial_step=0.11, max_step=0.35),
            SolverConfig(),
        )
        assert hist.completed
        lams = hist.column("load_factor")
        dl = np.diff(lams)
        assert np.all(dl <= 0.35 + 1e-12)
        # growth factor respected between successful steps (until capped)
        assert dl[1] <= 1.5 * dl[0] + 1e-12

    def test_pressure_control_records_pressure(self):
        mesh = G.gen_box_with_void(2.0, 0.5, 0.125, nx=16, ny=4)
        models = {
            "bulk": M.BulkModel(K=2000e6, G=10e6),
            "third_medium": M.ThirdMediumModel(p=0.0, gamma=1.0, k_r=2e3),
        }
        bottom = mesh.node_sets["bottom"]
        fixed = np.concatenate([2 * bottom, 2 * bottom + 1])
        cons = ConstraintSet(2 * mesh.n_nodes, fixed, np.array([], int), np.array([]))
        prob = FemProblem(mesh, models, constraints=cons)
        prob.reaction_dofs = fixed
        hist = run_load_program(
            prob, LoadProgram("pressure", -2000.0, initial_step=0.25), SolverConfig()
        )
        assert hist.completed
        assert abs(hist.rows[-1].pressure_pa + 2000.0) < 1e-9
        gaps = hist.column("gap_m")
        assert gaps[-1] < gaps[0]  # suction closes the void

    def test_unload_leg_reversibility(self):
        prob, _ = _box_force_problem(target=-0.05)
        hist = run_load_program(
            prob,
            LoadProgram("displacement", -0.05, initial_step=0.25, unload=True),
            SolverConfig(),
        )
        assert hist.completed
        assert hist.rows[-1].load_factor == pytest.approx(0.0, abs=1e-12)
        assert np.max(np.abs(prob.last_u())) < 1e-6

    def test_abort_with_partial_history(self):
        # driving the box far beyond full closure cannot converge forever
        prob, _ = _box_force_problem(gamma=1.0, k_r=0.0, reg="none", target=-0.45)
        hist = run_load_program(
            prob,
            LoadProgram("displacement", -0.45, initial_step=0.1),
            SolverConfig(max_iterations=12, max_halvings=6),
        )
        assert not hist.completed
        assert hist.abort_reason
        assert hist.n_steps >= 1

    def test_energy_decreases_within_displacement_steps(self):
        prob, _ = _box_force_problem(target=-0.06)
        hist = run_load_program(
            prob, LoadProgram("displacement", -0.06, initial_step=0.2), SolverConfig()
        )
        assert hist.completed
        e0 = hist.column("energy_start")
        e1 = hist.column("energy_end")
        assert np.all(e1 <= e0 + 1e-9 * np.maximum(np.abs(e0), 1.0))


class TestBifurcation:
    def test_no_bifurcation_in_small_load(self):
        prob, _ = _box_force_problem(target=-0.01)
        hist = run_load_program(
            prob, LoadProgram("displacement", -0.01, initial_step=0.5), SolverConfig()
        )
        assert hist.completed
        assert detect_bifurcation(hist) is None

    def test_detects_euler_column_buckling(self):
        # slender bulk column under axial compression: detected critical load
        # within a reasonable band around the Euler estimate
        w, L = 0.05, 1.0
        mesh = G.gen_block(w, L, 2, 24)
        Kb, Gb = 2000e6, 10e6
        models = {"bulk": M.BulkModel(K=Kb, G=Gb)}
        bottom = mesh.node_sets["bottom"]
        top = mesh.node_sets["top"]
        fixed = np.concatenate([2 * bottom, 2 * bottom + 1])
        driven = 2 * top + 1
        target = -0.01
        cons = ConstraintSet(2 * mesh.n_nodes, fixed, driven, np.full(driven.size, target))
        prob = FemProblem(mesh, models, constraints=cons)
        prob.reaction_dofs = driven
        cfg = SolverConfig(track_inertia=True, bisect_critical=True, bisect_resolution=0.02)
        hist = run_load_program(prob, LoadProgram("displacement", target, initial_step=0.04), cfg)
        crit = detect_bifurcation(hist)
        assert crit is not None
        # Euler clamped-clamped strain estimate: (pi^2/3) (w/2L)^2
        eps_euler = np.pi**2 / 3.0 * (w / (2 * L)) ** 2
        eps_crit = abs(crit) / L
        assert 0.5 * eps_euler < eps_crit < 2.0 * eps_euler
