import numpy as np
import pytest

from voidfem import generators as G
from voidfem import postprocess as PP
from voidfem.materials import BulkModel, ThirdMediumModel, bulk_eval
from voidfem.mesh import THIRD_MEDIUM
from voidfem.postprocess import RunHistory, StepRecord


@pytest.fixture(scope="module")
def box_mesh():
    return G.gen_box_with_void(2.0, 0.5, 0.1, nx=20, ny=5)


def _history(rows=3):
    h = RunHistory()
    for k in range(rows):
        h.rows.append(
            StepRecord(
                step=k,
                time=0.1 * k,
                load_factor=k / max(rows - 1, 1),
                pressure_pa=-1000.0 * k,
                control_disp_m=0.0,
                reaction_n=5.0 * k,
                gap_m=0.3 - 0.1 * k,
                void_volume_m2=0.54,
                newton_iters=3,
                n_modified=0,
            )
        )
    return h


class TestGap:
    def test_undeformed_box_gap(self, box_mesh):
        u = np.zeros(2 * box_mesh.n_nodes)
        assert PP.gap(box_mesh, u, box_mesh.probe_pairs["gap"]) == pytest.approx(0.3)

    def test_rigid_translation_invariance(self, box_mesh):
        u = np.zeros(2 * box_mesh.n_nodes)
        u[0::2] = 0.37
        u[1::2] = -1.2
        assert PP.gap(box_mesh, u, box_mesh.probe_pairs["gap"]) == pytest.approx(0.3)


class TestVoidVolume:
    def test_reference_volume(self, box_mesh):
        u = np.zeros(2 * box_mesh.n_nodes)
        assert PP.void_volume(box_mesh, u) == pytest.approx(0.54, rel=1e-12)

    def test_uniform_shrink_scales_by_j(self, box_mesh):
        s = 0.9
        u = np.zeros((box_mesh.n_nodes, 2))
        u[:] = (s - 1.0) * box_mesh.nodes
        vol = PP.void_volume(box_mesh, u.ravel())
        assert vol == pytest.approx(0.54 * s * s, rel=1e-12)

    def test_rigid_motion_preserves_volume(self, box_mesh):
        th = 0.3
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        u = box_mesh.nodes @ R.T - box_mesh.nodes + np.array([0.1, -0.2])
        vol = PP.void_volume(box_mesh, u.ravel())
        assert vol == pytest.approx(0.54, rel=1e-10)

    def test_plate_initial_volume(self):
        mesh = G.gen_metamaterial_plate(0.04, 0.04, 0.015, 0.00325, 1)
        vol = PP.void_volume(mesh, np.zeros(2 * mesh.n_nodes))
        assert vol * 1e6 == pytest.approx(706.86, abs=0.5)


class TestCauchySampling:
    def test_reference_state_zero_stress(self, box_mesh):
        sol = PP.SolutionState(
            box_mesh,
            np.zeros(2 * box_mesh.n_nodes),
            BulkModel(2000e6, 10e6),
            ThirdMediumModel(),
        )
        pts = [(0.05, 0.05), (1.0, 0.45)]
        for _, sigma in PP.cauchy_at_points(sol, pts):
            assert np.max(np.abs(sigma)) == 0.0

    def test_uniform_pneumatic_state_is_hydrostatic(self, box_mesh):
        model = ThirdMediumModel(p=-500.0, gamma=0.0, k_r=0.0, regularization="none")
        sol = PP.SolutionState(
            box_mesh, np.zeros(2 * box_mesh.n_nodes), BulkModel(2000e6, 10e6), model
        )
        pts = [(1.0, 0.25), (0.5, 0.2)]  # inside the void
        for _, sigma in PP.cauchy_at_points(sol, pts):
            assert np.allclose(sigma, 500.0 * np.eye(2), atol=1e-9)

    def test_homogeneous_stretch_matches_bulk_eval(self, box_mesh):
        lam = 1.05
        model = BulkModel(2000e6, 10e6)
        u = np.zeros((box_mesh.n_nodes, 2))
        u[:, 0] = (lam - 1.0) * box_mesh.nodes[:, 0]
        sol = PP.SolutionState(box_mesh, u.ravel(), model, ThirdMediumModel())
        F = np.diag([lam, 1.0])
        P = bulk_eval(model, F).P
        sigma_ref = P @ F.T / np.linalg.det(F)
        for _, sigma in PP.cauchy_at_points(sol, [(0.05, 0.05), (0.33, 0.47)]):
            assert np.allclose(sigma, sigma_ref, rtol=1e-8)

    def test_point_outside_mesh(self, box_mesh):
        sol = PP.SolutionState(
            box_mesh, np.zeros(2 * box_mesh.n_nodes), BulkModel(1e6, 1e6), ThirdMediumModel()
        )
        with pytest.raises(PP.PointOutsideMeshError):
            PP.cauchy_at_points(sol, [(5.0, 5.0)])


class TestWriters:
    def test_empty_history_header_only(self, tmp_path):
        path = tmp_path / "h.csv"
        PP.write_history_csv(RunHistory(), path)
        lines = path.read_text().splitlines()
        assert lines == [",".join(PP.HISTORY_COLUMNS)]

    def test_history_roundtrip_full_precision(self, tmp_path):
        h = _history(4)
        h.rows[2].pressure_pa = -1234.5678901234567
        h.rows[2].gap_m = 0.1 + 1e-16
        path = tmp_path / "h.csv"
        PP.write_history_csv(h, path)
        data = np.genfromtxt(path, delimiter=",", names=True)
        assert data["pressure_pa"][2] == h.rows[2].pressure_pa
        assert data["gap_m"][2] == h.rows[2].gap_m
        assert data["step"].size == 4

    def test_vtk_single_element(self, tmp_path):
        nodes = np.array(
            [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0], [1, 0.5], [0.5, 1], [0, 0.5]],
            dtype=float,
        )
        from voidfem.mesh import Mesh

        mesh = Mesh(nodes, np.arange(8).reshape(1, 8), np.array([0]))
        path = tmp_path / "one.vtk"
        PP.write_vtk(mesh, np.zeros(16), {"q": np.array([3.5])}, path)
        text = path.read_text().splitlines()
        assert text[0] == "# vtk DataFile Version 3.0"
        assert "DATASET UNSTRUCTURED_GRID" in text
        assert "POINTS 8 double" in text
        assert "CELLS 1 9" in text
        idx = text.index("CELL_TYPES 1")
        assert text[idx + 1] == "23"
        assert "VECTORS displacement double" in text
        assert "SCALARS region_id int 1" in text
        assert "SCALARS q double 1" in text

    def test_probes_csv(self, tmp_path):
        h = _history(2)
        h.add_extra("signed_gap", 0.1)
        h.add_extra("signed_gap", 0.05)
        path = tmp_path / "p.csv"
        PP.write_probes_csv(h, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,signed_gap"
        assert len(lines) == 3


class TestCurveAnalysis:
    def test_transition_width_sharp_knee(self):
        # piecewise linear: steep slope then flat after x = 1
        x = np.linspace(0, 2, 400)
        y = np.where(x < 1, 1 - x, 0.0) + np.where(x < 1, 0, 0.001 * (1 - x))
        w, onset = PP.transition_width(x, y)
        assert onset == pytest.approx(1.0, abs=0.02)
        assert w < 0.02

    def test_transition_width_smooth_knee(self):
        x = np.linspace(0, 2, 400)
        y = np.log1p(np.exp(-8 * (x - 1))) / 8  # softplus knee, width ~ 1/8
        w_smooth, _ = PP.transition_width(x, y)
        y_sharp = np.maximum(1 - x, 0)
        w_sharp, _ = PP.transition_width(x, y_sharp)
        assert w_sharp < w_smooth

    def test_rise_onset(self):
        x = np.linspace(0, 1, 200)
        y = 0.1 * x + np.where(x > 0.6, 5 * (x - 0.6) ** 1.5, 0.0)
        onset = PP.rise_onset(x, y)
        assert 0.58 < onset < 0.75
