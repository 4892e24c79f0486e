import numpy as np
import pytest

from voidfem import generators as G
from voidfem.mesh import BULK, THIRD_MEDIUM, quadrature


class TestBoxWithVoid:
    def test_paper_geometry(self):
        mesh = G.gen_box_with_void(2.0, 0.5, 0.1, nx=20, ny=5)
        mesh.audit_positive_jacobians()
        # void 1.8 x 0.3
        assert abs(mesh.region_area(THIRD_MEDIUM) - 0.54) < 1e-10
        assert abs(mesh.region_area(BULK) - (1.0 - 0.54)) < 1e-10
        assert mesh.n_elements == (mesh.regions == BULK).sum() + (mesh.regions == THIRD_MEDIUM).sum()

    def test_gap_probe_is_void_height(self):
        mesh = G.gen_box_with_void(2.0, 0.5, 0.1, nx=20, ny=5)
        a, b = mesh.probe_pairs["gap"]
        assert abs(np.linalg.norm(mesh.nodes[a] - mesh.nodes[b]) - 0.3) < 1e-12

    def test_void_loop_closed_and_ccw(self):
        mesh = G.gen_box_with_void(1.2, 0.6, 0.2, nx=6, ny=3)
        loop = mesh.boundary_loops["void"]
        for (a, _, b), (c, _, _) in zip(loop, loop[1:] + loop[:1]):
            assert b == c
        # shoelace over corner nodes: positive area = counterclockwise
        xy = mesh.nodes[[e[0] for e in loop]]
        area2 = np.sum(xy[:, 0] * np.roll(xy[:, 1], -1) - np.roll(xy[:, 0], -1) * xy[:, 1])
        assert area2 > 0

    def test_incompatible_subdivision(self):
        with pytest.raises(ValueError):
            G.gen_box_with_void(2.0, 0.5, 0.1, nx=21, ny=5)
        with pytest.raises(ValueError):
            G.gen_box_with_void(2.0, 0.5, 0.3, nx=20, ny=5)


class TestPatchTest:
    def test_aligned_conforming_interfaces(self):
        mesh = G.gen_patch_test(0.1, True, 4, 4, 4)
        mesh.audit_positive_jacobians()
        xs_bot = np.sort(mesh.nodes[np.abs(mesh.nodes[:, 1] - 1.0) < 1e-12, 0])
        xs_top = np.sort(mesh.nodes[np.abs(mesh.nodes[:, 1] - 1.1) < 1e-12, 0])
        assert np.allclose(xs_bot, xs_top)

    def test_band_height(self):
        mesh = G.gen_patch_test(0.1, True, 4, 4, 4)
        med_nodes = np.unique(mesh.elements[mesh.regions == THIRD_MEDIUM])
        ys = mesh.nodes[med_nodes, 1]
        assert abs(ys.max() - ys.min() - 0.1) < 1e-12
        assert abs(mesh.region_area(THIRD_MEDIUM) - 0.1) < 1e-10

    def test_misaligned_no_shared_interface_coords(self):
        mesh = G.gen_patch_test(0.1, False, 4, 5, 4)
        mesh.audit_positive_jacobians()
        xs_bot = mesh.nodes[np.abs(mesh.nodes[:, 1] - 1.0) < 1e-12, 0]
        xs_top = mesh.nodes[np.abs(mesh.nodes[:, 1] - 1.1) < 1e-12, 0]
        xs_bot = xs_bot[(xs_bot > 1e-9) & (xs_bot < 1 - 1e-9) & (np.abs(xs_bot - 0.5) > 1e-9)]
        xs_top = xs_top[(xs_top > 1e-9) & (xs_top < 1 - 1e-9) & (np.abs(xs_top - 0.5) > 1e-9)]
        shared = set(np.round(xs_bot, 9)) & set(np.round(xs_top, 9))
        assert not shared

    def test_misaligned_even_delta_and_area(self):
        mesh = G.gen_patch_test(0.1, False, 4, 6, 4)
        mesh.audit_positive_jacobians()
        # band area includes the one-column extensions past each block face
        w = 1.0 / 6.0
        assert abs(mesh.region_area(THIRD_MEDIUM) - 0.1 * (1.0 + 2 * w)) < 1e-10

    def test_aligned_validation(self):
        with pytest.raises(ValueError):
            G.gen_patch_test(0.1, True, 4, 5, 4)
        with pytest.raises(ValueError):
            G.gen_patch_test(-0.1, True, 4, 4, 4)


class TestCShape:
    def test_paper_dimensions(self):
        mesh = G.gen_c_shape(1.0, 0.5, 0.2, 3, True)
        mesh.audit_positive_jacobians()
        # slot height H - 2t = 0.1
        a, b = mesh.probe_pairs["gap"]
        assert abs(np.linalg.norm(mesh.nodes[a] - mesh.nodes[b]) - 0.1) < 1e-12

    def test_tip_load_node(self):
        mesh = G.gen_c_shape(1.0, 0.5, 0.2, 3, True)
        tips = mesh.node_sets["tip_load"]
        assert len(tips) == 1
        assert np.allclose(mesh.nodes[tips[0]], [1.0, 0.5])

    def test_extra_column_changes_medium_area(self):
        with_col = G.gen_c_shape(1.0, 0.5, 0.2, 3, True)
        without = G.gen_c_shape(1.0, 0.5, 0.2, 3, False)
        h = 0.1 / 3.0
        a_with = with_col.region_area(THIRD_MEDIUM)
        a_without = without.region_area(THIRD_MEDIUM)
        assert abs(a_without - 0.8 * 0.1) < 1e-10
        assert abs(a_with - a_without - h * 0.1) < 1e-10
        # the extra column extends past the cantilever tips
        med = np.unique(with_col.elements[with_col.regions == THIRD_MEDIUM])
        assert with_col.nodes[med, 0].max() > 1.0 + 1e-9
        med0 = np.unique(without.elements[without.regions == THIRD_MEDIUM])
        assert without.nodes[med0, 0].max() <= 1.0 + 1e-12


class TestMetamaterialPlate:
    B, H, d, t = 0.04, 0.04, 0.015, 0.00325

    def test_hole_centers_and_radius(self):
        mesh = G.gen_metamaterial_plate(self.B, self.H, self.d, self.t, refinement=1)
        mesh.audit_positive_jacobians()
        c = self.t + self.d / 2
        assert abs(c - 0.01075) < 1e-12
        for k, (cx, cy) in enumerate([(c, c), (self.B - c, c), (c, self.B - c), (self.B - c, self.B - c)]):
            ids = mesh.node_sets[f"hole_{k}"]
            r = np.linalg.norm(mesh.nodes[ids] - [cx, cy], axis=1)
            assert np.max(np.abs(r - self.d / 2)) < 1e-9

    def test_void_area_near_analytic(self):
        mesh = G.gen_metamaterial_plate(self.B, self.H, self.d, self.t, refinement=1)
        analytic = 4 * np.pi * (self.d / 2) ** 2
        assert abs(analytic * 1e6 - 706.858) < 1e-2
        assert abs(mesh.region_area(THIRD_MEDIUM) / analytic - 1.0) < 0.005

    def test_total_area(self):
        mesh = G.gen_metamaterial_plate(self.B, self.H, self.d, self.t, refinement=1)
        total = mesh.region_area(BULK) + mesh.region_area(THIRD_MEDIUM)
        assert abs(total - self.B * self.H) < 1e-9

    def test_imperfection_perturbs_alternating(self):
        m0 = G.gen_metamaterial_plate(self.B, self.H, self.d, self.t, 1, imperfection=0.0)
        m1 = G.gen_metamaterial_plate(self.B, self.H, self.d, self.t, 1, imperfection=1e-3)
        m1.audit_positive_jacobians()
        dmax = np.max(np.linalg.norm(m1.nodes - m0.nodes, axis=1))
        # nodes between holes pick up contributions from both neighbors
        assert 0 < dmax <= 2.5e-3 * self.d

    def test_geometric_infeasibility(self):
        with pytest.raises(ValueError):
            G.gen_metamaterial_plate(0.04, 0.04, 0.03, 0.006, 1)


def test_quadrature_audit_on_all_generators():
    meshes = [
        G.gen_box_with_void(2.0, 0.5, 0.1, 20, 5),
        G.gen_patch_test(0.1, False, 4, 5, 4),
        G.gen_c_shape(1.0, 0.5, 0.2, 3, True),
        G.gen_metamaterial_plate(0.04, 0.04, 0.015, 0.00325, 1),
    ]
    for mesh in meshes:
        for kind in ("gauss3x3", "lobatto3x3"):
            tab = mesh.tables(quadrature(kind))
            assert np.allclose(tab.N.sum(axis=-1), 1.0, atol=1e-12)
            assert np.allclose(tab.dN_dX.sum(axis=-2), 0.0, atol=1e-9)
            assert np.allclose(tab.d2N_dX2.sum(axis=-3), 0.0, atol=1e-6)
