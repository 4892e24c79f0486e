import numpy as np
import pytest

from voidfem.gmsh_io import GmshFormatError, import_gmsh_v2
from voidfem.mesh import BULK, THIRD_MEDIUM

SINGLE_Q8 = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
8
1 0 0 0
2 2 0 0
3 2 1 0
4 0 1 0
5 1 0 0
6 2 0.5 0
7 1 1 0
8 0 0.5 0
$EndNodes
$Elements
1
1 16 2 1 10 1 2 3 4 5 6 7 8
$EndElements
"""

TWO_GROUPS = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
2 1 "bulk"
2 2 "void"
$EndPhysicalNames
$Nodes
13
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 0.5 0 0
6 1 0.5 0
7 0.5 1 0
8 0 0.5 0
9 2 0 0
10 2 1 0
11 1.5 0 0
12 2 0.5 0
13 1.5 1 0
$EndNodes
$Elements
2
1 16 2 1 10 1 2 3 4 5 6 7 8
2 16 2 2 11 2 9 10 3 11 12 13 6
$EndElements
"""


def test_single_element(tmp_path):
    path = tmp_path / "one.msh"
    path.write_text(SINGLE_Q8)
    mesh = import_gmsh_v2(path, {1: "bulk"})
    assert mesh.n_nodes == 8
    assert mesh.n_elements == 1
    assert mesh.regions[0] == BULK
    assert np.allclose(mesh.nodes[2], [2.0, 1.0])
    mesh.audit_positive_jacobians()


def test_two_physical_groups(tmp_path):
    path = tmp_path / "two.msh"
    path.write_text(TWO_GROUPS)
    mesh = import_gmsh_v2(path, {1: "bulk", 2: "third_medium"})
    assert mesh.n_elements == 2
    assert mesh.regions[0] == BULK and mesh.regions[1] == THIRD_MEDIUM
    mesh.audit_positive_jacobians()


def test_triangle_element_rejected(tmp_path):
    bad = SINGLE_Q8.replace("1 16 2 1 10 1 2 3 4 5 6 7 8", "1 2 2 1 10 1 2 3")
    path = tmp_path / "tri.msh"
    path.write_text(bad)
    with pytest.raises(GmshFormatError, match="type 2"):
        import_gmsh_v2(path, {1: "bulk"})


def test_unsupported_version(tmp_path):
    path = tmp_path / "v4.msh"
    path.write_text(SINGLE_Q8.replace("2.2 0 8", "4.1 0 8"))
    with pytest.raises(GmshFormatError, match="version"):
        import_gmsh_v2(path, {1: "bulk"})


def test_unmapped_group(tmp_path):
    path = tmp_path / "nomap.msh"
    path.write_text(SINGLE_Q8)
    with pytest.raises(GmshFormatError, match="no region mapping"):
        import_gmsh_v2(path, {7: "bulk"})


def test_malformed_nodes(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text(SINGLE_Q8.replace("8\n1 0 0 0", "9\n1 0 0 0"))
    with pytest.raises(GmshFormatError):
        import_gmsh_v2(path, {1: "bulk"})


def test_sparse_node_ids_remapped(tmp_path):
    shifted = SINGLE_Q8
    for old, new in zip("12345678", ("10", "20", "30", "40", "50", "60", "70", "80")):
        shifted = shifted.replace(f"\n{old} ", f"\n{new} ")
    shifted = shifted.replace("10 1 2 3 4 5 6 7 8", "10 10 20 30 40 50 60 70 80")
    path = tmp_path / "sparse.msh"
    path.write_text(shifted)
    mesh = import_gmsh_v2(path, {1: "bulk"})
    assert mesh.n_nodes == 8
    assert mesh.elements.max() == 7
    mesh.audit_positive_jacobians()
