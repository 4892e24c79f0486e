"""Q8 isoparametric elements, quadrature rules, and mesh containers.

Elements are 8-node serendipity quadrilaterals: four corner nodes ordered
counterclockwise followed by the four midside nodes (edge 0-1 first).  Shape
function tables carry first and second derivatives in material coordinates,
including the curved-element chain-rule term, so second-gradient element
kernels work on meshes with curved edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BULK",
    "THIRD_MEDIUM",
    "REGION_NAMES",
    "MeshQualityError",
    "QuadratureRule",
    "quadrature",
    "shape_q8",
    "ShapeTables",
    "Mesh",
]

BULK = 0
THIRD_MEDIUM = 1
REGION_NAMES = {BULK: "bulk", THIRD_MEDIUM: "third_medium"}

# Parent coordinates of the 8 serendipity nodes (corners then midsides).
_NODE_XI = np.array(
    [
        [-1.0, -1.0],
        [1.0, -1.0],
        [1.0, 1.0],
        [-1.0, 1.0],
        [0.0, -1.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 0.0],
    ]
)


class MeshQualityError(RuntimeError):
    """Raised when an element has a non-positive or singular reference Jacobian."""


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product rule on the parent square [-1, 1]^2."""

    name: str
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)


def quadrature(kind: str) -> QuadratureRule:
    """Return a 3x3 quadrature rule.

    ``gauss3x3`` is the standard Gauss rule (exact to degree 5 per direction).
    ``lobatto3x3`` places points at the element nodes ({-1, 0, 1} per
    direction with weights {1/3, 4/3, 1/3}), which sharpens contact
    enforcement in the compliant medium.
    """
    if kind == "gauss3x3":
        x = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
        w = np.array([5.0, 8.0, 5.0]) / 9.0
    elif kind == "lobatto3x3":
        x = np.array([-1.0, 0.0, 1.0])
        w = np.array([1.0, 4.0, 1.0]) / 3.0
    else:
        raise ValueError(f"unknown quadrature kind: {kind!r}")
    pts = np.array([(xi, eta) for eta in x for xi in x])
    wts = np.array([wj * wi for wj in w for wi in w])
    return QuadratureRule(kind, pts, wts)


def shape_q8(xi: np.ndarray):
    """Serendipity Q8 shape functions and parent derivatives at point(s) xi.

    Parameters
    ----------
    xi : array_like, shape (..., 2)
        Parent coordinates in [-1, 1]^2.

    Returns
    -------
    N : (..., 8)
    dN : (..., 8, 2)
        dN_a/dxi_alpha.
    ddN : (..., 8, 2, 2)
        d^2 N_a / dxi_alpha dxi_beta.
    """
    xi = np.asarray(xi, dtype=float)
    x, y = xi[..., 0], xi[..., 1]
    shp = xi.shape[:-1]
    N = np.zeros(shp + (8,))
    dN = np.zeros(shp + (8, 2))
    ddN = np.zeros(shp + (8, 2, 2))

    for a in range(4):
        xa, ya = _NODE_XI[a]
        N[..., a] = 0.25 * (1 + xa * x) * (1 + ya * y) * (xa * x + ya * y - 1)
        dN[..., a, 0] = 0.25 * xa * (1 + ya * y) * (2 * xa * x + ya * y)
        dN[..., a, 1] = 0.25 * ya * (1 + xa * x) * (xa * x + 2 * ya * y)
        ddN[..., a, 0, 0] = 0.5 * (1 + ya * y)
        ddN[..., a, 1, 1] = 0.5 * (1 + xa * x)
        mixed = 0.25 * xa * ya * (2 * xa * x + 2 * ya * y + 1)
        ddN[..., a, 0, 1] = mixed
        ddN[..., a, 1, 0] = mixed

    for a in (4, 6):  # midsides on eta = +-1
        ya = _NODE_XI[a, 1]
        N[..., a] = 0.5 * (1 - x * x) * (1 + ya * y)
        dN[..., a, 0] = -x * (1 + ya * y)
        dN[..., a, 1] = 0.5 * ya * (1 - x * x)
        ddN[..., a, 0, 0] = -(1 + ya * y)
        ddN[..., a, 0, 1] = -x * ya
        ddN[..., a, 1, 0] = -x * ya

    for a in (5, 7):  # midsides on xi = +-1
        xa = _NODE_XI[a, 0]
        N[..., a] = 0.5 * (1 + xa * x) * (1 - y * y)
        dN[..., a, 0] = 0.5 * xa * (1 - y * y)
        dN[..., a, 1] = -y * (1 + xa * x)
        ddN[..., a, 1, 1] = -(1 + xa * x)
        ddN[..., a, 0, 1] = -y * xa
        ddN[..., a, 1, 0] = -y * xa

    return N, dN, ddN


@dataclass
class ShapeTables:
    """Per-element shape data evaluated at the quadrature points of a rule.

    Attributes
    ----------
    N : (nel, nq, 8)
    dN_dX : (nel, nq, 8, 2)
        First derivatives in material coordinates.
    d2N_dX2 : (nel, nq, 8, 2, 2)
        Second derivatives in material coordinates (full curved-element
        chain rule, including the d2X/dxi2 correction).
    weights : (nel, nq)
        Quadrature weight times reference Jacobian determinant.
    """

    N: np.ndarray
    dN_dX: np.ndarray
    d2N_dX2: np.ndarray
    weights: np.ndarray


def _build_tables(coords: np.ndarray, rule: QuadratureRule, elem_ids: np.ndarray) -> ShapeTables:
    """Evaluate material-coordinate shape data for a stack of elements.

    coords : (nel, 8, 2) nodal material coordinates.
    """
    N, dN, ddN = shape_q8(rule.points)  # (nq,8), (nq,8,2), (nq,8,2,2)
    nel = coords.shape[0]
    nq = rule.points.shape[0]

    # J[k, alpha] = dX_k/dxi_alpha
    J = np.einsum("eak,qal->eqkl", coords, dN)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(detJ <= 0):
        bad = np.argwhere(detJ <= 0)
        eid = int(elem_ids[bad[0, 0]])
        raise MeshQualityError(
            f"non-positive reference Jacobian in element {eid} "
            f"(quadrature point {int(bad[0, 1])}, detJ={detJ[bad[0, 0], bad[0, 1]]:.3e})"
        )
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1]
    Jinv[..., 0, 1] = -J[..., 0, 1]
    Jinv[..., 1, 0] = -J[..., 1, 0]
    Jinv[..., 1, 1] = J[..., 0, 0]
    Jinv = Jinv / detJ[..., None, None]

    # With J[k, alpha] = dX_k/dxi_alpha, Jinv carries [alpha, k]:
    # dN/dX_k = Jinv[alpha, k] dN/dxi_alpha.
    dN_dX = np.einsum("eqlk,qal->eqak", Jinv, dN)

    # d2X_k/dxi_alpha dxi_beta from nodal coordinates
    ddX = np.einsum("eak,qaln->eqkln", coords, ddN)
    # Remove the curved-map term, then pull both parent indices back:
    # H_X = Jinv^T (H_xi - dN/dX_k * ddX_k) Jinv  per node.
    rhs = ddN[None, ...] - np.einsum("eqak,eqkln->eqaln", dN_dX, ddX)
    d2N_dX2 = np.einsum("eqlm,eqaln,eqnp->eqamp", Jinv, rhs, Jinv)

    w = rule.weights[None, :] * detJ
    return ShapeTables(np.broadcast_to(N, (nel, nq, 8)).copy(), dN_dX, d2N_dX2, w)


@dataclass
class Mesh:
    """Q8 mesh with region tags, named node sets and gap-probe node pairs.

    Attributes
    ----------
    nodes : (nnode, 2) material coordinates in meters.
    elements : (nel, 8) int node ids, counterclockwise corners then midsides.
    regions : (nel,) int region tag per element (BULK or THIRD_MEDIUM).
    node_sets : named boundary selections, name -> int array of node ids.
    probe_pairs : named node pairs for gap measurements.
    boundary_loops : named ordered closed polylines of quadratic edges, each a
        list of (n0, nmid, n1) node triples traversed counterclockwise around
        the named region.
    """

    nodes: np.ndarray
    elements: np.ndarray
    regions: np.ndarray
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    probe_pairs: dict[str, tuple[int, int]] = field(default_factory=dict)
    boundary_loops: dict[str, list[tuple[int, int, int]]] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.regions = np.asarray(self.regions, dtype=np.int64)
        if self.elements.ndim != 2 or self.elements.shape[1] != 8:
            raise ValueError("elements must have shape (nel, 8)")
        if self.regions.shape[0] != self.elements.shape[0]:
            raise ValueError("regions must tag every element")
        if self.elements.size and self.elements.max() >= self.nodes.shape[0]:
            raise ValueError("element references a node id out of range")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_ids(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.regions == region)

    def element_coords(self, elem_ids=None) -> np.ndarray:
        """Nodal coordinates per element, shape (nel, 8, 2)."""
        ids = self.elements if elem_ids is None else self.elements[elem_ids]
        return self.nodes[ids]

    def tables(self, rule: QuadratureRule, elem_ids=None) -> ShapeTables:
        """Shape-function tables for the given elements under a rule."""
        ids = np.arange(self.n_elements) if elem_ids is None else np.asarray(elem_ids)
        return _build_tables(self.element_coords(ids), rule, ids)

    def region_area(self, region: int, rule: QuadratureRule | None = None) -> float:
        """Reference-configuration area of a region via quadrature."""
        rule = rule or quadrature("gauss3x3")
        ids = self.element_ids(region)
        if ids.size == 0:
            return 0.0
        return float(self.tables(rule, ids).weights.sum())

    def audit_positive_jacobians(self) -> None:
        """Raise MeshQualityError unless all elements pass at Gauss and Lobatto points."""
        for kind in ("gauss3x3", "lobatto3x3"):
            self.tables(quadrature(kind))
