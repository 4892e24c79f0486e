"""Deterministic Q8 mesh generators for the benchmark geometries.

All generators emit conforming all-quad meshes with region tags
(bulk / third medium), named node sets for boundary conditions, and explicit
gap-probe node pairs.  Circular holes use a mapped square-to-circle block
decomposition with every boundary node (midsides included) placed exactly on
the circle.
"""

from __future__ import annotations

import numpy as np

from .mesh import BULK, THIRD_MEDIUM, Mesh

__all__ = [
    "gen_block",
    "gen_box_with_void",
    "gen_patch_test",
    "gen_c_shape",
    "gen_metamaterial_plate",
]

_SNAP = 1e-10  # coordinate snap for node dedup, meters


class _Q8Builder:
    """Accumulates Q8 elements, deduplicating nodes by snapped coordinates."""

    def __init__(self):
        self._ids: dict[tuple[int, int], int] = {}
        self._coords: list[tuple[float, float]] = []
        self.elements: list[list[int]] = []
        self.regions: list[int] = []

    def _key(self, x: float, y: float) -> tuple[int, int]:
        return (int(round(x / _SNAP)), int(round(y / _SNAP)))

    def node(self, x: float, y: float) -> int:
        key = self._key(x, y)
        nid = self._ids.get(key)
        if nid is None:
            nid = len(self._coords)
            self._ids[key] = nid
            self._coords.append((float(x), float(y)))
        return nid

    def find(self, x: float, y: float) -> int:
        nid = self._ids.get(self._key(x, y))
        if nid is None:
            raise KeyError(f"no node at ({x}, {y})")
        return nid

    def add_quad(self, corners, region: int, midsides=None) -> None:
        """Add one Q8 element from 4 CCW corner coordinates.

        ``midsides`` optionally overrides edge-midpoint coordinates (used for
        curved edges); entries may be None to keep the straight midpoint.
        """
        c = [np.asarray(p, dtype=float) for p in corners]
        area2 = 0.0
        for k in range(4):
            x0, y0 = c[k]
            x1, y1 = c[(k + 1) % 4]
            area2 += x0 * y1 - x1 * y0
        if area2 <= 0:
            raise ValueError("quad corners must be counterclockwise")
        mids = [None] * 4 if midsides is None else list(midsides)
        for k in range(4):
            if mids[k] is None:
                mids[k] = 0.5 * (c[k] + c[(k + 1) % 4])
        ids = [self.node(*p) for p in c] + [self.node(*p) for p in mids]
        self.elements.append(ids)
        self.regions.append(region)

    def add_mapped_element(self, coords8, region: int) -> None:
        """Add one Q8 element from all 8 node coordinates (corners then midsides)."""
        ids = [self.node(*p) for p in coords8]
        self.elements.append(ids)
        self.regions.append(region)

    def build(self, node_sets=None, probe_pairs=None, boundary_loops=None) -> Mesh:
        return Mesh(
            np.array(self._coords),
            np.array(self.elements, dtype=np.int64),
            np.array(self.regions, dtype=np.int64),
            node_sets=node_sets or {},
            probe_pairs=probe_pairs or {},
            boundary_loops=boundary_loops or {},
        )

    def coords(self) -> np.ndarray:
        return np.array(self._coords)


def _structured_rect(b: _Q8Builder, xs: np.ndarray, ys: np.ndarray, region) -> None:
    """Structured cells between corner lines xs (nx+1) and ys (ny+1).

    ``region`` is an int tag or a callable of the cell center.
    """
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            x0, x1 = xs[i], xs[i + 1]
            y0, y1 = ys[j], ys[j + 1]
            if callable(region):
                tag = region(0.5 * (x0 + x1), 0.5 * (y0 + y1))
            else:
                tag = region
            if tag is None:
                continue
            b.add_quad([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], tag)


def _select(coords: np.ndarray, predicate) -> np.ndarray:
    return np.flatnonzero(predicate(coords[:, 0], coords[:, 1]))


def _near(v, target, tol=1e-9):
    return np.abs(v - target) < tol


def gen_block(width: float, height: float, nx: int, ny: int) -> Mesh:
    """Plain rectangular bulk block (contact-free reference for the patch test)."""
    b = _Q8Builder()
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    _structured_rect(b, xs, ys, BULK)
    c = b.coords()
    sets = {
        "bottom": _select(c, lambda x, y: _near(y, 0.0)),
        "top": _select(c, lambda x, y: _near(y, height)),
        "pin": np.array([b.find(width / 2.0, 0.0)]),
    }
    return b.build(node_sets=sets)


def _hline_edges(b: _Q8Builder, y: float, x0: float, x1: float, n: int, flip=False):
    """Quadratic edge triples along a horizontal mesh line (n element edges)."""
    xs = np.linspace(x0, x1, 2 * n + 1)
    tri = [
        (b.find(xs[2 * k], y), b.find(xs[2 * k + 1], y), b.find(xs[2 * k + 2], y))
        for k in range(n)
    ]
    if flip:
        tri = [(c2, c1, c0) for (c0, c1, c2) in reversed(tri)]
    return tri


def _vline_edges(b: _Q8Builder, x: float, y0: float, y1: float, n: int, flip=False):
    ys = np.linspace(y0, y1, 2 * n + 1)
    tri = [
        (b.find(x, ys[2 * k]), b.find(x, ys[2 * k + 1]), b.find(x, ys[2 * k + 2]))
        for k in range(n)
    ]
    if flip:
        tri = [(c2, c1, c0) for (c0, c1, c2) in reversed(tri)]
    return tri


def gen_box_with_void(B: float, H: float, t: float, nx: int, ny: int) -> Mesh:
    """Rectangular box with a centered rectangular void filled by third medium.

    The mesh is a structured nx-by-ny grid; the wall thickness t must fall on
    grid lines in both directions.  A gap probe connects the mid-span nodes of
    the top and bottom void boundary, and the void boundary is exported as a
    counterclockwise edge loop for follower-load verification.
    """
    if not (t < H / 2 and t < B / 2):
        raise ValueError("wall thickness must leave an interior void")
    dx, dy = B / nx, H / ny
    kx, ky = t / dx, t / dy
    if abs(kx - round(kx)) > 1e-9 or abs(ky - round(ky)) > 1e-9:
        raise ValueError(
            f"incompatible subdivision counts: t={t} must be a whole number of "
            f"cells (dx={dx:.6g}, dy={dy:.6g})"
        )
    b = _Q8Builder()
    xs = np.linspace(0.0, B, nx + 1)
    ys = np.linspace(0.0, H, ny + 1)

    def region(xc, yc):
        inside = t < xc < B - t and t < yc < H - t
        return THIRD_MEDIUM if inside else BULK

    _structured_rect(b, xs, ys, region)

    c = b.coords()
    sets = {
        "bottom": _select(c, lambda x, y: _near(y, 0.0)),
        "top": _select(c, lambda x, y: _near(y, H)),
        "left": _select(c, lambda x, y: _near(x, 0.0)),
        "right": _select(c, lambda x, y: _near(x, B)),
    }
    probes = {"gap": (b.find(B / 2, H - t), b.find(B / 2, t))}

    nvx = round((B - 2 * t) / dx)
    nvy = round((H - 2 * t) / dy)
    loop = (
        _hline_edges(b, t, t, B - t, nvx)
        + _vline_edges(b, B - t, t, H - t, nvy)
        + _hline_edges(b, H - t, t, B - t, nvx, flip=True)
        + _vline_edges(b, t, t, H - t, nvy, flip=True)
    )
    return b.build(node_sets=sets, probe_pairs=probes, boundary_loops={"void": loop})


def _fan_quads(A, P, Bc, M, T, U):
    """Three quads closing two bottom edges (A-P-Bc) against one top edge (T-U).

    The side Bc-M-T carries the uneven split demanded by quad parity; U-A is
    a single edge.  One interior vertex X keeps all three quads convex.
    """
    A, P, Bc, M, T, U = (np.asarray(p, dtype=float) for p in (A, P, Bc, M, T, U))
    X = 0.25 * (P + Bc + M + U)
    return [[A, P, X, U], [P, Bc, M, X], [X, M, T, U]]


def _mirror_quads(quads):
    return [[q[0], q[3], q[2], q[1]] for q in quads]


def _transition_quads(y0, y1, xb, xt):
    """Corner quads meshing a band whose subdivision counts differ by 0, 1 or 2.

    Equal counts give plain (possibly tilted) columns.  A difference of one
    uses a three-quad fan at the right end; quad parity forces the uneven
    side split onto the band's free surface there.  A difference of two uses
    a mirrored fan pair at the band center, whose split sides face each other
    so both band sides keep a single edge.
    """
    m = len(xb) - 1
    n = len(xt) - 1
    quads = []
    if m == n:
        for j in range(n):
            quads.append([(xb[j], y0), (xb[j + 1], y0), (xt[j + 1], y1), (xt[j], y1)])
        return quads
    if m == n + 1:
        for j in range(n - 1):
            quads.append([(xb[j], y0), (xb[j + 1], y0), (xt[j + 1], y1), (xt[j], y1)])
        M = np.array([xt[n], 0.5 * (y0 + y1)])
        quads.extend(
            _fan_quads(
                (xb[n - 1], y0), (xb[n], y0), (xb[m], y0), M, (xt[n], y1), (xt[n - 1], y1)
            )
        )
        return quads
    if m == n + 2:
        # mirror-symmetric layout: one fan at each band end, so the uneven
        # splits sit on the two side surfaces and the net shear cancels
        ML = np.array([0.5 * (xb[0] + xt[0]), 0.5 * (y0 + y1)])
        quads.extend(
            _mirror_quads(
                _fan_quads(
                    (xb[2], y0), (xb[1], y0), (xb[0], y0), ML, (xt[0], y1), (xt[1], y1)
                )
            )
        )
        for j in range(m - 4):
            quads.append(
                [(xb[j + 2], y0), (xb[j + 3], y0), (xt[j + 2], y1), (xt[j + 1], y1)]
            )
        MR = np.array([0.5 * (xb[m] + xt[n]), 0.5 * (y0 + y1)])
        quads.extend(
            _fan_quads(
                (xb[m - 2], y0),
                (xb[m - 1], y0),
                (xb[m], y0),
                MR,
                (xt[n], y1),
                (xt[n - 1], y1),
            )
        )
        return quads
    if n > m:
        mirrored = _transition_quads(y0, y1, xt, xb)
        out = []
        for q in mirrored:
            flipped = [(p[0], y0 + y1 - p[1]) for p in q]
            out.append([flipped[0], flipped[3], flipped[2], flipped[1]])
        return out
    raise ValueError("band subdivision counts may differ by at most two per row")


def gen_patch_test(
    gap_height: float, aligned: bool, nx_top: int, nx_bottom: int, ny: int
) -> Mesh:
    """Two unit blocks separated by a compliant band for the contact patch test.

    ``nx_top`` and ``nx_bottom`` set the block subdivisions at the contact
    interfaces; the misaligned variant (unequal counts) meshes the band with
    a conforming transition so the interface node columns share no interior
    x-coordinates.
    """
    if gap_height <= 0:
        raise ValueError("gap_height must be positive")
    if aligned and nx_top != nx_bottom:
        raise ValueError("aligned patch test requires nx_top == nx_bottom")
    g = gap_height
    b = _Q8Builder()
    xs_bot = np.linspace(0.0, 1.0, nx_bottom + 1)
    xs_top = np.linspace(0.0, 1.0, nx_top + 1)
    _structured_rect(b, xs_bot, np.linspace(0.0, 1.0, ny + 1), BULK)
    _structured_rect(b, xs_top, np.linspace(1.0 + g, 2.0 + g, ny + 1), BULK)

    steps = abs(nx_top - nx_bottom)
    if steps == 0:
        rows_counts = [(np.linspace(0.0, 1.0, nx_bottom + 1), np.linspace(0.0, 1.0, nx_top + 1))]
    else:
        # Count changes of two per row use a centered fan pair whose uneven
        # split sides face each other; an odd difference leaves one row with
        # a single fan, whose split necessarily sits on the band's side
        # surface (quad parity).  Extending the band one column past each
        # block face keeps that fold-prone free surface out of the contact
        # patch, the same extra-column device the slot benchmark needs;
        # uniform buffer rows sit against either block.
        w = min(1.0 / nx_bottom, 1.0 / nx_top)
        counts = [nx_bottom]
        cur = nx_bottom
        while cur != nx_top:
            cur += int(np.sign(nx_top - cur)) * min(2, abs(nx_top - cur))
            counts.append(cur)
        counts = [nx_bottom, *counts, nx_top]
        rows_counts = []
        for r in range(len(counts) - 1):
            xb = np.concatenate([[-w], np.linspace(0.0, 1.0, counts[r] + 1), [1.0 + w]])
            xt = np.concatenate([[-w], np.linspace(0.0, 1.0, counts[r + 1] + 1), [1.0 + w]])
            rows_counts.append((xb, xt))
    rows = len(rows_counts)
    ys = np.linspace(1.0, 1.0 + g, rows + 1)
    for r, (xb, xt) in enumerate(rows_counts):
        for q in _transition_quads(ys[r], ys[r + 1], xb, xt):
            b.add_quad(q, THIRD_MEDIUM)

    c = b.coords()
    sets = {
        "bottom": _select(c, lambda x, y: _near(y, 0.0)),
        "top": _select(c, lambda x, y: _near(y, 2.0 + g)),
        "pin": np.array([b.find(0.0, 0.0)]),
        # the upper block connects to the rest only through the compliant
        # band, so its lateral rigid mode needs its own pin
        "pin_top": np.array([b.find(0.0, 1.0 + g)]),
    }
    probes = {"gap": (b.find(0.5, 1.0 + g), b.find(0.5, 1.0))}
    return b.build(node_sets=sets, probe_pairs=probes)


def gen_c_shape(
    B: float, H: float, t: float, n_through: int, extra_column: bool
) -> Mesh:
    """C-shaped cantilever pair with the slot filled by third medium.

    ``n_through`` sets the element count across the slot height H - 2t.  When
    ``extra_column`` is set, one additional column of medium elements extends
    past the cantilever tips along the free surface, which the slot mouth
    needs for contact to resolve there.
    """
    if 2 * t >= H:
        raise ValueError("need 2t < H for a slot")
    h = (H - 2 * t) / n_through
    for name, v in (("B", B / h), ("H", H / h), ("t", t / h)):
        if abs(v - round(v)) > 1e-9:
            raise ValueError(f"{name} must be a whole number of cells of size {h:.6g}")
    ncx = round(B / h) + (1 if extra_column else 0)
    ncy = round(H / h)
    xs = np.linspace(0.0, ncx * h, ncx + 1)
    ys = np.linspace(0.0, H, ncy + 1)
    b = _Q8Builder()

    def region(xc, yc):
        in_slot_band = t < yc < H - t
        if xc > B:
            return THIRD_MEDIUM if in_slot_band else None
        if xc > t and in_slot_band:
            return THIRD_MEDIUM
        return BULK

    _structured_rect(b, xs, ys, region)
    c = b.coords()
    sets = {
        "left": _select(c, lambda x, y: _near(x, 0.0)),
        "tip_load": np.array([b.find(B, H)]),
    }
    probes = {"gap": (b.find(B, H - t), b.find(B, t))}
    return b.build(node_sets=sets, probe_pairs=probes)


def _transfinite_block(b, inner_fn, outer_fn, nu, nv, region):
    """Mapped block between curves inner_fn(u) and outer_fn(u), u, v in [0, 1].

    Nodes are placed on the half-step logical grid so midside nodes of
    inner-edge elements land exactly on the inner curve.
    """
    us = np.linspace(0.0, 1.0, 2 * nu + 1)
    vs = np.linspace(0.0, 1.0, 2 * nv + 1)
    grid = np.empty((len(us), len(vs), 2))
    for iu, u in enumerate(us):
        pi = inner_fn(u)
        po = outer_fn(u)
        for iv, v in enumerate(vs):
            grid[iu, iv] = (1.0 - v) * pi + v * po
    for i in range(nu):
        for j in range(nv):
            c0 = grid[2 * i, 2 * j]
            c1 = grid[2 * i + 2, 2 * j]
            c2 = grid[2 * i + 2, 2 * j + 2]
            c3 = grid[2 * i, 2 * j + 2]
            d1, d3 = c1 - c0, c3 - c0
            area2 = d1[0] * d3[1] - d1[1] * d3[0]
            corners = [c0, c1, c2, c3]
            mids = [
                grid[2 * i + 1, 2 * j],
                grid[2 * i + 2, 2 * j + 1],
                grid[2 * i + 1, 2 * j + 2],
                grid[2 * i, 2 * j + 1],
            ]
            if area2 < 0:
                corners = [c0, c3, c2, c1]
                mids = [mids[3], mids[2], mids[1], mids[0]]
            coords8 = corners + mids
            b.add_mapped_element(coords8, region)


def gen_metamaterial_plate(
    B: float,
    H: float,
    d: float,
    t: float,
    refinement: int = 1,
    imperfection: float = 0.0,
) -> Mesh:
    """Square plate with four circular voids in a square lattice.

    Hole centers sit ``t + d/2`` from the edges.  Each hole is meshed by a
    five-block square-to-circle decomposition (void inside the circle tagged
    third medium, mapped ring outside it bulk), embedded in a conforming grid
    of rectangular bands.  ``imperfection`` perturbs nodes near each circle
    with an alternating-ellipse pattern of amplitude ``imperfection * d``
    (fraction of the hole diameter) to seed the post-buckling branch.
    """
    r = d / 2.0
    c1 = t + r
    c2 = B - t - r
    if H != B:
        raise ValueError("plate generator assumes a square sample")
    if c2 - c1 < d or c1 < r:
        raise ValueError("holes overlap or fall outside the plate")
    a = r + 0.5 * min(c1 - r, 0.5 * (c2 - c1) - r)
    if a <= r:
        raise ValueError("no room for the mapped ring around a hole")

    n_side = 4 * refinement
    n_r = 2 * refinement
    n_rd = 2 * refinement
    n_edge = 2 * refinement
    n_mid = 2 * refinement

    centers = [(c1, c1), (c2, c1), (c1, c2), (c2, c2)]  # SW, SE, NW, NE
    lines = np.array([0.0, c1 - a, c1 + a, c2 - a, c2 + a, B])
    counts = [n_edge, n_side, n_mid, n_side, n_edge]
    frame_cells = {(1, 1), (1, 3), (3, 1), (3, 3)}

    b = _Q8Builder()
    for j in range(5):
        for i in range(5):
            if (i, j) in frame_cells:
                continue
            xs = np.linspace(lines[i], lines[i + 1], counts[i] + 1)
            ys = np.linspace(lines[j], lines[j + 1], counts[j] + 1)
            _structured_rect(b, xs, ys, BULK)

    s0 = 0.5 * r  # central square half-width inside each hole
    hole_sets: dict[str, list[int]] = {}
    for k, (cx, cy) in enumerate(centers):
        cc = np.array([cx, cy])
        sq = [
            cc + np.array([-a, -a]),
            cc + np.array([a, -a]),
            cc + np.array([a, a]),
            cc + np.array([-a, a]),
        ]
        inner_sq = [
            cc + np.array([-s0, -s0]),
            cc + np.array([s0, -s0]),
            cc + np.array([s0, s0]),
            cc + np.array([-s0, s0]),
        ]
        th0 = np.deg2rad(225.0)
        for side in range(4):
            a0 = th0 + side * 0.5 * np.pi
            a1 = a0 + 0.5 * np.pi

            def arc(u, a0=a0, a1=a1):
                th = a0 + u * (a1 - a0)
                return cc + r * np.array([np.cos(th), np.sin(th)])

            def sq_line(u, p0=sq[side], p1=sq[(side + 1) % 4]):
                return p0 + u * (p1 - p0)

            def inner_line(u, p0=inner_sq[side], p1=inner_sq[(side + 1) % 4]):
                return p0 + u * (p1 - p0)

            _transfinite_block(b, arc, sq_line, n_side, n_r, BULK)
            _transfinite_block(b, inner_line, arc, n_side, n_rd, THIRD_MEDIUM)

        def csq_edge(u, p0=inner_sq[0], p1=inner_sq[1]):
            return p0 + u * (p1 - p0)

        def csq_top(u, p0=inner_sq[3], p1=inner_sq[2]):
            return p0 + u * (p1 - p0)

        _transfinite_block(b, csq_edge, csq_top, n_side, n_side, THIRD_MEDIUM)

        ring_ids = []
        for side in range(4):
            a0 = th0 + side * 0.5 * np.pi
            for u in np.linspace(0.0, 1.0, 2 * n_side + 1)[:-1]:
                th = a0 + u * 0.5 * np.pi
                p = cc + r * np.array([np.cos(th), np.sin(th)])
                ring_ids.append(b.find(*p))
        hole_sets[f"hole_{k}"] = ring_ids

    coords = b.coords()
    sets = {name: np.array(ids) for name, ids in hole_sets.items()}
    sets["pin"] = np.array([b.find(0.0, 0.0)])
    sets["roller"] = np.array([b.find(B, 0.0)])

    mesh = b.build(node_sets=sets)

    if imperfection:
        amp = imperfection * d
        signs = [1.0, -1.0, -1.0, 1.0]
        nodes = mesh.nodes
        for (cx, cy), s in zip(centers, signs):
            dxy = nodes - np.array([cx, cy])
            rho = np.hypot(dxy[:, 0], dxy[:, 1])
            th = np.arctan2(dxy[:, 1], dxy[:, 0])
            w = np.clip(1.0 - np.abs(rho - r) / (0.7 * r), 0.0, 1.0)
            dr = amp * s * np.cos(2.0 * th) * w
            nodes[:, 0] += dr * np.cos(th)
            nodes[:, 1] += dr * np.sin(th)
    return mesh
