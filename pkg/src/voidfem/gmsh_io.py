"""Reader for GMSH MSH 2.2 ASCII meshes of 8-node quadrilaterals."""

from __future__ import annotations

import numpy as np

from .mesh import BULK, THIRD_MEDIUM, Mesh

__all__ = ["GmshFormatError", "import_gmsh_v2"]

_QUAD8 = 16  # gmsh element type: 8-node second-order quadrangle

_REGION_BY_NAME = {"bulk": BULK, "third_medium": THIRD_MEDIUM}


class GmshFormatError(ValueError):
    pass


def _read_section(lines, idx, name):
    if idx >= len(lines) or lines[idx].strip() != f"${name}":
        raise GmshFormatError(f"expected ${name} section at line {idx + 1}")
    end = f"$End{name}"
    body = []
    idx += 1
    while idx < len(lines):
        if lines[idx].strip() == end:
            return body, idx + 1
        body.append(lines[idx])
        idx += 1
    raise GmshFormatError(f"unterminated ${name} section")


def import_gmsh_v2(path, region_map: dict) -> Mesh:
    """Read an MSH 2.2 ASCII file of 8-node quads into a Mesh.

    ``region_map`` maps physical-group ids to region names ("bulk" /
    "third_medium") or region ids.  Node ids are remapped densely to 0-based.
    Only element type 16 is supported; anything else raises
    :class:`GmshFormatError` naming the offending type.
    """
    with open(path) as f:
        lines = f.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    idx = 0

    body, idx = _read_section(lines, idx, "MeshFormat")
    if not body:
        raise GmshFormatError("empty $MeshFormat section")
    parts = body[0].split()
    if not parts or not parts[0].startswith("2.2"):
        raise GmshFormatError(f"unsupported MSH version {parts[0] if parts else '?'} (need 2.2)")
    if len(parts) > 1 and parts[1] != "0":
        raise GmshFormatError("binary MSH files are not supported")

    # optional $PhysicalNames
    if idx < len(lines) and lines[idx].strip() == "$PhysicalNames":
        _, idx = _read_section(lines, idx, "PhysicalNames")

    body, idx = _read_section(lines, idx, "Nodes")
    try:
        n_nodes = int(body[0])
        raw = [ln.split() for ln in body[1 : 1 + n_nodes]]
        ids = np.array([int(r[0]) for r in raw])
        coords = np.array([[float(r[1]), float(r[2])] for r in raw])
    except (ValueError, IndexError) as exc:
        raise GmshFormatError(f"malformed $Nodes section: {exc}") from exc
    if len(raw) != n_nodes:
        raise GmshFormatError("node count does not match $Nodes header")
    order = np.argsort(ids)
    id_to_dense = {int(ids[k]): int(i) for i, k in enumerate(order)}
    nodes = coords[order]

    body, idx = _read_section(lines, idx, "Elements")
    try:
        n_el = int(body[0])
        conn = []
        regions = []
        for ln in body[1 : 1 + n_el]:
            r = [int(v) for v in ln.split()]
            etype = r[1]
            if etype != _QUAD8:
                raise GmshFormatError(
                    f"unsupported element type {etype} (only 8-node quads, type {_QUAD8})"
                )
            ntags = r[2]
            phys = r[3] if ntags >= 1 else 0
            node_ids = r[3 + ntags :]
            if len(node_ids) != 8:
                raise GmshFormatError(f"element {r[0]} does not list 8 nodes")
            if phys not in region_map:
                raise GmshFormatError(f"physical group {phys} has no region mapping")
            tag = region_map[phys]
            if isinstance(tag, str):
                if tag not in _REGION_BY_NAME:
                    raise GmshFormatError(f"unknown region name {tag!r}")
                tag = _REGION_BY_NAME[tag]
            conn.append([id_to_dense[n] for n in node_ids])
            regions.append(int(tag))
    except GmshFormatError:
        raise
    except (ValueError, IndexError, KeyError) as exc:
        raise GmshFormatError(f"malformed $Elements section: {exc}") from exc
    if len(conn) != n_el:
        raise GmshFormatError("element count does not match $Elements header")

    return Mesh(nodes, np.array(conn, dtype=np.int64), np.array(regions, dtype=np.int64))
