"""Uniform right-triangle meshes of axis-aligned rectangles.

Nodes are numbered row-major from the origin with x running fastest, so the
node at lattice position ``(ix, iy)`` has id ``iy * (nx + 1) + ix``.  Every
lattice square is split along its lower-left to upper-right diagonal.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

SIDES = ("left", "right", "bottom", "top")
DEFAULT_TAGS = {"left": "N", "top": "N", "bottom": "Z", "right": "Z"}

MAX_LEVEL = 12


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class MeshGrid:
    extent: tuple[float, float]
    level: int
    nx: int
    ny: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    side_tags: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_TAGS))

    @property
    def cell_side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def diagonal(self) -> float:
        return np.sqrt(2.0) * self.cell_side

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def node_id(self, ix: int, iy: int) -> int:
        return iy * (self.nx + 1) + ix

    def lattice_index(self, node: int) -> tuple[int, int]:
        iy, ix = divmod(int(node), self.nx + 1)
        return ix, iy

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def contains(self, point) -> bool:
        x, y = point
        ex, ey = self.extent
        return 0.0 <= x <= ex and 0.0 <= y <= ey

    def adjacency(self) -> sparse.csr_matrix:
        """Node adjacency of nodes sharing a triangle (no self loops)."""
        return _adjacency(self)


def build_mesh(extent, level: int, side_tags: Mapping[str, str] | None = None) -> MeshGrid:
    """Triangulate ``[0, extent[0]] x [0, extent[1]]`` with cell side ``2**-level``.

    Parameters
    ----------
    extent : pair of float
        Side lengths of the rectangle in meters.  Both must be integer
        multiples of the cell side.
    level : int
        Grid level, ``0 <= level <= 12``.
    side_tags : mapping, optional
        Boundary tag (``"N"`` reflecting or ``"Z"`` absorbing) per side.
        Missing sides fall back to left/top reflecting, bottom/right absorbing.
    """
    level = int(level)
    if not 0 <= level <= MAX_LEVEL:
        raise MeshError(f"grid level must lie in [0, {MAX_LEVEL}], got {level}")
    ex, ey = (float(v) for v in extent)
    if ex <= 0 or ey <= 0:
        raise MeshError(f"extent must be positive, got {extent}")
    h = 2.0 ** (-level)
    nx, ny = ex / h, ey / h
    if abs(nx - round(nx)) > 1e-9 * max(nx, 1) or abs(ny - round(ny)) > 1e-9 * max(ny, 1):
        raise MeshError(
            f"extent {extent} is not an integer number of cells of side {h}"
        )
    nx, ny = int(round(nx)), int(round(ny))

    tags = dict(DEFAULT_TAGS)
    if side_tags:
        for side, tag in side_tags.items():
            if side not in SIDES:
                raise MeshError(f"unknown side {side!r}")
            if tag not in ("N", "Z"):
                raise MeshError(f"boundary tag must be 'N' or 'Z', got {tag!r}")
            tags[side] = tag

    xs = np.arange(nx + 1) * h
    ys = np.arange(ny + 1) * h
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    a = (iy * (nx + 1) + ix).ravel()
    b = a + 1
    c = a + nx + 1
    d = c + 1
    triangles = np.concatenate(
        [np.column_stack([a, b, d]), np.column_stack([a, d, c])]
    ).astype(np.int64)

    row = np.arange(nx)
    col = np.arange(ny)
    bottom = np.column_stack([row, row + 1])
    top = np.column_stack([ny * (nx + 1) + row, ny * (nx + 1) + row + 1])
    left = np.column_stack([col * (nx + 1), (col + 1) * (nx + 1)])
    right = np.column_stack([col * (nx + 1) + nx, (col + 1) * (nx + 1) + nx])
    parts = {"left": left, "right": right, "bottom": bottom, "top": top}
    edges = np.concatenate([parts[s] for s in SIDES]).astype(np.int64)
    edge_tags = np.concatenate([np.full(len(parts[s]), tags[s]) for s in SIDES])

    for arr in (nodes, triangles, edges, edge_tags):
        arr.setflags(write=False)
    return MeshGrid(
        extent=(ex, ey),
        level=level,
        nx=nx,
        ny=ny,
        nodes=nodes,
        triangles=triangles,
        boundary_edges=edges,
        boundary_tags=edge_tags,
        side_tags=tags,
    )


def triangle_areas(mesh: MeshGrid) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def locate_node(mesh: MeshGrid, point) -> tuple[int, bool]:
    """Return the nearest lattice node and whether the point had to be moved.

    Ties between equidistant nodes go to the smaller node id.
    """
    x, y = (float(v) for v in point)
    if not mesh.contains((x, y)):
        raise MeshError(f"point ({x}, {y}) lies outside the domain {mesh.extent}")
    h = mesh.cell_side
    # ceil(t - 1/2) rounds half-way cases down, i.e. toward the smaller id
    ix = min(max(int(np.ceil(x / h - 0.5)), 0), mesh.nx)
    iy = min(max(int(np.ceil(y / h - 0.5)), 0), mesh.ny)
    node = mesh.node_id(ix, iy)
    dist = np.hypot(x - ix * h, y - iy * h)
    return node, bool(dist > 1e-12 * h)


def control_node_set(
    mesh: MeshGrid, region=None, exclusions: Iterable[int] = ()
) -> np.ndarray:
    """Ids of nodes inside the closed rectangle ``region`` minus ``exclusions``.

    ``region`` is ``((x0, x1), (y0, y1))``; ``None`` selects the whole domain.
    """
    ex, ey = mesh.extent
    if region is None:
        region = ((0.0, ex), (0.0, ey))
    (x0, x1), (y0, y1) = region
    tol = 1e-12 * max(ex, ey)
    if x0 < -tol or y0 < -tol or x1 > ex + tol or y1 > ey + tol or x0 > x1 or y0 > y1:
        raise MeshError(f"control region {region} is not inside the domain")
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    mask = (x >= x0 - tol) & (x <= x1 + tol) & (y >= y0 - tol) & (y <= y1 + tol)
    excl = np.fromiter((int(e) for e in exclusions), dtype=np.int64)
    if excl.size:
        mask[excl] = False
    ids = np.flatnonzero(mask)
    if ids.size == 0:
        raise MeshError("control node set is empty")
    return ids


def _adjacency(mesh: MeshGrid) -> sparse.csr_matrix:
    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 1], t[:, 2], t[:, 0]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2]])
    adj = sparse.coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)),
        shape=(mesh.n_nodes, mesh.n_nodes),
    ).tocsr()
    adj.data[:] = 1
    return adj


def _lattice_neighbors(mesh: MeshGrid, node: int):
    ix, iy = mesh.lattice_index(node)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)):
        jx, jy = ix + dx, iy + dy
        if 0 <= jx <= mesh.nx and 0 <= jy <= mesh.ny:
            yield mesh.node_id(jx, jy)


def hop_distance(mesh: MeshGrid, a: int, b: int, cap: int) -> int | None:
    """Breadth-first hop count between nodes ``a`` and ``b``.

    Returns ``None`` when the distance exceeds ``cap``.
    """
    for v in (a, b):
        if not 0 <= int(v) < mesh.n_nodes:
            raise MeshError(f"node id {v} out of range")
    a, b = int(a), int(b)
    if a == b:
        return 0
    seen = {a}
    frontier = deque([(a, 0)])
    while frontier:
        node, dist = frontier.popleft()
        if dist >= cap:
            continue
        for nb in _lattice_neighbors(mesh, node):
            if nb == b:
                return dist + 1
            if nb not in seen:
                seen.add(nb)
                frontier.append((nb, dist + 1))
    return None
