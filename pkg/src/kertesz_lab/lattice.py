"""Finite boxes of Z^d with a ghost vertex: geometry, configurations, clusters.

Every graph here is the subgraph of Z^d + ghost induced by a finite set of
lattice points.  The ghost vertex is adjacent to every lattice vertex; its
edges form the "ghost sector" of a bond configuration, the nearest-neighbour
edges of Z^d form the "inner sector".  Edge indexing is deterministic:
inner edges first, ordered lexicographically by (lower endpoint, axis),
then one ghost edge per lattice vertex in vertex order.  The ghost vertex
always has the largest vertex index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_INDEX = 2**31 - 2  # vertex/edge counts must fit int32


class LatticeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryCondition:
    """free / wired / explicit partition of the boundary vertex set.

    Explicit blocks are tuples of vertex indices.  A block may contain the
    ghost index: partitions induced by conditioning outside a sub-box can
    identify boundary vertices with the ghost through outside open paths.
    Boundary vertices not covered by any block are singletons.
    """

    kind: str
    blocks: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("free", "wired", "explicit"):
            raise LatticeError(f"unknown boundary condition kind {self.kind!r}")
        if self.kind != "explicit" and self.blocks:
            raise LatticeError("blocks are only allowed for explicit partitions")
        if self.kind == "explicit":
            seen: set[int] = set()
            for b in self.blocks:
                if not b:
                    raise LatticeError("empty block in explicit partition")
                if seen & set(b):
                    raise LatticeError("explicit partition blocks must be disjoint")
                seen |= set(b)


FREE = BoundaryCondition("free")
WIRED = BoundaryCondition("wired")


def explicit(blocks: Iterable[Iterable[int]]) -> BoundaryCondition:
    return BoundaryCondition("explicit", tuple(tuple(sorted(b)) for b in blocks))


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelArrays:
    """Flat view of a graph + boundary condition for the hot loops."""

    n_v: int
    n_inner: int
    n_edges: int
    edge_u: np.ndarray        # int32[n_inner]
    edge_v: np.ndarray        # int32[n_inner]
    adj_start: np.ndarray     # int32[n_v + 1], CSR over inner edges
    adj_vert: np.ndarray      # int32[2 n_inner]
    adj_edge: np.ndarray      # int32[2 n_inner]
    block_id: np.ndarray      # int32[n_v], -1 when not identified
    block_start: np.ndarray   # int32[n_blocks + 1]
    block_members: np.ndarray  # int32[...]
    ghost_block: int          # block index containing the ghost, else -1

    @property
    def n_blocks(self) -> int:
        return len(self.block_start) - 1


class BoxGraph:
    """Induced subgraph of Z^d on a finite vertex set, plus the ghost.

    Attributes
    ----------
    d : ambient dimension
    k : box radius when built via :func:`build_box`, else None
    vertices : list of lattice points (tuples), sorted lexicographically
    ghost : index of the ghost vertex (== n_vertices, the largest index)
    inner_edges : list of (u, v) index pairs, u < v
    boundary : sorted tuple of indices of vertices incident to Z^d edges
        leaving the vertex set (the ghost is not part of it)
    """

    def __init__(self, d: int, points: Sequence[tuple[int, ...]], k: int | None = None):
        if d < 1:
            raise LatticeError("dimension must be >= 1")
        pts = sorted(set(tuple(int(c) for c in p) for p in points))
        if not pts:
            raise LatticeError("empty vertex set")
        for p in pts:
            if len(p) != d:
                raise LatticeError(f"point {p} does not have dimension {d}")
        if len(pts) > MAX_INDEX:
            raise LatticeError("vertex count overflows index type")
        self.d = d
        self.k = k
        self.vertices = pts
        self._index = {p: i for i, p in enumerate(pts)}
        self.n_lattice = len(pts)
        self.ghost = self.n_lattice

        edges = []
        boundary = set()
        for i, p in enumerate(pts):
            for axis in range(d):
                for sign in (-1, 1):
                    nb = list(p)
                    nb[axis] += sign
                    j = self._index.get(tuple(nb))
                    if j is None:
                        boundary.add(i)
                    elif sign == 1:
                        edges.append((i, j))
        if 2 * len(edges) + len(pts) > MAX_INDEX:
            raise LatticeError("edge count overflows index type")
        self.inner_edges = edges
        self.boundary = tuple(sorted(boundary))
        self.n_inner = len(edges)
        self.n_ghost = self.n_lattice
        self.n_edges = self.n_inner + self.n_ghost
        self._arrays_cache: dict[BoundaryCondition, KernelArrays] = {}

    # -- basic queries ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        """Vertex count including the ghost."""
        return self.n_lattice + 1

    def vertex_index(self, point: tuple[int, ...]) -> int:
        return self._index[tuple(point)]

    def ghost_edge(self, v: int) -> int:
        """Edge index of the ghost edge attached to lattice vertex v."""
        if not 0 <= v < self.n_lattice:
            raise LatticeError(f"no lattice vertex {v}")
        return self.n_inner + v

    def edge_endpoints(self, e: int) -> tuple[int, int]:
        if 0 <= e < self.n_inner:
            return self.inner_edges[e]
        if e < self.n_edges:
            return (e - self.n_inner, self.ghost)
        raise LatticeError(f"no edge {e}")

    def missing_neighbors(self, v: int) -> int:
        """Number of Z^d edges from v that leave the vertex set."""
        p = self.vertices[v]
        n = 0
        for axis in range(self.d):
            for sign in (-1, 1):
                nb = list(p)
                nb[axis] += sign
                if tuple(nb) not in self._index:
                    n += 1
        return n

    def __repr__(self):
        tag = f"Lambda_{self.k}" if self.k is not None else "explicit"
        return (f"BoxGraph(d={self.d}, {tag}, {self.n_lattice} lattice vertices, "
                f"{self.n_inner} inner + {self.n_ghost} ghost edges)")

    # -- boundary-condition resolution --------------------------------------

    def bc_blocks(self, bc: BoundaryCondition) -> list[list[int]]:
        """Identification blocks as vertex-index lists (ghost index allowed)."""
        if bc.kind == "free":
            return []
        if bc.kind == "wired":
            return [list(self.boundary)] if len(self.boundary) > 1 else []
        bset = set(self.boundary) | {self.ghost}
        for b in bc.blocks:
            for v in b:
                if v not in bset:
                    raise LatticeError(
                        f"explicit partition touches non-boundary vertex {v}")
        return [list(b) for b in bc.blocks if len(b) > 1]

    def arrays(self, bc: BoundaryCondition) -> KernelArrays:
        got = self._arrays_cache.get(bc)
        if got is not None:
            return got
        n_v = self.n_lattice
        eu = np.fromiter((e[0] for e in self.inner_edges), np.int32, self.n_inner)
        ev = np.fromiter((e[1] for e in self.inner_edges), np.int32, self.n_inner)
        deg = np.zeros(n_v + 1, np.int32)
        for a, b in self.inner_edges:
            deg[a + 1] += 1
            deg[b + 1] += 1
        adj_start = np.cumsum(deg, dtype=np.int32)
        adj_vert = np.zeros(2 * self.n_inner, np.int32)
        adj_edge = np.zeros(2 * self.n_inner, np.int32)
        fill = adj_start[:-1].copy()
        for idx, (a, b) in enumerate(self.inner_edges):
            adj_vert[fill[a]] = b
            adj_edge[fill[a]] = idx
            fill[a] += 1
            adj_vert[fill[b]] = a
            adj_edge[fill[b]] = idx
            fill[b] += 1

        blocks = self.bc_blocks(bc)
        block_id = np.full(n_v, -1, np.int32)
        ghost_block = -1
        starts = [0]
        members: list[int] = []
        for bi, blk in enumerate(blocks):
            for v in blk:
                if v == self.ghost:
                    ghost_block = bi
                else:
                    block_id[v] = bi
                    members.append(v)
            starts.append(len(members))
        arrays = KernelArrays(
            n_v=n_v,
            n_inner=self.n_inner,
            n_edges=self.n_edges,
            edge_u=eu,
            edge_v=ev,
            adj_start=adj_start,
            adj_vert=adj_vert,
            adj_edge=adj_edge,
            block_id=block_id,
            block_start=np.asarray(starts, np.int32),
            block_members=np.asarray(members, np.int32),
            ghost_block=ghost_block,
        )
        self._arrays_cache[bc] = arrays
        return arrays


def build_box(d: int, k: int) -> BoxGraph:
    """The box Lambda_k: all x with sup-norm <= k, plus the ghost."""
    if d < 1:
        raise LatticeError("dimension must be >= 1")
    if k < 0:
        raise LatticeError("radius must be >= 0")
    if (2 * k + 1) ** d > MAX_INDEX:
        raise LatticeError("box size overflows index type")
    rng = range(-k, k + 1)
    pts: list[tuple[int, ...]] = [()]
    for _ in range(d):
        pts = [p + (c,) for p in pts for c in rng]
    return BoxGraph(d, pts, k=k)


def from_vertices(d: int, points: Iterable[tuple[int, ...]]) -> BoxGraph:
    """Induced ghost-graph on an explicit lattice vertex set."""
    return BoxGraph(d, list(points))


def rect_graph(nx: int, ny: int) -> BoxGraph:
    """d=2 rectangle with nx columns and ny rows of vertices."""
    if nx < 1 or ny < 1:
        raise LatticeError("rectangle sides must be >= 1")
    return BoxGraph(2, [(x, y) for x in range(nx) for y in range(ny)])


# ---------------------------------------------------------------------------
# bond configurations
# ---------------------------------------------------------------------------

@dataclass
class BondConfig:
    """One bit per edge, inner sector first."""

    bits: np.ndarray
    n_inner: int

    def __post_init__(self):
        self.bits = np.ascontiguousarray(np.asarray(self.bits, dtype=np.uint8))
        if self.bits.ndim != 1:
            raise LatticeError("bits must be a flat vector")
        if np.any(self.bits > 1):
            raise LatticeError("bits must be 0/1")
        if not 0 <= self.n_inner <= len(self.bits):
            raise LatticeError("inner sector size out of range")

    @classmethod
    def zeros(cls, g: BoxGraph) -> "BondConfig":
        return cls(np.zeros(g.n_edges, np.uint8), g.n_inner)

    @classmethod
    def ones(cls, g: BoxGraph) -> "BondConfig":
        return cls(np.ones(g.n_edges, np.uint8), g.n_inner)

    @classmethod
    def from_int(cls, value: int, g: BoxGraph) -> "BondConfig":
        bits = np.fromiter(((value >> i) & 1 for i in range(g.n_edges)),
                           np.uint8, g.n_edges)
        return cls(bits, g.n_inner)

    @property
    def inner(self) -> np.ndarray:
        return self.bits[: self.n_inner]

    @property
    def ghost(self) -> np.ndarray:
        return self.bits[self.n_inner:]

    def to_int(self) -> int:
        return int(sum(1 << i for i, b in enumerate(self.bits) if b))

    def copy(self) -> "BondConfig":
        return BondConfig(self.bits.copy(), self.n_inner)

    def le(self, other: "BondConfig") -> bool:
        """Coordinatewise partial order (self <= other)."""
        return bool(np.all(self.bits <= other.bits))

    # hex serialization: bit i of the vector is bit i of the integer,
    # printed as lowercase hex, zero padded to ceil(n/4) digits
    def to_hex(self) -> str:
        width = max(1, (len(self.bits) + 3) // 4)
        return format(self.to_int(), f"0{width}x")

    @classmethod
    def from_hex(cls, text: str, g: BoxGraph) -> "BondConfig":
        return cls.from_int(int(text, 16), g)

    def __eq__(self, other):
        return (isinstance(other, BondConfig)
                and self.n_inner == other.n_inner
                and np.array_equal(self.bits, other.bits))


# ---------------------------------------------------------------------------
# union-find + cluster decomposition
# ---------------------------------------------------------------------------

class UnionFind:
    """Array union-find with path halving; rebuilt per query batch."""

    __slots__ = ("parent", "n_components")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.n_components = n

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra > rb:
                ra, rb = rb, ra
            self.parent[rb] = ra
            self.n_components -= 1

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


@dataclass
class ClusterLabels:
    """Component decomposition under a boundary condition.

    label[v] is the component id of vertex v (ghost included, id order is by
    smallest member index).  sizes counts lattice vertices only.  ghost_flag
    marks the component containing the ghost.  kappa is the component count
    after boundary identification.
    """

    label: np.ndarray
    sizes: np.ndarray
    ghost_flag: np.ndarray
    kappa: int

    def size_of_vertex(self, v: int) -> int:
        return int(self.sizes[self.label[v]])


def _uf_for(g: BoxGraph, omega: BondConfig, bc: BoundaryCondition,
            skip_edge: int = -1) -> UnionFind:
    uf = UnionFind(g.n_vertices)
    for blk in g.bc_blocks(bc):
        for v in blk[1:]:
            uf.union(blk[0], v)
    bits = omega.bits
    for e, (a, b) in enumerate(g.inner_edges):
        if e != skip_edge and bits[e]:
            uf.union(a, b)
    for v in range(g.n_lattice):
        e = g.n_inner + v
        if e != skip_edge and bits[e]:
            uf.union(v, g.ghost)
    return uf


def components(g: BoxGraph, omega: BondConfig, bc: BoundaryCondition = FREE) -> ClusterLabels:
    """Open-edge connectivity; wired identification applied before scanning."""
    if len(omega.bits) != g.n_edges:
        raise LatticeError("configuration does not fit the graph")
    uf = _uf_for(g, omega, bc)
    roots = [uf.find(v) for v in range(g.n_vertices)]
    order: dict[int, int] = {}
    for v in range(g.n_vertices):
        if roots[v] not in order:
            order[roots[v]] = len(order)
    label = np.fromiter((order[r] for r in roots), np.int32, g.n_vertices)
    kappa = len(order)
    sizes = np.zeros(kappa, np.int64)
    for v in range(g.n_lattice):
        sizes[label[v]] += 1
    ghost_flag = np.zeros(kappa, bool)
    ghost_flag[label[g.ghost]] = True
    return ClusterLabels(label=label, sizes=sizes, ghost_flag=ghost_flag, kappa=kappa)


def connected_off_edge(g: BoxGraph, omega: BondConfig, bc: BoundaryCondition,
                       e: int) -> bool:
    """Are the endpoints of e connected when e is forced closed?

    Ghost paths and boundary identification count as connections.
    """
    a, b = g.edge_endpoints(e)
    uf = _uf_for(g, omega, bc, skip_edge=e)
    return uf.connected(a, b)
