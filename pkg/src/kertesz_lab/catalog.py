"""Named small graphs and events for oracles, tests and the CLI."""

from __future__ import annotations

import numpy as np

from .exact import EventPredicate, connected_event
from .lattice import BoxGraph, from_vertices

# vertex sets of the workhorse small graphs (d=2 lattice points)
_SHAPES: dict[str, list[tuple[int, int]]] = {
    "single": [(0, 0)],
    "domino": [(0, 0), (1, 0)],
    "path3": [(0, 0), (1, 0), (2, 0)],
    "ell3": [(0, 0), (1, 0), (1, 1)],
    "square": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "tee4": [(0, 0), (1, 0), (2, 0), (1, 1)],
    "pent5": [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2)],
    "box2x2": [(0, 0), (1, 0), (0, 1), (1, 1)],
}


def graph_names() -> list[str]:
    return sorted(_SHAPES)


def make_graph(name: str) -> BoxGraph:
    try:
        pts = _SHAPES[name]
    except KeyError:
        raise ValueError(f"unknown graph {name!r}; choose from {graph_names()}")
    return from_vertices(2, pts)


def small_graphs(max_total_edges: int | None = None,
                 max_inner_edges: int | None = None) -> dict[str, BoxGraph]:
    """The catalog filtered by edge budgets (None = no bound)."""
    out = {}
    for name in graph_names():
        g = make_graph(name)
        if max_total_edges is not None and g.n_edges > max_total_edges:
            continue
        if max_inner_edges is not None and g.n_inner > max_inner_edges:
            continue
        out[name] = g
    return out


# -- events -----------------------------------------------------------------

def edge_open(e: int) -> EventPredicate:
    return EventPredicate(
        name=f"edge_open({e})",
        fn=lambda bits: bool(bits[e]),
        vfn=lambda m: m[:, e].astype(bool),
        monotone=True,
    )


def ghost_edge_open(g: BoxGraph, v: int) -> EventPredicate:
    return edge_open(g.ghost_edge(v))


def all_open() -> EventPredicate:
    return EventPredicate(
        name="all_open",
        fn=lambda bits: bool(np.all(bits == 1)),
        vfn=lambda m: np.all(m == 1, axis=1),
        monotone=True,
    )


def full_space() -> EventPredicate:
    return EventPredicate(
        name="full_space",
        fn=lambda bits: True,
        vfn=lambda m: np.ones(m.shape[0], bool),
        monotone=True,
    )


def upset_event(mask: int, n_edges: int) -> EventPredicate:
    """Monotone event from an up-set membership mask over configurations."""

    def key(m: np.ndarray) -> np.ndarray:
        weights = (1 << np.arange(n_edges)).astype(np.int64)
        return m.astype(np.int64) @ weights

    return EventPredicate(
        name=f"upset(0x{mask:x})",
        fn=lambda bits: bool((mask >> int(key(bits[None, :])[0])) & 1),
        vfn=lambda m: ((mask >> key(m)) & 1).astype(bool),
        monotone=True,
    )


def event_by_name(g: BoxGraph, name: str) -> EventPredicate:
    """Events addressable from the CLI."""
    if name == "all_open":
        return all_open()
    if name == "full_space":
        return full_space()
    if name.startswith("edge_open:"):
        return edge_open(int(name.split(":", 1)[1]))
    if name.startswith("ghost_open:"):
        return ghost_edge_open(g, int(name.split(":", 1)[1]))
    if name.startswith("connected:"):
        x, y = name.split(":", 1)[1].split(",")
        return connected_event(g, int(x), int(y))
    raise ValueError(
        f"unknown event {name!r}; use all_open, full_space, edge_open:E, "
        f"ghost_open:V or connected:X,Y")
