"""Hot loops: heat-bath sweeps, connectivity queries, enumeration kappa.

Compiled with numba when available, otherwise executed as plain Python
(identical semantics, much slower).  All functions operate on the flat
arrays of :class:`kertesz_lab.lattice.KernelArrays`; the ghost vertex and
boundary blocks never appear explicitly — ghost connectivity is tracked by
"ghost touch" flags and identification blocks are expanded on first visit.

Heat-bath conditional per edge, shared-uniform form: with ptilde =
p/(p + q(1-p)) the new state is open iff u < ptilde (open regardless of
connectivity), closed iff u >= p, and otherwise open exactly when the
endpoints are connected off the edge.  This is the monotone coupling used
both for plain sweeps and for coupling from the past.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    if os.environ.get("KERTESZ_LAB_NO_NUMBA"):
        raise ImportError("numba disabled via KERTESZ_LAB_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


@njit(cache=True, nogil=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def _push(v, side, tok, mark, queue, tails, gt, cfg, n_inner, skip_edge,
          block_id, block_start, block_members, bmark, ghost_block):
    """Mark v for `side`; expand its identification block; track ghost touch.

    Returns 1 when the other side already owns v or its block (the two
    searches met), else 0.
    """
    mine = tok + side
    other = tok + (1 - side)
    m = mark[v]
    if m == other:
        return 1
    if m != mine:
        mark[v] = mine
        queue[side, tails[side]] = v
        tails[side] += 1
        ge = n_inner + v
        if ge != skip_edge and cfg[ge] == 1:
            gt[side] = 1
    b = block_id[v]
    if b >= 0:
        bm = bmark[b]
        if bm == other:
            return 1
        if bm != mine:
            bmark[b] = mine
            if b == ghost_block:
                gt[side] = 1
            for i in range(block_start[b], block_start[b + 1]):
                w = block_members[i]
                mw = mark[w]
                if mw == other:
                    return 1
                if mw != mine:
                    mark[w] = mine
                    queue[side, tails[side]] = w
                    tails[side] += 1
                    ge = n_inner + w
                    if ge != skip_edge and cfg[ge] == 1:
                        gt[side] = 1
    return 0


@njit(cache=True, nogil=True)
def conn_off_edge(cfg, x, y, skip_edge, n_inner,
                  adj_start, adj_vert, adj_edge,
                  block_id, block_start, block_members, ghost_block,
                  mark, bmark, queue, tails, gt, tok):
    """Bidirectional search: x <-> y with skip_edge forced closed.

    Connections through identification blocks count; so do ghost paths
    (both sides touching an open ghost edge, or the block containing the
    ghost).  Cost is bounded by the smaller of the two components.
    """
    tails[0] = 0
    tails[1] = 0
    gt[0] = 0
    gt[1] = 0
    if _push(x, 0, tok, mark, queue, tails, gt, cfg, n_inner, skip_edge,
             block_id, block_start, block_members, bmark, ghost_block) == 1:
        return 1
    if _push(y, 1, tok, mark, queue, tails, gt, cfg, n_inner, skip_edge,
             block_id, block_start, block_members, bmark, ghost_block) == 1:
        return 1
    h0 = 0
    h1 = 0
    while True:
        if gt[0] == 1 and gt[1] == 1:
            return 1
        r0 = tails[0] - h0
        r1 = tails[1] - h1
        if r0 == 0 and gt[0] == 0:
            return 0
        if r1 == 0 and gt[1] == 0:
            return 0
        if r0 == 0 and r1 == 0:
            return 0
        if r1 == 0 or (r0 > 0 and r0 <= r1):
            side = 0
            v = queue[0, h0]
            h0 += 1
        else:
            side = 1
            v = queue[1, h1]
            h1 += 1
        for i in range(adj_start[v], adj_start[v + 1]):
            e = adj_edge[i]
            if e == skip_edge or cfg[e] == 0:
                continue
            if _push(adj_vert[i], side, tok, mark, queue, tails, gt, cfg,
                     n_inner, skip_edge, block_id, block_start,
                     block_members, bmark, ghost_block) == 1:
                return 1


@njit(cache=True, nogil=True)
def ghost_conn_off_edge(cfg, v, n_inner,
                        adj_start, adj_vert, adj_edge,
                        block_id, block_start, block_members, ghost_block,
                        mark, bmark, queue, tails, gt, tok):
    """Is v connected to the ghost with its own ghost edge forced closed?"""
    skip_edge = n_inner + v
    tails[0] = 0
    gt[0] = 0
    _push(v, 0, tok, mark, queue, tails, gt, cfg, n_inner, skip_edge,
          block_id, block_start, block_members, bmark, ghost_block)
    head = 0
    while gt[0] == 0 and head < tails[0]:
        w = queue[0, head]
        head += 1
        for i in range(adj_start[w], adj_start[w + 1]):
            e = adj_edge[i]
            if e == skip_edge or cfg[e] == 0:
                continue
            _push(adj_vert[i], 0, tok, mark, queue, tails, gt, cfg, n_inner,
                  skip_edge, block_id, block_start, block_members, bmark,
                  ghost_block)
    return 1 if gt[0] == 1 else 0


@njit(cache=True, nogil=True)
def heat_bath_sweep(cfg, u_row, n_v, n_inner, edge_u, edge_v,
                    adj_start, adj_vert, adj_edge,
                    block_id, block_start, block_members, ghost_block,
                    p_in, lo_in, p_h, lo_h,
                    mark, bmark, queue, tails, gt, tok):
    """One heat-bath pass over all edges in index order (in place)."""
    for e in range(n_inner):
        u = u_row[e]
        if u < lo_in:
            cfg[e] = 1
        elif u >= p_in:
            cfg[e] = 0
        else:
            tok += 2
            c = conn_off_edge(cfg, edge_u[e], edge_v[e], e, n_inner,
                              adj_start, adj_vert, adj_edge,
                              block_id, block_start, block_members,
                              ghost_block, mark, bmark, queue, tails, gt, tok)
            cfg[e] = 1 if c == 1 else 0
    for v in range(n_v):
        e = n_inner + v
        u = u_row[e]
        if u < lo_h:
            cfg[e] = 1
        elif u >= p_h:
            cfg[e] = 0
        else:
            tok += 2
            c = ghost_conn_off_edge(cfg, v, n_inner,
                                    adj_start, adj_vert, adj_edge,
                                    block_id, block_start, block_members,
                                    ghost_block, mark, bmark, queue, tails,
                                    gt, tok)
            cfg[e] = 1 if c == 1 else 0
    return tok


@njit(cache=True, nogil=True)
def run_sweeps(cfg, u_rows, n_v, n_inner, edge_u, edge_v,
               adj_start, adj_vert, adj_edge,
               block_id, block_start, block_members, ghost_block,
               p_in, lo_in, p_h, lo_h,
               mark, bmark, queue, tails, gt, tok):
    for r in range(u_rows.shape[0]):
        tok = heat_bath_sweep(cfg, u_rows[r], n_v, n_inner, edge_u, edge_v,
                              adj_start, adj_vert, adj_edge,
                              block_id, block_start, block_members,
                              ghost_block, p_in, lo_in, p_h, lo_h,
                              mark, bmark, queue, tails, gt, tok)
    return tok


@njit(cache=True, nogil=True)
def cftp_pass(top, bot, u_rows, n_v, n_inner, edge_u, edge_v,
              adj_start, adj_vert, adj_edge,
              block_id, block_start, block_members, ghost_block,
              p_in, lo_in, p_h, lo_h,
              mark, bmark, queue, tails, gt, tok):
    """Evolve the two extremal chains with shared uniforms.

    Returns (tok, 0) normally; (tok, -1) if the monotone coupling ever
    loses the ordering top >= bot (which would indicate a bug, never a
    statistical fluke).
    """
    n_edges = n_inner + n_v
    for r in range(u_rows.shape[0]):
        tok = heat_bath_sweep(top, u_rows[r], n_v, n_inner, edge_u, edge_v,
                              adj_start, adj_vert, adj_edge,
                              block_id, block_start, block_members,
                              ghost_block, p_in, lo_in, p_h, lo_h,
                              mark, bmark, queue, tails, gt, tok)
        tok = heat_bath_sweep(bot, u_rows[r], n_v, n_inner, edge_u, edge_v,
                              adj_start, adj_vert, adj_edge,
                              block_id, block_start, block_members,
                              ghost_block, p_in, lo_in, p_h, lo_h,
                              mark, bmark, queue, tails, gt, tok)
        for e in range(n_edges):
            if top[e] < bot[e]:
                return tok, -1
    return tok, 0


@njit(cache=True, nogil=True)
def reach_query(cfg, src, dst_flag, n_inner, adj_start, adj_vert, adj_edge,
                mark, queue, tok):
    """Is any src vertex joined to a dst_flag vertex by open inner edges?

    Pure inner-edge paths: ghost edges and boundary identification never
    count (percolation events are defined without the ghost).
    """
    tail = 0
    for i in range(len(src)):
        v = src[i]
        if dst_flag[v] == 1:
            return 1
        if mark[v] != tok:
            mark[v] = tok
            queue[0, tail] = v
            tail += 1
    head = 0
    while head < tail:
        v = queue[0, head]
        head += 1
        for i in range(adj_start[v], adj_start[v + 1]):
            if cfg[adj_edge[i]] == 0:
                continue
            w = adj_vert[i]
            if mark[w] != tok:
                if dst_flag[w] == 1:
                    return 1
                mark[w] = tok
                queue[0, tail] = w
                tail += 1
    return 0


@njit(cache=True, nogil=True)
def bernoulli_reach(u_rows, p, src, dst_flag, n_inner,
                    adj_start, adj_vert, adj_edge, mark, queue, tok, out):
    """Direct product-measure sampling of the inner-edge reach event (q=1)."""
    n = u_rows.shape[0]
    cfg = np.zeros(u_rows.shape[1], np.uint8)
    for r in range(n):
        for e in range(n_inner):
            cfg[e] = 1 if u_rows[r, e] < p else 0
        tok += 1
        out[r] = reach_query(cfg, src, dst_flag, n_inner, adj_start,
                             adj_vert, adj_edge, mark, queue, tok)
    return tok


@njit(cache=True, nogil=True)
def kappa_range(c0, c1, n_nodes, edge_a, edge_b, pre_a, pre_b, out):
    """Component counts kappa^xi for configurations c0 <= c < c1.

    Configuration bits are read off the integer c (edge i = bit i); pre_a,
    pre_b list boundary identification unions applied before the scan.
    """
    parent = np.empty(n_nodes, np.int32)
    n_e = len(edge_a)
    n_pre = len(pre_a)
    for idx in range(c1 - c0):
        c = c0 + idx
        for i in range(n_nodes):
            parent[i] = i
        count = n_nodes
        for j in range(n_pre):
            ra = _find(parent, pre_a[j])
            rb = _find(parent, pre_b[j])
            if ra != rb:
                if ra > rb:
                    ra, rb = rb, ra
                parent[rb] = ra
                count -= 1
        for e in range(n_e):
            if (c >> e) & 1 == 1:
                ra = _find(parent, edge_a[e])
                rb = _find(parent, edge_b[e])
                if ra != rb:
                    if ra > rb:
                        ra, rb = rb, ra
                    parent[rb] = ra
                    count -= 1
        out[idx] = count
    return 0
