"""Brute-force oracles for the random-cluster model with a ghost field.

Everything in this module is exact (up to floating point): partition
functions and event probabilities by full enumeration of bond
configurations, conditional ghost laws by enumeration of the ghost sector,
parameter derivatives through the covariance identities, and stochastic
domination checked against every monotone event.

Budgets are hard caps with explicit errors; there is no sampling fallback
in here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

from . import _kernels
from .lattice import FREE, BondConfig, BoundaryCondition, BoxGraph, components

ENUM_MAX_EDGES = 26          # 2^26 configurations
UPSET_MAX_EDGES = 5          # 7581 monotone events; 6 behind opt-in flag
_CHUNK_BITS = 16

_POPCOUNT16 = np.array([bin(i).count("1") for i in range(1 << 16)], np.uint8)


class EnumerationBudgetError(Exception):
    """Raised instead of ever truncating an enumeration."""


class DegenerateParameterError(ValueError):
    """Covariance derivative formulas divide by p(1-p); boundaries refused."""


class ExactnessError(AssertionError):
    """A cross-check that should hold to numerical precision failed."""


# ---------------------------------------------------------------------------
# parameters and events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """(p, q, p_h) plus boundary condition.

    p weights inner edges, p_h ghost edges, q the component count.  The
    field h enters only through p_h; conversions live in
    :mod:`kertesz_lab.bounds`.
    """

    p: float
    q: float
    p_h: float
    bc: BoundaryCondition = FREE

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} out of [0,1]")
        if not 0.0 <= self.p_h <= 1.0:
            raise ValueError(f"p_h={self.p_h} out of [0,1]")
        if self.q < 1.0:
            raise ValueError(f"q={self.q} must be >= 1")

    def replace(self, **kw) -> "ModelParams":
        d = dict(p=self.p, q=self.q, p_h=self.p_h, bc=self.bc)
        d.update(kw)
        return ModelParams(**d)


@dataclass
class EventPredicate:
    """Decidable predicate on bond configurations.

    fn maps a uint8 bit vector to a bool; vfn, when given, maps an
    (n_configs, n_edges) bit matrix to a bool vector and is preferred
    during enumeration.  monotone=True is an assertion that can be checked
    against every comparable pair (see verify_monotone).
    """

    name: str
    fn: Callable[[np.ndarray], bool]
    vfn: Callable[[np.ndarray], np.ndarray] | None = None
    monotone: bool | None = None

    def evaluate(self, bit_matrix: np.ndarray) -> np.ndarray:
        if self.vfn is not None:
            out = np.asarray(self.vfn(bit_matrix), dtype=bool)
            if out.shape != (bit_matrix.shape[0],):
                raise ValueError(f"vectorized event {self.name} returned wrong shape")
            return out
        return np.fromiter((bool(self.fn(row)) for row in bit_matrix),
                           bool, bit_matrix.shape[0])


# ---------------------------------------------------------------------------
# enumeration core
# ---------------------------------------------------------------------------

def _popcount(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.int64)
    out = _POPCOUNT16[v & 0xFFFF].astype(np.int64)
    out += _POPCOUNT16[(v >> 16) & 0xFFFF]
    return out


def _edge_nodes(g: BoxGraph) -> tuple[np.ndarray, np.ndarray]:
    a = [e[0] for e in g.inner_edges] + list(range(g.n_lattice))
    b = [e[1] for e in g.inner_edges] + [g.ghost] * g.n_lattice
    return np.asarray(a, np.int32), np.asarray(b, np.int32)


def _pre_unions(g: BoxGraph, bc: BoundaryCondition) -> tuple[np.ndarray, np.ndarray]:
    pa, pb = [], []
    for blk in g.bc_blocks(bc):
        for v in blk[1:]:
            pa.append(blk[0])
            pb.append(v)
    return np.asarray(pa, np.int32), np.asarray(pb, np.int32)


def kappa_table(g: BoxGraph, bc: BoundaryCondition, c0: int, c1: int) -> np.ndarray:
    """kappa^xi for configurations c0 <= c < c1 (edge i = bit i)."""
    ea, eb = _edge_nodes(g)
    pa, pb = _pre_unions(g, bc)
    out = np.empty(c1 - c0, np.int32)
    _kernels.kappa_range(c0, c1, g.n_vertices, ea, eb, pa, pb, out)
    return out


def _check_budget(g: BoxGraph, max_edges: int = ENUM_MAX_EDGES) -> None:
    if g.n_edges > max_edges:
        raise EnumerationBudgetError(
            f"{g.n_edges} edges exceed the enumeration budget of {max_edges} "
            f"(2^{max_edges} configurations); refusing rather than truncating")


def _chunk_log_weights(g: BoxGraph, params: ModelParams, c0: int, c1: int,
                       ghost_p: np.ndarray | None) -> np.ndarray:
    configs = np.arange(c0, c1, dtype=np.int64)
    n_in = g.n_inner
    inner_mask = (1 << n_in) - 1
    o_in = _popcount(configs & inner_mask)
    kappa = kappa_table(g, params.bc, c0, c1)
    logw = xlogy(o_in, params.p) + xlogy(n_in - o_in, 1.0 - params.p)
    logw += kappa * math.log(params.q)
    if ghost_p is None:
        o_g = _popcount(configs >> n_in)
        logw += xlogy(o_g, params.p_h) + xlogy(g.n_ghost - o_g, 1.0 - params.p_h)
    else:
        gbits = ((configs[:, None] >> (n_in + np.arange(g.n_ghost))) & 1)
        logw += gbits @ np.log(np.maximum(ghost_p, 1e-300))
        logw += (1 - gbits) @ np.log(np.maximum(1.0 - ghost_p, 1e-300))
        # exact zeros: configurations using a forbidden edge get -inf
        for v in np.nonzero(ghost_p == 0.0)[0]:
            logw[(configs >> (n_in + v)) & 1 == 1] = -np.inf
        for v in np.nonzero(ghost_p == 1.0)[0]:
            logw[(configs >> (n_in + v)) & 1 == 0] = -np.inf
    return logw


def log_weights(g: BoxGraph, params: ModelParams,
                ghost_p: np.ndarray | None = None) -> np.ndarray:
    """Log weight of every configuration (materialized; <= 20 edges)."""
    _check_budget(g, min(20, ENUM_MAX_EDGES))
    return _chunk_log_weights(g, params, 0, 1 << g.n_edges, ghost_p)


def probability_table(g: BoxGraph, params: ModelParams,
                      ghost_p: np.ndarray | None = None) -> np.ndarray:
    """Normalized probability of every configuration (<= 20 edges)."""
    logw = log_weights(g, params, ghost_p)
    m = np.max(logw)
    w = np.exp(logw - m)
    return w / w.sum()


def _bit_matrix(c0: int, c1: int, n_edges: int) -> np.ndarray:
    configs = np.arange(c0, c1, dtype=np.int64)
    return ((configs[:, None] >> np.arange(n_edges)) & 1).astype(np.uint8)


def _accumulate(g: BoxGraph, params: ModelParams, A: EventPredicate | None,
                ghost_p: np.ndarray | None = None):
    """Streaming enumeration: returns (logZ, moments dict).

    Moments are expectations of o_in, o_g, kappa and their products with
    1_A, all relative to the normalized measure.
    """
    _check_budget(g)
    n_edges = g.n_edges
    total = 1 << n_edges
    step = min(total, 1 << _CHUNK_BITS)
    # pass 1: global max log-weight
    m = -np.inf
    for c0 in range(0, total, step):
        logw = _chunk_log_weights(g, params, c0, c0 + step, ghost_p)
        m = max(m, float(np.max(logw)))
    if not np.isfinite(m):
        raise ValueError("all configurations have zero weight")
    keys = ("w", "o_in", "o_g", "kappa", "a", "a_o_in", "a_o_g", "a_kappa")
    acc = dict.fromkeys(keys, 0.0)
    n_in = g.n_inner
    inner_mask = (1 << n_in) - 1
    for c0 in range(0, total, step):
        c1 = c0 + step
        configs = np.arange(c0, c1, dtype=np.int64)
        logw = _chunk_log_weights(g, params, c0, c1, ghost_p)
        w = np.exp(logw - m)
        o_in = _popcount(configs & inner_mask)
        o_g = _popcount(configs >> n_in)
        kappa = kappa_table(g, params.bc, c0, c1)
        acc["w"] += float(w.sum())
        acc["o_in"] += float(w @ o_in)
        acc["o_g"] += float(w @ o_g)
        acc["kappa"] += float(w @ kappa)
        if A is not None:
            mask = A.evaluate(_bit_matrix(c0, c1, n_edges))
            wa = w * mask
            acc["a"] += float(wa.sum())
            acc["a_o_in"] += float(wa @ o_in)
            acc["a_o_g"] += float(wa @ o_g)
            acc["a_kappa"] += float(wa @ kappa)
    z = acc["w"]
    moments = {k: v / z for k, v in acc.items() if k != "w"}
    return m + math.log(z), moments


def partition_function(g: BoxGraph, params: ModelParams) -> tuple[float, float]:
    """Z and log Z by full enumeration.  Budget: 2^26 configurations."""
    log_z, _ = _accumulate(g, params, None)
    return math.exp(log_z), log_z


def event_probability(g: BoxGraph, params: ModelParams, A: EventPredicate,
                      ghost_p: np.ndarray | None = None) -> float:
    _, mom = _accumulate(g, params, A, ghost_p)
    return mom["a"]


def connection_probability(g: BoxGraph, params: ModelParams, x: int, y: int,
                           ghost_p: np.ndarray | None = None) -> float:
    """phi[x <-> y] (ghost paths count), vectorized.

    x and y are connected exactly when pre-identifying them does not change
    kappa, so two kappa tables decide the event for a whole chunk at once.
    """
    if x == y:
        return 1.0
    _check_budget(g)
    total = 1 << g.n_edges
    step = min(total, 1 << _CHUNK_BITS)
    ea, eb = _edge_nodes(g)
    pa, pb = _pre_unions(g, params.bc)
    pa_j = np.concatenate([pa, np.asarray([x], np.int32)])
    pb_j = np.concatenate([pb, np.asarray([y], np.int32)])
    m = -np.inf
    for c0 in range(0, total, step):
        logw = _chunk_log_weights(g, params, c0, c0 + step, ghost_p)
        m = max(m, float(np.max(logw)))
    num = den = 0.0
    for c0 in range(0, total, step):
        c1 = c0 + step
        logw = _chunk_log_weights(g, params, c0, c1, ghost_p)
        w = np.exp(logw - m)
        kap = kappa_table(g, params.bc, c0, c1)
        kap_j = np.empty(c1 - c0, np.int32)
        _kernels.kappa_range(c0, c1, g.n_vertices, ea, eb, pa_j, pb_j, kap_j)
        den += float(w.sum())
        num += float(w[kap_j == kap].sum())
    return num / den


# ---------------------------------------------------------------------------
# ghost law
# ---------------------------------------------------------------------------

def ghost_formula(n: int, q: float, p_h: float) -> float:
    """Conditional probability that a cluster of n vertices touches the ghost.

    Closed form (1-(1-p_h)^n) / ((q-1)(1-p_h)^n + 1); with p_h = 1-e^{-2h}
    this is the tanh_q(h n) law of the ghost lemma.
    """
    if n < 1:
        raise ValueError("cluster size must be >= 1")
    if q < 1:
        raise ValueError("q must be >= 1")
    if not 0.0 <= p_h <= 1.0:
        raise ValueError("p_h out of [0,1]")
    if p_h == 1.0:
        return 1.0
    t = math.exp(n * math.log1p(-p_h))  # (1-p_h)^n
    return (1.0 - t) / ((q - 1.0) * t + 1.0)


def ghost_conditional_oracle(g: BoxGraph, params: ModelParams,
                             omega_in: BondConfig | np.ndarray,
                             component_index: int) -> float:
    """P[chosen inner cluster touches ghost | omega_in] by ghost-sector sum.

    Inner clusters are the free-bc components of the open inner edges; the
    conditional measure keeps the graph's boundary condition in kappa.
    """
    if g.n_ghost > 20:
        raise EnumerationBudgetError(
            f"ghost sector of {g.n_ghost} edges exceeds the 2^20 budget")
    inner_bits = omega_in.inner if isinstance(omega_in, BondConfig) else \
        np.asarray(omega_in, np.uint8)[: g.n_inner]
    labels = _inner_cluster_labels(g, inner_bits)
    n_clusters = labels.max() + 1
    if not 0 <= component_index < n_clusters:
        raise ValueError(f"no inner cluster {component_index} "
                         f"(found {n_clusters})")
    member_mask = labels == component_index

    # ghost-sector enumeration: open inner edges become pre-unions, the
    # ghost edges are the only live bits
    n_g = g.n_ghost
    gcfgs = np.arange(1 << n_g, dtype=np.int64)
    gbits = ((gcfgs[:, None] >> np.arange(n_g)) & 1).astype(np.uint8)
    pa, pb = _pre_unions(g, params.bc)
    pa = list(pa) + [a for e, (a, b) in enumerate(g.inner_edges) if inner_bits[e]]
    pb = list(pb) + [b for e, (a, b) in enumerate(g.inner_edges) if inner_bits[e]]
    ea = np.arange(n_g, dtype=np.int32)
    eb = np.full(n_g, g.ghost, np.int32)
    kappa = np.empty(1 << n_g, np.int32)
    _kernels.kappa_range(0, 1 << n_g, g.n_vertices, ea, eb,
                         np.asarray(pa, np.int32), np.asarray(pb, np.int32), kappa)
    o_g = gbits.sum(axis=1)
    logw = xlogy(o_g, params.p_h) + xlogy(n_g - o_g, 1.0 - params.p_h)
    logw = logw + kappa * math.log(params.q)
    w = np.exp(logw - logw.max())
    touches = (gbits[:, member_mask].sum(axis=1) > 0)
    return float(w[touches].sum() / w.sum())


def _inner_cluster_labels(g: BoxGraph, inner_bits: np.ndarray) -> np.ndarray:
    """Free-bc component labels of lattice vertices under open inner edges."""
    from .lattice import UnionFind

    uf = UnionFind(g.n_lattice)
    for e, (a, b) in enumerate(g.inner_edges):
        if inner_bits[e]:
            uf.union(a, b)
    roots = [uf.find(v) for v in range(g.n_lattice)]
    order: dict[int, int] = {}
    for r in roots:
        if r not in order:
            order[r] = len(order)
    return np.fromiter((order[r] for r in roots), np.int64, g.n_lattice)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def deriv_event(g: BoxGraph, params: ModelParams, A: EventPredicate,
                which: str) -> float:
    """Exact derivative of phi[A] from the covariance identities.

    which="p": Cov[o(omega_in), 1_A] / (p(1-p));
    which="h": Cov[o(omega_g), 1_A] / (p_h(1-p_h)), the derivative in the
    ghost-edge parameter; which="q": Cov[1_A, kappa] / q.
    """
    if which not in ("p", "h", "q"):
        raise ValueError("which must be one of p, h, q")
    if which == "p" and not 0.0 < params.p < 1.0:
        raise DegenerateParameterError("p at 0 or 1: covariance formula divides by p(1-p)")
    if which == "h" and not 0.0 < params.p_h < 1.0:
        raise DegenerateParameterError("p_h at 0 or 1: covariance formula divides by p_h(1-p_h)")
    _, mom = _accumulate(g, params, A)
    pa = mom["a"]
    if which == "p":
        cov = mom["a_o_in"] - pa * mom["o_in"]
        return cov / (params.p * (1.0 - params.p))
    if which == "h":
        cov = mom["a_o_g"] - pa * mom["o_g"]
        return cov / (params.p_h * (1.0 - params.p_h))
    cov = mom["a_kappa"] - pa * mom["kappa"]
    return cov / params.q


def deriv_fd(g: BoxGraph, params: ModelParams, A: EventPredicate, which: str,
             step: float = 1e-5) -> float:
    """Centered finite difference of event_probability, the derivative oracle."""
    if which == "p":
        lo, hi = params.replace(p=params.p - step), params.replace(p=params.p + step)
    elif which == "h":
        lo, hi = params.replace(p_h=params.p_h - step), params.replace(p_h=params.p_h + step)
    elif which == "q":
        lo, hi = params.replace(q=params.q - step), params.replace(q=params.q + step)
    else:
        raise ValueError("which must be one of p, h, q")
    return (event_probability(g, hi, A) - event_probability(g, lo, A)) / (2 * step)


def eval_gamma(p: float, q: float, p_h: float, d: int) -> tuple[float, float]:
    """The explicit comparison functions gamma' and gamma.

    gamma' = (p_h - ptilde_h) ptilde_h (1-p)^{2d-1} with
    ptilde_h = p_h/(p_h + q(1-p_h)); gamma = 2d p_h(1-p_h)/(gamma' p(1-p)).
    For every increasing A, deriv_p(A) <= gamma * deriv_h(A).
    """
    if not 0.0 < p < 1.0 or not 0.0 < p_h < 1.0:
        raise DegenerateParameterError("gamma needs p, p_h strictly inside (0,1)")
    if q <= 1.0:
        raise DegenerateParameterError("gamma needs q > 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    pt = p_h / (p_h + q * (1.0 - p_h))
    gamma_prime = (p_h - pt) * pt * (1.0 - p) ** (2 * d - 1)
    gamma = 2 * d * p_h * (1.0 - p_h) / (gamma_prime * p * (1.0 - p))
    return gamma_prime, gamma


# ---------------------------------------------------------------------------
# monotone events and stochastic domination
# ---------------------------------------------------------------------------

_UPSET_CACHE: dict[int, np.ndarray] = {}


def upset_masks(n: int, allow_six: bool = False) -> np.ndarray:
    """All up-sets of {0,1}^n as uint64 membership masks (bit c = config c).

    n <= 5 gives 7581 monotone events; n = 6 (7828354) sits behind the
    opt-in flag because it is two thousand times more work downstream.
    """
    cap = 6 if allow_six else UPSET_MAX_EDGES
    if n > cap:
        raise EnumerationBudgetError(
            f"up-set enumeration over {n} edges exceeds the budget of {cap}")
    if n in _UPSET_CACHE:
        return _UPSET_CACHE[n]
    n_cfg = 1 << n
    order = sorted(range(n_cfg), key=lambda c: (-bin(c).count("1"), c))
    supersets = [[c | (1 << j) for j in range(n) if not (c >> j) & 1]
                 for c in range(n_cfg)]
    assign = np.zeros(n_cfg, np.uint8)
    out: list[int] = []

    def rec(i: int, mask: int) -> None:
        if i == n_cfg:
            out.append(mask)
            return
        c = order[i]
        assign[c] = 0
        rec(i + 1, mask)
        for s in supersets[c]:
            if not assign[s]:
                return
        assign[c] = 1
        rec(i + 1, mask | (1 << c))
        assign[c] = 0

    rec(0, 0)
    masks = np.asarray(out, np.uint64)
    if n <= UPSET_MAX_EDGES:
        _UPSET_CACHE[n] = masks
    return masks


def upset_probabilities(masks: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """phi[A] for every up-set mask given per-configuration probabilities."""
    n_cfg = len(probs)
    out = np.empty(len(masks), float)
    step = 1 << 17
    shifts = np.arange(n_cfg, dtype=np.uint64)
    for i0 in range(0, len(masks), step):
        chunk = masks[i0:i0 + step]
        bits = ((chunk[:, None] >> shifts) & np.uint64(1)).astype(np.float64)
        out[i0:i0 + step] = bits @ probs
    return out


def minimal_elements(mask: int, n: int) -> list[int]:
    """Minimal configurations of an up-set, for witness reporting."""
    members = [c for c in range(1 << n) if (mask >> c) & 1]
    mins = []
    for c in members:
        if not any(m != c and (m & c) == m for m in members):
            mins.append(c)
    return mins


def sector_probabilities(g: BoxGraph, params: ModelParams, sector: str) -> np.ndarray:
    """Configuration probabilities, marginalized to the chosen edge sector."""
    probs = probability_table(g, params)
    if sector == "all":
        return probs
    if sector != "inner":
        raise ValueError("sector must be 'all' or 'inner'")
    n_in = g.n_inner
    inner_of = np.arange(1 << g.n_edges, dtype=np.int64) & ((1 << n_in) - 1)
    return np.bincount(inner_of, weights=probs, minlength=1 << n_in)


def domination_bruteforce(g: BoxGraph, params1: ModelParams, params2: ModelParams,
                          sector: str = "all", tol: float = 1e-12,
                          allow_six: bool = False):
    """Is phi_1 stochastically dominated by phi_2 on the chosen sector?

    Enumerates every up-set of the sector's edges and compares the two
    probabilities exactly.  Returns (True, None) or (False, witness) where
    the witness carries the first violating monotone event.
    """
    n = g.n_edges if sector == "all" else g.n_inner
    masks = upset_masks(n, allow_six=allow_six)
    p1 = upset_probabilities(masks, sector_probabilities(g, params1, sector))
    p2 = upset_probabilities(masks, sector_probabilities(g, params2, sector))
    bad = np.nonzero(p1 > p2 + tol)[0]
    if len(bad) == 0:
        return True, None
    i = int(bad[0])
    witness = {
        "upset_mask": int(masks[i]),
        "minimal_elements": minimal_elements(int(masks[i]), n),
        "phi1": float(p1[i]),
        "phi2": float(p2[i]),
        "sector": sector,
    }
    return False, witness


def verify_monotone(g: BoxGraph, A: EventPredicate) -> bool:
    """Check a monotone flag on all comparable pairs differing in one edge."""
    n = g.n_edges
    vals = A.evaluate(_bit_matrix(0, 1 << n, n))
    for c in range(1 << n):
        if not vals[c]:
            continue
        for j in range(n):
            if not (c >> j) & 1:
                if not vals[c | (1 << j)]:
                    return False
    return True


# ---------------------------------------------------------------------------
# Potts two-point cross-check
# ---------------------------------------------------------------------------

def potts_two_point(g: BoxGraph, bc: BoundaryCondition, beta: float, h: float,
                    q: int, x: int, y: int, tol: float = 1e-10) -> float:
    """<sigma_x . sigma_y> by spin enumeration, checked against phi[x<->y].

    Spins live on the simplex (inner product 1 when equal, -1/(q-1)
    otherwise).  Wired couples each edge leaving the box to the
    distinguished spin; on the bond side that is one extra parallel ghost
    edge of strength p per missing neighbour, folded into the per-vertex
    ghost parameter 1-(1-p_h)(1-p)^{n_v}.
    """
    if q != int(q) or q < 2:
        raise ValueError("Potts enumeration needs integer q >= 2")
    q = int(q)
    if beta < 0 or h < 0:
        raise ValueError("beta and h must be >= 0")
    if bc.kind == "explicit":
        raise ValueError("potts_two_point supports free and wired only")
    n = g.n_lattice
    if q ** n > 4_000_000:
        raise EnumerationBudgetError(f"{q}^{n} spin configurations exceed the budget")

    idx = np.arange(q ** n, dtype=np.int64)
    spins = np.empty((q ** n, n), np.int8)
    for j in range(n):
        spins[:, j] = (idx // q ** j) % q
    off = -1.0 / (q - 1)

    energy = np.zeros(q ** n, float)
    for a, b in g.inner_edges:
        eq = spins[:, a] == spins[:, b]
        energy += np.where(eq, 1.0, off)
    field = np.zeros(q ** n, float)
    for v in range(n):
        field += np.where(spins[:, v] == 0, 1.0, off)
    logw = beta * energy + h * field
    if bc.kind == "wired":
        bdry = np.zeros(q ** n, float)
        for v in g.boundary:
            m = g.missing_neighbors(v)
            if m:
                bdry += m * np.where(spins[:, v] == 0, 1.0, off)
        logw += beta * bdry
    w = np.exp(logw - logw.max())
    sxy = np.where(spins[:, x] == spins[:, y], 1.0, off)
    corr = float((w * sxy).sum() / w.sum())

    p = -math.expm1(-q / (q - 1) * beta)
    p_h = -math.expm1(-q / (q - 1) * h)
    ghost_p = None
    if bc.kind == "wired":
        ghost_p = np.full(g.n_ghost, p_h)
        for v in g.boundary:
            m = g.missing_neighbors(v)
            ghost_p[v] = 1.0 - (1.0 - p_h) * (1.0 - p) ** m
    params = ModelParams(p=p, q=float(q), p_h=p_h, bc=FREE)
    prob = connection_probability(g, params, x, y, ghost_p=ghost_p)
    if abs(corr - prob) > tol:
        raise ExactnessError(
            f"Potts correlation {corr!r} vs cluster connection {prob!r} "
            f"differ by {abs(corr - prob):.3e} (> {tol})")
    return corr


def connected_event(g: BoxGraph, x: int, y: int,
                    bc: BoundaryCondition = FREE) -> EventPredicate:
    """{x <-> y} through open edges, ghost paths included."""

    def fn(bits: np.ndarray) -> bool:
        lab = components(g, BondConfig(bits, g.n_inner), bc)
        return bool(lab.label[x] == lab.label[y])

    return EventPredicate(name=f"connected({x},{y})", fn=fn, monotone=True)


# ---------------------------------------------------------------------------
# exact sequential sampler
# ---------------------------------------------------------------------------

def _restricted_logz(g: BoxGraph, params: ModelParams, fixed_mask: int,
                     fixed_bits: int) -> float:
    """log of the partition sum over configurations agreeing with the prefix.

    Fixed open edges turn into pre-unions so the kernel only enumerates the
    free edges.
    """
    n_in = g.n_inner
    free = [e for e in range(g.n_edges) if not (fixed_mask >> e) & 1]
    n_free = len(free)
    pa, pb = _pre_unions(g, params.bc)
    pa, pb = list(pa), list(pb)
    fo_in = fo_g = 0
    for e in range(g.n_edges):
        if not (fixed_mask >> e) & 1 or not (fixed_bits >> e) & 1:
            continue
        a, b = g.edge_endpoints(e)
        pa.append(a)
        pb.append(b)
        if e < n_in:
            fo_in += 1
        else:
            fo_g += 1
    ea = np.asarray([g.edge_endpoints(e)[0] for e in free], np.int32)
    eb = np.asarray([g.edge_endpoints(e)[1] for e in free], np.int32)
    kappa = np.empty(1 << n_free, np.int32)
    _kernels.kappa_range(0, 1 << n_free, g.n_vertices, ea, eb,
                         np.asarray(pa, np.int32), np.asarray(pb, np.int32), kappa)
    sub = np.arange(1 << n_free, dtype=np.int64)
    in_mask = sum(1 << j for j, e in enumerate(free) if e < n_in)
    g_mask = sum(1 << j for j, e in enumerate(free) if e >= n_in)
    o_in = fo_in + _popcount(sub & in_mask)
    o_g = fo_g + _popcount(sub & g_mask)
    logw = (xlogy(o_in, params.p) + xlogy(n_in - o_in, 1.0 - params.p)
            + xlogy(o_g, params.p_h) + xlogy(g.n_ghost - o_g, 1.0 - params.p_h)
            + kappa * math.log(params.q))
    m = float(np.max(logw))
    if not np.isfinite(m):
        return -np.inf
    return m + math.log(np.exp(logw - m).sum())


def sample_chain(g: BoxGraph, params: ModelParams,
                 rng: np.random.Generator) -> BondConfig:
    """Exact sample by sequential inverse-CDF over edges in index order.

    Conditional probabilities come from enumerating the remaining edges, so
    the output is exactly distributed; budget 2^{n_edges} work.
    """
    _check_budget(g, 20)
    bits = np.zeros(g.n_edges, np.uint8)
    fixed_mask = 0
    fixed_bits = 0
    for e in range(g.n_edges):
        mask = fixed_mask | (1 << e)
        lz1 = _restricted_logz(g, params, mask, fixed_bits | (1 << e))
        lz0 = _restricted_logz(g, params, mask, fixed_bits)
        if lz1 == -np.inf:
            p_open = 0.0
        elif lz0 == -np.inf:
            p_open = 1.0
        else:
            m = max(lz0, lz1)
            p_open = math.exp(lz1 - m) / (math.exp(lz0 - m) + math.exp(lz1 - m))
        if rng.random() < p_open:
            bits[e] = 1
            fixed_bits |= 1 << e
        fixed_mask = mask
    return BondConfig(bits, g.n_inner)
