"""Monte Carlo engine: heat-bath dynamics, monotone coupling from the past,
Edwards-Sokal coloring, and estimators.

A sweep is one heat-bath pass over all edges in fixed index order.  Each
edge update uses the shared-uniform rule (see _kernels), which makes two
chains driven by the same uniforms a monotone coupling; CFTP runs the two
extremal chains from the past until they coalesce and its output is an
exact stationary sample.

Randomness: seedable 64-bit streams (numpy PCG64).  Replica i of a run
with master seed s uses seed s + i; per-sweep uniforms are drawn
sequentially from the replica stream.  This layout is stable across
versions and documented in the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .lattice import (WIRED, BondConfig, BoundaryCondition, BoxGraph,
                      build_box, components, connected_off_edge)
from .exact import EventPredicate, ModelParams

SWEEP_CHUNK = 256  # uniform rows generated per kernel call
CFTP_T_MAX = 2 ** 20
CFTP_MEMORY_LIMIT = 512 * 2 ** 20  # bytes of uniforms per pass chunk guard


class CftpFailure(RuntimeError):
    """Coalescence not reached by T_max; no biased sample is ever returned."""


class OrderingViolation(AssertionError):
    """The monotone coupling lost top >= bot; indicates a bug, not noise."""


def rng_from(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.PCG64(seed_or_rng))


def open_probabilities(params: ModelParams) -> tuple[float, float, float, float]:
    """(p_in, lo_in, p_h, lo_h): heat-bath thresholds per sector.

    lo = p/(p + q(1-p)) is the open probability when the endpoints are
    disconnected off the edge; p when they are connected.
    """
    p, q, ph = params.p, params.q, params.p_h
    lo_in = p if q == 1.0 else p / (p + q * (1.0 - p))
    lo_h = ph if q == 1.0 else ph / (ph + q * (1.0 - ph))
    return p, lo_in, ph, lo_h


# ---------------------------------------------------------------------------
# chain state and single steps
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """A heat-bath chain: configuration + sweep counter + its rng."""

    config: BondConfig
    sweep_count: int
    rng: np.random.Generator

    @classmethod
    def start(cls, g: BoxGraph, seed_or_rng, init: str = "closed") -> "ChainState":
        cfg = BondConfig.ones(g) if init == "open" else BondConfig.zeros(g)
        return cls(config=cfg, sweep_count=0, rng=rng_from(seed_or_rng))


def heat_bath_step(state: ChainState, g: BoxGraph, params: ModelParams,
                   e: int) -> ChainState:
    """Resample one edge from its exact conditional; other edges unchanged."""
    p_in, lo_in, p_h, lo_h = open_probabilities(params)
    hi, lo = (p_in, lo_in) if e < g.n_inner else (p_h, lo_h)
    u = state.rng.random()
    cfg = state.config.copy()
    if u < lo:
        cfg.bits[e] = 1
    elif u >= hi:
        cfg.bits[e] = 0
    else:
        cfg.bits[e] = 1 if connected_off_edge(g, cfg, params.bc, e) else 0
    return ChainState(config=cfg, sweep_count=state.sweep_count, rng=state.rng)


class _Ctx:
    """Kernel scratch bound to one (graph, boundary condition)."""

    def __init__(self, g: BoxGraph, bc: BoundaryCondition):
        self.g = g
        self.arr = g.arrays(bc)
        n_v = max(1, self.arr.n_v)
        self.mark = np.full(n_v, -1, np.int64)
        self.bmark = np.full(max(1, self.arr.n_blocks), -1, np.int64)
        self.queue = np.zeros((2, n_v), np.int32)
        self.tails = np.zeros(2, np.int64)
        self.gt = np.zeros(2, np.uint8)
        self.tok = 2

    def sweeps(self, cfg: np.ndarray, u_rows: np.ndarray, params: ModelParams) -> None:
        a = self.arr
        p_in, lo_in, p_h, lo_h = open_probabilities(params)
        self.tok = _kernels.run_sweeps(
            cfg, u_rows, a.n_v, a.n_inner, a.edge_u, a.edge_v,
            a.adj_start, a.adj_vert, a.adj_edge,
            a.block_id, a.block_start, a.block_members, a.ghost_block,
            p_in, lo_in, p_h, lo_h,
            self.mark, self.bmark, self.queue, self.tails, self.gt,
            self.tok) + 2

    def cftp_pass(self, top: np.ndarray, bot: np.ndarray, u_rows: np.ndarray,
                  params: ModelParams) -> None:
        a = self.arr
        p_in, lo_in, p_h, lo_h = open_probabilities(params)
        tok, flag = _kernels.cftp_pass(
            top, bot, u_rows, a.n_v, a.n_inner, a.edge_u, a.edge_v,
            a.adj_start, a.adj_vert, a.adj_edge,
            a.block_id, a.block_start, a.block_members, a.ghost_block,
            p_in, lo_in, p_h, lo_h,
            self.mark, self.bmark, self.queue, self.tails, self.gt, self.tok)
        self.tok = tok + 2
        if flag == -1:
            raise OrderingViolation(
                "heat-bath coupling violated top >= bot during a CFTP pass")

    def reach(self, cfg: np.ndarray, src: np.ndarray, dst_flag: np.ndarray) -> bool:
        a = self.arr
        hit = _kernels.reach_query(cfg, src, dst_flag, a.n_inner,
                                   a.adj_start, a.adj_vert, a.adj_edge,
                                   self.mark, self.queue, self.tok)
        self.tok += 2
        return bool(hit)


# ---------------------------------------------------------------------------
# coupling from the past
# ---------------------------------------------------------------------------

def cftp_sample(g: BoxGraph, params: ModelParams, rng,
                t_max: int = CFTP_T_MAX) -> BondConfig:
    """Exact stationary sample via monotone CFTP with sweep updates.

    Twin chains start all-open/all-closed at time -T and share per-sweep
    uniforms; T doubles (2, 4, 8, ...) reusing the randomness of more
    recent times, per the standard protocol.  Raises CftpFailure beyond
    t_max, never returns a biased sample.
    """
    rng = rng_from(rng)
    ctx = _Ctx(g, params.bc)
    seeds: list[int] = []  # seeds[i] drives the sweep at time -(i+1)
    t = 2
    while True:
        while len(seeds) < t:
            seeds.append(int(rng.integers(0, 2 ** 62)))
        top = np.ones(g.n_edges, np.uint8)
        bot = np.zeros(g.n_edges, np.uint8)
        chunk = max(1, min(4096, CFTP_MEMORY_LIMIT // (8 * g.n_edges)))
        i = t - 1
        while i >= 0:
            lo = max(-1, i - chunk)
            rows = np.empty((i - lo, g.n_edges), np.float64)
            for r, j in enumerate(range(i, lo, -1)):
                rows[r] = np.random.Generator(np.random.PCG64(seeds[j])).random(g.n_edges)
            ctx.cftp_pass(top, bot, rows, params)
            i = lo
        if np.array_equal(top, bot):
            return BondConfig(top.copy(), g.n_inner)
        if t >= t_max:
            raise CftpFailure(
                f"no coalescence from T={t} sweeps (t_max={t_max})")
        t *= 2


# ---------------------------------------------------------------------------
# Edwards-Sokal coloring
# ---------------------------------------------------------------------------

def edwards_sokal_color(g: BoxGraph, omega: BondConfig, bc: BoundaryCondition,
                        q: int, rng) -> np.ndarray:
    """Color clusters with q spins; spin 0 is the distinguished one.

    Clusters touching the ghost get spin 0, and under wired bc so does the
    boundary class; every other cluster draws an independent uniform spin.
    Returns one spin per lattice vertex.
    """
    if q != int(q) or q < 2:
        raise ValueError("Edwards-Sokal coloring needs integer q >= 2")
    q = int(q)
    rng = rng_from(rng)
    lab = components(g, omega, bc)
    spin_of = rng.integers(0, q, size=lab.kappa)
    spin_of[lab.label[g.ghost]] = 0
    if bc.kind == "wired" and g.boundary:
        spin_of[lab.label[g.boundary[0]]] = 0
    return spin_of[lab.label[: g.n_lattice]].astype(np.int64)


def simplex_product(s1, s2, q: int):
    """Inner product of simplex spins: 1 when equal, -1/(q-1) otherwise."""
    return np.where(np.asarray(s1) == np.asarray(s2), 1.0, -1.0 / (q - 1))


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

@dataclass
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    autocorrelation_time: float

    def __post_init__(self):
        if self.stderr < 0 or self.n_samples < 1:
            raise ValueError("invalid estimate")

    def as_dict(self, **meta) -> dict:
        d = {"mean": self.mean, "stderr": self.stderr, "n": self.n_samples,
             "tau": self.autocorrelation_time}
        d.update(meta)
        return d


def batch_means(samples: np.ndarray, n_batches: int = 16) -> Estimate:
    """Mean/stderr via batch means; tau is the batch-means estimate
    m Var(batch)/2 Var(x) (1/2 for uncorrelated samples)."""
    x = np.asarray(samples, float)
    n = len(x)
    if n < 1:
        raise ValueError("need at least one sample")
    b = min(n_batches, n)
    m = n // b
    used = x[: b * m].reshape(b, m)
    bm = used.mean(axis=1)
    mean = float(x.mean())
    if b < 2:
        return Estimate(mean, 0.0, n, 0.0)
    var_b = float(bm.var(ddof=1))
    stderr = math.sqrt(var_b / b)
    var_x = float(x.var(ddof=1))
    tau = 0.0 if var_x == 0.0 else m * var_b / (2.0 * var_x)
    return Estimate(mean, stderr, n, tau)


def _merge_replicas(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(list(parts))


def _run_replica_samples(g: BoxGraph, params: ModelParams, A: EventPredicate,
                         n: int, seed: int, burn_in: int, thin: int,
                         sampler: str, t_max: int) -> np.ndarray:
    rng = rng_from(seed)
    out = np.empty(n, np.float64)
    if sampler == "cftp":
        for i in range(n):
            cfg = cftp_sample(g, params, rng, t_max=t_max)
            out[i] = 1.0 if A.fn(cfg.bits) else 0.0
        return out
    if sampler != "heat_bath":
        raise ValueError("sampler must be 'cftp' or 'heat_bath'")
    ctx = _Ctx(g, params.bc)
    cfg = np.zeros(g.n_edges, np.uint8)
    done = 0
    while done < burn_in:
        step = min(SWEEP_CHUNK, burn_in - done)
        ctx.sweeps(cfg, rng.random((step, g.n_edges)), params)
        done += step
    for i in range(n):
        ctx.sweeps(cfg, rng.random((thin, g.n_edges)), params)
        out[i] = 1.0 if A.fn(cfg) else 0.0
    return out


def estimate_event(g: BoxGraph, params: ModelParams, A: EventPredicate,
                   n_samples: int, sampler: str = "heat_bath", *,
                   burn_in: int = 128, thin: int = 1, seed: int = 0,
                   n_replicas: int = 1, threads: int = 1,
                   t_max: int = CFTP_T_MAX) -> Estimate:
    """Estimate phi[A] with batch-means errors.

    Replica r uses seed seed + r; replica outputs are merged in slot order,
    so the result is deterministic for fixed (seed, n_replicas) no matter
    how the replicas are scheduled.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    shares = [n_samples // n_replicas] * n_replicas
    for i in range(n_samples % n_replicas):
        shares[i] += 1
    jobs = [(g, params, A, shares[r], seed + r, burn_in, thin, sampler, t_max)
            for r in range(n_replicas) if shares[r] > 0]
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _run_replica_samples(*a), jobs))
    else:
        parts = [_run_replica_samples(*a) for a in jobs]
    return batch_means(_merge_replicas(parts))


# ---------------------------------------------------------------------------
# crossing/reach estimators (the hot path)
# ---------------------------------------------------------------------------

@dataclass
class ReachSpec:
    """An inner-edge reach event: src vertex set to dst-flagged vertices."""

    src: np.ndarray       # int32 vertex indices
    dst_flag: np.ndarray  # uint8 per lattice vertex


def crossing_spec_rect(g: BoxGraph) -> ReachSpec:
    """Left-to-right crossing of a rectangle graph by open inner edges."""
    xs = [p[0] for p in g.vertices]
    x0, x1 = min(xs), max(xs)
    src = np.asarray([i for i, p in enumerate(g.vertices) if p[0] == x0], np.int32)
    dst = np.zeros(g.n_lattice, np.uint8)
    for i, p in enumerate(g.vertices):
        if p[0] == x1:
            dst[i] = 1
    return ReachSpec(src=src, dst_flag=dst)


def annulus_spec(g: BoxGraph, k: int) -> ReachSpec:
    """Lambda_k <-> boundary of the ambient box (must be Lambda_{3k})."""
    src = np.asarray([i for i, p in enumerate(g.vertices)
                      if max(abs(c) for c in p) <= k], np.int32)
    dst = np.zeros(g.n_lattice, np.uint8)
    for v in g.boundary:
        dst[v] = 1
    return ReachSpec(src=src, dst_flag=dst)


def origin_to_boundary_spec(g: BoxGraph) -> ReachSpec:
    src = np.asarray([g.vertex_index(tuple([0] * g.d))], np.int32)
    dst = np.zeros(g.n_lattice, np.uint8)
    for v in g.boundary:
        dst[v] = 1
    return ReachSpec(src=src, dst_flag=dst)


class ReachSampler:
    """A persistent heat-bath chain recording one reach event.

    Keeps its configuration between calls so bisection in h can warm-start;
    switch parameters with set_params (followed by a re-burn-in from the
    caller).  q=1 bypasses the chain entirely and samples the product
    measure directly.
    """

    def __init__(self, g: BoxGraph, params: ModelParams, spec: ReachSpec,
                 seed: int):
        self.g = g
        self.params = params
        self.spec = spec
        self.rng = rng_from(seed)
        self.ctx = _Ctx(g, params.bc)
        self.cfg = np.zeros(g.n_edges, np.uint8)
        self.sweep_count = 0

    def set_params(self, params: ModelParams) -> None:
        if params.bc != self.params.bc:
            raise ValueError("boundary condition is fixed per sampler")
        self.params = params

    def burn_in(self, n_sweeps: int) -> None:
        done = 0
        while done < n_sweeps:
            step = min(SWEEP_CHUNK, n_sweeps - done)
            self.ctx.sweeps(self.cfg, self.rng.random((step, self.g.n_edges)),
                            self.params)
            done += step
        self.sweep_count += n_sweeps

    def sample(self, n: int, thin: int = 1) -> np.ndarray:
        if self.params.q == 1.0:
            return self._sample_bernoulli(n)
        out = np.empty(n, np.uint8)
        for i in range(n):
            self.ctx.sweeps(self.cfg, self.rng.random((thin, self.g.n_edges)),
                            self.params)
            out[i] = 1 if self.ctx.reach(self.cfg, self.spec.src,
                                         self.spec.dst_flag) else 0
        self.sweep_count += n * thin
        return out

    def _sample_bernoulli(self, n: int) -> np.ndarray:
        a = self.ctx.arr
        out = np.empty(n, np.uint8)
        step = max(1, min(n, 4096))
        i = 0
        while i < n:
            m = min(step, n - i)
            u = self.rng.random((m, self.g.n_inner))
            self.ctx.tok = _kernels.bernoulli_reach(
                u, self.params.p, self.spec.src, self.spec.dst_flag,
                a.n_inner, a.adj_start, a.adj_vert, a.adj_edge,
                self.ctx.mark, self.ctx.queue, self.ctx.tok, out[i:i + m]) + 2
            i += m
        return out


def annulus_crossing(p: float, q: float, k: int, n_samples: int, rng, *,
                     d: int = 2, burn_in: int = 256, thin: int = 1,
                     seed: int | None = None) -> Estimate:
    """phi^1_{p,q,0,Lambda_{3k}}[Lambda_k <-> boundary Lambda_{3k}].

    Wired boundary, no ghost field; the event uses open inner-edge paths
    only.
    """
    g = build_box(d, 3 * k)
    params = ModelParams(p=p, q=q, p_h=0.0, bc=WIRED)
    if seed is None:
        seed = int(rng_from(rng).integers(0, 2 ** 62))
    sampler = ReachSampler(g, params, annulus_spec(g, k), seed)
    if q != 1.0:
        sampler.burn_in(burn_in)
    return batch_means(sampler.sample(n_samples, thin=thin))


# ---------------------------------------------------------------------------
# correlation length
# ---------------------------------------------------------------------------

@dataclass
class CorrelationLengthFit:
    xi: float
    slope: float
    residual: float
    decays: bool


def correlation_length_fit(points: Sequence[tuple[float, float]]) -> CorrelationLengthFit:
    """Least-squares slope of log(prob) against n; xi = -1/slope.

    Rejects probabilities outside (0,1); a nonnegative slope reports
    decays=False ("no decay") with xi = inf.
    """
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    ns = np.asarray([float(n) for n, _ in points])
    ps = np.asarray([float(p) for _, p in points])
    if np.any(ps <= 0.0) or np.any(ps >= 1.0):
        raise ValueError("probabilities must be strictly inside (0,1)")
    logs = np.log(ps)
    slope, intercept = np.polyfit(ns, logs, 1)
    fitted = slope * ns + intercept
    residual = float(np.sqrt(np.mean((logs - fitted) ** 2)))
    if slope >= 0.0:
        return CorrelationLengthFit(math.inf, float(slope), residual, False)
    return CorrelationLengthFit(-1.0 / float(slope), float(slope), residual, True)
