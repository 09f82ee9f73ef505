"""Closed-form machinery: tanh_q, critical points, Kertesz-line bounds,
coarse-graining constants, lattice animals, thinning, polymer weights and
the cluster-expansion threshold h0.

Sign conventions.  The field enters edge weights through
p_h = 1 - exp(-(q/(q-1)) h); its inverse is h = -((q-1)/q) log(1-p_h).
The polymer surface term uses beta(p) = -((q-1)/q) log(1-p), the invertible
form of the same map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np


class BoundsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# tanh_q and parameter translations
# ---------------------------------------------------------------------------

def tanh_q(x: float, q: float) -> float:
    """(1 - e^{-2x}) / ((q-1) e^{-2x} + 1); strictly increasing onto [0,1)."""
    if x < 0:
        raise BoundsError("tanh_q needs x >= 0")
    if q < 1:
        raise BoundsError("tanh_q needs q >= 1")
    t = math.exp(-2.0 * x)
    return -math.expm1(-2.0 * x) / ((q - 1.0) * t + 1.0)


def arctanh_q(y: float, q: float) -> float:
    """Inverse of tanh_q: (1/2) log(((q-1) y + 1)/(1 - y)) on [0, 1)."""
    if not 0.0 <= y < 1.0:
        raise BoundsError("arctanh_q needs y in [0,1)")
    if q < 1:
        raise BoundsError("arctanh_q needs q >= 1")
    return 0.5 * (math.log1p((q - 1.0) * y) - math.log1p(-y))


def ph_of_h(h: float, q: float) -> float:
    """Edge-weight translation p_h = 1 - exp(-(q/(q-1)) h)."""
    if q <= 1:
        raise BoundsError("no field/edge translation at q = 1")
    if h < 0:
        raise BoundsError("h must be >= 0")
    return -math.expm1(-q / (q - 1.0) * h)


def h_of_ph(p_h: float, q: float) -> float:
    if q <= 1:
        raise BoundsError("no field/edge translation at q = 1")
    if not 0.0 <= p_h < 1.0:
        raise BoundsError("p_h must be in [0,1)")
    return -(q - 1.0) / q * math.log1p(-p_h)


def ph_of_h_ising_convention(h: float) -> float:
    """p_h = 1 - e^{-2h}: the convention under which the conditional law of a
    cluster touching the ghost is exactly tanh_q(h |C|) for every q."""
    if h < 0:
        raise BoundsError("h must be >= 0")
    return -math.expm1(-2.0 * h)


# ---------------------------------------------------------------------------
# planar critical point
# ---------------------------------------------------------------------------

def pc_planar(q: float) -> float:
    """d=2 self-dual point sqrt(q)/(1+sqrt(q))."""
    if q < 1:
        raise BoundsError("q must be >= 1")
    s = math.sqrt(q)
    return s / (1.0 + s)


def qc_planar(p: float) -> float:
    """Inverse of pc_planar: (p/(1-p))^2."""
    if not 0.0 < p < 1.0:
        raise BoundsError("p must be in (0,1)")
    return (p / (1.0 - p)) ** 2


# ---------------------------------------------------------------------------
# upper bounds on the Kertesz line
# ---------------------------------------------------------------------------

def upper_bound_kertesz(p: float, q: float,
                        qc_of_p: Callable[[float], float] = qc_planar) -> float:
    """arctanh_q( sqrt( (1/(q-1)) (q/q_c(p,0) - 1) ) ).

    Radicand >= 1 means p <= p_B: the bound is +inf.  Radicand < 0 means
    p >= p_c(q,0): the line has already hit zero.
    """
    qc = qc_of_p(p)
    if qc < 1:
        # below the Bernoulli threshold even at q=1
        return math.inf
    if q == 1.0:
        return 0.0 if qc > 1.0 else math.inf
    radicand = (q / qc - 1.0) / (q - 1.0)
    if radicand >= 1.0:
        return math.inf
    if radicand <= 0.0:
        return 0.0
    return arctanh_q(math.sqrt(radicand), q)


def upper_bound_bernoulli(p: float, q: float, p_b: float) -> float:
    """arctanh_q( sqrt( (1/(q-1)) (q r_B (1-p)/p - 1) ) ), r_B = p_B/(1-p_B)."""
    if not 0.0 < p < 1.0:
        raise BoundsError("p must be in (0,1)")
    if not 0.0 < p_b < 1.0:
        raise BoundsError("p_B must be in (0,1)")
    r_b = p_b / (1.0 - p_b)
    if q == 1.0:
        return 0.0 if r_b * (1.0 - p) / p < 1.0 else math.inf
    radicand = (q * r_b * (1.0 - p) / p - 1.0) / (q - 1.0)
    if radicand >= 1.0:
        return math.inf
    if radicand <= 0.0:
        return 0.0
    return arctanh_q(math.sqrt(radicand), q)


# ---------------------------------------------------------------------------
# coarse-graining constants and the lower-bound pipeline
# ---------------------------------------------------------------------------

def mu_fraction(d: int) -> Fraction:
    if d < 1:
        raise BoundsError("d must be >= 1")
    return Fraction((2 * d + 1) ** (2 * d + 1), (2 * d) ** (2 * d))


def mu_delta(d: int) -> tuple[float, float]:
    """mu = (2d+1)^{2d+1}/(2d)^{2d} and delta = mu^{-4^d} (log-space)."""
    frac = mu_fraction(d)
    mu = frac.numerator / frac.denominator
    log_mu = math.log(frac.numerator) - math.log(frac.denominator)
    delta = math.exp(-(4 ** d) * log_mu)
    return mu, delta


def lambda_size(k: int, d: int) -> int:
    """Lattice-vertex count of Lambda_k (the ghost is not counted)."""
    return (2 * k + 1) ** d


@dataclass
class PipelineResult:
    resolved: bool
    k_star: int | None
    ph_threshold: float | None
    h_threshold: float | None
    delta: float
    extrapolated: bool
    note: str = ""


def _crossing_value(entry) -> tuple[float, float]:
    """(mean, stderr) from a measured crossing; bare floats have stderr 0."""
    if hasattr(entry, "mean"):
        return float(entry.mean), float(entry.stderr)
    return float(entry), 0.0


def lower_bound_pipeline(p: float, q: float, d: int,
                         decay_source: Sequence[tuple[int, object]],
                         delta_override: float | None = None) -> PipelineResult:
    """No-percolation field threshold from measured annulus crossings.

    k_star is the smallest k whose crossing (upper confidence bound,
    mean + 2 stderr) sits below delta/2; if no measured k qualifies, the
    exponential decay rate of the means is fitted and k_star extrapolated,
    flagged as such.  Then
        ph = 1 - (1 - delta/2)^{1/(6 k_star + 1)^d},
        h  = -((q-1)/q) log(1 - ph).
    The true delta = mu^{-4^d} is astronomically small, hence the override
    hook for demonstrations.
    """
    _, delta_true = mu_delta(d)
    delta = delta_true if delta_override is None else float(delta_override)
    if not 0.0 < delta < 1.0:
        raise BoundsError("delta must be in (0,1)")
    target = delta / 2.0
    pts = sorted(((int(k), *_crossing_value(est)) for k, est in decay_source))
    if not pts:
        raise BoundsError("pipeline needs at least one measured crossing")
    k_star = None
    extrapolated = False
    for k, mean, se in pts:
        if mean + 2.0 * se < target:
            k_star = k
            break
    if k_star is None:
        pos = [(k, m) for k, m, _ in pts if m > 0.0]
        if len(pos) < 2:
            return PipelineResult(False, None, None, None, delta, False,
                                  "no decay data below target and too few "
                                  "positive points to extrapolate")
        ks = np.array([k for k, _ in pos], float)
        logs = np.log([m for _, m in pos])
        slope, intercept = np.polyfit(ks, logs, 1)
        if slope >= 0.0:
            return PipelineResult(False, None, None, None, delta, False,
                                  "no decay detected (nonnegative slope)")
        k_star = math.ceil((math.log(target) - intercept) / slope)
        k_star = max(k_star, int(pts[-1][0]) + 1)
        extrapolated = True
    size = lambda_size(3 * k_star, d)
    log1m = math.log1p(-target)
    ph = -math.expm1(log1m / size)
    if q > 1.0:
        h = h_of_ph(ph, q)
    else:
        h = math.nan  # q=1: no field translation
    return PipelineResult(True, k_star, ph, h, delta, extrapolated,
                          "extrapolated" if extrapolated else "")


# ---------------------------------------------------------------------------
# separation (thinning) and lattice animals
# ---------------------------------------------------------------------------

def thin_set(points: Iterable[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """A 4-separated subset of S with at least |S|/4^d points.

    Scans all 4^d residue classes mod 4 and returns a largest one (ties
    broken by residue order), so members pairwise differ by >= 4 in L1.
    """
    pts = sorted(set(tuple(int(c) for c in p) for p in points))
    if not pts:
        raise BoundsError("S must be nonempty")
    classes: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for pt in pts:
        classes.setdefault(tuple(c % 4 for c in pt), []).append(pt)
    best = max(sorted(classes), key=lambda r: len(classes[r]))
    return classes[best]


def fixed_polyominoes(n: int) -> list[frozenset[tuple[int, int]]]:
    """All edge-connected n-cell subsets of Z^2 up to translation.

    Canonical form translates the minimum cell to the origin; growth search
    with dedup (n stays small enough that this beats cleverness).
    """
    if n < 1:
        raise BoundsError("n must be >= 1")
    shapes = {frozenset({(0, 0)})}
    for _ in range(n - 1):
        nxt: set[frozenset[tuple[int, int]]] = set()
        for s in shapes:
            for (x, y) in s:
                for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                    if nb in s:
                        continue
                    t = s | {nb}
                    mx = min(c[0] for c in t)
                    my = min(c[1] for c in t)
                    nxt.add(frozenset((c[0] - mx, c[1] - my) for c in t))
        shapes = nxt
    return sorted(shapes, key=sorted)


def lattice_animals(n: int, d: int = 2) -> int:
    """Number of connected n-subsets of Z^2 containing the origin.

    Each translation class of size n has exactly n translates containing 0,
    so the count is n * #fixed polyominoes; tests re-derive it by direct
    enumeration.  Always <= mu^n.
    """
    if d != 2:
        raise BoundsError("only d=2 is enumerated")
    if n > 10:
        raise BoundsError("enumeration budget is n <= 10")
    count = n * len(fixed_polyominoes(n))
    mu, _ = mu_delta(d)
    if count > mu ** n:
        raise AssertionError("Kesten bound violated; enumeration is broken")
    return count


def animals_containing_origin(n: int) -> list[frozenset[tuple[int, int]]]:
    """Direct enumeration of connected n-sets containing 0 (test oracle)."""
    if n > 7:
        raise BoundsError("direct enumeration budget is n <= 7")
    shapes = {frozenset({(0, 0)})}
    for _ in range(n - 1):
        nxt: set[frozenset[tuple[int, int]]] = set()
        for s in shapes:
            for (x, y) in s:
                for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                    if nb not in s:
                        nxt.add(s | {nb})
        shapes = nxt
    return sorted(shapes, key=sorted)


# ---------------------------------------------------------------------------
# cluster expansion: weights, threshold, convergence
# ---------------------------------------------------------------------------

def beta_of_p(p: float, q: float) -> float:
    """Surface coupling beta(p) = -((q-1)/q) log(1-p) (invertible form)."""
    if not 0.0 <= p < 1.0:
        raise BoundsError("p must be in [0,1)")
    if q <= 1:
        raise BoundsError("beta(p) needs q > 1")
    return -(q - 1.0) / q * math.log1p(-p)


def polymer_weight(cells: Iterable[tuple[int, ...]], p: float, q: float,
                   h: float, d: int = 2) -> float:
    """w(S) = [sum_omega p^o (1-p)^c (q-1)^kappa] e^{-(1+1/(q-1))(h|V| + beta(p)|dS|)}.

    The inner sum runs over bond configurations on the induced edges of S
    with kappa counting components of (V_S, open); |dS| is the number of
    Z^d edges leaving S.
    """
    if q <= 1:
        raise BoundsError("polymer weights need q > 1")
    if h < 0:
        raise BoundsError("h must be >= 0")
    pts = sorted(set(tuple(int(c) for c in s) for s in cells))
    if not pts:
        raise BoundsError("S must be nonempty")
    dim = len(pts[0])
    if d != dim:
        raise BoundsError(f"cells have dimension {dim}, expected {d}")
    index = {pt: i for i, pt in enumerate(pts)}
    edges = []
    boundary_edges = 0
    for pt in pts:
        for axis in range(dim):
            for sign in (-1, 1):
                nb = list(pt)
                nb[axis] += sign
                j = index.get(tuple(nb))
                if j is None:
                    boundary_edges += 1
                elif sign == 1:
                    edges.append((index[pt], j))
    if len(edges) > 20:
        raise BoundsError("polymer enumeration budget is 20 edges")
    if not _connected(len(pts), edges):
        raise BoundsError("polymer S must be connected")
    inner = _ising_like_sum(len(pts), edges, p, q)
    expo = (1.0 + 1.0 / (q - 1.0)) * (h * len(pts) + beta_of_p(p, q) * boundary_edges)
    return inner * math.exp(-expo)


def _connected(n: int, edges: list[tuple[int, int]]) -> bool:
    if n == 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def _ising_like_sum(n: int, edges: list[tuple[int, int]], p: float, q: float) -> float:
    """sum over omega of p^o (1-p)^c (q-1)^kappa on (V, edges)."""
    from . import _kernels

    m = len(edges)
    if m == 0:
        return (q - 1.0) ** n
    ea = np.asarray([e[0] for e in edges], np.int32)
    eb = np.asarray([e[1] for e in edges], np.int32)
    kappa = np.empty(1 << m, np.int32)
    _kernels.kappa_range(0, 1 << m, n, ea, eb,
                         np.zeros(0, np.int32), np.zeros(0, np.int32), kappa)
    cfgs = np.arange(1 << m, dtype=np.int64)
    o = np.zeros(1 << m, np.int64)
    for j in range(m):
        o += (cfgs >> j) & 1
    w = np.power(p, o) * np.power(1.0 - p, m - o) * np.power(q - 1.0, kappa)
    return float(w.sum())


def h0(q: float, d: int) -> float:
    """Cluster-expansion convergence threshold for the pressure.

    q >= 2 branch uses log 2 + log(q-1); q in (1,2) uses log q.  Both give
    log 2 at q = 2.
    """
    if q <= 1:
        raise BoundsError("h0 needs q > 1")
    if d < 1:
        raise BoundsError("d needs to be >= 1")
    log_mu = (2 * d + 1) * math.log(2 * d + 1) - 2 * d * math.log(2 * d)
    pref = 1.0 / (1.0 + 1.0 / (q - 1.0))
    if q >= 2:
        return pref * (math.log(2.0) + math.log(q - 1.0) + 2 * d + log_mu)
    return pref * (math.log(q) + 2 * d + log_mu)


def expansion_converges(q: float, d: int, h: float) -> tuple[bool, float]:
    """Does the polymer-weight geometric bound sum below 1 at (q, d, h)?

    Returns (converged, per-term ratio).  For q >= 2 the ratio is
    (q-1) e^{2d} mu e^{-(1+1/(q-1)) h} and the sum bound is ratio/(1-ratio);
    for q in (1,2) the single factor (q-1) sits outside the geometric sum.
    The threshold is exactly h0(q,d) and the comparison is strict, so
    h = h0 reports False.
    """
    if q <= 1:
        raise BoundsError("expansion needs q > 1")
    mu, _ = mu_delta(d)
    c = 1.0 + 1.0 / (q - 1.0)
    ratio = math.exp(2 * d) * mu * math.exp(-c * h)
    if q >= 2:
        ratio *= (q - 1.0)
    # sum < 1 is algebraically h > h0; compare in that form so the
    # boundary is exact
    return h > h0(q, d), ratio


# ---------------------------------------------------------------------------
# conjectural correlation-length exponent
# ---------------------------------------------------------------------------

def nu_conjectured(q: float) -> float:
    """nu(q) = 2 arccos(-sqrt(q)/2) / (6 arccos(-sqrt(q)/2) - 3 pi), q in [1,4]."""
    if not 1.0 <= q <= 4.0:
        raise BoundsError("nu(q) is stated for q in [1,4]")
    a = math.acos(-math.sqrt(q) / 2.0)
    return 2.0 * a / (6.0 * a - 3.0 * math.pi)


# ---------------------------------------------------------------------------
# explicit domination condition
# ---------------------------------------------------------------------------

def check_eksplicit_condition(p1: float, q1: float, h1: float,
                              p2: float, q2: float, h2: float,
                              n_max: int = 64):
    """Sufficient condition for phi_2 <= phi_1 on inner-edge increasing events.

    Checks p2 <= p1 and, for all cluster sizes n, m in {1..n_max} plus the
    n, m -> infinity corner (tanh_q -> 1),
      (r2/q2)((q2-1) tanh_{q2}(n h2) tanh_{q2}(m h2) + 1)
        <= (r1/q1)((q1-1) tanh_{q1}(n h1) tanh_{q1}(m h1) + 1).
    Returns (True, None) or (False, first violating (n, m)); the infinity
    corner reports as (0, 0).
    """
    for (pp, qq, hh) in ((p1, q1, h1), (p2, q2, h2)):
        if not 0.0 <= pp < 1.0:
            raise BoundsError("p must be in [0,1)")
        if qq < 1.0:
            raise BoundsError("q must be >= 1")
        if hh < 0.0:
            raise BoundsError("h must be >= 0")
    if n_max < 1:
        raise BoundsError("n_max must be >= 1")
    if p2 > p1:
        return False, (1, 1)
    r1 = p1 / (1.0 - p1)
    r2 = p2 / (1.0 - p2)

    def lhs(tn, tm):
        return r2 / q2 * ((q2 - 1.0) * tn * tm + 1.0)

    def rhs(tn, tm):
        return r1 / q1 * ((q1 - 1.0) * tn * tm + 1.0)

    t1 = [tanh_q(n * h1, q1) for n in range(1, n_max + 1)] + [1.0]
    t2 = [tanh_q(n * h2, q2) for n in range(1, n_max + 1)] + [1.0]
    for i, a2 in enumerate(t2):
        for j, b2 in enumerate(t2):
            if lhs(a2, b2) > rhs(t1[i], t1[j]) + 1e-15:
                n = 0 if i == n_max else i + 1
                m = 0 if j == n_max else j + 1
                return False, (n, m)
    return True, None


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class BoundsReport:
    """Every closed-form bound value at one parameter point."""

    p: float
    q: float
    d: int
    h_upper_rc: float
    h_upper_bern: float
    mu: float
    delta: float
    h0: float | None
    k_star: int | None = None
    ph_lower: float | None = None
    h_lower: float | None = None
    extrapolated: bool = False
    delta_used: float | None = None

    def __post_init__(self):
        if not self.mu > 1:
            raise BoundsError("mu must exceed 1")
        if not 0.0 < self.delta < 1.0:
            raise BoundsError("delta must lie in (0,1)")
        if (self.h_lower is not None and math.isfinite(self.h_lower)
                and math.isfinite(self.h_upper_rc)
                and self.h_lower > self.h_upper_rc):
            raise BoundsError(
                f"bracket inconsistency: h_lower {self.h_lower} exceeds "
                f"h_upper_rc {self.h_upper_rc}")

    def as_dict(self) -> dict:
        def enc(v):
            if v is None:
                return None
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return {
            "p": self.p, "q": self.q, "d": self.d,
            "h_upper_rc": enc(self.h_upper_rc),
            "h_upper_bern": enc(self.h_upper_bern),
            "mu": self.mu, "delta": self.delta, "h0": enc(self.h0),
            "k_star": self.k_star, "ph_lower": enc(self.ph_lower),
            "h_lower": enc(self.h_lower),
            "extrapolated": self.extrapolated,
            "delta_used": self.delta_used,
        }


def make_report(p: float, q: float, d: int, p_b: float = 0.5,
                pipeline: PipelineResult | None = None) -> BoundsReport:
    mu, delta = mu_delta(d)
    rep = dict(
        p=p, q=q, d=d,
        h_upper_rc=upper_bound_kertesz(p, q) if d == 2 else math.inf,
        h_upper_bern=upper_bound_bernoulli(p, q, p_b),
        mu=mu, delta=delta,
        h0=h0(q, d) if q > 1 else None,
    )
    if pipeline is not None and pipeline.resolved:
        rep.update(k_star=pipeline.k_star, ph_lower=pipeline.ph_threshold,
                   h_lower=pipeline.h_threshold,
                   extrapolated=pipeline.extrapolated,
                   delta_used=pipeline.delta)
    return BoundsReport(**rep)
