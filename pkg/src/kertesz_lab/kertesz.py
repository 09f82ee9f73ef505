"""Kertesz-line estimation: finite-size crossing proxies, bisection in h,
and scan tables that carry the rigorous bounds alongside the estimates.

Finite-size criterion (a choice, labeled as such in output): the
transition proxy is crossing probability 1/2 at the largest box.  In d=2
the box is the (L+1) x L rectangle crossed left-to-right by open inner
edges, so Bernoulli p=1/2 sits exactly at probability 1/2; in d >= 3 the
event is 0 <-> boundary of Lambda_L.  Ghost connections never count as
percolation.  Bisection decisions demand a 2-stderr margin and double the
sample budget when undecided, up to the caller's cap; they halt with a
widened h_err rather than guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds, mc
from .exact import ModelParams
from .lattice import WIRED, BoxGraph, build_box, rect_graph


class MonotonicityError(RuntimeError):
    """Measured proxies contradict monotonicity in h beyond 3 stderr."""


def proxy_graph(d: int, L: int) -> BoxGraph:
    if d == 2:
        return rect_graph(L + 1, L)
    return build_box(d, L)


def proxy_spec(g: BoxGraph, d: int) -> mc.ReachSpec:
    if d == 2:
        return mc.crossing_spec_rect(g)
    return mc.origin_to_boundary_spec(g)


def _ph(h: float, q: float) -> float:
    if q == 1.0:
        return 0.0  # no field/edge translation at q=1; ghost stays closed
    return bounds.ph_of_h(h, q)


def percolation_proxy(p: float, q: float, h: float, L_list, n_samples: int,
                      rng, *, d: int = 2, burn_in: int = 256, thin: int = 1,
                      seed: int | None = None) -> dict[int, mc.Estimate]:
    """Per-size estimates of the inner-edge crossing event, wired bc."""
    if seed is None:
        seed = int(mc.rng_from(rng).integers(0, 2 ** 62))
    out: dict[int, mc.Estimate] = {}
    for i, L in enumerate(L_list):
        g = proxy_graph(d, L)
        params = ModelParams(p=p, q=q, p_h=_ph(h, q), bc=WIRED)
        sampler = mc.ReachSampler(g, params, proxy_spec(g, d), seed + i)
        if q != 1.0:
            sampler.burn_in(burn_in)
        out[L] = mc.batch_means(sampler.sample(n_samples, thin=thin))
    return out


@dataclass
class ProbeRecord:
    h: float
    mean: float
    stderr: float
    n: int
    decision: int  # +1 supercritical, -1 subcritical, 0 undecided


@dataclass
class HcEstimate:
    h_est: float
    h_err: float
    status: str  # OK | ZERO | INFINITE
    L_used: int
    probes: list[ProbeRecord] = field(default_factory=list)
    note: str = ""
    ceiling_undecided: bool = False  # crossing pinned at 1/2 at h_max

    @property
    def finite_positive(self) -> bool:
        return self.status == "OK" and 0.0 < self.h_est < math.inf


class _Prober:
    """Adaptive crossing-vs-1/2 decisions on one persistent chain."""

    def __init__(self, g: BoxGraph, q: float, p: float, spec, seed: int,
                 burn_in: int, thin: int, n_cap: int):
        self.q = q
        self.p = p
        self.burn = burn_in
        self.thin = thin
        self.n_cap = n_cap
        self.sampler = mc.ReachSampler(
            g, ModelParams(p=p, q=q, p_h=0.0, bc=WIRED), spec, seed)
        self.records: list[ProbeRecord] = []

    def probe(self, h: float) -> ProbeRecord:
        self.sampler.set_params(
            ModelParams(p=self.p, q=self.q, p_h=_ph(h, self.q), bc=WIRED))
        if self.q != 1.0:
            self.sampler.burn_in(self.burn)
        n = max(100, self.n_cap // 32)
        xs = np.zeros(0, np.uint8)
        while True:
            xs = np.concatenate([xs, self.sampler.sample(n - len(xs),
                                                         thin=self.thin)])
            est = mc.batch_means(xs)
            margin = 2.0 * est.stderr
            if est.mean - 0.5 > margin:
                dec = 1
            elif 0.5 - est.mean > margin:
                dec = -1
            elif n >= self.n_cap:
                dec = 0
            else:
                n = min(2 * n, self.n_cap)
                continue
            rec = ProbeRecord(h, est.mean, est.stderr, est.n_samples, dec)
            self.records.append(rec)
            return rec

    def check_monotone(self) -> None:
        rs = sorted(self.records, key=lambda r: r.h)
        for i, a in enumerate(rs):
            for b in rs[i + 1:]:
                gap = a.mean - b.mean
                if gap > 3.0 * math.sqrt(a.stderr ** 2 + b.stderr ** 2) and gap > 1e-12:
                    raise MonotonicityError(
                        f"crossing({a.h:.6g}) = {a.mean:.4f}±{a.stderr:.4f} exceeds "
                        f"crossing({b.h:.6g}) = {b.mean:.4f}±{b.stderr:.4f} "
                        f"beyond 3 stderr; dynamics or seed handling is broken")


def estimate_hc(p: float, q: float, d: int, L_list, tol_h: float,
                n_samples: int, rng, *, p_b: float = 0.5, burn_in: int = 256,
                thin: int = 1, seed: int | None = None,
                h_max: float | None = None) -> HcEstimate:
    """Bisection for the field h at which the largest-box crossing hits 1/2.

    Returns h_est = 0 when already supercritical at zero field, the +inf
    sentinel when still subcritical (or undecidable) at the ceiling h_max,
    and otherwise bisects until hi - lo <= tol_h.  An undecidable midpoint
    halts the bisection with a widened error bar.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0,1)")
    if seed is None:
        seed = int(mc.rng_from(rng).integers(0, 2 ** 62))
    L = max(L_list)
    g = proxy_graph(d, L)
    prober = _Prober(g, q, p, proxy_spec(g, d), seed, burn_in, thin, n_samples)

    rec0 = prober.probe(0.0)
    if rec0.decision == 1:
        prober.check_monotone()
        return HcEstimate(0.0, 0.0, "ZERO", L, prober.records,
                          "supercritical at zero field")
    if rec0.decision == 0:
        prober.check_monotone()
        return HcEstimate(0.0, tol_h, "OK", L, prober.records,
                          "zero-field probe undecided: h_c below resolution")

    if h_max is None:
        ub = bounds.upper_bound_bernoulli(p, q, p_b)
        h_max = 2.0 * ub if math.isfinite(ub) else 10.0
    rec_top = prober.probe(h_max)
    if rec_top.decision <= 0:
        prober.check_monotone()
        note = ("subcritical at ceiling" if rec_top.decision == -1 else
                "undecidable at ceiling (crossing pinned near 1/2)")
        return HcEstimate(math.inf, 0.0, "INFINITE", L, prober.records, note,
                          ceiling_undecided=rec_top.decision == 0)

    lo, hi = 0.0, h_max
    halted = False
    while hi - lo > tol_h:
        mid = 0.5 * (lo + hi)
        rec = prober.probe(mid)
        if rec.decision == 1:
            hi = mid
        elif rec.decision == -1:
            lo = mid
        else:
            halted = True
            break
    prober.check_monotone()
    h_est = 0.5 * (lo + hi)
    h_err = max(tol_h, (hi - lo) if halted else 0.5 * (hi - lo))
    note = "halted at statistical margin" if halted else ""
    return HcEstimate(h_est, h_err, "OK", L, prober.records, note)


# ---------------------------------------------------------------------------
# scan assembly
# ---------------------------------------------------------------------------

@dataclass
class ScanSettings:
    L_list: tuple[int, ...] = (12, 24, 48)
    tol_h: float = 0.02
    n_samples: int = 10_000
    seed: int = 1
    p_b: float = 0.5
    burn_in: int = 256
    thin: int = 1
    delta_override: float | None = None
    pipeline_k_max: int = 8
    pipeline_n_samples: int = 2000
    threads: int = 1


@dataclass
class ScanRow:
    p: float
    q: float
    d: int
    h_lower: float | None
    h_upper_rc: float
    h_upper_bern: float
    h_est: float
    h_err: float
    sizes_used: tuple[int, ...]
    n_samples: int
    seed: int
    flag: str
    note: str = ""

    def csv_cells(self) -> list[str]:
        def num(x):
            if x is None:
                return "unresolved"
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            if x == 0:
                return "0"
            return f"{x:.12g}"

        return [num(self.p), num(self.q), str(self.d), num(self.h_lower),
                num(self.h_upper_rc), num(self.h_upper_bern), num(self.h_est),
                num(self.h_err), str(max(self.sizes_used)),
                str(self.n_samples), str(self.seed), self.flag]


SCAN_CSV_HEADER = ("p,q,d,h_lower,h_upper_rc,h_upper_bern,h_est,h_err,"
                   "L_max,n_samples,seed,flag")


def measure_decay(p: float, q: float, d: int, target: float, k_max: int,
                  n_samples: int, seed: int, burn_in: int = 256) -> list[tuple[int, mc.Estimate]]:
    """Annulus crossings at h=0 for k = 1, 2, ... until below target or k_max."""
    out = []
    for k in range(1, k_max + 1):
        est = mc.annulus_crossing(p, q, k, n_samples, None, d=d,
                                  burn_in=burn_in, seed=seed + k)
        out.append((k, est))
        if est.mean + 2.0 * est.stderr < target:
            break
    return out


def scan_row(p: float, q: float, d: int, s: ScanSettings, seed: int) -> ScanRow:
    h_upper_rc = bounds.upper_bound_kertesz(p, q) if d == 2 else math.inf
    h_upper_bern = bounds.upper_bound_bernoulli(p, q, s.p_b)

    _, delta_true = bounds.mu_delta(d)
    delta = delta_true if s.delta_override is None else s.delta_override
    decay = measure_decay(p, q, d, delta / 2.0, s.pipeline_k_max,
                          s.pipeline_n_samples, seed + 500_000,
                          burn_in=s.burn_in)
    pipe = bounds.lower_bound_pipeline(p, q, d, decay,
                                       delta_override=s.delta_override)
    h_lower = pipe.h_threshold if pipe.resolved else None

    hc = estimate_hc(p, q, d, s.L_list, s.tol_h, s.n_samples, None,
                     p_b=s.p_b, burn_in=s.burn_in, thin=s.thin, seed=seed)

    flag = "OK"
    notes = [hc.note] if hc.note else []
    if hc.ceiling_undecided:
        flag = "UNRESOLVED"  # never went supercritical, never decided sub
    elif hc.finite_positive:
        upper = min(h_upper_rc, h_upper_bern)
        if (h_lower is not None and h_lower > hc.h_est + 2.0 * hc.h_err):
            flag = "FAIL_SANDWICH"
            notes.append("h_lower exceeds h_est + 2 h_err")
        if hc.h_est - 2.0 * hc.h_err > upper:
            flag = "FAIL_SANDWICH"
            notes.append("h_est - 2 h_err exceeds the upper bounds")
    return ScanRow(p=p, q=q, d=d, h_lower=h_lower, h_upper_rc=h_upper_rc,
                   h_upper_bern=h_upper_bern, h_est=hc.h_est, h_err=hc.h_err,
                   sizes_used=tuple(s.L_list), n_samples=s.n_samples,
                   seed=seed, flag=flag, note="; ".join(notes))


def scan(p_grid, q: float, d: int, settings: ScanSettings | None = None):
    """Rows in grid order plus a log of soft-check messages.

    Rows are independent jobs (threads from settings); assembly is by row
    index so output is deterministic for a fixed seed and grid.
    """
    s = settings or ScanSettings()
    ps = list(p_grid)
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p_grid must be strictly ascending")
    seeds = [s.seed + 1_000_003 * i for i in range(len(ps))]
    jobs = list(zip(ps, seeds))
    if s.threads > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=s.threads) as ex:
            rows = list(ex.map(lambda a: scan_row(a[0], q, d, s, a[1]), jobs))
    else:
        rows = [scan_row(pp, q, d, s, sd) for pp, sd in jobs]

    log: list[str] = []
    for a, b in zip(rows, rows[1:]):
        if math.isinf(a.h_est) or math.isinf(b.h_est):
            continue
        slack = 2.0 * (a.h_err + b.h_err)
        if b.h_est > a.h_est + slack:
            log.append(
                f"monotonicity violation: h_est({b.p}) = {b.h_est:.6g} exceeds "
                f"h_est({a.p}) = {a.h_est:.6g} beyond 2(err_i+err_j) = {slack:.3g}")
    return rows, log
