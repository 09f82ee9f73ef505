import math

import numpy as np
import pytest

from kertesz_lab import bounds, kertesz, lattice, mc
from kertesz_lab.kertesz import (MonotonicityError, ProbeRecord, ScanSettings,
                                 estimate_hc, percolation_proxy, scan)


def test_proxy_graph_shapes():
    g = kertesz.proxy_graph(2, 4)
    xs = [p[0] for p in g.vertices]
    ys = [p[1] for p in g.vertices]
    assert max(xs) - min(xs) + 1 == 5 and max(ys) - min(ys) + 1 == 4
    g3 = kertesz.proxy_graph(3, 1)
    assert g3.n_lattice == 27


def test_crossing_self_dual_point_exact_small():
    # q=1, p=1/2 crossing of the (L+1) x L rectangle is exactly 1/2
    for L in (1, 2, 3):
        g = kertesz.proxy_graph(2, L)
        spec = kertesz.proxy_spec(g, 2)
        ctx = mc._Ctx(g, lattice.FREE)
        cfg = np.zeros(g.n_edges, np.uint8)
        crossed = 0
        for c in range(1 << g.n_inner):
            for i in range(g.n_inner):
                cfg[i] = (c >> i) & 1
            crossed += ctx.reach(cfg, spec.src, spec.dst_flag)
        assert crossed * 2 == 1 << g.n_inner


def test_proxy_extreme_p():
    ests = percolation_proxy(1.0, 2.0, 0.3, [3, 5], 100, 0, burn_in=16)
    assert all(e.mean == 1.0 for e in ests.values())
    ests = percolation_proxy(0.0, 2.0, 2.0, [3, 5], 100, 0, burn_in=16)
    assert all(e.mean == 0.0 for e in ests.values())


def test_proxy_bernoulli_self_duality_mc():
    ests = percolation_proxy(0.5, 1.0, 0.0, [8], 8000, 0, seed=13)
    est = ests[8]
    assert abs(est.mean - 0.5) <= 3 * est.stderr


def test_proxy_monotone_in_h():
    means = []
    for h in (0.0, 0.4, 1.2):
        est = percolation_proxy(0.45, 2.0, h, [8], 1500, 0, seed=14,
                                burn_in=128)[8]
        means.append(est)
    for a, b in zip(means, means[1:]):
        assert b.mean >= a.mean - 3 * math.sqrt(a.stderr ** 2 + b.stderr ** 2)


def test_estimate_hc_zero_when_supercritical():
    res = estimate_hc(0.70, 2.0, 2, [10], tol_h=0.05, n_samples=2000, rng=None,
                      seed=15, burn_in=128)
    assert res.status == "ZERO" and res.h_est == 0.0


def test_estimate_hc_infinite_below_bernoulli_threshold():
    res = estimate_hc(0.40, 2.0, 2, [10], tol_h=0.05, n_samples=2000, rng=None,
                      seed=16, burn_in=128)
    assert res.status == "INFINITE" and math.isinf(res.h_est)


def test_estimate_hc_finite_between():
    res = estimate_hc(0.55, 2.0, 2, [10], tol_h=0.1, n_samples=2500, rng=None,
                      seed=17, burn_in=128)
    assert res.finite_positive
    ub = bounds.upper_bound_kertesz(0.55, 2.0)
    assert res.h_est - 2 * res.h_err <= ub
    assert res.probes[0].h == 0.0


def test_estimate_hc_rejects_bad_p():
    with pytest.raises(ValueError):
        estimate_hc(0.0, 2.0, 2, [8], 0.1, 1000, None)


def test_monotonicity_check_raises_on_contradiction():
    g = kertesz.proxy_graph(2, 4)
    prober = kertesz._Prober(g, 2.0, 0.5, kertesz.proxy_spec(g, 2), 1, 8, 1, 100)
    prober.records = [ProbeRecord(0.1, 0.9, 0.001, 1000, 1),
                      ProbeRecord(0.5, 0.2, 0.001, 1000, -1)]
    with pytest.raises(MonotonicityError):
        prober.check_monotone()


def test_scan_rows_and_determinism():
    settings = ScanSettings(L_list=(8,), tol_h=0.1, n_samples=1500, seed=5,
                            burn_in=96, delta_override=0.01,
                            pipeline_k_max=3, pipeline_n_samples=400)
    grid = [0.52, 0.55]
    rows1, log1 = scan(grid, 2.0, 2, settings)
    rows2, _ = scan(grid, 2.0, 2, settings)
    assert [r.csv_cells() for r in rows1] == [r.csv_cells() for r in rows2]
    assert [r.p for r in rows1] == grid
    for r in rows1:
        assert r.flag in ("OK", "FAIL_SANDWICH", "UNRESOLVED")
        assert r.h_upper_rc == bounds.upper_bound_kertesz(r.p, 2.0)
    cells = rows1[0].csv_cells()
    assert len(cells) == len(kertesz.SCAN_CSV_HEADER.split(","))


def test_scan_threaded_matches_serial():
    settings = ScanSettings(L_list=(6,), tol_h=0.2, n_samples=800, seed=9,
                            burn_in=64, delta_override=0.01,
                            pipeline_k_max=2, pipeline_n_samples=300)
    grid = [0.52, 0.56]
    rows_serial, _ = scan(grid, 2.0, 2, settings)
    settings_t = ScanSettings(**{**settings.__dict__, "threads": 2})
    rows_threaded, _ = scan(grid, 2.0, 2, settings_t)
    assert [r.csv_cells() for r in rows_serial] == \
        [r.csv_cells() for r in rows_threaded]


def test_scan_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        scan([0.55, 0.52], 2.0, 2, ScanSettings(L_list=(6,), n_samples=100))


def test_scan_csv_sentinels():
    row = kertesz.ScanRow(p=0.4, q=2.0, d=2, h_lower=None, h_upper_rc=math.inf,
                          h_upper_bern=math.inf, h_est=math.inf, h_err=0.0,
                          sizes_used=(8,), n_samples=100, seed=1, flag="OK")
    cells = row.csv_cells()
    assert cells[3] == "unresolved"
    assert cells[4] == "inf" and cells[6] == "inf"
    assert cells[7] == "0"


def test_estimate_hc_undecidable_ceiling_at_bernoulli_threshold():
    # p = p_B: for large h the inner marginal is exactly Bernoulli(1/2) and
    # the rectangle crossing sits at exactly 1/2 - the ceiling probe can
    # never decide; the estimator must report the inf sentinel with the
    # undecided marker, and scans flag such rows UNRESOLVED.
    res = estimate_hc(0.5, 2.0, 2, [6], tol_h=0.2, n_samples=800, rng=None,
                      seed=3, burn_in=64)
    assert res.status == "INFINITE" and res.ceiling_undecided
    settings = ScanSettings(L_list=(6,), tol_h=0.2, n_samples=800, seed=3,
                            burn_in=64, delta_override=0.01,
                            pipeline_k_max=2, pipeline_n_samples=300)
    rows, _ = scan([0.5], 2.0, 2, settings)
    assert rows[0].flag == "UNRESOLVED"


def test_percolation_proxy_d3_smoke():
    high = percolation_proxy(0.9, 1.0, 0.0, [2], 400, None, d=3, seed=31)[2]
    low = percolation_proxy(0.05, 1.0, 0.0, [2], 400, None, d=3, seed=32)[2]
    assert high.mean > 0.9
    assert low.mean < 0.1
    # q > 1 exercises the chain path on the 3d box
    mid = percolation_proxy(0.35, 2.0, 0.3, [2], 400, None, d=3, seed=33,
                            burn_in=64)[2]
    assert 0.0 <= mid.mean <= 1.0
