"""Command-line front end.

Subcommands: bounds, curve, exact, sample, scan, animals, expansion,
selftest.  Every run embeds its merged configuration (config file <
flags) and seed in the output metadata; outputs carry no timestamps, so
identical (config, seed, threads=1) runs are byte-identical.  Floats are
printed with 12 significant digits.  h always means the field of the
edge-weight convention p_h = 1 - exp(-(q/(q-1)) h).

Exit codes: 0 success, 2 validation error, 3 unresolved numerical outcome
(CFTP timeout, unresolved pipeline, undecided scan row).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, bounds, catalog, exact, kertesz, lattice, mc

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_UNRESOLVED = 3


class ValidationFailure(Exception):
    pass


class UnresolvedOutcome(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.12g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf"
        if math.isnan(obj):
            return "nan"
        return float(f"{obj:.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _jsonable(float(obj))
    return obj


def read_config_file(path: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationFailure(f"{path}:{ln}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def merge_config(args: argparse.Namespace, argv: list[str]) -> dict:
    """Config file values fill flags the user did not give; flags win.

    The merged values are written back onto args so subcommands see them.
    """
    merged = vars(args).copy()
    path = merged.pop("config", None)
    if path:
        file_vals = read_config_file(path)
        given = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
                 for a in argv if a.startswith("--")}
        for key, raw in file_vals.items():
            dest = key.replace("-", "_")
            if dest not in merged:
                raise ValidationFailure(f"config key {key!r} is not a known flag")
            if dest in given:
                continue  # explicit flags override the file
            current = merged[dest]
            if isinstance(current, bool):
                merged[dest] = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                merged[dest] = int(raw)
            elif isinstance(current, float):
                merged[dest] = float(raw)
            else:
                merged[dest] = _auto_cast(raw)
            setattr(args, dest, merged[dest])
    merged.pop("func", None)
    return merged


def _auto_cast(raw: str):
    s = raw.strip()
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    return s


def require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise ValidationFailure(
            "missing required value(s): " + ", ".join(f"--{n}" for n in missing))


def emit(payload, cfg: dict, out_path: str | None, fmt: str,
         csv_rows: tuple[str, list[list[str]]] | None = None) -> None:
    """JSON payload or CSV rows, preceded by the config echo."""
    if fmt == "json":
        doc = {"tool": "kertesz-lab", "version": __version__,
               "config": _jsonable(cfg), "result": _jsonable(payload)}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        if csv_rows is None:
            raise ValidationFailure("this subcommand has no CSV form; use --format json")
        header, rows = csv_rows
        lines = [f"# kertesz-lab {__version__}"]
        for k in sorted(cfg):
            lines.append(f"# {k}={_fmt(cfg[k]) if cfg[k] is not None else ''}")
        lines.append(header)
        lines.extend(",".join(r) for r in rows)
        text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise ValidationFailure(f"bad numeric list {text!r}")


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise ValidationFailure(f"bad integer list {text!r}")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("KERTESZ_LAB_THREADS")
    return int(env) if env else 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bounds(args, cfg):
    require(args, "p", "q")
    pipeline = None
    if args.measure_decay:
        decay = kertesz.measure_decay(
            args.p, args.q, args.d,
            (args.delta_override if args.delta_override is not None
             else bounds.mu_delta(args.d)[1]) / 2.0,
            args.k_max, args.measure_decay, args.seed)
        pipeline = bounds.lower_bound_pipeline(
            args.p, args.q, args.d, decay, delta_override=args.delta_override)
    rep = bounds.make_report(args.p, args.q, args.d, p_b=args.p_b,
                             pipeline=pipeline)
    d = rep.as_dict()
    if args.check_dom:
        vals = _parse_float_list(args.check_dom)
        if len(vals) != 6:
            raise ValidationFailure("--check-dom needs p1,q1,h1,p2,q2,h2")
        ok, witness = bounds.check_eksplicit_condition(*vals, n_max=args.nmax)
        d["eksplicit_condition"] = {"holds": ok, "witness": witness}
    header = ",".join(d.keys())
    row = [[_fmt(v) if v is not None else "unresolved" for v in d.values()]]
    emit(d, cfg, args.out, args.format, (header, row))
    if pipeline is not None and not pipeline.resolved:
        raise UnresolvedOutcome(f"lower-bound pipeline unresolved: {pipeline.note}")


def cmd_curve(args, cfg):
    rows = []
    if args.kind == "upper":
        qs = _parse_float_list(args.q_list)
        ps = np.linspace(args.p_min, args.p_max, args.p_steps)
        for q in qs:
            for p in ps:
                rows.append([_fmt(q), _fmt(float(p)),
                             _fmt(bounds.upper_bound_kertesz(float(p), q)),
                             _fmt(bounds.upper_bound_bernoulli(float(p), q, args.p_b))])
        header = "q,p,h_upper_rc,h_upper_bern"
        payload = [dict(zip(header.split(","), r)) for r in rows]
    else:
        qs = np.linspace(args.q_min, args.q_max, args.q_steps)
        for q in qs:
            rows.append([_fmt(float(q)), _fmt(bounds.h0(float(q), args.d))])
        header = "q,h0"
        payload = [dict(zip(header.split(","), r)) for r in rows]
    emit(payload, cfg, args.out, args.format, (header, rows))


def cmd_exact(args, cfg):
    require(args, "p", "q")
    g = catalog.make_graph(args.graph)
    bc = lattice.WIRED if args.bc == "wired" else lattice.FREE
    params = exact.ModelParams(p=args.p, q=args.q, p_h=args.ph, bc=bc)
    ev = catalog.event_by_name(g, args.event)
    value = exact.event_probability(g, params, ev)
    z, log_z = exact.partition_function(g, params)
    record = {
        "graph": args.graph,
        "params": {"p": args.p, "q": args.q, "p_h": args.ph, "bc": args.bc},
        "event": args.event,
        "value": value,
        "partition_function": z,
        "log_partition_function": log_z,
    }
    header = "graph,p,q,p_h,bc,event,value"
    row = [[args.graph, _fmt(args.p), _fmt(args.q), _fmt(args.ph), args.bc,
            args.event, _fmt(value)]]
    emit(record, cfg, args.out, args.format, (header, row))


def _sample_graph(args) -> lattice.BoxGraph:
    if args.graph:
        return catalog.make_graph(args.graph)
    if args.rect:
        nx, ny = _parse_int_list(args.rect)
        return lattice.rect_graph(nx, ny)
    if args.box:
        d, k = _parse_int_list(args.box)
        return lattice.build_box(d, k)
    raise ValidationFailure("sample needs one of --graph, --box or --rect")


def cmd_sample(args, cfg):
    require(args, "p", "q")
    g = _sample_graph(args)
    bc = lattice.WIRED if args.bc == "wired" else lattice.FREE
    params = exact.ModelParams(p=args.p, q=args.q, p_h=args.ph, bc=bc)
    rng = mc.rng_from(args.seed)
    configs = []
    if args.sampler == "cftp":
        try:
            for _ in range(args.n):
                configs.append(mc.cftp_sample(g, params, rng, t_max=args.t_max))
        except mc.CftpFailure as exc:
            raise UnresolvedOutcome(str(exc))
    else:
        ctx = mc._Ctx(g, bc)
        cfg_arr = np.zeros(g.n_edges, np.uint8)
        ctx.sweeps(cfg_arr, rng.random((args.burn_in, g.n_edges)), params)
        for _ in range(args.n):
            ctx.sweeps(cfg_arr, rng.random((args.thin, g.n_edges)), params)
            configs.append(lattice.BondConfig(cfg_arr.copy(), g.n_inner))
    hexes = [c.to_hex() for c in configs]
    payload = {"graph": repr(g), "n_inner": g.n_inner, "n_edges": g.n_edges,
               "configs_hex": hexes}
    header = "index,config_hex"
    rows = [[str(i), h] for i, h in enumerate(hexes)]
    emit(payload, cfg, args.out, args.format, (header, rows))


def cmd_scan(args, cfg):
    require(args, "p-grid", "q")
    settings = kertesz.ScanSettings(
        L_list=tuple(_parse_int_list(args.sizes)),
        tol_h=args.tol_h, n_samples=args.samples, seed=args.seed,
        p_b=args.p_b, burn_in=args.burn_in, thin=args.thin,
        delta_override=args.delta_override,
        pipeline_k_max=args.k_max, pipeline_n_samples=args.pipeline_samples,
        threads=_threads(args))
    rows, log = kertesz.scan(_parse_float_list(args.p_grid), args.q, args.d,
                             settings)
    # the finite-size transition criterion is a choice, so label it
    cfg["finite_size_criterion"] = "crossing-probability-0.5-at-largest-box"
    for msg in log:
        print(f"# soft-check: {msg}", file=sys.stderr)
    payload = [dict(zip(kertesz.SCAN_CSV_HEADER.split(","), r.csv_cells()))
               for r in rows]
    emit(payload, cfg, args.out, args.format,
         (kertesz.SCAN_CSV_HEADER, [r.csv_cells() for r in rows]))
    if any(r.flag == "UNRESOLVED" for r in rows):
        raise UnresolvedOutcome("scan produced UNRESOLVED rows")


def cmd_animals(args, cfg):
    mu, _ = bounds.mu_delta(2)
    rows = []
    payload = []
    for n in range(1, args.n + 1):
        count = bounds.lattice_animals(n)
        bound = mu ** n
        rows.append([str(n), str(count), _fmt(bound),
                     "true" if count <= bound else "false"])
        payload.append({"n": n, "count": count, "mu_pow_n": bound,
                        "kesten_ok": count <= bound})
    emit(payload, cfg, args.out, args.format,
         ("n,count,mu_pow_n,kesten_ok", rows))


def cmd_expansion(args, cfg):
    require(args, "q", "h")
    converged, ratio = bounds.expansion_converges(args.q, args.d, args.h)
    payload = {"q": args.q, "d": args.d, "h": args.h,
               "h0": bounds.h0(args.q, args.d),
               "converged": converged, "ratio": ratio}
    header = "q,d,h,h0,converged,ratio"
    row = [[_fmt(args.q), str(args.d), _fmt(args.h), _fmt(payload["h0"]),
            str(converged).lower(), _fmt(ratio)]]
    emit(payload, cfg, args.out, args.format, (header, row))


def cmd_selftest(args, cfg):
    results = run_selftest()
    rows = [[name, "pass" if ok else "FAIL", detail] for name, ok, detail in results]
    payload = [{"check": n, "ok": ok, "detail": d} for n, ok, d in results]
    emit(payload, cfg, args.out, args.format, ("check,status,detail", rows))
    if not all(ok for _, ok, _ in results):
        raise ValidationFailure("selftest failed")


def run_selftest() -> list[tuple[str, bool, str]]:
    """Fast exact-module invariant suite (the full one lives in tests/)."""
    out = []

    def check(name, ok, detail=""):
        out.append((name, bool(ok), detail))

    g1 = catalog.make_graph("single")
    p = exact.ModelParams(p=0.5, q=2.0, p_h=0.5)
    z, _ = exact.partition_function(g1, p)
    check("partition_single_ghost_edge", abs(z - 3.0) < 1e-12, f"Z={z!r}")

    val = exact.event_probability(g1, p, catalog.ghost_edge_open(g1, 0))
    check("ghost_edge_marginal", abs(val - 1.0 / 3.0) < 1e-12, f"P={val!r}")

    g = catalog.make_graph("ell3")
    pr = exact.ModelParams(p=0.4, q=1.7, p_h=0.3)
    inner = np.array([1, 0], np.uint8)
    oracle = exact.ghost_conditional_oracle(g, pr, inner, 0)
    labels = exact._inner_cluster_labels(g, inner)
    size = int((labels == 0).sum())
    formula = exact.ghost_formula(size, pr.q, pr.p_h)
    check("ghost_law", abs(oracle - formula) < 1e-12,
          f"oracle={oracle!r} formula={formula!r}")

    probs = exact.probability_table(g, pr)
    masks = exact.upset_masks(5)
    vals = exact.upset_probabilities(masks, exact.sector_probabilities(g, pr, "all"))
    fkg_ok = True
    for i in range(0, len(masks), 37):
        for j in range(0, len(masks), 41):
            inter = int(masks[i]) & int(masks[j])
            pa = vals[i]
            pb = vals[j]
            pab = sum(probs[c] for c in range(32) if (inter >> c) & 1)
            if pa * pb > pab + 1e-12:
                fkg_ok = False
    check("fkg_sampled", fkg_ok)

    pt = pr.p / (pr.p + pr.q * (1 - pr.p))
    pth = pr.p_h / (pr.p_h + pr.q * (1 - pr.p_h))
    lo = exact.ModelParams(p=pt, q=1.0, p_h=pth)
    hi = exact.ModelParams(p=pr.p, q=1.0, p_h=pr.p_h)
    ok1, _ = exact.domination_bruteforce(g, lo, pr)
    ok2, _ = exact.domination_bruteforce(g, pr, hi)
    check("bernoulli_sandwich", ok1 and ok2)

    ev = catalog.edge_open(0)
    d_exact = exact.deriv_event(g, pr, ev, "p")
    d_fd = exact.deriv_fd(g, pr, ev, "p")
    check("derivative_vs_fd", abs(d_exact - d_fd) < 1e-6,
          f"exact={d_exact!r} fd={d_fd!r}")

    xs = [0.01, 0.3, 1.0, 2.5]
    rt = max(abs(bounds.arctanh_q(bounds.tanh_q(x, 2.6), 2.6) - x) for x in xs)
    check("tanh_roundtrip", rt < 1e-12, f"max|err|={rt:.2e}")
    return out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kertesz-lab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override")
        p.add_argument("--seed", type=int, default=1, help="master seed")
        p.add_argument("--threads", type=int, default=None,
                       help="thread budget (default: KERTESZ_LAB_THREADS or 1)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="json")

    b = sub.add_parser("bounds", help="closed-form bound report at one point")
    common(b)
    b.add_argument("--p", type=float, default=None)
    b.add_argument("--q", type=float, default=None)
    b.add_argument("--d", type=int, default=2)
    b.add_argument("--p-b", type=float, default=0.5,
                   help="Bernoulli threshold p_B(d) (0.5 in d=2)")
    b.add_argument("--delta-override", type=float, default=None,
                   help="demonstration delta for the lower-bound pipeline")
    b.add_argument("--measure-decay", type=int, default=0, metavar="SAMPLES",
                   help="measure annulus crossings to resolve the pipeline")
    b.add_argument("--k-max", type=int, default=8)
    b.add_argument("--check-dom", default=None, metavar="p1,q1,h1,p2,q2,h2",
                   help="also evaluate the explicit domination condition")
    b.add_argument("--nmax", type=int, default=64,
                   help="cluster-size grid for --check-dom")
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("curve", help="bound curves over a parameter grid")
    common(c)
    c.add_argument("--kind", choices=("upper", "h0"), default="upper")
    c.add_argument("--q-list", default="1.1,2,10")
    c.add_argument("--p-min", type=float, default=0.35)
    c.add_argument("--p-max", type=float, default=0.85)
    c.add_argument("--p-steps", type=int, default=101)
    c.add_argument("--p-b", type=float, default=0.5)
    c.add_argument("--q-min", type=float, default=1.05)
    c.add_argument("--q-max", type=float, default=10.0)
    c.add_argument("--q-steps", type=int, default=180)
    c.add_argument("--d", type=int, default=2)
    c.set_defaults(func=cmd_curve)

    e = sub.add_parser("exact", help="enumeration oracle value as a JSON record")
    common(e)
    e.add_argument("--graph", required=True, choices=catalog.graph_names())
    e.add_argument("--p", type=float, default=None)
    e.add_argument("--q", type=float, default=None)
    e.add_argument("--ph", type=float, default=0.0)
    e.add_argument("--bc", choices=("free", "wired"), default="free")
    e.add_argument("--event", default="all_open",
                   help="all_open | full_space | edge_open:E | ghost_open:V "
                        "| connected:X,Y")
    e.set_defaults(func=cmd_exact)

    s = sub.add_parser("sample", help="draw configurations (hex serialized)")
    common(s)
    s.add_argument("--graph", choices=catalog.graph_names())
    s.add_argument("--box", default=None, metavar="D,K")
    s.add_argument("--rect", default=None, metavar="NX,NY")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--q", type=float, default=None)
    s.add_argument("--ph", type=float, default=0.0)
    s.add_argument("--bc", choices=("free", "wired"), default="free")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--sampler", choices=("cftp", "heat_bath"), default="cftp")
    s.add_argument("--burn-in", type=int, default=256)
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--t-max", type=int, default=mc.CFTP_T_MAX)
    s.set_defaults(func=cmd_sample)

    k = sub.add_parser(
        "scan", help="Kertesz-line scan table",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="CSV columns: p,q,d (parameter point); h_lower (pipeline\n"
               "no-percolation field threshold, 'unresolved' when decay was\n"
               "not established); h_upper_rc and h_upper_bern (closed-form\n"
               "upper bounds); h_est,h_err (bisection estimate of h_c at the\n"
               "largest box, '0' = supercritical at zero field, 'inf' = never\n"
               "supercritical up to the ceiling); L_max; n_samples (budget\n"
               "per decision); seed; flag in {OK,FAIL_SANDWICH,UNRESOLVED}.\n"
               "All h columns use the p_h = 1-exp(-(q/(q-1))h) convention.")
    common(k)
    k.add_argument("--p-grid", default=None, metavar="P1,P2,...")
    k.add_argument("--q", type=float, default=None)
    k.add_argument("--d", type=int, default=2)
    k.add_argument("--sizes", default="12,24,48", help="box sizes, largest decides")
    k.add_argument("--tol-h", type=float, default=0.02)
    k.add_argument("--samples", type=int, default=10_000)
    k.add_argument("--p-b", type=float, default=0.5)
    k.add_argument("--burn-in", type=int, default=256)
    k.add_argument("--thin", type=int, default=1)
    k.add_argument("--delta-override", type=float, default=None)
    k.add_argument("--k-max", type=int, default=8)
    k.add_argument("--pipeline-samples", type=int, default=2000)
    k.set_defaults(func=cmd_scan)

    a = sub.add_parser("animals", help="lattice-animal counts vs the mu^n bound")
    common(a)
    a.add_argument("--n", type=int, default=5)
    a.set_defaults(func=cmd_animals)

    x = sub.add_parser("expansion", help="cluster-expansion convergence check")
    common(x)
    x.add_argument("--q", type=float, default=None)
    x.add_argument("--d", type=int, default=2)
    x.add_argument("--h", type=float, default=None)
    x.set_defaults(func=cmd_expansion)

    t = sub.add_parser("selftest", help="fast exact-module invariant suite")
    common(t)
    t.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse validation: usage already printed
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = merge_config(args, argv)
        args.func(args, cfg)
        return EXIT_OK
    except (ValidationFailure, lattice.LatticeError, bounds.BoundsError,
            exact.EnumerationBudgetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UnresolvedOutcome, mc.CftpFailure, kertesz.MonotonicityError) as exc:
        print(f"unresolved: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED


if __name__ == "__main__":
    sys.exit(main())
