"""Command-line front end: ``hypernibble gen | run | verify | report``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from itertools import combinations
from pathlib import Path

import numpy as np

from . import colouring as col
from . import efl
from . import generators as gen
from . import nibble
from .errors import HostMismatch, HypernibbleError, ParseError
from .hypercore import (
    EdgeOrdering,
    Graph,
    Hypergraph,
    PartialEdgeColouring,
    fingerprint,
    forward_degree_profile,
    parse_lhg,
    read_lhg,
    serialize_lhg,
    stats,
    verify,
)

log = logging.getLogger("hypernibble")

CSV_VERSION = "hypernibble-runs/1"
CSV_FIELDS = [
    "schema",
    "fingerprint",
    "family",
    "n",
    "m",
    "algo",
    "seed",
    "status",
    "colours_used",
    "matching_size",
    "uncovered",
    "n_plus_1_ok",
    "conjectured_colours",
    "conjectured_matching",
    "detail",
    "wall_time",
]
WALL_COLUMNS = ("wall_time",)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_ALGO = 0, 1, 2, 3

FAMILIES = ("pg", "fano", "degenerate", "complete", "cycle", "petersen", "sts", "latin", "aux", "random-linear", "paircover")
ALGOS = (
    "nibble",
    "greedy-match",
    "vizing",
    "greedy-colour",
    "incidence-colour",
    "three-tier",
    "efl3",
    "reorder",
    "partition-large",
    "partial-steiner",
    "indep-set",
)


class UsageError(Exception):
    pass


# -- argument helpers --------------------------------------------------------------


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"1..10"`` (inclusive) or ``"1,4,9"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if len(set(out)) != len(out):
        raise UsageError("seeds must be distinct")
    if not out:
        raise UsageError("empty seed list")
    return out


def parse_params(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--params expects k=v, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def _add_family_args(p):
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--q", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--edges", type=int, help="target edge count for random-linear")
    p.add_argument("--triple-frac", type=float, default=0.5)
    p.add_argument("--square", help="Latin square file (default: cyclic of order --n)")


def _need(args, *names):
    missing = [x for x in names if getattr(args, x) is None]
    if missing:
        raise UsageError(f"family {args.family} needs --{', --'.join(m.replace('_', '-') for m in missing)}")


def build_family(args, seed: int) -> Hypergraph:
    f = args.family
    if f == "pg":
        _need(args, "q")
        return gen.projective_plane(args.q)
    if f == "fano":
        return gen.fano_plane()
    if f == "petersen":
        return gen.petersen_graph()
    if f == "latin":
        if args.square:
            sq = gen.LatinSquare.parse(Path(args.square).read_text())
        else:
            _need(args, "n")
            sq = gen.LatinSquare.cyclic(args.n)
        return gen.latin_square_hypergraph(sq)
    _need(args, "n")
    if f == "degenerate":
        return gen.degenerate_plane(args.n)
    if f == "complete":
        return gen.complete_graph_hg(args.n)
    if f == "cycle":
        return gen.cycle_graph(args.n)
    if f == "sts":
        return gen.steiner_triple_system(args.n)
    if f == "aux":
        return gen.steiner_auxiliary(args.t, args.k, args.n)
    if f == "random-linear":
        _need(args, "edges")
        return gen.random_linear(args.n, args.k, args.edges, seed)
    if f == "paircover":
        return gen.random_pair_cover(args.n, args.triple_frac, seed)
    raise UsageError(f"unknown family {f}")


def canonical(h: Hypergraph) -> Hypergraph:
    """Edges in the order the ``.lhg`` serializer writes them, so ids match saved files."""
    return Hypergraph(h.n, sorted(h.edges), check=False)


# -- algorithms -------------------------------------------------------------------------


def _is_sts(h: Hypergraph) -> bool:
    return h.m > 0 and bool((h.sizes == 3).all()) and efl.covers_all_pairs(h)


def _colouring_result(h, c: PartialEdgeColouring, report=None, **extra):
    v = verify(h, c, "proper_colouring")
    metrics = {"colours_used": c.colours_used(), **extra}
    if not (c.colours >= 0).all():
        metrics["detail"] = f"{int((c.colours < 0).sum())} uncoloured"
    arts = {"colouring.csv": c.to_csv()}
    if report is not None:
        arts["report.json"] = _report_json(report)
    return metrics, arts, v


def _matching_result(h, rep: nibble.MatchingReport):
    mt = rep.matching
    v = verify(h, mt, "matching")
    return (
        {"matching_size": len(mt), "uncovered": rep.uncovered[0]},
        {"matching.txt": rep.dump_matchings(), "report.json": rep.to_json()},
        v,
    )


def _strip_timings(x):
    if isinstance(x, dict):
        return {k: _strip_timings(v) for k, v in x.items() if k not in ("timings", "wall_time")}
    if isinstance(x, list):
        return [_strip_timings(v) for v in x]
    return x


def _report_json(report: dict) -> str:
    return json.dumps(_strip_timings(report), sort_keys=True, default=efl._plain) + "\n"


def _ordering_text(order: EdgeOrdering) -> str:
    return " ".join(map(str, order.order.tolist())) + "\n"


def run_algorithm(algo: str, h: Hypergraph | None, seed: int, params: dict):
    """Returns (metrics, artifacts, verdict)."""
    params = dict(params)
    if algo == "nibble":
        rep = nibble.rodl_nibble(h, nibble.NibbleParams(seed=seed, **params))
        return _matching_result(h, rep)
    if algo == "greedy-match":
        return _matching_result(h, nibble.random_greedy_matching(h, seed))
    if algo == "vizing":
        g = Graph.from_hypergraph(h)
        return _colouring_result(h, col.vizing(g), max_degree=g.max_degree())
    if algo == "greedy-colour":
        order = None
        if params.pop("order", "size") == "random":
            order = EdgeOrdering(np.random.default_rng(seed).permutation(h.m))
        return _colouring_result(h, col.greedy_by_ordering(h, order))
    if algo == "incidence-colour":
        D = params.pop("D", None)
        run = col.incidence_nibble_colouring(h, D, nibble.NibbleParams(seed=seed, **params))
        return _colouring_result(h, run.colouring, run.report)
    if algo == "three-tier":
        run = col.three_tier_colouring(h, None, col.TierParams(**params), seed)
        return _colouring_result(h, run.colouring, run.report)
    if algo == "efl3":
        run = efl.efl_small_colouring(h, efl.EflParams(seed=seed, **params))
        m, a, v = _colouring_result(h, run.colouring, run.report)
        m["n_plus_1_ok"] = run.n_plus_1_ok
        return m, a, v
    if algo == "reorder":
        out = efl.reorder(h, float(params.pop("tau", 0.1)), float(params.pop("K", 1.0)), relax=bool(params.pop("relax", False)))
        fwd = forward_degree_profile(h, out.ordering)
        arts = {"ordering.txt": _ordering_text(out.ordering), "report.json": _report_json({"variant": out.variant, "W": out.W, "checks": out.checks})}
        return {"detail": out.variant, "max_forward_degree": int(fwd.max(initial=0))}, arts, _ok()
    if algo == "partition-large":
        out = efl.partition_large(h, float(params.pop("sigma", 0.05)))
        kind = "cheap" if out.colourable_cheaply else "split"
        rep = {"cheap": out.colourable_cheaply, "H1": out.H1, "W": out.W, "H2": out.H2, "checks": out.checks}
        m = {"detail": kind}
        if out.greedy_colours is not None:
            m["colours_used"] = out.greedy_colours
        return m, {"ordering.txt": _ordering_text(out.ordering), "report.json": _report_json(rep)}, _ok()
    if algo == "partial-steiner":
        t, k = int(params.pop("t", 2)), int(params.pop("k", 3))
        n = int(params.pop("n", h.n if h is not None else 0))
        res = nibble.partial_steiner(t, k, n, nibble.NibbleParams(seed=seed, **params))
        v = _steiner_ok(res.blocks, t)
        text = serialize_lhg(Hypergraph(n, res.blocks, check=False)) if res.blocks else f"{n} 0\n"
        return {"matching_size": len(res.blocks), "detail": f"fill={res.fill_fraction:.6f}"}, {"design.lhg": text}, v
    if algo == "indep-set":
        g = Graph.from_hypergraph(h)
        res = nibble.greedy_independent_set_trianglefree(g, seed)
        ok = nibble.is_independent(g, res.vertices)
        v = _ok() if ok else _fail("chosen vertices are adjacent")
        return {"matching_size": res.size, "detail": f"bound={res.bound:.3f}"}, {"independent.txt": " ".join(map(str, res.vertices)) + "\n"}, v
    raise UsageError(f"unknown algorithm {algo}")


class _Verdict:
    def __init__(self, ok, witness=None, detail=""):
        self.ok, self.witness, self.detail = ok, witness, detail

    def __bool__(self):
        return self.ok


def _ok():
    return _Verdict(True)


def _fail(detail, witness=None):
    return _Verdict(False, witness, detail)


def _steiner_ok(blocks, t):
    seen = set()
    for b in blocks:
        for s in combinations(b, t):
            if s in seen:
                return _fail("t-subset covered twice", s)
            seen.add(s)
    return _ok()


def _baselines(h: Hypergraph | None, algo: str, metrics: dict) -> dict:
    """Conjectured values, report only."""
    out = {}
    if h is None or not _is_sts(h):
        return out
    if "colours_used" in metrics:
        out["conjectured_colours"] = f"{(h.n - 1) / 2 + 3:g}"
    if "matching_size" in metrics and algo in ("nibble", "greedy-match"):
        out["conjectured_matching"] = f"{(h.n - 4) / 3:.3f}"
    return out


def execute(job: dict) -> dict:
    """One (instance, algorithm, seed) run; writes artifacts only after verification."""
    seed = job["seed"]
    h = job["instance"]
    if h is None and job.get("family_args") is not None:
        h = canonical(build_family(job["family_args"], seed))
    fp = fingerprint(h) if h is not None else ""
    row = {f: "" for f in CSV_FIELDS}
    row.update(schema=CSV_VERSION, fingerprint=fp, family=job["family"], algo=job["algo"], seed=seed)
    if h is not None:
        row.update(n=h.n, m=h.m)
    t0 = time.perf_counter()
    try:
        metrics, arts, verdict = run_algorithm(job["algo"], h, seed, job["params"])
    except HypernibbleError as exc:
        row.update(status=f"error:{type(exc).__name__}", detail=str(exc)[:200], wall_time=f"{time.perf_counter() - t0:.3f}")
        return row
    except (ValueError, TypeError) as exc:
        row.update(status=f"error:{type(exc).__name__}", detail=str(exc)[:200], wall_time=f"{time.perf_counter() - t0:.3f}")
        return row
    row["wall_time"] = f"{time.perf_counter() - t0:.3f}"
    for k in ("colours_used", "matching_size", "uncovered", "detail"):
        if k in metrics:
            row[k] = metrics[k]
    if "n_plus_1_ok" in metrics:
        row["n_plus_1_ok"] = int(bool(metrics["n_plus_1_ok"]))
    row.update(_baselines(h, job["algo"], metrics))
    if not verdict:
        row.update(status="verify_failed", detail=f"{verdict.detail} {verdict.witness}")
        return row
    row["status"] = "ok"
    out = job.get("out_dir")
    if out:
        base = Path(out) / f"{fp or 'none'}-{job['algo']}-{seed}"
        for suffix, text in arts.items():
            Path(f"{base}.{suffix}").write_text(text, encoding="utf-8")
    return row


# -- subcommands ------------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.family is None:
        raise UsageError("gen needs --family")
    h = canonical(build_family(args, args.seed))
    text = serialize_lhg(h)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    s = stats(h)
    print(json.dumps({"fingerprint": fingerprint(h), **s.as_dict()}, sort_keys=True, default=efl._plain), file=sys.stderr)
    return EXIT_OK


def _write_rows(path, rows):
    new = not path or not Path(path).exists() or Path(path).stat().st_size == 0
    fh = open(path, "a", newline="", encoding="utf-8") if path else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        if new:
            w.writeheader()
        for r in rows:
            w.writerow(r)
    finally:
        if path:
            fh.close()


def cmd_run(args) -> int:
    if not args.algo:
        raise UsageError("run needs --algo")
    seeds = parse_seeds(args.seeds) if args.seeds else [args.seed]
    params = parse_params(args.params)
    instance = None
    family_args = None
    family = ""
    if args.instance:
        if not Path(args.instance).exists():
            raise UsageError(f"no such instance file: {args.instance}")
        instance = read_lhg(args.instance)
        family = "file"
    elif args.family:
        family = args.family
        family_args = args
    elif args.algo != "partial-steiner":
        raise UsageError("run needs --instance or --family")
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    ns = None
    if family_args is not None:
        ns = argparse.Namespace(**{k: getattr(args, k) for k in ("family", "q", "n", "k", "t", "edges", "triple_frac", "square")})
    jobs = [
        {"seed": s, "instance": instance, "family_args": ns, "family": family, "algo": args.algo, "params": params, "out_dir": args.out_dir}
        for s in seeds
    ]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(execute, jobs))
    else:
        rows = [execute(j) for j in jobs]
    _write_rows(args.out, rows)
    statuses = [r["status"] for r in rows]
    if any(s == "verify_failed" for s in statuses):
        return EXIT_VERIFY
    if any(s.startswith("error") for s in statuses):
        return EXIT_ALGO
    return EXIT_OK


def cmd_verify(args) -> int:
    h = read_lhg(args.instance)
    if args.colouring:
        c = PartialEdgeColouring.from_csv(Path(args.colouring).read_text(), h.m)
        v = verify(h, c, "proper_colouring")
        if v and args.complete and (c.colours < 0).any():
            v = _fail("uncoloured edge", (int(np.flatnonzero(c.colours < 0)[0]),))
    elif args.matching:
        v = _ok()
        for i, mt in enumerate(nibble.load_matchings(Path(args.matching).read_text(), h.n)):
            v = verify(h, mt, "matching")
            if not v:
                break
    elif args.ordering:
        order = [int(x) for x in Path(args.ordering).read_text().split()]
        try:
            EdgeOrdering(order)
            v = _ok() if len(order) == h.m else _fail("ordering length differs from edge count")
        except HypernibbleError as exc:
            v = _fail(str(exc))
    else:
        v = verify(h, None, "linear")
    if v:
        print("ok")
        return EXIT_OK
    print(f"FAIL: {v.detail}; witness {v.witness}")
    return EXIT_VERIFY


def _quantile(xs, q):
    return float(np.quantile(np.asarray(xs, dtype=float), q))


def read_runs(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    if reader.fieldnames != CSV_FIELDS:
        raise ParseError("unrecognised CSV header", line=1)
    rows = []
    for i, r in enumerate(reader, start=2):
        if None in r or r["schema"] != CSV_VERSION:
            raise ParseError("malformed row", line=i)
        rows.append(r)
    return rows


def summarize(rows: list[dict]) -> tuple[list[dict], list[str]]:
    """Per (algo, family) aggregates; duplicate (fingerprint, algo, seed) keep the last row."""
    warnings = []
    latest = {}
    for r in rows:
        key = (r["fingerprint"], r["algo"], r["seed"], r["family"])
        if key in latest:
            warnings.append(f"duplicate run {key[1]} seed {key[2]} on {key[0] or key[3]}; keeping the last")
        latest[key] = r
    groups = defaultdict(list)
    for r in latest.values():
        groups[(r["algo"], r["family"])].append(r)
    out = []
    for (algo, family), rs in sorted(groups.items()):
        rec = {"algo": algo, "family": family, "runs": len(rs), "ok": sum(r["status"] == "ok" for r in rs)}
        for metric in ("colours_used", "matching_size", "uncovered", "wall_time"):
            xs = [float(r[metric]) for r in rs if r[metric] not in ("", None)]
            if xs:
                rec[f"{metric}_mean"] = float(np.mean(xs))
                rec[f"{metric}_max"] = max(xs)
                rec[f"{metric}_q50"] = _quantile(xs, 0.5)
                rec[f"{metric}_q90"] = _quantile(xs, 0.9)
        flags = [r["n_plus_1_ok"] for r in rs if r["n_plus_1_ok"] != ""]
        if flags:
            rec["n_plus_1_rate"] = sum(f == "1" for f in flags) / len(flags)
        out.append(rec)
    return out, warnings


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        rows.extend(read_runs(Path(path).read_text(encoding="utf-8")))
    summary, warnings = summarize(rows)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for rec in summary:
        print(f"[{rec['algo']} / {rec['family'] or '-'}] runs={rec['runs']} ok={rec['ok']}")
        for k, v in rec.items():
            if k not in ("algo", "family", "runs", "ok"):
                print(f"  {k}: {v:g}")
    if args.out:
        keys = []
        for rec in summary:
            keys.extend(k for k in rec if k not in keys)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            w.writerows(summary)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypernibble", description="Nibble matchings and edge colourings of linear hypergraphs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an instance (.lhg)")
    _add_family_args(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run an algorithm over seeds and append CSV rows")
    r.add_argument("--algo", choices=ALGOS)
    r.add_argument("--instance")
    _add_family_args(r)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--seeds")
    r.add_argument("--params", action="append", default=[], metavar="K=V")
    r.add_argument("--out", help="CSV file to append to (default stdout)")
    r.add_argument("--out-dir", help="directory for verified artifacts")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="re-check a colouring, matching or ordering")
    v.add_argument("--instance", required=True)
    v.add_argument("--colouring")
    v.add_argument("--matching")
    v.add_argument("--ordering")
    v.add_argument("--complete", action="store_true", help="also require every edge coloured")
    v.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="summarize run CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HostMismatch as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypernibbleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ALGO


if __name__ == "__main__":
    sys.exit(main())
