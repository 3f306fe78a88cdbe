"""dppc: command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The environment variable ``DPPC_SEED`` overrides ``--seed``.
"""

import argparse
import csv
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .consensus import BACKENDS, INDEX_KINDS, BackendError, ConsensusConfig, consensus_cluster
from .datagen import DegenerateComponentError, MixtureSpec, OverlapInfeasibleError, generate_dataset
from .dpp import DppSizeError
from .eigen import DENSE_CAP, LanczosError, dense_eigh
from .io import (
    DataError,
    RunManifest,
    fmt_float,
    read_dataset_csv,
    read_labels_csv,
    write_dataset_csv,
    write_json,
    write_labels_csv,
)
from .metrics import adjusted_rand
from .nngp import IllConditionedKernelError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def _scenarios(text):
    out = []
    for item in text.split(","):
        p, k = item.lower().split("x")
        out.append((int(p), int(k)))
    return out


def _seed(args):
    env = os.environ.get("DPPC_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"DPPC_SEED must be an integer, got {env!r}") from None
    return int(args.seed)


def _stem(path):
    p = Path(path)
    return p.with_suffix("") if p.suffix == ".csv" else p


def _write_rows(path, rows, columns=None):
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["NA" if r.get(c) is None else fmt_float(r[c])
                        if isinstance(r.get(c), (float, np.floating)) else r.get(c) for c in columns])


def _load(args):
    return read_dataset_csv(args.data, label_column=args.label_column, reciprocal=args.reciprocal)


def cmd_generate(args):
    seed = _seed(args)
    spec = MixtureSpec(
        p=args.p, K=args.k, n=args.n, overlap_lo=args.overlap_lo, overlap_hi=args.overlap_hi,
        min_component_size=args.min_size, seed=seed, overlap_stat=args.overlap_stat,
        max_eccentricity=None if args.max_ecc < 0 else args.max_ecc,
    )
    start = time.perf_counter()
    model, data = generate_dataset(spec)
    elapsed = time.perf_counter() - start
    stem = _stem(args.out)
    csv_path, model_path = Path(f"{stem}.csv"), Path(f"{stem}.model.json")
    write_dataset_csv(csv_path, data)
    write_json(model_path, {"model": model.to_dict(), "info": data.info})
    RunManifest("generate", data.info["spec"], seed, outputs={"dataset": str(csv_path), "model": str(model_path)},
                timings={"generate": elapsed}).write(f"{stem}.manifest.json")
    print(f"wrote {csv_path} ({data.n} points, overlap {data.info['overlap_achieved']:.4g})")
    return EXIT_OK


_BACKEND_FLAGS = {"gamma": "submatrix", "r": "submatrix", "knn": "submatrix", "m": "nngp",
                  "ridge": "nngp", "n_centers": ("uniform", "kmeanspp")}


def _cluster_config(args, seed):
    for flag, owner in _BACKEND_FLAGS.items():
        owners = owner if isinstance(owner, tuple) else (owner,)
        if getattr(args, flag) is not None and args.backend not in owners:
            raise UsageError(f"--{flag.replace('_', '-')} does not apply to backend {args.backend}")
    kw = dict(backend=args.backend, R=args.runs, tau=args.tau, min_cluster_exponent=args.min_cluster_exp,
              n_thresholds=args.n_thresholds, seed=seed, threads=args.threads or (os.cpu_count() or 1),
              index=args.index, index_power=args.index_power,
              index_rows=args.index_rows, dense_cap=args.cap)
    if args.t is not None:
        kw["t"] = args.t
    elif args.backend == "submatrix":
        kw["t"] = 10
    if args.sparseness is not None:
        kw["sparseness"] = args.sparseness
    for name, key in (("gamma", "gamma"), ("r", "r"), ("knn", "k"), ("m", "m"), ("ridge", "ridge"),
                      ("n_centers", "n_centers")):
        if getattr(args, name) is not None:
            kw[key] = getattr(args, name)
    kw["permute"] = bool(args.permute)
    try:
        return ConsensusConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_cluster(args):
    seed = _seed(args)
    cfg = _cluster_config(args, seed)
    data = _load(args)
    start = time.perf_counter()
    res = consensus_cluster(data.points, cfg)
    elapsed = time.perf_counter() - start
    prefix = args.out_prefix
    out = {"labels": f"{prefix}.labels.csv", "result": f"{prefix}.result.json"}
    write_labels_csv(out["labels"], res.final.labels)
    record = res.to_dict()
    record.pop("labels")
    record["sizes"] = res.final.sizes().tolist()
    write_json(out["result"], record)
    RunManifest("cluster", cfg.to_dict(), seed, inputs={"data": str(args.data)}, outputs=out,
                timings={**res.timings, "total": elapsed}).write(f"{prefix}.manifest.json")
    msg = f"k={res.final.k} threshold={res.chosen_threshold:.4g}"
    if data.labels is not None:
        msg += f" ARI={adjusted_rand(res.final.labels, data.labels):.4f}"
    print(msg)
    return EXIT_OK


def cmd_evaluate(args):
    a, b = read_labels_csv(args.labels), read_labels_csv(args.truth)
    if a.size != b.size:
        raise DataError(f"label files cover {a.size} and {b.size} points")
    out = {
        "ari": adjusted_rand(a, b),
        "n": int(a.size),
        "k_labels": int(np.unique(a).size),
        "k_truth": int(np.unique(b).size),
        "sizes_labels": np.unique(a, return_counts=True)[1].tolist(),
        "sizes_truth": np.unique(b, return_counts=True)[1].tolist(),
    }
    if args.out:
        write_json(args.out, out)
        RunManifest("evaluate", {}, 0, inputs={"labels": args.labels, "truth": args.truth},
                    outputs={"json": args.out}).write(f"{_stem(args.out)}.manifest.json")
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_diag(args):
    seed = _seed(args)
    data = _load(args)
    X = data.points
    L = diag.kernel_of(X)
    prefix = args.out_prefix
    start = time.perf_counter()
    levels = _floats(args.levels)
    ts = _ints(args.ts)
    if args.what == "eigens":
        full = diag.full_spectrum(L, cap=args.cap)
        approx = diag.nngp_spectrum(X, L, levels[0], ts[0], seed=seed)
        rows = [{"rank": i, "full": float(full[i]), "nngp": float(approx[i]) if i < approx.size else None}
                for i in range(full.size)]
    elif args.what == "frobenius":
        rows = diag.frobenius_table(X, L, levels)
    elif args.what == "kl":
        full = diag.full_spectrum(L, cap=args.cap)
        rows = diag.kl_table(X, L, levels, ts, reference=args.reference, full=full)
    elif args.what == "diversity":
        if L.order > args.cap:
            raise ValueError(f"dense spectrum of order {L.order} exceeds cap {args.cap}; raise --cap")
        pairs = dense_eigh(L, cap=args.cap)
        dpp_vals, uni_vals = diag.diversity_values(L, pairs, args.draws, seed=seed)
        rows = [{"dpp_logpmf": float(a), "uniform_logpmf": float(b)} for a, b in zip(dpp_vals, uni_vals)]
    else:
        rows = diag.timing_table(X, L, levels, ts, repeats=args.repeats)
    path = f"{prefix}.{args.what}.csv"
    _write_rows(path, rows)
    RunManifest(f"diag {args.what}", {"levels": levels, "t": ts, "reference": args.reference},
                seed, inputs={"data": str(args.data)}, outputs={"csv": path},
                timings={"total": time.perf_counter() - start}).write(f"{prefix}.{args.what}.manifest.json")
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_bench(args):
    seed = _seed(args)
    configs = []
    for backend in args.backends.split(","):
        if backend not in BACKENDS:
            raise UsageError(f"unknown backend {backend}")
        if backend == "nngp":
            configs += [{"backend": "nngp", "sparseness": s, "t": t, "R": args.runs}
                        for s in _floats(args.levels) for t in _ints(args.ts)]
        elif backend == "submatrix":
            configs += [{"backend": "submatrix", "gamma": g, "sparseness": s, "t": t, "R": args.runs}
                        for g in _floats(args.gammas) for s in _floats(args.levels) for t in _ints(args.ts)]
        else:
            configs.append({"backend": backend, "R": args.runs})
    start = time.perf_counter()

    def progress(cell):
        if args.verbose:
            print(f"p={cell['p']} K={cell['K']} rep={cell['replica']} {cell['backend']} ari={cell['ari']}",
                  file=sys.stderr)

    rows = diag.run_bench(_scenarios(args.scenarios), args.replicas, args.n, configs, seed=seed,
                          progress=progress)
    keys = ["backend", "sparseness", "t", "gamma"]
    agg = diag.aggregate(rows, keys)
    # wall times vary between reruns, so they go to their own file
    _write_rows(args.out, agg, keys + ["cells", "failed", "ari_mean", "ari_sd"])
    timing_path = f"{_stem(args.out)}.timing.csv"
    _write_rows(timing_path, agg, keys + ["cells", "seconds_mean"])
    cells_path = f"{_stem(args.out)}.cells.csv"
    cols = ["p", "K", "replica", "data_seed"] + keys + ["R", "ari", "k", "threshold", "seconds", "error"]
    _write_rows(cells_path, rows, cols)
    RunManifest("bench", {"scenarios": args.scenarios, "replicas": args.replicas, "n": args.n,
                          "configs": configs}, seed, outputs={"aggregate": args.out, "timing": timing_path,
                                       "cells": cells_path},
                timings={"total": time.perf_counter() - start}).write(f"{_stem(args.out)}.manifest.json")
    print(f"wrote {args.out} ({len(agg)} rows)")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="dppc", description="Determinantal consensus clustering.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a Gaussian mixture dataset")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--overlap-lo", type=float, default=0.001)
    g.add_argument("--overlap-hi", type=float, default=0.01)
    g.add_argument("--overlap-stat", choices=("mean", "max"), default="mean")
    g.add_argument("--min-size", type=int, default=None)
    g.add_argument("--max-ecc", type=float, default=0.9, help="eccentricity cap; negative disables")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="dataset CSV path")
    g.set_defaults(func=cmd_generate)

    def data_flags(sp):
        sp.add_argument("data", help="dataset CSV (header row; optional label column)")
        sp.add_argument("--label-column", default="label")
        sp.add_argument("--reciprocal", action="store_true", help="use 1/x of every value")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--cap", type=int, default=DENSE_CAP, help="largest order for dense eigensolves")

    c = sub.add_parser("cluster", help="run consensus clustering")
    data_flags(c)
    c.add_argument("--backend", choices=BACKENDS, default="nngp")
    c.add_argument("--sparseness", type=float, default=None)
    c.add_argument("--t", type=int, default=None)
    c.add_argument("--gamma", type=float, default=None)
    c.add_argument("--r", type=int, default=None)
    c.add_argument("--knn", type=int, default=None, help="submatrix neighbor count (overrides sparseness)")
    c.add_argument("--m", type=int, default=None)
    c.add_argument("--ridge", type=float, default=None)
    c.add_argument("--permute", action="store_true")
    c.add_argument("--n-centers", type=int, default=None)
    c.add_argument("--runs", type=int, default=200)
    c.add_argument("--tau", type=float, default=0.3)
    c.add_argument("--n-thresholds", type=int, default=50)
    c.add_argument("--min-cluster-exp", type=float, default=0.5)
    c.add_argument("--index", choices=INDEX_KINDS, default="combined")
    c.add_argument("--index-power", type=float, default=0.75,
                   help="exponent on k in the scaled index")
    c.add_argument("--index-rows", type=int, default=None,
                   help="score candidates on this many sampled points (approximate)")
    c.add_argument("--threads", type=int, default=None)
    c.add_argument("--out-prefix", required=True)
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("evaluate", help="ARI of a labeling against the truth")
    e.add_argument("labels")
    e.add_argument("truth")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("diag", help="approximation diagnostics")
    d.add_argument("what", choices=("eigens", "frobenius", "kl", "diversity", "timing"))
    data_flags(d)
    d.add_argument("--levels", default="0.2,0.4,0.6,0.8", help="sparseness levels")
    d.add_argument("--ts", default="10,25,50", help="eigenvalue counts")
    d.add_argument("--reference", choices=("full", "top"), default="full")
    d.add_argument("--draws", type=int, default=1000)
    d.add_argument("--repeats", type=int, default=5)
    d.add_argument("--out-prefix", required=True)
    d.set_defaults(func=cmd_diag)

    b = sub.add_parser("bench", help="scenario x replica x config benchmark")
    b.add_argument("--scenarios", default="5x4,10x8,18x15", help="comma list of PxK")
    b.add_argument("--replicas", type=int, default=3)
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--backends", default="nngp,dense,uniform")
    b.add_argument("--levels", default="0.8")
    b.add_argument("--ts", default="25")
    b.add_argument("--gammas", default="0.05")
    b.add_argument("--runs", type=int, default=200)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--verbose", action="store_true")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


_NUMERIC = (LanczosError, IllConditionedKernelError, DppSizeError, BackendError,
            np.linalg.LinAlgError, FloatingPointError)
_DATA = (DataError, OverlapInfeasibleError, DegenerateComponentError, ValueError, IndexError, OSError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        print(f"dppc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC as exc:
        print(f"dppc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA as exc:
        print(f"dppc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
