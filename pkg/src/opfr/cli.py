"""Command line entry point: ``opfr <command> ...``.

Exit codes: 0 success, 1 usage error, 2 parse/file error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import List, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench as bench_mod
from .cfgen import ANCHORS, FEATURE_NAMES, cloud_pair_features
from .errors import GeometryError, OpfrError, ParseError
from .geom import NeighborIndex, PointCloud
from .io import FORMATS, load_params, read_cloud, save_params, write_cloud, write_table
from .model import opfr_forward
from .pfh import PfhConfig, descriptor_matrix, estimate_normals, orient_up, pfh_all
from .sampling import K3_DOMAINS, SamplingConfig
from .synth import KINDS, ShapeSpec, generate, make_toy_dataset
from .train import CHANNELS, ToyConfig, train_toy

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_threads() -> int:
    env = os.environ.get("OPFR_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"OPFR_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise UsageError(f"OPFR_THREADS must be a positive integer, got {env!r}")
    return n


def _positive(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opfr", description="Point cloud geometric features: OPFR and PFH.")
    p.add_argument("--threads", type=_positive, default=None,
                   help="worker threads (default: $OPFR_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("features", help="per-point raw pair features or OPFR vectors")
    f.add_argument("input")
    f.add_argument("--out", required=True)
    f.add_argument("--format", choices=FORMATS)
    f.add_argument("--k1", type=_positive, default=20)
    f.add_argument("--k2", type=_positive, default=4)
    f.add_argument("--k3", type=_positive, default=8)
    f.add_argument("--pair-anchor", choices=ANCHORS, default="centroid")
    f.add_argument("--k3-domain", choices=K3_DOMAINS, default="cloud")
    f.add_argument("--no-self", action="store_true",
                   help="exclude the interest point from its own k1 neighborhood")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--raw", action="store_true", help="emit the 9*K raw pair features (default)")
    g.add_argument("--opfr", metavar="PARAMS", help="emit learned OPFR vectors using PARAMS")

    h = sub.add_parser("pfh", help="vanilla PFH descriptors (estimates normals)")
    h.add_argument("input")
    h.add_argument("--out", required=True)
    h.add_argument("--format", choices=FORMATS)
    h.add_argument("--k", type=_positive, default=16)
    h.add_argument("--bins", type=_positive, default=5)
    h.add_argument("--normalized", action="store_true")

    n = sub.add_parser("normals", help="PCA normal estimation")
    n.add_argument("input")
    n.add_argument("--out", required=True)
    n.add_argument("--format", choices=FORMATS)
    n.add_argument("--k", type=_positive, default=16)

    b = sub.add_parser("bench", help="time OPFR raw features against end-to-end PFH")
    b.add_argument("--n", type=_positive, default=1024)
    b.add_argument("--reps", type=_positive, default=20)
    b.add_argument("--shape", choices=KINDS, default="sphere")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--params", help="also run the MLP forward pass with these parameters")
    b.add_argument("--csv", help="write machine-readable rows here as well as to stdout")

    t = sub.add_parser("train-toy", help="synthetic 4-class primitive experiment")
    t.add_argument("--epochs", type=_positive, default=50)
    t.add_argument("--seed", type=int, default=7)
    t.add_argument("--n-per-class", type=_positive, default=200)
    t.add_argument("--pooling", choices=("sum", "avg", "max"), default="sum")
    t.add_argument("--channels", choices=sorted(CHANNELS), default="all")
    t.add_argument("--out", help="write trained parameters here")

    s = sub.add_parser("synth", help="sample a synthetic primitive")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--r", type=float, default=1.0, help="sphere/cylinder radius")
    s.add_argument("--extent", type=float, default=1.0)
    s.add_argument("--dihedral", type=float, default=90.0)
    s.add_argument("--n", type=_positive, default=2048)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--normals", action="store_true", help="also write analytic normals")
    s.add_argument("--out", required=True)
    return p


def _cmd_features(args, threads: int) -> None:
    cloud = read_cloud(args.input, args.format)
    cfg = SamplingConfig(args.k1, args.k2, args.k3, args.k3_domain, not args.no_self)
    fs = cloud_pair_features(cloud, cfg, args.pair_anchor, NeighborIndex(cloud, workers=threads))
    if args.opfr:
        params, _ = load_params(args.opfr)
        if params.spec.in_dim != fs.features.shape[-1]:
            raise UsageError(f"parameter file expects {params.spec.in_dim} inputs, "
                             f"pair features have {fs.features.shape[-1]}")
        mat = opfr_forward(fs.features, params, "eval")
        cols = [f"r{c}" for c in range(mat.shape[1])]
    else:
        mat = fs.features.reshape(len(cloud), -1)
        cols = [f"p{j}_{nm}" for j in range(cfg.pairs_per_point) for nm in FEATURE_NAMES]
    write_table(args.out, cloud.points, mat, cols)
    print(f"wrote {len(cloud)} rows x {4 + len(cols)} columns to {args.out} "
          f"({fs.n_degenerate} degenerate pairs zero-filled)")


def _cmd_pfh(args, threads: int) -> None:
    cloud = read_cloud(args.input, args.format)
    cfg = PfhConfig(args.k, args.bins)
    descs = pfh_all(cloud, cfg, index=NeighborIndex(cloud, workers=threads))
    mat = descriptor_matrix(descs, args.normalized)
    write_table(args.out, cloud.points, mat, [f"h{c}" for c in range(cfg.n_bins)])
    skipped = sum(d.n_skipped for d in descs)
    print(f"wrote {len(cloud)} descriptors of length {cfg.n_bins} to {args.out} "
          f"({skipped} degenerate pairs skipped)")


def _cmd_normals(args, threads: int) -> None:
    cloud = read_cloud(args.input, args.format)
    normals, undefined = estimate_normals(cloud, args.k, NeighborIndex(cloud, workers=threads))
    if undefined.any():
        raise GeometryError(f"normal undefined (rank-deficient neighborhood) at "
                            f"{int(undefined.sum())} points, first at index {int(np.argmax(undefined))}")
    write_cloud(args.out, PointCloud(cloud.points, normals))
    print(f"wrote {len(cloud)} points with normals to {args.out}")


def _bench_cloud(kind: str, n: int, seed: int) -> PointCloud:
    return generate(ShapeSpec(kind, count=n, seed=seed)).cloud


def _cmd_bench(args, threads: int) -> None:
    if args.reps < bench_mod.MIN_REPS:
        raise UsageError(f"--reps must be at least {bench_mod.MIN_REPS}")
    params = load_params(args.params)[0] if args.params else None
    cloud = _bench_cloud(args.shape, args.n, args.seed)
    reports = bench_mod.bench_pipelines(cloud, args.reps, params=params, threads=threads,
                                        shape=args.shape)
    print(bench_mod.format_reports(reports))
    print()
    rows = [r.row() for r in reports]
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def _cmd_train_toy(args, threads: int) -> None:
    ds = make_toy_dataset(n_per_class=args.n_per_class, seed=args.seed)
    toy = ToyConfig(epochs=args.epochs, seed=args.seed, n_per_class=args.n_per_class,
                    pooling=args.pooling, channels=args.channels)
    print(f"dataset: {len(ds.train)} train / {len(ds.test)} test, classes {', '.join(ds.class_names)}")
    res = train_toy(ds, toy, log=print)
    print(f"final test accuracy {res.final_test_acc:.4f}")
    if args.out:
        save_params(args.out, res.model.mlp, (res.model.head_w, res.model.head_b))
        print(f"saved parameters to {args.out}")


def _cmd_synth(args, threads: int) -> None:
    spec = ShapeSpec(args.kind, count=args.n, radius=args.r, extent=args.extent,
                     dihedral_deg=args.dihedral, sigma=args.sigma, seed=args.seed)
    shape = generate(spec)
    cloud = shape.cloud
    if args.normals:
        cloud = PointCloud(cloud.points, shape.normals)
    write_cloud(args.out, cloud)
    print(f"wrote {len(cloud)} {args.kind} points to {args.out}")


COMMANDS = {
    "features": _cmd_features,
    "pfh": _cmd_pfh,
    "normals": _cmd_normals,
    "bench": _cmd_bench,
    "train-toy": _cmd_train_toy,
    "synth": _cmd_synth,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else _default_threads()
        with threadpool_limits(threads):
            COMMANDS[args.command](args, threads)
    except UsageError as exc:
        print(f"opfr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"opfr: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OpfrError, ValueError, FloatingPointError) as exc:
        print(f"opfr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
