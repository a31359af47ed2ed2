"""Command-line entry point: ``saliency-hash <command> [--flags]``.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 data or file error,
4 numeric divergence during training.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path


from .data import SyntheticSpec, default_data_root, gen_synthetic, load_dataset, read_netpbm, split_manifest
from .errors import ContractError, DataError, DivergenceError, FormatError, ShapeError
from .index import CodeIndex, read_codes, write_codes
from .metrics import AP_NORMALIZATIONS, evaluate
from .model import binarize, encode_batch
from .pipeline import (RunConfig, coerce_field, encode_dataset, format_sweep_table, load_run,
                       read_run_config, save_run, sweep, thresholds_for, train_run, write_sweep_csv)
from .selfcheck import analytic_suite, gradient_suite

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4

logger = logging.getLogger("saliency_hash")


class UsageError(Exception):
    pass


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__}s, got {text!r}")
    return parse


def _shape(text: str) -> tuple[int, int, int]:
    dims = _csv_list(int)(text.replace("x", ","))
    if len(dims) != 3:
        raise argparse.ArgumentTypeError(f"expected C,H,W, got {text!r}")
    return tuple(dims)


# Run-config keys that may be overridden on the command line.
RUN_FLAGS = ("arch", "k", "r", "lr", "epochs", "batch", "seed", "data", "out",
             "attention", "head", "distance", "widths")


def _add_run_flags(p: argparse.ArgumentParser, skip=()) -> None:
    p.add_argument("--config", type=Path, help="run config file (key = value lines)")
    for key in RUN_FLAGS:
        if key not in skip:
            p.add_argument(f"--{key}", dest=f"run_{key}", metavar=key.upper(),
                           help=f"override '{key}' from the config file")


def _run_config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = read_run_config(args.config) if args.config else (base or RunConfig())
    overrides = {}
    for key in RUN_FLAGS:
        raw = getattr(args, f"run_{key}", None)
        if raw is not None:
            try:
                overrides[key] = coerce_field(key, raw)
            except (ContractError, ValueError) as exc:
                raise UsageError(f"--{key}: {exc}") from None
    return cfg.updated(**overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saliency-hash", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", help="write a synthetic salient-patch dataset")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: data root)")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=280)
    p.add_argument("--counts", type=_csv_list(int), default=None,
                   help="per-class image counts, e.g. 780,120,60,40 (overrides --per-class)")
    p.add_argument("--shape", type=_shape, default=(3, 32, 32), help="C,H,W")
    p.add_argument("--smoothing", type=float, default=1.5)
    p.add_argument("--patch", type=int, default=6)
    p.add_argument("--contrast", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("split", help="hold out a per-class query set")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("train", help="train a hashing model on a gallery manifest")
    _add_run_flags(p)
    p.add_argument("--history", type=Path, default=None,
                   help="loss history CSV (default: <out>.loss.csv)")

    p = sub.add_parser("encode", help="encode a manifest into a codes file")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("query", help="top-k gallery records for one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--codes", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=("l2", "hamming"), default="l2")

    p = sub.add_parser("eval", help="retrieval metrics of query codes against gallery codes")
    p.add_argument("--gallery", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=("l2", "hamming"), default="l2")
    p.add_argument("--ap-norm", choices=AP_NORMALIZATIONS, default="retrieved")
    p.add_argument("--report", type=Path, default=None, help="also write the key = value report here")
    p.add_argument("--per-query", type=Path, default=None, help="per-query metrics CSV")

    p = sub.add_parser("sweep", help="mAP over a grid of r and K")
    _add_run_flags(p, skip=("r", "k", "out"))
    p.add_argument("--gallery", type=Path, default=None, help="gallery manifest (default: data)")
    p.add_argument("--queries", type=Path, required=True, help="query manifest")
    p.add_argument("--r", type=_csv_list(float), default=[0.3, 0.5, 0.7])
    p.add_argument("--k", type=_csv_list(int), default=[12, 24, 36, 48])
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--mode", choices=("l2", "hamming"), default="l2")
    p.add_argument("--out", type=Path, default=Path("sweep.csv"))

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--points", type=int, default=None, help="random points per op")
    p.add_argument("--only", type=_csv_list(str), default=None, help="comma-separated case names")

    p = sub.add_parser("selftest", help="analytic unit cases")
    p.add_argument("--only", type=_csv_list(str), default=None)
    return parser


# -- commands ---------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(classes=args.classes, per_class=args.per_class, shape=args.shape,
                         smoothing=args.smoothing, patch=args.patch, contrast=args.contrast,
                         seed=args.seed, counts=tuple(args.counts) if args.counts else None)
    manifest = gen_synthetic(spec, args.out or default_data_root())
    print(f"wrote {sum(spec.class_counts())} images, manifest {manifest}")
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = args.manifest or default_data_root() / "manifest.csv"
    gallery, query = split_manifest(manifest, args.seed, args.fraction, args.out_dir)
    print(f"gallery {gallery}\nquery {query}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if not cfg.data:
        cfg = cfg.updated(data=str(default_data_root() / "gallery.csv"))
    if not cfg.out:
        raise UsageError("train needs an output checkpoint (--out or 'out' in the config)")
    gallery = load_dataset(cfg.data)
    start = time.perf_counter()

    def progress(epoch, loss):
        logger.info("epoch %d/%d mean loss %.6f (%.0fs)", epoch + 1, cfg.epochs, loss,
                    time.perf_counter() - start)

    model, cfg, history = train_run(cfg, gallery, callback=progress)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_run(model, cfg, out)
    history_path = args.history or out.with_suffix(".loss.csv")
    with open(history_path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(history, start=1):
            fh.write(f"{epoch},{loss:.8f}\n")
    print(f"checkpoint {out}\nhistory {history_path}\nfinal mean loss {history[-1]:.6f}")
    return EXIT_OK


def cmd_encode(args) -> int:
    model, cfg = load_run(args.checkpoint)
    codes = encode_dataset(model, load_dataset(args.manifest), thresholds_for(cfg))
    write_codes(args.out, codes)
    print(f"wrote {len(codes)} codes (K={codes.k}) to {args.out}")
    return EXIT_OK


def cmd_query(args) -> int:
    model, cfg = load_run(args.checkpoint)
    image = read_netpbm(args.image)[None]
    embedding = encode_batch(model, image)[0]
    index = CodeIndex(read_codes(args.codes), args.mode)
    probe = embedding if args.mode == "l2" else binarize(embedding, thresholds_for(cfg))
    labels = dict(zip(index.codes.ids.tolist(), index.codes.labels.tolist()))
    print("rank,id,label,distance")
    for rank, (rid, dist) in enumerate(index.query(probe, args.k), start=1):
        print(f"{rank},{rid},{labels[rid]},{dist:g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    index = CodeIndex(read_codes(args.gallery), args.mode)
    report = evaluate(index, read_codes(args.queries), args.k, args.ap_norm)
    print(report.to_table())
    print()
    print(report.to_kv())
    if args.report:
        args.report.write_text(report.to_kv() + "\n")
    if args.per_query:
        report.write_csv(args.per_query)
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _run_config(args)
    gallery_path = args.gallery or (Path(base.data) if base.data else default_data_root() / "gallery.csv")
    gallery, queries = load_dataset(gallery_path), load_dataset(args.queries)
    rows = sweep(base, gallery, queries, args.r, args.k, args.topk, args.mode)
    write_sweep_csv(args.out, rows)
    print(format_sweep_table(rows, args.topk))
    print(f"\nwrote {args.out}")
    return EXIT_OK


def _report_checks(results) -> int:
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}".rstrip())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} passed")
    return EXIT_OK if failed == 0 and results else EXIT_CHECK


def cmd_gradcheck(args) -> int:
    return _report_checks(gradient_suite(args.only, args.points))


def cmd_selftest(args) -> int:
    return _report_checks(analytic_suite(args.only))


COMMANDS = {
    "gen-data": cmd_gen_data, "split": cmd_split, "train": cmd_train, "encode": cmd_encode,
    "query": cmd_query, "eval": cmd_eval, "sweep": cmd_sweep, "gradcheck": cmd_gradcheck,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ContractError, ShapeError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
