"""Command-line surface: bank subsampling, evaluation, hyperparameter
sweeps, the search benchmark, and the 2-D toy lab.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bank import (
    FeatureBank,
    read_bank,
    read_bank_csv,
    subsample_bank,
    write_bank,
)
from .bench import run_bench
from .detectors import SCORE_NAMES, ReactDetector, make_detector
from .errors import BankFormatError, DataError, NumericalError, OodkitError
from .guidance import build_index
from .metrics import EvalTable, auroc, aupr, fpr_at_tpr
from .toy import ToyConfig, grid_scores, make_toy, fit_softmax_head
from .bank import with_logits

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_csv_options(p):
    p.add_argument("--csv-features", type=int, default=None,
                   help="feature column count for CSV inputs")
    p.add_argument("--csv-logits", type=int, default=0,
                   help="logit column count for CSV inputs")
    p.add_argument("--csv-label", action="store_true",
                   help="CSV inputs end with an integer label column")


def _load_bank(path, args):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        if getattr(args, "csv_features", None) is None:
            raise DataError(
                f"{path} is CSV; pass --csv-features (and --csv-logits/--csv-label)"
            )
        bank = read_bank_csv(
            path, args.csv_features, args.csv_logits, args.csv_label
        )
        return bank, None
    return read_bank(path)


def _parse_ood(values):
    pairs = []
    for item in values:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise DataError(f"--ood expects name=path, got {item!r}")
        pairs.append((name, path))
    return pairs


def _parse_scores(spec):
    scores = [s.strip() for s in spec.split(",") if s.strip()]
    if not scores:
        raise _Usage("no scores given")
    for s in scores:
        if s not in SCORE_NAMES:
            raise _Usage(
                f"unknown score {s!r}; known scores: {', '.join(SCORE_NAMES)}"
            )
    return scores


class _Usage(Exception):
    pass


def _check_compatible(name, bank, reference):
    if bank.d != reference.d:
        raise DataError(f"{name} has d={bank.d}, bank has d={reference.d}")
    if bank.logits is not None and bank.K != reference.K:
        raise DataError(f"{name} has K={bank.K}, bank has K={reference.K}")


def cmd_bank(args):
    bank, head = _load_bank(args.bank, args)
    sub = subsample_bank(bank, args.alpha, args.seed, stratified=args.stratified)
    write_bank(sub, head, args.out)
    meta = Path(str(args.out) + ".meta")
    meta.write_text(
        f"source: {args.bank}\nsource_rows: {bank.n}\nrows: {sub.n}\n"
        f"alpha_percent: {args.alpha!r}\nseed: {args.seed}\n"
        f"stratified: {args.stratified}\n"
        "rng: numpy PCG64(seed), Generator.choice(n, size, replace=False), "
        "rows sorted ascending\n"
    )
    print(f"wrote {sub.n} of {bank.n} rows to {args.out}")
    return EXIT_OK


def _build_detector(name, args, head):
    det = make_detector(
        name,
        k=args.k,
        vim_dim=getattr(args, "vim_dim", None),
        clamp_nonneg=getattr(args, "clamp_nonneg", False),
    )
    if getattr(args, "react", None) is not None:
        det = ReactDetector(detector=det, percentile=args.react)
    return det


def _evaluate(bank, head, id_bank, ood_banks, scores, args):
    table = EvalTable()
    for name in scores:
        det = _build_detector(name, args, head)
        det.fit_bank(bank, head)
        id_scores = det.score_bank(id_bank, threads=args.threads)
        for ood_name, ood_bank in ood_banks:
            ood_scores = det.score_bank(ood_bank, threads=args.threads)
            table.add(
                name,
                ood_name,
                fpr_at_tpr(id_scores, ood_scores),
                auroc(id_scores, ood_scores),
                aupr(id_scores, ood_scores),
            )
    return table


def _emit_table(table, args):
    sys.stdout.write(table.to_table())
    if args.out:
        text = table.to_tsv() if args.format == "tsv" else table.to_table()
        Path(args.out).write_text(text)


def cmd_eval(args):
    scores = _parse_scores(args.scores)
    bank, head = _load_bank(args.bank, args)
    id_bank, _ = _load_bank(args.id, args)
    _check_compatible("id set", id_bank, bank)
    ood_banks = []
    for name, path in _parse_ood(args.ood):
        ood_bank, _ = _load_bank(path, args)
        _check_compatible(f"ood set {name}", ood_bank, bank)
        ood_banks.append((name, ood_bank))
    if not ood_banks:
        raise _Usage("at least one --ood name=path is required")
    if args.alpha < 100.0:
        bank = subsample_bank(bank, args.alpha, args.seed)
    table = _evaluate(bank, head, id_bank, ood_banks, scores, args)
    _emit_table(table, args)
    return EXIT_OK


def cmd_sweep(args):
    bank, head = _load_bank(args.bank, args)
    id_bank, _ = _load_bank(args.id, args)
    ood_banks = []
    for name, path in _parse_ood(args.ood):
        ood_bank, _ = _load_bank(path, args)
        ood_banks.append((name, ood_bank))
    if not ood_banks:
        raise _Usage("at least one --ood name=path is required")
    k_list = [int(v) for v in args.k_list.split(",") if v.strip()]
    alpha_list = [float(v) for v in args.alpha_list.split(",") if v.strip()]
    lines = ["alpha\tk\tk_used\tood\tfpr95\tauroc\taupr"]
    for alpha in alpha_list:
        sub = subsample_bank(bank, alpha, args.seed) if alpha < 100.0 else bank
        for k in k_list:
            k_used = min(k, sub.n)
            if k_used != k:
                print(
                    f"note: k={k} clamped to {k_used} at alpha={alpha}",
                    file=sys.stderr,
                )
            det = make_detector("nnguide", k=k_used).fit_bank(sub, head)
            id_scores = det.score_bank(id_bank, threads=args.threads)
            per_ood = []
            for name, ood_bank in ood_banks:
                ood_scores = det.score_bank(ood_bank, threads=args.threads)
                row = (
                    fpr_at_tpr(id_scores, ood_scores),
                    auroc(id_scores, ood_scores),
                    aupr(id_scores, ood_scores),
                )
                per_ood.append(row)
                lines.append(
                    f"{alpha!r}\t{k}\t{k_used}\t{name}\t"
                    f"{row[0]!r}\t{row[1]!r}\t{row[2]!r}"
                )
            avg = tuple(float(np.mean([r[i] for r in per_ood])) for i in range(3))
            lines.append(
                f"{alpha!r}\t{k}\t{k_used}\taverage\t"
                f"{avg[0]!r}\t{avg[1]!r}\t{avg[2]!r}"
            )
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_bench(args):
    if args.bank:
        bank, head = _load_bank(args.bank, args)
    else:
        rng = np.random.default_rng(args.seed)
        n, d = args.n, args.d
        feats = rng.standard_normal((n, d))
        logits = rng.standard_normal((n, 8))
        bank, head = FeatureBank(features=feats, K=8, logits=logits), None
    index = build_index(bank, head)
    threads_list = sorted({1, max(1, args.threads)})
    report = run_bench(
        index,
        k=args.k,
        queries=args.queries,
        repeats=args.repeats,
        threads_list=threads_list,
        seed=args.seed,
    )
    sys.stdout.write(report.format())
    return EXIT_OK


def cmd_toy(args):
    means = None
    if args.means:
        vals = [float(v) for v in args.means.split(",")]
        if len(vals) != 4:
            raise _Usage("--means expects x1,y1,x2,y2")
        means = np.array(vals).reshape(2, 2)
    config = ToyConfig(
        **({"class_means": means} if means is not None else {}),
        class_std=args.std,
        n_per_class=args.n_per_class,
        grid_extent=args.extent,
        grid_resolution=args.resolution,
        seed=args.seed,
    )
    scores = [s.strip() for s in args.scores.split(",") if s.strip()]
    train, near, far = make_toy(config)
    head = fit_softmax_head(train)
    train_l = with_logits(train, head)
    index = build_index(train_l, head)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in scores:
        grid_scores(head, index, name, config, out_dir=out, k=args.k)
        det = make_detector(name, k=args.k) if name in SCORE_NAMES else None
        if det is not None:
            det.fit_bank(train_l, head)
            id_s = det.score_bank(train_l)
            near_s = det.score_bank(with_logits(near, head))
            far_s = det.score_bank(with_logits(far, head))
            print(
                f"{name}: auroc(id vs near)={auroc(id_s, near_s):.4f} "
                f"auroc(id vs far)={auroc(id_s, far_s):.4f}"
            )
    print(f"grids written to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oodkit",
        description="Post-hoc OOD detection over precomputed feature banks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bank", help="subsample a bank deterministically")
    p.add_argument("--bank", required=True)
    p.add_argument("--alpha", type=float, default=1.0,
                   help="sampling percentage in (0, 100]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--stratified", action="store_true",
                   help="sample per class (requires labels)")
    _add_csv_options(p)
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("eval", help="score ID/OOD sets and report metrics")
    p.add_argument("--bank", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--ood", action="append", default=[], metavar="NAME=PATH")
    p.add_argument("--scores", default="nnguide")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--alpha", type=float, default=100.0,
                   help="subsample the bank to this percentage before indexing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--react", nargs="?", type=float, const=90.0, default=None,
                   metavar="PCT", help="clip activations at this bank percentile")
    p.add_argument("--vim-dim", type=int, default=None)
    p.add_argument("--clamp-nonneg", action="store_true",
                   help="clamp base confidences at zero")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("table", "tsv"), default="tsv")
    p.add_argument("--threads", type=int, default=1)
    _add_csv_options(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over (alpha, k) for the guided score")
    p.add_argument("--bank", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--ood", action="append", default=[], metavar="NAME=PATH")
    p.add_argument("--k-list", default="1,10,20,50,100")
    p.add_argument("--alpha-list", default="0.5,1,5,10,25,50,100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1)
    _add_csv_options(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="throughput/latency of the scaled top-k")
    p.add_argument("--bank", default=None)
    p.add_argument("--n", type=int, default=12800)
    p.add_argument("--d", type=int, default=2048)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--queries", type=int, default=512)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=4)
    _add_csv_options(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("toy", help="2-D lab: score heatmaps and AUROCs")
    p.add_argument("--out", required=True)
    p.add_argument("--scores", default="energy,knn,nnguide")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--means", default=None, metavar="X1,Y1,X2,Y2")
    p.add_argument("--std", type=float, default=0.3)
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--extent", type=float, default=24.0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BankFormatError, DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OodkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
