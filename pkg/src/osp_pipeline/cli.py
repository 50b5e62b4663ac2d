"""Command line: ``osp synth | train | interpret | eval``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .biometry import HADLOCK_1984, load_curve
from .errors import DataError, MalformedFile, MissingFile
from .evaluation import run_cross_validation
from .forest import ForestParams
from .frames import read_case
from .pipeline import ModelBundle, interpret_case, summarize, train_bundle, write_report
from .sweeps import SegmentationConfig
from .synthetic import generate_corpus, load_corpus_spec, write_case

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _candidates(text: str):
    return text if text in ("sqrt", "all") else _positive_int(text)


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", type=_positive_int, default=100, help="trees per forest")
    p.add_argument("--seed", type=int, default=42, help="seed for forests (and folds in eval)")
    p.add_argument("--max-depth", type=int, default=None, help="maximum tree depth (default: unlimited)")
    p.add_argument("--min-samples-split", type=int, default=2, help="smallest node that may be split")
    p.add_argument("--candidate-features", type=_candidates, default="sqrt",
                   help="features tried per split: 'sqrt', 'all' or a count")
    p.add_argument("--no-bootstrap", action="store_true", help="train every tree on all samples")


def _add_segmentation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=5, help="mode-filter window (odd)")
    p.add_argument("--min-run", type=_positive_int, default=20, help="minimum sweep length in frames")
    p.add_argument("--curve", type=Path, default=None, help="growth curve JSON (default: Hadlock 1984)")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="osp", description="Automated interpretation of obstetric sweep recordings.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus", formatter_class=fmt)
    p.add_argument("spec", type=Path, help="corpus spec JSON")
    p.add_argument("out_dir", type=Path, help="output directory (one subdirectory per case)")
    _add_threads(p)

    p = sub.add_parser("train", help="train the count and presentation forests", formatter_class=fmt)
    p.add_argument("corpus_dir", type=Path)
    p.add_argument("out_bundle_dir", type=Path)
    _add_forest_flags(p)
    _add_segmentation_flags(p)
    _add_threads(p)

    p = sub.add_parser("interpret", help="interpret one case directory", formatter_class=fmt)
    p.add_argument("case_dir", type=Path)
    p.add_argument("bundle_dir", type=Path)
    p.add_argument("--out", type=Path, default=Path("report.json"), help="report JSON path")

    p = sub.add_parser("eval", help="k-fold cross-validation over a corpus", formatter_class=fmt)
    p.add_argument("corpus_dir", type=Path)
    p.add_argument("--k", type=int, default=5, help="number of folds (>= 2)")
    p.add_argument("--out", type=Path, default=None, help="write eval JSON here instead of stdout")
    p.add_argument("--csv", type=Path, default=None, help="optional per-case CSV dump")
    _add_forest_flags(p)
    _add_segmentation_flags(p)
    _add_threads(p)
    return parser


def _forest_params(args) -> ForestParams:
    try:
        return ForestParams(
            n_trees=args.trees,
            max_depth=args.max_depth,
            min_samples_split=args.min_samples_split,
            n_candidate_features=args.candidate_features,
            bootstrap=not args.no_bootstrap,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _segmentation(args) -> SegmentationConfig:
    if args.window < 1 or args.window % 2 == 0:
        raise UsageError(f"--window must be odd and >= 1, got {args.window}")
    return SegmentationConfig(window=args.window, min_run=args.min_run)


def _curve(args):
    return HADLOCK_1984 if args.curve is None else load_curve(args.curve)


def list_case_dirs(corpus_dir: Path) -> list[Path]:
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise MissingFile(str(corpus_dir))
    manifest = corpus_dir / "manifest.json"
    if manifest.is_file():
        try:
            ids = json.loads(manifest.read_text(encoding="utf-8"))["cases"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedFile(f"{manifest}: {exc}") from None
        return [corpus_dir / str(i) for i in ids]
    return sorted(p for p in corpus_dir.iterdir() if (p / "frames.csv").is_file())


def read_corpus(corpus_dir: Path, threads: int = 1):
    dirs = list_case_dirs(corpus_dir)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(read_case, dirs))
    return [read_case(d) for d in dirs]


def cmd_synth(args) -> int:
    spec = load_corpus_spec(args.spec)
    corpus = generate_corpus(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def _write(c):
        write_case(c, out / c.case.case_id)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(_write, corpus))
    else:
        for c in corpus:
            _write(c)
    manifest = {"seed": spec.seed, "n_cases": len(corpus), "cases": [c.case.case_id for c in corpus]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(corpus)} cases to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    params, seg = _forest_params(args), _segmentation(args)
    corpus = read_corpus(args.corpus_dir, args.threads)
    bundle = train_bundle(corpus, params, seg, _curve(args), n_jobs=args.threads)
    bundle.save(args.out_bundle_dir)
    print(
        f"trained on {len(corpus)} cases "
        f"(count n={bundle.count_model.metadata['n_train']}, "
        f"presentation n={bundle.presentation_model.metadata['n_train']}) -> {args.out_bundle_dir}"
    )
    return EXIT_OK


def cmd_interpret(args) -> int:
    case = read_case(args.case_dir)
    bundle = ModelBundle.load(args.bundle_dir)
    report = interpret_case(case, bundle)
    Path(args.out).write_text(write_report(report), encoding="utf-8")
    print(summarize(report))
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.k < 2:
        raise UsageError(f"--k must be >= 2, got {args.k}")
    params, seg = _forest_params(args), _segmentation(args)
    corpus = read_corpus(args.corpus_dir, args.threads)
    report = run_cross_validation(corpus, args.k, params, _curve(args), args.seed, seg, n_jobs=args.threads)
    if args.csv is not None:
        Path(args.csv).write_text(report.cases_csv(), encoding="utf-8")
    if args.out is not None:
        Path(args.out).write_text(report.dumps(), encoding="utf-8")
        single = report.count_confusion.correct["single"], report.count_confusion.incorrect["single"]
        print(
            f"{report.n_cases} cases, {args.k} folds: singles {single[0]}/{sum(single)} correct, "
            f"GA n={report.ga_overall.n} -> {args.out}"
        )
    else:
        print(report.render_text())
        print()
        sys.stdout.write(report.dumps())
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "interpret": cmd_interpret, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"osp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"osp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
