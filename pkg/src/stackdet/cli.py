"""Command-line interface.

One executable with subcommands: ``validate`` (structure checks),
``score`` (enroll + cosine + M-Norm + submission), ``evaluate`` (EERs from a
submission and a key), ``det`` (DET point export) and ``synth`` (synthetic
corpus generation). Diagnostics go to stderr; results go to stdout so the
tool composes in pipelines.

Exit codes: 0 success, 2 parse/format errors, 3 validation failures,
4 submission/key coverage mismatches, 5 I/O errors, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data_model import DatasetKind
from .detector import MNORM_MODES, baseline_submission
from .errors import CoverageError, FormatError, ToolkitError
from .ingestion import (
    DEFAULT_PROFILES,
    DatasetProfile,
    read_bl_matching,
    read_ivector_csv,
    read_key,
    read_submission,
    validate_profile,
    write_submission,
)
from .metrics import evaluate_submission, write_det
from .synth import SynthConfig, generate, write_corpus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FORMAT = 2
EXIT_VALIDATION = 3
EXIT_COVERAGE = 4
EXIT_IO = 5


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _guess_kind(stem: str) -> DatasetKind:
    if stem.endswith("blacklist"):
        return DatasetKind.BLACKLIST
    if stem.endswith("background"):
        return DatasetKind.BACKGROUND
    return DatasetKind.MIXED


def cmd_validate(args) -> int:
    explicit = None
    if args.speakers or args.utts_per_speaker or args.total:
        if not (args.speakers and args.utts_per_speaker and args.total):
            _log("error: --speakers, --utts-per-speaker and --total must be given together")
            return EXIT_ERROR
        explicit = DatasetProfile(
            args.speakers, args.utts_per_speaker, args.total,
            utts_is_minimum=args.min_utts,
        )
    all_passed = True
    for path in args.files:
        stem = Path(path).stem
        dataset = read_ivector_csv(path, expected_dim=args.dim, kind=_guess_kind(stem))
        profile = explicit if explicit is not None else DEFAULT_PROFILES.get(stem)
        if profile is None:
            print(
                f"dataset {dataset.name}: {len(dataset.prefixes())} speakers, "
                f"{len(dataset)} utterances, dim {dataset.dim} (no profile to check)"
            )
            continue
        report = validate_profile(dataset, profile)
        print(report.render())
        all_passed = all_passed and report.passed
    if args.matching:
        registry = read_bl_matching(args.matching)
        print(f"matching {Path(args.matching).name}: {len(registry)} blacklist speakers")
    return EXIT_OK if all_passed else EXIT_VALIDATION


def cmd_score(args) -> int:
    registry = read_bl_matching(args.matching)
    train = read_ivector_csv(
        args.train_blacklist, expected_dim=args.dim, kind=DatasetKind.BLACKLIST
    )
    test = read_ivector_csv(args.test, expected_dim=train.dim, kind=DatasetKind.MIXED)
    cohort = None
    if args.cohort:
        cohort = read_ivector_csv(args.cohort, expected_dim=train.dim, kind=DatasetKind.BLACKLIST)
    submission = baseline_submission(
        train,
        registry,
        test,
        mnorm=args.mnorm,
        sigma_floor=args.sigma_floor,
        cohort=cohort,
        exclude_own=args.exclude_own,
        workers=args.workers,
    )
    write_submission(submission, args.out)
    _log(
        f"scored {len(registry)} blacklist models against {len(test)} test "
        f"utterances (mnorm={args.mnorm}) -> {args.out}"
    )
    return EXIT_OK


def _write_det_files(report, prefix: str) -> None:
    out = Path(prefix)
    out.parent.mkdir(parents=True, exist_ok=True)
    for suffix, curve in (("top_s", report.top_s), ("top_1", report.top_1)):
        path = out.parent / f"{out.name}_{suffix}.csv"
        write_det(curve, path)
        _log(f"wrote {path}")


def cmd_evaluate(args) -> int:
    registry = read_bl_matching(args.matching)
    submission = read_submission(args.submission, registry)
    key = read_key(args.key, registry)
    report = evaluate_submission(submission, key, registry)
    if args.det_out:
        _write_det_files(report, args.det_out)
    if args.machine:
        for line in report.machine_lines():
            print(line)
    else:
        print(report.render_text())
    return EXIT_OK


def cmd_det(args) -> int:
    registry = read_bl_matching(args.matching)
    submission = read_submission(args.submission, registry)
    key = read_key(args.key, registry)
    report = evaluate_submission(submission, key, registry)
    _write_det_files(report, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_blacklist=args.blacklist,
        n_background=args.background,
        dim=args.dim,
        train_utts_per_blacklist=args.train_utts,
        intra_speaker_std=args.intra_std,
        inter_speaker_std=args.inter_std,
        test_blacklist_fraction=args.test_fraction,
        n_test=args.n_test,
        seed=args.seed,
    )
    corpus = generate(config)
    paths = write_corpus(corpus, args.out)
    _log(
        f"generated corpus: {config.n_blacklist} blacklist x "
        f"{config.train_utts_per_blacklist} utts, {config.n_background} background, "
        f"dim {config.dim}, {config.n_test} test utterances, seed {config.seed}"
    )
    for path in paths.values():
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stackdet",
        description="Multi-target speaker detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check dataset structure against expected profiles")
    p.add_argument("files", nargs="+", help="i-vector CSV files to validate")
    p.add_argument("--dim", type=int, default=None, help="expected vector dimension")
    p.add_argument("--speakers", type=int, default=None, help="expected speaker count")
    p.add_argument("--utts-per-speaker", type=int, default=None,
                   help="expected utterances per speaker")
    p.add_argument("--min-utts", action="store_true",
                   help="treat --utts-per-speaker as a lower bound")
    p.add_argument("--total", type=int, default=None, help="expected total utterances")
    p.add_argument("--matching", default=None, help="also parse this matching file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="enroll, score and write a submission file")
    p.add_argument("--train-blacklist", required=True, help="blacklist training i-vector CSV")
    p.add_argument("--matching", required=True, help="blacklist matching CSV")
    p.add_argument("--test", required=True, help="test i-vector CSV")
    p.add_argument("--out", required=True, help="submission file to write")
    p.add_argument("--mnorm", choices=MNORM_MODES, default="full",
                   help="score normalization mode (default: full)")
    p.add_argument("--sigma-floor", type=float, default=0.0,
                   help="lower bound applied to per-detector score spread")
    p.add_argument("--cohort", default=None,
                   help="normalize against this blacklist CSV instead of the training set")
    p.add_argument("--exclude-own", action="store_true",
                   help="drop each detector's own utterances from its cohort statistics")
    p.add_argument("--workers", type=int, default=1, help="scoring worker threads")
    p.add_argument("--dim", type=int, default=None, help="expected vector dimension")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="compute detection/identification EERs for a submission")
    p.add_argument("--submission", required=True)
    p.add_argument("--key", required=True, help="ground-truth key CSV")
    p.add_argument("--matching", required=True)
    p.add_argument("--det-out", default=None,
                   help="prefix for DET point CSVs (<prefix>_top_s.csv, <prefix>_top_1.csv)")
    p.add_argument("--machine", action="store_true", help="print key=value lines only")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("det", help="export DET curve points for a submission")
    p.add_argument("--submission", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--matching", required=True)
    p.add_argument("--out", required=True, help="output prefix for the two DET CSVs")
    p.set_defaults(func=cmd_det)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--blacklist", type=int, default=50, help="blacklist speaker count")
    p.add_argument("--background", type=int, default=100, help="background speaker count")
    p.add_argument("--dim", type=int, default=32, help="vector dimension")
    p.add_argument("--train-utts", type=int, default=3,
                   help="training utterances per blacklist speaker")
    p.add_argument("--intra-std", type=float, default=0.3, help="within-speaker spread")
    p.add_argument("--inter-std", type=float, default=1.0, help="between-speaker spread")
    p.add_argument("--test-fraction", type=float, default=0.5,
                   help="fraction of test utterances from blacklist speakers")
    p.add_argument("--n-test", type=int, default=1000, help="test utterance count")
    p.add_argument("--seed", type=int, default=1, help="generator seed")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        _log(f"error: {exc}")
        return EXIT_FORMAT
    except CoverageError as exc:
        _log(f"error: {exc}")
        return EXIT_COVERAGE
    except ToolkitError as exc:
        _log(f"error: {exc}")
        return EXIT_ERROR
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
