"""Command-line interface.

Subcommands: train, individualize, evaluate, features, synth.  Exit
codes: 0 on success, 1 on a computation failure, 2 on a usage or input
error.  Randomness (synth only) flows from --seed with a fixed default,
so every run is reproducible; --threads (or HRTF_THREADS) bounds worker
threads, with 1 forcing the serial reference path.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels, dataset, features, pipeline, testkit
from .pca import variance_report

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_USAGE = 2


class _InputError(Exception):
    """Bad paths, malformed files, missing features: exit code 2."""


def _default_threads():
    env = os.environ.get("HRTF_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise _InputError(f"HRTF_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _load_archive(path):
    try:
        return dataset.load_archive(path)
    except dataset.FormatError as exc:
        raise _InputError(str(exc)) from exc


def _load_table(path, archive=None):
    try:
        return dataset.load_anthropometry(path, archive=archive)
    except dataset.FormatError as exc:
        raise _InputError(str(exc)) from exc


def _load_model(path):
    try:
        return dataset.load_model(path)
    except dataset.FormatError as exc:
        raise _InputError(str(exc)) from exc


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _InputError(f"cannot create output directory {out}: {exc}")
    return out


def _print_variance_table(eigenvalues, max_rows=20):
    rows = variance_report(eigenvalues)
    print("PC   eigenvalue    variance%   cumulative%")
    for i, row in enumerate(rows[:max_rows], start=1):
        print(f"{i:<4d} {row.eigenvalue:<13.6g} {row.percent:<11.2f} "
              f"{row.cumulative_percent:.2f}")
    if len(rows) > max_rows:
        print(f"     ... {len(rows) - max_rows} more components")


def cmd_train(args):
    archive = _load_archive(args.archive)
    table = _load_table(args.anthropometry, archive=archive)
    model = pipeline.train(archive, table, q=args.pcs,
                           standardize=args.standardize,
                           threads=args.threads)
    dataset.save_model(model, args.out)
    print(f"model written to {args.out}")
    print(f"backend: {_kernels.BACKEND}")
    _print_variance_table(model.pca.eigenvalues)
    report = pipeline.evaluate(model, archive, mode="pca", threads=args.threads)
    print(f"PCA-mode mean error: {report.overall_mean_error():.4f}%")
    return EXIT_OK


def cmd_individualize(args):
    model = _load_model(args.model)
    try:
        mapping = json.loads(Path(args.features).read_text())
    except OSError as exc:
        raise _InputError(f"cannot read features file: {exc}")
    except json.JSONDecodeError as exc:
        raise _InputError(f"{args.features}: malformed JSON ({exc})")
    if not isinstance(mapping, dict):
        raise _InputError(f"{args.features}: expected a JSON object of "
                          "measurement name -> value")
    try:
        feats, unknown = pipeline.features_from_mapping(model, mapping)
    except ValueError as exc:
        raise _InputError(str(exc))
    for key in unknown:
        print(f"warning: ignoring unknown feature {key!r}", file=sys.stderr)
    result = pipeline.individualize(model, feats,
                                    fractional_delay=args.fractional_delay)
    out = _out_dir(args.out)
    archive = dataset.HrirArchive(
        sample_rate=result.sample_rate,
        hrir_length=result.hrirs.shape[-1],
        subjects=(args.subject_id,),
        directions=result.directions,
        data=result.hrirs[None, :, :, :])
    dataset.save_archive(archive, out)
    print(f"individualized HRIRs written to {out}")
    print("delays applied (samples):")
    for d, direction in enumerate(result.directions):
        print(f"  az {direction.azimuth_deg:+7.1f} {direction.hemisphere:5s}  "
              f"L={result.delays_applied[0, d]:g}  "
              f"R={result.delays_applied[1, d]:g}")
    return EXIT_OK


def cmd_evaluate(args):
    model = _load_model(args.model)
    archive = _load_archive(args.archive)
    table = None
    if args.mode == "individualized":
        if not args.anthropometry:
            raise _InputError("individualized evaluation needs --anthro")
        table = _load_table(args.anthropometry)
    if args.holdout and args.mode != "individualized":
        raise _InputError("--holdout applies to --mode individualized only")
    report = pipeline.evaluate(model, archive, table=table, mode=args.mode,
                               threads=args.threads, holdout=args.holdout)
    out = _out_dir(args.out)
    report.to_csv(out / "report.csv")
    report.curves_csv(out / "curves.csv")
    (out / "summary.json").write_text(
        json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    left, right = report.per_ear_mean_error()
    print(f"mode: {report.mode}" + (" (holdout)" if args.holdout else ""))
    print(f"left-ear mean error:  {left:.4f}%")
    print(f"right-ear mean error: {right:.4f}%")
    print(f"overall mean error:   {report.overall_mean_error():.4f}%")
    print(f"overall mean SD:      {report.overall_mean_sd():.4f} dB")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_features(args):
    archive = _load_archive(args.archive)
    table = _load_table(args.anthropometry, archive=archive)
    kwargs = {}
    if args.notch_band:
        kwargs["notch_band"] = tuple(args.notch_band)
    if args.ild_band:
        kwargs["ild_band"] = tuple(args.ild_band)
    kwargs["notch_ear"] = 0 if args.notch_ear == "left" else 1
    report = features.correlation_report(archive, table, **kwargs)
    out = _out_dir(args.out)
    report.to_csv(out / "correlations.csv")
    direction = archive.directions[report.notch_direction]
    print(f"notch read from {args.notch_ear} ear, azimuth "
          f"{direction.azimuth_deg:+.1f} ({direction.hemisphere})")
    print(report.format_text())
    print(f"report written to {out / 'correlations.csv'}")
    return EXIT_OK


def cmd_synth(args):
    world = testkit.synth_generate(subjects=args.subjects, q=args.pcs,
                                   seed=args.seed, noise_level=args.noise,
                                   n_directions=args.directions,
                                   hrir_length=args.hrir_length,
                                   sample_rate=args.sample_rate)
    out = _out_dir(args.out)
    manifest, anthro, truth = testkit.write_world(world, out)
    print(f"archive manifest:   {manifest}")
    print(f"anthropometry:      {anthro}")
    print(f"ground truth:       {truth}")
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hrtfkit",
        description="Individualized horizontal-plane HRTFs from "
                    "anthropometric measurements (PCA + regression).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from an archive")
    p.add_argument("archive", help="archive manifest.json (or its directory)")
    p.add_argument("anthropometry", help="anthropometry CSV")
    p.add_argument("-o", "--out", required=True, help="output model file")
    p.add_argument("--pcs", type=int, default=10,
                   help="number of principal components (default 10)")
    p.add_argument("--standardize", action="store_true",
                   help="standardize features before regression "
                        "(conditioning only; predictions unchanged)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("individualize", help="synthesize HRIRs for a listener")
    p.add_argument("model", help="trained model file")
    p.add_argument("features", help="JSON file of the 8 measurements by name "
                                    "(x1, x3, x6, x12, d1, d3, d5, d6)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--subject-id", default="listener",
                   help="subject id for the output archive")
    p.add_argument("--fractional-delay", action="store_true",
                   help="apply sub-sample delays by sinc interpolation")
    p.set_defaults(func=cmd_individualize)

    p = sub.add_parser("evaluate", help="compare model output to an archive")
    p.add_argument("model", help="trained model file")
    p.add_argument("archive", help="archive manifest.json (or its directory)")
    p.add_argument("--anthro", dest="anthropometry",
                   help="anthropometry CSV (individualized mode)")
    p.add_argument("--mode", choices=("pca", "individualized"),
                   default="individualized")
    p.add_argument("--holdout", action="store_true",
                   help="leave-one-subject-out retraining (slow; not part "
                        "of the published procedure)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("features", help="psychoacoustic correlation report")
    p.add_argument("archive", help="archive manifest.json (or its directory)")
    p.add_argument("anthropometry", help="anthropometry CSV")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--notch-band", nargs=2, type=float, metavar=("LO", "HI"),
                   help="pinna-notch search band in Hz (default 4000 16000)")
    p.add_argument("--ild-band", nargs=2, type=float, metavar=("LO", "HI"),
                   help="ILD band in Hz (default: full spectrum)")
    p.add_argument("--notch-ear", choices=("left", "right"), default="left")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("synth", help="generate a synthetic archive + table")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=37)
    p.add_argument("--pcs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0,
                   help="additive weight noise level")
    p.add_argument("--directions", type=int, default=50)
    p.add_argument("--hrir-length", type=int, default=256)
    p.add_argument("--sample-rate", type=float, default=44100.0)
    p.set_defaults(func=cmd_synth)

    for sp in sub.choices.values():
        sp.add_argument("--threads", "-j", type=int, default=None,
                        help="worker threads (default: machine parallelism, "
                             "or HRTF_THREADS; 1 = serial reference path)")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is None:
            args.threads = _default_threads()
        elif args.threads < 1:
            raise _InputError("--threads must be >= 1")
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # computation failure: eigensolver, rank, ...
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
