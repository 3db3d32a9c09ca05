"""``vbiopsy`` command line.

Global flags go before the subcommand::

    vbiopsy --out demo make-fixtures
    vbiopsy --config demo/config.json extract
    vbiopsy --config demo/config.json train-cnn
    vbiopsy --config demo/config.json train-forest --mode fusion
    vbiopsy --config demo/config.json eval --model fusion --split test
    vbiopsy --config demo/config.json gradcam demo/test/empty/empty_000.png
    vbiopsy --config demo/config.json sweep

``--seed`` and ``--out`` override the config file. The exit status is 1
when any image or prediction failed during the command, 2 on a usage or
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .ingest import ConfigurationError, EmptyDatasetError, ImageDecodeError
from .microcnn import ModelFormatError

log = logging.getLogger("vbiopsy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vbiopsy", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--resume", action="store_true", help="skip work already on disk")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-fixtures", help="write the synthetic 4-class dataset")
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--test-per-class", type=int, default=20)
    p.add_argument("--size", type=int, default=64)

    sub.add_parser("extract", help="radiomics feature table")
    sub.add_parser("train-cnn", help="train the CNN branch")

    p = sub.add_parser("train-forest", help="train a radiomics-only or fusion forest")
    p.add_argument("--mode", choices=pipeline.MODES, required=True)

    p = sub.add_parser("eval", help="metrics report for a trained model")
    p.add_argument("--model", choices=pipeline.MODEL_IDS, default="cnn")
    p.add_argument("--split", choices=("validation", "test"), default="validation")

    p = sub.add_parser("gradcam", help="Grad-CAM + radiomics case-study bundle for one image")
    p.add_argument("image")
    p.add_argument("--target", default="predicted", help="'predicted' or a class index")

    p = sub.add_parser("sweep", help="resolution and noise robustness sweep")
    p.add_argument("--model", choices=pipeline.MODEL_IDS, default="cnn")
    p.add_argument("--split", choices=("validation", "test"), default="validation")
    return parser


def resolve_config(args) -> pipeline.RunConfig:
    config = pipeline.RunConfig.load(args.config) if args.config else pipeline.RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    return config


def run(args) -> int:
    if args.command == "make-fixtures":
        out = args.out or "fixtures"
        config = pipeline.cmd_make_fixtures(out, args.seed or 0, args.per_class,
                                            args.test_per_class, args.size)
        print(f"wrote fixtures and {out}/config.json (dataset_root={config.dataset_root})")
        return 0

    config = resolve_config(args)
    config.validate()
    if args.command == "extract":
        errors = pipeline.cmd_extract(config, resume=args.resume)
    elif args.command == "train-cnn":
        _, tlog, errors = pipeline.cmd_train_cnn(config)
        print("epoch loss:", ", ".join(f"{v:.4f}" for v in tlog.epoch_loss))
    elif args.command == "train-forest":
        fm = pipeline.cmd_train_forest(config, args.mode)
        errors = 0
        print(f"trained {len(fm.trees)} trees on {fm.n_features} features")
    elif args.command == "eval":
        report = pipeline.cmd_eval(config, args.model, args.split)
        errors = report.get("errors", 0)
        print(f"{args.model}/{args.split}: accuracy={report['accuracy']:.4f} "
              f"macro_f1={report['macro_f1']:.4f}")
    elif args.command == "gradcam":
        target = args.target if args.target == "predicted" else int(args.target)
        profile = pipeline.cmd_gradcam(config, args.image, target)
        errors = 0
        print(f"target class {profile['target_class']} ({profile['target_name']})")
    elif args.command == "sweep":
        result, errors = pipeline.cmd_sweep(config, args.model, args.split)
        sys.stdout.write(result.to_csv())
    else:  # pragma: no cover - argparse rejects unknown commands
        raise AssertionError(args.command)
    if errors:
        log.error("%d errors recorded", errors)
    return 1 if errors else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigurationError, EmptyDatasetError, pipeline.MissingArtifactError,
            ModelFormatError, ImageDecodeError, IndexError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
