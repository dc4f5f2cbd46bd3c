"""``adatok`` command line: every pipeline stage as a subcommand writing CSV or binary files.

Exit status is 0 on success, 1 on usage errors and 2 on data or contract errors.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import torch

from ._calibration import (
    RatioDistribution,
    RatioSet,
    ScoreHistogram,
    Thresholds,
    average_compression,
    avg_tokens,
    calibrate_thresholds,
    exact_agreement,
    max_acceptable_ratio,
    pearson_r,
    relative_flops,
    token_count,
    token_reduction,
    tolerance_profile,
)
from ._checkpoint import load_model
from ._complexity import dct_complexity, lpips_proxy, pixel_metrics
from ._errors import AdatokError, ConfigurationError, UndefinedCorrelation, UsageError
from ._features import FeatureExtractor
from ._images import load_png, save_png
from ._latent_io import LatentFileRecord, read_latents, write_latents
from ._nested_vae import LatentSample, NestedVae, NestedVaeConfig, reparameterize
from ._scoring import HttpScorerBackend, Scorer
from ._synthetic import generate_corpus
from ._tables import (
    EVAL_COLUMNS,
    ORACLE_COLUMNS,
    PROFILE_COLUMNS,
    REPORT_COLUMNS,
    THRESHOLD_COLUMNS,
    ScoreRow,
    format_float,
    read_csv,
    read_descriptions,
    read_score_csv,
    write_csv,
    write_descriptions,
    write_score_csv,
)
from ._trainer import (
    LabeledDataset,
    LabeledRecord,
    TrainConfig,
    Trainer,
    assign_ratios,
    derive_seed,
)

__all__ = ("run", "main", "build_parser",)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError("{}: {}".format(self.prog, message))


def _ratios(text: str) -> RatioSet:
    try:
        return RatioSet.parse(text)
    except AdatokError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _thresholds(text: str) -> Thresholds:
    try:
        return Thresholds.parse(text)
    except AdatokError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive, got {}".format(text))
    return value


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _image_path(images: Path, image_id: str) -> Path:
    return images / "{}.png".format(image_id)


def _image_ids(images: Path) -> List[str]:
    return sorted(path.stem for path in images.glob("*.png"))


# synth

def cmd_synth(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    images = out / "images"
    images.mkdir(exist_ok=True)
    corpus = generate_corpus(args.count, args.resolution, seed=args.seed)
    for item in corpus:
        save_png(item.image, _image_path(images, item.id))
    write_descriptions(((item.id, item.description) for item in corpus),
                       out / "descriptions.jsonl")
    logger.info("wrote %d synthetic images to %s", len(corpus), images)
    return EXIT_OK


# score

def _make_scorer(args: argparse.Namespace) -> Scorer:
    if args.scorer == "mock":
        return Scorer(None)
    if not args.endpoint:
        raise UsageError("--scorer http needs --endpoint")
    backend = HttpScorerBackend(args.endpoint, timeout=args.timeout)
    return Scorer(backend, retries=args.retries, delay=args.delay,
                  fallback=not args.no_fallback)


def cmd_score(args: argparse.Namespace) -> int:
    items = read_descriptions(args.descriptions)
    labeled = assign_ratios(items, _make_scorer(args), args.thresholds, args.ratios,
                            workers=args.workers)
    rows = []
    for image_id, score, ratio in labeled:
        dct = None
        if args.images is not None:
            dct = dct_complexity(load_png(_image_path(Path(args.images), image_id)),
                                 args.quality)
        rows += [ScoreRow(image_id, score.value, ratio, dct_complexity=dct,
                          source=score.source, attempts=score.attempts)]
    write_score_csv(rows, _out_dir(args) / "scores.csv")
    return EXIT_OK


# calibrate

def cmd_calibrate(args: argparse.Namespace) -> int:
    rows = read_score_csv(args.scores)
    scores = [row.score for row in rows if row.score is not None]
    if not scores:
        raise UsageError("{} has no scores".format(args.scores))
    hist = ScoreHistogram.from_scores(scores)
    candidates = calibrate_thresholds(hist, args.ratios, args.target_ratio,
                                      tolerance=args.tolerance)
    write_csv(_out_dir(args) / "thresholds.csv", THRESHOLD_COLUMNS, (
        [rank, c.thresholds.a, c.thresholds.b, format_float(c.achieved),
         format_float(c.entropy)] + [format_float(p) for p in c.distribution]
        for rank, c in enumerate(candidates, 1)))
    return EXIT_OK


# oracle

def _mse_rows(path: str, ratios: RatioSet) -> List[Tuple[str, Dict[int, float]]]:
    out = []
    for row in read_score_csv(path):
        if row.mse is None:
            logger.warning("%s: row %r lacks MSE values, skipped", path, row.id)
            continue
        out += [(row.id, dict(zip(ratios, row.mse)))]
    return out


def cmd_oracle(args: argparse.Namespace) -> int:
    rows = _mse_rows(args.mse, args.ratios)
    out = _out_dir(args)
    write_csv(out / "oracle.csv", ORACLE_COLUMNS,
              ([image_id, max_acceptable_ratio(mse, args.tau)] for image_id, mse in rows))
    if args.profile:
        if not rows:
            raise UsageError("{} has no complete MSE rows".format(args.mse))
        profile = tolerance_profile([mse for _, mse in rows], args.ratios, args.tau)
        write_csv(out / "profile.csv", PROFILE_COLUMNS, (
            [format_float(args.tau), ratio, format_float(fraction)]
            for ratio, fraction in profile.items()))
    return EXIT_OK


# train

def _load_configs(args: argparse.Namespace) -> Tuple[NestedVaeConfig, TrainConfig]:
    model_data: Dict[str, Any] = {}
    train_data: Dict[str, Any] = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except ValueError as e:
                raise ConfigurationError("{}: {}".format(args.config, e)) from None
        model_data = dict(data.get("model", {}))
        train_data = dict(data.get("train", {}))
    if args.ratios is not None:
        model_data["ratios"] = args.ratios.to_list()
    for flag, name in (("steps", "steps"), ("batch", "batch_size"), ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            train_data[name] = value
    steps = train_data.get("steps", TrainConfig.steps)
    if train_data.get("gan_start_step", TrainConfig.gan_start_step) > steps:
        logger.info("gan_start_step lowered to %d to fit the step count", steps)
        train_data["gan_start_step"] = steps
    try:
        return NestedVaeConfig(**model_data), TrainConfig.from_dict(train_data)
    except TypeError as e:
        raise ConfigurationError("bad config: {}".format(e)) from None


def cmd_train(args: argparse.Namespace) -> int:
    model_config, train_config = _load_configs(args)
    items = read_descriptions(args.descriptions)
    out = _out_dir(args)
    images = Path(args.images)

    if args.fixed_ratio is not None:
        if args.fixed_ratio not in model_config.ratios:
            raise UsageError("--fixed-ratio {} is not one of {}".format(
                args.fixed_ratio, tuple(model_config.ratios)))
        labels = {image_id: args.fixed_ratio for image_id, _ in items}
    elif args.scores:
        labels = {row.id: row.ratio for row in read_score_csv(args.scores)
                  if row.ratio is not None}
    else:
        if args.thresholds is None:
            raise UsageError("train needs --scores, --fixed-ratio or --thresholds")
        labeled = assign_ratios(items, _make_scorer(args), args.thresholds,
                                model_config.ratios, csv_path=out / "scores.csv",
                                workers=args.workers)
        labels = {image_id: ratio for image_id, _, ratio in labeled}

    records = []
    for image_id, desc in items:
        if image_id not in labels:
            logger.warning("no ratio for %r, skipped", image_id)
            continue
        records += [LabeledRecord(image_id, load_png(_image_path(images, image_id)), desc,
                                  labels[image_id])]
    dataset = LabeledDataset(records, model_config.ratios)

    model = NestedVae(model_config, seed=train_config.seed)
    trainer = Trainer(model, train_config)
    if args.resume:
        trainer.resume(args.resume)
    final = trainer.train_loop(dataset, Path(args.checkpoint_dir or out / "checkpoints"),
                               metrics_path=out / "metrics.csv")
    logger.info("training finished: %s (adapter updates %s)", final, trainer.adapter_updates)
    return EXIT_OK


# encode / decode

def _ratio_for(args: argparse.Namespace, model: NestedVae) -> Callable[[str], Optional[int]]:
    if args.ratio is not None:
        model.config.tap_index(args.ratio)
        return lambda image_id: args.ratio
    if not args.scores:
        raise UsageError("encode needs --ratio or --scores")
    labels = {row.id: row.ratio for row in read_score_csv(args.scores)}
    return lambda image_id: labels.get(image_id)


def cmd_encode(args: argparse.Namespace) -> int:
    model = load_model(args.checkpoint)
    ratio_for = _ratio_for(args, model)
    images = Path(args.images)
    records = []
    with torch.no_grad():
        for index, image_id in enumerate(_image_ids(images)):
            ratio = ratio_for(image_id)
            if ratio is None:
                logger.warning("no ratio for %r, skipped", image_id)
                continue
            dist = model.encode(load_png(_image_path(images, image_id)), ratio)
            if args.sample:
                sample = reparameterize(dist, derive_seed(args.seed, 3, index))
                records += [LatentFileRecord.from_sample(image_id, sample)]
            else:
                records += [LatentFileRecord.from_distribution(image_id, dist)]
    size = write_latents(records, _out_dir(args) / "latents.catl",
                         latent_channels=model.config.latent_channels)
    logger.info("wrote %d latents (%d bytes)", len(records), size)
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    model = load_model(args.checkpoint)
    recon = _out_dir(args) / "recon"
    recon.mkdir(exist_ok=True)
    with torch.no_grad():
        for record in read_latents(args.latents):
            image = model.decode(record.to_sample())
            save_png(image.clamp(0.0, 1.0), _image_path(recon, record.id))
    return EXIT_OK


# eval

def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.checkpoint)
    extractor = FeatureExtractor(model.config.in_channels, seed=args.seed)
    images = Path(args.images)
    ratios = list(model.config.ratios)
    rows = []
    mse_rows = []
    with torch.no_grad():
        for image_id in _image_ids(images):
            image = load_png(_image_path(images, image_id))
            mses = []
            for ratio in ratios:
                dist = model.encode(image, ratio)
                recon = model.decode(LatentSample(dist.mu, ratio)).clamp(0.0, 1.0)
                metrics = pixel_metrics(image, recon)
                lpips = float(lpips_proxy(image, recon, extractor))
                rows += [[image_id, ratio, format_float(metrics.mse),
                          format_float(metrics.psnr), format_float(lpips)]]
                mses += [metrics.mse]
            mse_rows += [ScoreRow(image_id, mse_f1=mses[0], mse_f2=mses[1], mse_f3=mses[2])]
    out = _out_dir(args)
    write_csv(out / "eval.csv", EVAL_COLUMNS, rows)
    write_score_csv(mse_rows, out / "mse.csv")
    return EXIT_OK


# report

def _pearson(rows: List[List[str]], name: str, x: Sequence[float],
             y: Sequence[float]) -> None:
    if len(x) < 2:
        logger.warning("%s: fewer than two paired values, omitted", name)
        return
    try:
        rows += [[name, format_float(pearson_r(x, y))]]
    except UndefinedCorrelation as e:
        logger.warning("%s: %s, omitted", name, e)


def cmd_report(args: argparse.Namespace) -> int:
    ratios = args.ratios
    scored = read_score_csv(args.scores)
    labels = [row.ratio for row in scored if row.ratio is not None]
    if not labels:
        raise UsageError("{} has no ratio labels".format(args.scores))
    dist = RatioDistribution.from_labels(labels, ratios)
    baseline_ratio = args.baseline_ratio or ratios.f2
    baseline = token_count(args.resolution, baseline_ratio, args.patch)
    average = avg_tokens(dist, args.resolution, ratios, args.patch)

    rows: List[List[str]] = [
        ["images", str(len(labels))],
        ["p1", format_float(dist.p1)],
        ["p2", format_float(dist.p2)],
        ["p3", format_float(dist.p3)],
        ["average_compression", format_float(average_compression(dist, ratios))],
        ["avg_tokens", format_float(average)],
        ["baseline_tokens", str(baseline)],
        ["token_reduction_percent", format_float(token_reduction(average, baseline))],
        ["relative_flops", format_float(relative_flops(average, baseline))],
    ]
    with_dct = [row for row in scored if row.score is not None and
                row.dct_complexity is not None]
    _pearson(rows, "pearson_score_dct", [r.score for r in with_dct],
             [r.dct_complexity for r in with_dct])

    if args.oracle:
        oracle = {raw["id"]: int(raw["max_ratio"])
                  for raw in read_csv(args.oracle, required=ORACLE_COLUMNS)}
        paired = [row for row in scored if row.id in oracle]
        labeled = [row for row in paired if row.ratio is not None]
        if labeled:
            rows += [["exact_agreement_percent", format_float(exact_agreement(
                [row.ratio for row in labeled], [oracle[row.id] for row in labeled]))]]
        scored_pairs = [row for row in paired if row.score is not None]
        # higher scores mean less compression, so correlate against the negated ratio
        _pearson(rows, "pearson_score_oracle", [r.score for r in scored_pairs],
                 [-oracle[r.id] for r in scored_pairs])
        dct_pairs = [row for row in paired if row.dct_complexity is not None]
        _pearson(rows, "pearson_dct_oracle", [r.dct_complexity for r in dct_pairs],
                 [-oracle[r.id] for r in dct_pairs])
    write_csv(_out_dir(args) / "report.csv", REPORT_COLUMNS, rows)
    return EXIT_OK


def _common_parser(seed: Optional[int]) -> argparse.ArgumentParser:
    # subparsers share parent actions; one parent per --seed default
    common = _Parser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=seed)
    common.add_argument("--verbose", "-v", action="count", default=0)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser(0)

    ratios = _Parser(add_help=False)
    ratios.add_argument("--ratios", type=_ratios, default=RatioSet(4, 8, 16),
                        help="three doubling compression ratios, e.g. 4,8,16")

    scorer = _Parser(add_help=False)
    scorer.add_argument("--scorer", choices=("mock", "http"), default="mock")
    scorer.add_argument("--endpoint", help="HTTP scorer URL (token from ADATOK_SCORER_TOKEN)")
    scorer.add_argument("--retries", type=int, default=2)
    scorer.add_argument("--delay", type=float, default=1.0)
    scorer.add_argument("--timeout", type=_positive_float, default=30.0)
    scorer.add_argument("--no-fallback", action="store_true",
                        help="fail instead of falling back to the heuristic scorer")
    scorer.add_argument("--workers", type=int, default=1)

    parser = _Parser(prog="adatok", description="Content-adaptive image tokenizer toolkit")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    commands.required = True

    p = commands.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--count", type=int, default=8, help="images per stratum")
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = commands.add_parser("score", parents=[common, ratios, scorer],
                            help="descriptions to score/ratio CSV")
    p.add_argument("--descriptions", required=True)
    p.add_argument("--images", help="directory of <id>.png to add DCT complexity")
    p.add_argument("--thresholds", type=_thresholds, default=Thresholds(4, 7))
    p.add_argument("--quality", type=int, default=75)
    p.set_defaults(func=cmd_score)

    p = commands.add_parser("calibrate", parents=[common, ratios],
                            help="rank thresholds hitting a target average ratio")
    p.add_argument("--scores", required=True)
    p.add_argument("--target-ratio", type=_positive_float, required=True)
    p.add_argument("--tolerance", type=_positive_float, default=0.05)
    p.set_defaults(func=cmd_calibrate)

    p = commands.add_parser("oracle", parents=[common, ratios],
                            help="max acceptable ratio per image under tolerance tau")
    p.add_argument("--mse", required=True, help="CSV with mse_f1, mse_f2, mse_f3 columns")
    p.add_argument("--tau", type=_positive_float, required=True)
    p.add_argument("--profile", action="store_true", help="also write profile.csv")
    p.set_defaults(func=cmd_oracle)

    p = commands.add_parser("train", parents=[_common_parser(None), scorer],
                            help="train the nested VAE")
    p.add_argument("--descriptions", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--scores", help="score CSV whose ratio column labels the images")
    p.add_argument("--thresholds", type=_thresholds)
    p.add_argument("--fixed-ratio", type=int)
    p.add_argument("--ratios", type=_ratios)
    p.add_argument("--config", help="JSON file with 'model' and 'train' objects")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("encode", parents=[common], help="images to a CATL latent file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--scores", help="score CSV assigning each image its ratio")
    p.add_argument("--ratio", type=int, help="encode every image at this ratio")
    p.add_argument("--sample", action="store_true", help="store samples instead of mu/logvar")
    p.set_defaults(func=cmd_encode)

    p = commands.add_parser("decode", parents=[common], help="CATL latents to PNG images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--latents", required=True)
    p.set_defaults(func=cmd_decode)

    p = commands.add_parser("eval", parents=[common],
                            help="reconstruction metrics per image and ratio")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("report", parents=[common, ratios],
                            help="token accounting, correlations and agreement")
    p.add_argument("--scores", required=True)
    p.add_argument("--oracle", help="oracle CSV for agreement and correlations")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--patch", type=int, default=1)
    p.add_argument("--baseline-ratio", type=int)
    p.set_defaults(func=cmd_report)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose)
    try:
        return int(args.func(args))
    except UsageError as e:
        print("adatok {}: {}".format(args.command, e), file=sys.stderr)
        return EXIT_USAGE
    except (AdatokError, OSError) as e:
        print("adatok {}: {}".format(args.command, e), file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
