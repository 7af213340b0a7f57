"""Command-line entry point: train, predict, eval, size-analysis, gradcheck."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .checkpoint import Checkpoint, CheckpointError
from .config import ConfigError, RunConfig, dump_config, load_config, parse_value
from .data import DatasetError, load_dataset, load_pairs, read_mask, resize_image, write_gray
from .metrics import MetricReport, evaluate_dataset
from .model import CaraNet, ModelConfig
from .size_analysis import SizeSample, build_curve, difference_curve, filter_small, plot_svg
from .tensor import Tensor, bilinear_resize
from .train import TrainConfig, Trainer

log = logging.getLogger("caranet")

EPOCH_COLUMNS = ("epoch", "mean_loss", "mean_dice")
EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_DATASET, EXIT_CHECK = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(f"{kind} error: {message}")
        self.code = code


def _typed(key: str):
    def convert(text: str):
        try:
            return parse_value(key, text)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    convert.__name__ = key
    return convert


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--input-size", type=int)
    p.add_argument("--cfp-variant", choices=("regular", "asymmetric"))
    p.add_argument("--cfp-fusion", choices=("concat", "sum"))
    p.add_argument("--small-threshold", type=float)
    p.add_argument("--interval-width", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--scales", type=_typed("scales"), help="comma-separated, e.g. 0.75,1.0,1.25")
    p.add_argument("--train-ratio", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caranet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the training split; writes a checkpoint and epoch CSV")
    _add_shared(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--clip", type=float)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--channels", type=int)

    p = sub.add_parser("predict", help="write probability maps and binary masks for a split")
    _add_shared(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--exact", action="store_true", help="also write float64 .npy maps")

    p = sub.add_parser("eval", help="score predictions against the masks of a split")
    _add_shared(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="metric report CSV")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")

    p = sub.add_parser("size-analysis", help="interval-averaged Dice curves from metric reports")
    _add_shared(p)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--baseline", type=Path, help="second report; enables the difference curve")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_shared(p)
    p.add_argument("--skip-model", action="store_true")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    keys = ("seed", "input_size", "cfp_variant", "cfp_fusion", "small_threshold", "interval_width",
            "lr", "scales", "train_ratio", "epochs", "batch_size", "clip", "base_channels", "channels")
    flags = {k: getattr(args, k, None) for k in keys}
    try:
        return load_config(args.config, **flags)
    except ConfigError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None


def _manifest(args, cfg: RunConfig):
    return load_dataset(args.data, cfg.train_ratio, cfg.seed, cfg.input_size)


def cmd_train(args, cfg: RunConfig) -> None:
    manifest = _manifest(args, cfg)
    if not manifest.train:
        raise DatasetError(f"{args.data}: training split is empty")
    pairs = load_pairs(manifest.train, cfg.input_size)
    model_cfg = ModelConfig.build(cfg.base_channels, cfg.channels, cfg.cfp_variant, cfg.cfp_fusion)
    try:
        model = CaraNet(model_cfg, cfg.seed)
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None
    trainer = Trainer(model, TrainConfig(cfg.scales, cfg.epochs, cfg.batch_size, cfg.input_size,
                                         cfg.lr, cfg.seed, clip=cfg.clip))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.txt").write_text(dump_config(cfg))
    with open(args.out / "epochs.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPOCH_COLUMNS)
        for stats in trainer.fit(pairs):
            writer.writerow([stats.epoch, repr(stats.mean_loss), repr(stats.mean_dice)])
            fh.flush()
            print(f"epoch {stats.epoch}: loss {stats.mean_loss:.5f} dice {stats.mean_dice:.4f}")
    checkpoint.save(args.out / "model.ckpt", Checkpoint.from_model(model, trainer.optimizer.state))
    print(f"trained on {len(pairs)} images; checkpoint {args.out / 'model.ckpt'}")


def _load_model(path: Path) -> CaraNet:
    try:
        return checkpoint.load(path).build_model()
    except FileNotFoundError as exc:
        raise CliError("checkpoint", str(exc), EXIT_CHECKPOINT) from None
    except (CheckpointError, KeyError) as exc:
        raise CliError("checkpoint", str(exc), EXIT_CHECKPOINT) from None


def cmd_predict(args, cfg: RunConfig) -> None:
    model = _load_model(args.checkpoint)
    manifest = _manifest(args, cfg)
    stride = model.config.backbone.max_stride
    if cfg.input_size % stride:
        raise CliError("config", f"input-size {cfg.input_size} is not a multiple of {stride}", EXIT_CONFIG)
    samples = manifest.split(args.split)
    (args.out / "binary").mkdir(parents=True, exist_ok=True)
    for s in samples:
        (key, img, mask), = load_pairs([s], None)
        x = resize_image(img, cfg.input_size)[None]
        out = model(Tensor(x)).prediction
        # back to the mask's native resolution
        prob = bilinear_resize(out, *mask.shape).data[0, 0] if out.shape[2:] != mask.shape else out.data[0, 0]
        prob = np.clip(prob, 0.0, 1.0)
        write_gray(args.out / f"{key}.png", prob)
        write_gray(args.out / "binary" / f"{key}.png", (prob >= 0.5).astype(np.float64))
        if args.exact:
            np.save(args.out / f"{key}.npy", prob)
    print(f"wrote {len(samples)} predictions to {args.out}")


def read_prediction(pred_dir: Path, key: str) -> np.ndarray:
    exact = pred_dir / f"{key}.npy"
    if exact.is_file():
        return np.load(exact)
    png = pred_dir / f"{key}.png"
    if not png.is_file():
        raise DatasetError(f"no prediction for {key} in {pred_dir}")
    from PIL import Image

    with Image.open(png) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def cmd_eval(args, cfg: RunConfig) -> None:
    manifest = _manifest(args, cfg)
    samples = manifest.split(args.split)
    pairs = ((s.id, read_prediction(args.pred, s.id), read_mask(s.mask_path)) for s in samples)
    try:
        report = evaluate_dataset(pairs)
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(str(exc)) from None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(args.out)
    means = report.means
    print(" ".join(f"{k} {v:.4f}" for k, v in means.items()))


def _samples(path: Path) -> list[SizeSample]:
    try:
        report = MetricReport.from_csv(path)
    except FileNotFoundError:
        raise DatasetError(f"metric report not found: {path}") from None
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"{path}: {exc}") from None
    return [SizeSample(r.id, r.size_ratio, r.dice) for r in report.rows]


def cmd_size_analysis(args, cfg: RunConfig) -> None:
    kept = filter_small(_samples(args.report), cfg.small_threshold)
    if not kept:
        raise DatasetError(f"no samples below size ratio {cfg.small_threshold}")
    args.out.mkdir(parents=True, exist_ok=True)
    curve = build_curve(kept, cfg.interval_width)
    curve.to_csv(args.out / "curve.csv")
    print(f"{len(kept)} samples in {len(curve.occupied())} occupied bins")
    other = None
    if args.baseline is not None:
        base_kept = filter_small(_samples(args.baseline), cfg.small_threshold)
        if not base_kept:
            raise DatasetError(f"baseline has no samples below size ratio {cfg.small_threshold}")
        other = build_curve(base_kept, cfg.interval_width)
        other.to_csv(args.out / "baseline_curve.csv")
        diff = difference_curve(curve, other)
        diff.to_csv(args.out / "difference.csv", curve)
        print(f"positive sum {diff.positive_sum:.4f} negative sum {diff.negative_sum:.4f}")
    if args.svg:
        plot_svg(args.out / "curve.svg", curve)
        if other is not None:
            plot_svg(args.out / "difference.svg", curve, other)


def cmd_gradcheck(args, cfg: RunConfig) -> None:
    from .gradcheck import run_suite

    failed = 0
    for r in run_suite(cfg.seed, include_model=not args.skip_model):
        status = "ok" if r.ok else "FAIL"
        print(f"{status:4s} {r.name:24s} max rel err {r.max_error:.3e} ({r.checked} entries)")
        failed += not r.ok
    if failed:
        raise CliError("gradcheck", f"{failed} case(s) above tolerance", EXIT_CHECK)


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "size-analysis": cmd_size_analysis, "gradcheck": cmd_gradcheck}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"caranet: {exc}", file=sys.stderr)
        return exc.code
    except DatasetError as exc:
        print(f"caranet: dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except ConfigError as exc:
        print(f"caranet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
