import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from iqjepa.config import (
    EvalConfig,
    IngestConfig,
    MaskVizConfig,
    PretrainConfig,
    SynthConfig,
    dump_config,
    resolve_config,
)
from iqjepa.errors import ConfigError, DataError, IQJepaError
from iqjepa.evaluate.embeddings import Task, extract_cache, task_set
from iqjepa.evaluate.fewshot import ProbeMethod, few_shot_eval
from iqjepa.model.encoder import Encoder, build_encoder, get_encoder_config
from iqjepa.model.masks import generate_mask, sample_rng, upsample_mask
from iqjepa.runtime import configure_torch
from iqjepa.signal.grid import DEFAULT_ANTENNAS, square_grid_factor
from iqjepa.signal.synth import build_dataset
from iqjepa.storage.checkpoint import checkpoint_id, load_checkpoint
from iqjepa.storage.dataset import IQDataset, read_dataset, read_manifest
from iqjepa.storage.embedding import write_embeddings
from iqjepa.storage.ingest import ingest
from iqjepa.storage.lock import output_lock
from iqjepa.storage.pgm import mask_image, write_pgm
from iqjepa.train.pretrain import PretrainResult, pretrain

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("task", "method", "shots", "seed", "accuracy")
SUMMARY_COLUMNS = ("task", "method", "shots", "mean", "std", "seeds")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers: {text}"
        ) from e


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _require(parser: argparse.ArgumentParser, config: Any, *names: str) -> None:
    missing = [n for n in names if not getattr(config, n)]
    if missing:
        options = ", ".join("--" + n for n in missing)
        parser.error(f"missing required option(s): {options}")


def _grid_factor(dataset: IQDataset, upsampling: Optional[int]) -> int:
    try:
        return upsampling or square_grid_factor(dataset.antennas, dataset.window)
    except ValueError as e:
        raise DataError(f"dataset grid: {e}") from e


def _check_grid(stride: int, dataset: IQDataset, factor: int) -> None:
    height = dataset.antennas * factor
    if height % stride or dataset.window % stride:
        raise DataError(
            f"dataset grid {height}x{dataset.window} is not divisible by "
            f"the encoder stride {stride}"
        )


def cmd_synth(config: SynthConfig) -> Path:
    out = Path(config.out)
    with output_lock(out):
        splits = build_dataset(config.dataset_spec(), out)
        dump_config(config, out)
    manifest = read_manifest(out)
    total = sum(manifest["splits"].values())
    parts = ", ".join(f"{k}: {v}" for k, v in manifest["splits"].items())
    print(f"{out}: {total} samples ({parts}), {len(splits)} splits")
    return out


def cmd_pretrain(config: PretrainConfig) -> PretrainResult:
    dataset = read_dataset(config.dataset, config.split)
    train = config.train_config()
    factor = _grid_factor(dataset, train.upsampling)
    _check_grid(get_encoder_config(train.architecture).total_stride, dataset, factor)
    configure_torch(train.seed)
    out = Path(config.out)
    with output_lock(out):
        result = pretrain(train, dataset, out)
        dump_config(config, out)
    print(f"{out}: checkpoint {result.checkpoint_id}, {len(result.reports)} steps")
    return result


def _load_encoder(config: EvalConfig) -> Tuple[Encoder, str]:
    if config.init == "random":
        encoder = build_encoder(config.architecture, seed=config.seed)
        return encoder, f"random-{config.architecture}-{config.seed}"
    return load_checkpoint(config.checkpoint), checkpoint_id(config.checkpoint)


def evaluate_task(
    config: EvalConfig,
    caches: Dict[str, Any],
    task: Task,
) -> Tuple[List[tuple], List[tuple]]:
    try:
        train = task_set(caches["train"], task)
        test = task_set(caches["test"], task)
    except ValueError as e:
        logger.warning("skipping %s: %s", task.value, e)
        return [], []
    rows, summary = [], []
    for method in (ProbeMethod(m) for m in config.methods):
        try:
            results = few_shot_eval(
                train, test, config.protocol(), method, config.probe(), config.k
            )
        except ValueError as e:
            raise DataError(f"{task.value} / {method.value}: {e}") from e
        for result in results:
            for seed, accuracy in enumerate(result.accuracies):
                rows.append(
                    (task.value, method.value, result.shots, seed, repr(accuracy))
                )
            summary.append(
                (
                    task.value,
                    method.value,
                    result.shots,
                    repr(result.mean),
                    repr(result.std),
                    len(result.accuracies),
                )
            )
    return rows, summary


def _write_csv(path: Path, header: Sequence[str], rows: List[tuple]) -> Path:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path


def cmd_eval(config: EvalConfig) -> Path:
    configure_torch(config.seed)
    encoder, ckpt_id = _load_encoder(config)
    splits = {name: read_dataset(config.dataset, name) for name in ("train", "test")}
    out = Path(config.out)
    with output_lock(out):
        caches = {}
        for name, dataset in splits.items():
            factor = _grid_factor(dataset, config.upsampling)
            _check_grid(encoder.total_stride, dataset, factor)
            caches[name] = extract_cache(encoder, dataset, ckpt_id, factor)
            write_embeddings(caches[name], out / "embeddings" / name)
        rows, summary = [], []
        for task in (Task(t) for t in config.tasks):
            task_rows, task_summary = evaluate_task(config, caches, task)
            rows.extend(task_rows)
            summary.extend(task_summary)
        results = _write_csv(out / "results.csv", RESULT_COLUMNS, rows)
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
        dump_config(config, out)
    for task, method, shots, mean, std, _ in summary:
        print(
            f"{task:<10} {method:<6} {shots:>4}-shot "
            f"{float(mean):.4f} +- {float(std):.4f}"
        )
    return results


def cmd_mask_viz(config: MaskVizConfig) -> List[Path]:
    stride = get_encoder_config(config.architecture).total_stride
    factor = config.upsampling or square_grid_factor(config.antennas, config.window)
    height = config.antennas * factor
    if height % stride or config.window % stride:
        raise ConfigError(f"grid {height}x{config.window} is not divisible by {stride}")
    dims = (height // stride, config.window // stride)
    out = Path(config.out)
    paths = []
    with output_lock(out):
        for geometry in config.geometries:
            spec = config.mask_spec(geometry).resolve(dims, config.antennas)
            mask = generate_mask(spec, dims, sample_rng(spec.seed, config.index))
            image = mask_image(upsample_mask(mask, stride))
            paths.append(write_pgm(out / f"{spec.geometry.value}.pgm", image))
            logger.info(
                "%s mask: %.4f of pixels hidden",
                spec.geometry.value,
                mask.masked_fraction,
            )
        dump_config(config, out)
    return paths


def cmd_ingest(config: IngestConfig) -> Path:
    out = Path(config.out)
    with output_lock(out):
        splits = ingest(
            config.input,
            out,
            meta_path=config.meta,
            window=config.window,
            stride=config.stride,
            tile_to=config.tile_antennas,
            test_fraction=config.test_fraction,
        )
        dump_config(config, out)
    print(f"{out}: " + ", ".join(f"{k}: {len(v)}" for k, v in splits.items()))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iqjepa",
        description="Masked latent prediction pretraining for multi-antenna IQ signals",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--out", help="output directory")
        return p

    p = command("synth", "generate a synthetic labelled dataset")
    p.add_argument("--waveforms", type=int)
    p.add_argument("--aoa-classes", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--antennas", type=int)
    p.add_argument("--cfo-max", type=float)
    p.add_argument("--snr-db", type=float, nargs=2, metavar=("LOW", "HIGH"))
    p.add_argument("--no-noise", dest="noise", action="store_const", const=False)

    p = command("pretrain", "pretrain an encoder on a dataset")
    p.add_argument("--dataset")
    p.add_argument("--split")
    p.add_argument("--mask", choices=["random", "antenna", "time", "multiblock"])
    p.add_argument("--mask-fraction", type=float)
    p.add_argument("--patch-latent", type=int, nargs=2, metavar=("ROWS", "COLS"))
    p.add_argument("--block-units", type=int)
    p.add_argument("--scattered", action="store_const", const=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--base-lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=["float32", "float64"])
    p.add_argument("--architecture")
    p.add_argument("--upsampling", type=int)
    p.add_argument("--clip-grad-norm", type=float)
    p.add_argument("--log-every", type=int)
    p.add_argument(
        "--wall-time", dest="record_wall_time", action="store_const", const=True
    )

    p = command("eval", "evaluate a frozen encoder with few-shot probes")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--init", choices=["checkpoint", "random"])
    p.add_argument("--architecture")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=_int_list)
    p.add_argument("--seeds", type=int)
    p.add_argument("--method", dest="methods", type=_str_list)
    p.add_argument("--task", dest="tasks", type=_str_list)
    p.add_argument("--k", type=int)
    p.add_argument("--upsampling", type=int)

    p = command("mask-viz", "export mask geometries as PGM images")
    p.add_argument("--geometry", dest="geometries", type=_str_list)
    p.add_argument("--seed", type=int)
    p.add_argument("--index", type=int)
    p.add_argument("--mask-fraction", type=float)
    p.add_argument("--patch-latent", type=int, nargs=2, metavar=("ROWS", "COLS"))
    p.add_argument("--block-units", type=int)
    p.add_argument("--scattered", action="store_const", const=True)
    p.add_argument("--antennas", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--upsampling", type=int)
    p.add_argument("--architecture")

    p = command("ingest", "convert raw interleaved IQ into a dataset")
    p.add_argument("input", nargs="?")
    p.add_argument("--meta")
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument(
        "--tile-antennas",
        type=int,
        help=f"rows for single-antenna captures (default {DEFAULT_ANTENNAS})",
    )
    p.add_argument("--test-fraction", type=float)
    return parser


_COMMANDS = {
    "synth": (SynthConfig, cmd_synth, ("out",)),
    "pretrain": (PretrainConfig, cmd_pretrain, ("dataset", "out")),
    "eval": (EvalConfig, cmd_eval, ("dataset", "out")),
    "mask-viz": (MaskVizConfig, cmd_mask_viz, ("out",)),
    "ingest": (IngestConfig, cmd_ingest, ("input", "out")),
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    config_cls, run, required = _COMMANDS[args.command]
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "verbose")
    }
    try:
        config = resolve_config(config_cls, args.config, overrides)
        try:
            _require(parser, config, *required)
            if isinstance(config, EvalConfig) and config.init == "checkpoint":
                _require(parser, config, "checkpoint")
        except SystemExit as e:
            return int(e.code or 0)
        run(config)
    except IQJepaError as e:
        logger.error("%s", e)
        return e.exit_code
    except ValueError as e:
        logger.error("invalid parameters: %s", e)
        return ConfigError.exit_code
    except OSError as e:
        logger.error("%s", e)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
