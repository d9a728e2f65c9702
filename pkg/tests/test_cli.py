import csv
import json

import numpy as np
from iqjepa.cli import RESULT_COLUMNS, SUMMARY_COLUMNS, main
from iqjepa.storage.checkpoint import checkpoint_id
from iqjepa.storage.dataset import read_dataset, read_manifest
from iqjepa.storage.embedding import read_embeddings
from iqjepa.storage.lock import LOCK_NAME
from iqjepa.storage.pgm import read_pgm
from pytest import fixture, mark

SMALL_SYNTH = [
    "--waveforms", "2",
    "--aoa-classes", "3",
    "--replicas", "5",
    "--window", "16",
    "--antennas", "2",
    "--seed", "1",
]


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out), *SMALL_SYNTH]) == 0
    return out


def test_no_command():
    assert main([]) == 2


def test_help():
    assert main(["--help"]) == 0


def test_missing_out():
    assert main(["synth"]) == 2


def test_synth(synth_dir):
    assert read_manifest(synth_dir)["splits"] == {"train": 24, "test": 6}
    config = json.loads((synth_dir / "config.json").read_text())
    assert config["aoa_classes"] == 3 and config["schema_version"] == 1
    assert not (synth_dir / LOCK_NAME).exists()


def test_config_file(tmp_path):
    path = tmp_path / "synth.json"
    small = {"waveforms": 1, "aoa_classes": 1, "replicas": 2, "window": 8}
    path.write_text(json.dumps({**small, "antennas": 2}))
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert read_manifest(tmp_path / "a")["splits"] == {"train": 2}
    path.write_text(json.dumps({"bogus": 1}))
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "b")]) == 2
    path.write_text(json.dumps({"schema_version": 2}))
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "b")]) == 2
    path.write_text("{")
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "b")]) == 2


def test_invalid_value(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--waveforms", "9"]) == 2


def test_locked_output(tmp_path):
    out = tmp_path / "data"
    out.mkdir()
    (out / LOCK_NAME).write_text("1")
    assert main(["synth", "--out", str(out), *SMALL_SYNTH]) == 3


def test_pretrain_missing_dataset(tmp_path):
    assert main(["pretrain", "--out", str(tmp_path)]) == 2
    missing = str(tmp_path / "none")
    assert main(["pretrain", "--dataset", missing, "--out", str(tmp_path / "o")]) == 3


def test_pretrain_grid_mismatch(synth_dir, tmp_path):
    args = ["pretrain", "--dataset", str(synth_dir), "--out", str(tmp_path / "ckpt")]
    assert main([*args, "--architecture", "wjcnn-tiny", "--upsampling", "3"]) == 3


@mark.timeout(120)
def test_pretrain_and_eval(synth_dir, tmp_path):
    ckpt = tmp_path / "ckpt"
    assert main([
        "pretrain",
        "--dataset", str(synth_dir),
        "--out", str(ckpt),
        "--architecture", "wjcnn-tiny",
        "--epochs", "1",
        "--batch-size", "8",
        "--mask", "random",
    ]) == 0
    metrics = _rows(ckpt / "metrics.csv")
    assert len(metrics) == 1 + 3
    assert (ckpt / "params.bin").exists() and (ckpt / "config.json").exists()

    out = tmp_path / "eval"
    assert main([
        "eval",
        "--checkpoint", str(ckpt),
        "--dataset", str(synth_dir),
        "--out", str(out),
        "--shots", "1,2",
        "--seeds", "2",
        "--method", "knn",
    ]) == 0
    results = _rows(out / "results.csv")
    assert tuple(results[0]) == RESULT_COLUMNS
    assert len(results) == 1 + 2 * 2 * 2
    summary = _rows(out / "summary.csv")
    assert tuple(summary[0]) == SUMMARY_COLUMNS
    assert [r[:3] for r in summary[1:]] == [
        ["modulation", "knn", "1"],
        ["modulation", "knn", "2"],
        ["aoa", "knn", "1"],
        ["aoa", "knn", "2"],
    ]
    assert all(0.0 <= float(r[4]) <= 1.0 for r in results[1:])
    cache = read_embeddings(out / "embeddings" / "test")
    assert cache.vectors.shape == (6, 8)
    assert cache.checkpoint_id == checkpoint_id(ckpt)


def test_eval_needs_checkpoint(synth_dir, tmp_path):
    args = ["eval", "--dataset", str(synth_dir), "--out", str(tmp_path / "e")]
    assert main(args) == 2


def test_eval_random_init(synth_dir, tmp_path):
    out = tmp_path / "eval"
    assert main([
        "eval",
        "--init", "random",
        "--architecture", "wjcnn-tiny",
        "--dataset", str(synth_dir),
        "--out", str(out),
        "--shots", "1",
        "--seeds", "1",
        "--method", "knn,linear",
        "--task", "aoa",
    ]) == 0
    assert len(_rows(out / "results.csv")) == 1 + 2
    cache = read_embeddings(out / "embeddings" / "train")
    assert cache.checkpoint_id == "random-wjcnn-tiny-0"


def test_eval_too_many_shots(synth_dir, tmp_path):
    assert main([
        "eval",
        "--init", "random",
        "--architecture", "wjcnn-tiny",
        "--dataset", str(synth_dir),
        "--out", str(tmp_path / "eval"),
        "--shots", "100",
        "--method", "knn",
    ]) == 3


def test_mask_viz_antenna(tmp_path):
    args = ["--geometry", "antenna", "--seed", "3"]
    assert main(["mask-viz", "--out", str(tmp_path), *args]) == 0
    image = read_pgm(tmp_path / "antenna.pgm")
    assert image.shape == (256, 256)
    for band in range(4):
        rows = image[64 * band : 64 * (band + 1)]
        assert np.all(rows == rows[0, 0])
    assert np.mean(image == 0) == 0.25


def test_mask_viz_time_and_random(tmp_path):
    args = ["--geometry", "time,random", "--seed", "5"]
    assert main(["mask-viz", "--out", str(tmp_path), *args]) == 0
    time = read_pgm(tmp_path / "time.pgm")
    black = np.flatnonzero(np.all(time == 0, axis=0))
    assert len(black) == 64 and np.all(np.diff(black) == 1)
    assert np.all(time[:, np.any(time > 0, axis=0)] == 255)
    random = read_pgm(tmp_path / "random.pgm")
    assert 0.25 <= np.mean(random == 0) <= 0.25 + 2048 / 65536


def test_mask_viz_all_geometries(tmp_path):
    assert main(["mask-viz", "--out", str(tmp_path)]) == 0
    for name in ("random", "antenna", "time", "multiblock"):
        image = read_pgm(tmp_path / f"{name}.pgm")
        assert set(np.unique(image).tolist()) == {0, 255}
    args = ["mask-viz", "--out", str(tmp_path / "x"), "--geometry", "diagonal"]
    assert main(args) == 2


def _capture(tmp_path, antennas, samples, meta=None):
    raw = tmp_path / "cap.bin"
    values = np.random.default_rng(0).standard_normal(antennas * samples * 2)
    values.astype("<f4").tofile(raw)
    meta = meta or {"antennas": antennas, "sample_rate": 2e6, "labels": [0, 1]}
    (tmp_path / "cap.json").write_text(json.dumps(meta))
    return raw


def test_ingest(tmp_path):
    raw = _capture(tmp_path, 4, 1024)
    assert main(["ingest", str(raw), "--out", str(tmp_path / "out")]) == 0
    train = read_dataset(tmp_path / "out")
    assert train.data.shape == (4, 2, 4, 256)


def test_ingest_tiling(tmp_path):
    raw = _capture(tmp_path, 1, 1024)
    args = [
        "ingest",
        str(raw),
        "--out",
        str(tmp_path / "out"),
        "--window",
        "128",
        "--tile-antennas",
        "4",
    ]
    assert main(args) == 0
    train = read_dataset(tmp_path / "out")
    assert train.data.shape == (8, 2, 4, 128)
    assert train.tiled_from == 1
    default = ["ingest", str(raw), "--out", str(tmp_path / "auto"), "--window", "128"]
    assert main(default) == 0
    assert read_dataset(tmp_path / "auto").data.shape == (8, 2, 4, 128)


def test_ingest_errors(tmp_path):
    assert main(["ingest", "--out", str(tmp_path / "out")]) == 2
    raw = _capture(tmp_path, 4, 64)
    (tmp_path / "cap.json").write_text('{"antennas": 4,')
    assert main(["ingest", str(raw), "--out", str(tmp_path / "out")]) == 3
    (tmp_path / "cap.json").write_text(json.dumps({"antennas": 4, "sample_rate": 1}))
    assert main(["ingest", str(raw), "--out", str(tmp_path / "out")]) == 3
