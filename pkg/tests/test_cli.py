"""Tests for the command line: exit codes, written artifacts and a full pipeline run."""

import json

import numpy as np
import pytest
from click.testing import CliRunner
from conftest import labeled_tree

from coronary_agmn.cli import _parse_levels, cli
from coronary_agmn.core.errors import InputError
from coronary_agmn.graph.attack import ATTACK_LEVELS
from coronary_agmn.imaging.pgm import BinaryMask, write_mask, write_pgm
from coronary_agmn.schemas.graph import load_graph, save_graph

TINY_TRAIN_ARGS = ["--steps", "2", "--batch-size", "2", "--hidden", "4", "--depth", "1", "--nmp", "1"]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def no_resize(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"resize_to": None}))
    return path


@pytest.fixture
def graph_dirs(tmp_path):
    """Labeled graph folders: six training graphs, two templates and two test graphs."""
    dirs = {name: tmp_path / name for name in ("graphs", "templates", "tests")}
    for folder in dirs.values():
        folder.mkdir()
    for k in range(6):
        save_graph(dirs["graphs"] / f"g{k}.json", labeled_tree(seed=k))
    for k in range(2):
        save_graph(dirs["templates"] / f"t{k}.json", labeled_tree(seed=10 + k))
        save_graph(dirs["tests"] / f"x{k}.json", labeled_tree(seed=20 + k))
    return dirs


def test_help(runner):
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("synth", "build-graph", "train", "label", "eval", "importance", "attack", "xval"):
        assert command in result.output


def test_synth_rejects_small_benchmarks(runner, tmp_path):
    result = runner.invoke(cli, ["synth", "--count", "5", "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_build_graph_on_empty_mask(runner, tmp_path, no_resize):
    """Test that a mask with nothing left after pruning exits with code 3."""
    write_mask(tmp_path / "mask.pgm", BinaryMask(np.zeros((64, 64), dtype=bool)))
    write_pgm(tmp_path / "gray.pgm", np.full((64, 64), 128, dtype=np.uint8))
    result = runner.invoke(
        cli,
        ["build-graph", "--mask", str(tmp_path / "mask.pgm"), "--gray", str(tmp_path / "gray.pgm"),
         "--config", str(no_resize), "--out", str(tmp_path / "out")],
    )
    assert result.exit_code == 3


def test_build_graph_on_y_mask(runner, tmp_path, y_mask, y_gray, no_resize):
    write_mask(tmp_path / "mask.pgm", y_mask)
    write_pgm(tmp_path / "gray.pgm", y_gray.intensities)
    out = tmp_path / "out"
    result = runner.invoke(
        cli,
        ["build-graph", "--mask", str(tmp_path / "mask.pgm"), "--gray", str(tmp_path / "gray.pgm"),
         "--view", "RAO", "--root", "128", "30", "--dump-skeleton", "--config", str(no_resize), "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    graph = load_graph(out / "graph.json")
    assert graph.n == 3
    assert graph.view_tag == "RAO"
    assert graph.feature_matrix().shape == (3, 70)
    assert json.loads((out / "run_config.json").read_text())["resize_to"] is None
    assert (out / "skeleton.txt").read_text().strip()


def test_bad_config_key_exits_2(runner, tmp_path, graph_dirs):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"learning_rate": 0.1}))
    result = runner.invoke(cli, ["train", "--data", str(graph_dirs["graphs"]), "--config", str(config)])
    assert result.exit_code == 2


def test_train_needs_labels(runner, tmp_path):
    data = tmp_path / "unlabeled"
    data.mkdir()
    for k in range(3):
        save_graph(data / f"g{k}.json", labeled_tree(seed=k, labeled=False))
    result = runner.invoke(cli, ["train", "--data", str(data), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_train_label_and_eval(runner, tmp_path, graph_dirs):
    """Test that a checkpoint trained from the CLI labels and evaluates graph folders."""
    train_out = tmp_path / "train"
    result = runner.invoke(cli, ["train", "--data", str(graph_dirs["graphs"]), "--out", str(train_out), *TINY_TRAIN_ARGS])
    assert result.exit_code == 0, result.output
    model = train_out / "model.json"
    assert model.exists()
    assert len((train_out / "training_log.csv").read_text().splitlines()) == 3

    write_pgm(tmp_path / "gray.pgm", np.full((80, 80), 100, dtype=np.uint8))
    label_out = tmp_path / "label"
    result = runner.invoke(
        cli,
        ["label", "--model", str(model), "--graph", str(graph_dirs["tests"] / "x0.json"),
         "--templates", str(graph_dirs["templates"]), "--overlay", str(tmp_path / "gray.pgm"), "--out", str(label_out)],
    )
    assert result.exit_code == 0, result.output
    document = json.loads((label_out / "labels.json").read_text())
    assert document["templates_used"] == 2
    assert len(document["assignments"]) == 5
    assert (label_out / "labels.ppm").read_bytes().startswith(b"P6")

    eval_out = tmp_path / "eval"
    result = runner.invoke(
        cli,
        ["eval", "--model", str(model), "--data", str(graph_dirs["tests"]), "--templates", str(graph_dirs["templates"]),
         "--out", str(eval_out)],
    )
    assert result.exit_code == 0, result.output
    assert json.loads((eval_out / "metrics.json").read_text())["n"] == 10


def test_label_without_templates(runner, tmp_path, graph_dirs):
    train_out = tmp_path / "train"
    runner.invoke(cli, ["train", "--data", str(graph_dirs["graphs"]), "--out", str(train_out), *TINY_TRAIN_ARGS])
    result = runner.invoke(
        cli, ["label", "--model", str(train_out / "model.json"), "--graph", str(graph_dirs["tests"] / "x0.json"),
              "--out", str(tmp_path / "label")],
    )
    assert result.exit_code == 2


@pytest.mark.parametrize(
    "text, expected",
    [
        (None, list(ATTACK_LEVELS)),
        ("0.05..0.20", [0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2]),
        ("0.1,0.3", [0.1, 0.3]),
        ("0.2", [0.2]),
    ],
)
def test_parse_levels(text, expected):
    assert _parse_levels(text) == pytest.approx(expected)


@pytest.mark.parametrize("text", ["low..high", "0.1,x"])
def test_parse_levels_rejects_garbage(text):
    with pytest.raises(InputError):
        _parse_levels(text)


@pytest.mark.slow
def test_full_pipeline(runner, tmp_path):
    """Test synth, train, xval, importance and attack on a small synthetic benchmark."""
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "resize_to": None,
                "folds": 2,
                "train": {"steps": 3, "batch_size": 2},
                "model": {"hidden": 4, "depth": 1, "n_mp": 1},
                "attack_levels": [0.1, 0.2],
                "attack_seeds": 1,
            }
        )
    )
    common = ["--config", str(config)]
    bench = tmp_path / "bench"
    result = runner.invoke(cli, ["synth", "--count", "20", "--out", str(bench), *common])
    assert result.exit_code == 0, result.output
    assert json.loads((bench / "manifest.json").read_text())["count"] == 20

    result = runner.invoke(cli, ["train", "--data", str(bench), "--out", str(tmp_path / "train"), *common])
    assert result.exit_code == 0, result.output
    model = str(tmp_path / "train" / "model.json")

    result = runner.invoke(cli, ["xval", "--data", str(bench), "--out", str(tmp_path / "xval"), *common])
    assert result.exit_code == 0, result.output
    assert len(json.loads((tmp_path / "xval" / "xval.json").read_text())["folds"]) == 2

    for command, artifact in (("importance", "importance.json"), ("attack", "attack.json")):
        out = tmp_path / command
        result = runner.invoke(
            cli, [command, "--model", model, "--data", str(bench), "--templates", str(bench), "--out", str(out), *common]
        )
        assert result.exit_code == 0, result.output
        assert (out / artifact).exists()
