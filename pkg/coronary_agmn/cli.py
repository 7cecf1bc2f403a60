"""`coronary-agmn` command line: synthetic data, graph building, training, labeling and experiments."""

from __future__ import annotations

import functools
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, Optional

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from coronary_agmn import __version__
from coronary_agmn.core.errors import AgmnError, InputError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.evaluation.crossval import cross_validate, grid_search, label_with_matcher, score_assignments
from coronary_agmn.evaluation.experiments import attack_sweep, importance_report
from coronary_agmn.evaluation.metrics import write_metrics_csv, write_summary_csv
from coronary_agmn.evaluation.overlay import write_overlay
from coronary_agmn.features.extractor import NormalizationStats, extract_features
from coronary_agmn.graph.artery_graph import build_individual_graph
from coronary_agmn.graph.attack import ATTACK_LEVELS
from coronary_agmn.imaging.pgm import BinaryMask, read_gray, read_mask, resize_pair
from coronary_agmn.imaging.skeleton import compute_radii, dump_skeleton, skeletonize
from coronary_agmn.matching.checkpoint import load_checkpoint, save_checkpoint
from coronary_agmn.matching.dataset import load_dataset, load_graph_collection
from coronary_agmn.matching.runtime import prepare_graphs, train
from coronary_agmn.schemas.graph import load_graph, save_graph
from coronary_agmn.schemas.reports import CrossValidationReport, MetricsReport
from coronary_agmn.schemas.run_config import RunConfig, load_run_config, write_run_config
from coronary_agmn.synth.generator import make_benchmark, write_benchmark

logger = get_logger(__name__)
console = Console()

LEVEL_STEP = 0.025


def handle_errors(command: Callable[..., Any]) -> Callable[..., Any]:
    """Maps AgmnError to its exit code; anything else is logged with its traceback and exits 1."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except AgmnError as e:
            step = getattr(e, "step", None)
            logger.error(f"{type(e).__name__}: {e}" + (f" (step {step})" if step is not None else ""), exc_info=True)
            console.print(f"[bold red]error[/bold red] {e}")
            sys.exit(e.exit_code)
        except click.exceptions.ClickException:
            raise
        except Exception as e:
            logger.error(f"Unhandled exception in {command.__name__}: {e}", exc_info=True)
            console.print(f"[bold red]unexpected error[/bold red] {type(e).__name__}: {e}")
            sys.exit(1)

    return wrapper


def common_options(command: Callable[..., Any]) -> Callable[..., Any]:
    command = click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Output directory (default: runs/<command>).",
    )(command)
    command = click.option(
        "--threads", type=click.IntRange(min=1), default=None, help="Worker threads; 1 is bit-exact."
    )(command)
    command = click.option("--seed", type=int, default=None, help="Overrides the configured seed.")(command)
    command = click.option(
        "--config",
        "config_path",
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help="Run configuration JSON (default: $AGMN_DEFAULT_CONFIG_PATH).",
    )(command)
    return command


def _effective_config(config_path: Optional[Path], seed: Optional[int], threads: Optional[int], **overrides: Any) -> RunConfig:
    config = load_run_config(config_path)
    return config.with_overrides(seed=seed, threads=threads, **{"train.seed": seed}, **overrides)


def _output_dir(out: Optional[Path], command: str, config: RunConfig) -> Path:
    out = out or Path("runs") / command
    out.mkdir(parents=True, exist_ok=True)
    write_run_config(out, config)
    return out


def _parse_levels(text: Optional[str]) -> list[float]:
    """`0.05..0.20` expands in steps of 0.025; otherwise a comma-separated list."""
    if text is None:
        return list(ATTACK_LEVELS)
    try:
        if ".." in text:
            low, high = (float(part) for part in text.split(".."))
            return [round(float(v), 6) for v in np.arange(low, high + LEVEL_STEP / 2, LEVEL_STEP)]
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InputError(f"Cannot parse attack levels '{text}'") from e


def _metrics_table(title: str, reports: list[MetricsReport]) -> Table:
    table = Table(title=title)
    for column in ("fold", "n", "ACC", "PRE", "REC", "F1", "plain ACC"):
        table.add_column(column, justify="right")
    for r in reports:
        table.add_row(
            r.fold or "-", str(r.n), f"{r.accuracy:.4f}", f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f1:.4f}",
            f"{r.plain_accuracy:.4f}",
        )
    return table


def _class_table(report: MetricsReport) -> Table:
    table = Table(title="Per class")
    for column in ("class", "support", "ACC", "PRE", "REC", "F1"):
        table.add_column(column, justify="right")
    for c in report.classes:
        table.add_row(c.label, str(c.support), f"{c.accuracy:.4f}", f"{c.precision:.4f}", f"{c.recall:.4f}", f"{c.f1:.4f}")
    return table


@click.group()
@click.version_option(__version__, prog_name="coronary-agmn")
def cli() -> None:
    """Semantic labeling of coronary artery segments by association-graph matching."""


@cli.command()
@click.option("--count", type=int, required=True, help="Number of samples (at least 20).")
@click.option("--overlap-fraction", type=click.FloatRange(0, 1), default=None)
@common_options
@handle_errors
def synth(count: int, overlap_fraction: Optional[float], config_path: Optional[Path], seed: Optional[int],
          threads: Optional[int], out: Optional[Path]) -> None:
    """Generates a labeled synthetic benchmark."""
    config = _effective_config(config_path, seed, threads, **{"synth.overlap_fraction": overlap_fraction})
    dataset = make_benchmark(count, config.seed, config.synth, config.pipeline, config.features, config.threads)
    out = _output_dir(out, "synth", config)
    manifest = write_benchmark(dataset, out, config.seed)
    matched = sum(s.topology_ok for s in dataset.samples)
    console.print(f"Wrote {count} samples to [bold]{out}[/bold] ({matched}/{count} with intended topology), manifest {manifest.name}")


@cli.command("build-graph")
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--gray", "gray_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--pixel-spacing", type=float, default=0.3, show_default=True, help="mm per pixel of the input images.")
@click.option("--view", "view_tag", type=click.Choice(["LAO", "RAO"]), default=None)
@click.option("--root", type=(int, int), default=None, help="LMA origin (x y) in resized image pixels.")
@click.option("--dump-skeleton", is_flag=True, help="Also write skeleton.txt (x y radius).")
@common_options
@handle_errors
def build_graph(mask_path: Path, gray_path: Path, pixel_spacing: float, view_tag: Optional[str],
                root: Optional[tuple[int, int]], dump_skeleton: bool, config_path: Optional[Path],
                seed: Optional[int], threads: Optional[int], out: Optional[Path]) -> None:
    """Builds the individual graph (with raw features) of one mask and angiogram."""
    config = _effective_config(config_path, seed, threads)
    mask, gray = read_mask(mask_path), read_gray(gray_path, pixel_spacing)
    if config.resize_to is not None:
        mask, gray = resize_pair(mask, gray, config.resize_to)
    graph = build_individual_graph(mask, gray, config.pipeline, view_tag, root)
    graph = extract_features(graph, mask, gray, config.features)
    graph.provenance["source"] = {"mask": str(mask_path), "gray": str(gray_path)}
    out = _output_dir(out, "build-graph", config)
    save_graph(out / "graph.json", graph)
    if dump_skeleton:
        _write_skeleton(mask, out / "skeleton.txt")
    console.print(f"Graph with {graph.n} segments and {graph.n_e} edges written to [bold]{out / 'graph.json'}[/bold]")


def _write_skeleton(mask: BinaryMask, path: Path) -> None:
    dump_skeleton(compute_radii(mask, skeletonize(mask)), path)


@cli.command("train")
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--depth", type=int, default=None)
@click.option("--nmp", type=int, default=None)
@common_options
@handle_errors
def train_command(data_dir: Optional[Path], steps: Optional[int], batch_size: Optional[int], hidden: Optional[int],
                  depth: Optional[int], nmp: Optional[int], config_path: Optional[Path], seed: Optional[int],
                  threads: Optional[int], out: Optional[Path]) -> None:
    """Trains the matcher on every labeled graph of a dataset."""
    config = _effective_config(
        config_path, seed, threads, data_dir=str(data_dir) if data_dir else None,
        **{"train.steps": steps, "train.batch_size": batch_size, "model.hidden": hidden, "model.depth": depth,
           "model.n_mp": nmp},
    )
    if config.data_dir is None:
        raise InputError("No dataset: pass --data or set data_dir in the config")
    dataset = load_graph_collection(config.data_dir)
    dataset.require_labels()
    stats = NormalizationStats.fit(dataset.graphs)
    out = _output_dir(out, "train", config)
    matcher, log = train(prepare_graphs(dataset.graphs, stats), config.train, config.model, stats, config.features,
                         config.threads)
    save_checkpoint(out / "model.json", matcher)
    log.write_csv(out / "training_log.csv")
    console.print(f"Trained {config.train.steps} steps, final loss {log.rows[-1][2]:.4f}; checkpoint in [bold]{out}[/bold]")


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--templates", "templates_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--overlay", "gray_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
              help="Grayscale image to draw the labeled centerlines on (labels.ppm).")
@common_options
@handle_errors
def label(model_path: Path, graph_path: Path, templates_dir: Optional[Path], gray_path: Optional[Path],
          config_path: Optional[Path], seed: Optional[int], threads: Optional[int], out: Optional[Path]) -> None:
    """Labels one graph by voting over the template set."""
    config = _effective_config(config_path, seed, threads,
                               templates_dir=str(templates_dir) if templates_dir else None)
    if config.templates_dir is None:
        raise InputError("No template set: pass --templates or set templates_dir in the config")
    matcher = load_checkpoint(model_path)
    graph = load_graph(graph_path)
    templates = load_graph_collection(config.templates_dir)
    templates.require_labels()
    assignment = label_with_matcher(matcher, [graph], templates.graphs, config.threads)[0]
    out = _output_dir(out, "label", config)
    (out / "labels.json").write_text(assignment.to_document(str(graph_path), graph.view_tag).model_dump_json(indent=2))
    if gray_path is not None:
        spacing = graph.provenance.get("pipeline", {}).get("pixel_spacing", 0.3)
        write_overlay(out / "labels.ppm", read_gray(gray_path, spacing), graph, assignment.labels)

    table = Table(title=f"Labels ({assignment.templates_used} templates)")
    table.add_column("segment", justify="right")
    table.add_column("label")
    for node_id, text in enumerate(assignment.labels):
        table.add_row(str(node_id), text)
    console.print(table)


def _matcher_and_sets(model_path: Path, data_dir: Optional[Path], templates_dir: Optional[Path]):
    if data_dir is None or templates_dir is None:
        raise InputError("Both --data and --templates are required")
    matcher = load_checkpoint(model_path)
    tests = load_graph_collection(data_dir)
    templates = load_graph_collection(templates_dir)
    tests.require_labels()
    templates.require_labels()
    return matcher, tests, templates


def _evaluation_options(command: Callable[..., Any]) -> Callable[..., Any]:
    command = click.option("--templates", "templates_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
                           default=None)(command)
    command = click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
                           default=None, help="Labeled test graphs.")(command)
    command = click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                           required=True)(command)
    return command


@cli.command("eval")
@_evaluation_options
@common_options
@handle_errors
def eval_command(model_path: Path, data_dir: Optional[Path], templates_dir: Optional[Path],
                 config_path: Optional[Path], seed: Optional[int], threads: Optional[int], out: Optional[Path]) -> None:
    """Labels every test graph and reports the weighted metrics."""
    config = _effective_config(config_path, seed, threads)
    matcher, tests, templates = _matcher_and_sets(model_path, data_dir, templates_dir)
    assignments = label_with_matcher(matcher, tests.graphs, templates.graphs, config.threads)
    report = score_assignments(tests.graphs, assignments)
    out = _output_dir(out, "eval", config)
    (out / "metrics.json").write_text(report.model_dump_json(indent=2))
    write_metrics_csv(out / "metrics.csv", [report])
    console.print(_metrics_table("Evaluation", [report]))
    console.print(_class_table(report))


@cli.command()
@_evaluation_options
@common_options
@handle_errors
def importance(model_path: Path, data_dir: Optional[Path], templates_dir: Optional[Path],
               config_path: Optional[Path], seed: Optional[int], threads: Optional[int], out: Optional[Path]) -> None:
    """Ranks features and feature families by the accuracy lost when zeroed."""
    config = _effective_config(config_path, seed, threads)
    matcher, tests, templates = _matcher_and_sets(model_path, data_dir, templates_dir)
    report = importance_report(
        matcher.model,
        prepare_graphs(tests.graphs, matcher.stats),
        prepare_graphs(templates.graphs, matcher.stats),
        matcher.feature_spec,
        config.threads,
    )
    out = _output_dir(out, "importance", config)
    (out / "importance.json").write_text(report.model_dump_json(indent=2))
    table = Table(title=f"Feature importance (baseline ACC {report.baseline_accuracy:.4f})")
    for column in ("rank", "feature", "delta ACC"):
        table.add_column(column)
    for rank, entry in enumerate(report.entries[:20], start=1):
        table.add_row(str(rank), entry.name, f"{entry.delta:+.4f}")
    console.print(table)


@cli.command()
@_evaluation_options
@click.option("--levels", default=None, help="Removal probabilities: `0.05..0.20` or `0.05,0.1`.")
@click.option("--seeds", "seed_count", type=click.IntRange(min=1), default=None, help="Corruption seeds per level.")
@common_options
@handle_errors
def attack(model_path: Path, data_dir: Optional[Path], templates_dir: Optional[Path], levels: Optional[str],
           seed_count: Optional[int], config_path: Optional[Path], seed: Optional[int], threads: Optional[int],
           out: Optional[Path]) -> None:
    """Measures accuracy while random leaf segments are removed from the test graphs."""
    config = _effective_config(config_path, seed, threads, attack_seeds=seed_count,
                               attack_levels=_parse_levels(levels) if levels else None)
    matcher, tests, templates = _matcher_and_sets(model_path, data_dir, templates_dir)
    seeds = [config.seed + k for k in range(config.attack_seeds)]
    report = attack_sweep(matcher, tests.graphs, templates.graphs, config.attack_levels, seeds, config.threads)
    out = _output_dir(out, "attack", config)
    (out / "attack.json").write_text(report.model_dump_json(indent=2))

    table = Table(title=f"Attack sweep (baseline ACC {report.baseline.accuracy:.4f})")
    for column in ("level", "ACC", "F1", "removed/graph"):
        table.add_column(column, justify="right")
    for row in report.levels:
        table.add_row(f"{row.level:.3f}", f"{row.accuracy.mean:.4f} ± {row.accuracy.std:.4f}",
                      f"{row.f1.mean:.4f} ± {row.f1.std:.4f}", f"{row.removed_segments:.2f}")
    console.print(table)
    if report.spearman_rho is not None:
        console.print(f"Spearman rho(level, ACC) = {report.spearman_rho:.3f}")


@cli.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@click.option("--template-frac", "template_fractions", type=float, multiple=True)
@click.option("--hidden", type=int, multiple=True)
@click.option("--depth", type=int, multiple=True)
@click.option("--nmp", type=int, multiple=True)
@click.option("--folds", type=int, default=None)
@click.option("--steps", type=int, default=None)
@common_options
@handle_errors
def xval(data_dir: Optional[Path], template_fractions: tuple[float, ...], hidden: tuple[int, ...],
         depth: tuple[int, ...], nmp: tuple[int, ...], folds: Optional[int], steps: Optional[int],
         config_path: Optional[Path], seed: Optional[int], threads: Optional[int], out: Optional[Path]) -> None:
    """View-stratified cross-validation; repeated options span a hyperparameter grid."""
    config = _effective_config(config_path, seed, threads, folds=folds, data_dir=str(data_dir) if data_dir else None,
                               **{"train.steps": steps})
    if config.data_dir is None:
        raise InputError("No dataset: pass --data or set data_dir in the config")
    dataset = load_dataset(config.data_dir, with_images=False)
    out = _output_dir(out, "xval", config)
    if max(len(template_fractions), len(hidden), len(depth), len(nmp)) <= 1:
        single = config.with_overrides(
            template_fraction=template_fractions[0] if template_fractions else None,
            **{"model.hidden": hidden[0] if hidden else None, "model.depth": depth[0] if depth else None,
               "model.n_mp": nmp[0] if nmp else None},
        )
        reports = [cross_validate(dataset, single)]
    else:
        reports = grid_search(dataset, config, hidden, depth, nmp, template_fractions)

    for index, report in enumerate(reports):
        name = "xval.json" if len(reports) == 1 else f"xval_{index:03d}.json"
        (out / name).write_text(report.model_dump_json(indent=2))
    write_metrics_csv(out / "folds.csv", [fold for report in reports for fold in report.folds])
    write_summary_csv(out / "summary.csv", [(_grid_key(r), r.summary) for r in reports])
    for report in reports:
        console.print(_metrics_table(_grid_title(report), report.folds))
        acc = report.summary["accuracy"]
        console.print(f"weighted ACC {acc.mean:.4f} ± {acc.std:.4f}")


def _grid_key(report: CrossValidationReport) -> dict[str, object]:
    return {"template_fraction": report.template_fraction, "hidden": report.hidden, "depth": report.depth,
            "n_mp": report.n_mp}


def _grid_title(report: CrossValidationReport) -> str:
    return f"H={report.hidden} depth={report.depth} n_mp={report.n_mp} templates={report.template_fraction:.0%}"


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
