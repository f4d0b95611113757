"""Command line entry point: ``mtimpute run | sensitivity | induce | impute | score``."""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from mtimpute.dataio import denormalize, load_catalog, load_dataset, normalize
from mtimpute.engine import multiple_impute
from mtimpute.errors import ConfigError, DatasetError, ImputationError, StructuralError
from mtimpute.experiment import (
    emit_report,
    emit_sensitivity,
    metric_table,
    prepare_cell,
    run_experiment,
    run_sensitivity_study,
    sensitivity_table,
    target_fraction,
)
from mtimpute.metrics import covariance_drift, rmse_sum
from mtimpute.missingness import column_fractions, missing_fraction, read_mask, write_mask
from mtimpute.models import MECHANISMS, METHODS, PATTERNS, ExperimentConfig, ImputationConfig, MissingnessConfig
from mtimpute.trace import TrainingTrace

console = Console()

app = typer.Typer(help="Multiple imputation with metamorphic-truth denoising autoencoders.", add_completion=False)


@app.callback()
def configure(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level.")):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _fail(e: ImputationError) -> None:
    console.print(f"[red]error:[/red] {e.detail}")
    raise typer.Exit(code=2)


def _imputation_config(method: str, runs: int, epochs: int, seed: int, workers: int = 1) -> ImputationConfig:
    options = dict(n_imputations=runs, seed=seed, workers=workers)
    try:
        if method == "dae_mt":
            return ImputationConfig.with_epochs(method, epochs, **options)
        return ImputationConfig(method=method, total_epochs=epochs, **options)
    except ValidationError as e:
        raise ConfigError(f"invalid imputation settings: {e}") from e


def _check_choice(name: str, value: str, choices) -> None:
    if value not in choices:
        raise typer.BadParameter(f"expected one of {', '.join(choices)}, got {value!r}", param_hint=f"--{name}")


@app.command()
def run(
    config: Path = typer.Option(..., "--config", exists=True, dir_okay=False, help="Experiment YAML."),
    seed: Optional[int] = typer.Option(None, help="Overrides the config's seed."),
    out: Optional[Path] = typer.Option(None, help="Output directory."),
    dataset: Optional[List[str]] = typer.Option(None, "--dataset", help="Restrict to these datasets."),
    data_dir: Optional[Path] = typer.Option(None, help="Directory holding the dataset files."),
):
    """Run the dataset x mechanism x pattern x method grid and write the report."""
    try:
        settings = ExperimentConfig.from_yaml(config)
        overrides = {"seed": seed, "out": out, "datasets": dataset or None, "data_dir": data_dir}
        try:
            settings = ExperimentConfig.model_validate(
                {**settings.model_dump(), **{k: v for k, v in overrides.items() if v is not None}}
            )
        except ValidationError as e:
            raise ConfigError(f"invalid command line overrides: {e}") from e
        report = run_experiment(settings, progress=True)
        paths = emit_report(report)
    except ImputationError as e:
        _fail(e)
    for metric in ("rmse_sum", "covariance_drift"):
        console.print(metric_table(report, metric))
    console.print(f"wrote {', '.join(str(p) for p in paths)}")
    if report.failed:
        console.print("[yellow]some grid cells failed; see the report[/yellow]")
        raise typer.Exit(code=1)


@app.command()
def sensitivity(
    dataset: Optional[str] = typer.Option(None, help="Dataset abbreviation or CSV path; BH by default."),
    config: Optional[Path] = typer.Option(
        None, "--config", exists=True, dir_okay=False, help="Experiment YAML supplying DAE settings and targets."
    ),
    seed: Optional[int] = typer.Option(None, help="Overrides the config's seed."),
    out: Path = typer.Option(Path("results/sensitivity")),
    runs: Optional[int] = typer.Option(None, min=1, help="Imputations per variant; 5 by default."),
    epochs: Optional[int] = typer.Option(None, min=1, help="Training epochs per run; 500 by default."),
    method: Optional[List[str]] = typer.Option(None, "--method", help="dae and/or dae_mt."),
    data_dir: Optional[Path] = typer.Option(None),
    catalog: Optional[Path] = typer.Option(None, help="Dataset catalog YAML; the bundled one by default."),
):
    """Compare mean, max and perfect-guess initial imputations on a MAR random mask."""
    try:
        settings = ExperimentConfig.from_yaml(config) if config is not None else None
        family = [m for m in settings.methods if m.method in ("dae", "dae_mt")] if settings else []
        methods = method or [m.method for m in family] or ["dae"]
        for name in methods:
            _check_choice("method", name, ("dae", "dae_mt"))
        preferred = "dae_mt" if "dae_mt" in methods else "dae"
        if family and runs is None and epochs is None:
            imputation = next((m for m in family if m.method == preferred), family[0])
        else:
            imputation = _imputation_config(preferred, runs or 5, epochs or 500, 0)
        if settings is not None:
            dataset = dataset or settings.datasets[0]
            seed = settings.seed if seed is None else seed
            data_dir = data_dir or settings.data_dir
            catalog = catalog or settings.catalog
        dataset = dataset or "BH"
        entries = load_catalog(catalog)
        data = load_dataset(dataset, data_dir, entries)
        report = run_sensitivity_study(
            data,
            imputation,
            seed=seed or 0,
            methods=tuple(methods),
            entry=entries.get(dataset),
            settings=settings.missingness if settings else None,
            progress=True,
        )
        paths = emit_sensitivity(report, out)
    except ImputationError as e:
        _fail(e)
    console.print(sensitivity_table(report))
    console.print(f"wrote {', '.join(str(p) for p in paths)}")


@app.command()
def induce(
    dataset: str = typer.Option(..., help="Dataset abbreviation or CSV path."),
    mechanism: str = typer.Option(..., help="MCAR, MAR or MNAR."),
    pattern: str = typer.Option(..., help="random or uniform."),
    target: Optional[float] = typer.Option(None, min=0.0, max=1.0, help="Fraction of all cells to remove."),
    seed: int = typer.Option(0),
    out: Path = typer.Option(Path("masks")),
    data_dir: Optional[Path] = typer.Option(None),
    catalog: Optional[Path] = typer.Option(None, help="Dataset catalog YAML; the bundled one by default."),
):
    """Tune a mechanism to a missing fraction, draw a mask and write it with its spec."""
    _check_choice("mechanism", mechanism, MECHANISMS)
    _check_choice("pattern", pattern, PATTERNS)
    try:
        entries = load_catalog(catalog)
        data = load_dataset(dataset, data_dir, entries)
        settings = MissingnessConfig()
        if target is None:
            target = target_fraction(mechanism, pattern, settings, entries.get(dataset))
        mask = prepare_cell(data, mechanism, pattern, target, seed, settings)
        path = write_mask(mask, out / f"{data.name}_{mechanism}_{pattern}.csv", list(data.columns))
    except ImputationError as e:
        _fail(e)

    table = Table(title=f"{data.name} {mechanism}/{pattern}: {100 * missing_fraction(mask, data):.1f}% missing "
                        f"(target {100 * target:.1f}%)")
    table.add_column("Column")
    table.add_column("Missing", justify="right")
    for column, fraction in column_fractions(mask, list(data.columns)).items():
        table.add_row(column, f"{100 * fraction:.1f}%")
    console.print(table)
    console.print(f"mask written to {path}")


@app.command()
def impute(
    dataset: str = typer.Option(..., help="Dataset abbreviation or CSV path."),
    mask: Path = typer.Option(..., exists=True, dir_okay=False),
    method: str = typer.Option("dae_mt", help="mean, dae or dae_mt."),
    runs: int = typer.Option(5, min=1),
    epochs: int = typer.Option(500, min=1),
    seed: int = typer.Option(0),
    out: Path = typer.Option(Path("imputed")),
    workers: int = typer.Option(1, min=1),
    trace: Optional[Path] = typer.Option(None, help="Write a per-epoch training trace as JSON."),
    export_model: Optional[str] = typer.Option(None, help="Save the first run's network as <prefix>_weights.pt/_info.pt."),
    data_dir: Optional[Path] = typer.Option(None),
    catalog: Optional[Path] = typer.Option(None, help="Dataset catalog YAML; the bundled one by default."),
):
    """Impute a masked dataset; writes one CSV per imputation, in the dataset's own units."""
    _check_choice("method", method, METHODS)
    try:
        data = load_dataset(dataset, data_dir, load_catalog(catalog))
        missing, columns = read_mask(mask)
        if columns != list(data.columns):
            raise StructuralError(f"mask columns {columns} do not match dataset columns {list(data.columns)}")
        normalized, params = normalize(data.corrupted(missing), missing, allow_constant_permanent=True)
        config = _imputation_config(method, runs, epochs, seed, workers)
        recorder = TrainingTrace() if trace is not None else None
        results = multiple_impute(normalized.values, missing, config, truth=normalized.truth, trace=recorder,
                                  progress=True)
        if recorder is not None:
            recorder.save(trace)
        if export_model is not None:
            if results[0].network is None:
                raise StructuralError(f"method {method!r} trains no network to export")
            from mtimpute.torch_bridge import export

            export(results[0].network, export_model)
    except ImputationError as e:
        _fail(e)

    out.mkdir(parents=True, exist_ok=True)
    for k, result in enumerate(results):
        path = out / f"{data.name}_{method}_{k}.csv"
        pd.DataFrame(denormalize(result.imputed, params), columns=list(data.columns)).to_csv(
            path, index=False, lineterminator="\n"
        )
        console.print(
            f"run {k} (seed {result.seed}): rmse_sum {rmse_sum(normalized.truth, result.imputed, missing):.3f}, "
            f"covariance drift {covariance_drift(normalized.truth, result.imputed):.4f} -> {path}"
        )


@app.command()
def score(
    dataset: str = typer.Option(..., help="Dataset abbreviation or CSV path."),
    mask: Path = typer.Option(..., exists=True, dir_okay=False),
    imputed: List[Path] = typer.Option(..., exists=True, dir_okay=False, help="Imputed CSVs in raw units."),
    data_dir: Optional[Path] = typer.Option(None),
    catalog: Optional[Path] = typer.Option(None, help="Dataset catalog YAML; the bundled one by default."),
):
    """Score imputed tables against the complete dataset, on the normalized scale."""
    try:
        data = load_dataset(dataset, data_dir, load_catalog(catalog))
        missing, columns = read_mask(mask)
        if columns != list(data.columns):
            raise StructuralError(f"mask columns {columns} do not match dataset columns {list(data.columns)}")
        normalized, params = normalize(data.corrupted(missing), missing, allow_constant_permanent=True)
        table = Table(title=f"{data.name}: {missing.n_missing} missing cells")
        table.add_column("Imputed table")
        table.add_column("RMSE_sum", justify="right")
        table.add_column("Covariance drift", justify="right")
        values = []
        for path in imputed:
            frame = pd.read_csv(path)
            if frame.shape != data.values.shape:
                raise DatasetError(f"{path} has shape {frame.shape}, expected {data.values.shape}")
            scaled = params.apply(frame.to_numpy(dtype=np.float64))
            error = rmse_sum(normalized.truth, scaled, missing)
            drift = covariance_drift(normalized.truth, scaled)
            values.append(error)
            table.add_row(str(path), f"{error:.3f}", f"{drift:.4f}")
    except ImputationError as e:
        _fail(e)
    except ValueError as e:
        console.print(f"[red]error:[/red] {e}")
        raise typer.Exit(code=2)
    console.print(table)
    if len(values) > 1:
        console.print(f"RMSE_sum mean {np.mean(values):.3f} (max {np.max(values):.3f})")


if __name__ == "__main__":
    app()
