"""Experiment orchestration: the dataset x mechanism x pattern x method grid, the
initial-imputation sensitivity study, and report files."""

import io
import logging
import time
import zlib
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from rich import box
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from mtimpute.dataio import Dataset, load_catalog, load_dataset, normalize
from mtimpute.engine import multiple_impute
from mtimpute.errors import ImputationError, StructuralError
from mtimpute.metrics import summarize
from mtimpute.missingness import (
    MissingnessMask,
    induce,
    missing_fraction,
    read_mask,
    tune_probabilities,
    write_mask,
)
from mtimpute.models import (
    MECHANISMS,
    PATTERNS,
    CellResult,
    DatasetCatalogEntry,
    ExperimentConfig,
    ExperimentReport,
    ImputationConfig,
    MethodResult,
    MissingnessConfig,
    SensitivityReport,
    digest,
)

logger = logging.getLogger(__name__)

METHOD_LABELS = {"dae_mt": "DAE MT", "dae": "DAE", "mean": "Mean"}
METRICS = ("rmse_sum", "covariance_drift")
# covariance drift is shown multiplied by this factor in the text tables
DRIFT_DISPLAY_SCALE = 10.0
BEST_MARK = "*"


def cell_seed(seed: int, dataset: str, mechanism: str, pattern: str) -> int:
    """Stable per-cell seed, independent of which other cells are in the grid."""
    entropy = [seed, zlib.crc32(dataset.encode()), MECHANISMS.index(mechanism), PATTERNS.index(pattern)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def target_fraction(
    mechanism: str,
    pattern: str,
    settings: MissingnessConfig,
    entry: Optional[DatasetCatalogEntry] = None,
) -> float:
    if settings.targets == "catalog" and entry is not None:
        key = f"{mechanism}/{pattern}"
        if key in entry.missing_targets:
            return entry.missing_targets[key]
    return (settings.low + settings.high) / 2


def prepare_cell(
    dataset: Dataset,
    mechanism: str,
    pattern: str,
    target: float,
    seed: int,
    settings: MissingnessConfig,
) -> MissingnessMask:
    """Tune the mechanism for ``target`` and draw the cell's mask."""
    rng = np.random.default_rng(seed)
    spec = tune_probabilities(
        dataset, mechanism, pattern, target, settings.tolerance, rng, draws=settings.draws
    )
    return induce(dataset, spec.model_copy(update={"seed": seed}))


def _score(
    runs, truth: np.ndarray, mask: MissingnessMask, method_config: ImputationConfig
) -> MethodResult:
    return MethodResult(
        method=method_config.method,
        initial_imputation=method_config.initial_imputation,
        seeds=[run.seed for run in runs],
        epochs=runs[0].epochs,
        rmse_sum=summarize(runs, truth, mask, "rmse_sum"),
        covariance_drift=summarize(runs, truth, mask, "covariance_drift"),
    )


def run_cell(
    dataset: Dataset,
    mechanism: str,
    pattern: str,
    config: ExperimentConfig,
    entry: Optional[DatasetCatalogEntry] = None,
    progress: bool = False,
) -> CellResult:
    """Run every method on one persisted mask. Failures are recorded, not raised."""
    start = time.perf_counter()
    target = target_fraction(mechanism, pattern, config.missingness, entry)
    cell = CellResult(dataset=dataset.name, mechanism=mechanism, pattern=pattern, target_fraction=target)
    seed = cell_seed(config.seed, dataset.name, mechanism, pattern)
    try:
        mask = prepare_cell(dataset, mechanism, pattern, target, seed, config.missingness)
        cell.spec = mask.spec
        cell.achieved_fraction = missing_fraction(mask, dataset)
        if target - cell.achieved_fraction > config.missingness.tolerance:
            cell.status = "degraded"
            floor = "" if cell.achieved_fraction >= config.missingness.fallback else ", below the fallback"
            cell.reason = f"reached {cell.achieved_fraction:.3f} of target {target:.3f}{floor}"
            logger.warning("%s %s/%s: %s", dataset.name, mechanism, pattern, cell.reason)

        mask_path = config.out / "masks" / f"{dataset.name}_{mechanism}_{pattern}.csv"
        write_mask(
            mask, mask_path, list(dataset.columns),
            provenance={"config_digest": config.digest(), "experiment_seed": config.seed},
        )
        cell.mask_digest = mask.digest()

        normalized, _ = normalize(dataset.corrupted(mask), mask, allow_constant_permanent=True)
        for method_config in config.methods:
            persisted, _ = read_mask(mask_path)
            if persisted.digest() != cell.mask_digest:
                raise StructuralError(f"persisted mask {mask_path} differs from the induced one")
            run_config = method_config.model_copy(update={"seed": config.seed + method_config.seed})
            runs = multiple_impute(
                normalized.values, persisted, run_config, truth=normalized.truth, progress=progress
            )
            cell.methods.append(_score(runs, normalized.truth, persisted, run_config))
            logger.info(
                "%s %s/%s %s: rmse_sum %.3f (max %.3f)",
                dataset.name, mechanism, pattern, run_config.method,
                cell.methods[-1].rmse_sum.mean, cell.methods[-1].rmse_sum.max,
            )
    except ImputationError as e:
        cell.status = "failed"
        cell.reason = e.detail
        logger.error("%s %s/%s failed: %s", dataset.name, mechanism, pattern, e.detail)
    cell.runtime_seconds = time.perf_counter() - start
    return cell


def run_experiment(
    config: ExperimentConfig,
    catalog: Optional[Dict[str, DatasetCatalogEntry]] = None,
    progress: bool = False,
) -> ExperimentReport:
    start = time.perf_counter()
    catalog = load_catalog(config.catalog) if catalog is None else catalog
    grid = [(m, p) for m in config.grid.mechanisms for p in config.grid.patterns]
    cells: List[CellResult] = []
    bar = tqdm(total=len(config.datasets) * len(grid), desc="grid cells", disable=not progress)
    for name in config.datasets:
        try:
            dataset = load_dataset(name, config.data_dir, catalog)
        except ImputationError as e:
            logger.error("dataset %s could not be loaded: %s", name, e.detail)
            for mechanism, pattern in grid:
                cells.append(CellResult(
                    dataset=name, mechanism=mechanism, pattern=pattern, status="failed", reason=e.detail,
                ))
                bar.update()
            continue
        for mechanism, pattern in grid:
            cells.append(run_cell(dataset, mechanism, pattern, config, catalog.get(name), progress=False))
            bar.update()
    bar.close()
    return ExperimentReport(
        config=config,
        config_digest=config.digest(),
        seed=config.seed,
        cells=cells,
        runtime_seconds=time.perf_counter() - start,
    )


def run_sensitivity_study(
    dataset: Dataset,
    config: Optional[ImputationConfig] = None,
    seed: int = 0,
    methods: Sequence[str] = ("dae",),
    strategies: Sequence[str] = ("mean", "max", "perfect"),
    target: Optional[float] = None,
    entry: Optional[DatasetCatalogEntry] = None,
    settings: Optional[MissingnessConfig] = None,
    progress: bool = False,
) -> SensitivityReport:
    """Impute one MAR/random mask under each initial imputation and compare RMSE_sum."""
    config = config or ImputationConfig(method="dae")
    settings = settings or MissingnessConfig()
    if target is None:
        target = target_fraction("MAR", "random", settings, entry)
    mask = prepare_cell(dataset, "MAR", "random", target, cell_seed(seed, dataset.name, "MAR", "random"), settings)
    normalized, _ = normalize(dataset.corrupted(mask), mask, allow_constant_permanent=True)

    variants: List[MethodResult] = []
    for method in methods:
        for strategy in strategies:
            run_config = ImputationConfig.model_validate(
                {**config.model_dump(), "method": method, "initial_imputation": strategy, "seed": seed + config.seed}
            )
            runs = multiple_impute(normalized.values, mask, run_config, truth=normalized.truth, progress=progress)
            variants.append(_score(runs, normalized.truth, mask, run_config))
            logger.info("%s %s/%s: rmse_sum %.3f", dataset.name, method, strategy, variants[-1].rmse_sum.mean)

    return SensitivityReport(
        dataset=dataset.name,
        seed=seed,
        config_digest=digest(config),
        spec=mask.spec,
        achieved_fraction=missing_fraction(mask, dataset),
        variants=variants,
    )


def _provenance(config_digest: str, seed: int) -> str:
    return f"# config_digest={config_digest}\n# seed={seed}\n"


def _report_rows(report: ExperimentReport) -> List[dict]:
    rows = []
    for cell in report.cells:
        base = dict(
            dataset=cell.dataset, mechanism=cell.mechanism, pattern=cell.pattern, status=cell.status,
            target_fraction=cell.target_fraction, achieved_fraction=cell.achieved_fraction,
        )
        if not cell.methods:
            rows.append(dict(base, method="", metric="", row="failed", run="", seed="", value="", max="",
                             reason=cell.reason or ""))
            continue
        for result in cell.methods:
            for metric in METRICS:
                summary = getattr(result, metric)
                for k, (seed, value) in enumerate(zip(result.seeds, summary.values)):
                    rows.append(dict(base, method=result.method, metric=metric, row="run", run=k, seed=seed,
                                     value=value, max="", reason=cell.reason or ""))
                rows.append(dict(base, method=result.method, metric=metric, row="summary", run="", seed="",
                                 value=summary.mean, max=summary.max, reason=cell.reason or ""))
    return rows


def render_table(table: Table) -> str:
    buffer = io.StringIO()
    Console(file=buffer, width=240, color_system=None, force_terminal=False).print(table)
    return buffer.getvalue()


def _format_summary(result: MethodResult, metric: str, best: bool) -> str:
    summary = getattr(result, metric)
    scale = DRIFT_DISPLAY_SCALE if metric == "covariance_drift" else 1.0
    text = f"{summary.mean * scale:.1f}"
    if len(summary.values) > 1:
        text += f" ({summary.max * scale:.1f})"
    return (BEST_MARK if best else "") + text


def metric_table(report: ExperimentReport, metric: str) -> Table:
    """Rows are (dataset, mechanism); columns are pattern x method, mean with max in parentheses."""
    methods = [m.method for m in report.config.methods]
    patterns = report.config.grid.patterns
    title = "RMSE_sum" if metric == "rmse_sum" else f"Covariance drift (x{DRIFT_DISPLAY_SCALE:g})"
    table = Table(title=f"{title}  {BEST_MARK} = lowest mean", box=box.ASCII, title_justify="left")
    table.add_column("Mechanism")
    table.add_column("Dataset")
    for pattern in patterns:
        for method in methods:
            table.add_column(f"{pattern.capitalize()} {METHOD_LABELS[method]}", justify="right")

    by_key = {(c.dataset, c.mechanism, c.pattern): c for c in report.cells}
    for mechanism in report.config.grid.mechanisms:
        for name in dict.fromkeys(c.dataset for c in report.cells):
            row = [mechanism, name]
            for pattern in patterns:
                cell = by_key.get((name, mechanism, pattern))
                results = {r.method: r for r in cell.methods} if cell is not None else {}
                best = min(results.values(), key=lambda r: getattr(r, metric).mean, default=None)
                for method in methods:
                    if method in results:
                        row.append(_format_summary(results[method], metric, results[method] is best))
                    else:
                        row.append("failed" if cell is not None and cell.status == "failed" else "-")
            table.add_row(*row)
    return table


def missing_table(report: ExperimentReport) -> Table:
    table = Table(title="Percentages of cells missing", box=box.ASCII, title_justify="left")
    table.add_column("Dataset")
    grid = [(p, m) for p in report.config.grid.patterns for m in report.config.grid.mechanisms]
    for pattern, mechanism in grid:
        table.add_column(f"{pattern.capitalize()} {mechanism}", justify="right")
    by_key = {(c.dataset, c.mechanism, c.pattern): c for c in report.cells}
    for name in dict.fromkeys(c.dataset for c in report.cells):
        row = [name]
        for pattern, mechanism in grid:
            cell = by_key.get((name, mechanism, pattern))
            fraction = None if cell is None else cell.achieved_fraction
            row.append("-" if fraction is None else f"{100 * fraction:.1f}%")
        table.add_row(*row)
    return table


def emit_report(report: ExperimentReport, out: Optional[Path] = None, formats: Iterable[str] = ("csv", "txt", "json")) -> List[Path]:
    """Write the CSV (one row per cell x method x metric x run, plus summaries), aligned text
    tables and a JSON dump. Every file carries the config digest and seed; runtimes are left out
    so identical inputs give identical bytes."""
    out = Path(out or report.config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StructuralError(f"cannot create output directory {out}: {e}") from e
    header = _provenance(report.config_digest, report.seed)
    written: List[Path] = []
    formats = set(formats)
    try:
        if "csv" in formats:
            path = out / "report.csv"
            with open(path, "w", newline="") as f:
                f.write(header)
                pd.DataFrame(_report_rows(report)).to_csv(f, index=False, lineterminator="\n")
            written.append(path)
        if "txt" in formats:
            path = out / "report.txt"
            tables = [metric_table(report, m) for m in METRICS] + [missing_table(report)]
            path.write_text(header + "\n".join(render_table(t) for t in tables))
            written.append(path)
        if "json" in formats:
            path = out / "report.json"
            path.write_text(report.model_dump_json(
                indent=1, exclude={"runtime_seconds": True, "cells": {"__all__": {"runtime_seconds"}}}
            ) + "\n")
            written.append(path)
    except OSError as e:
        raise StructuralError(f"cannot write report to {out}: {e}") from e
    return written


def sensitivity_table(report: SensitivityReport) -> Table:
    table = Table(title=f"Effect of initial imputation ({report.dataset}, MAR random)", box=box.ASCII,
                  title_justify="left")
    table.add_column("Method")
    for strategy in dict.fromkeys(v.initial_imputation for v in report.variants):
        table.add_column(f"{strategy.capitalize()} imputed", justify="right")
    for method in dict.fromkeys(v.method for v in report.variants):
        row = [METHOD_LABELS[method]]
        for v in report.variants:
            if v.method == method:
                row.append(f"{v.rmse_sum.mean:.2f} ({v.rmse_sum.max:.2f})")
        table.add_row(*row)
    return table


def emit_sensitivity(report: SensitivityReport, out: Path) -> List[Path]:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StructuralError(f"cannot create output directory {out}: {e}") from e
    header = _provenance(report.config_digest, report.seed)
    rows = [
        dict(method=v.method, initial_imputation=v.initial_imputation, run=k, seed=seed, rmse_sum=value)
        for v in report.variants
        for k, (seed, value) in enumerate(zip(v.seeds, v.rmse_sum.values))
    ]
    csv_path = out / "sensitivity.csv"
    with open(csv_path, "w", newline="") as f:
        f.write(header)
        pd.DataFrame(rows).to_csv(f, index=False, lineterminator="\n")
    txt_path = out / "sensitivity.txt"
    txt_path.write_text(header + render_table(sensitivity_table(report)))
    return [csv_path, txt_path]


def ordering_holds(report: SensitivityReport, method: str = "dae") -> Tuple[bool, float]:
    """Whether perfect < mean < max holds for ``method``, and the max/mean ratio."""
    means = {v.initial_imputation: v.rmse_sum.mean for v in report.variants if v.method == method}
    ordered = means["perfect"] < means["mean"] < means["max"]
    return ordered, means["max"] / means["mean"]
