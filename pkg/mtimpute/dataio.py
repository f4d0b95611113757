"""Dataset ingestion, column roles, z-score normalization and the benchmark catalog."""

import logging
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
import yaml
from pydantic import ValidationError

from mtimpute.errors import ConfigError, DatasetError, StructuralError
from mtimpute.models import DatasetCatalogEntry
from mtimpute.nn_core import Matrix

logger = logging.getLogger(__name__)

Role = Literal["permanent", "vulnerable"]
DATA_DIR_ENV = "MTIMPUTE_DATA_DIR"


@dataclass(frozen=True)
class NormalizationParams:
    means: npt.NDArray[np.float64]
    stds: npt.NDArray[np.float64]

    def apply(self, values: npt.ArrayLike) -> Matrix:
        return (np.asarray(values, dtype=np.float64) - self.means) / self.stds

    def invert(self, values: npt.ArrayLike) -> Matrix:
        return np.asarray(values, dtype=np.float64) * self.stds + self.means


@dataclass(frozen=True)
class Dataset:
    """A numeric table with per-column roles.

    ``values`` may hold NaN at cells that are missing; ``truth`` is the uncorrupted copy
    when one is known.
    """

    name: str
    columns: Tuple[str, ...]
    roles: Tuple[Role, ...]
    values: Matrix
    categorical: FrozenSet[str] = frozenset()
    normalization: Optional[NormalizationParams] = None
    truth: Optional[Matrix] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "categorical", frozenset(self.categorical))
        if self.truth is not None:
            truth = np.array(self.truth, dtype=np.float64)
            truth.flags.writeable = False
            object.__setattr__(self, "truth", truth)
            if truth.shape != values.shape:
                raise StructuralError(f"truth {truth.shape} does not match values {values.shape}")

        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise StructuralError(
                f"{self.name}: table shape {values.shape} does not match {len(self.columns)} columns"
            )
        if len(self.roles) != len(self.columns):
            raise StructuralError(f"{self.name}: {len(self.roles)} roles for {len(self.columns)} columns")
        for column, role in zip(self.columns, self.roles):
            if role == "vulnerable" and column in self.categorical:
                raise DatasetError(f"{self.name}: categorical column {column!r} cannot be vulnerable")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def vulnerable_indices(self) -> List[int]:
        return [i for i, role in enumerate(self.roles) if role == "vulnerable"]

    @property
    def permanent_indices(self) -> List[int]:
        return [i for i, role in enumerate(self.roles) if role == "permanent"]

    @property
    def numeric_permanent_indices(self) -> List[int]:
        return [i for i in self.permanent_indices if self.columns[i] not in self.categorical]

    def column_index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise DatasetError(f"{self.name}: no column named {column!r}") from None

    def corrupted(self, missing: npt.ArrayLike) -> "Dataset":
        """Copy with NaN at the missing cells and the current values kept as truth."""
        missing = np.asarray(missing, dtype=bool)
        if missing.shape != self.values.shape:
            raise StructuralError(f"mask {missing.shape} does not match table {self.values.shape}")
        return replace(self, values=np.where(missing, np.nan, self.values), truth=self.values)


def _label_codes(series: pd.Series) -> np.ndarray:
    categories = sorted(series.astype(str).unique())
    return pd.Categorical(series.astype(str), categories=categories).codes.astype(np.float64)


def load_csv(
    path: Union[str, Path],
    vulnerable: Optional[Sequence[str]] = None,
    *,
    name: Optional[str] = None,
    categorical: Iterable[str] = (),
    entry: Optional[DatasetCatalogEntry] = None,
) -> Dataset:
    """Read a CSV into a :class:`Dataset`.

    Rows with any pre-existing missing cell are dropped. Non-numeric columns, and columns
    named in ``categorical``, are label-encoded to integers and kept permanent. When a
    catalog ``entry`` is given, its reading options and roles apply and the cleaned table
    must have the catalogued dimensions.
    """
    path = Path(path)
    categorical = set(categorical)
    read_kwargs = dict(sep=",", na_values=["NA", ""], keep_default_na=False, skipinitialspace=True)
    if entry is not None:
        name = name or entry.abbreviation
        categorical |= set(entry.categorical)
        if vulnerable is None:
            vulnerable = entry.vulnerable
        read_kwargs.update(sep=entry.delimiter, na_values=entry.na_values)
        if not entry.header:
            read_kwargs.update(header=None, names=entry.column_names)
    name = name or path.stem

    try:
        frame = pd.read_csv(path, **read_kwargs)
    except FileNotFoundError as e:
        raise DatasetError(f"{name}: file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise StructuralError(f"{name}: {path} holds no data") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetError(f"{name}: could not parse {path}: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    if entry is not None and entry.header and entry.column_names is not None:
        if list(frame.columns) != entry.column_names:
            raise DatasetError(f"{name}: header {list(frame.columns)} differs from the catalog")
    if entry is not None and entry.drop_columns:
        frame = frame.drop(columns=entry.drop_columns)

    incomplete = frame.isna().any(axis=1)
    if incomplete.any():
        logger.info("%s: dropping %d of %d rows with missing cells", name, incomplete.sum(), len(frame))
        frame = frame.loc[~incomplete].reset_index(drop=True)
    if frame.empty:
        raise StructuralError(f"{name}: {path} has no complete rows")

    vulnerable = list(vulnerable or [])
    columns: Dict[str, np.ndarray] = {}
    for column in frame.columns:
        series = frame[column]
        numeric = pd.to_numeric(series, errors="coerce")
        bad = numeric.isna()
        if column in categorical or bad.any():
            if column in vulnerable:
                if bad.any():
                    row = int(np.argmax(bad.to_numpy()))
                    raise DatasetError(
                        f"{name}: vulnerable column {column!r} has non-numeric value "
                        f"{series.iloc[row]!r} at data row {row + 1}"
                    )
                raise DatasetError(f"{name}: categorical column {column!r} cannot be vulnerable")
            categorical.add(column)
            columns[column] = _label_codes(series)
        else:
            columns[column] = numeric.to_numpy(dtype=np.float64)

    names = list(frame.columns)
    values = np.column_stack([columns[c] for c in names])
    if entry is not None and values.shape != (entry.rows, entry.columns):
        raise DatasetError(
            f"{name}: expected {entry.rows} x {entry.columns} after cleaning, got "
            f"{values.shape[0]} x {values.shape[1]}"
        )

    dataset = Dataset(
        name=name,
        columns=tuple(names),
        roles=tuple("permanent" for _ in names),
        values=values,
        categorical=frozenset(c for c in categorical if c in names),
    )
    return designate_roles(dataset, vulnerable)


def designate_roles(dataset: Dataset, vulnerable: Sequence[str]) -> Dataset:
    chosen = set(vulnerable)
    for column in chosen:
        dataset.column_index(column)
        if column in dataset.categorical:
            raise DatasetError(f"{dataset.name}: categorical column {column!r} cannot be vulnerable")
    roles = tuple("vulnerable" if c in chosen else "permanent" for c in dataset.columns)
    return replace(dataset, roles=roles)


def fit_normalization(
    values: npt.ArrayLike,
    observed: Optional[npt.ArrayLike] = None,
    columns: Optional[Sequence[str]] = None,
    constant_ok: Sequence[bool] = (),
) -> NormalizationParams:
    """Per-column mean and sample standard deviation over observed cells."""
    values = np.asarray(values, dtype=np.float64)
    observed = np.isfinite(values) if observed is None else np.asarray(observed, dtype=bool) & np.isfinite(values)
    names = list(columns) if columns is not None else [str(j) for j in range(values.shape[1])]
    means = np.empty(values.shape[1])
    stds = np.empty(values.shape[1])
    for j in range(values.shape[1]):
        column = values[observed[:, j], j]
        if column.size < 2:
            raise DatasetError(f"column {names[j]!r} has fewer than 2 observed values")
        means[j] = column.mean()
        stds[j] = column.std(ddof=1)
        if stds[j] == 0.0:
            if j < len(constant_ok) and constant_ok[j]:
                logger.warning("column %r is constant; centring it without scaling", names[j])
                stds[j] = 1.0
            else:
                raise DatasetError(f"column {names[j]!r} has zero variance")
    return NormalizationParams(means=means, stds=stds)


def normalize(
    dataset: Dataset,
    observed_mask: Optional[npt.ArrayLike] = None,
    allow_constant_permanent: bool = False,
) -> Tuple[Dataset, NormalizationParams]:
    """Z-score every column using statistics of the observed cells only.

    ``observed_mask`` marks missing cells with True, as a :class:`MissingnessMask` does.
    The truth copy, when present, is scaled with the same parameters.
    """
    observed = None
    if observed_mask is not None:
        missing = np.asarray(observed_mask, dtype=bool)
        if missing.shape != dataset.values.shape:
            raise StructuralError(f"mask {missing.shape} does not match table {dataset.values.shape}")
        observed = ~missing
    constant_ok = [allow_constant_permanent and role == "permanent" for role in dataset.roles]
    params = fit_normalization(dataset.values, observed, dataset.columns, constant_ok)
    truth = None if dataset.truth is None else params.apply(dataset.truth)
    return replace(dataset, values=params.apply(dataset.values), normalization=params, truth=truth), params


def denormalize(values: npt.ArrayLike, params: NormalizationParams) -> Matrix:
    return params.invert(values)


def load_catalog(path: Optional[Union[str, Path]] = None) -> Dict[str, DatasetCatalogEntry]:
    """Read the dataset manifest; the bundled one when ``path`` is None."""
    try:
        if path is None:
            text = resources.files("mtimpute").joinpath("datasets.yaml").read_text()
        else:
            text = Path(path).read_text()
        raw = yaml.safe_load(text) or {}
        return {
            key: DatasetCatalogEntry.model_validate({"abbreviation": key, **body})
            for key, body in raw.items()
        }
    except FileNotFoundError as e:
        raise ConfigError(f"catalog not found: {path}") from e
    except (yaml.YAMLError, ValidationError) as e:
        raise ConfigError(f"invalid dataset catalog {path or 'datasets.yaml'}: {e}") from e


def resolve_data_dir(data_dir: Optional[Union[str, Path]] = None) -> Path:
    if data_dir is not None:
        return Path(data_dir)
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def load_dataset(
    name: str,
    data_dir: Optional[Union[str, Path]] = None,
    catalog: Optional[Dict[str, DatasetCatalogEntry]] = None,
) -> Dataset:
    """Load a catalogued dataset by abbreviation, or any CSV by path."""
    catalog = load_catalog() if catalog is None else catalog
    if name in catalog:
        entry = catalog[name]
        return load_csv(resolve_data_dir(data_dir) / entry.path, entry=entry)
    if Path(name).suffix.lower() == ".csv" and Path(name).exists():
        return load_csv(name)
    raise DatasetError(f"unknown dataset {name!r}; catalogued: {', '.join(sorted(catalog))}")
