import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from mtimpute.dataio import DATA_DIR_ENV, Dataset, load_csv

SYNTHETIC_COLUMNS = ["a", "b", "c", "d", "e", "kind"]
SYNTHETIC_VULNERABLE = ["c", "d", "e"]


def synthetic_frame(n_rows: int = 80, seed: int = 7) -> pd.DataFrame:
    """Correlated numeric columns plus one string-valued categorical column."""
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(n_rows, 2))
    frame = pd.DataFrame({
        "a": latent[:, 0] + 0.1 * rng.normal(size=n_rows),
        "b": latent[:, 1] * 2.0 + 5.0,
        "c": latent[:, 0] - latent[:, 1] + 0.3 * rng.normal(size=n_rows),
        "d": 0.5 * latent[:, 0] + rng.normal(size=n_rows),
        "e": latent[:, 1] * 3.0 + 0.2 * rng.normal(size=n_rows) - 1.0,
        "kind": rng.choice(["x", "y", "z"], size=n_rows),
    })
    return frame.round(6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def synthetic_csv(tmp_path) -> Path:
    path = tmp_path / "syn.csv"
    synthetic_frame().to_csv(path, index=False)
    return path


@pytest.fixture
def synthetic_dataset(synthetic_csv) -> Dataset:
    return load_csv(synthetic_csv, SYNTHETIC_VULNERABLE, name="SYN")


@pytest.fixture
def large_dataset(tmp_path) -> Dataset:
    path = tmp_path / "large.csv"
    synthetic_frame(n_rows=500, seed=11).to_csv(path, index=False)
    return load_csv(path, SYNTHETIC_VULNERABLE, name="LARGE")


@pytest.fixture
def catalog_file(tmp_path, synthetic_csv) -> Path:
    """A one-entry catalog describing the synthetic CSV, with the CSV's directory as data dir."""
    path = tmp_path / "catalog.yaml"
    path.write_text(yaml.safe_dump({
        "SYN": {
            "name": "Synthetic",
            "path": synthetic_csv.name,
            "rows": 80,
            "columns": 6,
            "categorical": ["kind"],
            "vulnerable": SYNTHETIC_VULNERABLE,
            "missing_targets": {"MCAR/random": 0.15, "MCAR/uniform": 0.15},
        }
    }))
    return path


@pytest.fixture(scope="session")
def data_dir() -> Path:
    """Directory with the real benchmark files; tests needing it skip when it is unset."""
    value = os.environ.get(DATA_DIR_ENV)
    if not value or not Path(value).is_dir():
        pytest.skip(f"set {DATA_DIR_ENV} to the directory holding the benchmark datasets")
    return Path(value)
