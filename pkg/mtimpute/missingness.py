"""Missingness induction: MCAR/MAR/MNAR mechanisms under random or uniform patterns.

A mechanism decides which rows lose data (probability ``p_m``, gated for MAR/MNAR on
two trigger columns both exceeding their means); the pattern decides which vulnerable
cells of a flagged row go missing (all of them, or each with probability ``p_p``).
Permanent columns are never touched.
"""

import hashlib
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import ValidationError
from scipy.optimize import brentq

from mtimpute.dataio import Dataset
from mtimpute.errors import MissingnessError, StructuralError
from mtimpute.models import MechanismSpec

logger = logging.getLogger(__name__)

DEFAULT_PATTERN_PROBABILITY = 0.5
MIN_TUNING_DRAWS = 20


@dataclass(frozen=True)
class MissingnessMask:
    """Boolean grid, True where a cell is missing."""

    cells: npt.NDArray[np.bool_]
    spec: Optional[MechanismSpec] = None

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.ndim != 2:
            raise StructuralError(f"a mask must be 2-D, got shape {cells.shape}")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.cells, dtype=dtype)

    @classmethod
    def empty(cls, shape: Tuple[int, int]) -> "MissingnessMask":
        return cls(np.zeros(shape, dtype=bool))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape

    @property
    def n_missing(self) -> int:
        return int(self.cells.sum())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.cells.shape, dtype=np.int64).tobytes())
        h.update(np.packbits(self.cells).tobytes())
        return h.hexdigest()


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise MissingnessError(f"{name} must lie in [0, 1], got {value}")


def _reference_values(dataset: Dataset) -> np.ndarray:
    # trigger means come from the uncorrupted table
    return dataset.truth if dataset.truth is not None else dataset.values


def trigger_candidates(dataset: Dataset, kind: str) -> List[int]:
    if kind == "MAR":
        return dataset.numeric_permanent_indices
    if kind == "MNAR":
        return dataset.vulnerable_indices
    return []


def _check_dataset(dataset: Dataset, kind: str) -> None:
    if not dataset.vulnerable_indices:
        raise MissingnessError(f"{dataset.name}: no vulnerable columns, nothing can go missing")
    candidates = trigger_candidates(dataset, kind)
    if kind == "MAR" and len(candidates) < 2:
        raise MissingnessError(f"{dataset.name}: MAR needs at least 2 numeric permanent columns")
    if kind == "MNAR" and len(candidates) < 2:
        raise MissingnessError(f"{dataset.name}: MNAR needs at least 2 vulnerable columns")


def check_preconditions(
    dataset: Dataset, kind: str, trigger_columns: Optional[Tuple[int, int]] = None
) -> None:
    _check_dataset(dataset, kind)
    candidates = trigger_candidates(dataset, kind)
    if kind == "MCAR":
        if trigger_columns is not None:
            raise MissingnessError("MCAR takes no trigger columns")
        return
    if trigger_columns is None:
        raise MissingnessError(f"{kind} needs two trigger columns")
    stray = [dataset.columns[i] if 0 <= i < dataset.n_cols else str(i)
             for i in trigger_columns if i not in candidates]
    if stray:
        role = "numeric permanent" if kind == "MAR" else "vulnerable"
        raise MissingnessError(f"{kind} trigger columns must be {role}; got {stray}")


def qualifying_rows(dataset: Dataset, spec: MechanismSpec) -> npt.NDArray[np.bool_]:
    """Rows the mechanism may flag: every row for MCAR, above-mean rows otherwise."""
    if spec.kind == "MCAR":
        return np.ones(dataset.n_rows, dtype=bool)
    reference = _reference_values(dataset)
    i, j = spec.trigger_columns
    means = np.nanmean(reference[:, [i, j]], axis=0)
    return (reference[:, i] > means[0]) & (reference[:, j] > means[1])


def _draw_uniforms(
    n_rows: int, n_vulnerable: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    return rng.random(n_rows), rng.random((n_rows, n_vulnerable))


def _assemble(
    dataset: Dataset,
    spec: MechanismSpec,
    qualifying: np.ndarray,
    row_u: np.ndarray,
    cell_u: np.ndarray,
) -> np.ndarray:
    flagged = qualifying & (row_u < spec.p_m)
    if spec.pattern == "uniform":
        hit = np.broadcast_to(flagged[:, None], cell_u.shape)
    else:
        hit = flagged[:, None] & (cell_u < spec.p_p)
    cells = np.zeros((dataset.n_rows, dataset.n_cols), dtype=bool)
    cells[:, dataset.vulnerable_indices] = hit
    return cells


def induce(
    dataset: Dataset, spec: MechanismSpec, rng: Optional[np.random.Generator] = None
) -> MissingnessMask:
    """Draw one mask. Without ``rng`` the spec's seed drives the draw."""
    _check_probability("p_m", spec.p_m)
    _check_probability("p_p", spec.p_p)
    check_preconditions(dataset, spec.kind, spec.trigger_columns)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    row_u, cell_u = _draw_uniforms(dataset.n_rows, len(dataset.vulnerable_indices), rng)
    cells = _assemble(dataset, spec, qualifying_rows(dataset, spec), row_u, cell_u)
    return MissingnessMask(cells, spec=spec)


def missing_fraction(mask: Union[MissingnessMask, npt.ArrayLike], dataset: Optional[Dataset] = None) -> float:
    cells = np.asarray(mask, dtype=bool)
    if dataset is not None and cells.shape != (dataset.n_rows, dataset.n_cols):
        raise StructuralError(f"mask {cells.shape} does not match {dataset.name} table")
    return float(cells.sum()) / cells.size


def column_fractions(mask: MissingnessMask, columns: Optional[List[str]] = None) -> Dict[str, float]:
    fractions = mask.cells.mean(axis=0)
    names = columns or [str(j) for j in range(mask.shape[1])]
    return {name: float(f) for name, f in zip(names, fractions)}


def fraction_ceiling(dataset: Dataset, kind: str, trigger_columns: Optional[Tuple[int, int]]) -> float:
    """Largest missing fraction reachable with p_m = p_p = 1."""
    probe = MechanismSpec(kind=kind, pattern="uniform", p_m=1.0, trigger_columns=trigger_columns)
    share = len(dataset.vulnerable_indices) / dataset.n_cols
    return float(qualifying_rows(dataset, probe).mean()) * share


def choose_trigger_columns(
    dataset: Dataset, kind: str, target_fraction: float, rng: np.random.Generator
) -> Optional[Tuple[int, int]]:
    """Pick the trigger pair once for the dataset.

    Pairs are visited in random order and the first whose ceiling reaches the target is
    taken; if none does, the pair with the highest ceiling.
    """
    if kind == "MCAR":
        return None
    pairs = list(itertools.combinations(trigger_candidates(dataset, kind), 2))
    order = rng.permutation(len(pairs))
    best, best_ceiling = None, -1.0
    for k in order:
        pair = tuple(int(c) for c in pairs[k])
        ceiling = fraction_ceiling(dataset, kind, pair)
        if ceiling >= target_fraction:
            return pair
        if ceiling > best_ceiling:
            best, best_ceiling = pair, ceiling
    return best


class _FractionEstimator:
    """Mean missing fraction over a fixed set of draws.

    The uniforms are drawn once, so the estimate is monotone in ``p_m`` and ``p_p``.
    """

    def __init__(self, dataset: Dataset, spec: MechanismSpec, rng: np.random.Generator, draws: int):
        self.dataset = dataset
        self.spec = spec
        self.qualifying = qualifying_rows(dataset, spec)
        n_vulnerable = len(dataset.vulnerable_indices)
        self.uniforms = [_draw_uniforms(dataset.n_rows, n_vulnerable, rng) for _ in range(draws)]

    def __call__(self, p_m: float, p_p: float) -> float:
        spec = self.spec.model_copy(update={"p_m": p_m, "p_p": p_p})
        total = 0.0
        for row_u, cell_u in self.uniforms:
            total += _assemble(self.dataset, spec, self.qualifying, row_u, cell_u).mean()
        return total / len(self.uniforms)


def _bisect(f, target: float, lo: float, hi: float) -> float:
    if f(lo) >= target:
        return lo
    if f(hi) <= target:
        return hi
    return float(brentq(lambda p: f(p) - target, lo, hi, xtol=1e-6))


def tune_probabilities(
    dataset: Dataset,
    kind: str,
    pattern: str,
    target_fraction: float,
    tolerance: float = 0.02,
    rng: Optional[np.random.Generator] = None,
    draws: int = MIN_TUNING_DRAWS,
) -> MechanismSpec:
    """Search p_m (then p_p) until the expected missing fraction meets the target.

    For the random pattern p_p is pinned at 0.5 while p_m is bisected; only when p_m = 1
    cannot reach the target is p_p raised. When even p_m = p_p = 1 falls short, the
    best-achievable spec is returned and the shortfall is logged.
    """
    _check_probability("target_fraction", target_fraction)
    if draws < MIN_TUNING_DRAWS:
        raise MissingnessError(f"tuning needs at least {MIN_TUNING_DRAWS} draws, got {draws}")
    if rng is None:
        rng = np.random.default_rng()
    _check_dataset(dataset, kind)
    triggers = choose_trigger_columns(dataset, kind, target_fraction, rng)
    p_p = DEFAULT_PATTERN_PROBABILITY if pattern == "random" else 1.0
    try:
        spec = MechanismSpec(kind=kind, pattern=pattern, p_m=0.0, p_p=p_p, trigger_columns=triggers)
    except ValidationError as e:
        raise MissingnessError(f"cannot build a {kind}/{pattern} spec: {e}") from e
    check_preconditions(dataset, kind, triggers)
    if target_fraction == 0.0:
        return spec

    estimate = _FractionEstimator(dataset, spec, rng, draws)
    if estimate(1.0, p_p) >= target_fraction or pattern == "uniform":
        p_m = _bisect(lambda p: estimate(p, p_p), target_fraction, 0.0, 1.0)
    else:
        p_m = 1.0
        p_p = _bisect(lambda p: estimate(1.0, p), target_fraction, p_p, 1.0)

    achieved = estimate(p_m, p_p)
    if target_fraction - achieved > tolerance:
        logger.warning(
            "%s %s/%s: best achievable missing fraction %.3f is short of target %.3f",
            dataset.name, kind, pattern, achieved, target_fraction,
        )
    elif abs(achieved - target_fraction) > tolerance:
        logger.warning(
            "%s %s/%s: tuned fraction %.3f misses target %.3f by more than %.3f",
            dataset.name, kind, pattern, achieved, target_fraction, tolerance,
        )
    logger.debug("%s %s/%s tuned: p_m=%.4f p_p=%.4f fraction=%.4f", dataset.name, kind, pattern, p_m, p_p, achieved)
    return spec.model_copy(update={"p_m": p_m, "p_p": p_p})


def _spec_lines(spec: MechanismSpec) -> List[str]:
    triggers = "none" if spec.trigger_columns is None else f"{spec.trigger_columns[0]},{spec.trigger_columns[1]}"
    return [
        f"kind={spec.kind}",
        f"pattern={spec.pattern}",
        f"p_m={float(spec.p_m)!r}",
        f"p_p={float(spec.p_p)!r}",
        f"trigger_columns={triggers}",
        f"seed={'none' if spec.seed is None else spec.seed}",
    ]


def spec_path(mask_path: Union[str, Path]) -> Path:
    return Path(mask_path).with_suffix(".spec")


def write_mask(
    mask: MissingnessMask,
    path: Union[str, Path],
    columns: List[str],
    provenance: Optional[Dict[str, object]] = None,
) -> Path:
    """Write the mask as 0/1 CSV plus a key=value spec sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(mask.cells.astype(np.int8), columns=columns)
    frame.to_csv(path, index=False, lineterminator="\n")
    if mask.spec is not None:
        lines = _spec_lines(mask.spec) + [f"{k}={v}" for k, v in (provenance or {}).items()]
        spec_path(path).write_text("\n".join(lines) + "\n")
    return path


def _parse_spec(text: str) -> MechanismSpec:
    fields = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
    triggers = fields.get("trigger_columns", "none")
    seed = fields.get("seed", "none")
    return MechanismSpec(
        kind=fields["kind"],
        pattern=fields["pattern"],
        p_m=float(fields["p_m"]),
        p_p=float(fields["p_p"]),
        trigger_columns=None if triggers == "none" else tuple(int(t) for t in triggers.split(",")),
        seed=None if seed == "none" else int(seed),
    )


def read_mask(path: Union[str, Path]) -> Tuple[MissingnessMask, List[str]]:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as e:
        raise StructuralError(f"mask file not found: {path}") from e
    if not frame.isin([0, 1]).all().all():
        raise StructuralError(f"mask {path} must contain only 0 and 1")
    spec = None
    sidecar = spec_path(path)
    if sidecar.exists():
        try:
            spec = _parse_spec(sidecar.read_text())
        except (KeyError, ValueError) as e:
            raise StructuralError(f"unreadable mask spec {sidecar}: {e}") from e
    return MissingnessMask(frame.to_numpy(dtype=bool), spec=spec), list(frame.columns)
