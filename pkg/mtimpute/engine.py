"""Imputation methods: column means, the standard DAE and the DAE with metamorphic truth.

All methods take a normalized table whose missing cells may hold anything (NaN in
practice) plus a mask, and return tables whose observed cells are the input's, bit for bit.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from mtimpute.dae import DaeNetwork, build_dae
from mtimpute.errors import NumericalError, StructuralError
from mtimpute.models import ImputationConfig
from mtimpute.nn_core import (
    AdamState,
    Matrix,
    adam_step,
    backward,
    flatten_gradients,
    forward,
    metamorphic_loss,
    mse_loss,
)
from mtimpute.trace import TrainingTrace

logger = logging.getLogger(__name__)


@dataclass
class ImputationRun:
    imputed: Matrix
    method: str
    seed: int
    epochs: int
    wall_time: float
    initial_imputation: str = "mean"
    loss_history: List[float] = field(default_factory=list, repr=False)
    # dae_mt only: the imputation right after priming
    primed: Optional[Matrix] = field(default=None, repr=False)
    network: Optional[DaeNetwork] = field(default=None, repr=False)


def _prepare(data: npt.ArrayLike, mask: npt.ArrayLike):
    data = np.asarray(data, dtype=np.float64)
    missing = np.asarray(mask, dtype=bool)
    if data.ndim != 2 or data.shape != missing.shape:
        raise StructuralError(f"table {data.shape} and mask {missing.shape} do not match")
    if not np.all(np.isfinite(data[~missing])):
        raise NumericalError("observed cells must be finite")
    empty = np.flatnonzero(missing.all(axis=0))
    if empty.size:
        raise StructuralError(f"columns {empty.tolist()} have no observed cells")
    return data, missing


def observed_means(data: Matrix, missing: np.ndarray) -> np.ndarray:
    return np.nanmean(np.where(missing, np.nan, data), axis=0)


def initial_impute(
    data: npt.ArrayLike,
    mask: npt.ArrayLike,
    strategy: str = "mean",
    truth: Optional[npt.ArrayLike] = None,
) -> Matrix:
    """Fill missing cells with observed column means, observed column maxima, or the truth."""
    data, missing = _prepare(data, mask)
    if strategy == "mean":
        fill = np.broadcast_to(observed_means(data, missing), data.shape)
    elif strategy == "max":
        fill = np.broadcast_to(np.nanmax(np.where(missing, np.nan, data), axis=0), data.shape)
    elif strategy == "perfect":
        if truth is None:
            raise StructuralError("perfect-guess initial imputation needs the ground truth")
        fill = np.asarray(truth, dtype=np.float64)
        if fill.shape != data.shape:
            raise StructuralError(f"truth {fill.shape} does not match table {data.shape}")
    else:
        raise StructuralError(f"unknown initial imputation {strategy!r}")
    return np.where(missing, fill, data)


def mean_impute(data: npt.ArrayLike, mask: npt.ArrayLike) -> ImputationRun:
    start = time.perf_counter()
    imputed = initial_impute(data, mask, "mean")
    return ImputationRun(
        imputed=imputed, method="mean", seed=0, epochs=0, wall_time=time.perf_counter() - start
    )


class DaeTrainer:
    """One autoencoder with its optimizer, trained full-batch: one Adam update per epoch."""

    def __init__(
        self,
        n_cols: int,
        config: ImputationConfig,
        rng: np.random.Generator,
        trace: Optional[TrainingTrace] = None,
        run_index: int = 0,
    ):
        self.rng = rng
        self.net: DaeNetwork = build_dae(n_cols, config.theta, rng, dropout=config.dropout)
        self.state = AdamState.for_parameters(self.net.parameters(), **config.adam.model_dump())
        self.trace = trace
        self.run_index = run_index
        self.epochs = 0
        self.loss_history: List[float] = []

    def train(self, table: Matrix, missing: np.ndarray, epochs: int, metamorphic: bool) -> None:
        """Train on every row of ``table`` for ``epochs`` epochs."""
        for _ in range(epochs):
            pred = forward(self.net, table, "train", self.rng)
            # closed learning: no row is held out
            if not pred.shape[0] == table.shape[0] == missing.shape[0]:
                raise StructuralError(
                    f"training covers {pred.shape[0]} of {table.shape[0]} rows against a mask of {missing.shape[0]}"
                )
            if metamorphic:
                report = metamorphic_loss(table, pred, missing)
            else:
                report = mse_loss(table, pred)
            grads = backward(self.net, report.grad)
            adam_step(self.net.parameters(), flatten_gradients(grads), self.state)
            self.epochs += 1
            self.loss_history.append(report.loss)
            if self.trace is not None:
                self.trace.record(self.run_index, self.epochs, report.loss, self.net, grads)

    def predict(self, table: Matrix) -> Matrix:
        return forward(self.net, table, "infer")


def dae_impute_standard(
    data: npt.ArrayLike,
    mask: npt.ArrayLike,
    config: ImputationConfig,
    rng: np.random.Generator,
    truth: Optional[npt.ArrayLike] = None,
    trace: Optional[TrainingTrace] = None,
    run_index: int = 0,
) -> ImputationRun:
    """Train against the initial imputation as ground truth, then predict the missing cells."""
    start = time.perf_counter()
    data, missing = _prepare(data, mask)
    x0 = initial_impute(data, missing, config.initial_imputation, truth)
    trainer = DaeTrainer(data.shape[1], config, rng, trace, run_index)
    trainer.train(x0, missing, config.total_epochs, metamorphic=False)
    imputed = np.where(missing, trainer.predict(x0), data)
    return ImputationRun(
        imputed=imputed,
        method="dae",
        seed=config.seed,
        epochs=trainer.epochs,
        wall_time=time.perf_counter() - start,
        initial_imputation=config.initial_imputation,
        loss_history=trainer.loss_history,
        network=trainer.net,
    )


class FeedbackImputer:
    """Metamorphic-truth training with imputation feedback, one phase at a time."""

    def __init__(
        self,
        data: npt.ArrayLike,
        mask: npt.ArrayLike,
        config: ImputationConfig,
        rng: np.random.Generator,
        truth: Optional[npt.ArrayLike] = None,
        trace: Optional[TrainingTrace] = None,
        run_index: int = 0,
    ):
        self.data, self.missing = _prepare(data, mask)
        self.config = config
        self.current = initial_impute(self.data, self.missing, config.initial_imputation, truth)
        self.trainer = DaeTrainer(self.data.shape[1], config, rng, trace, run_index)

    def peek(self) -> Matrix:
        """Predictions at missing cells; observed cells keep their original values."""
        return np.where(self.missing, self.trainer.predict(self.current), self.data)

    def prime(self) -> Matrix:
        """Train on the initial imputation; returns what the primed network imputes."""
        self.trainer.train(self.current, self.missing, self.config.n_prime, metamorphic=True)
        return self.peek()

    def feedback_step(self) -> Matrix:
        """Re-impute from the network's predictions, then train on the new table."""
        self.current = self.peek()
        self.trainer.train(self.current, self.missing, self.config.n_step, metamorphic=True)
        return self.current

    @property
    def epochs(self) -> int:
        return self.trainer.epochs


def dae_impute_mt(
    data: npt.ArrayLike,
    mask: npt.ArrayLike,
    config: ImputationConfig,
    rng: np.random.Generator,
    truth: Optional[npt.ArrayLike] = None,
    trace: Optional[TrainingTrace] = None,
    run_index: int = 0,
) -> ImputationRun:
    start = time.perf_counter()
    imputer = FeedbackImputer(data, mask, config, rng, truth, trace, run_index)
    primed = imputer.prime()
    for _ in range(config.n_feedback_steps):
        imputer.feedback_step()
    if imputer.epochs != config.total_epochs:
        raise StructuralError(f"ran {imputer.epochs} epochs, scheduled {config.total_epochs}")
    return ImputationRun(
        imputed=imputer.current,
        method="dae_mt",
        seed=config.seed,
        epochs=imputer.epochs,
        wall_time=time.perf_counter() - start,
        initial_imputation=config.initial_imputation,
        loss_history=imputer.trainer.loss_history,
        network=imputer.trainer.net,
        primed=primed,
    )


def impute_once(
    data: npt.ArrayLike,
    mask: npt.ArrayLike,
    config: ImputationConfig,
    truth: Optional[npt.ArrayLike] = None,
    trace: Optional[TrainingTrace] = None,
    run_index: int = 0,
) -> ImputationRun:
    """A single run, seeded from ``config.seed``."""
    if config.method == "mean":
        return mean_impute(data, mask)
    rng = np.random.default_rng(config.seed)
    method = dae_impute_mt if config.method == "dae_mt" else dae_impute_standard
    return method(data, mask, config, rng, truth=truth, trace=trace, run_index=run_index)


def multiple_impute(
    data: npt.ArrayLike,
    mask: npt.ArrayLike,
    config: ImputationConfig,
    truth: Optional[npt.ArrayLike] = None,
    trace: Optional[TrainingTrace] = None,
    progress: bool = False,
) -> List[ImputationRun]:
    """``n_imputations`` independent runs; run k is seeded with ``config.seed + k``.

    Mean imputation is deterministic, so it yields a single run.
    """
    if config.method == "mean":
        return [mean_impute(data, mask)]

    def run(k: int) -> ImputationRun:
        run_config = config.model_copy(update={"seed": config.seed + k})
        logger.debug("%s imputation %d/%d (seed %d)", config.method, k + 1, config.n_imputations, run_config.seed)
        return impute_once(data, mask, run_config, truth=truth, trace=trace, run_index=k)

    indices = range(config.n_imputations)
    desc = f"{config.method} imputations"
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(tqdm(pool.map(run, indices), total=len(indices), desc=desc, disable=not progress))
    return [run(k) for k in tqdm(indices, desc=desc, disable=not progress)]
