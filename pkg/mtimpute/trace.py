import json
import logging
import threading
from functools import wraps
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from mtimpute.models import TrainingMetrics
from mtimpute.nn_core import LayerGradients, Network

logger = logging.getLogger(__name__)


class TrainingTrace:
    """Collects per-epoch, per-layer statistics of a network while it trains."""

    def __init__(self, every: int = 1):
        self.every = max(1, every)
        self.records: List[TrainingMetrics] = []
        self._lock = threading.Lock()

    def record(
        self,
        run: int,
        epoch: int,
        loss: float,
        net: Network,
        grads: Sequence[LayerGradients],
        **custom: float,
    ) -> None:
        if epoch % self.every:
            return
        activations = net.activations()
        entry = TrainingMetrics(
            run=run,
            epoch=epoch,
            loss=float(loss),
            activations={
                f"dense_{i}": float(np.mean(np.abs(a))) for i, a in enumerate(activations)
            },
            weights={
                f"dense_{i}": float(np.mean(np.abs(layer.weights))) for i, layer in enumerate(net.layers)
            },
            gradients={f"dense_{i}": float(np.linalg.norm(g.weights)) for i, g in enumerate(grads)},
            custom_metrics={k: float(v) for k, v in custom.items()} or None,
        )
        with self._lock:
            self.records.append(entry)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ordered = sorted(self.records, key=lambda r: (r.run, r.epoch))
        with open(path, "w") as f:
            json.dump([r.model_dump() for r in ordered], f, indent=1)
        logger.info("training trace with %d records saved to %s", len(ordered), path)
        return path


def traced(save_path: Union[str, Path] = "training_trace.json", every: int = 1):
    """Decorator: run an imputation function with a fresh trace and save it afterwards.

    The wrapped function must accept a ``trace`` keyword argument.
    Usage:
        @traced("trace.json")
        def run(data, mask, config, trace=None):
            return multiple_impute(data, mask, config, trace=trace)
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, trace: Optional[TrainingTrace] = None, **kwargs):
            trace = trace or TrainingTrace(every=every)
            result = func(*args, trace=trace, **kwargs)
            trace.save(save_path)
            return result

        return wrapper

    return decorator
