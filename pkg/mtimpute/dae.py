"""The imputation autoencoder topology.

Input dropout, then five tanh hidden layers that widen by ``theta`` per layer up to
``d + 3 * theta`` and narrow back symmetrically, then a linear output layer of width ``d``.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from mtimpute.errors import StructuralError
from mtimpute.nn_core import DenseLayer, DropoutSpec, Network

DEFAULT_THETA = 7
DEFAULT_DROPOUT = 0.5
RAMP_STEPS = (1, 2, 3, 2, 1)


def dae_widths(input_width: int, theta: int) -> List[int]:
    return [input_width] + [input_width + k * theta for k in RAMP_STEPS] + [input_width]


@dataclass
class DaeNetwork(Network):
    input_width: int = 0
    theta: int = DEFAULT_THETA

    def __post_init__(self):
        super().__post_init__()
        expected = dae_widths(self.input_width, self.theta)
        if self.widths != expected:
            raise StructuralError(f"widths {self.widths} do not follow the ramp {expected}")
        if any(layer.activation != "tanh" for layer in self.layers[:-1]):
            raise StructuralError("every hidden layer must be tanh-activated")


def build_dae(
    input_width: int,
    theta: int = DEFAULT_THETA,
    rng: Optional[np.random.Generator] = None,
    dropout: float = DEFAULT_DROPOUT,
) -> DaeNetwork:
    if input_width < 1:
        raise StructuralError(f"input width must be at least 1, got {input_width}")
    if theta < 0:
        raise StructuralError(f"theta must be non-negative, got {theta}")
    if rng is None:
        rng = np.random.default_rng()

    widths = dae_widths(input_width, theta)
    last = len(widths) - 2
    layers = [
        DenseLayer.initialized(w_in, w_out, "identity" if i == last else "tanh", rng)
        for i, (w_in, w_out) in enumerate(zip(widths, widths[1:]))
    ]
    return DaeNetwork(
        layers=layers,
        dropout=DropoutSpec(rate=dropout),
        input_width=input_width,
        theta=theta,
    )
