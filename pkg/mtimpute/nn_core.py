"""Dense network substrate: forward/backward passes, input dropout, Adam and the two losses.

Everything here is plain numpy. Batches are 2-D float64 arrays (rows are samples),
dense layers compute ``x @ W + b`` and the only non-linearity is ``tanh``.
"""

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from mtimpute.errors import NumericalError, StructuralError

Matrix = npt.NDArray[np.float64]
Activation = Literal["tanh", "identity"]
Mode = Literal["train", "infer"]

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def as_matrix(values: npt.ArrayLike, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise StructuralError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(f"{name} contains non-finite entries")
    return matrix


def xavier_uniform(in_dim: int, out_dim: int, rng: np.random.Generator) -> Matrix:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(in_dim, out_dim))


@dataclass
class DenseLayer:
    weights: Matrix
    biases: npt.NDArray[np.float64]
    activation: Activation = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise StructuralError(
                f"weights {self.weights.shape} and biases {self.biases.shape} do not match"
            )
        if self.activation not in ("tanh", "identity"):
            raise StructuralError(f"unsupported activation {self.activation!r}")

    @classmethod
    def initialized(
        cls, in_dim: int, out_dim: int, activation: Activation, rng: np.random.Generator
    ) -> "DenseLayer":
        return cls(xavier_uniform(in_dim, out_dim, rng), np.zeros(out_dim), activation)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def __call__(self, x: Matrix) -> Matrix:
        z = x @ self.weights + self.biases
        return np.tanh(z) if self.activation == "tanh" else z


@dataclass
class DropoutSpec:
    """Inverted dropout: kept units are divided by the keep probability."""

    rate: float = 0.5
    active: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise StructuralError(f"dropout rate must lie in [0, 1], got {self.rate}")

    def keep_mask(self, shape: Tuple[int, int], rng: np.random.Generator) -> Matrix:
        keep = 1.0 - self.rate
        if keep == 0.0:
            return np.zeros(shape)
        return (rng.random(shape) >= self.rate) / keep


@dataclass
class LayerGradients:
    weights: Matrix
    biases: npt.NDArray[np.float64]


@dataclass(frozen=True)
class LossReport:
    loss: float
    grad: Matrix


@dataclass
class AdamState:
    first_moment: List[np.ndarray]
    second_moment: List[np.ndarray]
    step: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_parameters(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **hyper,
        )


@dataclass
class _ForwardCache:
    # inputs[i] is what layer i saw; outputs[i] is what it produced
    inputs: List[Matrix]
    outputs: List[Matrix]
    keep_mask: Matrix


@dataclass
class Network:
    """Input dropout followed by a stack of dense layers.

    A network together with its optimizer state is owned by one caller at a time.
    """

    layers: List[DenseLayer]
    dropout: DropoutSpec = field(default_factory=DropoutSpec)
    check_finite: bool = True
    _cache: Optional[_ForwardCache] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.layers:
            raise StructuralError("a network needs at least one dense layer")
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if prev.out_dim != nxt.in_dim:
                raise StructuralError(
                    f"layer {i} emits {prev.out_dim} units but layer {i + 1} expects {nxt.in_dim}"
                )

    @property
    def widths(self) -> List[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> List[np.ndarray]:
        """Live references, ordered [W0, b0, W1, b1, ...]."""
        params: List[np.ndarray] = []
        for layer in self.layers:
            params.extend((layer.weights, layer.biases))
        return params

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def activations(self) -> List[Matrix]:
        """Per-layer outputs of the last training forward pass."""
        if self._cache is None:
            return []
        return list(self._cache.outputs)


def forward(
    net: Network,
    input: npt.ArrayLike,
    mode: Mode = "infer",
    rng: Optional[np.random.Generator] = None,
) -> Matrix:
    if mode not in ("train", "infer"):
        raise StructuralError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = as_matrix(input, "input")
    if x.shape[1] != net.input_dim:
        raise StructuralError(
            f"input has {x.shape[1]} columns but the network expects {net.input_dim}"
        )

    training = mode == "train" and net.dropout.active
    if mode == "train":
        if rng is None:
            raise StructuralError("train mode needs a random generator for the dropout mask")
        keep_mask = net.dropout.keep_mask(x.shape, rng) if training else np.ones_like(x)
        x = x * keep_mask
    else:
        keep_mask = None
        net._cache = None

    inputs: List[Matrix] = []
    outputs: List[Matrix] = []
    for index, layer in enumerate(net.layers):
        inputs.append(x)
        x = layer(x)
        if net.check_finite and not np.all(np.isfinite(x)):
            raise NumericalError(f"layer {index} produced non-finite activations", layer=index)
        outputs.append(x)

    if mode == "train":
        net._cache = _ForwardCache(inputs=inputs, outputs=outputs, keep_mask=keep_mask)
    return x


def backward(net: Network, loss_grad: npt.ArrayLike) -> List[LayerGradients]:
    """Backpropagate ``dL/dpred`` through the cached training pass."""
    cache = net._cache
    if cache is None:
        raise StructuralError("backward needs a preceding forward pass in train mode")
    grad = np.asarray(loss_grad, dtype=np.float64)
    if grad.shape != cache.outputs[-1].shape:
        raise StructuralError(
            f"loss gradient shape {grad.shape} does not match predictions {cache.outputs[-1].shape}"
        )

    grads: List[LayerGradients] = []
    for layer, x, out in zip(reversed(net.layers), reversed(cache.inputs), reversed(cache.outputs)):
        if layer.activation == "tanh":
            grad = grad * (1.0 - out * out)
        grads.append(LayerGradients(weights=x.T @ grad, biases=grad.sum(axis=0)))
        grad = grad @ layer.weights.T
    grads.reverse()
    return grads


def flatten_gradients(grads: Sequence[LayerGradients]) -> List[np.ndarray]:
    """Same ordering as :meth:`Network.parameters`."""
    flat: List[np.ndarray] = []
    for g in grads:
        flat.extend((g.weights, g.biases))
    return flat


def mse_loss(truth: npt.ArrayLike, pred: npt.ArrayLike) -> LossReport:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise StructuralError(f"truth {truth.shape} and prediction {pred.shape} differ in shape")
    diff = pred - truth
    return LossReport(loss=float(np.mean(diff * diff)), grad=2.0 * diff / diff.size)


def metamorphic_loss(
    initial_imputed: npt.ArrayLike, pred: npt.ArrayLike, mask: npt.ArrayLike
) -> LossReport:
    """MSE against the truth metamorph: predictions at missing cells, imputed values elsewhere.

    The metamorph is a constant snapshot, so missing cells carry exactly zero gradient.
    """
    initial_imputed = np.asarray(initial_imputed, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    missing = np.asarray(mask, dtype=bool)
    if not (initial_imputed.shape == pred.shape == missing.shape):
        raise StructuralError(
            f"shapes disagree: imputed {initial_imputed.shape}, "
            f"prediction {pred.shape}, mask {missing.shape}"
        )
    metamorph = np.where(missing, pred, initial_imputed)
    return mse_loss(metamorph, pred)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> Tuple[Sequence[np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise StructuralError(
            f"{len(params)} parameters, {len(grads)} gradients, "
            f"{len(state.first_moment)} optimizer slots"
        )
    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise StructuralError(f"parameter {p.shape}, gradient {g.shape}, slot {m.shape}")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state
