"""Conversion of trained networks to PyTorch, for inspection and export.

Requires the optional ``torch`` extra.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from mtimpute.errors import StructuralError
from mtimpute.nn_core import Network

try:
    import torch
except ImportError:  # pragma: no cover
    torch = None

logger = logging.getLogger(__name__)


def _require_torch():
    if torch is None:
        raise StructuralError("torch is not installed; install the 'torch' extra")
    return torch


def to_torch(net: Network) -> "torch.nn.Sequential":
    """An equivalent ``nn.Sequential``: input dropout, then Linear/Tanh pairs, float64."""
    _require_torch()
    modules: List[torch.nn.Module] = []
    if net.dropout.active and net.dropout.rate > 0:
        modules.append(torch.nn.Dropout(net.dropout.rate))
    for layer in net.layers:
        linear = torch.nn.Linear(layer.in_dim, layer.out_dim, dtype=torch.float64)
        with torch.no_grad():
            # torch stores weights as (out, in)
            linear.weight.copy_(torch.from_numpy(np.ascontiguousarray(layer.weights.T)))
            linear.bias.copy_(torch.from_numpy(layer.biases.copy()))
        modules.append(linear)
        if layer.activation == "tanh":
            modules.append(torch.nn.Tanh())
    return torch.nn.Sequential(*modules)


def layer_properties(layer: "torch.nn.Module") -> Dict[str, Any]:
    """Extract properties from a PyTorch layer."""
    properties = {
        "type": layer.__class__.__name__,
        "trainable_parameters": sum(p.numel() for p in layer.parameters() if p.requires_grad),
        "has_bias": getattr(layer, "bias", None) is not None,
    }
    if isinstance(layer, torch.nn.Linear):
        weights = layer.weight.detach().cpu().numpy()
        properties.update({
            "in_features": layer.in_features,
            "out_features": layer.out_features,
            "mean_abs_weight": float(np.mean(np.abs(weights))),
            "std_weight": float(np.std(weights)),
        })
    elif isinstance(layer, torch.nn.Dropout):
        properties["p"] = layer.p
    return properties


def describe(model: "torch.nn.Sequential") -> List[Dict[str, Any]]:
    return [{"name": name, **layer_properties(layer)} for name, layer in model.named_children()]


def export(net: Network, prefix: Union[str, Path]) -> Tuple[Path, Path]:
    """Save ``<prefix>_weights.pt`` (a state dict) and ``<prefix>_info.pt`` (layer list)."""
    _require_torch()
    model = to_torch(net)
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    weights_path = prefix.with_name(prefix.name + "_weights.pt")
    info_path = prefix.with_name(prefix.name + "_info.pt")
    torch.save(model.state_dict(), weights_path)
    torch.save({"name": type(net).__name__, "widths": net.widths, "layers": describe(model)}, info_path)
    logger.info("exported %s to %s and %s", type(net).__name__, weights_path, info_path)
    return weights_path, info_path
