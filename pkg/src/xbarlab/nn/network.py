"""Network container, surrogate model builders, and checkpoint I/O."""

from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np

from ..defects import DefectConfig
from ..quantize import QuantSpec
from .layers import (
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    Layer,
    MaxPool2,
    PactQuant,
    ReLU,
    WeightLayer,
)

CHECKPOINT_VERSION = 1


class Network:
    """Ordered layer stack with per-crossbar-layer defect plumbing."""

    def __init__(self, layers: Sequence[Layer], meta: Optional[dict] = None):
        self.layers = list(layers)
        self.meta = dict(meta or {})

    def crossbar_layers(self) -> list[WeightLayer]:
        return [l for l in self.layers if isinstance(l, WeightLayer) and l.crossbar]

    def set_defects(self, configs: Optional[Sequence[Optional[DefectConfig]]],
                    attribution: str = "table") -> None:
        """Attach one config per crossbar layer (None clears)."""
        xb = self.crossbar_layers()
        if configs is None:
            configs = [None] * len(xb)
        if len(configs) != len(xb):
            raise ValueError(f"expected {len(xb)} configs, got {len(configs)}")
        for layer, cfg in zip(xb, configs):
            layer.set_defects(cfg, attribution)

    def forward(self, x: np.ndarray,
                configs: Optional[Sequence[Optional[DefectConfig]]] = None,
                train: bool = False, attribution: str = "table") -> np.ndarray:
        if configs is not None:
            self.set_defects(configs, attribution)
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, value, grad, decay in layer.params():
                out.append((f"{i}.{name}", value, grad, decay))
        return out

    def zero_grads(self) -> None:
        for _, _, grad, _ in self.params():
            grad[...] = 0.0

    def weight_shapes(self) -> list[tuple[int, ...]]:
        return [l.w.shape for l in self.crossbar_layers()]

    def predict(self, x: np.ndarray, batch_size: int = 1000) -> np.ndarray:
        preds = []
        for i in range(0, len(x), batch_size):
            logits = self.forward(x[i:i + batch_size], train=False)
            preds.append(np.argmax(logits, axis=1))
        return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)

    def error_rate(self, x: np.ndarray, y: np.ndarray, batch_size: int = 1000) -> float:
        return float(np.mean(self.predict(x, batch_size) != y))


_LAYER_TYPES = {
    "Dense": Dense, "Conv2d": Conv2d, "BatchNorm": BatchNorm,
    "PactQuant": PactQuant, "ReLU": ReLU, "MaxPool2": MaxPool2, "Flatten": Flatten,
}


def _rebuild_layer(desc: dict, qspec: Optional[QuantSpec], dtype) -> Layer:
    kind = desc["type"]
    rng = np.random.default_rng(0)  # weights are overwritten by load_arrays
    if kind in ("Dense", "Conv2d"):
        layer_qspec = qspec if desc.get("quantized", True) else None
        if kind == "Dense":
            layer = Dense(desc["in_features"], desc["out_features"], rng, qspec=layer_qspec,
                          dtype=dtype, grad_mode=desc.get("grad_mode", "ste"))
        else:
            layer = Conv2d(desc["in_channels"], desc["out_channels"], desc["kernel"], rng,
                           padding=desc["padding"], qspec=layer_qspec, dtype=dtype,
                           grad_mode=desc.get("grad_mode", "ste"))
        layer.crossbar = desc.get("crossbar", True)
        return layer
    if kind == "BatchNorm":
        return BatchNorm(desc["num_features"], dtype=dtype)
    if kind == "PactQuant":
        return PactQuant(bits=desc["bits"], alpha_decay=desc["alpha_decay"], dtype=dtype)
    return _LAYER_TYPES[kind]()


def save_checkpoint(net: Network, path, extra_meta: Optional[dict] = None) -> None:
    """Single-file npz: layer descriptors + arrays + provenance meta."""
    qspec = net.meta.get("qspec")
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "layers": [l.describe() for l in net.layers],
        "qspec": qspec if qspec is None or isinstance(qspec, dict) else vars(qspec),
        "dtype": str(np.dtype(net.meta.get("dtype", "float32"))),
        "provenance": {**net.meta.get("provenance", {}), **(extra_meta or {})},
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for i, layer in enumerate(net.layers):
        for name, arr in layer.state_arrays().items():
            arrays[f"layer{i}.{name}"] = arr
    np.savez(path, **arrays)


def load_checkpoint(path) -> Network:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['format_version']}")
        qspec = QuantSpec(**meta["qspec"]) if meta["qspec"] is not None else None
        dtype = np.dtype(meta["dtype"])
        layers = []
        for i, desc in enumerate(meta["layers"]):
            layer = _rebuild_layer(desc, qspec, dtype)
            prefix = f"layer{i}."
            arrays = {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}
            if arrays:
                layer.load_arrays(arrays)
            layers.append(layer)
    net = Network(layers, meta={"qspec": qspec, "dtype": dtype, "provenance": meta["provenance"]})
    return net


def build_surrogate_cnn(
    seed: int = 0,
    qspec: Optional[QuantSpec] = QuantSpec(),
    in_shape: tuple[int, int, int] = (1, 28, 28),
    classes: int = 10,
    channels: tuple[int, int] = (8, 16),
    hidden: int = 128,
    dtype=np.float32,
    grad_mode: str = "ste",
    exempt_edges: bool = False,
) -> Network:
    """Small conv net (2 conv + 2 dense, ~100k parameters) for desk-scale runs.

    Every weight layer, first and last included, is quantized and
    crossbar-mapped; batch norm and biases stay in full precision.
    ``exempt_edges`` is the common-practice ablation that keeps the first and
    last layers full precision and off the crossbar.
    """
    rng = np.random.default_rng(seed)
    c_in, h, w = in_shape
    c1, c2 = channels
    if h % 4 or w % 4:
        raise ValueError(f"input spatial dims must be divisible by 4, got {in_shape}")
    flat = c2 * (h // 4) * (w // 4)
    a_bits = qspec.a_bits if qspec else None
    alpha_decay = qspec.alpha_decay if qspec else 5e-4
    alpha_init = qspec.pact_alpha_init if qspec else 10.0
    edge_qspec = None if exempt_edges else qspec

    def act():
        return PactQuant(bits=a_bits, alpha_init=alpha_init, alpha_decay=alpha_decay, dtype=dtype)

    first = Conv2d(c_in, c1, 3, rng, padding=1, qspec=edge_qspec, dtype=dtype,
                   grad_mode=grad_mode)
    last = Dense(hidden, classes, rng, qspec=edge_qspec, dtype=dtype, grad_mode=grad_mode)
    if exempt_edges:
        first.crossbar = False
        last.crossbar = False
    layers = [
        first,
        BatchNorm(c1, dtype=dtype),
        act(),
        MaxPool2(),
        Conv2d(c1, c2, 3, rng, padding=1, qspec=qspec, dtype=dtype, grad_mode=grad_mode),
        BatchNorm(c2, dtype=dtype),
        act(),
        MaxPool2(),
        Flatten(),
        Dense(flat, hidden, rng, qspec=qspec, dtype=dtype, grad_mode=grad_mode),
        BatchNorm(hidden, dtype=dtype),
        act(),
        last,
    ]
    return Network(layers, meta={"qspec": qspec, "dtype": dtype,
                                 "provenance": {"builder": "surrogate_cnn", "seed": seed,
                                                "exempt_edges": exempt_edges}})


def build_mlp(
    seed: int,
    sizes: Sequence[int],
    qspec: Optional[QuantSpec] = None,
    dtype=np.float64,
    grad_mode: str = "ste",
    activation: str = "relu",
) -> Network:
    """Plain dense stack for toy problems and gradient checks."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for i in range(len(sizes) - 1):
        layers.append(Dense(sizes[i], sizes[i + 1], rng, qspec=qspec, dtype=dtype,
                            grad_mode=grad_mode))
        if i < len(sizes) - 2:
            if activation == "relu":
                layers.append(ReLU())
            else:
                layers.append(PactQuant(bits=qspec.a_bits if qspec else None,
                                        alpha_init=qspec.pact_alpha_init if qspec else 10.0,
                                        alpha_decay=0.0, dtype=dtype))
    return Network(layers, meta={"qspec": qspec, "dtype": dtype,
                                 "provenance": {"builder": "mlp", "seed": seed}})
