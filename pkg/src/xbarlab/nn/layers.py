"""Minimal numpy layers with quantized, defect-injectable weight paths.

Weight layers keep full-precision master weights; the quantized (and, during
defect-aware runs, defect-substituted) view is regenerated every forward pass
and never stored back.  Backward treats both the rounding and the defect
substitution as identity (straight-through), so gradients land on the master
weights; ``grad_mode="mask"`` optionally zeroes gradients at defective
positions instead.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..defects import DefectConfig, apply as apply_defects, defect_mask
from ..quantize import (
    QuantSpec,
    quantize_activation,
    quantize_activation_grads,
    quantize_weights,
    quantize_weights_grad,
)


class Layer:
    """Base: forward caches what backward needs; params() exposes leaves."""

    trainable = False

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[tuple[str, np.ndarray, np.ndarray, bool]]:
        """(name, value, grad, weight_decay_applies) per parameter."""
        return []

    def describe(self) -> dict:
        return {"type": type(self).__name__}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, value in arrays.items():
            getattr(self, name)[...] = value


class WeightLayer(Layer):
    """Shared quantize-then-inject plumbing for Dense and Conv2d."""

    trainable = True
    crossbar = True

    def __init__(self, w: np.ndarray, b: np.ndarray, qspec: Optional[QuantSpec],
                 grad_mode: str = "ste"):
        if grad_mode not in ("ste", "mask"):
            raise ValueError(f"unknown grad_mode {grad_mode!r}")
        self.w = w
        self.b = b
        self.gw = np.zeros_like(w)
        self.gb = np.zeros_like(b)
        self.qspec = qspec
        self.grad_mode = grad_mode
        self._config: Optional[DefectConfig] = None
        self._attribution = "table"

    def set_defects(self, config: Optional[DefectConfig], attribution: str = "table") -> None:
        if config is not None and config.shape != self.w.shape:
            raise ValueError(f"config shape {config.shape} != weight shape {self.w.shape}")
        self._config = config
        self._attribution = attribution

    def effective_weights(self) -> np.ndarray:
        w = self.w
        if self.qspec is not None:
            w = quantize_weights(w, self.qspec.w_bits)
        if self._config is not None:
            w = apply_defects(w, self._config, self._attribution).astype(self.w.dtype)
        return w

    def _master_grad(self, g_eff: np.ndarray) -> np.ndarray:
        masked = self._config is not None and self.grad_mode == "mask"
        if masked:
            g_eff = g_eff * ~defect_mask(self._config)
        if self.qspec is not None:
            g_eff = quantize_weights_grad(self.w, g_eff, self.qspec.w_bits).astype(self.w.dtype)
            if masked:  # the squash-scale coupling must not leak back in
                g_eff = g_eff * ~defect_mask(self._config)
        return g_eff

    def params(self):
        return [("w", self.w, self.gw, True), ("b", self.b, self.gb, False)]

    def state_arrays(self):
        return {"w": self.w, "b": self.b}


class Dense(WeightLayer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 qspec: Optional[QuantSpec] = None, dtype=np.float32, grad_mode: str = "ste"):
        scale = np.sqrt(2.0 / in_features)
        w = (rng.standard_normal((out_features, in_features)) * scale).astype(dtype)
        b = np.zeros(out_features, dtype=dtype)
        super().__init__(w, b, qspec, grad_mode)
        self.in_features = in_features
        self.out_features = out_features

    def forward(self, x, train=False):
        self._x = x
        self._w_eff = self.effective_weights()
        return x @ self._w_eff.T + self.b

    def backward(self, gy):
        g_eff = gy.T @ self._x
        self.gw += self._master_grad(g_eff)
        self.gb += gy.sum(axis=0)
        return gy @ self._w_eff

    def describe(self):
        return {"type": "Dense", "in_features": self.in_features,
                "out_features": self.out_features, "grad_mode": self.grad_mode,
                "crossbar": self.crossbar, "quantized": self.qspec is not None}


class Conv2d(WeightLayer):
    """3x3-style same convolution (stride 1); pooling handles downsampling."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator, padding: int = 1,
                 qspec: Optional[QuantSpec] = None, dtype=np.float32,
                 grad_mode: str = "ste"):
        fan_in = in_channels * kernel * kernel
        scale = np.sqrt(2.0 / fan_in)
        w = (rng.standard_normal((out_channels, in_channels, kernel, kernel)) * scale).astype(dtype)
        b = np.zeros(out_channels, dtype=dtype)
        super().__init__(w, b, qspec, grad_mode)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.padding = padding

    def forward(self, x, train=False):
        k, p = self.kernel, self.padding
        xb, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        # (B, C, OH, OW, k, k) -> (B*OH*OW, C*k*k)
        oh, ow = windows.shape[2], windows.shape[3]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(xb * oh * ow, c * k * k)
        self._cols = cols
        self._xshape = x.shape
        self._out_hw = (oh, ow)
        self._w_eff = self.effective_weights()
        w2 = self._w_eff.reshape(self.out_channels, -1)
        y = cols @ w2.T + self.b
        return y.reshape(xb, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, gy):
        k, p = self.kernel, self.padding
        xb, c, h, w = self._xshape
        oh, ow = self._out_hw
        g2 = gy.transpose(0, 2, 3, 1).reshape(xb * oh * ow, self.out_channels)
        gw2 = g2.T @ self._cols
        self.gw += self._master_grad(gw2.reshape(self.w.shape))
        self.gb += g2.sum(axis=0)
        w2 = self._w_eff.reshape(self.out_channels, -1)
        gcols = (g2 @ w2).reshape(xb, oh, ow, c, k, k)
        gxp = np.zeros((xb, c, h + 2 * p, w + 2 * p), dtype=gy.dtype)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + oh, j:j + ow] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gxp[:, :, p:p + h, p:p + w] if p else gxp

    def describe(self):
        return {"type": "Conv2d", "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel": self.kernel,
                "padding": self.padding, "grad_mode": self.grad_mode,
                "crossbar": self.crossbar, "quantized": self.qspec is not None}


class BatchNorm(Layer):
    """Full-precision batch norm; never quantized or defect-injected."""

    trainable = True

    def __init__(self, num_features: int, dtype=np.float32, momentum: float = 0.1,
                 eps: float = 1e-5):
        self.gamma = np.ones(num_features, dtype=dtype)
        self.beta = np.zeros(num_features, dtype=dtype)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.num_features = num_features

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _shape(self, x):
        return (1, -1) if x.ndim == 2 else (1, -1, 1, 1)

    def forward(self, x, train=False):
        axes, shape = self._axes(x), self._shape(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        self._std = np.sqrt(var + self.eps).reshape(shape)
        self._xhat = (x - mean.reshape(shape)) / self._std
        self._m = x.size // x.shape[1] if x.ndim == 4 else x.shape[0]
        self._train = train
        return self.gamma.reshape(shape) * self._xhat + self.beta.reshape(shape)

    def backward(self, gy):
        axes, shape = self._axes(gy), self._shape(gy)
        self.ggamma += (gy * self._xhat).sum(axis=axes)
        self.gbeta += gy.sum(axis=axes)
        g = gy * self.gamma.reshape(shape)
        if not self._train:
            return g / self._std
        m = self._m
        gsum = g.sum(axis=axes).reshape(shape)
        gdot = (g * self._xhat).sum(axis=axes).reshape(shape)
        return (g - gsum / m - self._xhat * gdot / m) / self._std

    def params(self):
        return [("gamma", self.gamma, self.ggamma, False),
                ("beta", self.beta, self.gbeta, False)]

    def describe(self):
        return {"type": "BatchNorm", "num_features": self.num_features}

    def state_arrays(self):
        return {"gamma": self.gamma, "beta": self.beta,
                "running_mean": self.running_mean, "running_var": self.running_var}


class PactQuant(Layer):
    """Learnable-clip activation: clip to [0, alpha], quantize to 2**bits levels.

    With bits=None this degrades to a plain clipped ReLU (used by
    full-precision reference nets).
    """

    trainable = True

    def __init__(self, bits: Optional[int] = 4, alpha_init: float = 10.0,
                 alpha_decay: float = 5e-4, dtype=np.float32):
        self.alpha = np.array([alpha_init], dtype=dtype)
        self.galpha = np.zeros(1, dtype=dtype)
        self.bits = bits
        self.alpha_decay = alpha_decay

    def forward(self, x, train=False):
        self._x = x
        a = float(self.alpha[0])
        if self.bits is None:
            return np.clip(x, 0.0, a)
        return quantize_activation(x, a, self.bits)

    def backward(self, gy):
        a = float(self.alpha[0])
        gx, galpha = quantize_activation_grads(self._x, a, self.bits or 4, gy)
        self.galpha += galpha + self.alpha_decay * a
        return gx

    def params(self):
        return [("alpha", self.alpha, self.galpha, False)]

    def describe(self):
        return {"type": "PactQuant", "bits": self.bits, "alpha_decay": self.alpha_decay}

    def state_arrays(self):
        return {"alpha": self.alpha}


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, gy):
        return gy * self._mask

    def describe(self):
        return {"type": "ReLU"}


class MaxPool2(Layer):
    """2x2, stride-2 max pooling; ties route gradient to the first maximum.

    Single-position routing matters here: the clipped activation quantizer
    upstream produces exact ties at alpha, and spreading the gradient over
    every tied position would overcount d/dalpha.
    """

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"spatial dims must be even, got {x.shape}")
        blocks = (x.reshape(b, c, h // 2, 2, w // 2, 2)
                   .transpose(0, 1, 2, 4, 3, 5)
                   .reshape(b, c, h // 2, w // 2, 4))
        self._argmax = blocks.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(blocks, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, gy):
        b, c, h, w = self._shape
        g = np.zeros((b, c, h // 2, w // 2, 4), dtype=gy.dtype)
        np.put_along_axis(g, self._argmax[..., None], gy[..., None], axis=-1)
        return (g.reshape(b, c, h // 2, w // 2, 2, 2)
                 .transpose(0, 1, 2, 4, 3, 5)
                 .reshape(b, c, h, w))

    def describe(self):
        return {"type": "MaxPool2"}


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape)

    def describe(self):
        return {"type": "Flatten"}


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss and gradient w.r.t. logits for integer class labels."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    eps = np.finfo(probs.dtype).tiny
    loss = float(-np.log(probs[np.arange(n), labels] + eps).mean())
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
