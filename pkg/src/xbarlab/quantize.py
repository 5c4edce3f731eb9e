"""Low-bit weight and activation quantizers with straight-through gradients.

Weights follow the tanh-normalized scheme: w is squashed to [-1, 1] via
tanh(w)/max|tanh(w)| and rounded onto a uniform 2**bits grid.  Activations
follow the learnable-clip scheme: clip to [0, alpha], quantize to 2**bits
levels, rescale.  Rounding is treated as identity in the backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantSpec:
    """Bit widths and activation-clip settings for one weight layer."""

    w_bits: int = 4
    a_bits: int = 4
    pact_alpha_init: float = 10.0
    alpha_decay: float = 5e-4
    allow_low_bits: bool = False  # sub-4-bit needs techniques outside this lab

    def __post_init__(self):
        floor = 2 if self.allow_low_bits else 4
        for name, bits in (("w_bits", self.w_bits), ("a_bits", self.a_bits)):
            if int(bits) != bits or bits < floor:
                raise ValueError(
                    f"{name} must be an integer >= {floor} "
                    f"(set allow_low_bits for >= 2), got {bits}"
                )
        if self.pact_alpha_init <= 0.0:
            raise ValueError("pact_alpha_init must be > 0")
        if self.alpha_decay < 0.0:
            raise ValueError("alpha_decay must be >= 0")


def _check_bits(bits: int) -> int:
    if int(bits) != bits or bits < 2:
        raise ValueError(f"bits must be an integer >= 2, got {bits}")
    return int(bits)


def weight_grid(bits: int) -> np.ndarray:
    """The 2**bits representable weight values in [-1, 1]."""
    k = 2 ** _check_bits(bits) - 1
    return 2.0 * np.arange(k + 1) / k - 1.0


def quantize_weights(w: np.ndarray, bits: int = 4) -> np.ndarray:
    """Project weights onto the uniform 2**bits grid over [-1, 1].

    The scale max|tanh(w)| is taken over the whole tensor (one crossbar
    layer).  An all-zero tensor maps to zeros.
    """
    _check_bits(bits)
    w = np.asarray(w)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    th = np.tanh(w)
    m = np.max(np.abs(th))
    if m == 0.0:
        return np.zeros_like(w)
    k = 2 ** bits - 1
    t = th / (2.0 * m) + 0.5
    return (2.0 * np.rint(t * k) / k - 1.0).astype(w.dtype, copy=False)


def quantize_weights_grad(w: np.ndarray, upstream: np.ndarray, bits: int = 4) -> np.ndarray:
    """Backward pass of :func:`quantize_weights` with rounding as identity.

    With rounding removed the transform is exactly tanh(w)/max|tanh(w)|, so
    the gradient carries the elementwise sech^2 factor plus the coupling of
    every output to the max element.
    """
    _check_bits(bits)
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    th = np.tanh(w)
    m = np.max(np.abs(th))
    if m == 0.0:
        return np.zeros_like(w)
    sech2 = 1.0 - th * th
    out = g * sech2 / m
    k = np.argmax(np.abs(th))  # first max, deterministic
    coupling = -np.sum(g * th) / (m * m)
    out_flat = out.reshape(-1)
    out_flat[k] += coupling * np.sign(th.reshape(-1)[k]) * sech2.reshape(-1)[k]
    return out


def quantize_activation(x: np.ndarray, alpha: float, bits: int = 4) -> np.ndarray:
    """Clip to [0, alpha] and quantize uniformly to 2**bits levels."""
    _check_bits(bits)
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise ValueError(f"alpha must be > 0, got {alpha}")
    x = np.asarray(x)
    k = 2 ** bits - 1
    y = np.clip(x, 0.0, alpha)
    return (np.rint(y * (k / alpha)) * (alpha / k)).astype(x.dtype, copy=False)


def quantize_activation_grads(
    x: np.ndarray, alpha: float, bits: int, upstream: np.ndarray
) -> tuple[np.ndarray, float]:
    """(dL/dx, dL/dalpha) for :func:`quantize_activation`.

    dL/dx passes through on 0 < x < alpha; dL/dalpha collects the upstream
    gradient wherever the clip ceiling was active (x >= alpha).
    """
    _check_bits(bits)
    if alpha <= 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    x = np.asarray(x)
    g = np.asarray(upstream)
    inside = (x > 0.0) & (x < alpha)
    gx = g * inside
    galpha = float(np.sum(g * (x >= alpha)))
    return gx, galpha
