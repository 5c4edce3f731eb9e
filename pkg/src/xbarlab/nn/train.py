"""Training and evaluation loops with per-step defect regeneration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..defects import DefectConfig, DefectModel, sample_config
from ..seeding import derive_seed
from .network import Network


class TrainingDiverged(RuntimeError):
    pass


def lr_at(schedule: Sequence[tuple[int, float]], epoch: int) -> float:
    """Piecewise-constant rate: last boundary at or below the epoch wins."""
    if not schedule:
        raise ValueError("empty lr schedule")
    lr = schedule[0][1]
    for boundary, value in schedule:
        if epoch >= boundary:
            lr = value
    return lr


@dataclass(frozen=True)
class TrainSpec:
    """Declarative description of one training run."""

    epochs: int = 24
    batch_size: int = 125
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.1), (12, 0.01), (19, 0.002))
    momentum: float = 0.9
    weight_decay: float = 1e-4
    defect_model: DefectModel = field(default_factory=DefectModel.none)
    attribution: str = "table"
    grad_mode: str = "ste"
    regen: str = "per_batch"
    seed: int = 0
    # chip-specific recovery: train against one known configuration instead
    # of regenerating defects every step
    fixed_defect_seed: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        boundaries = [b for b, _ in self.lr_schedule]
        if boundaries != sorted(boundaries):
            raise ValueError("lr schedule boundaries must be increasing")
        if any(lr <= 0 for _, lr in self.lr_schedule):
            raise ValueError("learning rates must be > 0")
        if self.regen not in ("per_batch", "per_sample"):
            raise ValueError(f"unknown regen granularity {self.regen!r}")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "lr_schedule": [list(e) for e in self.lr_schedule],
            "momentum": self.momentum, "weight_decay": self.weight_decay,
            "defect_model": self.defect_model.to_json(),
            "attribution": self.attribution, "grad_mode": self.grad_mode,
            "regen": self.regen, "seed": self.seed,
            "fixed_defect_seed": self.fixed_defect_seed,
        }


class SGD:
    """Momentum SGD; weight decay only on parameters that opt in."""

    def __init__(self, net: Network, momentum: float, weight_decay: float):
        self.net = net
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(value) for name, value, _, _ in net.params()}

    def step(self, lr: float) -> None:
        for name, value, grad, decay in self.net.params():
            g = grad + self.weight_decay * value if decay else grad
            v = self.velocity[name]
            v *= self.momentum
            v += g
            value -= (lr * v).astype(value.dtype, copy=False)


def _layer_configs(net: Network, model: DefectModel, base_seed: int, step: int
                   ) -> list[DefectConfig]:
    return [
        sample_config(shape, model, derive_seed(base_seed, "defect", li, step))
        for li, shape in enumerate(net.weight_shapes())
    ]


def train(
    net: Network,
    train_data: tuple[np.ndarray, np.ndarray],
    spec: TrainSpec,
    test_data: Optional[tuple[np.ndarray, np.ndarray]] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> list[dict]:
    """SGD loop; a fresh defect configuration is drawn at every regeneration
    boundary so the model never sees the same failure pattern twice.

    Returns per-epoch history dicts.  Deterministic given (spec, data).
    """
    from .layers import softmax_cross_entropy

    x, y = train_data
    n = len(x)
    rng = np.random.Generator(np.random.PCG64(derive_seed(spec.seed, "shuffle")))
    opt = SGD(net, spec.momentum, spec.weight_decay)
    inject = spec.defect_model.mode != "none"
    fixed_configs = None
    if inject and spec.fixed_defect_seed is not None:
        fixed_configs = [
            sample_config(shape, spec.defect_model,
                          derive_seed(spec.fixed_defect_seed, "fixed", li))
            for li, shape in enumerate(net.weight_shapes())
        ]
    for layer in net.crossbar_layers():
        layer.grad_mode = spec.grad_mode
    history = []
    step = 0
    for epoch in range(spec.epochs):
        lr = lr_at(spec.lr_schedule, epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_hits = 0
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            if inject and fixed_configs is None and spec.regen == "per_sample":
                loss, hits = _per_sample_step(net, x[idx], y[idx], spec, opt, lr, step)
            else:
                if not inject:
                    configs = None
                elif fixed_configs is not None:
                    configs = fixed_configs
                else:
                    configs = _layer_configs(net, spec.defect_model, spec.seed, step)
                net.zero_grads()
                logits = net.forward(x[idx], configs=configs, train=True,
                                     attribution=spec.attribution)
                loss, grad = softmax_cross_entropy(logits, y[idx])
                hits = int(np.sum(np.argmax(logits, axis=1) == y[idx]))
                net.backward(grad)
                opt.step(lr)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch} step {step} (lr={lr})")
            epoch_loss += loss * len(idx)
            epoch_hits += hits
            step += 1
        net.set_defects(None)
        record = {
            "epoch": epoch, "lr": lr,
            "train_loss": epoch_loss / n,
            "train_error": 1.0 - epoch_hits / n,
        }
        if test_data is not None:
            record["test_error"] = net.error_rate(*test_data)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return history


def _per_sample_step(net, xb, yb, spec, opt, lr, step):
    """Per-image defect regeneration: one config per sample, gradients summed."""
    from .layers import softmax_cross_entropy

    net.zero_grads()
    total_loss = 0.0
    hits = 0
    for j in range(len(xb)):
        configs = _layer_configs(net, spec.defect_model, spec.seed, (step, j))
        logits = net.forward(xb[j:j + 1], configs=configs, train=True,
                             attribution=spec.attribution)
        loss, grad = softmax_cross_entropy(logits, yb[j:j + 1])
        hits += int(np.argmax(logits) == yb[j])
        net.backward(grad / len(xb))
        total_loss += loss
    opt.step(lr)
    return total_loss / len(xb), hits


@dataclass
class EvalResult:
    """Per-configuration test errors plus summary statistics."""

    errors: list[float]
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float
    provenance: dict

    @classmethod
    def from_errors(cls, errors: Sequence[float], provenance: dict) -> "EvalResult":
        arr = np.asarray(errors, dtype=np.float64)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        return cls(errors=[float(e) for e in arr], mean=float(arr.mean()),
                   std=float(arr.std()), min=float(arr.min()), q1=float(q1),
                   median=float(med), q3=float(q3), max=float(arr.max()),
                   provenance=provenance)

    def to_json(self) -> dict:
        return {
            "errors": self.errors, "mean": self.mean, "std": self.std,
            "min": self.min, "q1": self.q1, "median": self.median,
            "q3": self.q3, "max": self.max, "provenance": self.provenance,
        }


def evaluate(
    net: Network,
    test_data: tuple[np.ndarray, np.ndarray],
    model,
    n_configs: int = 50,
    base_seed: int = 0,
    attribution: str = "table",
    batch_size: int = 1000,
) -> EvalResult:
    """Test error under defect configurations.

    ``model`` is either a DefectModel (n_configs configurations are derived
    from base_seed) or an explicit list of per-trial config lists, one entry
    per crossbar layer, for paired comparisons across nets.
    """
    x, y = test_data
    if isinstance(model, (list, tuple)):
        errors = []
        for configs in model:
            net.set_defects(list(configs), attribution)
            errors.append(net.error_rate(x, y, batch_size))
        net.set_defects(None)
        return EvalResult.from_errors(
            errors, {"defect_model": "explicit", "n_configs": len(errors),
                     "attribution": attribution})
    provenance = {"defect_model": model.to_json(), "n_configs": n_configs,
                  "base_seed": base_seed, "attribution": attribution}
    if model.mode == "none":
        err = net.error_rate(x, y, batch_size)
        return EvalResult.from_errors([err] * max(n_configs, 1), provenance)
    errors = []
    for i in range(n_configs):
        configs = [
            sample_config(shape, model, derive_seed(base_seed, "eval", i, li))
            for li, shape in enumerate(net.weight_shapes())
        ]
        net.set_defects(configs, attribution)
        errors.append(net.error_rate(x, y, batch_size))
    net.set_defects(None)
    return EvalResult.from_errors(errors, provenance)
