"""Seeded defect-configuration sampling over weight tensors.

A DefectConfig is a sparse map from tensor positions to resolved pair defect
classes.  Configs are a pure function of (seed, model, shape) and can always
be regenerated bit-identically from that provenance, so large configs
serialize as provenance only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cells import (
    CLAMP_BOUNDS,
    KC_CLAMP_NEG,
    KC_CLAMP_POS,
    KC_STUCK_M1,
    KC_STUCK_P1,
    KC_STUCK_ZERO,
    FormingStrategy,
    _check_probs,
    form_pairs,
)

ENTRY_DUMP_LIMIT = 10 ** 6

_KIND_TAGS = {
    KC_STUCK_ZERO: "stuck_zero",
    KC_STUCK_P1: "stuck_plus_one",
    KC_STUCK_M1: "stuck_minus_one",
    KC_CLAMP_POS: "clamped",
    KC_CLAMP_NEG: "clamped",
}


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian over a probability; sampling resamples until the draw is in [0, 1]."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError(f"mu must be in [0, 1], got {self.mu}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def to_json(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}


def sample_probability(spec: GaussianSpec, rng: np.random.Generator) -> float:
    """One truncated-Gaussian probability draw (resample-until-valid, not clipping)."""
    if spec.sigma == 0.0:
        return spec.mu
    while True:
        x = rng.normal(spec.mu, spec.sigma)
        if 0.0 <= x <= 1.0:
            return float(x)


def sample_probabilities(spec: GaussianSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """Vector of n truncated-Gaussian draws (invalid entries redrawn in bulk)."""
    if spec.sigma == 0.0:
        return np.full(n, spec.mu)
    out = rng.normal(spec.mu, spec.sigma, size=n)
    bad = (out < 0.0) | (out > 1.0)
    while np.any(bad):
        out[bad] = rng.normal(spec.mu, spec.sigma, size=int(bad.sum()))
        bad = (out < 0.0) | (out > 1.0)
    return out


@dataclass(frozen=True)
class DefectModel:
    """What kind of defects to inject and at which rates.

    ``dev_ff``/``dev_of`` are the logical-value deviations attached to
    failed-open and failed-short terminals (0 = ideal stuck values).
    """

    mode: str  # none | plus_minus | zero | combined | distribution
    p1: float = 0.0
    p0: float = 0.0
    p_ff: float = 0.0
    p_of: float = 0.0
    strategy: FormingStrategy = FormingStrategy.B
    gauss_ff: Optional[GaussianSpec] = None
    gauss_of: Optional[GaussianSpec] = None
    dev_ff: float = 0.0
    dev_of: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "plus_minus", "zero", "combined", "distribution"):
            raise ValueError(f"unknown defect mode {self.mode!r}")
        for name in ("p1", "p0"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        _check_probs(self.p_ff, self.p_of)
        if self.dev_ff < 0.0 or self.dev_of < 0.0:
            raise ValueError("deviations must be >= 0")
        if self.mode == "distribution" and (self.gauss_ff is None or self.gauss_of is None):
            raise ValueError("distribution mode needs gauss_ff and gauss_of")

    @classmethod
    def none(cls) -> "DefectModel":
        return cls(mode="none")

    @classmethod
    def plus_minus_only(cls, p1: float, dev_of: float = 0.0) -> "DefectModel":
        return cls(mode="plus_minus", p1=p1, dev_of=dev_of)

    @classmethod
    def zero_only(cls, p0: float, dev_ff: float = 0.0) -> "DefectModel":
        return cls(mode="zero", p0=p0, dev_ff=dev_ff)

    @classmethod
    def combined(
        cls,
        p_ff: float,
        p_of: float,
        strategy: FormingStrategy = FormingStrategy.B,
        dev_ff: float = 0.0,
        dev_of: float = 0.0,
    ) -> "DefectModel":
        return cls(mode="combined", p_ff=p_ff, p_of=p_of, strategy=strategy,
                   dev_ff=dev_ff, dev_of=dev_of)

    @classmethod
    def distribution_aware(
        cls,
        gauss_ff: GaussianSpec,
        gauss_of: GaussianSpec,
        strategy: FormingStrategy = FormingStrategy.B,
        dev_ff: float = 0.0,
        dev_of: float = 0.0,
    ) -> "DefectModel":
        return cls(mode="distribution", strategy=strategy, gauss_ff=gauss_ff,
                   gauss_of=gauss_of, dev_ff=dev_ff, dev_of=dev_of)

    def with_deviations(self, dev_ff: float, dev_of: float) -> "DefectModel":
        from dataclasses import replace

        return replace(self, dev_ff=dev_ff, dev_of=dev_of)

    def to_json(self) -> dict:
        obj = {"mode": self.mode, "dev_ff": self.dev_ff, "dev_of": self.dev_of}
        if self.mode == "plus_minus":
            obj["p1"] = self.p1
        elif self.mode == "zero":
            obj["p0"] = self.p0
        elif self.mode == "combined":
            obj.update(p_ff=self.p_ff, p_of=self.p_of, strategy=self.strategy.value)
        elif self.mode == "distribution":
            obj.update(gauss_ff=self.gauss_ff.to_json(), gauss_of=self.gauss_of.to_json(),
                       strategy=self.strategy.value)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "DefectModel":
        mode = obj["mode"]
        dev_ff = obj.get("dev_ff", 0.0)
        dev_of = obj.get("dev_of", 0.0)
        if mode == "none":
            return cls.none()
        if mode == "plus_minus":
            return cls.plus_minus_only(obj["p1"], dev_of=dev_of)
        if mode == "zero":
            return cls.zero_only(obj["p0"], dev_ff=dev_ff)
        strategy = FormingStrategy(obj.get("strategy", "B"))
        if mode == "combined":
            return cls.combined(obj["p_ff"], obj["p_of"], strategy, dev_ff, dev_of)
        return cls.distribution_aware(
            GaussianSpec(**obj["gauss_ff"]), GaussianSpec(**obj["gauss_of"]),
            strategy, dev_ff, dev_of,
        )


@dataclass
class DefectConfig:
    """Sparse per-position defect map plus the provenance that generated it."""

    shape: tuple[int, ...]
    idx: np.ndarray          # flat positions, int64, sorted
    kind: np.ndarray         # codes from cells.KC_*, uint8
    dev: np.ndarray          # signed table-attribution deviation per entry
    dev_phys: np.ndarray     # signed physical offset per entry
    seed: Optional[int]
    model: DefectModel
    realized_p_ff: float = 0.0
    realized_p_of: float = 0.0

    @property
    def n_defects(self) -> int:
        return int(self.idx.size)

    def to_json(self, include_entries: Optional[bool] = None) -> dict:
        """Provenance-first serialization; entry dumps are opt-in above 1e6 entries."""
        if include_entries is None:
            include_entries = self.n_defects <= ENTRY_DUMP_LIMIT
        obj = {
            "seed": self.seed,
            "model": self.model.to_json(),
            "shape": list(self.shape),
            "realized_p_ff": self.realized_p_ff,
            "realized_p_of": self.realized_p_of,
        }
        if include_entries:
            entries = []
            for i in range(self.n_defects):
                kc = int(self.kind[i])
                e = {
                    "pos": int(self.idx[i]),
                    "kind": _KIND_TAGS[kc],
                    "dev": float(self.dev[i]),
                    "dev_physical": float(self.dev_phys[i]),
                }
                if kc in CLAMP_BOUNDS:
                    e["lo"], e["hi"] = CLAMP_BOUNDS[kc]
                entries.append(e)
            obj["entries"] = entries
        return obj


def _empty_config(shape, model, seed) -> DefectConfig:
    return DefectConfig(
        shape=tuple(shape), idx=np.empty(0, np.int64), kind=np.empty(0, np.uint8),
        dev=np.empty(0, np.float64), dev_phys=np.empty(0, np.float64),
        seed=seed, model=model,
    )


def _classify_codes(plus: np.ndarray, minus: np.ndarray, dev_ff: float, dev_of: float):
    """Vectorized pair classification; returns (mask, kind, dev, dev_phys)."""
    p = np.where(plus == 3, np.uint8(1), plus)   # not-formed conducts like failed-open
    m = np.where(minus == 3, np.uint8(1), minus)
    kind = np.zeros(p.shape, dtype=np.uint8)
    dev = np.zeros(p.shape, dtype=np.float64)
    dev_phys = np.zeros(p.shape, dtype=np.float64)

    sel = (p == 2) & (m == 1)
    kind[sel] = KC_STUCK_P1
    dev[sel] = dev_of
    dev_phys[sel] = dev_of + dev_ff
    sel = (p == 1) & (m == 2)
    kind[sel] = KC_STUCK_M1
    dev[sel] = -dev_of
    dev_phys[sel] = -(dev_of + dev_ff)
    sel = ((p == 1) & (m == 1)) | ((p == 2) & (m == 2))
    kind[sel] = KC_STUCK_ZERO
    sel = (p == 1) & (m == 0)
    kind[sel] = KC_CLAMP_NEG
    dev[sel] = -dev_ff
    dev_phys[sel] = -dev_ff
    sel = (p == 2) & (m == 0)
    kind[sel] = KC_CLAMP_POS
    dev[sel] = dev_of
    dev_phys[sel] = 1.0 + dev_of
    sel = (p == 0) & (m == 1)
    kind[sel] = KC_CLAMP_POS
    dev[sel] = dev_ff
    dev_phys[sel] = dev_ff
    sel = (p == 0) & (m == 2)
    kind[sel] = KC_CLAMP_NEG
    dev[sel] = -dev_of
    dev_phys[sel] = -(1.0 + dev_of)

    mask = kind != 0
    return mask, kind, dev, dev_phys


def sample_config(shape, model: DefectModel, seed: int) -> DefectConfig:
    """Draw one defect configuration over a tensor of the given shape.

    The generator stream is created from the seed alone, so identical
    (shape, model, seed) always reproduce the same configuration.
    """
    shape = tuple(int(s) for s in shape)
    n = int(np.prod(shape)) if shape else 0
    rng = np.random.Generator(np.random.PCG64(seed))
    if model.mode == "none" or n == 0:
        return _empty_config(shape, model, seed)

    if model.mode == "plus_minus":
        u = rng.random(n)
        plus_sel = u < model.p1 / 2.0
        minus_sel = (u >= model.p1 / 2.0) & (u < model.p1)
        idx = np.flatnonzero(plus_sel | minus_sel).astype(np.int64)
        kind = np.where(plus_sel, np.uint8(KC_STUCK_P1), np.uint8(KC_STUCK_M1))[idx]
        sign = np.where(kind == KC_STUCK_P1, 1.0, -1.0)
        dev = sign * model.dev_of
        return DefectConfig(shape, idx, kind, dev, dev.copy(), seed, model)

    if model.mode == "zero":
        u = rng.random(n)
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)  # drawn regardless of dev_ff
        idx = np.flatnonzero(u < model.p0).astype(np.int64)
        kind = np.full(idx.shape, KC_STUCK_ZERO, dtype=np.uint8)
        dev = signs[idx] * model.dev_ff
        return DefectConfig(shape, idx, kind, dev, dev.copy(), seed, model)

    if model.mode == "combined":
        p_ff, p_of = model.p_ff, model.p_of
    else:  # distribution: one realized probability pair per configuration
        p_ff = sample_probability(model.gauss_ff, rng)
        p_of = sample_probability(model.gauss_of, rng)

    plus, minus = form_pairs(rng, n, p_ff, p_of, model.strategy)
    mask, kind, dev, dev_phys = _classify_codes(plus, minus, model.dev_ff, model.dev_of)
    idx = np.flatnonzero(mask).astype(np.int64)
    return DefectConfig(shape, idx, kind[idx], dev[idx], dev_phys[idx], seed, model,
                        realized_p_ff=p_ff, realized_p_of=p_of)


def config_from_pairs(
    shape,
    plus: np.ndarray,
    minus: np.ndarray,
    dev_ff: float = 0.0,
    dev_of: float = 0.0,
) -> DefectConfig:
    """Build a config from explicit pair-outcome codes (for cross-checks)."""
    shape = tuple(int(s) for s in shape)
    plus = np.asarray(plus).reshape(-1)
    minus = np.asarray(minus).reshape(-1)
    if plus.size != int(np.prod(shape)):
        raise ValueError("pair-code length does not match shape")
    mask, kind, dev, dev_phys = _classify_codes(plus, minus, dev_ff, dev_of)
    idx = np.flatnonzero(mask).astype(np.int64)
    model = DefectModel.combined(0.0, 0.0, dev_ff=dev_ff, dev_of=dev_of)
    return DefectConfig(shape, idx, kind[idx], dev[idx], dev_phys[idx], None, model)


def apply(weights_q: np.ndarray, config: DefectConfig, attribution: str = "table") -> np.ndarray:
    """Substitute defective positions of a quantized weight tensor.

    Stuck kinds overwrite with their fixed value; clamp kinds keep targets
    inside the reachable range, adding the failed terminal's deviation per
    the chosen attribution (see cells.resolve).
    """
    if attribution not in ("table", "physical"):
        raise ValueError(f"unknown attribution {attribution!r}")
    w = np.asarray(weights_q)
    if w.shape != config.shape:
        raise ValueError(f"shape mismatch: weights {w.shape} vs config {config.shape}")
    out = w.astype(np.float64).copy()
    if config.n_defects == 0:
        return out
    flat = out.reshape(-1)
    idx, kind = config.idx, config.kind
    dev = config.dev if attribution == "table" else config.dev_phys
    t = flat[idx]
    new = t.copy()

    sel = kind == KC_STUCK_ZERO
    new[sel] = 0.0 + dev[sel]
    sel = kind == KC_STUCK_P1
    new[sel] = 1.0 + dev[sel]
    sel = kind == KC_STUCK_M1
    new[sel] = -1.0 + dev[sel]

    for kc, (lo, hi) in CLAMP_BOUNDS.items():
        sel = kind == kc
        if not np.any(sel):
            continue
        if attribution == "table":
            clipped = np.clip(t[sel], lo, hi)
            bound = clipped != t[sel]
            new[sel] = np.where(bound, clipped + dev[sel], t[sel])
        else:
            # reachable interval = ideal range shifted by the table deviation
            shift = config.dev[sel]
            new[sel] = np.clip(t[sel], lo + shift, hi + shift)

    flat[idx] = new
    return out


def defect_mask(config: DefectConfig) -> np.ndarray:
    """Boolean tensor, True at defective positions."""
    mask = np.zeros(int(np.prod(config.shape)), dtype=bool)
    mask[config.idx] = True
    return mask.reshape(config.shape)


def config_to_json_str(config: DefectConfig, include_entries: Optional[bool] = None) -> str:
    return json.dumps(config.to_json(include_entries), sort_keys=True)
