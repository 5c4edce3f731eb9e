"""Differential 2T2R pair calculus.

A weight w = w_plus + w_minus is stored in two 1T1R cells, the plus terminal
covering [0, 1] and the minus terminal [-1, 0].  Forming can leave either
terminal failed-open (FormFail) or failed-short (OverForm); this module
resolves what logical value the pair can still store, the probability of each
outcome under the two forming strategies, and the ideal write-and-verify
conductance programming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .device import (
    DeviceParams,
    cell_conductances,
    deviation_ff,
    deviation_of_exact,
    quant_step,
)


class FormOutcome(Enum):
    WORKING = "working"
    FORM_FAIL = "form_fail"
    OVER_FORM = "over_form"
    NOT_FORMED = "not_formed"  # deliberately skipped partner; conducts like FORM_FAIL


class FormingStrategy(Enum):
    A = "A"  # form both terminals unconditionally
    B = "B"  # form plus first; skip minus if plus failed open


@dataclass(frozen=True)
class PairState:
    plus: FormOutcome
    minus: FormOutcome

    def to_json(self) -> dict:
        return {"plus": self.plus.value, "minus": self.minus.value}

    @classmethod
    def from_json(cls, obj: dict) -> "PairState":
        return cls(FormOutcome(obj["plus"]), FormOutcome(obj["minus"]))


class DefectClass(Enum):
    NONE = "none"
    STUCK_ZERO = "stuck_zero"
    STUCK_PLUS_ONE = "stuck_plus_one"
    STUCK_MINUS_ONE = "stuck_minus_one"
    CLAMPED = "clamped"


@dataclass(frozen=True)
class DefectKind:
    """Resolved logical behavior of one pair.

    ``dev`` is the signed deviation applied on top of the nominal stuck value
    (outcome-table attribution); ``dev_physical`` is the total fixed offset of
    the failed terminals (conductance-level attribution).  ``lo``/``hi`` are
    set for CLAMPED kinds only.
    """

    cls: DefectClass
    dev: float = 0.0
    dev_physical: float = 0.0
    lo: Optional[float] = None
    hi: Optional[float] = None

    def to_json(self) -> dict:
        obj = {"kind": self.cls.value, "dev": self.dev, "dev_physical": self.dev_physical}
        if self.cls is DefectClass.CLAMPED:
            obj["lo"] = self.lo
            obj["hi"] = self.hi
        return obj


NO_DEFECT = DefectKind(DefectClass.NONE)

# Internal integer codes for vectorized sampling/application.
KC_STUCK_ZERO = 1
KC_STUCK_P1 = 2
KC_STUCK_M1 = 3
KC_CLAMP_POS = 4  # reachable ideal range [0, +1]
KC_CLAMP_NEG = 5  # reachable ideal range [-1, 0]

CLAMP_BOUNDS = {KC_CLAMP_POS: (0.0, 1.0), KC_CLAMP_NEG: (-1.0, 0.0)}


def _check_probs(p_ff: float, p_of: float) -> None:
    if not (math.isfinite(p_ff) and math.isfinite(p_of)):
        raise ValueError("probabilities must be finite")
    if p_ff < 0.0 or p_of < 0.0 or p_ff + p_of > 1.0:
        raise ValueError(f"need p_ff, p_of >= 0 and p_ff + p_of <= 1, got {p_ff}, {p_of}")


def _draw_outcomes(rng: np.random.Generator, n: int, p_ff: float, p_of: float) -> np.ndarray:
    """Vector of outcome codes: 0 working, 1 form-fail, 2 overform."""
    u = rng.random(n)
    out = np.zeros(n, dtype=np.uint8)
    out[u < p_ff] = 1
    out[(u >= p_ff) & (u < p_ff + p_of)] = 2
    return out


def form_pairs(
    rng: np.random.Generator,
    n: int,
    p_ff: float,
    p_of: float,
    strategy: FormingStrategy = FormingStrategy.B,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample n pair outcomes; codes 0 working / 1 form-fail / 2 overform / 3 not-formed.

    Strategy A draws both terminals independently.  Strategy B draws the plus
    terminal first and skips forming the minus terminal whenever plus failed
    open.  Both terminals consume randomness unconditionally so the stream
    position is independent of the outcomes.
    """
    _check_probs(p_ff, p_of)
    plus = _draw_outcomes(rng, n, p_ff, p_of)
    minus = _draw_outcomes(rng, n, p_ff, p_of)
    if strategy is FormingStrategy.B:
        minus = np.where(plus == 1, np.uint8(3), minus)
    return plus, minus


_CODE_TO_OUTCOME = {
    0: FormOutcome.WORKING,
    1: FormOutcome.FORM_FAIL,
    2: FormOutcome.OVER_FORM,
    3: FormOutcome.NOT_FORMED,
}
_OUTCOME_TO_CODE = {v: k for k, v in _CODE_TO_OUTCOME.items()}


def form_pair(
    rng: np.random.Generator,
    p_ff: float,
    p_of: float,
    strategy: FormingStrategy = FormingStrategy.B,
) -> PairState:
    """Sample a single pair outcome (see :func:`form_pairs`)."""
    plus, minus = form_pairs(rng, 1, p_ff, p_of, strategy)
    return PairState(_CODE_TO_OUTCOME[int(plus[0])], _CODE_TO_OUTCOME[int(minus[0])])


def pair_state_array(plus: np.ndarray, minus: np.ndarray) -> np.ndarray:
    """Object array of PairState from outcome-code arrays (same shape)."""
    plus = np.asarray(plus)
    minus = np.asarray(minus)
    if plus.shape != minus.shape:
        raise ValueError("plus/minus shapes differ")
    out = np.empty(plus.shape, dtype=object)
    for pos in np.ndindex(plus.shape):
        out[pos] = PairState(_CODE_TO_OUTCOME[int(plus[pos])], _CODE_TO_OUTCOME[int(minus[pos])])
    return out


def _effective(outcome: FormOutcome) -> FormOutcome:
    # NOT_FORMED conducts like a forming-failed device.
    if outcome is FormOutcome.NOT_FORMED:
        return FormOutcome.FORM_FAIL
    return outcome


def classify_pair(pair: PairState, dev_ff: float, dev_of: float) -> DefectKind:
    """Target-independent defect class of a pair (clamping resolves at apply time).

    Terminal offsets: a failed-open plus terminal sits dev_ff below logical 0,
    a failed-open minus terminal the same amount above; an overformed plus
    terminal sits dev_of above +1, an overformed minus terminal dev_of
    below -1.
    """
    if dev_ff < 0.0 or dev_of < 0.0:
        raise ValueError("deviations must be >= 0")
    p, m = _effective(pair.plus), _effective(pair.minus)
    W, FF, OF = FormOutcome.WORKING, FormOutcome.FORM_FAIL, FormOutcome.OVER_FORM
    if p is W and m is W:
        return NO_DEFECT
    if p is OF and m is FF:
        return DefectKind(DefectClass.STUCK_PLUS_ONE, dev=dev_of, dev_physical=dev_of + dev_ff)
    if p is FF and m is OF:
        return DefectKind(DefectClass.STUCK_MINUS_ONE, dev=-dev_of, dev_physical=-(dev_of + dev_ff))
    if (p is FF and m is FF) or (p is OF and m is OF):
        # The two terminal offsets cancel in the differential read.
        return DefectKind(DefectClass.STUCK_ZERO, dev=0.0, dev_physical=0.0)
    if p is FF:  # (FF, -): minus still programmable over [-1, 0]
        return DefectKind(DefectClass.CLAMPED, dev=-dev_ff, dev_physical=-dev_ff, lo=-1.0, hi=0.0)
    if p is OF:  # (OF, -): plus pinned at 1 + dev_of, minus compensates
        return DefectKind(DefectClass.CLAMPED, dev=dev_of, dev_physical=1.0 + dev_of, lo=0.0, hi=1.0)
    if m is FF:  # (-, FF)
        return DefectKind(DefectClass.CLAMPED, dev=dev_ff, dev_physical=dev_ff, lo=0.0, hi=1.0)
    # (-, OF)
    return DefectKind(DefectClass.CLAMPED, dev=-dev_of, dev_physical=-(1.0 + dev_of), lo=-1.0, hi=0.0)


def resolve(
    pair: PairState,
    target_w: float,
    dev_ff: float,
    dev_of: float,
    attribution: str = "table",
) -> tuple[float, DefectKind]:
    """Logical value the pair stores when asked for target_w.

    ``table`` attribution applies the failed terminal's deviation only when
    the reachable-range clamp binds (the working terminal compensates the
    offset inside its range).  ``physical`` attribution keeps every failed
    terminal at its fixed conductance and lets write-and-verify move only the
    working terminal; this is exactly what a conductance-level readback gives.
    """
    if abs(target_w) > 1.0 + 1e-12:
        raise ValueError(f"|target_w| must be <= 1, got {target_w}")
    if attribution not in ("table", "physical"):
        raise ValueError(f"unknown attribution {attribution!r}")
    kind = classify_pair(pair, dev_ff, dev_of)

    if kind.cls is DefectClass.NONE:
        return float(target_w), kind
    if kind.cls is DefectClass.STUCK_PLUS_ONE:
        off = kind.dev if attribution == "table" else kind.dev_physical
        return 1.0 + off, kind
    if kind.cls is DefectClass.STUCK_MINUS_ONE:
        off = kind.dev if attribution == "table" else kind.dev_physical
        return -1.0 + off, kind
    if kind.cls is DefectClass.STUCK_ZERO:
        return 0.0, kind

    lo, hi = kind.lo, kind.hi
    if attribution == "table":
        ideal = min(max(target_w, lo), hi)
        if ideal != target_w:
            return ideal + kind.dev, DefectKind(DefectClass.STUCK_ZERO, kind.dev, kind.dev_physical)
        return float(target_w), kind
    # physical: the reachable interval is the ideal range shifted by the
    # failed terminal's deviation (write-verify moves the working terminal
    # only within its own range)
    stored = min(max(target_w, lo + kind.dev), hi + kind.dev)
    if stored != target_w:
        return stored, DefectKind(DefectClass.STUCK_ZERO, kind.dev, kind.dev_physical)
    return stored, kind


# ---------------------------------------------------------------------------
# Outcome-table probabilities


def row_probabilities(
    p_ff: float, p_of: float, strategy: FormingStrategy
) -> dict[tuple[FormOutcome, FormOutcome], float]:
    """Probability of each producible (plus, minus) outcome pair."""
    _check_probs(p_ff, p_of)
    W, FF, OF, NF = (FormOutcome.WORKING, FormOutcome.FORM_FAIL,
                     FormOutcome.OVER_FORM, FormOutcome.NOT_FORMED)
    pw = 1.0 - p_ff - p_of
    if strategy is FormingStrategy.A:
        marg = {W: pw, FF: p_ff, OF: p_of}
        return {(a, b): pa * pb for a, pa in marg.items() for b, pb in marg.items()}
    rows = {
        (FF, NF): p_ff,
        (W, W): pw * pw,
        (W, FF): pw * p_ff,
        (W, OF): pw * p_of,
        (OF, W): p_of * pw,
        (OF, FF): p_of * p_ff,
        (OF, OF): p_of * p_of,
    }
    return rows


@dataclass(frozen=True)
class DefectRates:
    """Stuck-at-zero and stuck-at-+/-1 rates for a forming strategy.

    p0_exact sums every outcome row that cannot store an arbitrary target
    (both clamp-limited and doubly-failed pairs); p0_approx is the headline
    approximation -- strategy A halves the clamp rows because a random-signed
    weight lands on the reachable side half the time, strategy B writes
    nothing to failed pairs and keeps the full mass.
    """

    p0_exact: float
    p0_approx: float
    p1: float


def defect_rates(p_ff: float, p_of: float, strategy: FormingStrategy) -> DefectRates:
    _check_probs(p_ff, p_of)
    p = p_ff + p_of
    if strategy is FormingStrategy.A:
        p1 = 2.0 * p_of * p_ff
        clamp = 2.0 * (1.0 - p) * p
        stuck0 = p_ff * p_ff + p_of * p_of
        return DefectRates(p0_exact=clamp + stuck0, p0_approx=0.5 * clamp + stuck0, p1=p1)
    p1 = p_of * p_ff
    clamp = (1.0 - p) * (p_ff + 2.0 * p_of)
    stuck0 = p_ff + p_of * p_of
    return DefectRates(p0_exact=clamp + stuck0, p0_approx=clamp + stuck0, p1=p1)


# ---------------------------------------------------------------------------
# Ideal write-and-verify programming


def terminal_conductance(frac: float, params: DeviceParams) -> float:
    """Conductance of a working terminal programmed to fraction frac of [0, 1]."""
    cc = cell_conductances(params)
    return cc.g_hrs_cell + frac * (cc.g_lrs_cell - cc.g_hrs_cell)


def pair_deviations(params: DeviceParams) -> tuple[float, float]:
    """(dev_ff, dev_of) of this cell in logical units of its w_range span."""
    _, delta_w = quant_step(params)
    return deviation_ff(params) * delta_w, deviation_of_exact(params) * delta_w


def program(
    target_w: float, pair: PairState, params: DeviceParams
) -> tuple[float, float]:
    """Conductances written to the (plus, minus) terminals for target_w.

    Working terminals are written exactly (ideal write-and-verify acting on
    the pair readback); failed terminals sit at their fixed series values.
    target_w must lie on the pair quantization grid: integer multiples of
    1/(n_states - 1) within [-1, 1].
    """
    step = 1.0 / (params.n_states - 1)
    k = target_w / step
    if abs(k - round(k)) > 1e-9 or abs(target_w) > 1.0 + 1e-12:
        raise ValueError(f"target {target_w} not on the {params.n_states}-level pair grid")

    cc = cell_conductances(params)
    p, m = _effective(pair.plus), _effective(pair.minus)
    dev_ff, dev_of = pair_deviations(params)

    # Fixed logical contributions of failed terminals.
    offset = 0.0
    if p is FormOutcome.FORM_FAIL:
        offset += -dev_ff
    elif p is FormOutcome.OVER_FORM:
        offset += 1.0 + dev_of
    if m is FormOutcome.FORM_FAIL:
        offset += dev_ff
    elif m is FormOutcome.OVER_FORM:
        offset += -(1.0 + dev_of)

    lo = -1.0 if m is FormOutcome.WORKING else 0.0
    hi = 1.0 if p is FormOutcome.WORKING else 0.0
    rem = min(max(target_w - offset, lo), hi)
    w_plus = min(max(rem, 0.0), 1.0)
    w_minus = rem - w_plus

    if p is FormOutcome.FORM_FAIL:
        g_plus = cc.g_ff_cell
    elif p is FormOutcome.OVER_FORM:
        g_plus = cc.g_of_cell
    else:
        g_plus = terminal_conductance(w_plus, params)
    if m is FormOutcome.FORM_FAIL:
        g_minus = cc.g_ff_cell
    elif m is FormOutcome.OVER_FORM:
        g_minus = cc.g_of_cell
    else:
        g_minus = terminal_conductance(-w_minus, params)
    return g_plus, g_minus
