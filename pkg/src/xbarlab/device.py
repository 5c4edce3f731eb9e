"""Closed-form analytics of the 1T1R resistive unit cell.

The series transistor bounds the cell current; all quantities of interest
(series conductances, quantization spacing, logical-value deviations of
forming-failed and overformed devices) reduce to ratios of the five
conductances held in :class:`DeviceParams`.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence


class DeviceParamError(ValueError):
    """Raised when device parameters violate the working-range ordering."""


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise DeviceParamError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class DeviceParams:
    """Conductances of one 1T1R cell, in units normalized to g_hrs = 1.

    Absolute siemens values are accepted; :meth:`normalized` rescales so that
    g_hrs = 1 (every derived quantity depends on ratios only).

    g_lrs / g_hrs bound the working dynamic range, g_tr is the effective
    transistor conductance, g_of the overformed-device conductance and g_ff
    the forming-failed conductance.  n_states is the number of quantized
    levels the cell stores over the logical range w_range.
    """

    g_lrs: float
    g_hrs: float = 1.0
    g_tr: float = 10.0
    g_of: float = 500.0
    g_ff: float = 0.0
    n_states: int = 16
    w_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for name in ("g_lrs", "g_hrs", "g_tr", "g_of", "g_ff"):
            _check_finite(name, getattr(self, name))
        if not (0.0 <= self.g_ff < self.g_hrs < self.g_lrs):
            raise DeviceParamError(
                f"need 0 <= g_ff < g_hrs < g_lrs, got "
                f"g_ff={self.g_ff}, g_hrs={self.g_hrs}, g_lrs={self.g_lrs}"
            )
        if self.g_tr <= 0.0:
            raise DeviceParamError(f"g_tr must be > 0, got {self.g_tr}")
        # The overformed branch must conduct above both the transistor bound
        # and the LRS resistor, otherwise an OF cell would read below LRS.
        if self.g_of <= self.g_tr or self.g_of <= self.g_lrs:
            raise DeviceParamError(
                f"g_of must exceed g_tr and g_lrs, got g_of={self.g_of}, "
                f"g_tr={self.g_tr}, g_lrs={self.g_lrs}"
            )
        if int(self.n_states) != self.n_states or self.n_states < 2:
            raise DeviceParamError(f"n_states must be an integer >= 2, got {self.n_states}")
        w_min, w_max = self.w_range
        if not (math.isfinite(w_min) and math.isfinite(w_max) and w_min < w_max):
            raise DeviceParamError(f"invalid w_range {self.w_range}")

    def normalized(self) -> "DeviceParams":
        """Rescale all conductances so that g_hrs = 1."""
        s = 1.0 / self.g_hrs
        return replace(
            self,
            g_lrs=self.g_lrs * s,
            g_hrs=1.0,
            g_tr=self.g_tr * s,
            g_of=self.g_of * s,
            g_ff=self.g_ff * s,
        )

    @classmethod
    def from_ratios(
        cls,
        lrs_hrs_ratio: float = 10.0,
        gtr_lrs_ratio: float = 1.0,
        of_lrs_ratio: float = 50.0,
        n_states: int = 16,
        w_range: tuple[float, float] = (0.0, 1.0),
        g_ff: float = 0.0,
    ) -> "DeviceParams":
        """Build normalized parameters from the three design ratios.

        g_of is lifted to 10*g_tr when the default 50*g_lrs would not clear
        the transistor bound (large gtr_lrs_ratio corners of design sweeps).
        """
        g_lrs = float(lrs_hrs_ratio)
        g_tr = gtr_lrs_ratio * g_lrs
        g_of = max(of_lrs_ratio * g_lrs, 10.0 * g_tr)
        return cls(g_lrs=g_lrs, g_hrs=1.0, g_tr=g_tr, g_of=g_of, g_ff=g_ff,
                   n_states=n_states, w_range=w_range)


@dataclass(frozen=True)
class CellConductances:
    """Series-combined 1T1R conductances and the min/max ratio gbar."""

    g_lrs_cell: float
    g_hrs_cell: float
    g_of_cell: float
    g_ff_cell: float
    gbar: float


def series_conductance(g: float, g_tr: float) -> float:
    """Conductance of the resistor-transistor series combination.

    Returns g*g_tr/(g + g_tr); an open device (g = 0) conducts nothing.
    """
    g = _check_finite("g", g)
    g_tr = _check_finite("g_tr", g_tr)
    if g < 0.0:
        raise DeviceParamError(f"g must be >= 0, got {g}")
    if g_tr <= 0.0:
        raise DeviceParamError(f"g_tr must be > 0, got {g_tr}")
    if g == 0.0:
        return 0.0
    return g * g_tr / (g + g_tr)


def cell_conductances(params: DeviceParams) -> CellConductances:
    """Exact series values for the four device states (no approximations)."""
    g_lrs_cell = series_conductance(params.g_lrs, params.g_tr)
    g_hrs_cell = series_conductance(params.g_hrs, params.g_tr)
    g_of_cell = series_conductance(params.g_of, params.g_tr)
    g_ff_cell = series_conductance(params.g_ff, params.g_tr)
    return CellConductances(
        g_lrs_cell=g_lrs_cell,
        g_hrs_cell=g_hrs_cell,
        g_of_cell=g_of_cell,
        g_ff_cell=g_ff_cell,
        gbar=g_lrs_cell / g_hrs_cell,
    )


def quant_step(params: DeviceParams) -> tuple[float, float]:
    """Conductance spacing and logical spacing of the N-level cell grid."""
    cc = cell_conductances(params)
    n = params.n_states
    delta_g = (cc.g_lrs_cell - cc.g_hrs_cell) / (n - 1)
    w_min, w_max = params.w_range
    delta_w = (w_max - w_min) / (n - 1)
    return delta_g, delta_w


def _dynamic_range(cc: CellConductances) -> float:
    dr = cc.g_lrs_cell - cc.g_hrs_cell
    if dr <= 0.0:
        raise DeviceParamError("degenerate dynamic range: g_lrs_cell <= g_hrs_cell")
    return dr


def deviation_ff(params: DeviceParams) -> float:
    """Forming-failed deviation in units of the quantization step.

    Definitional form (N-1)*(g_hrs_cell - g_ff_cell)/(g_lrs_cell - g_hrs_cell);
    for g_ff = 0 this equals (N-1)/(gbar-1) identically.
    """
    cc = cell_conductances(params)
    return (params.n_states - 1) * (cc.g_hrs_cell - cc.g_ff_cell) / _dynamic_range(cc)


def deviation_of_exact(params: DeviceParams) -> float:
    """Overformed deviation from exact series values, in quantization steps."""
    cc = cell_conductances(params)
    return (params.n_states - 1) * (cc.g_of_cell - cc.g_lrs_cell) / _dynamic_range(cc)


def deviation_of_paper(params: DeviceParams) -> float:
    """Overformed deviation, published approximate form.

    (N-1) * g_tr / (g_lrs * (gbar - 1)).  Kept separate from
    :func:`deviation_of_exact`: the approximation differs from the exact
    series expression by roughly a factor gbar, and design-space contour maps
    conventionally use this form.
    """
    cc = cell_conductances(params)
    if cc.gbar <= 1.0:
        raise DeviceParamError("degenerate dynamic range: gbar <= 1")
    return (params.n_states - 1) * params.g_tr / (params.g_lrs * (cc.gbar - 1.0))


def states_for(n_bit: int, convention: str) -> int:
    """Per-cell state count for a given weight bit width.

    ``full`` maps n_bit to 2**n_bit states; ``half`` to 2**(n_bit-1), the
    differential-pair reading where each cell covers half the weight range.
    """
    if convention not in ("full", "half"):
        raise ValueError(f"convention must be 'full' or 'half', got {convention!r}")
    if n_bit < 2:
        raise ValueError(f"n_bit must be >= 2, got {n_bit}")
    return 2 ** n_bit if convention == "full" else 2 ** (n_bit - 1)


def sweep_grid(
    n_bits: Sequence[int],
    gtr_ratios: Sequence[float],
    lrs_hrs_ratio: float = 10.0,
    n_convention: str = "full",
    of_lrs_ratio: float = 50.0,
) -> list[tuple[int, float, float, float, float]]:
    """Design-space sweep over bit width and transistor conductance.

    One row (n_bit, gtr_ratio, dw_ff, dw_of_exact, dw_of_paper) per grid
    point, at fixed g_lrs/g_hrs.  Pure function of its inputs.
    """
    n_bits = list(n_bits)
    gtr_ratios = [float(r) for r in gtr_ratios]
    if not n_bits or not gtr_ratios:
        raise ValueError("n_bit and gtr ratio ranges must be non-empty")
    if lrs_hrs_ratio <= 1.0:
        raise ValueError(f"lrs_hrs_ratio must be > 1, got {lrs_hrs_ratio}")
    rows = []
    for n_bit in n_bits:
        n = states_for(int(n_bit), n_convention)
        for ratio in gtr_ratios:
            params = DeviceParams.from_ratios(
                lrs_hrs_ratio=lrs_hrs_ratio,
                gtr_lrs_ratio=ratio,
                of_lrs_ratio=of_lrs_ratio,
                n_states=n,
            )
            rows.append((
                int(n_bit),
                ratio,
                deviation_ff(params),
                deviation_of_exact(params),
                deviation_of_paper(params),
            ))
    return rows


SWEEP_CSV_HEADER = "n_bit,gtr_ratio,dw_ff,dw_of_exact,dw_of_paper"


def sweep_grid_csv(rows: Iterable[tuple[int, float, float, float, float]]) -> str:
    """Render sweep rows as CSV with 12 significant digits."""
    buf = io.StringIO()
    buf.write(SWEEP_CSV_HEADER + "\n")
    for n_bit, ratio, dw_ff, dw_of_exact, dw_of_paper in rows:
        buf.write(f"{n_bit},{ratio:.12g},{dw_ff:.12g},{dw_of_exact:.12g},{dw_of_paper:.12g}\n")
    return buf.getvalue()
