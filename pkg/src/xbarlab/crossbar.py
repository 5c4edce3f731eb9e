"""Analog-level simulation of the differential 2T2R crossbar MAC.

Weights map to conductance pairs through the ideal write-and-verify
programming in :mod:`xbarlab.cells`; a bit-line integrates the charge
q_j = sum_i g_ji * v_i * t_max per terminal, and the differential readout
converts back to logical units.  The HRS baselines of the plus and minus
terminals cancel in the subtraction, so the conversion is a single scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cells import _OUTCOME_TO_CODE, PairState, pair_deviations
from .device import DeviceParams, cell_conductances


@dataclass
class CrossbarTile:
    """rows x cols grid of programmed conductance pairs."""

    g_plus: np.ndarray
    g_minus: np.ndarray
    params: DeviceParams

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_plus.shape

    def logical_scale(self) -> float:
        cc = cell_conductances(self.params)
        return 1.0 / (cc.g_lrs_cell - cc.g_hrs_cell)


def map_weights(
    w_q: np.ndarray,
    params: DeviceParams,
    pair_states,
) -> CrossbarTile:
    """Program a logical weight matrix onto a tile.

    ``pair_states`` is either an object array of
    :class:`~xbarlab.cells.PairState` with the same shape as ``w_q`` or a
    ``(plus, minus)`` tuple of outcome-code arrays as produced by
    :func:`~xbarlab.cells.form_pairs` (the vectorized path).
    """
    w_q = np.asarray(w_q, dtype=np.float64)
    if isinstance(pair_states, tuple):
        plus, minus = (np.asarray(a).reshape(w_q.shape) for a in pair_states)
    else:
        states = np.asarray(pair_states, dtype=object)
        if states.shape != w_q.shape:
            raise ValueError(f"shape mismatch: weights {w_q.shape} vs states {states.shape}")
        plus = np.empty(w_q.shape, dtype=np.uint8)
        minus = np.empty(w_q.shape, dtype=np.uint8)
        for pos in np.ndindex(w_q.shape):
            plus[pos] = _OUTCOME_TO_CODE[states[pos].plus]
            minus[pos] = _OUTCOME_TO_CODE[states[pos].minus]

    step = 1.0 / (params.n_states - 1)
    k = w_q / step
    if np.max(np.abs(k - np.rint(k)), initial=0.0) > 1e-9 or np.max(np.abs(w_q), initial=0.0) > 1.0 + 1e-12:
        raise ValueError(f"weights not on the {params.n_states}-level pair grid")

    cc = cell_conductances(params)
    dev_ff, dev_of = pair_deviations(params)
    p = np.where(plus == 3, np.uint8(1), plus)
    m = np.where(minus == 3, np.uint8(1), minus)
    offset = ((p == 1) * -dev_ff + (p == 2) * (1.0 + dev_of)
              + (m == 1) * dev_ff + (m == 2) * -(1.0 + dev_of))
    lo = np.where(m == 0, -1.0, 0.0)
    hi = np.where(p == 0, 1.0, 0.0)
    rem = np.clip(w_q - offset, lo, hi)
    w_plus = np.clip(rem, 0.0, 1.0)
    w_minus = rem - w_plus
    span = cc.g_lrs_cell - cc.g_hrs_cell
    g_plus = np.where(p == 1, cc.g_ff_cell,
                      np.where(p == 2, cc.g_of_cell, cc.g_hrs_cell + w_plus * span))
    g_minus = np.where(m == 1, cc.g_ff_cell,
                       np.where(m == 2, cc.g_of_cell, cc.g_hrs_cell + -w_minus * span))
    return CrossbarTile(g_plus=g_plus, g_minus=g_minus, params=params)


def mac(
    tile: CrossbarTile,
    activations: np.ndarray,
    t_max: float = 1.0,
    saturation: Optional[float] = None,
) -> np.ndarray:
    """Charge-integration readout of one tile.

    Activations a_i are encoded as word-line voltages v_i = a_i / t_max held
    for t_max; each bit-line integrates I = g * v into a charge, the two
    terminal charges are subtracted, and the result is rescaled to logical
    units.  ``saturation``, when given, clips each terminal's integrated
    charge at saturation * g_lrs_cell * t_max * max|v| -- the integrator
    overload mode of a current-unbounded (no series transistor) array.

    Accepts a single activation vector (rows,) or a batch (batch, rows).
    """
    a = np.asarray(activations, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != tile.shape[0]:
        raise ValueError(f"activation length {a.shape[1]} != tile rows {tile.shape[0]}")
    if t_max <= 0.0:
        raise ValueError("t_max must be > 0")
    v = a / t_max
    q_plus = (v @ tile.g_plus) * t_max
    q_minus = (v @ tile.g_minus) * t_max
    if saturation is not None:
        cc = cell_conductances(tile.params)
        q_max = saturation * cc.g_lrs_cell * t_max * float(np.max(np.abs(v), initial=0.0))
        q_plus = np.clip(q_plus, -q_max, q_max)
        q_minus = np.clip(q_minus, -q_max, q_max)
    z = (q_plus - q_minus) * tile.logical_scale()
    return z[0] if single else z


def read_logical(tile: CrossbarTile) -> np.ndarray:
    """Per-pair logical values read back from the programmed conductances."""
    cc = cell_conductances(tile.params)
    scale = tile.logical_scale()
    w_plus = (tile.g_plus - cc.g_hrs_cell) * scale
    w_minus = -(tile.g_minus - cc.g_hrs_cell) * scale
    return w_plus + w_minus


def tiled_mac(
    w_q: np.ndarray,
    params: DeviceParams,
    pair_codes: tuple[np.ndarray, np.ndarray],
    activations: np.ndarray,
    max_rows: int,
    max_cols: int,
    t_max: float = 1.0,
) -> np.ndarray:
    """MAC of a logical matrix larger than one physical array.

    The matrix is split into max_rows x max_cols blocks, each programmed onto
    its own tile; partial bit-line sums are accumulated digitally.
    """
    w_q = np.asarray(w_q, dtype=np.float64)
    rows, cols = w_q.shape
    if max_rows < 1 or max_cols < 1:
        raise ValueError("tile dimensions must be >= 1")
    plus, minus = (np.asarray(a).reshape(rows, cols) for a in pair_codes)
    a = np.asarray(activations, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    out = np.zeros((a.shape[0], cols), dtype=np.float64)
    for r0 in range(0, rows, max_rows):
        r1 = min(r0 + max_rows, rows)
        for c0 in range(0, cols, max_cols):
            c1 = min(c0 + max_cols, cols)
            tile = map_weights(w_q[r0:r1, c0:c1], params,
                               (plus[r0:r1, c0:c1], minus[r0:r1, c0:c1]))
            out[:, c0:c1] += mac(tile, a[:, r0:r1], t_max=t_max)
    return out[0] if single else out
