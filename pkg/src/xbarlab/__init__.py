"""Fault-injection laboratory for ReRAM crossbar inference.

Models forming failures of resistive cells (failed-open and failed-short),
resolves them through the differential 2T2R pair structure, and quantifies
and mitigates their impact on quantized neural-network inference through
defect-aware and distribution-aware training.
"""

from .cells import (
    DefectClass,
    DefectKind,
    DefectRates,
    FormingStrategy,
    FormOutcome,
    PairState,
    defect_rates,
    form_pair,
    form_pairs,
    program,
    resolve,
)
from .crossbar import CrossbarTile, mac, map_weights, read_logical
from .defects import DefectConfig, DefectModel, GaussianSpec, apply, sample_config, sample_probability
from .device import (
    CellConductances,
    DeviceParams,
    cell_conductances,
    deviation_ff,
    deviation_of_exact,
    deviation_of_paper,
    quant_step,
    series_conductance,
    sweep_grid,
)
from .quantize import QuantSpec, quantize_activation, quantize_weights

__version__ = "0.1.0"
