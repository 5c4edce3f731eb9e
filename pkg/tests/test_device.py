"""Unit-cell analytics against exact rational-arithmetic references."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbarlab.device import (
    SWEEP_CSV_HEADER,
    DeviceParamError,
    DeviceParams,
    cell_conductances,
    deviation_ff,
    deviation_of_exact,
    deviation_of_paper,
    quant_step,
    series_conductance,
    states_for,
    sweep_grid,
    sweep_grid_csv,
)

REL = 1e-12


def exact_series(g: Fraction, g_tr: Fraction) -> Fraction:
    if g == 0:
        return Fraction(0)
    return g * g_tr / (g + g_tr)


def exact_cell_values(p: DeviceParams):
    gtr = Fraction(p.g_tr)
    return {
        "lrs": exact_series(Fraction(p.g_lrs), gtr),
        "hrs": exact_series(Fraction(p.g_hrs), gtr),
        "of": exact_series(Fraction(p.g_of), gtr),
        "ff": exact_series(Fraction(p.g_ff), gtr),
    }


def rel_err(x: float, ref: Fraction) -> float:
    ref = float(ref)
    return abs(x - ref) / max(1.0, abs(ref))


valid_params = st.builds(
    DeviceParams,
    g_lrs=st.floats(2.0, 100.0),
    g_hrs=st.just(1.0),
    g_tr=st.floats(0.5, 1000.0),
    g_of=st.floats(2000.0, 100000.0),
    g_ff=st.floats(0.0, 0.4),
    n_states=st.integers(2, 256),
)


class TestSeriesConductance:
    def test_open_device(self):
        assert series_conductance(0.0, 5.0) == 0.0

    def test_equal_elements_halve(self):
        assert series_conductance(10.0, 10.0) == pytest.approx(5.0, rel=REL)

    def test_direct_arithmetic(self):
        ref = exact_series(Fraction(1), Fraction(100))
        assert rel_err(series_conductance(1.0, 100.0), ref) < REL

    def test_rejects_bad_inputs(self):
        with pytest.raises(DeviceParamError):
            series_conductance(-1.0, 5.0)
        with pytest.raises(DeviceParamError):
            series_conductance(float("nan"), 5.0)
        with pytest.raises(DeviceParamError):
            series_conductance(1.0, 0.0)

    @given(g=st.floats(1e-6, 1e6), g_tr=st.floats(1e-6, 1e6))
    def test_strict_series_bound(self, g, g_tr):
        s = series_conductance(g, g_tr)
        assert s < min(g, g_tr)


class TestCellConductances:
    def test_worked_example(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=100, g_of=500, g_ff=0, n_states=16)
        cc = cell_conductances(p)
        ref = exact_cell_values(p)
        assert rel_err(cc.g_lrs_cell, ref["lrs"]) < REL
        assert rel_err(cc.g_hrs_cell, ref["hrs"]) < REL
        assert rel_err(cc.g_of_cell, ref["of"]) < REL
        assert cc.g_ff_cell == 0.0
        assert cc.g_lrs_cell == pytest.approx(9.090909090909, rel=1e-10)
        assert cc.g_hrs_cell == pytest.approx(0.990099009901, rel=1e-10)
        assert cc.g_of_cell == pytest.approx(83.33333333333, rel=1e-10)

    def test_transparent_transistor_limit(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=1e9, g_of=1e10, g_ff=0, n_states=16)
        cc = cell_conductances(p)
        assert abs(cc.g_lrs_cell - 10.0) / 10.0 < 1e-6

    def test_low_gtr_example(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=10, g_of=500, g_ff=0, n_states=16)
        cc = cell_conductances(p)
        assert cc.g_lrs_cell == pytest.approx(5.0, rel=REL)
        assert cc.g_of_cell == pytest.approx(500.0 * 10 / 510, rel=REL)

    @given(valid_params)
    def test_gbar_above_one(self, p):
        assert cell_conductances(p).gbar > 1.0

    def test_ordering_validation(self):
        with pytest.raises(DeviceParamError):
            DeviceParams(g_lrs=1.0, g_hrs=1.0)
        with pytest.raises(DeviceParamError):
            DeviceParams(g_lrs=10.0, g_ff=2.0)
        with pytest.raises(DeviceParamError):
            DeviceParams(g_lrs=10.0, g_tr=0.0)
        with pytest.raises(DeviceParamError):
            DeviceParams(g_lrs=10.0, g_tr=600.0, g_of=500.0)
        with pytest.raises(DeviceParamError):
            DeviceParams(g_lrs=10.0, n_states=1)


class TestQuantStep:
    def test_full_range_step(self):
        p = DeviceParams(g_lrs=10, g_tr=100, g_of=5000, n_states=16, w_range=(-1.0, 1.0))
        _, dw = quant_step(p)
        assert dw == pytest.approx(2.0 / 15.0, rel=REL)

    def test_two_state_cell(self):
        p = DeviceParams(g_lrs=10, g_tr=100, g_of=5000, n_states=2)
        cc = cell_conductances(p)
        dg, _ = quant_step(p)
        assert dg == pytest.approx(cc.g_lrs_cell - cc.g_hrs_cell, rel=REL)

    def test_conductance_step_example(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=100, g_of=500, g_ff=0, n_states=16)
        dg, _ = quant_step(p)
        ref = exact_cell_values(p)
        assert rel_err(dg, (ref["lrs"] - ref["hrs"]) / 15) < REL
        assert dg == pytest.approx(0.5400540054, rel=1e-9)


class TestDeviations:
    def test_ff_example(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=100, g_of=500, g_ff=0, n_states=16)
        ref = exact_cell_values(p)
        expect = 15 * (ref["hrs"] - ref["ff"]) / (ref["lrs"] - ref["hrs"])
        assert rel_err(deviation_ff(p), expect) < REL
        assert deviation_ff(p) == pytest.approx(1.833333333, rel=1e-8)

    def test_ff_zero_when_gff_equals_ghrs(self):
        # hypothetical boundary: push g_ff right below g_hrs
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=100, g_of=500, g_ff=1 - 1e-12, n_states=16)
        assert deviation_ff(p) == pytest.approx(0.0, abs=1e-9)

    def test_ff_transparent_limit(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=1e12, g_of=1e14, g_ff=0, n_states=8)
        assert deviation_ff(p) == pytest.approx(7.0 / 9.0, rel=1e-9)

    @given(
        st.builds(
            DeviceParams,
            g_lrs=st.floats(2.0, 100.0),
            g_hrs=st.just(1.0),
            g_tr=st.floats(0.5, 1000.0),
            g_of=st.floats(2000.0, 100000.0),
            g_ff=st.just(0.0),
            n_states=st.integers(2, 256),
        )
    )
    def test_ff_closed_form_identity(self, p):
        cc = cell_conductances(p)
        closed = (p.n_states - 1) / (cc.gbar - 1.0)
        assert abs(deviation_ff(p) - closed) / closed < REL

    def test_of_exact_example(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=10, g_of=500, g_ff=0, n_states=16)
        ref = exact_cell_values(p)
        expect = 15 * (ref["of"] - ref["lrs"]) / (ref["lrs"] - ref["hrs"])
        assert rel_err(deviation_of_exact(p), expect) < REL
        assert deviation_of_exact(p) == pytest.approx(17.614, rel=1e-4)

    def test_of_exact_zero_when_equal(self):
        # hypothetical: g_of barely above g_lrs makes the deviation vanish
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=10 + 1e-6, g_of=10 + 2e-6, g_ff=0, n_states=16)
        assert deviation_of_exact(p) == pytest.approx(0.0, abs=1e-5)

    def test_of_exact_high_gtr_example(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=100, g_of=500, g_ff=0, n_states=16)
        assert deviation_of_exact(p) == pytest.approx(137.47, rel=1e-3)

    def test_of_paper_examples(self):
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=10, g_of=500, g_ff=0, n_states=16)
        assert deviation_of_paper(p) == pytest.approx(15.0 / 4.5, rel=REL)
        p = DeviceParams(g_lrs=10, g_hrs=1, g_tr=100, g_of=5000, g_ff=0, n_states=16)
        cc = cell_conductances(p)
        assert deviation_of_paper(p) == pytest.approx(15 * 100 / (10 * (cc.gbar - 1)), rel=REL)
        assert deviation_of_paper(p) == pytest.approx(18.333, rel=1e-4)

    def test_of_paper_scales_with_states(self):
        lo = DeviceParams(g_lrs=10, g_tr=10, g_of=500, n_states=2)
        hi = DeviceParams(g_lrs=10, g_tr=10, g_of=500, n_states=16)
        assert deviation_of_paper(hi) == pytest.approx(15 * deviation_of_paper(lo), rel=REL)

    @given(valid_params, st.floats(1.1, 4.0))
    def test_ff_decreasing_in_gtr(self, p, factor):
        from dataclasses import replace

        bumped = replace(p, g_tr=p.g_tr * factor, g_of=p.g_of * factor * 100)
        base = replace(p, g_of=p.g_of * factor * 100)
        assert deviation_ff(bumped) < deviation_ff(base)

    @given(valid_params, st.floats(1.1, 4.0))
    def test_of_paper_increasing_in_gtr(self, p, factor):
        from dataclasses import replace

        bumped = replace(p, g_tr=p.g_tr * factor, g_of=p.g_of * factor * 100)
        base = replace(p, g_of=p.g_of * factor * 100)
        assert deviation_of_paper(bumped) > deviation_of_paper(base)

    @given(valid_params, st.integers(2, 8))
    def test_ff_increasing_in_states(self, p, extra):
        from dataclasses import replace

        assert deviation_ff(replace(p, n_states=p.n_states + extra)) > deviation_ff(p)

    @given(valid_params)
    def test_deviations_nonnegative(self, p):
        assert deviation_ff(p) >= 0.0
        assert deviation_of_exact(p) >= 0.0
        assert deviation_of_paper(p) >= 0.0


class TestSweepGrid:
    def test_states_conventions(self):
        assert states_for(4, "full") == 16
        assert states_for(4, "half") == 8
        with pytest.raises(ValueError):
            states_for(4, "other")

    def test_anchor_row(self):
        rows = sweep_grid([4], [1.0], lrs_hrs_ratio=10.0, n_convention="full")
        (n_bit, ratio, dw_ff, dw_of_exact, dw_of_paper) = rows[0]
        assert (n_bit, ratio) == (4, 1.0)
        assert 3.0 <= dw_of_paper <= 3.6

    def test_of_column_monotone_in_gtr(self):
        ratios = [0.25, 0.5, 1.0, 2.0, 4.0]
        rows = sweep_grid([4], ratios, n_convention="full")
        of_col = [r[4] for r in rows]
        assert all(a < b for a, b in zip(of_col, of_col[1:]))

    def test_ff_column_monotone_in_gtr(self):
        ratios = [0.25, 0.5, 1.0, 2.0, 4.0]
        rows = sweep_grid([4], ratios, n_convention="full")
        ff_col = [r[2] for r in rows]
        assert all(a > b for a, b in zip(ff_col, ff_col[1:]))

    def test_pure_function(self):
        a = sweep_grid_csv(sweep_grid([2, 4, 6], [0.1, 1.0, 10.0]))
        b = sweep_grid_csv(sweep_grid([2, 4, 6], [0.1, 1.0, 10.0]))
        assert a == b

    def test_csv_shape(self):
        csv = sweep_grid_csv(sweep_grid([4], [1.0]))
        lines = csv.strip().split("\n")
        assert lines[0] == SWEEP_CSV_HEADER
        cells = lines[1].split(",")
        assert len(cells) == 5
        # at least 9 significant digits survive the round trip
        assert float(cells[2]) == pytest.approx(3.0 + 1.0 / 3.0, rel=1e-9)

    def test_rejects_empty_and_flat_ratio(self):
        with pytest.raises(ValueError):
            sweep_grid([], [1.0])
        with pytest.raises(ValueError):
            sweep_grid([4], [])
        with pytest.raises(ValueError):
            sweep_grid([4], [1.0], lrs_hrs_ratio=1.0)


def test_normalized_rescales_to_unit_hrs():
    p = DeviceParams(g_lrs=1e-4, g_hrs=1e-5, g_tr=1e-4, g_of=5e-3, g_ff=0.0, n_states=16)
    q = p.normalized()
    assert q.g_hrs == 1.0
    assert q.g_lrs == pytest.approx(10.0, rel=REL)
    assert deviation_of_paper(q) == pytest.approx(deviation_of_paper(p), rel=1e-9)
