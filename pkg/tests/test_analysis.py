import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import LVT_P, RVT_P, cwt, ptat, skew_m1
from twotref.analysis import (
    TT,
    CornerSpec,
    SweepSeries,
    apply_corner,
    box_ls,
    box_metrics,
    box_tc,
    corner_analysis,
    design_id,
    monte_carlo,
    require_mismatch_data,
    sweep,
    sweep_points,
)
from twotref.device_models import ResistorParams, specific_sheet_current
from twotref.errors import ConfigurationError, DomainError, MetricError
from twotref.reference_circuits import (
    CwtReference,
    Device,
    cwt_iref,
    ptat_iref,
    vdd_min,
    vref_2t,
)

T0 = 298.15


def series(axis, x, i, valid=None):
    x = np.asarray(x, dtype=float)
    i = np.asarray(i, dtype=float)
    valid = np.ones(len(x), bool) if valid is None else valid
    return SweepSeries(axis, x, i, np.zeros_like(x), np.zeros_like(x), valid)


class TestSweep:
    def test_point_count(self):
        s = sweep(ptat(), "temperature", 233.15, 358.15, 5.0)
        assert len(s) == 26
        assert s.x[0] == 233.15 and s.x[-1] == pytest.approx(358.15, abs=1e-12)
        assert s.valid.all()

    def test_grid_is_exact_multiples(self):
        x = sweep_points(0.5, 1.8, 0.05)
        assert len(x) == 27
        assert np.array_equal(x, 0.5 + 0.05 * np.arange(27))

    @pytest.mark.parametrize("args", [(1.0, 2.0, 0.0), (2.0, 1.0, 0.1)])
    def test_bad_grid(self, args):
        with pytest.raises(DomainError):
            sweep_points(*args)

    def test_unknown_axis(self):
        with pytest.raises(DomainError):
            sweep(ptat(), "humidity", 0, 1, 1)

    def test_isq_power_law(self):
        r = ptat()
        s = sweep(r, "temperature", 233.15, 358.15, 5.0)
        isq = np.array([specific_sheet_current(LVT_P, t) for t in s.x])
        ratio = s.i_ref / isq
        assert np.ptp(ratio) / ratio.mean() < 1e-9

    def test_flat_cwt(self):
        p1 = replace(RVT_P, alpha_vt0=0.0, m_mob=2.0)
        p2 = replace(LVT_P, alpha_vt0=0.0, m_mob=2.0)
        d = cwt(p1, p2, ResistorParams("flat", 295.0), ratio=0.5, periphery=False)
        s = sweep(d, "temperature", 233.15, 358.15, 5.0)
        # with flat thresholds only the U_T term drifts, exactly PTAT in V_REF
        want = [vref_2t(d.vref, t) / (295.0 * d.squares) for t in s.x]
        assert np.array_equal(s.i_ref, want)

    def test_points_below_vdd_min_are_flagged(self):
        r = ptat()
        s = sweep(r, "supply", 0.3, 1.2, 0.05)
        floor = vdd_min(r, T0)
        assert np.array_equal(s.valid, s.x >= floor)
        assert not s.valid.all() and s.valid.any()

    def test_failed_points_are_nan(self):
        r = ptat()
        s = sweep(r, "supply", 0.0, 0.2, 0.1)
        assert np.isnan(s.i_ref[0]) and not s.valid[0]

    def test_conditions_recorded(self):
        s = sweep(ptat(), "supply", 0.5, 1.0, 0.1, t=300.0, conditions={"corner": "SS"})
        assert s.conditions == {"t": 300.0, "corner": "SS"}
        assert s.design_id == "ptat"

    def test_bitwise_reproducible(self):
        a = sweep(cwt(), "supply", 0.5, 1.8, 0.05)
        b = sweep(cwt(), "supply", 0.5, 1.8, 0.05)
        assert a == b

    def test_supply_sweep_ls(self):
        s = sweep(ptat(), "supply", 0.6, 1.8, 0.05)
        assert box_ls(s) == pytest.approx(1.87, abs=0.05)

    def test_design_ids(self):
        from builders import CAL
        assert design_id(cwt()) == "cwt"
        assert design_id(cwt(calibration=CAL).with_code(3)) == "cwt-code3"
        with pytest.raises(TypeError):
            design_id(object())


class TestPtatLogSlope:
    def test_slope(self):
        s = sweep(ptat(), "temperature", 233.15, 360.15, 1.0)
        slope = np.polyfit(np.log(s.x), np.log(s.i_ref), 1)[0]
        assert slope == pytest.approx(2 - LVT_P.m_mob, abs=1e-3)


class TestBoxMetrics:
    def test_constant(self):
        assert box_ls(series("supply", [0.5, 1.0, 1.5], [1e-6] * 3)) == 0.0
        assert box_tc(series("temperature", [250, 300, 350], [1e-6] * 3)) == 0.0

    def test_two_points(self):
        s = series("supply", [1.0, 2.0], [1.00e-6, 1.01e-6])
        assert box_ls(s) == pytest.approx(0.01 / 1.005 * 100, rel=1e-15)
        assert box_ls(s) == pytest.approx(0.995, abs=5e-4)

    def test_parabola(self):
        c, dt = 1e-5, 100.0
        t = np.linspace(250.0, 350.0, 101)
        i = 1e-6 * (1 + c * (t - 300.0) ** 2)
        m = box_metrics(series("temperature", t, i))
        want = 1e-6 * c * (dt / 2) ** 2 / (np.mean(i) * dt) * 1e6
        assert m.tc == pytest.approx(want, rel=1e-14)
        assert m.i_min == 1e-6 and m.i_max == pytest.approx(1e-6 * (1 + c * 2500), rel=1e-15)

    def test_symmetric_ramp_independent_of_count(self):
        vals = []
        for n in (3, 11, 101):
            x = np.linspace(0.5, 1.5, n)
            vals.append(box_ls(series("supply", x, 1e-6 * (1 + 0.01 * (x - 1.0)))))
        assert max(vals) - min(vals) < 1e-12

    @settings(max_examples=50)
    @given(k=st.floats(1e-6, 1e6), seed=st.integers(0, 2 ** 16))
    def test_scaling_invariance(self, k, seed):
        rng = np.random.default_rng(seed)
        x = np.sort(rng.uniform(0, 1, 8)) + np.arange(8)
        i = rng.uniform(1.0, 2.0, 8) * 1e-9
        a = box_tc(series("temperature", x, i))
        b = box_tc(series("temperature", x, i * k))
        assert b == pytest.approx(a, rel=1e-12)

    @settings(max_examples=50)
    @given(perm=st.permutations(list(range(7))))
    def test_reorder_invariance(self, perm):
        x = np.arange(7.0) * 0.1 + 0.6
        i = 1e-9 * (1 + 0.02 * np.sin(np.arange(7.0)))
        ordered = box_ls(series("supply", x, i))
        p = np.asarray(perm)
        assert box_ls(series("supply", x[p], i[p])) == ordered

    def test_invalid_points_excluded(self):
        s = series("supply", [0.4, 0.5, 1.0], [5e-7, 1e-6, 1e-6], valid=np.array([False, True, True]))
        assert box_ls(s) == 0.0
        assert box_metrics(s).n_points == 2

    def test_metric_bounds(self):
        m = box_metrics(series("supply", [0.5, 1.0, 1.8], [1.0, 1.2, 1.1]))
        assert m.i_min <= m.i_avg <= m.i_max
        assert (m.x_min, m.x_max, m.unit) == (0.5, 1.8, "%/V")
        assert m.tc is None and m.ls == m.value

    def test_errors(self):
        with pytest.raises(MetricError):
            box_ls(series("supply", [1.0], [1.0]))
        with pytest.raises(MetricError):
            box_ls(series("supply", [1.0, 2.0], [1.0, 1.0], valid=np.array([True, False])))
        with pytest.raises(MetricError):
            box_ls(series("temperature", [1.0, 2.0], [1.0, 1.0]))
        with pytest.raises(MetricError):
            box_tc(series("supply", [1.0, 2.0], [1.0, 1.0]))
        with pytest.raises(MetricError):
            box_tc(series("temperature", [1.0, 2.0], [-1.0, 1.0]))


class TestSeries:
    def test_sorted_on_construction(self):
        s = series("supply", [1.0, 0.5], [2.0, 1.0])
        assert np.array_equal(s.x, [0.5, 1.0]) and np.array_equal(s.i_ref, [1.0, 2.0])

    def test_duplicates_rejected(self):
        with pytest.raises(DomainError):
            series("supply", [1.0, 1.0], [1.0, 2.0])

    def test_immutable(self):
        s = series("supply", [1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            s.i_ref[0] = 5.0

    def test_equality_with_nan(self):
        a = series("supply", [1.0, 2.0], [np.nan, 2.0])
        assert a == series("supply", [1.0, 2.0], [np.nan, 2.0])
        assert a != series("supply", [1.0, 2.0], [1.0, 2.0])

    def test_ragged_rejected(self):
        with pytest.raises(DomainError):
            SweepSeries("supply", [1.0, 2.0], [1.0], [1.0, 2.0], [1.0, 2.0], [True, True])


class TestCorners:
    def test_tt_is_identity(self):
        r = ptat()
        assert apply_corner(r, TT) is r
        res = corner_analysis(r, [TT])["TT"]
        assert res.deviation == 0.0
        assert res.i_ref == ptat_iref(r, T0, 1.2).i_ref

    @pytest.mark.parametrize("scale", [0.9, 1.1])
    def test_isq_scaling_tracks(self, scale):
        r = ptat()
        c = CornerSpec("X", isq_scale={"lvt_pmos": scale})
        assert ptat_iref(apply_corner(r, c), T0).i_ref == pytest.approx(
            scale * ptat_iref(r, T0).i_ref, rel=1e-12)

    def test_deck_corners(self, deck, ptat_sized):
        res = corner_analysis(ptat_sized.design, [deck.corner(n) for n in ("FF", "SS")])
        assert res["FF"].deviation > 0 > res["SS"].deviation
        assert abs(res["FF"].deviation) == pytest.approx(0.10, abs=0.02)

    def test_skewed_corner_follows_closed_form(self):
        r = cwt(periphery=False)
        c = CornerSpec("SKEW", vt0_shift={"rvt_pmos": 0.02})
        d = apply_corner(r, c)
        assert vref_2t(d.vref, T0) - vref_2t(r.vref, T0) == pytest.approx(0.02, rel=1e-9)
        assert cwt_iref(d, T0).i_ref == pytest.approx(
            vref_2t(d.vref, T0) / (295.0 * r.squares), rel=1e-14)

    def test_unknown_corner(self, deck):
        with pytest.raises(ConfigurationError):
            deck.corner("XX")

    def test_bad_scale(self):
        with pytest.raises(DomainError):
            CornerSpec("X", isq_scale={"a": 0.0})


class TestMonteCarlo:
    def test_zero_avt(self):
        p = replace(LVT_P, a_vt=0.0)
        rep = monte_carlo(ptat(p), 50, seed=1)
        assert rep.sigma == 0.0 and rep.sigma_over_mu == 0.0 and rep.predicted == 0.0

    def test_deterministic(self):
        a = monte_carlo(ptat(), 200, seed=3)
        b = monte_carlo(ptat(), 200, seed=3)
        assert a == b
        assert a != monte_carlo(ptat(), 200, seed=4)

    def test_order_independent(self):
        full = monte_carlo(ptat(), 300, seed=5)
        head = monte_carlo(ptat(), 100, seed=5)
        assert np.array_equal(full.samples[:100], head.samples)

    def test_mean_converges(self):
        r = ptat()
        rep = monte_carlo(r, 2000, seed=11)
        nominal = ptat_iref(r, T0).i_ref
        assert abs(rep.mean - nominal) < 3 * rep.sigma / math.sqrt(rep.n_samples)

    def test_matches_prediction(self):
        rep = monte_carlo(ptat(), 4000, seed=2)
        assert abs(rep.sigma_over_mu - rep.predicted) < 3 * rep.standard_error

    def test_full_scope_is_wider(self):
        r = ptat()
        a = monte_carlo(r, 1000, seed=9, scope="vref")
        b = monte_carlo(r, 1000, seed=9, scope="all")
        assert b.sigma_over_mu > a.sigma_over_mu
        assert b.predicted == a.predicted

    def test_cwt(self):
        r = cwt()
        rep = monte_carlo(r, 2000, seed=0)
        assert abs(rep.sigma_over_mu - rep.predicted) < 3 * rep.standard_error

    def test_supply_path(self):
        rep = monte_carlo(ptat(), 100, seed=0, vdd=1.2, scope="all")
        assert np.isfinite(rep.samples).all()

    def test_missing_avt(self):
        d = ptat(replace(LVT_P, a_vt=None))
        with pytest.raises(ConfigurationError):
            monte_carlo(d, 10, seed=0)
        with pytest.raises(ConfigurationError):
            require_mismatch_data(d)

    @pytest.mark.parametrize("kw", [dict(n_samples=1), dict(scope="global")])
    def test_bad_arguments(self, kw):
        args = dict(n_samples=10, seed=0) | kw
        with pytest.raises(DomainError):
            monte_carlo(ptat(), **args)


def test_skew_helper_only_touches_m1():
    r = cwt()
    s = skew_m1(r)
    assert s.vref.m2 == r.vref.m2
    assert s.vref.m1.params.v_t0_ref == pytest.approx(r.vref.m1.params.v_t0_ref + 0.03)
    assert isinstance(s, CwtReference) and isinstance(s.vref.m1, Device)
