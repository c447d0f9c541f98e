import math
from dataclasses import replace

import numpy as np
import pytest

from builders import CAL, LVT_N, LVT_P, RPP1, RVT_P, cwt, ptat
from twotref.analysis import box_tc, sweep
from twotref.device_models import K_OVER_Q, Geometry, ResistorParams, resistance, thermal_voltage
from twotref.errors import DomainError, NumericError
from twotref.reference_circuits import (
    CalibrationConfig,
    CwtReference,
    Device,
    TwoTVref,
    branch_current_2t,
    cwt_diref_dt,
    cwt_iref,
    cwt_optimal_ratio,
    iref_sensitivity,
    ls_enhanced,
    propagate_ls_and_mismatch,
    ptat_iref,
    ptat_iref_from_vref,
    scm_aspect_ratio_constraint,
    scm_full_solve,
    scm_vref_over_nut,
    sensitivity_ptat,
    sigma_vref,
    solve_scm,
    vdd_min,
    vref_2t,
    vref_2t_supply,
    vref_line_sensitivity,
)

T0 = 298.15
UT0 = thermal_voltage(T0)


def pair(p1=LVT_P, p2=LVT_P, s1=1.0, s2=8.0, l=20.0):
    return TwoTVref(Device(p1, Geometry(s1 * l, l)), Device(p2, Geometry(s2 * l, l)))


def spread(x, y):
    y = np.asarray(y)
    return np.ptp(y) / (np.mean(y) * np.ptp(x))


class TestVref2T:
    def test_ptat_value(self):
        assert vref_2t(pair(), T0) == pytest.approx(60.9e-3, abs=0.05e-3)
        assert vref_2t(pair(), T0) == pytest.approx(1.14 * UT0 * math.log(8), rel=1e-14)

    def test_equal_sizes_give_zero(self):
        assert vref_2t(pair(s2=1.0), T0) == 0.0

    def test_mixed_flavours(self):
        v = pair(RVT_P, LVT_P, s1=1.0, s2=0.56)
        want = (1.41 * UT0 * math.log(0.56 * 23.98 / 29.26)
                + (1.14 * 0.749 - 1.41 * 0.383) / 1.14)
        assert vref_2t(v, T0) == pytest.approx(want, rel=1e-12)

    def test_ptat_over_ut_is_constant(self):
        v = pair()
        r = [vref_2t(v, t) / thermal_voltage(t) for t in (233.15, 298.15, 398.15)]
        assert np.ptp(r) < 1e-12

    def test_supply_solution_approaches_closed_form(self):
        ideal = replace(LVT_P, v_ea_per_um=math.inf)
        v = pair(ideal, ideal)
        got = vref_2t_supply(v, T0, 1.8, v_buffer=0.4)
        assert got == pytest.approx(vref_2t(v, T0), abs=1e-9)

    def test_supply_without_headroom(self):
        with pytest.raises(DomainError):
            vref_2t_supply(pair(), T0, 0.0, v_buffer=0.3)

    def test_unknown_stack(self):
        with pytest.raises(DomainError):
            replace(pair(), stack="tower")


class TestLineSensitivity:
    def test_deck_value(self):
        v = ptat().vref
        assert vref_line_sensitivity(v, T0) * 1e3 == pytest.approx(0.37, abs=0.005)

    def test_ideal_source(self):
        p = replace(LVT_P, v_ea_per_um=math.inf)
        assert vref_line_sensitivity(pair(p, p), T0) == 0.0

    def test_longer_m2_halves(self):
        v = pair()
        g = v.m2.geom
        longer = replace(v, m2=Device(LVT_P, replace(g, w=2 * g.w, l=2 * g.l)))
        assert vref_line_sensitivity(longer, T0) == pytest.approx(
            vref_line_sensitivity(v, T0) / 2, rel=1e-12)

    def test_matches_supply_sweep(self):
        v = ptat().vref
        h = 0.01
        # a buffer drop keeps M1 out of triode, where the small-signal model applies
        fd = (vref_2t_supply(v, T0, 1.2 + h, 0.35) - vref_2t_supply(v, T0, 1.2 - h, 0.35)) / (2 * h)
        assert fd == pytest.approx(vref_line_sensitivity(v, T0), rel=0.02)


class TestLsEnhanced:
    G = dict(g_m1=1e-9, g_d1=1e-12, g_d2=[3e-12, 3e-12, 3e-12], g_mb2=[2e-10, 2e-10, 2e-10])

    def test_single_stack_degenerates(self):
        v = pair()
        stacked = replace(v, stack="stacked", stack_count=1)
        assert vref_line_sensitivity(stacked, T0) == vref_line_sensitivity(v, T0)

    def test_stacked_halves(self):
        one = ls_enhanced("stacked", 1, **self.G)
        assert ls_enhanced("stacked", 2, **self.G) == pytest.approx(one / 2, rel=1e-15)
        assert ls_enhanced("stacked", 3, **self.G) == pytest.approx(one / 3, rel=1e-15)

    def test_sbb_equals_hybrid_for_two(self):
        assert ls_enhanced("sbb", 2, **self.G) == ls_enhanced("hybrid", 2, **self.G)

    def test_sbb_two_device_formula(self):
        g = self.G
        want = (g["g_d2"][0] / (g["g_m1"] + g["g_d1"])
                * g["g_d2"][1] / (g["g_mb2"][1] + g["g_d2"][0] + g["g_d2"][1]))
        assert ls_enhanced("sbb", 2, **g) == pytest.approx(want, rel=1e-15)

    def test_three_devices_improve(self):
        assert ls_enhanced("sbb", 3, **self.G) < ls_enhanced("sbb", 2, **self.G)

    def test_unsupported_count(self):
        with pytest.raises(DomainError):
            ls_enhanced("stacked", 4, **self.G)

    def test_zero_gm(self):
        with pytest.raises(NumericError):
            ls_enhanced("stacked", 2, 0.0, 1e-12, [1e-12, 1e-12])

    def test_design_level_dispatch(self):
        v = replace(pair(), stack="stacked", stack_count=2)
        assert vref_line_sensitivity(v, T0) == pytest.approx(
            vref_line_sensitivity(pair(), T0) / 2, rel=1e-14)


class TestScm:
    def test_table_point(self):
        i_f7, i_f6 = solve_scm(1.14 * UT0 * math.log(8), 3.0, 1.14, T0)
        assert i_f7 == pytest.approx(3.80, abs=0.01)
        assert i_f6 == pytest.approx(11.41, abs=0.04)

    @pytest.mark.parametrize("v_ref", [0.0, -0.01, 1.14 * UT0 * math.log(3.0)])
    def test_below_floor(self, v_ref):
        with pytest.raises(DomainError):
            solve_scm(v_ref, 3.0, 1.14, T0)

    def test_vanishing_above_floor(self):
        v = 1.14 * UT0 * (math.log(3.0) + 1e-6)
        assert solve_scm(v, 3.0, 1.14, T0)[0] < 1e-4

    @pytest.mark.parametrize("alpha", [1.0, 0.5])
    def test_alpha_domain(self, alpha):
        with pytest.raises(DomainError):
            solve_scm(0.06, alpha, 1.14, T0)

    def test_round_trip(self):
        v = scm_vref_over_nut(1.0, 2.0) * 1.14 * UT0
        assert solve_scm(v, 2.0, 1.14, T0)[0] == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("ratio", [4.0, 8.0, 16.0, 64.0])
    def test_residual(self, ratio):
        v = 1.14 * UT0 * math.log(ratio)
        i_f7, _ = solve_scm(v, 3.0, 1.14, T0)
        assert abs(scm_vref_over_nut(i_f7, 3.0) * 1.14 * UT0 - v) < 1e-12 * v

    def test_constraint(self):
        assert scm_aspect_ratio_constraint(LVT_P, LVT_P, 3.0, 2) == pytest.approx(0.75)
        assert scm_aspect_ratio_constraint(LVT_P, LVT_P, 2.0, 10 ** 9) == pytest.approx(1.0)
        p7 = replace(LVT_P, i_sq_ref=2 * LVT_P.i_sq_ref)
        assert scm_aspect_ratio_constraint(LVT_P, p7, 3.0, 2) == pytest.approx(1.5)
        with pytest.raises(DomainError):
            scm_aspect_ratio_constraint(LVT_P, LVT_P, 1.0, 2)


class TestSensitivity:
    def test_design_point_s8_alpha3(self):
        i_f7, _ = solve_scm(1.14 * UT0 * math.log(8), 3.0, 1.14, T0)
        assert sensitivity_ptat(i_f7, 3.0, 1.14, T0) * 1e-3 * 100 == pytest.approx(5.13, abs=0.01)

    def test_finite_difference_through_solver(self):
        r = ptat()
        v0 = vref_2t(r.vref, T0)
        h = 1e-6
        fd = (math.log(ptat_iref_from_vref(r, v0 + h, T0))
              - math.log(ptat_iref_from_vref(r, v0 - h, T0))) / (2 * h)
        assert iref_sensitivity(r, T0) == pytest.approx(fd, rel=1e-3)

    @pytest.mark.parametrize("i_f7", [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0])
    def test_consistent_across_inversion(self, i_f7):
        v0 = scm_vref_over_nut(i_f7, 3.0) * 1.14 * UT0
        h = 1e-6 * v0
        lo = solve_scm(v0 - h, 3.0, 1.14, T0)[0]
        hi = solve_scm(v0 + h, 3.0, 1.14, T0)[0]
        fd = (math.log(hi) - math.log(lo)) / (2 * h)
        assert sensitivity_ptat(i_f7, 3.0, 1.14, T0) == pytest.approx(fd, rel=5e-3)

    def test_decreasing_in_i_f7(self):
        s = [sensitivity_ptat(i, 3.0, 1.14, T0) for i in np.geomspace(0.1, 100, 25)]
        assert all(np.diff(s) < 0)

    def test_domain(self):
        with pytest.raises(DomainError):
            sensitivity_ptat(0.0, 3.0, 1.14, T0)

    def test_cwt_sensitivity_is_inverse_vref(self):
        r = cwt()
        assert iref_sensitivity(r, T0) == pytest.approx(1.0 / vref_2t(r.vref, T0), rel=1e-15)


class TestPtat:
    def test_target(self):
        out = ptat_iref(ptat(), T0)
        assert out.i_ref == pytest.approx(1e-10, rel=1e-9)
        assert out.v_ref == pytest.approx(60.9e-3, abs=0.05e-3)

    def test_temperature_law(self):
        r = ptat()
        i0 = ptat_iref(r, T0).i_ref
        for t in (233.15, 273.15, 358.15, 398.15):
            want = i0 * (t / T0) ** (2 - LVT_P.m_mob)
            assert ptat_iref(r, t).i_ref == pytest.approx(want, rel=1e-6)

    def test_mirror_invariance(self):
        a = ptat(n_mirror=2)
        b = ptat(n_mirror=4)
        assert b.m7.aspect == pytest.approx(2 * a.m7.aspect, rel=1e-12)
        assert ptat_iref(b, T0).i_ref == pytest.approx(ptat_iref(a, T0).i_ref, rel=1e-12)

    def test_doubling_n_at_fixed_s7(self):
        a = ptat(n_mirror=2)
        s6 = a.m7.aspect * scm_aspect_ratio_constraint(LVT_P, LVT_P, 3.0, 4)
        b = replace(a, n_mirror=4, m6=Device(LVT_P, Geometry(s6 * 500.0, 25.0, series=20)))
        assert ptat_iref(b, T0).i_ref == pytest.approx(ptat_iref(a, T0).i_ref / 2, rel=1e-12)

    def test_power_accounting(self):
        r = ptat()
        out = ptat_iref(r, T0)
        want = 1.2 * (branch_current_2t(r.vref, T0) + 3 * out.i_ref)
        assert out.power == pytest.approx(want, rel=1e-14)

    def test_constraint_violation(self):
        r = ptat()
        g = r.m6.geom
        bad = replace(r, m6=Device(LVT_P, replace(g, w=g.w * 1.06)))
        with pytest.raises(DomainError, match="S6/S7"):
            ptat_iref(bad, T0)

    def test_within_tolerance_accepted(self):
        r = ptat()
        g = r.m6.geom
        ptat_iref(replace(r, m6=Device(LVT_P, replace(g, w=g.w * 1.04))), T0)

    def test_supply_path_close_to_ideal(self):
        r = ptat()
        assert ptat_iref(r, T0, vdd=1.2).i_ref == pytest.approx(ptat_iref(r, T0).i_ref, rel=0.02)

    def test_full_solve_matches_chain(self):
        r = ptat()
        v = vref_2t(r.vref, T0)
        assert scm_full_solve(r, v, T0) == pytest.approx(ptat_iref_from_vref(r, v, T0), rel=1e-9)

    def test_full_solve_mirror_gain(self):
        r = ptat()
        v = vref_2t(r.vref, T0)
        ratio = scm_full_solve(r, v, T0, mirror_gain=1.01) / scm_full_solve(r, v, T0)
        assert abs(ratio - 1.0) > 1e-3


class TestCwt:
    def test_quotient_law(self):
        r = cwt()
        for t in (233.15, 298.15, 358.15):
            out = cwt_iref(r, t)
            assert out.i_ref * resistance(r.resistor, r.squares, t) == pytest.approx(
                vref_2t(r.vref, t), rel=1e-15)

    def test_target(self):
        assert cwt_iref(cwt(), T0).i_ref == pytest.approx(1e-6, rel=1e-12)

    def test_arithmetic(self):
        v = pair(s2=math.exp(0.295 / (1.14 * UT0)))
        r = CwtReference(v, ResistorParams("flat", 1000.0), 295.0)
        assert cwt_iref(r, T0).i_ref == pytest.approx(1e-6, rel=1e-12)

    def test_flat_resistor_tracks_vref(self):
        r = CwtReference(pair(), ResistorParams("flat", 1000.0), 100.0)
        ts = np.arange(233.15, 358.16, 5.0)
        i = [cwt_iref(r, t).i_ref for t in ts]
        v = [vref_2t(r.vref, t) for t in ts]
        assert spread(ts, i) == pytest.approx(spread(ts, v), rel=1e-12)

    def test_zero_slope_at_optimum(self):
        assert abs(cwt_diref_dt(cwt(), T0)) < 1e-15

    def test_pure_ptat_slope(self):
        r = CwtReference(pair(), ResistorParams("flat", 1000.0), 100.0)
        assert cwt_diref_dt(r, T0) == pytest.approx(1.14 * K_OVER_Q * math.log(8) / 1e5, rel=1e-12)

    @pytest.mark.parametrize("ratio", [0.3, 0.56, 0.8])
    def test_slope_finite_difference(self, ratio):
        r = cwt(ratio=ratio)
        h = 0.05
        fd = (cwt_iref(r, T0 + h).i_ref - cwt_iref(r, T0 - h).i_ref) / (2 * h)
        assert cwt_diref_dt(r, T0) == pytest.approx(fd, rel=1e-3, abs=1e-15)

    def test_optimal_degenerate_case(self):
        p1 = replace(RVT_P, alpha_vt0=LVT_P.alpha_vt0, n=LVT_P.n)
        flat = ResistorParams("flat", 1000.0)
        assert cwt_optimal_ratio(p1, LVT_P, flat, T0) == pytest.approx(29.26 / 23.98, rel=1e-14)

    def test_optimal_in_band(self):
        assert 0.28 <= cwt_optimal_ratio(RVT_P, LVT_P, RPP1, T0) <= 0.84

    def test_degenerate_tcr(self):
        with pytest.raises(DomainError):
            cwt_optimal_ratio(RVT_P, LVT_P, ResistorParams("bad", 1.0, tcr1=1 / T0), T0)

    def test_box_tc_argmin_matches_optimum(self):
        opt = cwt_optimal_ratio(RVT_P, LVT_P, RPP1, T0)
        step = 0.005
        ratios = np.arange(0.40, 0.75, step)
        tcs = []
        for k in ratios:
            s = sweep(cwt(ratio=k, periphery=False), "temperature", 273.15, 323.15, 1.0)
            tcs.append(abs(box_tc(s)))
        assert abs(ratios[int(np.argmin(tcs))] - opt) <= step


class TestPropagation:
    def test_line_sensitivity(self):
        ls, _ = propagate_ls_and_mismatch(5.14e-2 * 1e3, 0.37e-3, 0.0)
        assert ls * 100 == pytest.approx(1.90, abs=0.005)

    def test_mismatch(self):
        _, s = propagate_ls_and_mismatch(5.14e-2 * 1e3, 0.0, 0.42e-3)
        assert s * 100 == pytest.approx(2.16, abs=0.005)

    def test_zero_sigma(self):
        assert propagate_ls_and_mismatch(51.4, 0.37e-3, 0.0)[1] == 0.0

    def test_negative_sigma(self):
        with pytest.raises(DomainError):
            propagate_ls_and_mismatch(51.4, 0.37e-3, -1.0)

    def test_sigma_vref_pelgrom(self):
        v = ptat().vref
        s1 = LVT_P.a_vt / math.sqrt(v.m1.geom.area)
        s2 = LVT_P.a_vt / math.sqrt(v.m2.geom.area)
        assert sigma_vref(v) == pytest.approx(math.hypot(s1, s2), rel=1e-15)


class TestVddMin:
    def test_ptat(self):
        assert vdd_min(ptat(), T0) == pytest.approx(0.55, abs=0.1)

    def test_cwt(self):
        assert vdd_min(cwt(), T0) == pytest.approx(0.65, abs=0.1)

    def test_cwt_dominant_branch(self):
        r = cwt()
        out = cwt_iref(r, T0)
        from twotref.reference_circuits import _buffer_drop
        drops = [_buffer_drop(r.m3, out.i_ref, T0), _buffer_drop(r.m4, out.i_ref, T0)]
        assert vdd_min(r, T0) == pytest.approx(out.v_ref + max(drops) + 4 * UT0, rel=1e-12)


class TestCalibrationMap:
    def test_endpoints(self):
        assert CAL.ratio(0) == pytest.approx(0.37, rel=1e-15)
        assert CAL.ratio(15) == pytest.approx(0.83, rel=1e-15)
        assert CAL.n_codes == 16

    def test_w1_linear_in_code(self):
        w1 = [1.0 / CAL.ratio(c) for c in range(16)]
        assert np.allclose(np.diff(w1), np.diff(w1)[0], rtol=1e-12)

    @pytest.mark.parametrize("code", [-1, 16])
    def test_code_range(self, code):
        with pytest.raises(DomainError):
            CAL.ratio(code)

    @pytest.mark.parametrize("kw", [dict(bits=0), dict(ratio_min=0.9, ratio_max=0.5),
                                    dict(ratio_min=0.0)])
    def test_config_invariants(self, kw):
        with pytest.raises(DomainError):
            CalibrationConfig(**kw)

    def test_code_resizes_m1(self):
        r = cwt(calibration=CAL)
        v = r.with_code(5).effective_vref()
        assert v.ratio == pytest.approx(CAL.ratio(5), rel=1e-14)
        assert v.m2 == r.vref.m2

    def test_code_without_config(self):
        with pytest.raises(DomainError):
            cwt().with_code(3)


def test_nmos_vref_uses_same_law():
    v = pair(LVT_N, LVT_N)
    assert vref_2t(v, T0) == pytest.approx(1.21 * UT0 * math.log(8), rel=1e-14)
