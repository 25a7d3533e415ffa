import math

import numpy as np
import pytest

from src.constants import BF_ALPHA_REF, BF_BETA_REF, BF_RHO_REF, MIN_EXCURSION_STEPS
from src.limits import (
    bf_ode_solve,
    bsr_ode_estimate,
    cm_drift_fields,
    cm_entrance_time,
    cm_limit_eval,
    cm_near_critical_limits,
    irg_bp_expectations,
    irg_constants,
    mult_coalescent,
    normalize_kernel,
    poisson_degree_pmf,
    rk4_integrate,
    sample_parabolic_excursions,
    sample_parabolic_path,
)
from src.models import BSRRule, CMLimitParams, Kernel
from src.samplers import replica_rng


@pytest.fixture(scope="module")
def bf_solution():
    return bf_ode_solve(t_grid=[0.0, 0.3, 0.6, 0.85])


def cubic():
    return CMLimitParams.from_pmf([0, 0, 0, 1])


def test_cm_params_of_cubic_graph():
    params = cubic()
    assert (params.mu, params.nu, params.beta) == (3.0, 2.0, 6.0)
    assert params.t_c == pytest.approx(0.5 * math.log(2))


def test_cm_params_need_supercritical_law():
    with pytest.raises(ValueError):
        CMLimitParams.from_pmf([0, 1])


def test_cm_limits_at_time_zero_are_degree_moments():
    values = cm_limit_eval(0.0, cubic())
    assert values.s1 == pytest.approx(3)
    assert values.s2 == pytest.approx(9)
    assert values.s3 == pytest.approx(27)
    assert values.g == pytest.approx(3)
    assert values.D == 0
    assert values.s2_star == pytest.approx(1)


def test_cm_limit_eval_outside_subcritical_range():
    params = cubic()
    with pytest.raises(ValueError):
        cm_limit_eval(params.t_c, params)
    with pytest.raises(ValueError):
        cm_limit_eval(-0.1, params)


def _drifts_at(t, params):
    v = cm_limit_eval(t, params)
    return cm_drift_fields(v.s1, v.s2, v.s3, v.g, v.D, v.y, v.v)


@pytest.mark.parametrize("pmf", [[0, 0, 0, 1], poisson_degree_pmf(2.5, min_degree=1)])
@pytest.mark.parametrize("fraction", [0.1, 0.5, 0.9])
def test_cm_closed_forms_solve_their_drift_equations(pmf, fraction):
    params = CMLimitParams.from_pmf(pmf)
    t, h = fraction * params.t_c, 1e-6
    before, after = cm_limit_eval(t - h, params), cm_limit_eval(t + h, params)
    drifts = _drifts_at(t, params)
    pairs = {
        "F2_s": "s2", "F3_s": "s3", "F_g": "g", "F_d": "D",
        "F2_star": "s2_star", "F_y": "y", "F_v": "v",
    }
    for field, attr in pairs.items():
        numeric = (getattr(after, attr) - getattr(before, attr)) / (2 * h)
        assert drifts[field] == pytest.approx(numeric, rel=1e-6, abs=1e-9), field


def test_cm_ratios_near_critical_time():
    params = CMLimitParams.from_pmf(poisson_degree_pmf(2.0, min_degree=1))
    gap = 1e-6
    values = cm_limit_eval(params.t_c - gap, params)
    target = cm_near_critical_limits(params)
    assert values.y / gap == pytest.approx(target["y_slope"], rel=1e-4)
    assert values.z == pytest.approx(target["z"], rel=1e-4)
    assert values.u == pytest.approx(target["u"], rel=1e-4)
    assert values.v == pytest.approx(target["v"], rel=1e-4)


def test_cm_entrance_time_approaches_t_c():
    params = cubic()
    times = [cm_entrance_time(params, n) for n in (10 ** 3, 10 ** 6, 10 ** 9)]
    assert all(t < params.t_c for t in times)
    assert times == sorted(times)


def test_poisson_degree_pmf_conditioning():
    pmf = poisson_degree_pmf(1.5, min_degree=2)
    assert pmf.sum() == pytest.approx(1.0)
    assert pmf[:2].tolist() == [0.0, 0.0]


def test_rk4_exponential_decay():
    s = rk4_integrate(lambda t, s: -s, [1.0, 2.0], 0.0, 1.0)
    assert s == pytest.approx([math.exp(-1), 2 * math.exp(-1)], rel=1e-8)


def test_rk4_harmonic_oscillator():
    s = rk4_integrate(lambda t, s: np.array([s[1], -s[0]]), [0.0, 1.0], 0.0, math.pi / 2)
    assert s == pytest.approx([1.0, 0.0], abs=1e-8)


def test_bf_constants(bf_solution):
    assert 1.1 < bf_solution.t_c < 1.25
    assert bf_solution.t_c_bracket < 1e-9
    assert bf_solution.alpha == pytest.approx(BF_ALPHA_REF, abs=0.010)
    assert bf_solution.beta == pytest.approx(BF_BETA_REF, abs=0.010)
    assert bf_solution.rho == pytest.approx(BF_RHO_REF, abs=0.010)


def test_bf_trajectories(bf_solution):
    assert bf_solution.x[0] == 1 and bf_solution.s2[0] == 1
    assert np.all(np.diff(bf_solution.x) < 0)
    assert np.all(np.diff(bf_solution.s2) > 0)
    assert np.all(bf_solution.s3 >= bf_solution.s2)


def test_bf_constants_stable_under_step_halving():
    coarse = bf_ode_solve(dt=1e-2)
    fine = bf_ode_solve(dt=5e-3)
    assert abs(coarse.alpha - fine.alpha) < 1e-4
    assert abs(coarse.beta - fine.beta) < 1e-4
    assert abs(coarse.rho - fine.rho) < 1e-4
    assert coarse.t_c == pytest.approx(fine.t_c, abs=1e-8)
    with pytest.raises(ValueError):
        bf_ode_solve(dt=0.0)


def test_bf_grid_past_t_c(bf_solution):
    with pytest.raises(ValueError):
        bf_ode_solve(t_grid=[0.0, 2.0])


def test_bf_unknown_v_form():
    with pytest.raises(ValueError):
        bf_ode_solve(v_form="other")


def test_empty_rule_reduces_to_erdos_renyi():
    est = bsr_ode_estimate(BSRRule.from_patterns(0, []))
    assert est.t_c == pytest.approx(1.0, abs=1e-8)
    assert est.alpha == pytest.approx(1.0, abs=1e-8)
    assert est.beta == pytest.approx(1.0, abs=1e-8)
    assert est.estimate


def test_bsr_estimate_matches_bohman_frieze(bf_solution):
    est = bsr_ode_estimate(BSRRule.bohman_frieze())
    assert est.t_c == pytest.approx(bf_solution.t_c, rel=1e-4)
    assert est.alpha == pytest.approx(bf_solution.alpha, rel=1e-3)
    assert est.beta == pytest.approx(bf_solution.beta, rel=1e-3)


def test_irg_constants_of_symmetric_two_type_kernel():
    consts = irg_constants(Kernel(kappa=[[1.5, 0.5], [0.5, 1.5]], mu=[0.5, 0.5]))
    assert consts.critical
    assert consts.rho == pytest.approx(1.0)
    assert consts.u == pytest.approx([0.5, 0.5])
    assert consts.v == pytest.approx([1.0, 1.0])
    assert consts.alpha == pytest.approx(1.0)
    assert consts.beta == pytest.approx(1.0)
    assert consts.zeta is None


def test_irg_constants_after_normalisation():
    mu = np.array([0.3, 0.7])
    kappa = normalize_kernel(np.array([[2.0, 1.0], [1.0, 0.5]]), mu)
    consts = irg_constants(Kernel(kappa=kappa, mu=mu))
    assert consts.critical
    assert consts.residual_right < 1e-9 and consts.residual_left < 1e-9
    assert consts.u.sum() == pytest.approx(1.0)
    assert float(consts.v @ consts.u) == pytest.approx(1.0)


def test_irg_zeta_from_perturbation():
    consts = irg_constants(Kernel(kappa=[[1.0]], mu=[1.0], A=[[0.4]]))
    # one type: alpha = 1, zeta = alpha * A
    assert consts.zeta == pytest.approx(0.4)


def test_irg_constants_warn_off_criticality(caplog):
    consts = irg_constants(Kernel(kappa=[[2.0]], mu=[1.0]))
    assert not consts.critical
    assert "not critical" in caplog.text


def test_irg_bp_expectations_single_type():
    n, delta = 10 ** 6, 0.18
    eps = n ** (-delta)
    out = irg_bp_expectations(Kernel(kappa=[[1.0]], mu=[1.0]), n, delta)
    assert out["ET0"] == pytest.approx(1 / eps)
    assert out["ET0_sq"] == pytest.approx(1 / eps ** 3)
    assert out["ET1"] == pytest.approx((1 - eps) / eps ** 2)


def test_irg_bp_expectations_require_subcritical():
    with pytest.raises(ValueError):
        irg_bp_expectations(Kernel(kappa=[[1.0]], mu=[1.0], A=[[5.0]]), 8, 0.18)


def test_parabolic_path_reflection():
    path = sample_parabolic_path(0.5, replica_rng(1), horizon=2.0, dt=1e-3)
    assert len(path.w) == 2001
    assert path.w[0] == 0
    assert path.w_reflected.min() == 0
    assert np.all(path.w_reflected >= 0)


def test_parabolic_path_rejects_bad_grid():
    with pytest.raises(ValueError):
        sample_parabolic_path(0.0, replica_rng(0), horizon=-1.0)


def test_parabolic_excursions():
    dt = 1e-3
    exc = sample_parabolic_excursions(1.0, replica_rng(2), horizon=8.0, dt=dt, keep_path=True)
    assert np.all(np.diff(exc.lengths) <= 0)
    assert np.all(exc.lengths >= MIN_EXCURSION_STEPS * dt - 1e-12)
    assert exc.lengths.sum() <= 8.0 + 1e-9
    assert np.all(exc.areas > 0)
    assert exc.path is not None


def test_coalescent_conserves_mass():
    masses = [0.5, 0.4, 0.3, 0.2, 0.1]
    state = mult_coalescent(masses, 3.0, replica_rng(3))
    assert state.masses.sum() == pytest.approx(sum(masses))
    assert len(state.masses) == len(masses) - state.merges
    assert np.all(np.diff(state.masses) <= 0)


def test_coalescent_zero_duration_and_long_run():
    masses = [1.0, 2.0, 3.0]
    assert mult_coalescent(masses, 0.0, replica_rng(4)).masses.tolist() == [3.0, 2.0, 1.0]
    state = mult_coalescent(masses, 1e6, replica_rng(5))
    assert state.masses.tolist() == [6.0]
    assert state.merges == 2


def test_coalescent_first_merge_law():
    rng = replica_rng(6)
    outcomes = []
    for _ in range(20_000):
        state = mult_coalescent([3.0, 2.0, 1.0], 0.01, rng)
        if state.merges == 1:
            outcomes.append(tuple(state.masses.tolist()))
    freq = {k: outcomes.count(k) / len(outcomes) for k in set(outcomes)}
    # pairs merge with probability proportional to x_i x_j: 6, 3, 2
    assert freq.get((5.0, 1.0), 0.0) == pytest.approx(6 / 11, abs=0.05)
    assert freq.get((4.0, 2.0), 0.0) == pytest.approx(3 / 11, abs=0.05)
    assert freq.get((3.0, 3.0), 0.0) == pytest.approx(2 / 11, abs=0.05)


def test_coalescent_with_one_dominant_block():
    masses = [1e8] + [1e-4] * 20
    state = mult_coalescent(masses, 1.0, replica_rng(7))
    assert state.merges == 20
    assert state.masses.tolist() == pytest.approx([1e8 + 20e-4])


def test_coalescent_rejects_bad_input():
    with pytest.raises(ValueError):
        mult_coalescent([1.0, 0.0], 1.0, replica_rng(0))
    with pytest.raises(ValueError):
        mult_coalescent([1.0], -1.0, replica_rng(0))
