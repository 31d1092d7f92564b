"""Price kernels and defaultable zero-coupon bond prices."""

import numpy as np
import pytest

from densitylab.kernels import DiracKernel
from densitylab.measures import ZeroMeasure
from densitylab.pide import PricingKernelSolver, StateGrid
from densitylab.pricing import (Alive, Defaulted, DegenerateSurvivalError,
                                DeterministicRecovery, IntensityLinkedRecovery,
                                KernelUndefinedError, density_integral, kernel_K1, kernel_K2,
                                price_defaultable_zcb, price_pre_default_independent)
from densitylab.rates import VasicekSpec, constant_rate_discount
from densitylab.term_structure import CoefficientSpec, DensityCurveState, initial_density_state

LAM = 0.1
R_CONST = 0.05
BASELINE_PRICE = 0.946770056608465   # e^{-0.025} (1 - 0.6 (e^{-0.05}-e^{-0.1}) / e^{-0.05})


def det_state(t: float, theta_max: float = 100.0, dtheta: float = 0.01) -> DensityCurveState:
    """Curves frozen at their initial values (zero-noise dynamics)."""
    spec = CoefficientSpec.section7(sigma=0.0, b=0.0, lambda_bar=LAM)
    grid = np.arange(0.0, theta_max + 1e-12, dtheta)
    state = initial_density_state(spec, grid)
    return DensityCurveState(t, grid, state.alpha, state.survival)


def zero_noise_solver(T: float = 1.0) -> PricingKernelSolver:
    ms = CoefficientSpec.section7(sigma=0.0, b=0.0, lambda_bar=LAM)
    rs = VasicekSpec(kappa=1.0, delta=R_CONST, r0=R_CONST, rho0=0.0)
    grid = StateGrid(0.0, 0.1, 41, 0.0, 0.3, 61)
    return PricingKernelSolver(ms, rs, DiracKernel(), ZeroMeasure(), grid, T=T, n_steps=100)


# ----------------------------------------------------------------- kernels

def test_kernel_k1_independent_closed_form():
    t, T = 0.5, 1.0
    state = det_state(t)
    disc = constant_rate_discount(R_CONST, t, T)
    for theta in (0.6, 1.0, 2.0):
        expected = LAM * np.exp(-LAM * theta) * disc / np.exp(-LAM * t)
        assert kernel_K1(t, theta, state, disc) == pytest.approx(expected, rel=1e-6)


def test_kernel_k1_at_maturity():
    state = det_state(1.0)
    k1 = kernel_K1(1.0, 1.5, state, discount=1.0)
    assert k1 == pytest.approx(LAM * np.exp(-LAM * 1.5) / np.exp(-LAM * 1.0), rel=1e-6)


def test_kernel_k1_regime_consistency():
    t, T = 0.5, 1.0
    state = det_state(t)
    disc = constant_rate_discount(R_CONST, t, T)
    solver = zero_noise_solver(T)
    for theta in (1.0, 2.0):
        indep = kernel_K1(t, theta, state, disc)
        corr = kernel_K1(t, theta, state, disc, regime="correlated",
                         r_t=R_CONST, solver=solver)
        assert corr == pytest.approx(indep, rel=1e-6)


def test_kernel_k2_independent_deterministic():
    state = det_state(0.5)
    disc = constant_rate_discount(0.05, 0.5, 1.0)
    k2 = kernel_K2(0.5, 0.7, state, DeterministicRecovery(0.4), disc)
    assert k2 == pytest.approx(0.39012396481133305, abs=1e-12)


def test_kernel_k2_intensity_linked_w1_zero_reduces():
    t = 0.5
    state = det_state(t)
    disc = constant_rate_discount(R_CONST, t, 1.0)
    solver = zero_noise_solver(1.0)
    det = kernel_K2(t, 1.0, state, DeterministicRecovery(0.3), disc,
                    regime="correlated", r_t=R_CONST, solver=solver)
    linked = kernel_K2(t, 1.0, state, IntensityLinkedRecovery(w0=0.3, w1=0.0), disc,
                       regime="correlated", r_t=R_CONST, solver=solver)
    assert linked == pytest.approx(det, rel=1e-12)


def test_kernel_k2_intensity_linked_zero_noise_closed_form():
    t, T = 0.5, 1.0
    state = det_state(t)
    disc = constant_rate_discount(R_CONST, t, T)
    solver = zero_noise_solver(T)
    rec = IntensityLinkedRecovery(w0=0.2, w1=0.5, f=lambda y: y)
    k2 = kernel_K2(t, 1.0, state, rec, disc, regime="correlated",
                   r_t=R_CONST, solver=solver)
    expected = np.exp(-R_CONST * (T - t)) * (0.2 + 0.5 * np.exp(-LAM))
    assert k2 == pytest.approx(expected, rel=1e-4)


def test_kernel_k2_rejects_nonpositive_intensity():
    grid = np.linspace(0.0, 10.0, 1001)
    state = DensityCurveState(0.5, grid, np.zeros_like(grid), np.ones_like(grid))
    solver = zero_noise_solver(1.0)
    with pytest.raises(KernelUndefinedError, match="nonpositive intensity"):
        kernel_K2(0.5, 1.0, state, DeterministicRecovery(0.4), 0.97,
                  regime="correlated", r_t=R_CONST, solver=solver)


def test_kernel_k1_degenerate_survival():
    grid = np.linspace(0.0, 10.0, 1001)
    state = DensityCurveState(0.5, grid, np.zeros_like(grid), np.zeros_like(grid))
    with pytest.raises(DegenerateSurvivalError):
        kernel_K1(0.5, 1.0, state, 0.97)


# ------------------------------------------------------------- bond prices

def test_pre_default_price_baseline():
    state = det_state(0.5)
    price = price_pre_default_independent(0.5, 1.0, state, 0.4, 0.05)
    assert price == pytest.approx(BASELINE_PRICE, abs=1e-6)


def test_pre_default_price_full_recovery_is_riskfree():
    state = det_state(0.5)
    price = price_pre_default_independent(0.5, 1.0, state, 1.0, 0.05)
    assert price == pytest.approx(constant_rate_discount(0.05, 0.5, 1.0), abs=1e-12)


def test_pre_default_price_bounds_and_monotonicity():
    state = det_state(0.5)
    disc = constant_rate_discount(0.05, 0.5, 1.0)
    last = -np.inf
    for r_rate in (0.0, 0.2, 0.4, 0.8, 1.0):
        p = price_pre_default_independent(0.5, 1.0, state, r_rate, 0.05)
        assert r_rate * disc - 1e-12 <= p <= disc + 1e-12
        assert p >= last
        last = p


def test_price_defaultable_zcb_alive_matches_closed_form():
    state = det_state(0.5)
    disc = constant_rate_discount(0.05, 0.5, 1.0)
    out = price_defaultable_zcb(0.5, 1.0, Alive(0.5), state,
                                DeterministicRecovery(0.4), disc)
    assert out["price"] == pytest.approx(BASELINE_PRICE, abs=1e-6)
    assert out["tail_correction"] > 0.0


def test_price_defaultable_zcb_defaulted_recovery_of_face():
    state = det_state(0.5)
    disc = constant_rate_discount(0.05, 0.5, 1.0)
    out = price_defaultable_zcb(0.5, 1.0, Defaulted(0.3), state,
                                DeterministicRecovery(0.4), disc)
    assert out["price"] == pytest.approx(0.4 * disc, abs=1e-12)
    assert out["price"] / disc == pytest.approx(0.4, abs=1e-12)


def test_price_defaultable_zcb_full_recovery_any_status():
    state = det_state(0.5)
    disc = constant_rate_discount(0.05, 0.5, 1.0)
    alive = price_defaultable_zcb(0.5, 1.0, Alive(0.5), state,
                                  DeterministicRecovery(1.0), disc)["price"]
    dead = price_defaultable_zcb(0.5, 1.0, Defaulted(0.2), state,
                                 DeterministicRecovery(1.0), disc)["price"]
    assert alive == pytest.approx(disc, rel=1e-6)
    assert dead == pytest.approx(disc, abs=1e-12)


def test_price_regime_consistency_zero_noise():
    # correlated machinery with all noise loadings zero matches the
    # independent closed form to 1e-6
    t, T = 0.5, 1.0
    state = det_state(t)
    disc = constant_rate_discount(R_CONST, t, T)
    solver = zero_noise_solver(T)
    indep = price_defaultable_zcb(t, T, Alive(t), state,
                                  DeterministicRecovery(0.4), disc)["price"]
    corr = price_defaultable_zcb(t, T, Alive(t), state, DeterministicRecovery(0.4),
                                 disc, regime="correlated", r_t=R_CONST,
                                 solver=solver, theta_stride=500)["price"]
    assert corr == pytest.approx(indep, abs=1e-6)


def test_defaulted_after_t_rejected():
    state = det_state(0.5)
    with pytest.raises(ValueError, match="tau <= t"):
        price_defaultable_zcb(0.5, 1.0, Defaulted(0.7), state,
                              DeterministicRecovery(0.4), 0.97)


def test_recovery_validation():
    with pytest.raises(ValueError, match="w0\\+w1"):
        IntensityLinkedRecovery(w0=0.7, w1=0.5)
    with pytest.raises(ValueError, match="\\[0, 1\\]"):
        DeterministicRecovery(1.2)


def test_density_integral_tail_reporting():
    state = det_state(0.5)
    full, tail = density_integral(state, 0.5, None)
    assert tail == pytest.approx(np.exp(-LAM * 100.0), rel=1e-9)
    assert full == pytest.approx(np.exp(-LAM * 0.5), rel=1e-7)
