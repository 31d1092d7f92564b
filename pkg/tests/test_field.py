"""Kernels, Levy measures, and stochastic integrals against the field."""

import numpy as np
import pytest

from densitylab.field import build_increment_plan, gaussian_increment, gaussian_increment_curve
from densitylab.kernels import (DiracKernel, FractionalKernel, KernelError, RieszKernel,
                                TabulatedKernel, cholesky_with_jitter, kernel_matrix)
from densitylab.measures import (ExponentialJumpMeasure, PointMassMeasure, TabulatedMeasure,
                                 ZeroMeasure, compensated_integral, sample_jumps)
from densitylab.rng import PathStreams, stream


# ---------------------------------------------------------------- kernels

def test_dirac_kernel_matrix_is_white_noise():
    mat = kernel_matrix(DiracKernel(c0=1.0), np.array([0.0]), np.array([1.0]))
    assert mat.shape == (1, 1)
    assert mat[0, 0] == 1.0


def test_riesz_kernel_matrix_symmetric_psd():
    kern = RieszKernel(alpha=0.5, cutoff=0.05, d=1)
    nodes = np.array([-1.0, 0.0, 1.0])
    weights = np.full(3, 2.0 / 3.0)
    mat = kernel_matrix(kern, nodes, weights)
    assert np.array_equal(mat, mat.T)
    jitter = 1e-10 * mat.diagonal().max()
    eig = np.linalg.eigvalsh(mat + jitter * np.eye(3))
    assert eig.min() >= -1e-10


def test_tabulated_zero_kernel_gives_zero_matrix():
    kern = TabulatedKernel(xi=(-1.0, 0.0, 1.0), values=(0.0, 0.0, 0.0))
    mat = kernel_matrix(kern, np.array([-0.5, 0.5]), np.array([1.0, 1.0]))
    assert np.all(mat == 0.0)


def test_tabulated_kernel_rejects_asymmetric_density():
    with pytest.raises(ValueError, match="c\\(xi\\) = c\\(-xi\\)"):
        TabulatedKernel(xi=(-1.0, 0.0, 1.0), values=(0.1, 1.0, 0.2))


def test_fractional_kernel_density_value():
    kern = FractionalKernel(h=0.75, cutoff=1e-4)
    x = np.array([2.0])
    expected = 0.75 * 0.5 * 2.0 ** (2 * 0.75 - 2.0)
    assert np.allclose(kern.density(x), expected)


def test_cholesky_jitter_rejects_indefinite():
    with pytest.raises(KernelError, match="not admissible"):
        cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))


# ------------------------------------------------------ gaussian increments

def test_gaussian_increment_zero_integrand():
    plan = build_increment_plan(DiracKernel(c0=1.0), dt=0.01)
    rng = stream(1, 0, 0)
    assert gaussian_increment(plan, lambda x: 0.0 * x, rng) == 0.0


def test_gaussian_increment_variance_matches_dt():
    # Dirac kernel, d = 0, h = 1: increments are N(0, dt).
    plan = build_increment_plan(DiracKernel(c0=1.0), dt=0.01)
    rng = stream(7, 0, 0)
    n = 100_000
    z = rng.standard_normal(n)
    samples = np.sqrt(plan.time_step) * plan.kernel_cholesky[0, 0] * z
    var = samples.var(ddof=1)
    se = var * np.sqrt(2.0 / (n - 1))
    assert abs(var - 0.01) < 3 * se


def test_gaussian_increment_scaling_linearity():
    plan = build_increment_plan(DiracKernel(c0=1.0), dt=0.25)
    s1 = gaussian_increment(plan, lambda x: np.ones_like(x), stream(3, 5, 0))
    s2 = gaussian_increment(plan, lambda x: 2.0 * np.ones_like(x), stream(3, 5, 0))
    assert s2 == 2.0 * s1  # identical stream, 4x the per-draw variance


def test_gaussian_increment_isometry_riesz():
    kern = RieszKernel(alpha=0.5, cutoff=0.05, d=1)
    nodes = np.linspace(-1.0, 1.0, 9)
    weights = np.full(9, 0.25)
    plan = build_increment_plan(kern, dt=0.04, nodes=nodes, weights=weights)
    h = np.exp(-nodes ** 2)
    quad_form = h @ kernel_matrix(kern, nodes, weights) @ h
    n = 100_000
    z = stream(11, 0, 0).standard_normal((n, 9))
    samples = np.sqrt(plan.time_step) * z @ (plan.kernel_cholesky.T @ h)
    var = samples.var(ddof=1)
    target = plan.time_step * quad_form
    se = var * np.sqrt(2.0 / (n - 1))
    assert abs(var - target) < 3 * se


def test_gaussian_increment_curve_shares_one_draw():
    plan = build_increment_plan(DiracKernel(c0=1.0), dt=0.01)
    z = np.array([1.3])
    out = gaussian_increment_curve(plan, np.array([[1.0], [2.0], [0.0]]), z)
    assert out[1] == 2.0 * out[0]
    assert out[2] == 0.0


# ----------------------------------------------------------------- jumps

def test_sample_jumps_poisson_mean():
    meas = ExponentialJumpMeasure(zeta=10.0, varpi=1e-3)
    streams = PathStreams(21, 0)
    n = 100_000
    counts = streams.poisson_count.poisson(meas.total_mass * 0.01, size=n)
    se = counts.std(ddof=1) / np.sqrt(n)
    assert abs(counts.mean() - 0.1) < 3 * se


def test_sample_jumps_zero_window():
    meas = ExponentialJumpMeasure(zeta=10.0, varpi=1e-3)
    times, marks = sample_jumps(meas, 0.0, 0.0, PathStreams(1, 2))
    assert times.size == 0 and marks.size == 0


def test_sample_jumps_mark_mean_and_window():
    # marks are exponential with mean varpi, times fall inside the window
    meas = ExponentialJumpMeasure(zeta=2000.0, varpi=1e-3)
    times, marks = sample_jumps(meas, 1.0, 0.05, PathStreams(5, 0))
    assert marks.size > 50
    se = marks.std(ddof=1) / np.sqrt(marks.size)
    assert abs(marks.mean() - 1e-3) < 3 * se
    assert np.all((times > 1.0) & (times <= 1.05))


def test_compensated_integral_pure_compensator():
    meas = ExponentialJumpMeasure(zeta=10.0, varpi=1e-3)
    out = compensated_integral(np.zeros(0), lambda x: np.ones_like(x), meas, dt=0.01)
    assert out == pytest.approx(-0.1, abs=1e-12)


def test_compensated_integral_zero_integrand():
    meas = ExponentialJumpMeasure(zeta=10.0, varpi=1e-3)
    marks = np.array([1e-3, 2e-3])
    assert compensated_integral(marks, lambda x: 0.0 * x, meas, dt=0.01) == 0.0


@pytest.mark.parametrize("g,name", [(lambda x: np.ones_like(x), "1"),
                                    (lambda x: x, "xi"),
                                    (lambda x: x ** 2, "xi^2")])
def test_compensated_integral_martingale_mean(g, name):
    # sample mean over >= 1e5 independent windows within 3 SE of zero
    meas = ExponentialJumpMeasure(zeta=10.0, varpi=1e-3)
    n, dt = 100_000, 0.01
    streams = PathStreams(int(1e6) + hash(name) % 1000, 0)
    counts = streams.poisson_count.poisson(meas.total_mass * dt, size=n)
    marks = meas.sample_marks(int(counts.sum()), streams.poisson_marks)
    idx = np.repeat(np.arange(n), counts)
    sums = np.bincount(idx, weights=g(marks), minlength=n)
    comp = dt * meas.integral(g)
    vals = sums - comp
    # spot-check equivalence with the scalar operation on the first windows
    off = np.concatenate([[0], np.cumsum(counts)])
    for i in range(5):
        assert vals[i] == pytest.approx(
            compensated_integral(marks[off[i]:off[i + 1]], g, meas, dt), rel=1e-12, abs=1e-15)
    se = vals.std(ddof=1) / np.sqrt(n)
    assert abs(vals.mean()) < 3 * se


def test_exponential_measure_closed_forms_match_quadrature():
    meas = ExponentialJumpMeasure(zeta=10.0, varpi=1e-3)
    for c in (0.0, 0.3, 5.0, 40.0):
        quad = meas.integral(lambda x: 1.0 - np.exp(-c * x))
        assert meas.one_minus_exp(c) == pytest.approx(quad, rel=1e-8, abs=1e-12)
        quad2 = meas.integral(lambda x: x * np.exp(-c * x))
        assert meas.xi_exp(c) == pytest.approx(quad2, rel=1e-8, abs=1e-12)
    assert meas.mark_moment(2) == pytest.approx(meas.integral(lambda x: x ** 2), rel=1e-10)


def test_point_mass_and_tabulated_measures():
    pm = PointMassMeasure(z=3.0, location=1.0)
    assert pm.total_mass == 3.0
    assert pm.one_minus_exp(np.log(2.0)) == pytest.approx(1.5)
    tab = TabulatedMeasure(nodes=(0.5, 1.5), weights=(1.0, 2.0))
    assert tab.total_mass == 3.0
    assert tab.mark_moment(1) == pytest.approx(0.5 + 3.0)
    zero = ZeroMeasure()
    assert sample_jumps(zero, 0.0, 1.0, PathStreams(0, 0))[1].size == 0


def test_measure_validation():
    with pytest.raises(ValueError, match="positive real"):
        ExponentialJumpMeasure(zeta=-1.0, varpi=1e-3)
    with pytest.raises(ValueError, match="positive real"):
        ExponentialJumpMeasure(zeta=10.0, varpi=0.0)


# ------------------------------------------------------------- determinism

def test_streams_bit_identical_across_order():
    a = PathStreams(99, 4).gaussian.standard_normal(8)
    # interleave other paths before replaying path 4
    PathStreams(99, 2).gaussian.standard_normal(3)
    b = PathStreams(99, 4).gaussian.standard_normal(8)
    assert np.array_equal(a, b)


def test_channels_are_distinct():
    s = PathStreams(1, 1)
    a = s.gaussian.standard_normal(4)
    b = s.poisson_marks.standard_normal(4)
    assert not np.array_equal(a, b)


def test_riesz_default_cutoff_is_half_node_spacing():
    kern = RieszKernel(alpha=0.5, d=1)          # cutoff deferred to the rule
    nodes = np.array([-0.5, 0.0, 0.5])
    weights = np.ones(3)
    mat = kernel_matrix(kern, nodes, weights)
    assert mat[0, 0] == pytest.approx(0.25 ** -0.5)   # c(0) at cutoff h/2 = 0.25
    assert mat[0, 1] == pytest.approx(0.5 ** -0.5)
    with pytest.raises(ValueError, match="cutoff"):
        kern.density(np.array([0.0]))
