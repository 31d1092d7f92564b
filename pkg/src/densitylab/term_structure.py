"""Forward default intensity and conditional default density dynamics.

The forward intensity lambda_t(theta) follows an additive HJM-type model
driven by a Gaussian random field plus a compensated Poisson measure:

    dlambda_t(theta) = mu_t(theta) dt + int sigma_t(theta, xi) Y^G(dt, dxi)
                       + int gamma_t-(theta, xi) Y^P(dt, dxi).

The no-arbitrage analogue is the martingale condition: every conditional
survival probability S_t(theta) = exp(-int_0^theta lambda_t(v) dv) must be
a martingale in t, which pins the drift to

    mu_t(theta) = int int sigma_t(theta, xi1) I_sigma(t, theta, xi2)
                          c(xi1 - xi2) dxi1 dxi2
                  + int gamma_t(theta, xi) (1 - e^{-I_gamma(t, theta, xi)})
                        nu(dxi),

with I_sigma, I_gamma the running theta-integrals of the coefficients.
The conditional density alpha_t(theta) = S_t(theta) lambda_t(theta) can
also be evolved directly through the pair of martingales

    dm_t(theta) = -sigma_t(theta) dW_t  -/+  compensated jump part,
    M_t(theta)  = int_0^theta m_t(u) du,
    dalpha_t(theta) = alpha_t-(theta) dM_t(theta) - S_t-(theta) dm_t(theta),
    dS_t(theta)     = S_t-(theta) dM_t(theta).

The sign of the jump part of m is configurable: the two printed
conventions disagree, and both are martingales.  `section7` (jumps push
survival up, density down near the short end) is the default used by the
numerical experiments; `section3` is the convention consistent with an
upward intensity jump depressing survival.

Separable coefficients sigma_t(theta) = sigma (theta - t)^+ and
gamma_t(theta, xi) = b (theta - t)^+ xi get closed-form integrals and
vectorized many-path engines; generic coefficients go through quadrature
and the single-path routines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .field import FieldIncrementPlan, gaussian_increment_curve
from .kernels import CorrelationKernel, DiracKernel
from .measures import LevyMeasure, ZeroMeasure, sample_jumps
from .rng import PathStreams

JUMP_SIGN = {"section7": +1.0, "section3": -1.0}


# ---------------------------------------------------------------------------
# coefficient specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientSpec:
    """Volatility field sigma, jump field gamma and initial curve lambda_0.

    sigma_fn(t, theta, xi), gamma_fn(t, theta, xi) and lambda0_fn(theta)
    must broadcast over numpy arrays.  When sigma_slope and jump_slope are
    set, the separable forms sigma (theta-t)^+ and b (theta-t)^+ xi are
    assumed and closed-form integrals replace quadrature.
    """

    sigma_fn: Callable
    gamma_fn: Callable
    lambda0_fn: Callable
    sigma_slope: float | None = None
    jump_slope: float | None = None

    def __post_init__(self):
        th = np.array([0.0, 0.7, 2.3])
        xs = np.array([0.0, 0.5, 2.0])
        for t in (0.0, 0.3, 1.1):
            g = np.asarray(self.gamma_fn(t, th[:, None], xs[None, :]), dtype=float)
            if np.any(g < 0):
                raise ValueError("gamma must be nonnegative everywhere")

    @property
    def separable(self) -> bool:
        return self.sigma_slope is not None and self.jump_slope is not None

    @staticmethod
    def section7(sigma: float, b: float, lambda_bar: float) -> "CoefficientSpec":
        """The separable coefficient block of the numerical experiments."""
        if b < 0:
            raise ValueError("jump slope b must be nonnegative")
        if lambda_bar < 0:
            raise ValueError("lambda_bar must be nonnegative")
        return CoefficientSpec(
            sigma_fn=lambda t, theta, xi: sigma * np.maximum(
                np.asarray(theta, dtype=float) - t, 0.0) * np.ones_like(
                np.asarray(xi, dtype=float)),
            gamma_fn=lambda t, theta, xi: b * np.maximum(
                np.asarray(theta, dtype=float) - t, 0.0) * np.asarray(xi, dtype=float),
            lambda0_fn=lambda theta: lambda_bar * np.ones_like(np.asarray(theta, dtype=float)),
            sigma_slope=sigma,
            jump_slope=b,
        )


def cumulative_integrals(spec: CoefficientSpec, t: float, theta, xi,
                         n_quad: int = 257) -> tuple[np.ndarray, np.ndarray]:
    """(I_sigma, I_gamma): integrals of the coefficients over v in [0, theta].

    Closed form for separable coefficients (slope * ((theta-t)^+)^2 / 2,
    gamma additionally scaled by xi), composite trapezoid otherwise.
    """
    theta_b, xi_b = np.broadcast_arrays(np.asarray(theta, dtype=float),
                                        np.asarray(xi, dtype=float))
    if np.any(theta_b < 0):
        raise ValueError("theta must be nonnegative")
    if spec.separable:
        half_sq = np.maximum(theta_b - t, 0.0) ** 2 / 2.0
        i_sigma = spec.sigma_slope * half_sq
        i_gamma = spec.jump_slope * half_sq * xi_b
    else:
        v = np.linspace(0.0, 1.0, n_quad)
        pts = theta_b[..., None] * v                       # (..., n_quad)
        sig = np.asarray(spec.sigma_fn(t, pts, xi_b[..., None]), dtype=float)
        gam = np.asarray(spec.gamma_fn(t, pts, xi_b[..., None]), dtype=float)
        i_sigma = np.trapezoid(np.broadcast_to(sig, pts.shape), pts, axis=-1)
        i_gamma = np.trapezoid(np.broadcast_to(gam, pts.shape), pts, axis=-1)
    if np.ndim(theta) == 0 and np.ndim(xi) == 0:
        return float(i_sigma), float(i_gamma)
    return i_sigma, i_gamma


# ---------------------------------------------------------------------------
# martingale-condition drift
# ---------------------------------------------------------------------------

def mc_drift(spec: CoefficientSpec, kernel: CorrelationKernel, measure: LevyMeasure,
             t: float, theta, mark_nodes=None, mark_weights=None):
    """Drift mu_t(theta) enforced by the martingale condition.

    Gaussian part: kernel-weighted double integral of sigma against
    I_sigma (for the d = 0 Dirac kernel simply c0 sigma_t(theta)
    I_sigma(t, theta)).  Jump part: integral of gamma (1 - e^{-I_gamma})
    against nu, closed form for separable gamma.
    """
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))

    if isinstance(kernel, DiracKernel) and kernel.d == 0:
        sig = np.asarray(spec.sigma_fn(t, theta_arr, 0.0), dtype=float)
        i_sig, _ = cumulative_integrals(spec, t, theta_arr, 0.0)
        gauss = kernel.c0 * sig * np.asarray(i_sig, dtype=float)
    else:
        if mark_nodes is None or mark_weights is None:
            raise ValueError("mark-space quadrature required for d >= 1 kernels")
        nodes = np.asarray(mark_nodes, dtype=float)
        wts = np.asarray(mark_weights, dtype=float)
        if isinstance(kernel, DiracKernel):
            cmat = np.diag(kernel.c0 * wts)
        else:
            cmat = wts[:, None] * wts[None, :] * kernel.density(nodes[:, None] - nodes[None, :])
        sig = np.asarray(spec.sigma_fn(t, theta_arr[:, None], nodes[None, :]), dtype=float)
        sig = np.broadcast_to(sig, (theta_arr.size, nodes.size))
        i_sig, _ = cumulative_integrals(spec, t, theta_arr[:, None], nodes[None, :])
        gauss = np.einsum("ti,ij,tj->t", sig, cmat, np.asarray(i_sig, dtype=float))

    if isinstance(measure, ZeroMeasure) or measure.total_mass == 0:
        jump = np.zeros_like(theta_arr)
    elif spec.separable:
        slope = spec.jump_slope * np.maximum(theta_arr - t, 0.0)
        g_half = spec.jump_slope * np.maximum(theta_arr - t, 0.0) ** 2 / 2.0
        jump = slope * (measure.mark_moment(1) - np.asarray(measure.xi_exp(g_half), dtype=float))
    else:
        q_nodes, q_wts = measure.quadrature()
        gam = np.asarray(spec.gamma_fn(t, theta_arr[:, None], q_nodes[None, :]), dtype=float)
        _, i_gam = cumulative_integrals(spec, t, theta_arr[:, None], q_nodes[None, :])
        jump = np.sum(q_wts[None, :] * gam * (1.0 - np.exp(-np.asarray(i_gam, dtype=float))),
                      axis=1)

    out = gauss + jump
    return out if np.ndim(theta) else float(out[0])


def drift_table(spec: CoefficientSpec, kernel: CorrelationKernel, measure: LevyMeasure,
                t_grid: np.ndarray, theta_grid: np.ndarray, **kw) -> np.ndarray:
    """mu on a (t, theta) product grid, computed once and shared by all paths."""
    return np.stack([np.atleast_1d(mc_drift(spec, kernel, measure, float(t), theta_grid, **kw))
                     for t in np.asarray(t_grid, dtype=float)])


# ---------------------------------------------------------------------------
# curve states
# ---------------------------------------------------------------------------

@dataclass
class ForwardCurveState:
    """One path's forward intensity curve lambda_t(.) on the theta grid."""

    t: float
    theta_grid: np.ndarray
    lam: np.ndarray
    seed: int = 0
    path: int = 0
    negative_count: int = 0

    def __post_init__(self):
        grid = np.asarray(self.theta_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("theta grid must be a 1-d vector with >= 2 nodes")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("theta grid must be strictly increasing")
        if not np.all(np.isfinite(np.asarray(self.lam, dtype=float))):
            raise ValueError("lambda curve must be finite")


@dataclass
class DensityCurveState:
    """One path's (alpha, S) pair on the theta grid."""

    t: float
    theta_grid: np.ndarray
    alpha: np.ndarray
    survival: np.ndarray
    seed: int = 0
    path: int = 0
    negative_alpha_count: int = 0


def theta_max_default(lambda_bar: float) -> float:
    """Truncation rule: the grid extends to 10 / lambda_bar."""
    if lambda_bar <= 0:
        raise ValueError("lambda_bar must be positive for the truncation rule")
    return 10.0 / lambda_bar


def initial_forward_state(spec: CoefficientSpec, theta_grid: np.ndarray,
                          seed: int = 0, path: int = 0) -> ForwardCurveState:
    grid = np.asarray(theta_grid, dtype=float)
    return ForwardCurveState(0.0, grid, np.asarray(spec.lambda0_fn(grid), dtype=float),
                             seed=seed, path=path)


def initial_density_state(spec: CoefficientSpec, theta_grid: np.ndarray,
                          seed: int = 0, path: int = 0) -> DensityCurveState:
    fwd = initial_forward_state(spec, theta_grid, seed, path)
    surv = csp(fwd)
    return DensityCurveState(0.0, fwd.theta_grid, surv * fwd.lam, surv,
                             seed=seed, path=path)


# ---------------------------------------------------------------------------
# survival / density from an intensity curve
# ---------------------------------------------------------------------------

def _cumtrapz(y: np.ndarray, x: np.ndarray, axis: int = -1) -> np.ndarray:
    dx = np.diff(x)
    n = y.shape[axis]
    avg = 0.5 * (np.take(y, range(1, n), axis=axis) + np.take(y, range(0, n - 1), axis=axis))
    shape = list(avg.shape)
    shape[axis] = 1
    return np.concatenate([np.zeros(shape), np.cumsum(avg * dx, axis=axis)], axis=axis)


def csp(state: ForwardCurveState) -> np.ndarray:
    """Conditional survival probability S_t(theta) = exp(-int_0^theta lambda).

    Trapezoid cumulative of the intensity curve; S_t(0) = 1 exactly.
    """
    lam = np.asarray(state.lam, dtype=float)
    integral = _cumtrapz(lam, np.asarray(state.theta_grid, dtype=float))
    if np.any(integral < -700.0):
        raise OverflowError("runaway negative intensity: int lambda < -700")
    return np.exp(-integral)


def density(state: ForwardCurveState, survival: np.ndarray | None = None) -> np.ndarray:
    """alpha_t(theta) = S_t(theta) lambda_t(theta), pointwise."""
    surv = csp(state) if survival is None else survival
    return surv * np.asarray(state.lam, dtype=float)


def density_state_from_forward(state: ForwardCurveState) -> DensityCurveState:
    surv = csp(state)
    return DensityCurveState(state.t, state.theta_grid, surv * state.lam, surv,
                             seed=state.seed, path=state.path,
                             negative_alpha_count=state.negative_count)


def survival_integral(state: ForwardCurveState, a: float, b: float) -> float:
    """int_a^b alpha_t dtheta = S_t(a) - S_t(b), exact against the trapezoid S."""
    surv = csp(state)
    grid = np.asarray(state.theta_grid, dtype=float)
    return float(np.interp(a, grid, surv)) - float(np.interp(b, grid, surv))


def integrate_density(state: DensityCurveState, a: float, b: float) -> float:
    """Trapezoid integral of alpha over [a, b] on the grid."""
    grid = np.asarray(state.theta_grid, dtype=float)
    alpha = np.asarray(state.alpha, dtype=float)
    if a < grid[0] - 1e-12 or b > grid[-1] + 1e-12:
        raise ValueError("integration range outside the theta grid")
    xs = grid[(grid > a) & (grid < b)]
    xs = np.concatenate([[a], xs, [b]])
    ys = np.interp(xs, grid, alpha)
    return float(np.trapezoid(ys, xs))


def integrate_density_tail(state: DensityCurveState, a: float) -> tuple[float, float]:
    """int_a^inf alpha: grid trapezoid up to theta_max plus the flat tail.

    Extending the terminal forward intensity flat beyond theta_max puts
    exactly S_t(theta_max) of mass in the tail; returns (value, correction).
    """
    grid = np.asarray(state.theta_grid, dtype=float)
    tail = float(np.asarray(state.survival, dtype=float)[-1])
    return integrate_density(state, a, float(grid[-1])) + tail, tail


# ---------------------------------------------------------------------------
# intensity-route evolution
# ---------------------------------------------------------------------------

def _jump_compensator_curve(spec: CoefficientSpec, measure: LevyMeasure, t: float,
                            grid: np.ndarray) -> np.ndarray:
    """int gamma_t(theta, xi) nu(dxi) on the grid (drift of the raw jump sum)."""
    if isinstance(measure, ZeroMeasure) or measure.total_mass == 0:
        return np.zeros_like(grid)
    if spec.separable:
        return spec.jump_slope * np.maximum(grid - t, 0.0) * measure.mark_moment(1)
    q_nodes, q_wts = measure.quadrature()
    gam = np.asarray(spec.gamma_fn(t, grid[:, None], q_nodes[None, :]), dtype=float)
    return np.sum(q_wts[None, :] * gam, axis=1)


def evolve_intensity(state: ForwardCurveState, spec: CoefficientSpec,
                     plan: FieldIncrementPlan, measure: LevyMeasure,
                     dt: float, streams: PathStreams,
                     drift_row: np.ndarray | None = None,
                     clamp_lambda_at_zero: bool = False) -> ForwardCurveState:
    """One Euler step of the forward intensity curve.

    A single field draw (one z vector, one jump batch) drives every theta.
    Negative intensities are counted, not repaired, unless clamping is
    explicitly requested; clamping biases the martingale tests.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = np.asarray(state.theta_grid, dtype=float)
    t = state.t
    if drift_row is None:
        mu = np.atleast_1d(mc_drift(spec, plan.kernel, measure, t, grid,
                                    mark_nodes=plan.xi_nodes, mark_weights=plan.xi_weights)
                           if getattr(plan.kernel, "d", 0) >= 1 else
                           mc_drift(spec, plan.kernel, measure, t, grid))
    else:
        mu = np.asarray(drift_row, dtype=float)

    h = np.asarray(spec.sigma_fn(t, grid[:, None], plan.xi_nodes[None, :]), dtype=float)
    h = np.broadcast_to(h, (grid.size, plan.n_nodes))
    z = streams.gaussian.standard_normal(plan.n_nodes)
    gauss = gaussian_increment_curve(plan, h, z)

    _, marks = sample_jumps(measure, t, dt, streams)
    jump = np.zeros_like(grid)
    if marks.size:
        jump = np.asarray(spec.gamma_fn(t, grid[:, None], marks[None, :]),
                          dtype=float).sum(axis=1)
    jump = jump - dt * _jump_compensator_curve(spec, measure, t, grid)

    lam = state.lam + mu * dt + gauss + jump
    neg = int(np.count_nonzero(lam < 0))
    if clamp_lambda_at_zero:
        lam = np.maximum(lam, 0.0)
    return ForwardCurveState(t + dt, grid, lam, seed=state.seed, path=state.path,
                             negative_count=state.negative_count + neg)


def immersion_holds(spec: CoefficientSpec, tolerance: float = 1e-12,
                    t_samples: np.ndarray | None = None,
                    xi_samples: np.ndarray | None = None) -> bool:
    """True iff sigma and gamma vanish for t > theta on the sample grid.

    Vanishing coefficients beyond the diagonal freeze lambda_t(theta) for
    t >= theta, the immersion (H-hypothesis) criterion.
    """
    ts = np.linspace(0.05, 3.0, 13) if t_samples is None else np.asarray(t_samples, dtype=float)
    xs = np.array([0.0, 1e-3, 0.5, 2.0]) if xi_samples is None else np.asarray(xi_samples, dtype=float)
    for t in ts:
        theta = np.linspace(0.0, float(t) * (1 - 1e-9), 7)
        sig = np.abs(np.asarray(spec.sigma_fn(float(t), theta[:, None], xs[None, :]), dtype=float))
        gam = np.abs(np.asarray(spec.gamma_fn(float(t), theta[:, None], xs[None, :]), dtype=float))
        if sig.max(initial=0.0) > tolerance or gam.max(initial=0.0) > tolerance:
            return False
    return True


def azema_survival(state: ForwardCurveState) -> float:
    """S_t = S_t(t), the survival process, read off the curve by interpolation."""
    surv = csp(state)
    return float(np.interp(state.t, np.asarray(state.theta_grid, dtype=float), surv))


# ---------------------------------------------------------------------------
# density-route evolution (the direct alpha scheme of the experiments)
# ---------------------------------------------------------------------------

def _density_step_terms(spec: CoefficientSpec, measure: LevyMeasure, t: float,
                        grid: np.ndarray, dt: float, sign: float,
                        dW: float, marks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(dm, dM) over one step for the separable coefficients.

    dm(theta) = -sigma (theta-t)^+ dW
                + sign [ sum_k b (theta-t)^+ xi_k e^{-xi_k G(theta)}
                         - dt int b (theta-t)^+ xi e^{-xi G(theta)} nu(dxi) ],
    G(theta) = b ((theta-t)^+)^2 / 2,   M = int_0^theta m du (trapezoid).
    """
    if not spec.separable:
        raise ValueError("direct density evolution requires separable coefficients")
    theta_t = np.maximum(grid - t, 0.0)
    sig_vec = spec.sigma_slope * theta_t
    gam_vec = spec.jump_slope * theta_t
    big_g = spec.jump_slope * theta_t ** 2 / 2.0

    dm = -sig_vec * dW
    if not (isinstance(measure, ZeroMeasure) or measure.total_mass == 0):
        jump_part = -dt * gam_vec * np.asarray(measure.xi_exp(big_g), dtype=float)
        if marks.size:
            expo = np.exp(-np.multiply.outer(marks, big_g))         # (k, n_theta)
            jump_part = jump_part + gam_vec * (marks[:, None] * expo).sum(axis=0)
        dm = dm + sign * jump_part
    dM = _cumtrapz(dm, grid)
    return dm, dM


def evolve_density_direct(state: DensityCurveState, spec: CoefficientSpec,
                          measure: LevyMeasure, dt: float, streams: PathStreams,
                          jump_sign_convention: str = "section7") -> DensityCurveState:
    """One Euler step of (alpha, S) through the martingale pair (m, M).

    alpha += alpha dM - S dm and S += S dM with left-point (predictable)
    curve values; m and M are exactly compensated, so the step is
    mean-preserving at every theta.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sign = JUMP_SIGN[jump_sign_convention]
    grid = np.asarray(state.theta_grid, dtype=float)
    dW = float(np.sqrt(dt)) * float(streams.gaussian.standard_normal())
    _, marks = sample_jumps(measure, state.t, dt, streams)
    dm, dM = _density_step_terms(spec, measure, state.t, grid, dt, sign, dW, marks)
    alpha = state.alpha + state.alpha * dM - state.survival * dm
    surv = state.survival + state.survival * dM
    neg = int(np.count_nonzero(alpha < 0))
    return DensityCurveState(state.t + dt, grid, alpha, surv,
                             seed=state.seed, path=state.path,
                             negative_alpha_count=state.negative_alpha_count + neg)


# ---------------------------------------------------------------------------
# vectorized many-path engines (separable coefficients, d = 0 Gaussian part)
# ---------------------------------------------------------------------------

def _path_noise(measure: LevyMeasure, seed: int, paths: range, n_steps: int,
                dt: float) -> tuple[np.ndarray, list[tuple]]:
    """Pre-draw per-path noise: (P, n_steps) normals plus grouped jump marks."""
    n_paths = len(paths)
    normals = np.empty((n_paths, n_steps))
    marks_data: list[tuple] = []
    mass = measure.total_mass
    empty = (np.zeros(n_steps, dtype=np.int64), np.zeros(0),
             np.zeros(n_steps + 1, dtype=np.int64))
    for i, p in enumerate(paths):
        s = PathStreams(seed, p)
        normals[i] = s.gaussian.standard_normal(n_steps)
        if mass > 0:
            counts = s.poisson_count.poisson(mass * dt, size=n_steps)
            marks = measure.sample_marks(int(counts.sum()), s.poisson_marks)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            marks_data.append((counts, marks, offsets))
        else:
            marks_data.append(empty)
    return normals, marks_data


def simulate_density_paths(spec: CoefficientSpec, measure: LevyMeasure,
                           theta_grid: np.ndarray, t_end: float, dt: float,
                           n_paths: int, seed: int,
                           jump_sign_convention: str = "section7",
                           path_offset: int = 0,
                           chunk: int = 256,
                           record_times: tuple[float, ...] = ()) -> dict:
    """Evolve (alpha, S) curves for many paths; returns the final curves.

    Chunked over paths: per step the Gaussian and compensator parts are
    shared theta-vectors, only realized jumps need per-event work.  Rows
    are ordered by path index, so output is independent of chunking.
    """
    if not spec.separable:
        raise ValueError("vectorized engine requires separable coefficients")
    sign = JUMP_SIGN[jump_sign_convention]
    grid = np.asarray(theta_grid, dtype=float)
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError("t_end must be an integer number of dt steps")

    lam0 = np.asarray(spec.lambda0_fn(grid), dtype=float)
    surv0 = np.exp(-_cumtrapz(lam0, grid))
    alpha0 = surv0 * lam0

    t_nodes = np.arange(n_steps) * dt
    theta_t = np.maximum(grid[None, :] - t_nodes[:, None], 0.0)
    sig_rows = spec.sigma_slope * theta_t
    gam_rows = spec.jump_slope * theta_t
    big_g_rows = spec.jump_slope * theta_t ** 2 / 2.0
    if isinstance(measure, ZeroMeasure) or measure.total_mass == 0:
        comp_rows = np.zeros_like(sig_rows)
        has_jumps = False
    else:
        comp_rows = gam_rows * np.asarray(measure.xi_exp(big_g_rows), dtype=float)
        has_jumps = True
    sig_cum = _cumtrapz(sig_rows, grid, axis=1)
    comp_cum = _cumtrapz(comp_rows, grid, axis=1)

    rec_steps = {int(round(rt / dt)): rt for rt in record_times}
    records = {rt: {"alpha": np.empty((n_paths, grid.size)),
                    "survival": np.empty((n_paths, grid.size))}
               for rt in record_times}

    alpha_out = np.empty((n_paths, grid.size))
    surv_out = np.empty((n_paths, grid.size))
    neg_counts = np.zeros(n_paths, dtype=np.int64)

    sqrt_dt = np.sqrt(dt)
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        rows = range(path_offset + start, path_offset + stop)
        normals, marks_data = _path_noise(measure, seed, rows, n_steps, dt)
        p = stop - start
        alpha = np.tile(alpha0, (p, 1))
        surv = np.tile(surv0, (p, 1))
        neg = np.zeros(p, dtype=np.int64)
        for k in range(n_steps):
            dW = sqrt_dt * normals[:, k]
            dm = np.multiply.outer(dW, -sig_rows[k]) + (-sign * dt) * comp_rows[k]
            dM = np.multiply.outer(dW, -sig_cum[k]) + (-sign * dt) * comp_cum[k]
            if has_jumps:
                for i in range(p):
                    counts, marks, offsets = marks_data[i]
                    if counts[k]:
                        xs = marks[offsets[k]:offsets[k + 1]]
                        expo = np.exp(-np.multiply.outer(xs, big_g_rows[k]))
                        jump_m = sign * gam_rows[k] * (xs[:, None] * expo).sum(axis=0)
                        dm[i] += jump_m
                        dM[i] += _cumtrapz(jump_m, grid)
            alpha = alpha + alpha * dM - surv * dm
            surv = surv + surv * dM
            neg += np.count_nonzero(alpha < 0, axis=1)
            if k + 1 in rec_steps:
                rt = rec_steps[k + 1]
                records[rt]["alpha"][start:stop] = alpha
                records[rt]["survival"][start:stop] = surv
        alpha_out[start:stop] = alpha
        surv_out[start:stop] = surv
        neg_counts[start:stop] = neg

    return {"theta_grid": grid, "t": t_end, "alpha": alpha_out, "survival": surv_out,
            "negative_alpha_counts": neg_counts, "records": records}


def simulate_intensity_paths(spec: CoefficientSpec, kernel: DiracKernel,
                             measure: LevyMeasure, theta_grid: np.ndarray,
                             t_end: float, dt: float, n_paths: int, seed: int,
                             drift_multiplier: float = 1.0,
                             clamp_lambda_at_zero: bool = False,
                             chunk: int = 512,
                             record_times: tuple[float, ...] = (),
                             probe_thetas: tuple[float, ...] = ()) -> dict:
    """Evolve lambda curves for many paths under the d = 0 Dirac field.

    drift_multiplier scales the martingale-condition drift (used by the
    discriminating-power check).  probe_thetas additionally accumulates,
    at each probe maturity, the linearized survival martingale

        X += -sqrt(c0) I_sigma(t, theta) dW
             + sum_k (e^{-I_gamma(t, theta, xi_k)} - 1)
             - dt int (e^{-I_gamma} - 1) nu(dxi),

    a zero-mean control variate for S_t(theta) - S_0(theta).
    """
    if not (isinstance(kernel, DiracKernel) and kernel.d == 0):
        raise ValueError("vectorized intensity engine supports the d = 0 Dirac kernel")
    if not spec.separable:
        raise ValueError("vectorized engine requires separable coefficients")
    grid = np.asarray(theta_grid, dtype=float)
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError("t_end must be an integer number of dt steps")

    t_nodes = np.arange(n_steps) * dt
    theta_t = np.maximum(grid[None, :] - t_nodes[:, None], 0.0)
    sqrt_c0 = kernel.c0 ** 0.5
    sig_rows = sqrt_c0 * spec.sigma_slope * theta_t
    gam_slope_rows = spec.jump_slope * theta_t
    mu_rows = drift_multiplier * np.stack(
        [np.atleast_1d(mc_drift(spec, kernel, measure, float(t), grid)) for t in t_nodes])
    mark_mean = measure.mark_moment(1) if measure.total_mass else 0.0
    comp_rows = gam_slope_rows * mark_mean

    probes = np.asarray(probe_thetas, dtype=float)
    if probes.size:
        probe_tt = np.maximum(probes[None, :] - t_nodes[:, None], 0.0)
        i_sig_p = sqrt_c0 * spec.sigma_slope * probe_tt ** 2 / 2.0     # (steps, n_probe)
        g_half_p = spec.jump_slope * probe_tt ** 2 / 2.0
        if measure.total_mass:
            comp_x_p = -np.asarray(measure.one_minus_exp(g_half_p), dtype=float)
        else:
            comp_x_p = np.zeros_like(g_half_p)

    rec_steps = {int(round(rt / dt)): rt for rt in record_times}
    records = {rt: {"lam": np.empty((n_paths, grid.size))} for rt in record_times}
    x_records = {rt: np.empty((n_paths, probes.size)) for rt in record_times} if probes.size else {}

    lam0 = np.asarray(spec.lambda0_fn(grid), dtype=float)
    lam_out = np.empty((n_paths, grid.size))
    neg_counts = np.zeros(n_paths, dtype=np.int64)
    x_out = np.zeros((n_paths, probes.size)) if probes.size else None

    sqrt_dt = np.sqrt(dt)
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        normals, marks_data = _path_noise(measure, seed, range(start, stop), n_steps, dt)
        p = stop - start
        lam = np.tile(lam0, (p, 1))
        neg = np.zeros(p, dtype=np.int64)
        x_acc = np.zeros((p, probes.size)) if probes.size else None
        for k in range(n_steps):
            dW = sqrt_dt * normals[:, k]
            mark_sums = np.zeros(p)
            for i in range(p):
                counts, marks, offsets = marks_data[i]
                if counts[k]:
                    mark_sums[i] = marks[offsets[k]:offsets[k + 1]].sum()
            lam = lam + (dt * mu_rows[k] - dt * comp_rows[k]) \
                + np.multiply.outer(dW, sig_rows[k]) \
                + np.multiply.outer(mark_sums, gam_slope_rows[k])
            neg += np.count_nonzero(lam < 0, axis=1)
            if clamp_lambda_at_zero:
                lam = np.maximum(lam, 0.0)
            if probes.size:
                x_acc += np.multiply.outer(dW, -i_sig_p[k]) - dt * comp_x_p[k]
                for i in range(p):
                    counts, marks, offsets = marks_data[i]
                    if counts[k]:
                        xs = marks[offsets[k]:offsets[k + 1]]
                        x_acc[i] += (np.exp(-np.multiply.outer(xs, g_half_p[k])) - 1.0).sum(axis=0)
            if k + 1 in rec_steps:
                rt = rec_steps[k + 1]
                records[rt]["lam"][start:stop] = lam
                if probes.size:
                    x_records[rt][start:stop] = x_acc
        lam_out[start:stop] = lam
        neg_counts[start:stop] = neg
        if probes.size:
            x_out[start:stop] = x_acc

    out = {"theta_grid": grid, "t": t_end, "lam": lam_out,
           "negative_counts": neg_counts, "records": records}
    if probes.size:
        out["probe_thetas"] = probes
        out["probe_martingale"] = x_out
        out["probe_martingale_records"] = x_records
    return out
