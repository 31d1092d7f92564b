"""Time-increment stochastic integrals against the Gaussian field.

A FieldIncrementPlan discretizes the mark space once: quadrature nodes,
weights, and the Cholesky factor of the weighted kernel matrix.  A sample
of the integral of h over a window of length dt is then

    sqrt(dt) * h(nodes)^T L z,      z ~ N(0, I),

whose variance is dt * sum_ij w_i w_j h_i h_j c(xi_i - xi_j), the field's
covariance form.  One shared z per time step drives every maturity, which
is what correlates the whole forward curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import CorrelationKernel, cholesky_with_jitter, kernel_matrix


@dataclass(frozen=True)
class FieldIncrementPlan:
    kernel: CorrelationKernel
    xi_nodes: np.ndarray
    xi_weights: np.ndarray
    kernel_cholesky: np.ndarray
    time_step: float

    @property
    def n_nodes(self) -> int:
        return self.xi_nodes.size


def build_increment_plan(kernel: CorrelationKernel, dt: float,
                         nodes: np.ndarray | None = None,
                         weights: np.ndarray | None = None) -> FieldIncrementPlan:
    """Plan for sampling field integrals over windows of length dt.

    With d = 0 (scalar Brownian driver) the mark space degenerates to the
    single node 0 with unit weight.  Otherwise the caller supplies the
    quadrature rule for the mark space.
    """
    if dt <= 0:
        raise ValueError("time_step must be positive")
    if getattr(kernel, "d", 0) == 0:
        nodes = np.array([0.0])
        weights = np.array([1.0])
    if nodes is None or weights is None:
        raise ValueError("mark-space quadrature nodes and weights required for d >= 1")
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mat = kernel_matrix(kernel, nodes, weights)
    chol = cholesky_with_jitter(mat)
    return FieldIncrementPlan(kernel, nodes, weights, chol, dt)


def gaussian_increment(plan: FieldIncrementPlan, integrand: Callable[[np.ndarray], np.ndarray],
                       rng: np.random.Generator) -> float:
    """One sample of the integral of h over [t, t+dt] x mark space.

    Gaussian, mean zero, variance dt * (quadratic form of h in the weighted
    kernel matrix).
    """
    h = np.asarray(integrand(plan.xi_nodes), dtype=float)
    if h.shape == ():
        h = np.full(plan.n_nodes, float(h))
    if not np.all(np.isfinite(h)):
        raise ValueError("integrand must be finite on all quadrature nodes")
    z = rng.standard_normal(plan.n_nodes)
    return float(np.sqrt(plan.time_step) * (h @ plan.kernel_cholesky @ z))


def gaussian_increment_curve(plan: FieldIncrementPlan, h_matrix: np.ndarray,
                             z: np.ndarray) -> np.ndarray:
    """Field integrals for a whole curve of integrands sharing one draw z.

    h_matrix has one row per maturity; the same standard-normal vector z is
    used for every row, preserving the cross-maturity covariance structure.
    """
    h_matrix = np.atleast_2d(np.asarray(h_matrix, dtype=float))
    return np.sqrt(plan.time_step) * (h_matrix @ plan.kernel_cholesky @ z)
