"""Gauss-Legendre quadrature on finite intervals and on the half-line.

The half-line rule maps theta in (0, pi/2) through u = tan(theta) with
Jacobian 1 + u^2, so integrals over [0, inf) become weighted sums without
domain truncation. 2D tensor grids combine two 1D rules for double integrals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Default node counts: chosen so node doubling changes the integral-based
# predictors by < 1e-6 relative on the test spectra (resolvent-type kernels
# converge near machine precision well below these counts).
DEFAULT_NODES_1D = 200
DEFAULT_NODES_2D = 120


def _legendre_nodes(n: int):
    """Nodes and weights of the n-point rule on (-1, 1) by Newton iteration on P_n."""
    k = np.arange(n, dtype=float)
    x = np.cos(np.pi * (k + 0.75) / (n + 0.5))
    dp = np.ones_like(x)
    for _ in range(100):
        p_prev = np.ones_like(x)
        p = x.copy()
        for j in range(2, n + 1):
            p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
        dp = n * (x * p - p_prev) / (x * x - 1.0)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes/weights on (a, b), optionally tangent-mapped onto the half-line.

    When ``mapped`` is true, integrating f over [0, inf) is
    sum_i weights_i * jacobians_i * f(mapped_nodes_i).
    """

    theta_nodes: np.ndarray
    weights: np.ndarray
    mapped_nodes: np.ndarray
    jacobians: np.ndarray
    mapped: bool

    def __post_init__(self):
        for name in ("theta_nodes", "weights", "mapped_nodes", "jacobians"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.theta_nodes.size == self.weights.size == self.mapped_nodes.size == self.jacobians.size):
            raise ValueError("grid arrays must share a common length")
        if np.any(np.diff(self.theta_nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(self.weights <= 0) or np.any(self.jacobians <= 0):
            raise ValueError("weights and jacobians must be positive")

    @property
    def n_nodes(self) -> int:
        return self.theta_nodes.size

    @property
    def effective_weights(self) -> np.ndarray:
        """weights * jacobians; the coefficients of the mapped quadrature sum."""
        return self.weights * self.jacobians

    def integrate(self, fn) -> float:
        """Sum fn over the (mapped) nodes; fn must accept a vector of nodes."""
        return float(np.sum(self.effective_weights * np.asarray(fn(self.mapped_nodes), dtype=float)))


def gauss_legendre(n_nodes: int, a: float, b: float) -> QuadratureGrid:
    """Gauss-Legendre rule on (a, b); exact for polynomials of degree <= 2n-1."""
    if not isinstance(n_nodes, (int, np.integer)) or n_nodes < 1:
        raise ValueError("n_nodes must be a positive integer")
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ValueError("need finite a < b")
    x, w = _legendre_nodes(int(n_nodes))
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * x
    weights = half * w
    return QuadratureGrid(nodes, weights, nodes, np.ones_like(nodes), mapped=False)


def halfline_grid(n_nodes: int) -> QuadratureGrid:
    """Gauss-Legendre on (0, pi/2) pushed through u = tan(theta) to cover [0, inf)."""
    base = gauss_legendre(n_nodes, 0.0, np.pi / 2)
    u = np.tan(base.theta_nodes)
    return QuadratureGrid(base.theta_nodes, base.weights, u, 1.0 + u * u, mapped=True)


@dataclass(frozen=True)
class TensorGrid2D:
    """Tensor product of two 1D grids; iterates as (u, v, combined_weight)."""

    grid_u: QuadratureGrid
    grid_v: QuadratureGrid

    @property
    def u_nodes(self) -> np.ndarray:
        return self.grid_u.mapped_nodes

    @property
    def v_nodes(self) -> np.ndarray:
        return self.grid_v.mapped_nodes

    @property
    def weights_2d(self) -> np.ndarray:
        """Outer product of effective weights, shape (n_u, n_v)."""
        return np.outer(self.grid_u.effective_weights, self.grid_v.effective_weights)

    def __iter__(self):
        wu = self.grid_u.effective_weights
        wv = self.grid_v.effective_weights
        for i, u in enumerate(self.u_nodes):
            for j, v in enumerate(self.v_nodes):
                yield u, v, wu[i] * wv[j]

    def integrate(self, fn) -> float:
        """Sum fn(u, v) over the grid; fn must broadcast over (n_u, 1) x (1, n_v)."""
        vals = np.asarray(fn(self.u_nodes[:, None], self.v_nodes[None, :]), dtype=float)
        return float(np.sum(self.weights_2d * vals))


def tensor_grid_2d(grid_u: QuadratureGrid, grid_v: QuadratureGrid) -> TensorGrid2D:
    """2D tensor view of two 1D grids; double integrals are plain sums over it."""
    return TensorGrid2D(grid_u, grid_v)
