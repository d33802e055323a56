"""Deterministic-equivalent predictors for finite-data linear denoisers and
their sampling maps.

Every predictor reduces to weighted sums over the population eigenvalues once
kappa is known, so inputs are expressed as coefficients in the population
eigenbasis and each evaluation is O(d) per quadrature node. kappa values over
quadrature grids are solved once by descending continuation and memoized per
(spectrum fingerprint, gamma, grid).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import OutOfRegimeError
from .kappa import kappa_path, kappa_solve
from .quadrature import QuadratureGrid, TensorGrid2D
from .spectrum import SpectralMeasure, df2_two

# Difference quotients of kappa with denominators below this switch to a
# finite-difference estimate of dkappa/dz.
_SINGULAR_DENOM = 1e-9
_FD_RELATIVE_STEP = 1e-6

_grid_kappa_cache: dict[tuple, np.ndarray] = {}


def clear_grid_cache() -> None:
    _grid_kappa_cache.clear()


def kappa_on_nodes(spec: SpectralMeasure, gamma: float, z_nodes) -> np.ndarray:
    """kappa at each z node, solved by descending continuation; memoized."""
    z_arr = np.asarray(z_nodes, dtype=float)
    key = (spec.fingerprint(), float(gamma), z_arr.tobytes())
    hit = _grid_kappa_cache.get(key)
    if hit is None:
        sols = kappa_path(spec, gamma, z_arr)
        hit = np.array([s.kappa for s in sols])
        hit.setflags(write=False)
        _grid_kappa_cache[key] = hit
    return hit


@dataclass(frozen=True)
class ProbeCoefficients:
    """Probe vector expressed in the population eigenbasis (entry k multiplies mode k)."""

    coeffs: np.ndarray
    kind: Literal["direction", "displacement"] = "direction"
    enforce_unit_norm: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be a non-empty finite 1-d array")
        if self.kind not in ("direction", "displacement"):
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if self.enforce_unit_norm and abs(np.linalg.norm(c) - 1.0) > 1e-10:
            raise ValueError("direction probe is not unit norm")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def unit_mode(cls, mode: int, length: int) -> "ProbeCoefficients":
        c = np.zeros(length)
        c[mode] = 1.0
        return cls(c, "direction", enforce_unit_norm=True)

    @classmethod
    def displacement_mode(cls, mode: int, length: int, radius: float) -> "ProbeCoefficients":
        c = np.zeros(length)
        c[mode] = radius
        return cls(c, "displacement")


@dataclass(frozen=True)
class VariancePrediction:
    """Factored variance value: scaling * anisotropy * inhomogeneity exactly."""

    value: float
    factors: dict = field(default_factory=dict)

    def score_variance(self, sigma2: float) -> float:
        """Same prediction for the score instead of the denoiser: value / sigma^4."""
        return self.value / sigma2**2


def _mode_eigenvalues(spec: SpectralMeasure, length: int) -> np.ndarray:
    """Per-atom eigenvalues aligned with probe coefficients (probe entry k <-> atom k)."""
    ev = spec.eigenvalues
    if length > ev.size:
        raise ValueError(f"probe length {length} exceeds number of spectrum atoms {ev.size}")
    return ev[:length]


def expected_denoiser_gain(spec: SpectralMeasure, gamma: float, sigma2: float, lambda_k):
    """Per-mode shrink factor lambda_k / (lambda_k + kappa(sigma2)).

    The full expected denoiser along mode k is mean_k + gain * (x - mean)_k.
    Broadcasts over lambda_k.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    lam = np.asarray(lambda_k, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda_k must be >= 0")
    kap = kappa_solve(spec, gamma, sigma2).kappa
    out = lam / (lam + kap)
    return float(out) if np.ndim(lambda_k) == 0 else out


def chi(lam: float, kappa: float):
    """Anisotropy kernel lambda / (lambda + kappa)^2; bell-shaped in lambda, peak 1/(4 kappa) at lambda = kappa."""
    if np.any(np.asarray(kappa) <= 0):
        raise ValueError("kappa must be > 0")
    lam = np.asarray(lam, dtype=float)
    out = lam / (lam + kappa) ** 2
    return float(out) if out.ndim == 0 else out


def xi(lam, sigma2: float, kappa: float):
    """Inhomogeneity kernel (sigma2 + lambda) * chi(lambda, kappa) for shell-radius displacements.

    Strictly below 1 and increasing in lambda; requires kappa >= sigma2, which
    the self-consistent solution always satisfies.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if kappa < sigma2:
        raise ValueError("kappa < sigma2 violates the self-consistent equation")
    lam = np.asarray(lam, dtype=float)
    out = (sigma2 + lam) * lam / (lam + kappa) ** 2
    return float(out) if out.ndim == 0 else out


def diamond(probe: ProbeCoefficients, kappa: float, eigenvalues) -> float:
    """Quadratic form sum_k c_k^2 lambda_k / (lambda_k + kappa)^2."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    ev = np.asarray(eigenvalues, dtype=float)
    c = probe.coeffs
    if ev.shape != c.shape:
        raise ValueError(f"probe length {c.size} does not match eigenvalue list {ev.size}")
    return float(np.sum(c**2 * ev / (ev + kappa) ** 2))


def pentagon(probe: ProbeCoefficients, kappa: float, kappa_prime: float, eigenvalues) -> float:
    """Quadratic form sum_k c_k^2 lambda_k / ((lambda_k + kappa)(lambda_k + kappa')); symmetric in (kappa, kappa')."""
    if kappa <= 0 or kappa_prime <= 0:
        raise ValueError("kappa arguments must be > 0")
    ev = np.asarray(eigenvalues, dtype=float)
    c = probe.coeffs
    if ev.shape != c.shape:
        raise ValueError(f"probe length {c.size} does not match eigenvalue list {ev.size}")
    return float(np.sum(c**2 * ev / ((ev + kappa) * (ev + kappa_prime))))


def denoiser_variance(
    spec: SpectralMeasure,
    gamma: float,
    n: int,
    sigma2: float,
    v: ProbeCoefficients,
    x_disp: ProbeCoefficients,
) -> VariancePrediction:
    """Variance of v^T D(x) across dataset draws:
    kappa^2 / (n - df2(kappa)) * diamond(v) * diamond(x - mean), kappa = kappa(sigma2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    kap = kappa_solve(spec, gamma, sigma2).kappa
    dof = df2_two(spec, kap, kap)
    if n <= dof:
        raise OutOfRegimeError(f"n = {n} <= df2(kappa) = {dof:.6g}; variance formula is out of regime")
    ev_v = _mode_eigenvalues(spec, v.coeffs.size)
    ev_x = _mode_eigenvalues(spec, x_disp.coeffs.size)
    scaling = kap**2 / (n - dof)
    anisotropy = diamond(v, kap, ev_v)
    inhomogeneity = diamond(x_disp, kap, ev_x)
    value = scaling * anisotropy * inhomogeneity
    return VariancePrediction(
        value,
        {"scaling": scaling, "anisotropy": anisotropy, "inhomogeneity": inhomogeneity, "kappa": kap},
    )


def denoiser_variance_marginal(spec: SpectralMeasure, gamma: float, n: int, sigma2: float) -> float:
    """Overall denoiser variance, summed over directions and averaged over noised inputs:
    (df1 - df2)(sigma2 df1 + (kappa - sigma2) df2) / (n - df2) at kappa = kappa(sigma2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if spec.mean_eigenvalue == 0.0:
        return 0.0
    kap = kappa_solve(spec, gamma, sigma2).kappa
    d1 = float(np.sum(spec.weights * spec.eigenvalues / (spec.eigenvalues + kap))) * spec.dimension
    d2 = df2_two(spec, kap, kap)
    if n <= d2:
        raise OutOfRegimeError(f"n = {n} <= df2(kappa) = {d2:.6g}; variance formula is out of regime")
    return (d1 - d2) * (sigma2 * d1 + (kap - sigma2) * d2) / (n - d2)


def sampling_gain_expected(spec: SpectralMeasure, gamma: float, lambda_k, grid: QuadratureGrid):
    """Expected eigenmode scaling of the empirical sqrt-covariance map:
    (2/pi) * integral of lambda_k / (lambda_k + kappa(u^2)) du over [0, inf).

    At gamma = 0 this is sqrt(lambda_k); for gamma > 0 it is strictly smaller
    (overshrinkage). Broadcasts over lambda_k.
    """
    if not grid.mapped:
        raise ValueError("sampling_gain_expected requires a half-line (mapped) grid")
    lam = np.asarray(lambda_k, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda_k must be >= 0")
    kap = kappa_on_nodes(spec, gamma, grid.mapped_nodes**2)
    cw = grid.effective_weights
    out = (2.0 / np.pi) * np.sum(cw * lam[..., None] / (lam[..., None] + kap), axis=-1)
    return float(out) if np.ndim(lambda_k) == 0 else out


def _pentagon_grid(coeffs: np.ndarray, eigenvalues: np.ndarray, inv_u: np.ndarray, inv_v: np.ndarray) -> np.ndarray:
    """pentagon(probe; kappa_i, kappa'_j) on the full grid, shape (n_u, n_v)."""
    weighted = coeffs**2 * eigenvalues
    return (inv_u * weighted) @ inv_v.T


def sampling_variance(
    spec: SpectralMeasure,
    gamma: float,
    n: int,
    v: ProbeCoefficients,
    xbar: ProbeCoefficients,
    grid2d: TensorGrid2D,
) -> float:
    """Variance of v^T Sigma_hat^{1/2} xbar across dataset draws:
    (4/pi^2) * iint kappa kappa' / (n - df2(kappa, kappa'))
                 * pentagon(v) * pentagon(xbar) du dv,
    with kappa = kappa(u^2), kappa' = kappa(v^2). Symmetric under v <-> xbar.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (grid2d.grid_u.mapped and grid2d.grid_v.mapped):
        raise ValueError("sampling_variance requires mapped grids")
    kap_u = kappa_on_nodes(spec, gamma, grid2d.u_nodes**2)
    kap_v = kappa_on_nodes(spec, gamma, grid2d.v_nodes**2)
    ev, w, d = spec.eigenvalues, spec.weights, spec.dimension
    inv_u = 1.0 / (ev[None, :] + kap_u[:, None])
    inv_v = 1.0 / (ev[None, :] + kap_v[:, None])
    df2_grid = d * ((inv_u * (w * ev**2)) @ inv_v.T)
    margin = n - df2_grid
    if np.min(margin) <= 0:
        raise OutOfRegimeError(
            f"n = {n} <= df2(kappa, kappa') at some grid node (min margin {np.min(margin):.6g})"
        )
    ev_v = _mode_eigenvalues(spec, v.coeffs.size)
    ev_x = _mode_eigenvalues(spec, xbar.coeffs.size)
    pent_v = _pentagon_grid(v.coeffs, ev_v, inv_u[:, : ev_v.size], inv_v[:, : ev_v.size])
    pent_x = _pentagon_grid(xbar.coeffs, ev_x, inv_u[:, : ev_x.size], inv_v[:, : ev_x.size])
    integrand = (kap_u[:, None] * kap_v[None, :] / margin) * pent_v * pent_x
    return float((4.0 / np.pi**2) * np.sum(grid2d.weights_2d * integrand))


def sampling_variance_trace(
    spec: SpectralMeasure,
    gamma: float,
    n: int,
    xbar: ProbeCoefficients,
    grid2d: TensorGrid2D,
) -> float:
    """Direction-marginalized sampling variance: sum over all eigenmode probes
    of sampling_variance, evaluated with the pentagon trace in one pass."""
    if n < 1:
        raise ValueError("n must be >= 1")
    kap_u = kappa_on_nodes(spec, gamma, grid2d.u_nodes**2)
    kap_v = kappa_on_nodes(spec, gamma, grid2d.v_nodes**2)
    ev, w, d = spec.eigenvalues, spec.weights, spec.dimension
    inv_u = 1.0 / (ev[None, :] + kap_u[:, None])
    inv_v = 1.0 / (ev[None, :] + kap_v[:, None])
    df2_grid = d * ((inv_u * (w * ev**2)) @ inv_v.T)
    margin = n - df2_grid
    if np.min(margin) <= 0:
        raise OutOfRegimeError(
            f"n = {n} <= df2(kappa, kappa') at some grid node (min margin {np.min(margin):.6g})"
        )
    trace_pent = d * ((inv_u * (w * ev)) @ inv_v.T)
    ev_x = _mode_eigenvalues(spec, xbar.coeffs.size)
    pent_x = _pentagon_grid(xbar.coeffs, ev_x, inv_u[:, : ev_x.size], inv_v[:, : ev_x.size])
    integrand = (kap_u[:, None] * kap_v[None, :] / margin) * trace_pent * pent_x
    return float((4.0 / np.pi**2) * np.sum(grid2d.weights_2d * integrand))


def df2_min_margin(spec: SpectralMeasure, gamma: float, n: int, grid2d: TensorGrid2D) -> float:
    """Minimum of n - df2(kappa(u^2), kappa(v^2)) over the grid (regime diagnostic)."""
    kap_u = kappa_on_nodes(spec, gamma, grid2d.u_nodes**2)
    kap_v = kappa_on_nodes(spec, gamma, grid2d.v_nodes**2)
    ev, w, d = spec.eigenvalues, spec.weights, spec.dimension
    inv_u = 1.0 / (ev[None, :] + kap_u[:, None])
    inv_v = 1.0 / (ev[None, :] + kap_v[:, None])
    df2_grid = d * ((inv_u * (w * ev**2)) @ inv_v.T)
    return float(np.min(n - df2_grid))


def _kappa_derivative_fd(spec: SpectralMeasure, gamma: float, z: float) -> float:
    """Symmetric finite-difference estimate of dkappa/dz at z."""
    h = _FD_RELATIVE_STEP * z
    hi = kappa_solve(spec, gamma, z + h).kappa
    lo = kappa_solve(spec, gamma, z - h).kappa
    return (hi - lo) / (2.0 * h)


def half_resolvent_expected_gain(
    spec: SpectralMeasure,
    gamma: float,
    sigma2: float,
    lambda_k,
    grid2d: TensorGrid2D,
):
    """Expected eigenmode scaling of Sigma_hat^{1/2} (Sigma_hat + sigma^2 I)^{-1/2}:

    (4/pi^2) * iint w(u, v) * lambda_k / ((lambda_k + kappa(sigma2 + u^2)) (lambda_k + kappa(v^2))) du dv,
    w(u, v) = (kappa(sigma2 + u^2) - kappa(v^2)) / ((sigma2 + u^2) - v^2),

    where near-coincident denominators are replaced by the dkappa/dz limit
    (finite-difference estimate). Broadcasts over lambda_k.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    if not (grid2d.grid_u.mapped and grid2d.grid_v.mapped):
        raise ValueError("half_resolvent_expected_gain requires mapped grids")
    lam = np.asarray(lambda_k, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda_k must be >= 0")

    z_u = sigma2 + grid2d.u_nodes**2
    z_v = grid2d.v_nodes**2
    kap_u = kappa_on_nodes(spec, gamma, z_u)
    kap_v = kappa_on_nodes(spec, gamma, z_v)

    denom = z_u[:, None] - z_v[None, :]
    singular = np.abs(denom) < _SINGULAR_DENOM
    safe_denom = np.where(singular, 1.0, denom)
    wgt = (kap_u[:, None] - kap_v[None, :]) / safe_denom
    if np.any(singular):
        zbar = 0.5 * (z_u[:, None] + z_v[None, :])
        for i, j in zip(*np.nonzero(singular)):
            wgt[i, j] = _kappa_derivative_fd(spec, gamma, float(zbar[i, j]))

    lam_flat = np.atleast_1d(lam)
    inv_u = 1.0 / (lam_flat[:, None] + kap_u[None, :])
    inv_v = 1.0 / (lam_flat[:, None] + kap_v[None, :])
    core = grid2d.weights_2d * wgt
    vals = (4.0 / np.pi**2) * lam_flat * np.einsum("mu,uv,mv->m", inv_u, core, inv_v)
    return float(vals[0]) if np.ndim(lambda_k) == 0 else vals.reshape(lam.shape)
