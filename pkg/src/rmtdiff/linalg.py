"""Dense symmetric linear algebra: empirical covariances, the linear denoiser
and its score, the Wiener sampling map, and quadrature-based fractional matrix
powers used as independent oracles against eigendecomposition routes.

All dense work is float64. Eigenvalues are clipped at EPS = 1e-16 before
fractional powers; negative computed eigenvalues are counted and a warning is
emitted when more than d/10 modes were negative (rank-deficient covariances
can produce them).
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import SingularMatrixError
from .quadrature import QuadratureGrid, TensorGrid2D
from .spectrum import SpectralMeasure

EPS_CLIP = 1e-16


def _check_symmetric(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError(f"{name} must be symmetric")
    return a


@dataclass(frozen=True)
class PopulationModel:
    """Gaussian population: mean, orthonormal eigenbasis (columns), eigenvalues descending."""

    mean: np.ndarray
    eigenbasis: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float)
        u = np.asarray(self.eigenbasis, dtype=float)
        ev = np.asarray(self.eigenvalues, dtype=float)
        d = mu.size
        if mu.ndim != 1 or u.shape != (d, d) or ev.shape != (d,):
            raise ValueError("inconsistent shapes for mean/eigenbasis/eigenvalues")
        if np.max(np.abs(u.T @ u - np.eye(d))) > 1e-10:
            raise ValueError("eigenbasis columns must be orthonormal")
        if np.any(ev < 0) or np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be descending and >= 0")
        for name, arr in (("mean", mu), ("eigenbasis", u), ("eigenvalues", ev)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        return (self.eigenbasis * self.eigenvalues) @ self.eigenbasis.T

    @property
    def has_identity_basis(self) -> bool:
        return bool(np.array_equal(self.eigenbasis, np.eye(self.dimension)))

    @classmethod
    def from_spectrum(cls, spec: SpectralMeasure, mean=None, eigenbasis=None) -> "PopulationModel":
        """Expand weighted atoms into per-mode eigenvalues (weight*d must be whole counts)."""
        counts = spec.weights * spec.dimension
        rounded = np.rint(counts)
        if np.any(np.abs(counts - rounded) > 1e-9) or int(rounded.sum()) != spec.dimension:
            raise ValueError("spectrum weights do not expand to whole per-mode counts")
        ev = np.repeat(spec.eigenvalues, rounded.astype(int))
        d = spec.dimension
        mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
        basis = np.eye(d) if eigenbasis is None else np.asarray(eigenbasis, dtype=float)
        return cls(mu, basis, ev)

    def to_spectrum(self) -> SpectralMeasure:
        """Per-mode spectrum with equal weights 1/d."""
        d = self.dimension
        return SpectralMeasure(self.eigenvalues, np.full(d, 1.0 / d), d)


def random_rotation(dimension: int, seed) -> np.ndarray:
    """Haar-ish orthonormal basis from the QR of a seeded Gaussian matrix."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dimension, dimension)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class EmpiricalCovariance:
    """Sample covariance with divisor n and its provenance."""

    matrix: np.ndarray
    n_samples: int
    centered_by: Literal["population_mean", "sample_mean"]

    def __post_init__(self):
        a = _check_symmetric(self.matrix, "covariance")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.centered_by not in ("population_mean", "sample_mean"):
            raise ValueError(f"unknown centering {self.centered_by!r}")
        min_eig = float(np.linalg.eigvalsh(a)[0])
        if min_eig < -1e-10 * max(np.max(np.abs(a)), 1.0):
            raise ValueError(f"covariance not PSD (min eigenvalue {min_eig})")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EigenDecomposition:
    """Symmetric eigendecomposition, eigenvalues descending; counts negative modes."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_fingerprint: str
    n_negative: int

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size


def eigendecompose(matrix) -> EigenDecomposition:
    a = _check_symmetric(matrix)
    evals, evecs = np.linalg.eigh(a)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    fp = hashlib.sha256(a.tobytes()).hexdigest()
    return EigenDecomposition(evals, evecs, fp, int(np.sum(evals < 0)))


def _as_eigen(cov) -> EigenDecomposition:
    if isinstance(cov, EigenDecomposition):
        return cov
    if isinstance(cov, EmpiricalCovariance):
        return eigendecompose(cov.matrix)
    return eigendecompose(cov)


def empirical_covariance(
    samples,
    center: Literal["population_mean", "sample_mean"] = "population_mean",
    known_mean=None,
) -> EmpiricalCovariance:
    """(1/n) sum_i (x_i - c)(x_i - c)^T with c the chosen center (divisor n, not n-1)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("samples must be an (n, d) matrix with n >= 1")
    n, d = x.shape
    if center == "population_mean":
        if known_mean is None:
            raise ValueError("population_mean centering requires known_mean")
        c = np.asarray(known_mean, dtype=float)
        if c.shape != (d,):
            raise ValueError(f"known_mean has shape {c.shape}, expected ({d},)")
    elif center == "sample_mean":
        c = x.mean(axis=0)
    else:
        raise ValueError(f"unknown centering {center!r}")
    y = x - c
    mat = y.T @ y / n
    mat = 0.5 * (mat + mat.T)
    return EmpiricalCovariance(mat, n, center)


def _warn_if_many_negative(eig: EigenDecomposition) -> None:
    if eig.n_negative > eig.dimension / 10:
        warnings.warn(
            f"{eig.n_negative}/{eig.dimension} negative eigenvalues clipped",
            stacklevel=3,
        )


def denoise(cov, mean, x, sigma: float):
    """Optimal linear denoiser mean + Sigma_hat (Sigma_hat + sigma^2 I)^{-1} (x - mean).

    Computed through the eigendecomposition shrink factors lam/(lam + sigma^2)
    so one decomposition serves a whole noise grid. sigma = 0 requires a
    numerically full-rank covariance and returns x exactly.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    eig = _as_eigen(cov)
    mu = np.asarray(mean, dtype=float)
    xv = np.asarray(x, dtype=float)
    evals = np.clip(eig.eigenvalues, 0.0, None)
    if sigma == 0.0:
        if evals[-1] <= 1e-10 * max(evals[0], np.finfo(float).tiny):
            raise SingularMatrixError("sigma = 0 requires a numerically full-rank covariance")
        return xv.copy()
    shrink = evals / (evals + sigma**2)
    coords = (xv - mu) @ eig.eigenvectors
    return mu + (coords * shrink) @ eig.eigenvectors.T


def score(cov, mean, x, sigma: float):
    """Noise-scaled denoiser displacement (denoise(x) - x) / sigma^2."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return (denoise(cov, mean, x, sigma) - np.asarray(x, dtype=float)) / sigma**2


def wiener_matrix(eig: EigenDecomposition, sigma_T: float, sigma_0: float = 0.0, clip: bool = True):
    """Sampling-map matrix V diag(sqrt((lam + sigma_0^2)/(lam + sigma_T^2))) V^T.

    Eigenvalues are clipped below at EPS = 1e-16 before the ratio when
    ``clip`` is set, guarding rank-deficient covariances.
    """
    if sigma_T <= 0:
        raise ValueError("sigma_T must be > 0")
    if sigma_0 < 0:
        raise ValueError("sigma_0 must be >= 0")
    evals = eig.eigenvalues
    if clip:
        _warn_if_many_negative(eig)
        evals = np.clip(evals, EPS_CLIP, None)
    scaling = np.sqrt((evals + sigma_0**2) / (evals + sigma_T**2))
    return (eig.eigenvectors * scaling) @ eig.eigenvectors.T


def sample_map(cov, mean, x_T, sigma_T: float, sigma_0: float = 0.0):
    """Closed-form transport mean + W (x_T - mean) with W the Wiener matrix."""
    eig = _as_eigen(cov)
    w = wiener_matrix(eig, sigma_T, sigma_0)
    mu = np.asarray(mean, dtype=float)
    xv = np.asarray(x_T, dtype=float)
    return mu + (xv - mu) @ w.T


def matrix_sqrt_quadrature(a, grid: QuadratureGrid):
    """A^{1/2} as (2/pi) * integral of A (A + s^2 I)^{-1} ds over the half-line.

    Independent of any eigendecomposition; serves as an oracle for spectral
    square roots. Requires a mapped (half-line) grid.
    """
    a = _check_symmetric(a)
    if not grid.mapped:
        raise ValueError("matrix_sqrt_quadrature requires a half-line (mapped) grid")
    d = a.shape[0]
    u = grid.mapped_nodes
    cw = grid.effective_weights
    shifted = a[None, :, :] + (u**2)[:, None, None] * np.eye(d)
    resolvents = np.linalg.solve(shifted, np.broadcast_to(a, (u.size, d, d)))
    total = np.einsum("i,ijk->jk", cw, resolvents)
    out = (2.0 / np.pi) * total
    return 0.5 * (out + out.T)


def half_resolvent_quadrature(a, z: float, grid2d: TensorGrid2D):
    """A^{1/2} (A + z I)^{-1/2} via the double integral
    (4/pi^2) * iint A (A + u^2 I)^{-1} (A + (z + v^2) I)^{-1} du dv.

    The tensor-product sum factorizes exactly into per-axis resolvent sums
    (bilinearity), which is how it is evaluated.
    """
    a = _check_symmetric(a)
    if z < 0:
        raise ValueError("z must be >= 0")
    if not (grid2d.grid_u.mapped and grid2d.grid_v.mapped):
        raise ValueError("half_resolvent_quadrature requires mapped grids")
    d = a.shape[0]
    eye = np.eye(d)

    u = grid2d.u_nodes
    cu = grid2d.grid_u.effective_weights
    shifted_u = a[None, :, :] + (u**2)[:, None, None] * eye
    sum_u = np.einsum("i,ijk->jk", cu, np.linalg.inv(shifted_u))

    v = grid2d.v_nodes
    cv = grid2d.grid_v.effective_weights
    shifted_v = a[None, :, :] + (z + v**2)[:, None, None] * eye
    sum_v = np.einsum("i,ijk->jk", cv, np.linalg.inv(shifted_v))

    out = (4.0 / np.pi**2) * (a @ sum_u @ sum_v)
    return 0.5 * (out + out.T)
