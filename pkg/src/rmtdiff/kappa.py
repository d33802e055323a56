"""Solver for the renormalized noise level kappa(z) at aspect ratio gamma.

kappa is the unique positive root of

    F(kappa) = kappa - z - gamma * kappa * m(kappa) = 0,
    m(kappa) = sum_k w_k lambda_k / (lambda_k + kappa),

solved by Newton iteration with the analytic derivative

    F'(kappa) = 1 - gamma * sum_k w_k lambda_k^2 / (lambda_k + kappa)^2,

safeguarded by bisection on the bracket [z, z + gamma * mean(lambda)], which
is provable: F(z) <= 0 and kappa - z = gamma * kappa * m(kappa) <= gamma *
mean(lambda) since kappa/(kappa + lambda) <= 1. Paths over many z values are
solved by continuation from the largest z downward, and a cache of (z, kappa)
pairs can seed later solves with the nearest stored solution.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .spectrum import SpectralMeasure

_MAX_ITER = 200


@dataclass(frozen=True)
class KappaSolution:
    """One solved point of the self-consistent equation."""

    z: float
    kappa: float
    gamma: float
    residual: float


class KappaCache:
    """Sorted store of solved (z, kappa) pairs for one (spectrum, gamma).

    Lookups return fully inserted entries only; inserts take a lock, so the
    cache may be shared across threads (duplicate solves of the same z are
    fine, last insert wins with identical values within tolerance).
    """

    def __init__(self, spec: SpectralMeasure, gamma: float):
        self.gamma = float(gamma)
        self.spectrum_fingerprint = spec.fingerprint()
        self._z: list[float] = []
        self._kappa: list[float] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._z)

    @property
    def entries(self) -> list[tuple[float, float]]:
        with self._lock:
            return list(zip(self._z, self._kappa))

    def lookup_exact(self, z: float):
        with self._lock:
            i = bisect.bisect_left(self._z, z)
            if i < len(self._z) and self._z[i] == z:
                return self._kappa[i]
        return None

    def nearest(self, z: float):
        """Cached (z0, kappa0) with z0 closest to z, or None if empty."""
        with self._lock:
            if not self._z:
                return None
            i = bisect.bisect_left(self._z, z)
            candidates = [j for j in (i - 1, i) if 0 <= j < len(self._z)]
            j = min(candidates, key=lambda j: abs(self._z[j] - z))
            return self._z[j], self._kappa[j]

    def insert(self, z: float, kappa: float) -> None:
        with self._lock:
            i = bisect.bisect_left(self._z, z)
            if i < len(self._z) and self._z[i] == z:
                self._kappa[i] = kappa
            else:
                self._z.insert(i, z)
                self._kappa.insert(i, kappa)


def _residual_terms(lam, w, gamma, z, kappa):
    m = np.sum(w * lam / (lam + kappa))
    f = kappa - z - gamma * kappa * m
    fprime = 1.0 - gamma * np.sum(w * lam**2 / (lam + kappa) ** 2)
    return f, fprime


def kappa_solve(
    spec: SpectralMeasure,
    gamma: float,
    z: float,
    cache: KappaCache | None = None,
    initial_guess: float | None = None,
    max_iter: int = _MAX_ITER,
) -> KappaSolution:
    """Solve the self-consistent equation for kappa(z).

    Stops when |F(kappa)| <= 1e-12 * max(1, kappa) and the last Newton step is
    <= 1e-14 * kappa. Raises ConvergenceError (carrying the last iterate) if
    the iteration cap is hit first.
    """
    z = float(z)
    gamma = float(gamma)
    if not np.isfinite(z) or z <= 0:
        raise ValueError("z must be finite and > 0")
    if not np.isfinite(gamma) or gamma < 0:
        raise ValueError("gamma must be finite and >= 0")

    lam = spec.eigenvalues
    w = spec.weights
    mean_lam = spec.mean_eigenvalue
    if gamma == 0.0 or mean_lam == 0.0:
        # Equation degenerates to kappa = z exactly.
        if cache is not None:
            cache.insert(z, z)
        return KappaSolution(z, z, gamma, 0.0)

    lo, hi = z, z + gamma * mean_lam
    cached = cache.lookup_exact(z) if cache is not None else None
    if cached is not None:
        f, _ = _residual_terms(lam, w, gamma, z, cached)
        return KappaSolution(z, cached, gamma, abs(f))

    if initial_guess is not None and np.isfinite(initial_guess):
        kappa = min(max(float(initial_guess), lo), hi)
    elif cache is not None and (near := cache.nearest(z)) is not None:
        kappa = min(max(near[1], lo), hi)
    else:
        kappa = hi  # exact to first order at large z

    tol_step_hit = False
    f = np.inf
    for iteration in range(1, max_iter + 1):
        f, fprime = _residual_terms(lam, w, gamma, z, kappa)
        if abs(f) <= 1e-12 * max(1.0, kappa) and (tol_step_hit or f == 0.0):
            break
        if f > 0:
            hi = min(hi, kappa)
        else:
            lo = max(lo, kappa)
        if fprime > 0:
            candidate = kappa - f / fprime
            if not (lo < candidate < hi):
                candidate = 0.5 * (lo + hi)
        else:
            candidate = 0.5 * (lo + hi)
        tol_step_hit = abs(candidate - kappa) <= 1e-14 * max(kappa, np.finfo(float).tiny)
        kappa = candidate
    else:
        raise ConvergenceError(
            f"kappa solver did not converge after {max_iter} iterations at z={z!r} "
            f"(last kappa={kappa!r}, residual={abs(f)!r})",
            z=z,
            last_kappa=kappa,
            residual=abs(f),
            iterations=max_iter,
        )

    if cache is not None:
        cache.insert(z, kappa)
    return KappaSolution(z, kappa, gamma, abs(f))


def kappa_path(
    spec: SpectralMeasure,
    gamma: float,
    z_values,
    cache: KappaCache | None = None,
) -> list[KappaSolution]:
    """Solve kappa over a set of z values by continuation.

    Solves from the largest z downward, reusing each solution as the next
    initial guess, and returns solutions in the caller's input order.
    """
    z_arr = np.asarray(z_values, dtype=float)
    if z_arr.ndim != 1 or z_arr.size == 0:
        raise ValueError("z_values must be a non-empty 1-d sequence")
    if np.any(~np.isfinite(z_arr)) or np.any(z_arr <= 0):
        raise ValueError("all z values must be finite and > 0")

    order = np.argsort(z_arr, kind="stable")[::-1]
    solutions: list[KappaSolution | None] = [None] * z_arr.size
    guess = None
    for idx in order:
        try:
            sol = kappa_solve(spec, gamma, z_arr[idx], cache=cache, initial_guess=guess)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"continuation failed at z={z_arr[idx]!r}: {exc}",
                z=exc.z,
                last_kappa=exc.last_kappa,
                residual=exc.residual,
                iterations=exc.iterations,
            ) from exc
        solutions[idx] = sol
        guess = sol.kappa
    return solutions  # type: ignore[return-value]
