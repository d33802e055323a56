"""Population covariance spectra as weighted eigenvalue atoms, and the trace
functionals built on them.

A spectrum is stored as atoms (eigenvalue, weight) with an ambient dimension
``d``; unnormalized traces are ``d`` times the weighted average. This lets the
same object describe a per-mode spectrum (d atoms of weight 1/d) or a compact
limiting measure (a few atoms), and every functional is a plain weighted sum.
"""

from __future__ import annotations

import hashlib
import re
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SpectrumFormatError

# Weight-sum drift handling on load: below SILENT renormalize quietly, below
# REJECT renormalize with a warning, above REJECT refuse the file.
_WEIGHT_DRIFT_SILENT = 1e-9
_WEIGHT_DRIFT_REJECT = 1e-3

_DIMENSION_HEADER = re.compile(r"#\s*dimension\s*=\s*(\d+)\s*$")


@dataclass(frozen=True)
class SpectralMeasure:
    """Weighted atoms of a population covariance spectrum.

    eigenvalues: non-increasing, >= 0 (data-variance units)
    weights: strictly positive, summing to 1
    dimension: ambient dimension d; unnormalized traces are d * weighted mean
    """

    eigenvalues: np.ndarray
    weights: np.ndarray
    dimension: int

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if ev.ndim != 1 or w.ndim != 1 or ev.size == 0:
            raise ValueError("eigenvalues and weights must be non-empty 1-d arrays")
        if ev.size != w.size:
            raise ValueError(f"length mismatch: {ev.size} eigenvalues vs {w.size} weights")
        if not np.all(np.isfinite(ev)) or not np.all(np.isfinite(w)):
            raise ValueError("eigenvalues and weights must be finite")
        if np.any(ev < 0):
            raise ValueError("eigenvalues must be >= 0")
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be sorted non-increasing")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
        d = self.dimension
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise ValueError("dimension must be a positive integer")
        if np.unique(ev).size > d:
            raise ValueError("more distinct eigenvalues than ambient dimension")
        ev.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dimension", int(d))

    @property
    def mean_eigenvalue(self) -> float:
        """Weighted mean of the eigenvalues (= normalized trace of the covariance)."""
        return float(np.sum(self.weights * self.eigenvalues))

    @property
    def rank_fraction(self) -> float:
        """Total weight carried by strictly positive eigenvalues."""
        return float(np.sum(self.weights[self.eigenvalues > 0]))

    def fingerprint(self) -> str:
        """Stable content hash used as a cache key."""
        h = hashlib.sha256()
        h.update(str(self.dimension).encode())
        h.update(self.eigenvalues.tobytes())
        h.update(self.weights.tobytes())
        return h.hexdigest()

    def merge_duplicates(self) -> "SpectralMeasure":
        """Aggregate weights of exactly equal eigenvalues; trace functionals are invariant."""
        uniq, inverse = np.unique(self.eigenvalues, return_inverse=True)
        merged_w = np.zeros_like(uniq)
        np.add.at(merged_w, inverse, self.weights)
        order = np.argsort(uniq)[::-1]
        return SpectralMeasure(uniq[order], merged_w[order] / merged_w.sum(), self.dimension)


def make_powerlaw_spectrum(dimension: int, exponent: float, scale: float = 1.0) -> SpectralMeasure:
    """Spectrum with eigenvalues scale * k**(-exponent), k = 1..dimension, equal weights."""
    if not isinstance(dimension, (int, np.integer)) or dimension < 1:
        raise ValueError("dimension must be a positive integer")
    if exponent <= 0:
        raise ValueError("exponent must be > 0")
    if scale <= 0:
        raise ValueError("scale must be > 0")
    k = np.arange(1, dimension + 1, dtype=float)
    return SpectralMeasure(scale * k**-exponent, np.full(dimension, 1.0 / dimension), int(dimension))


def make_isotropic_spectrum(dimension: int, value: float = 1.0) -> SpectralMeasure:
    """All-equal spectrum stored as a single atom of weight 1."""
    if not isinstance(dimension, (int, np.integer)) or dimension < 1:
        raise ValueError("dimension must be a positive integer")
    if value < 0:
        raise ValueError("value must be >= 0")
    return SpectralMeasure(np.array([float(value)]), np.array([1.0]), int(dimension))


def load_spectrum(path) -> SpectralMeasure:
    """Parse a spectrum CSV.

    Format: optional header line ``# dimension=<d>``; body rows
    ``eigenvalue,weight`` or ``eigenvalue`` alone (then weights default to 1/d
    and the row count must equal d). Rows are re-sorted descending; weights are
    renormalized, warning when the drift exceeds 1e-9 and rejecting above 1e-3.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    dimension = None
    eigenvalues: list[float] = []
    weights: list[float] = []
    has_weights = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _DIMENSION_HEADER.match(line)
            if m and dimension is None:
                dimension = int(m.group(1))
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (1, 2):
            raise SpectrumFormatError(f"malformed row, line {lineno}: {raw!r}")
        try:
            ev = float(fields[0])
        except ValueError:
            raise SpectrumFormatError(f"malformed row, line {lineno}: {raw!r}") from None
        if not np.isfinite(ev):
            raise SpectrumFormatError(f"non-finite eigenvalue, line {lineno}")
        if ev < 0:
            raise SpectrumFormatError(f"negative eigenvalue, line {lineno}")
        row_has_weight = len(fields) == 2
        if has_weights is None:
            has_weights = row_has_weight
        elif has_weights != row_has_weight:
            raise SpectrumFormatError(f"inconsistent columns, line {lineno}")
        if row_has_weight:
            try:
                wt = float(fields[1])
            except ValueError:
                raise SpectrumFormatError(f"malformed row, line {lineno}: {raw!r}") from None
            if not np.isfinite(wt) or wt <= 0:
                raise SpectrumFormatError(f"non-positive weight, line {lineno}")
            weights.append(wt)
        eigenvalues.append(ev)

    if not eigenvalues:
        raise SpectrumFormatError("no data rows in spectrum file")
    if dimension is None:
        dimension = len(eigenvalues)

    ev = np.asarray(eigenvalues)
    if has_weights:
        w = np.asarray(weights)
        drift = abs(w.sum() - 1.0)
        if drift > _WEIGHT_DRIFT_REJECT:
            raise SpectrumFormatError(f"weights sum to {w.sum()!r}, drift {drift:.3g} exceeds {_WEIGHT_DRIFT_REJECT}")
        if drift > _WEIGHT_DRIFT_SILENT:
            warnings.warn(f"spectrum weights renormalized (drift {drift:.3g})", stacklevel=2)
        w = w / w.sum()
    else:
        if len(eigenvalues) != dimension:
            raise SpectrumFormatError(
                f"weight column omitted but row count {len(eigenvalues)} != dimension {dimension}"
            )
        w = np.full(dimension, 1.0 / dimension)

    order = np.argsort(ev, kind="stable")[::-1]
    return SpectralMeasure(ev[order], w[order], dimension)


def _check_positive(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"{name} must be finite and > 0")
    return arr


def df1(spec: SpectralMeasure, lam):
    """Unnormalized trace of Sigma (Sigma + lam I)^{-1}.

    Broadcasts over ``lam``; returns a float for scalar input.
    """
    lam_arr = _check_positive(lam, "lambda")
    ev, w, d = spec.eigenvalues, spec.weights, spec.dimension
    out = d * np.sum(w * ev / (ev + lam_arr[..., None]), axis=-1)
    return float(out) if np.isscalar(lam) or np.ndim(lam) == 0 else out


def df2_two(spec: SpectralMeasure, lam, lam_prime):
    """Unnormalized trace of Sigma^2 (Sigma + lam I)^{-1} (Sigma + lam' I)^{-1}.

    Symmetric in the two arguments; broadcasts over both. The diagonal case
    ``df2_two(spec, lam, lam)`` is the usual second degrees-of-freedom count,
    and is strictly below ``df1(spec, lam)`` whenever some eigenvalue is > 0.
    """
    a = _check_positive(lam, "lambda")
    b = _check_positive(lam_prime, "lambda_prime")
    ev, w, d = spec.eigenvalues, spec.weights, spec.dimension
    scal = np.isscalar(lam) or np.ndim(lam) == 0
    scal &= np.isscalar(lam_prime) or np.ndim(lam_prime) == 0
    a, b = np.broadcast_arrays(a, b)
    out = d * np.sum(w * ev**2 / ((ev + a[..., None]) * (ev + b[..., None])), axis=-1)
    return float(out) if scal else out
