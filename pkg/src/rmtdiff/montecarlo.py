"""Monte-Carlo validation engine: draw finite Gaussian datasets, build
empirical denoisers and sampling maps, and estimate every statistic the
deterministic-equivalent theory predicts.

Seeding: trial t of a run with master seed s uses the generator seeded by the
entropy tuple (s, t, split); auxiliary draws (probe points, initial noise)
use fixed integer tags. Identical configs therefore give identical reports.

All experiments work in population eigenbasis coordinates, which is an exact
similarity transform of the ambient-space computation; reports are invariant
to the population eigenbasis.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detequiv
from .detequiv import ProbeCoefficients
from .errors import OutOfRegimeError
from .kappa import kappa_solve
from .linalg import PopulationModel
from .quadrature import DEFAULT_NODES_1D, DEFAULT_NODES_2D, halfline_grid, tensor_grid_2d

# Entropy tags for auxiliary generators (must not collide with trial indices,
# which occupy the second slot of the tuple; these occupy the third).
_TAG_POINTS = 101
_TAG_XBAR = 202
_TAG_POOL = 303
_TAG_NOISE = 404
_TAG_REFERENCE = 505
_TAG_BAND = 707

_CHUNK_ELEMENTS = 8_000_000  # cap on trials * n * d per generation chunk

PER_MODE_HEADER = ("mode", "lambda", "theory", "mc", "mc_se", "n_trials")
PER_POINT_HEADER = ("point_id", "theory_factor", "mse")


def _rng(master_seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, *path)))


def format_float(x) -> str:
    """Fixed 17-significant-digit formatting for byte-stable CSV bodies."""
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    """Settings shared by the Monte-Carlo experiments."""

    population: PopulationModel
    n_samples: int
    n_trials: int
    sigma_grid: tuple[float, ...] = (1.0,)
    sigma_T: float = 80.0
    sigma_0: float = 0.002
    probe_modes: tuple[int, ...] = (0, 7, 23)
    displacement_mode: int = 2
    n_probe_points: int = 0
    n_xbar_seeds: int = 5
    include_wiener: bool = False
    quadrature_nodes: int = DEFAULT_NODES_1D
    quadrature_nodes_2d: int = DEFAULT_NODES_2D
    seed: int = 0

    def __post_init__(self):
        d = self.population.dimension
        self.sigma_grid = tuple(float(s) for s in self.sigma_grid)
        self.probe_modes = tuple(int(p) for p in self.probe_modes)
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.n_trials < 2:
            raise ValueError("n_trials must be >= 2 for variance estimates")
        if any(s <= 0 for s in self.sigma_grid):
            raise ValueError("sigma_grid entries must be > 0")
        if self.sigma_T <= 0 or self.sigma_0 < 0:
            raise ValueError("need sigma_T > 0 and sigma_0 >= 0")
        if any(not 0 <= p < d for p in self.probe_modes):
            raise ValueError("probe modes must be valid eigenmode indices")
        if not 0 <= self.displacement_mode < d:
            raise ValueError("displacement_mode must be a valid eigenmode index")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    @property
    def gamma(self) -> float:
        return self.population.dimension / self.n_samples


@dataclass(frozen=True)
class PerModeRow:
    table: str
    mode: int
    lam: float
    theory: float
    mc: float
    mc_se: float
    n_trials: int
    operation: str


@dataclass(frozen=True)
class PerPointRow:
    table: str
    point_id: int
    theory_factor: float
    mse: float


@dataclass
class ExperimentReport:
    """Theory-vs-Monte-Carlo comparison tables plus a summary sidecar.

    per_mode rows carry the producing theory operation; extra tables hold
    schemas beyond the two fixed ones (header, rows) keyed by table name.
    """

    per_mode: list[PerModeRow] = field(default_factory=list)
    per_point: list[PerPointRow] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    extra: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)

    def per_mode_tables(self) -> dict[str, list[PerModeRow]]:
        out: dict[str, list[PerModeRow]] = {}
        for row in self.per_mode:
            out.setdefault(row.table, []).append(row)
        return out

    def per_point_tables(self) -> dict[str, list[PerPointRow]]:
        out: dict[str, list[PerPointRow]] = {}
        for row in self.per_point:
            out.setdefault(row.table, []).append(row)
        return out

    def write_csv(self, out_dir, prefix: str = "") -> list[Path]:
        """One CSV per table (fixed headers) plus a JSON summary sidecar."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        for name, rows in self.per_mode_tables().items():
            path = out_dir / f"{prefix}{name}.csv"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(PER_MODE_HEADER) + "\n")
                for r in rows:
                    fh.write(
                        f"{r.mode},{format_float(r.lam)},{format_float(r.theory)},{format_float(r.mc)},{format_float(r.mc_se)},{r.n_trials}\n"
                    )
            written.append(path)
        for name, rows in self.per_point_tables().items():
            path = out_dir / f"{prefix}{name}.csv"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(PER_POINT_HEADER) + "\n")
                for r in rows:
                    fh.write(f"{r.point_id},{format_float(r.theory_factor)},{format_float(r.mse)}\n")
            written.append(path)
        for name, (header, rows) in self.extra.items():
            path = out_dir / f"{prefix}{name}.csv"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(x if isinstance(x, str) else format_float(x) if isinstance(x, float) else str(x) for x in row) + "\n")
            written.append(path)
        sidecar = out_dir / f"{prefix}{self.summary.get('experiment', 'report')}_summary.json"
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True, default=_json_default)
        written.append(sidecar)
        return written


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def draw_dataset(population: PopulationModel, n: int, seed) -> np.ndarray:
    """n samples mean + U Lambda^{1/2} z, z iid standard normal from the seeded generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, population.dimension))
    coords = z * np.sqrt(population.eigenvalues)
    return population.mean + coords @ population.eigenbasis.T


def mse_pairwise(a, b) -> float:
    """Mean over pairs of |a_i - b_i|^2 / d (per-coordinate normalization)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.sum((a - b) ** 2, axis=1)) / a.shape[1])


def _variance_se(values: np.ndarray) -> float:
    """Distribution-free standard error of the sample variance."""
    t = values.size
    m2 = values.var(ddof=0)
    m4 = np.mean((values - values.mean()) ** 4)
    return float(np.sqrt(max(m4 - (t - 3) / (t - 1) * m2**2, 0.0) / t))


def _mean_se(values: np.ndarray) -> float:
    return float(values.std(ddof=1) / np.sqrt(values.size))


def spearman_rank_correlation(a, b) -> float:
    """Rank (Spearman) correlation; assumes continuous data (no tie handling)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    ra -= ra.mean()
    rb -= rb.mean()
    return float(np.sum(ra * rb) / np.sqrt(np.sum(ra**2) * np.sum(rb**2)))


def _population_coords_lam(population: PopulationModel) -> np.ndarray:
    return population.eigenvalues


def _chunk_ranges(n_trials: int, n: int, d: int):
    per_chunk = max(1, int(_CHUNK_ELEMENTS / max(n * d, 1)))
    for start in range(0, n_trials, per_chunk):
        yield start, min(start + per_chunk, n_trials)


def _draw_coord_chunk(lam: np.ndarray, n: int, seed: int, trials: range, split: int) -> np.ndarray:
    """Stack per-trial coordinate datasets (z * sqrt(lambda)) for a chunk of trials."""
    d = lam.size
    out = np.empty((len(trials), n, d))
    sqrt_lam = np.sqrt(lam)
    for i, t in enumerate(trials):
        out[i] = _rng(seed, t, split).standard_normal((n, d)) * sqrt_lam
    return out


def _batched_eigh(coords: np.ndarray, n: int):
    covs = np.einsum("tni,tnj->tij", coords, coords) / n
    evals, evecs = np.linalg.eigh(covs)
    return np.clip(evals, 0.0, None), evecs


def denoiser_split_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Two independent datasets per trial; compares per-mode shrink gains,
    probe-direction variances, cross-split MSEs, and per-point inhomogeneity
    against the deterministic-equivalent predictions."""
    t_start = time.perf_counter()
    pop = config.population
    d = pop.dimension
    n = config.n_samples
    lam = _population_coords_lam(pop)
    spec = pop.to_spectrum()
    gamma = config.gamma
    sigmas = config.sigma_grid
    n_sig = len(sigmas)
    probes = config.probe_modes
    jdisp = config.displacement_mode
    n_trials = config.n_trials
    n_pts = config.n_probe_points

    # Shared probe points per sigma: noised draws x - mean ~ N(0, Sigma + s2 I).
    points = []
    for si in range(n_sig):
        if n_pts > 0:
            g = _rng(config.seed, 0, _TAG_POINTS, si).standard_normal((n_pts, d))
            points.append(g * np.sqrt(lam + sigmas[si]))
        else:
            points.append(None)

    gains = np.empty((n_trials, n_sig, d))
    vproj_a = np.empty((n_trials, n_sig, len(probes)))
    vproj_b = np.empty((n_trials, n_sig, len(probes)))
    point_mse = [np.empty((n_trials, n_pts)) if n_pts else None for _ in range(n_sig)]

    for start, stop in _chunk_ranges(n_trials, n, d):
        block = range(start, stop)
        tmat_a: list = [None] * n_sig
        for split in (0, 1):
            coords = _draw_coord_chunk(lam, n, config.seed, block, split)
            evals, evecs = _batched_eigh(coords, n)
            for si, s2 in enumerate(sigmas):
                shrink = evals / (evals + s2)
                # column jdisp of the shrink operator, all output modes
                col = np.einsum("tkj,tj,tj->tk", evecs, shrink, evecs[:, jdisp, :])
                radius = np.sqrt(s2 + lam[jdisp])
                if split == 0:
                    gains[start:stop, si] = np.einsum("tkj,tj,tkj->tk", evecs, shrink, evecs)
                    vproj_a[start:stop, si] = radius * col[:, probes]
                    if n_pts:
                        tmat_a[si] = np.einsum("tkj,tj,tmj->tkm", evecs, shrink, evecs)
                else:
                    vproj_b[start:stop, si] = radius * col[:, probes]
                    if n_pts:
                        tmat_b = np.einsum("tkj,tj,tmj->tkm", evecs, shrink, evecs)
                        diff = tmat_a[si] - tmat_b
                        out = np.einsum("tkm,pm->tpk", diff, points[si])
                        point_mse[si][start:stop] = np.sum(out**2, axis=2) / d
            del coords, evals, evecs

    report = ExperimentReport()
    summary: dict = {
        "experiment": "denoiser_split",
        "seed": config.seed,
        "d": d,
        "n": n,
        "gamma": gamma,
        "n_trials": n_trials,
        "sigma_grid": list(sigmas),
        "probe_modes": list(probes),
        "displacement_mode": jdisp,
        "out_of_regime": [],
        "spearman_per_sigma": {},
    }

    for si, s2 in enumerate(sigmas):
        kap = kappa_solve(spec, gamma, s2).kappa
        gain_theory = lam / (lam + kap)
        for k in range(d):
            vals = gains[:, si, k]
            report.per_mode.append(
                PerModeRow(
                    f"denoiser_gain_s{si}", k, lam[k], gain_theory[k],
                    float(vals.mean()), _mean_se(vals), n_trials, "expected_denoiser_gain",
                )
            )
        radius = np.sqrt(s2 + lam[jdisp])
        x_disp = ProbeCoefficients.displacement_mode(jdisp, d, radius)
        for pi, p in enumerate(probes):
            v = ProbeCoefficients.unit_mode(p, d)
            try:
                theory = detequiv.denoiser_variance(spec, gamma, n, s2, v, x_disp).value
            except OutOfRegimeError:
                summary["out_of_regime"].append({"table": "denoiser_variance", "sigma2": s2, "mode": p})
                theory = float("nan")
            vals = vproj_a[:, si, pi]
            report.per_mode.append(
                PerModeRow(
                    f"denoiser_variance_s{si}", p, lam[p], theory,
                    float(vals.var(ddof=1)), _variance_se(vals), n_trials, "denoiser_variance",
                )
            )
            diffs = (vproj_a[:, si, pi] - vproj_b[:, si, pi]) ** 2
            report.per_mode.append(
                PerModeRow(
                    f"denoiser_mse_s{si}", p, lam[p], 2.0 * theory,
                    float(diffs.mean()), _mean_se(diffs), n_trials, "denoiser_variance*2 (MSE doubles variance)",
                )
            )
        if n_pts:
            kap_factor = lam / (lam + kap) ** 2
            theory_pts = np.sum(points[si] ** 2 * kap_factor, axis=1)
            mse_pts = point_mse[si].mean(axis=0)
            for pid in range(n_pts):
                report.per_point.append(
                    PerPointRow(f"denoiser_point_mse_s{si}", pid, float(theory_pts[pid]), float(mse_pts[pid]))
                )
            if n_pts >= 3:
                summary["spearman_per_sigma"][str(s2)] = spearman_rank_correlation(theory_pts, mse_pts)

    summary["runtime_seconds"] = time.perf_counter() - t_start
    report.summary = summary
    return report


def sampling_map_experiment(config: ExperimentConfig) -> ExperimentReport:
    """One pair of datasets per trial; compares sqrt-covariance eigenmode gains,
    probe variances on fixed initial-noise seeds, per-seed cross-split MSE, and
    (optionally) the finite-sigma_T Wiener operator gains."""
    t_start = time.perf_counter()
    pop = config.population
    d = pop.dimension
    n = config.n_samples
    lam = _population_coords_lam(pop)
    spec = pop.to_spectrum()
    gamma = config.gamma
    probes = config.probe_modes
    n_trials = config.n_trials
    n_seeds = config.n_xbar_seeds

    xbars = _rng(config.seed, 0, _TAG_XBAR).standard_normal((n_seeds, d))

    gains = np.empty((n_trials, d))
    wiener_gains = np.empty((n_trials, d)) if config.include_wiener else None
    mx_a = np.empty((n_trials, n_seeds, d))
    mx_b = np.empty((n_trials, n_seeds, d))

    for start, stop in _chunk_ranges(n_trials, n, d):
        block = range(start, stop)
        for split in (0, 1):
            coords = _draw_coord_chunk(lam, n, config.seed, block, split)
            evals, evecs = _batched_eigh(coords, n)
            sqrt_vals = np.sqrt(evals)
            mx = np.einsum("tkj,tj,tij,si->tsk", evecs, sqrt_vals, evecs, xbars)
            if split == 0:
                mx_a[start:stop] = mx
                gains[start:stop] = np.einsum("tkj,tj,tkj->tk", evecs, sqrt_vals, evecs)
                if config.include_wiener:
                    clipped = np.clip(evals, 1e-16, None)
                    scalings = np.sqrt((clipped + config.sigma_0**2) / (clipped + config.sigma_T**2))
                    wiener_gains[start:stop] = config.sigma_T * np.einsum(
                        "tkj,tj,tkj->tk", evecs, scalings, evecs
                    )
            else:
                mx_b[start:stop] = mx
            del coords, evals, evecs

    grid1d = halfline_grid(config.quadrature_nodes)
    grid2d = tensor_grid_2d(halfline_grid(config.quadrature_nodes_2d), halfline_grid(config.quadrature_nodes_2d))
    report = ExperimentReport()
    summary: dict = {
        "experiment": "sampling_map",
        "seed": config.seed,
        "d": d,
        "n": n,
        "gamma": gamma,
        "n_trials": n_trials,
        "n_xbar_seeds": n_seeds,
        "probe_modes": list(probes),
        "sigma_T": config.sigma_T,
        "sigma_0": config.sigma_0,
        "include_wiener": config.include_wiener,
        "out_of_regime": [],
    }

    gain_theory = detequiv.sampling_gain_expected(spec, gamma, lam, grid1d)
    for k in range(d):
        vals = gains[:, k]
        report.per_mode.append(
            PerModeRow(
                "sampling_gain", k, lam[k], float(gain_theory[k]),
                float(vals.mean()), _mean_se(vals), n_trials, "sampling_gain_expected",
            )
        )
    if config.include_wiener:
        wtheory = config.sigma_T * detequiv.half_resolvent_expected_gain(
            spec, gamma, config.sigma_T**2, lam, grid2d
        )
        for k in range(d):
            vals = wiener_gains[:, k]
            report.per_mode.append(
                PerModeRow(
                    "sampling_wiener_gain", k, lam[k], float(wtheory[k]),
                    float(vals.mean()), _mean_se(vals), n_trials,
                    "half_resolvent_expected_gain*sigma_T (sigma_0 floor recorded in summary)",
                )
            )

    summary["df2_min_margin"] = detequiv.df2_min_margin(spec, gamma, n, grid2d)
    for p in probes:
        v = ProbeCoefficients.unit_mode(p, d)
        for s in range(n_seeds):
            xbar = ProbeCoefficients(xbars[s], "displacement")
            try:
                theory = detequiv.sampling_variance(spec, gamma, n, v, xbar, grid2d)
            except OutOfRegimeError:
                summary["out_of_regime"].append({"table": "sampling_variance", "mode": p, "seed_index": s})
                theory = float("nan")
            vals = mx_a[:, s, p]
            report.per_mode.append(
                PerModeRow(
                    "sampling_variance", p, lam[p], theory,
                    float(vals.var(ddof=1)), _variance_se(vals), n_trials, "sampling_variance",
                )
            )

    seed_theory = np.empty(n_seeds)
    seed_mse = np.empty(n_seeds)
    for s in range(n_seeds):
        xbar = ProbeCoefficients(xbars[s], "displacement")
        try:
            seed_theory[s] = 2.0 * detequiv.sampling_variance_trace(spec, gamma, n, xbar, grid2d) / d
        except OutOfRegimeError:
            summary["out_of_regime"].append({"table": "sampling_seed_mse", "seed_index": s})
            seed_theory[s] = float("nan")
        diff = mx_a[:, s, :] - mx_b[:, s, :]
        seed_mse[s] = float(np.mean(np.sum(diff**2, axis=1)) / d)
        report.per_point.append(PerPointRow("sampling_seed_mse", s, float(seed_theory[s]), seed_mse[s]))
    if n_seeds >= 3 and np.all(np.isfinite(seed_theory)):
        summary["spearman_seed_mse"] = spearman_rank_correlation(seed_theory, seed_mse)

    summary["runtime_seconds"] = time.perf_counter() - t_start
    report.summary = summary
    return report


def sampling_band_scan(
    population: PopulationModel,
    n_values,
    n_trials: int,
    seed: int,
    n_xbar_seeds: int = 8,
    band_fraction: float = 0.25,
) -> ExperimentReport:
    """Cross-split sampling MSE per eigenband over a grid of dataset sizes.

    Bands are the top and bottom ``band_fraction`` of eigenmodes; rows report
    the per-band per-coordinate MSE with its standard error.
    """
    t_start = time.perf_counter()
    d = population.dimension
    lam = _population_coords_lam(population)
    spec = population.to_spectrum()
    n_band = max(1, int(round(band_fraction * d)))
    bands = {"top": np.arange(n_band), "bottom": np.arange(d - n_band, d)}
    xbars = _rng(seed, 0, _TAG_XBAR).standard_normal((n_xbar_seeds, d))

    grid2d = tensor_grid_2d(halfline_grid(DEFAULT_NODES_2D), halfline_grid(DEFAULT_NODES_2D))
    rows = []
    for n in sorted(int(x) for x in n_values):
        # independent streams per dataset size, so decay-factor standard
        # errors across the n grid are uncorrelated
        seed_n = int(np.random.SeedSequence((seed, _TAG_BAND, n)).generate_state(1)[0])
        vals = {name: np.empty(n_trials) for name in bands}
        for start, stop in _chunk_ranges(n_trials, n, d):
            block = range(start, stop)
            mx = {}
            for split in (0, 1):
                coords = _draw_coord_chunk(lam, n, seed_n, block, split)
                evals, evecs = _batched_eigh(coords, n)
                mx[split] = np.einsum("tkj,tj,tij,si->tsk", evecs, np.sqrt(evals), evecs, xbars)
                del coords, evals, evecs
            diff = mx[0] - mx[1]
            for name, idx in bands.items():
                vals[name][start:stop] = np.mean(diff[:, :, idx] ** 2, axis=(1, 2))
        for name in bands:
            gamma = d / n
            theory = float("nan")
            try:
                band_theory = []
                for k in bands[name]:
                    v = ProbeCoefficients.unit_mode(k, d)
                    per_seed = [
                        2.0 * detequiv.sampling_variance(spec, gamma, n, v, ProbeCoefficients(xbars[s], "displacement"), grid2d)
                        for s in range(n_xbar_seeds)
                    ]
                    band_theory.append(np.mean(per_seed))
                theory = float(np.mean(band_theory))
            except OutOfRegimeError:
                pass
            rows.append((name, n, theory, float(vals[name].mean()), _mean_se(vals[name]), n_trials))

    report = ExperimentReport()
    report.extra["sampling_band_mse"] = (("band", "n", "theory", "mc", "mc_se", "n_trials"), rows)
    report.summary = {
        "experiment": "sampling_band_scan",
        "seed": seed,
        "d": d,
        "n_values": sorted(int(x) for x in n_values),
        "n_trials": n_trials,
        "band_modes": {k: v.tolist() for k, v in bands.items()},
        "runtime_seconds": time.perf_counter() - t_start,
    }
    report.summary["band_rows"] = [
        {"band": r[0], "n": r[1], "theory": r[2], "mc": r[3], "mc_se": r[4]} for r in rows
    ]
    return report


def stratified_split(
    samples,
    population: PopulationModel,
    pc_index: int,
    mode: str,
    subset_size: int,
    seed: int = 0,
):
    """Split samples by their projection onto a chosen population eigenvector.

    Returns (subset, reference) where reference is a disjoint random subset of
    equal size. mode ``top``/``mid``/``bottom`` take sorted blocks,
    ``top_plus_bottom`` interleaves the two extremes, ``random_halves``
    returns two disjoint random halves.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be an (n, d) matrix")
    n_total = x.shape[0]
    d = population.dimension
    if not 0 <= pc_index < d:
        raise ValueError("pc_index out of range")
    if mode not in ("top", "mid", "bottom", "top_plus_bottom", "random_halves"):
        raise ValueError(f"unknown stratification mode {mode!r}")
    if subset_size * 2 > n_total:
        raise ValueError("need subset_size * 2 <= number of samples")

    rng = _rng(seed, _TAG_REFERENCE, pc_index)
    if mode == "random_halves":
        perm = rng.permutation(n_total)
        return x[perm[:subset_size]], x[perm[subset_size : 2 * subset_size]]

    proj = x @ population.eigenbasis[:, pc_index]
    order = np.argsort(proj, kind="stable")
    if mode == "bottom":
        chosen = order[:subset_size]
    elif mode == "top":
        chosen = order[-subset_size:]
    elif mode == "mid":
        start = (n_total - subset_size) // 2
        chosen = order[start : start + subset_size]
    else:  # top_plus_bottom: alternate extremes, highest first
        n_top = (subset_size + 1) // 2
        n_bot = subset_size - n_top
        tops = order[::-1][:n_top]
        bots = order[:n_bot]
        chosen = np.empty(subset_size, dtype=int)
        chosen[0::2] = tops
        chosen[1::2] = bots
    mask = np.ones(n_total, dtype=bool)
    mask[chosen] = False
    complement = np.flatnonzero(mask)
    reference = rng.choice(complement, size=subset_size, replace=False)
    return x[chosen], x[reference]


_COUNTERFACTUAL_LABELS = ("top", "mid", "bottom", "top_plus_bottom", "split1", "split2")


def counterfactual_experiment(
    population: PopulationModel,
    n: int,
    pc_index: int,
    seeds,
    sigma_T: float = 80.0,
    sigma_0: float = 0.002,
    pool_factor: int = 10,
    n_noise: int = 256,
) -> ExperimentReport:
    """Pairwise cross-split MSE matrix of sampling maps built from stratified
    splits (sample-mean centering) versus two random halves, on shared initial
    noise; one matrix per master seed."""
    t_start = time.perf_counter()
    d = population.dimension
    seeds = [int(s) for s in np.atleast_1d(seeds)]
    labels = _COUNTERFACTUAL_LABELS
    matrices = {}
    for master in seeds:
        pool = draw_dataset(population, pool_factor * n, _rng(master, _TAG_POOL))
        subsets = {}
        for mode in ("top", "mid", "bottom", "top_plus_bottom"):
            subsets[mode], _ = stratified_split(pool, population, pc_index, mode, n, seed=master)
        subsets["split1"], subsets["split2"] = stratified_split(
            pool, population, pc_index, "random_halves", n, seed=master
        )
        x_t = sigma_T * _rng(master, _TAG_NOISE).standard_normal((n_noise, d))
        outputs = {}
        for label in labels:
            s = subsets[label]
            mu = s.mean(axis=0)
            centered = s - mu
            evals, evecs = np.linalg.eigh(centered.T @ centered / n)
            clipped = np.clip(evals, 1e-16, None)
            scaling = np.sqrt((clipped + sigma_0**2) / (clipped + sigma_T**2))
            w = (evecs * scaling) @ evecs.T
            outputs[label] = mu + (x_t - mu) @ w.T
        m = np.zeros((len(labels), len(labels)))
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if i < j:
                    m[i, j] = m[j, i] = mse_pairwise(outputs[a], outputs[b])
        matrices[master] = m

    mean_matrix = np.mean([matrices[s] for s in seeds], axis=0)
    rows = [(label, *[float(x) for x in mean_matrix[i]]) for i, label in enumerate(labels)]
    report = ExperimentReport()
    report.extra["counterfactual_mse"] = (("label", *labels), rows)
    report.summary = {
        "experiment": "counterfactual",
        "labels": list(labels),
        "seeds": seeds,
        "n": n,
        "pc_index": pc_index,
        "sigma_T": sigma_T,
        "sigma_0": sigma_0,
        "pool_factor": pool_factor,
        "n_noise": n_noise,
        "matrices": {str(s): matrices[s].tolist() for s in seeds},
        "runtime_seconds": time.perf_counter() - t_start,
    }
    return report
