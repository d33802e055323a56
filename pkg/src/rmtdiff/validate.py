"""Acceptance battery: every numbered correctness criterion as a runnable
check returning pass/fail plus the tables it was judged on.

The CLI ``validate`` subcommand runs the battery and writes one CSV per table;
the test suite asserts each criterion individually. All randomness derives
from the battery seed, so two runs with the same seed emit identical CSV
bodies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import detequiv
from .detequiv import ProbeCoefficients
from .kappa import kappa_solve
from .linalg import (
    PopulationModel,
    eigendecompose,
    half_resolvent_quadrature,
    matrix_sqrt_quadrature,
    random_rotation,
)
from .montecarlo import (
    ExperimentConfig,
    ExperimentReport,
    counterfactual_experiment,
    denoiser_split_experiment,
    sampling_band_scan,
    sampling_map_experiment,
)
from .quadrature import halfline_grid, tensor_grid_2d
from .spectrum import SpectralMeasure, df2_two, make_isotropic_spectrum, make_powerlaw_spectrum

DEFAULT_SEED = 20250814

# Closed-form isotropic roots (positive roots of the induced quadratics).
GOLDEN_ISO_G1_Z1 = 1.6180339887498949
GOLDEN_ISO_G2_Z05 = 1.7807764064044151

# Sampling-map probe modes sit away from the extreme top eigenvalue, where the
# asymptotic variance formula carries the largest finite-size corrections at
# desk scale (see the statistical notes in the README).
SAMPLING_PROBE_MODES = (3, 11, 23)
DENOISER_PROBE_MODES = (0, 7, 23)
DISPLACEMENT_MODE = 2


@dataclass
class ValidationScale:
    """Scale knob for smoke runs; criterion thresholds never change."""

    trials_scale: float = 1.0
    include_reproducibility: bool = True

    def trials(self, n: int) -> int:
        return max(2, int(round(n * self.trials_scale)))


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    detail: str
    reports: list[ExperimentReport] = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def status(self) -> str:
        return "pass" if self.passed else "FAIL"

    def line(self) -> str:
        return f"criterion {self.cid:2d} [{self.status}] {self.name}: {self.detail}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        result.runtime_seconds = time.perf_counter() - t0
        return result

    return wrapper


def _table_report(name: str, header, rows, summary=None) -> ExperimentReport:
    rep = ExperimentReport()
    rep.extra[name] = (tuple(header), rows)
    rep.summary = summary or {"table": name}
    return rep


@_timed
def criterion_1_kappa_solver(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    """Closed-form isotropic roots to 1e-10 and residual <= 1e-12 on random instances."""
    scale = scale or ValidationScale()
    iso = make_isotropic_spectrum(8, 1.0)
    k1 = kappa_solve(iso, 1.0, 1.0).kappa
    k2 = kappa_solve(iso, 2.0, 0.5).kappa
    ok_closed = abs(k1 - GOLDEN_ISO_G1_Z1) <= 1e-10 and abs(k2 - GOLDEN_ISO_G2_Z05) <= 1e-10

    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    n_inst = scale.trials(1000)
    worst = 0.0
    for _ in range(n_inst):
        d = int(rng.integers(1, 64))
        ev = np.sort(rng.uniform(0.0, 10.0, size=d))[::-1]
        spec = SpectralMeasure(ev, np.full(d, 1.0 / d), d)
        gamma = float(rng.uniform(0.0, 8.0))
        z = float(10.0 ** rng.uniform(-6.0, 6.0))
        sol = kappa_solve(spec, gamma, z)
        worst = max(worst, sol.residual / max(1.0, sol.kappa))
    ok_resid = worst <= 1e-12
    rows = [
        ("iso_gamma1_z1", k1, GOLDEN_ISO_G1_Z1, abs(k1 - GOLDEN_ISO_G1_Z1)),
        ("iso_gamma2_z05", k2, GOLDEN_ISO_G2_Z05, abs(k2 - GOLDEN_ISO_G2_Z05)),
        ("worst_scaled_residual", worst, 1e-12, worst),
    ]
    report = _table_report("kappa_closed_form", ("case", "value", "reference", "error"), rows)
    detail = f"closed-form errors {abs(k1 - GOLDEN_ISO_G1_Z1):.2e}/{abs(k2 - GOLDEN_ISO_G2_Z05):.2e}, worst residual {worst:.2e} over {n_inst} instances"
    return CriterionResult(1, "kappa solver correctness", ok_closed and ok_resid, detail, [report])


@_timed
def criterion_2_kappa_properties(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    spec = make_powerlaw_spectrum(64, 1.5)
    z_grid = np.geomspace(1e-4, 1e4, 25)
    kappas = np.array([kappa_solve(spec, 0.5, float(z)).kappa for z in z_grid])
    ok_gt = bool(np.all(kappas > z_grid))
    ok_mono_z = bool(np.all(np.diff(kappas) > 0))
    gammas = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
    by_gamma = np.array([kappa_solve(spec, g, 0.3).kappa for g in gammas])
    ok_mono_g = bool(np.all(np.diff(by_gamma) > 0))
    ratio = kappa_solve(spec, 2.0, 1e8).kappa / 1e8
    ok_ratio = 1.0 <= ratio <= 1.0 + 1e-3
    ok_g0 = kappa_solve(spec, 0.0, 0.37).kappa == 0.37
    rows = [("z", float(z), float(k)) for z, k in zip(z_grid, kappas)]
    report = _table_report("kappa_properties", ("kind", "argument", "kappa"), rows)
    passed = ok_gt and ok_mono_z and ok_mono_g and ok_ratio and ok_g0
    detail = f"kappa>z {ok_gt}, monotone(z) {ok_mono_z}, monotone(gamma) {ok_mono_g}, ratio(1e8)-1 = {ratio - 1:.2e}, gamma=0 exact {ok_g0}"
    return CriterionResult(2, "kappa properties", passed, detail, [report])


@_timed
def criterion_3_fractional_power_oracles(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    grid = halfline_grid(400)
    grid2d = tensor_grid_2d(halfline_grid(200), halfline_grid(200))

    worst_sqrt = 0.0
    n_sqrt = scale.trials(50)
    for _ in range(n_sqrt):
        d = int(rng.integers(2, 33))
        cond = float(10.0 ** rng.uniform(0.5, 4.0))
        q = random_rotation(d, rng)
        ev = np.geomspace(1.0, 1.0 / cond, d)
        a = (q * ev) @ q.T
        eig = eigendecompose(a)
        ref = (eig.eigenvectors * np.sqrt(np.clip(eig.eigenvalues, 0, None))) @ eig.eigenvectors.T
        out = matrix_sqrt_quadrature(a, grid)
        worst_sqrt = max(worst_sqrt, np.linalg.norm(out - ref) / np.linalg.norm(ref))

    worst_half = 0.0
    for _ in range(max(2, scale.trials(10))):
        d = int(rng.integers(2, 33))
        cond = float(10.0 ** rng.uniform(0.5, 4.0))
        q = random_rotation(d, rng)
        ev = np.geomspace(1.0, 1.0 / cond, d)
        a = (q * ev) @ q.T
        z = float(rng.uniform(0.05, 2.0))
        eig = eigendecompose(a)
        evc = np.clip(eig.eigenvalues, 0, None)
        ref = (eig.eigenvectors * np.sqrt(evc / (evc + z))) @ eig.eigenvectors.T
        out = half_resolvent_quadrature(a, z, grid2d)
        worst_half = max(worst_half, np.linalg.norm(out - ref) / np.linalg.norm(ref))

    d = 12
    q = random_rotation(d, rng)
    a = (q * np.geomspace(1, 0.01, d)) @ q.T
    s_val, u_val = 0.9, 0.2
    inv_s = np.linalg.inv(a + s_val * np.eye(d))
    inv_u = np.linalg.inv(a + u_val * np.eye(d))
    lhs = inv_s @ inv_u
    rhs = (inv_u - inv_s) / (s_val - u_val)
    resolvent_resid = np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs)

    passed = worst_sqrt < 1e-6 and worst_half < 1e-5 and resolvent_resid <= 1e-10
    rows = [
        ("matrix_sqrt_rel_frobenius", worst_sqrt, 1e-6),
        ("half_resolvent_rel_frobenius", worst_half, 1e-5),
        ("resolvent_identity_residual", resolvent_resid, 1e-10),
    ]
    report = _table_report("fractional_power_oracle", ("check", "value", "threshold"), rows)
    detail = f"sqrt {worst_sqrt:.2e} (<1e-6), half-resolvent {worst_half:.2e} (<1e-5), resolvent identity {resolvent_resid:.2e} (<=1e-10)"
    return CriterionResult(3, "fractional-power quadrature oracles", passed, detail, [report])


def _denoiser_acceptance_config(seed: int, scale: ValidationScale) -> ExperimentConfig:
    pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(32, 1.5))
    return ExperimentConfig(
        population=pop,
        n_samples=64,
        n_trials=scale.trials(5000),
        sigma_grid=(0.1, 1.0, 10.0),
        probe_modes=DENOISER_PROBE_MODES,
        displacement_mode=DISPLACEMENT_MODE,
        n_probe_points=0,
        seed=seed,
    )


_denoiser_run_cache: dict = {}


def _run_denoiser_acceptance(seed: int, scale: ValidationScale):
    key = (seed, scale.trials_scale)
    if key not in _denoiser_run_cache:
        _denoiser_run_cache[key] = denoiser_split_experiment(_denoiser_acceptance_config(seed, scale))
    return _denoiser_run_cache[key]


@_timed
def criterion_4_denoiser_expectation(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    report = _run_denoiser_acceptance(seed, scale)
    rows = [r for r in report.per_mode if r.table.startswith("denoiser_gain_")]
    within = [abs(r.mc - r.theory) <= 3 * r.mc_se for r in rows]
    frac = float(np.mean(within))
    passed = frac >= 0.9
    detail = f"{sum(within)}/{len(within)} (mode, sigma^2) cells within 3 SE ({frac:.1%}, need >= 90%)"
    return CriterionResult(4, "denoiser expectation deterministic equivalent", passed, detail, [report])


@_timed
def criterion_5_denoiser_variance(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    report = _run_denoiser_acceptance(seed, scale)
    var_rows = [r for r in report.per_mode if r.table.startswith("denoiser_variance_")]
    mse_rows = [r for r in report.per_mode if r.table.startswith("denoiser_mse_")]
    var_within = [abs(r.mc - r.theory) <= 3 * r.mc_se for r in var_rows]
    mse_within = [abs(r.mc - r.theory) <= 3 * r.mc_se for r in mse_rows]
    frac_var = float(np.mean(var_within))
    frac_mse = float(np.mean(mse_within))
    passed = frac_var >= 0.9 and frac_mse >= 0.9
    detail = (
        f"variance {sum(var_within)}/{len(var_within)} cells within 3 SE ({frac_var:.1%}); "
        f"cross-split MSE vs 2x theory {sum(mse_within)}/{len(mse_within)} ({frac_mse:.1%})"
    )
    return CriterionResult(5, "denoiser variance factorization", passed, detail, [report])


@_timed
def criterion_6_structure_factors(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    spec = make_powerlaw_spectrum(32, 1.5)
    kap = kappa_solve(spec, 0.5, 0.5).kappa
    grid = np.linspace(max(kap - 0.5, 1e-6), kap + 0.5, 1_000_001)  # 1e-6 resolution
    vals = detequiv.chi(grid, kap)
    argmax_err = abs(float(grid[np.argmax(vals)]) - kap)
    peak_err = abs(detequiv.chi(kap, kap) - 1.0 / (4.0 * kap))
    ok_chi = argmax_err <= 1.5e-6 and peak_err <= 1e-10

    lam_grid = np.geomspace(1e-4, 1e3, 300)
    xi_vals = detequiv.xi(lam_grid, 0.5, kap)
    ok_xi = bool(np.all(np.diff(xi_vals) > 0) and np.all(xi_vals < 1.0))

    gamma, n, s2 = 0.5, 64, 0.7
    kap2 = kappa_solve(spec, gamma, s2).kappa
    ev, w, d = spec.eigenvalues, spec.weights, spec.dimension
    sum_diamond = d * np.sum(w * ev / (ev + kap2) ** 2)
    avg_inhom = d * np.sum(w * (s2 + ev) * ev / (ev + kap2) ** 2)
    reassembled = kap2**2 / (n - df2_two(spec, kap2, kap2)) * sum_diamond * avg_inhom
    delta = detequiv.denoiser_variance_marginal(spec, gamma, n, s2)
    reassembly_err = abs(delta - reassembled) / reassembled

    d_small = 16
    spec_small = make_powerlaw_spectrum(d_small, 1.5)
    n_big = 10**5 * d_small
    halving = detequiv.denoiser_variance_marginal(spec_small, d_small / (2 * n_big), 2 * n_big, 1.0) / (
        detequiv.denoiser_variance_marginal(spec_small, d_small / n_big, n_big, 1.0)
    )
    ok_delta = reassembly_err <= 1e-10 and abs(halving - 0.5) <= 0.02 * 0.5

    rows = [
        ("chi_argmax_error", argmax_err, 1.5e-6),
        ("chi_peak_error", peak_err, 1e-10),
        ("xi_monotone_below_one", float(ok_xi), 1.0),
        ("delta_reassembly_rel_error", reassembly_err, 1e-10),
        ("delta_halving_ratio", halving, 0.5),
    ]
    report = _table_report("structure_factors", ("check", "value", "reference"), rows)
    passed = ok_chi and ok_xi and ok_delta
    detail = (
        f"chi argmax err {argmax_err:.1e}, peak err {peak_err:.1e}; xi monotone/<1 {ok_xi}; "
        f"Delta reassembly {reassembly_err:.1e}, halving ratio {halving:.4f}"
    )
    return CriterionResult(6, "anisotropy/inhomogeneity/scaling structure", passed, detail, [report])


def _sampling_acceptance_config(seed: int, scale: ValidationScale) -> ExperimentConfig:
    pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(32, 1.5))
    return ExperimentConfig(
        population=pop,
        n_samples=64,
        n_trials=scale.trials(2000),
        probe_modes=SAMPLING_PROBE_MODES,
        n_xbar_seeds=5,
        seed=seed,
    )


_sampling_run_cache: dict = {}


def _run_sampling_acceptance(seed: int, scale: ValidationScale):
    key = (seed, scale.trials_scale)
    if key not in _sampling_run_cache:
        _sampling_run_cache[key] = sampling_map_experiment(_sampling_acceptance_config(seed, scale))
    return _sampling_run_cache[key]


def clear_run_caches() -> None:
    """Drop memoized experiment runs so a fresh battery recomputes everything."""
    _denoiser_run_cache.clear()
    _sampling_run_cache.clear()


@_timed
def criterion_7_sampling_expectation(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    report = _run_sampling_acceptance(seed, scale)
    spec = make_powerlaw_spectrum(32, 1.5)
    rows = [r for r in report.per_mode if r.table == "sampling_gain"]
    within = [abs(r.mc - r.theory) <= 3 * r.mc_se for r in rows]
    frac = float(np.mean(within))
    overshrunk = all(r.mc < np.sqrt(r.lam) for r in rows)
    pop_limit = detequiv.sampling_gain_expected(spec, 0.0, spec.eigenvalues, halfline_grid(200))
    limit_err = float(np.max(np.abs(pop_limit - np.sqrt(spec.eigenvalues))))
    passed = frac >= 0.9 and overshrunk and limit_err <= 1e-6
    detail = (
        f"{sum(within)}/{len(within)} modes within 3 SE ({frac:.1%}); overshrinkage {overshrunk}; "
        f"gamma=0 limit err {limit_err:.1e}"
    )
    return CriterionResult(7, "sampling-map expectation deterministic equivalent", passed, detail, [report])


@_timed
def criterion_8_sampling_variance(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    report = _run_sampling_acceptance(seed, scale)
    spec = make_powerlaw_spectrum(32, 1.5)
    rows = [r for r in report.per_mode if r.table == "sampling_variance"]
    within = [abs(r.mc - r.theory) <= 3 * r.mc_se for r in rows]
    frac = float(np.mean(within))

    grid2d = tensor_grid_2d(halfline_grid(120), halfline_grid(120))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 8)))
    a = ProbeCoefficients(rng.standard_normal(32), "displacement")
    b = ProbeCoefficients(rng.standard_normal(32), "displacement")
    ab = detequiv.sampling_variance(spec, 0.5, 64, a, b, grid2d)
    ba = detequiv.sampling_variance(spec, 0.5, 64, b, a, grid2d)
    sym_err = abs(ab - ba) / abs(ab)

    d = 32
    v = ProbeCoefficients.unit_mode(SAMPLING_PROBE_MODES[0], d)
    decay = [
        detequiv.sampling_variance(spec, d / n, n, v, a, grid2d) for n in (2 * d, 8 * d, 32 * d)
    ]
    ok_decay = bool(np.all(np.diff(decay) < 0))

    passed = frac >= 0.85 and sym_err <= 1e-12 and ok_decay
    detail = (
        f"{sum(within)}/{len(within)} (probe, seed) cells within 3 SE ({frac:.1%}, need >= 85%); "
        f"v<->xbar symmetry {sym_err:.1e}; decay over n strictly decreasing {ok_decay}"
    )
    return CriterionResult(8, "sampling-map variance deterministic equivalent", passed, detail, [report])


@_timed
def criterion_9_inhomogeneity(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(64, 1.5))
    cfg = ExperimentConfig(
        population=pop,
        n_samples=1000,
        n_trials=scale.trials(400),
        sigma_grid=(1.0,),
        probe_modes=(0,),
        displacement_mode=DISPLACEMENT_MODE,
        n_probe_points=500,
        seed=seed,
    )
    report = denoiser_split_experiment(cfg)
    rho = report.summary["spearman_per_sigma"]["1.0"]
    passed = rho >= 0.9
    detail = f"rank correlation between inhomogeneity factor and cross-split MSE over 500 points: {rho:.4f} (need >= 0.9)"
    return CriterionResult(9, "pointwise inhomogeneity prediction", passed, detail, [report])


@_timed
def criterion_10_band_scaling(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    scale = scale or ValidationScale()
    d = 32
    pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(d, 1.5))
    report = sampling_band_scan(pop, n_values=[2 * d, 32 * d], n_trials=scale.trials(400), seed=seed)
    rows = {(r[0], r[1]): r for r in report.extra["sampling_band_mse"][1]}

    def factor_and_se(band):
        hi = rows[(band, 2 * d)]
        lo = rows[(band, 32 * d)]
        f = hi[3] / lo[3]
        rel = np.hypot(hi[4] / hi[3], lo[4] / lo[3])
        return f, f * rel

    f_top, se_top = factor_and_se("top")
    f_bot, se_bot = factor_and_se("bottom")
    separation = (f_top - f_bot) / np.hypot(se_top, se_bot)
    passed = f_top > f_bot and separation >= 3.0
    detail = (
        f"decay factor top {f_top:.2f}+-{se_top:.2f} vs bottom {f_bot:.2f}+-{se_bot:.2f}, "
        f"separation {separation:+.1f} SE (need top > bottom by >= 3 SE); at gamma <= 0.5 both bands "
        f"scale as 1/n and the ordering does not emerge (see README)"
    )
    return CriterionResult(10, "eigenband decay ordering at n in {2d, 32d}", passed, detail, [report])


@_timed
def criterion_11_counterfactual(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(32, 1.5))
    seeds = [seed, seed + 1, seed + 2]
    report = counterfactual_experiment(pop, n=1000, pc_index=1, seeds=seeds)
    labels = report.summary["labels"]
    ok_all = True
    details = []
    for s in seeds:
        m = np.asarray(report.summary["matrices"][str(s)])
        off = {
            (labels[i], labels[j]): m[i, j] for i in range(len(labels)) for j in range(i + 1, len(labels))
        }
        top_pair = max(off, key=off.get)
        min_pair = min(off, key=off.get)
        ok = set(top_pair) == {"top", "bottom"} and set(min_pair) == {"split1", "split2"}
        ok_all &= ok
        details.append(f"seed {s}: max {'/'.join(top_pair)}, min {'/'.join(min_pair)}")
    detail = "; ".join(details)
    return CriterionResult(11, "counterfactual split MSE matrix extremes", ok_all, detail, [report])


@_timed
def criterion_12_reproducibility(seed: int = DEFAULT_SEED, scale: ValidationScale | None = None) -> CriterionResult:
    """Two reduced-scale validate runs with one seed must emit identical CSV bytes."""
    import tempfile
    from pathlib import Path

    inner_scale = ValidationScale(trials_scale=0.02, include_reproducibility=False)
    digests = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            run_all(out_dir=tmp, seed=seed, scale=inner_scale, echo=None)
            body = {}
            for p in sorted(Path(tmp).glob("*.csv")):
                body[p.name] = p.read_bytes()
            digests.append(body)
    same_names = set(digests[0]) == set(digests[1])
    same_bodies = same_names and all(digests[0][k] == digests[1][k] for k in digests[0])
    n_files = len(digests[0])
    detail = f"{n_files} CSV files, byte-identical across two runs: {same_bodies}"
    return CriterionResult(12, "validate reproducibility", same_bodies, detail, [])


ALL_CRITERIA = (
    criterion_1_kappa_solver,
    criterion_2_kappa_properties,
    criterion_3_fractional_power_oracles,
    criterion_4_denoiser_expectation,
    criterion_5_denoiser_variance,
    criterion_6_structure_factors,
    criterion_7_sampling_expectation,
    criterion_8_sampling_variance,
    criterion_9_inhomogeneity,
    criterion_10_band_scaling,
    criterion_11_counterfactual,
    criterion_12_reproducibility,
)


def run_all(out_dir=None, seed: int = DEFAULT_SEED, scale: ValidationScale | None = None, echo=print):
    """Run the full battery; optionally write every table (and a result CSV) to out_dir."""
    scale = scale or ValidationScale()
    clear_run_caches()  # criterion 12 compares two genuinely recomputed runs
    results: list[CriterionResult] = []
    for fn in ALL_CRITERIA:
        if fn is criterion_12_reproducibility and not scale.include_reproducibility:
            continue
        result = fn(seed=seed, scale=scale)
        results.append(result)
        if echo:
            echo(result.line())

    if out_dir is not None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for res in results:
            for i, rep in enumerate(res.reports):
                prefix = f"c{res.cid:02d}_" if len(res.reports) == 1 else f"c{res.cid:02d}_{i}_"
                rep.write_csv(out, prefix=prefix)
        with open(out / "acceptance_report.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("criterion,name,status,detail\n")
            for res in results:
                safe_detail = res.detail.replace(",", ";")
                fh.write(f"{res.cid},{res.name},{res.status},{safe_detail}\n")
    return results
