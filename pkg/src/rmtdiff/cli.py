"""Command-line front end.

Subcommands: kappa-curve, denoiser, sampling, counterfactual, validate.
Settings come from built-in defaults, then an INI config file ([common] plus
one section per subcommand), then command-line flags; flags win. CSV files are
the artifact of record (floats at 17 significant digits); --plots additionally
emits PDF figures when matplotlib is available.

Exit codes: 0 success, 2 validation/configuration error, 3 numerical failure.
RMT_THREADS caps BLAS/OpenMP parallelism (set before heavy work starts).
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, OutOfRegimeError, SpectrumFormatError
from .kappa import kappa_path
from .linalg import PopulationModel
from .montecarlo import (
    ExperimentConfig,
    counterfactual_experiment,
    denoiser_split_experiment,
    format_float,
    sampling_band_scan,
    sampling_map_experiment,
)
from .detequiv import denoiser_variance_marginal
from .quadrature import DEFAULT_NODES_1D, DEFAULT_NODES_2D
from .spectrum import SpectralMeasure, load_spectrum, make_isotropic_spectrum, make_powerlaw_spectrum
from . import validate as validate_mod

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _apply_thread_cap() -> None:
    cap = os.environ.get("RMT_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def parse_spectrum_source(descriptor: str | None, file_path: str | None) -> SpectralMeasure:
    """Exactly one source: a generator descriptor or a CSV file path.

    Descriptors: "powerlaw:dim=32,exponent=1.5,scale=1.0" or
    "isotropic:dim=8,value=1.0" (scale/value optional).
    """
    if (descriptor is None) == (file_path is None):
        raise ValueError("exactly one spectrum source required (--spectrum or --spectrum-file)")
    if file_path is not None:
        return load_spectrum(file_path)
    kind, _, rest = descriptor.partition(":")
    params: dict[str, float] = {}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ValueError(f"malformed spectrum descriptor field {item!r}")
            params[key.strip()] = float(value)
    if kind == "powerlaw":
        return make_powerlaw_spectrum(
            int(params.pop("dim")), params.pop("exponent", 1.5), params.pop("scale", 1.0)
        )
    if kind == "isotropic":
        return make_isotropic_spectrum(int(params.pop("dim")), params.pop("value", 1.0))
    raise ValueError(f"unknown spectrum kind {kind!r} (expected powerlaw or isotropic)")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


_DEFAULTS: dict[str, dict] = {
    "common": {"seed": validate_mod.DEFAULT_SEED, "out": "out", "spectrum": None,
               "spectrum_file": None, "plots": False, "nodes": DEFAULT_NODES_1D,
               "nodes2d": DEFAULT_NODES_2D},
    "kappa-curve": {"gammas": "0.5,1.0,2.0", "z_min": 1e-4, "z_max": 1e4, "z_count": 60},
    "denoiser": {"n": 64, "trials": 2000, "sigmas": "0.1,1.0,10.0",
                 "probe_modes": "0,7,23", "displacement_mode": 2, "points": 200,
                 "n_grid": ""},
    "sampling": {"n": 64, "trials": 2000, "probe_modes": "3,11,23", "xbar_seeds": 5,
                 "sigma_t": 80.0, "sigma_0": 0.002, "wiener": False, "band_n_grid": ""},
    "counterfactual": {"n": 1000, "pc_index": 1, "seeds": "", "pool_factor": 10,
                       "noise_count": 256, "sigma_t": 80.0, "sigma_0": 0.002},
    "validate": {"trials_scale": 1.0},
}


def _load_config_file(path: str) -> dict[str, dict]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"config file not found: {path}")
    out: dict[str, dict] = {}
    for section in parser.sections():
        out[section] = {k.replace("-", "_"): v for k, v in parser.items(section)}
    return out


_BOOL_KEYS = {"plots", "wiener"}
_INT_KEYS = {"seed", "nodes", "nodes2d", "z_count", "n", "trials", "displacement_mode",
             "points", "xbar_seeds", "pc_index", "pool_factor", "noise_count"}
_FLOAT_KEYS = {"z_min", "z_max", "sigma_t", "sigma_0", "trials_scale"}


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if key in _BOOL_KEYS:
        return value.strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def resolve_settings(command: str, args: argparse.Namespace) -> dict:
    """defaults < [common] < [command] < explicit CLI flags."""
    settings = dict(_DEFAULTS["common"])
    settings.update(_DEFAULTS[command])
    if args.config:
        file_conf = _load_config_file(args.config)
        for section in ("common", command):
            for key, value in file_conf.get(section, {}).items():
                if key not in settings:
                    raise ValueError(f"unknown config key {key!r} in section [{section}]")
                settings[key] = value
    for key in settings:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            settings[key] = flag_val
    return {k: _coerce(k, v) for k, v in settings.items()}


def _write_rows(path: Path, header: tuple[str, ...], rows) -> None:
    """Write atomically: assemble the body first, remove any partial file on error."""
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(
                    ",".join(
                        x if isinstance(x, str) else format_float(x) if isinstance(x, float) else str(x)
                        for x in row
                    )
                    + "\n"
                )
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _maybe_plot(enabled: bool, fn, *args, **kwargs) -> None:
    if not enabled:
        return
    try:
        import matplotlib

        matplotlib.use("Agg")
        fn(*args, **kwargs)
    except ImportError:
        print("warning: matplotlib unavailable, skipping plots (CSV files are complete)", file=sys.stderr)


def _plot_kappa(out: Path, rows) -> None:
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    by_gamma: dict[float, list] = {}
    for gamma, z, kap, _ in rows:
        by_gamma.setdefault(gamma, []).append((z, kap))
    for gamma, pts in sorted(by_gamma.items()):
        zs, ks = zip(*sorted(pts))
        ax.loglog(zs, ks, label=f"gamma={gamma:g}")
    all_z = sorted({r[1] for r in rows})
    ax.loglog(all_z, all_z, "k--", lw=0.8, label="identity")
    ax.set_xlabel("z")
    ax.set_ylabel("kappa(z)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "kappa_curve.pdf")
    plt.close(fig)


def _plot_per_mode(out: Path, report, table: str, filename: str, logy: bool = True) -> None:
    import matplotlib.pyplot as plt

    rows = [r for r in report.per_mode if r.table == table]
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    modes = [r.mode for r in rows]
    ax.errorbar(modes, [r.mc for r in rows], yerr=[3 * r.mc_se for r in rows], fmt="o", ms=3, label="monte carlo")
    ax.plot(modes, [r.theory for r in rows], "-", label="theory")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("eigenmode")
    ax.set_ylabel(table)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / filename)
    plt.close(fig)


def cmd_kappa_curve(settings: dict) -> int:
    spec = parse_spectrum_source(settings["spectrum"], settings["spectrum_file"])
    gammas = _parse_floats(settings["gammas"])
    if not gammas:
        raise ValueError("at least one gamma required")
    if settings["z_min"] <= 0 or settings["z_max"] <= settings["z_min"] or settings["z_count"] < 2:
        raise ValueError("need 0 < z_min < z_max and z_count >= 2")
    z_grid = np.geomspace(settings["z_min"], settings["z_max"], settings["z_count"])
    rows = []
    for gamma in gammas:
        if gamma < 0:
            raise ValueError("gamma must be >= 0")
        sols = kappa_path(spec, gamma, z_grid)
        for sol in sols:
            rows.append((float(gamma), float(sol.z), float(sol.kappa), float(sol.kappa / sol.z)))
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "kappa_curve.csv", ("gamma", "z", "kappa", "kappa_over_z"), rows)
    _maybe_plot(settings["plots"], _plot_kappa, out, rows)
    print(f"wrote {out / 'kappa_curve.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _population_from(settings: dict) -> PopulationModel:
    spec = parse_spectrum_source(settings["spectrum"], settings["spectrum_file"])
    return PopulationModel.from_spectrum(spec)


def cmd_denoiser(settings: dict) -> int:
    pop = _population_from(settings)
    config = ExperimentConfig(
        population=pop,
        n_samples=settings["n"],
        n_trials=settings["trials"],
        sigma_grid=_parse_floats(settings["sigmas"]),
        probe_modes=_parse_ints(settings["probe_modes"]),
        displacement_mode=settings["displacement_mode"],
        n_probe_points=settings["points"],
        quadrature_nodes=settings["nodes"],
        quadrature_nodes_2d=settings["nodes2d"],
        seed=settings["seed"],
    )
    report = denoiser_split_experiment(config)
    out = Path(settings["out"])
    files = report.write_csv(out)
    # overall-variance decay table over a dataset-size grid
    d = pop.dimension
    n_grid = _parse_ints(settings["n_grid"]) or (2 * d, 8 * d, 32 * d)
    spec = pop.to_spectrum()
    s2 = config.sigma_grid[min(1, len(config.sigma_grid) - 1)]
    delta_rows = []
    for n in sorted(n_grid):
        delta = denoiser_variance_marginal(spec, d / n, n, s2)
        small = ExperimentConfig(
            population=pop, n_samples=n, n_trials=max(16, settings["trials"] // 8),
            sigma_grid=(s2,), probe_modes=config.probe_modes,
            displacement_mode=config.displacement_mode,
            n_probe_points=min(64, max(settings["points"], 1)), seed=settings["seed"],
        )
        rep_n = denoiser_split_experiment(small)
        mses = [r.mse for r in rep_n.per_point]
        mc_marginal = 0.5 * d * float(np.mean(mses))
        delta_rows.append((n, float(delta), mc_marginal, small.n_trials))
    _write_rows(out / "denoiser_marginal_vs_n.csv", ("n", "delta_theory", "mc_marginal", "n_trials"), delta_rows)
    _maybe_plot(settings["plots"], _plot_per_mode, out, report, "denoiser_gain_s0", "denoiser_gain.pdf")
    print(f"wrote {len(files) + 1} files to {out} (sigma grid {list(config.sigma_grid)})")
    return EXIT_OK


def cmd_sampling(settings: dict) -> int:
    pop = _population_from(settings)
    config = ExperimentConfig(
        population=pop,
        n_samples=settings["n"],
        n_trials=settings["trials"],
        probe_modes=_parse_ints(settings["probe_modes"]),
        n_xbar_seeds=settings["xbar_seeds"],
        sigma_T=settings["sigma_t"],
        sigma_0=settings["sigma_0"],
        include_wiener=settings["wiener"],
        quadrature_nodes=settings["nodes"],
        quadrature_nodes_2d=settings["nodes2d"],
        seed=settings["seed"],
    )
    report = sampling_map_experiment(config)
    out = Path(settings["out"])
    files = report.write_csv(out)
    d = pop.dimension
    band_grid = _parse_ints(settings["band_n_grid"]) or (2 * d, 8 * d, 32 * d)
    band_report = sampling_band_scan(
        pop, n_values=band_grid, n_trials=max(16, settings["trials"] // 4), seed=settings["seed"]
    )
    band_files = band_report.write_csv(out, prefix="band_")
    _maybe_plot(settings["plots"], _plot_per_mode, out, report, "sampling_gain", "sampling_gain.pdf")
    print(f"wrote {len(files) + len(band_files)} files to {out} (sigma_0 floor {config.sigma_0} recorded)")
    return EXIT_OK


def cmd_counterfactual(settings: dict) -> int:
    pop = _population_from(settings)
    seeds = _parse_ints(settings["seeds"]) or (settings["seed"], settings["seed"] + 1, settings["seed"] + 2)
    report = counterfactual_experiment(
        pop,
        n=settings["n"],
        pc_index=settings["pc_index"],
        seeds=seeds,
        sigma_T=settings["sigma_t"],
        sigma_0=settings["sigma_0"],
        pool_factor=settings["pool_factor"],
        n_noise=settings["noise_count"],
    )
    out = Path(settings["out"])
    files = report.write_csv(out)
    print(f"wrote {len(files)} files to {out} (seeds {list(seeds)})")
    return EXIT_OK


def cmd_validate(settings: dict) -> int:
    scale = validate_mod.ValidationScale(trials_scale=settings["trials_scale"])
    results = validate_mod.run_all(out_dir=settings["out"], seed=settings["seed"], scale=scale)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed; tables in {settings['out']}")
    return EXIT_OK if n_pass == len(results) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtdiff",
        description="Finite-data linear diffusion: renormalized-noise theory vs Monte-Carlo simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="INI config file ([common] plus per-subcommand sections)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--plots", action="store_const", const=True, help="also write PDF plots")
        p.add_argument("--nodes", type=int, help="1D quadrature node count")
        p.add_argument("--nodes2d", type=int, help="2D quadrature node count per axis")
        p.add_argument("--spectrum", help="generator descriptor, e.g. powerlaw:dim=32,exponent=1.5,scale=1.0")
        p.add_argument("--spectrum-file", dest="spectrum_file", help="spectrum CSV path")

    k = sub.add_parser("kappa-curve", help="renormalized-noise curves kappa(z) per gamma")
    add_common(k)
    k.add_argument("--gammas", help="comma list of aspect ratios")
    k.add_argument("--z-min", dest="z_min", type=float)
    k.add_argument("--z-max", dest="z_max", type=float)
    k.add_argument("--z-count", dest="z_count", type=int)

    dn = sub.add_parser("denoiser", help="denoiser expectation/variance/inhomogeneity experiment")
    add_common(dn)
    dn.add_argument("--n", type=int, help="samples per dataset draw")
    dn.add_argument("--trials", type=int, help="dataset realizations")
    dn.add_argument("--sigmas", help="comma list of noise variances sigma^2")
    dn.add_argument("--probe-modes", dest="probe_modes", help="comma list of probe eigenmode indices (0-based)")
    dn.add_argument("--displacement-mode", dest="displacement_mode", type=int)
    dn.add_argument("--points", type=int, help="inhomogeneity probe points per sigma")
    dn.add_argument("--n-grid", dest="n_grid", help="comma list of dataset sizes for the decay table")

    sp = sub.add_parser("sampling", help="sampling-map expectation/variance/band experiment")
    add_common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--probe-modes", dest="probe_modes")
    sp.add_argument("--xbar-seeds", dest="xbar_seeds", type=int, help="fixed initial-noise seeds")
    sp.add_argument("--sigma-T", dest="sigma_t", type=float)
    sp.add_argument("--sigma-0", dest="sigma_0", type=float)
    sp.add_argument("--wiener", action="store_const", const=True, help="include finite-sigma_T Wiener gains")
    sp.add_argument("--band-n-grid", dest="band_n_grid", help="dataset sizes for the band table")

    cf = sub.add_parser("counterfactual", help="stratified-split sampling-map MSE matrix")
    add_common(cf)
    cf.add_argument("--n", type=int, help="samples per split")
    cf.add_argument("--pc-index", dest="pc_index", type=int)
    cf.add_argument("--seeds", help="comma list of master seeds (default: seed, seed+1, seed+2)")
    cf.add_argument("--pool-factor", dest="pool_factor", type=int)
    cf.add_argument("--noise-count", dest="noise_count", type=int)

    va = sub.add_parser("validate", help="run the full acceptance battery")
    add_common(va)
    va.add_argument("--trials-scale", dest="trials_scale", type=float,
                    help="scale Monte-Carlo trial counts (smoke runs; thresholds unchanged)")

    return parser


_DISPATCH = {
    "kappa-curve": cmd_kappa_curve,
    "denoiser": cmd_denoiser,
    "sampling": cmd_sampling,
    "counterfactual": cmd_counterfactual,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args.command, args)
    except (ValueError, SpectrumFormatError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return _DISPATCH[args.command](settings)
    except (ValueError, SpectrumFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, OutOfRegimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
