import numpy as np
import pytest

from rmtdiff import (
    ExperimentConfig,
    PopulationModel,
    counterfactual_experiment,
    denoiser_split_experiment,
    draw_dataset,
    make_powerlaw_spectrum,
    mse_pairwise,
    random_rotation,
    sampling_band_scan,
    sampling_map_experiment,
    stratified_split,
)


def small_population(d=8, exponent=1.0):
    return PopulationModel.from_spectrum(make_powerlaw_spectrum(d, exponent))


class TestDrawDataset:
    def test_zero_spectrum_returns_mean(self):
        d = 4
        mu = np.array([1.0, -2.0, 0.5, 3.0])
        pop = PopulationModel(mu, np.eye(d), np.zeros(d))
        x = draw_dataset(pop, 6, 0)
        np.testing.assert_array_equal(x, np.tile(mu, (6, 1)))

    def test_same_seed_bitwise_identical(self):
        pop = small_population()
        a = draw_dataset(pop, 100, 1234)
        b = draw_dataset(pop, 100, 1234)
        np.testing.assert_array_equal(a, b)

    def test_different_seed_differs(self):
        pop = small_population()
        a = draw_dataset(pop, 10, 1)
        b = draw_dataset(pop, 10, 2)
        assert not np.array_equal(a, b)

    def test_sample_covariance_concentrates(self):
        d = 8
        pop = PopulationModel(np.zeros(d), np.eye(d), np.ones(d))
        x = draw_dataset(pop, 100_000, 7)
        cov = x.T @ x / 100_000
        assert np.max(np.abs(cov - np.eye(d))) < 0.05

    def test_respects_eigenbasis(self):
        d = 6
        q = random_rotation(d, 5)
        spec = make_powerlaw_spectrum(d, 1.0)
        pop = PopulationModel.from_spectrum(spec, eigenbasis=q)
        x = draw_dataset(pop, 200_000, 11)
        cov = x.T @ x / x.shape[0]
        expected = (q * spec.eigenvalues) @ q.T
        assert np.max(np.abs(cov - expected)) < 0.05


class TestMsePairwise:
    def test_identical_sets_zero(self):
        a = np.random.default_rng(0).standard_normal((10, 3))
        assert mse_pairwise(a, a) == 0.0

    def test_iid_normal_pairs_double_variance(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((100_000, 1))
        b = rng.standard_normal((100_000, 1))
        vals = (a - b) ** 2
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(mse_pairwise(a, b) - 2.0) <= 3 * se

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_pairwise(np.ones((3, 2)), np.ones((2, 3)))


class TestConfigValidation:
    def test_rejects_bad_trials(self):
        pop = small_population()
        with pytest.raises(ValueError):
            ExperimentConfig(pop, n_samples=16, n_trials=1, probe_modes=(0,))

    def test_rejects_probe_out_of_range(self):
        pop = small_population()
        with pytest.raises(ValueError):
            ExperimentConfig(pop, n_samples=16, n_trials=4, probe_modes=(8,))

    def test_rejects_nonpositive_sigma(self):
        pop = small_population()
        with pytest.raises(ValueError):
            ExperimentConfig(pop, n_samples=16, n_trials=4, sigma_grid=(0.0,), probe_modes=(0,))


class TestDenoiserExperiment:
    def make_config(self, **kw):
        pop = small_population()
        defaults = dict(
            population=pop,
            n_samples=32,
            n_trials=50,
            sigma_grid=(1.0,),
            probe_modes=(0, 3),
            displacement_mode=2,
            n_probe_points=16,
            seed=99,
        )
        defaults.update(kw)
        return ExperimentConfig(**defaults)

    def test_deterministic_given_config(self):
        cfg = self.make_config()
        r1 = denoiser_split_experiment(cfg)
        r2 = denoiser_split_experiment(self.make_config())
        assert [row.mc for row in r1.per_mode] == [row.mc for row in r2.per_mode]
        assert [row.mse for row in r1.per_point] == [row.mse for row in r2.per_point]

    def test_tables_and_provenance(self):
        report = denoiser_split_experiment(self.make_config())
        tables = report.per_mode_tables()
        assert set(tables) == {"denoiser_gain_s0", "denoiser_variance_s0", "denoiser_mse_s0"}
        assert len(tables["denoiser_gain_s0"]) == 8
        assert len(tables["denoiser_variance_s0"]) == 2
        for row in report.per_mode:
            assert row.operation
            assert row.mc_se > 0
        assert len(report.per_point) == 16
        assert "spearman_per_sigma" in report.summary

    def test_mse_rows_track_double_variance_theory(self):
        report = denoiser_split_experiment(self.make_config())
        var_rows = {r.mode: r for r in report.per_mode if r.table == "denoiser_variance_s0"}
        mse_rows = {r.mode: r for r in report.per_mode if r.table == "denoiser_mse_s0"}
        for mode, vrow in var_rows.items():
            assert mse_rows[mode].theory == pytest.approx(2 * vrow.theory, rel=1e-14)

    def test_large_n_consistency_limit(self):
        pop = small_population()
        cfg = ExperimentConfig(
            population=pop, n_samples=50_000, n_trials=3, sigma_grid=(1.0,),
            probe_modes=(0,), displacement_mode=2, n_probe_points=8, seed=1,
        )
        report = denoiser_split_experiment(cfg)
        lam_max = pop.eigenvalues[0]
        for row in report.per_point:
            assert row.mse < 1e-4 * lam_max
        for row in report.per_mode:
            if row.table.startswith("denoiser_mse_"):
                assert row.mc < 1e-4 * lam_max

    def test_theory_reproducible_from_detequiv(self):
        from rmtdiff import ProbeCoefficients, denoiser_variance

        cfg = self.make_config()
        report = denoiser_split_experiment(cfg)
        spec = cfg.population.to_spectrum()
        lam = cfg.population.eigenvalues
        radius = np.sqrt(1.0 + lam[2])
        row = next(r for r in report.per_mode if r.table == "denoiser_variance_s0" and r.mode == 0)
        recomputed = denoiser_variance(
            spec, cfg.gamma, cfg.n_samples, 1.0,
            ProbeCoefficients.unit_mode(0, 8),
            ProbeCoefficients.displacement_mode(2, 8, radius),
        ).value
        assert row.theory == pytest.approx(recomputed, rel=1e-13)


class TestSamplingExperiment:
    def make_config(self, **kw):
        pop = small_population()
        defaults = dict(
            population=pop,
            n_samples=32,
            n_trials=60,
            probe_modes=(0, 4),
            n_xbar_seeds=3,
            seed=17,
            quadrature_nodes=100,
            quadrature_nodes_2d=60,
        )
        defaults.update(kw)
        return ExperimentConfig(**defaults)

    def test_population_limit_gains(self):
        pop = small_population()
        cfg = ExperimentConfig(
            population=pop, n_samples=8 * 10**5, n_trials=3, probe_modes=(0,),
            n_xbar_seeds=2, seed=3, quadrature_nodes=100, quadrature_nodes_2d=40,
        )
        report = sampling_map_experiment(cfg)
        gains = {r.mode: r for r in report.per_mode if r.table == "sampling_gain"}
        for k, row in gains.items():
            assert row.mc == pytest.approx(np.sqrt(pop.eigenvalues[k]), rel=0.01)

    def test_overshrinkage_at_small_n(self):
        cfg = self.make_config(n_samples=16, n_trials=400)
        report = sampling_map_experiment(cfg)
        rows = [r for r in report.per_mode if r.table == "sampling_gain"]
        lam = small_population().eigenvalues
        low_modes = [r for r in rows if r.mode >= 4]
        for r in low_modes:
            assert r.mc < np.sqrt(lam[r.mode]) - 3 * r.mc_se

    def test_determinism_and_structure(self):
        r1 = sampling_map_experiment(self.make_config())
        r2 = sampling_map_experiment(self.make_config())
        assert [row.mc for row in r1.per_mode] == [row.mc for row in r2.per_mode]
        tables = r1.per_mode_tables()
        assert "sampling_gain" in tables and "sampling_variance" in tables
        assert len(tables["sampling_variance"]) == 2 * 3  # probes x seeds
        assert len(r1.per_point) == 3
        assert "df2_min_margin" in r1.summary
        assert r1.summary["df2_min_margin"] > 0

    def test_wiener_table_included_when_requested(self):
        cfg = self.make_config(include_wiener=True, n_trials=20)
        report = sampling_map_experiment(cfg)
        rows = [r for r in report.per_mode if r.table == "sampling_wiener_gain"]
        assert len(rows) == 8
        assert report.summary["sigma_0"] == cfg.sigma_0


class TestBandScan:
    def test_gamma_above_one_band_ordering(self):
        # the eigenband effect lives in the rank-deficient regime: going from
        # n = d/2 to n = 8d, the top band's MSE decays by a larger factor
        pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(32, 1.5))
        report = sampling_band_scan(pop, n_values=[16, 256], n_trials=300, seed=5)
        rows = {(r[0], r[1]): r for r in report.extra["sampling_band_mse"][1]}
        f_top = rows[("top", 16)][3] / rows[("top", 256)][3]
        f_bot = rows[("bottom", 16)][3] / rows[("bottom", 256)][3]
        assert f_top > f_bot

    def test_rows_and_summary(self):
        pop = small_population()
        report = sampling_band_scan(pop, n_values=[16, 64], n_trials=30, seed=2, n_xbar_seeds=2)
        header, rows = report.extra["sampling_band_mse"]
        assert header == ("band", "n", "theory", "mc", "mc_se", "n_trials")
        assert len(rows) == 4
        assert set(report.summary["band_modes"]) == {"top", "bottom"}


class TestStratifiedSplit:
    def setup_method(self):
        self.pop = small_population()
        self.samples = draw_dataset(self.pop, 400, 21)

    def test_random_halves_partition(self):
        a, b = stratified_split(self.samples, self.pop, 1, "random_halves", 150)
        assert a.shape == b.shape == (150, 8)
        combined = np.vstack([a, b])
        # disjoint and drawn from the input (row-wise membership)
        as_set = {tuple(r) for r in combined}
        input_set = {tuple(r) for r in self.samples}
        assert len(as_set) == 300
        assert as_set <= input_set

    def test_top_above_bottom(self):
        top, _ = stratified_split(self.samples, self.pop, 1, "top", 100)
        bot, _ = stratified_split(self.samples, self.pop, 1, "bottom", 100)
        u = self.pop.eigenbasis[:, 1]
        assert (top @ u).mean() > (bot @ u).mean()

    def test_extremes_have_higher_projection_variance(self):
        tb, _ = stratified_split(self.samples, self.pop, 1, "top_plus_bottom", 100)
        mid, _ = stratified_split(self.samples, self.pop, 1, "mid", 100)
        u = self.pop.eigenbasis[:, 1]
        assert (tb @ u).var() > (mid @ u).var()

    def test_reference_disjoint(self):
        sub, ref = stratified_split(self.samples, self.pop, 0, "top", 120)
        sub_set = {tuple(r) for r in sub}
        ref_set = {tuple(r) for r in ref}
        assert not (sub_set & ref_set)
        assert len(ref_set) == 120

    def test_insufficient_samples(self):
        with pytest.raises(ValueError):
            stratified_split(self.samples[:10], self.pop, 0, "random_halves", 6)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            stratified_split(self.samples, self.pop, 0, "sideways", 10)


class TestCounterfactual:
    def test_matrix_structure(self):
        pop = PopulationModel.from_spectrum(make_powerlaw_spectrum(16, 1.5))
        report = counterfactual_experiment(pop, n=200, pc_index=1, seeds=[0], n_noise=64)
        labels = report.summary["labels"]
        m = np.asarray(report.summary["matrices"]["0"])
        assert m.shape == (6, 6)
        np.testing.assert_allclose(np.diag(m), 0.0, atol=1e-30)
        np.testing.assert_allclose(m, m.T, atol=1e-30)
        off = {
            (labels[i], labels[j]): m[i, j]
            for i in range(6)
            for j in range(i + 1, 6)
        }
        assert set(max(off, key=off.get)) == {"top", "bottom"}
        assert set(min(off, key=off.get)) == {"split1", "split2"}

    def test_deterministic(self):
        pop = small_population()
        r1 = counterfactual_experiment(pop, n=100, pc_index=1, seeds=[3], n_noise=32)
        r2 = counterfactual_experiment(pop, n=100, pc_index=1, seeds=[3], n_noise=32)
        assert r1.summary["matrices"] == r2.summary["matrices"]


class TestReportCsv:
    def test_write_and_parse(self, tmp_path):
        pop = small_population()
        cfg = ExperimentConfig(
            population=pop, n_samples=32, n_trials=20, sigma_grid=(1.0,),
            probe_modes=(0,), displacement_mode=2, n_probe_points=4, seed=0,
        )
        report = denoiser_split_experiment(cfg)
        files = report.write_csv(tmp_path, prefix="t_")
        names = {f.name for f in files}
        assert "t_denoiser_gain_s0.csv" in names
        assert "t_denoiser_split_summary.json" in names
        gain = (tmp_path / "t_denoiser_gain_s0.csv").read_text().splitlines()
        assert gain[0] == "mode,lambda,theory,mc,mc_se,n_trials"
        parts = gain[1].split(",")
        assert len(parts) == 6
        float(parts[1]), float(parts[2]), float(parts[3])  # parses
        point = (tmp_path / "t_denoiser_point_mse_s0.csv").read_text().splitlines()
        assert point[0] == "point_id,theory_factor,mse"

    def test_unbiased_covariance_across_trials(self):
        # mean of Sigma_hat over trials approaches Sigma at rate 1/sqrt(trials * n)
        pop = small_population()
        trials, n = 100, 64
        acc = np.zeros((8, 8))
        for t in range(trials):
            x = draw_dataset(pop, n, np.random.SeedSequence((5, t)))
            acc += x.T @ x / n
        acc /= trials
        err = np.max(np.abs(acc - np.diag(pop.eigenvalues)))
        assert err < 5.0 / np.sqrt(trials * n)
