"""Training, individualization, metrics, and evaluation."""

import numpy as np
import pytest

from hrtfkit import dsp, pipeline
from hrtfkit.dataset import AnthropometryTable, HrirArchive, save_model
from hrtfkit.pca import PcaModel
from hrtfkit.pipeline import (error_percent, evaluate, individualize,
                              sd_score, train)
from hrtfkit.regression import RegressionModel


class TestTrain:
    def test_exact_world_recovers_linear_structure(self, small_world, small_model):
        # every per-cell regression interpolates the training weights
        from hrtfkit.regression import build_design_matrix
        design = build_design_matrix(small_world.anthro)
        X = design.values
        q = small_model.pca.q
        per_subject = small_model.pca.weights.T.reshape(
            len(design.subjects), 2, -1, q)
        scale = np.abs(per_subject).max()
        for e in range(2):
            for d in range(per_subject.shape[2]):
                for i in range(q):
                    w = per_subject[:, e, d, i]
                    fitted = X @ small_model.regression.coefficients[e, d, i]
                    assert np.abs(fitted - w).max() < 1e-9 * max(scale, 1.0)

    def test_pca_reconstruction_error_tiny_on_rank_q_world(self, small_world, small_model):
        report = evaluate(small_model, small_world.archive, mode="pca")
        assert report.overall_mean_error() < 1e-6

    def test_mean_delays_average_planted_integers(self, small_world, small_model):
        assert np.array_equal(small_model.mean_delays,
                              small_world.delays.mean(axis=0))

    def test_single_subject_archive_fails_at_regression_stage(self, small_world):
        archive = small_world.archive
        one = HrirArchive(sample_rate=archive.sample_rate,
                          hrir_length=archive.hrir_length,
                          subjects=archive.subjects[:1],
                          directions=archive.directions,
                          data=archive.data[:1])
        table = AnthropometryTable(subjects=small_world.anthro.subjects[:1],
                                   values=small_world.anthro.values[:1])
        with pytest.raises(pipeline.PipelineError, match=r"\[regression\]"):
            train(one, table, q=2)

    def test_misaligned_table_rejected(self, small_world):
        table = AnthropometryTable(
            subjects=tuple(reversed(small_world.anthro.subjects)),
            values=small_world.anthro.values[::-1])
        with pytest.raises(pipeline.PipelineError, match=r"\[alignment\]"):
            train(small_world.archive, table, q=2)

    def test_hrir_longer_than_transform_rejected(self, small_world):
        archive = small_world.archive
        big = HrirArchive(sample_rate=archive.sample_rate, hrir_length=300,
                          subjects=archive.subjects, directions=archive.directions,
                          data=np.pad(archive.data, ((0, 0), (0, 0), (0, 0), (0, 44))))
        with pytest.raises(pipeline.PipelineError, match="exceeds n_fft"):
            train(big, small_world.anthro, q=2)

    def test_provenance_and_metadata(self, small_world, small_model):
        assert "12 subjects" in small_model.provenance
        assert small_model.sample_rate == small_world.archive.sample_rate
        assert small_model.directions == small_world.archive.directions

    def test_training_is_deterministic(self, small_world, tmp_path):
        m1 = train(small_world.archive, small_world.anthro, q=3)
        m2 = train(small_world.archive, small_world.anthro, q=3)
        save_model(m1, tmp_path / "a.hrtf")
        save_model(m2, tmp_path / "b.hrtf")
        assert (tmp_path / "a.hrtf").read_bytes() == (tmp_path / "b.hrtf").read_bytes()

    def test_threads_do_not_change_results(self, small_world):
        m1 = train(small_world.archive, small_world.anthro, q=3, threads=1)
        m4 = train(small_world.archive, small_world.anthro, q=3, threads=4)
        assert np.array_equal(m1.mean_delays, m4.mean_delays)
        assert np.array_equal(m1.pca.basis, m4.pca.basis)


class TestIndividualize:
    def test_training_subject_magnitudes_match_originals(self, small_world, small_model):
        H, _ = pipeline.magnitude_matrix(small_world.archive)
        n_dir = small_world.archive.n_directions
        mags = H.T.reshape(-1, 2, n_dir, 128)
        s = 4
        feats = small_world.anthro.values[s, list(small_model.feature_indices)]
        result = individualize(small_model, feats)
        rel = np.abs(result.magnitudes - mags[s]).max() / mags[s].max()
        assert rel < 1e-6
        for e in range(2):
            for d in range(n_dir):
                assert error_percent(mags[s, e, d], result.magnitudes[e, d]) < 1e-4

    def test_accepts_mapping_by_name(self, small_world, small_model):
        from hrtfkit.measurements import MEASUREMENT_LABELS
        s = 2
        row = small_world.anthro.values[s]
        mapping = {MEASUREMENT_LABELS[i]: row[i] for i in small_model.feature_indices}
        by_name = individualize(small_model, mapping)
        by_vec = individualize(small_model, row[list(small_model.feature_indices)])
        assert np.array_equal(by_name.hrirs, by_vec.hrirs)

    def test_missing_feature_name_raises(self, small_model):
        with pytest.raises(ValueError, match="missing anthropometric feature 'x1'"):
            pipeline.features_from_mapping(small_model, {"x3": 1.0})

    def test_unknown_keys_reported(self, small_model):
        from hrtfkit.measurements import MEASUREMENT_LABELS
        mapping = {MEASUREMENT_LABELS[i]: 10.0 for i in small_model.feature_indices}
        mapping["bogus"] = 1.0
        _, unknown = pipeline.features_from_mapping(small_model, mapping)
        assert unknown == ["bogus"]

    def test_deterministic(self, small_model):
        feats = np.linspace(5.0, 40.0, 8)
        a = individualize(small_model, feats)
        b = individualize(small_model, feats)
        assert np.array_equal(a.hrirs, b.hrirs)
        assert np.array_equal(a.magnitudes, b.magnitudes)

    def test_min_phase_stage_preserves_model_magnitude(self, small_model):
        feats = np.linspace(5.0, 40.0, 8)
        result = individualize(small_model, feats)
        for e in range(2):
            for d in range(0, result.magnitudes.shape[1], 2):
                spec = np.abs(dsp.fft(result.hrirs[e, d], 256))[:128]
                rel = np.abs(spec - result.magnitudes[e, d]).max() \
                    / result.magnitudes[e, d].max()
                assert rel < 1e-5

    def test_delay_insertion_leaves_magnitudes_alone(self, small_model):
        feats = np.linspace(5.0, 40.0, 8)
        result = individualize(small_model, feats)
        mags, _ = dsp.min_phase_signals(result.magnitudes.reshape(-1, 128))
        for i, row in enumerate(result.hrirs.reshape(-1, 256)):
            before = np.abs(dsp.fft(mags[i], 256))
            after = np.abs(dsp.fft(row, 256))
            assert np.abs(before - after).max() < 1e-9 * before.max()

    def test_flat_model_yields_delayed_scaled_impulses(self):
        # degenerate model: zero basis, flat mean at level 0.5
        n_dir = 3
        directions = tuple(
            __import__("hrtfkit.dataset", fromlist=["Direction"]).Direction(a, "front")
            for a in (-30.0, 0.0, 30.0))
        pca_model = PcaModel(mean=np.full(128, 0.5), basis=np.zeros((128, 2)),
                             eigenvalues=np.zeros(128),
                             weights=np.zeros((2, n_dir * 2)),
                             column_index=tuple(("x", e, d)
                                                for e in (0, 1) for d in range(n_dir)))
        reg = RegressionModel(coefficients=np.zeros((2, n_dir, 2, 9)),
                              conditioning=np.ones((2, n_dir, 2)),
                              feature_order=("x1", "x3", "x6", "x12",
                                             "d1", "d3", "d5", "d6"),
                              offsets=np.zeros(8), scales=np.ones(8))
        from hrtfkit.dataset import TrainedModel
        model = TrainedModel(pca=pca_model, regression=reg,
                             mean_delays=np.full((2, n_dir), 7.0),
                             feature_indices=(0, 2, 5, 11, 17, 19, 21, 22),
                             sample_rate=44100.0, directions=directions,
                             subjects=("x",), provenance="degenerate")
        result = individualize(model, np.ones(8))
        for e in range(2):
            for d in range(n_dir):
                h = result.hrirs[e, d]
                assert abs(h[7] - 0.5) < 1e-12
                assert np.abs(np.delete(h, 7)).max() < 1e-12


class TestMetrics:
    def test_error_percent_trivial_triple(self):
        h = np.array([1.0, 2.0, 2.0])
        assert error_percent(h, h) == 0.0
        assert error_percent(h, np.zeros(3)) == 100.0
        assert error_percent(h, 2.0 * h) == 100.0

    def test_error_percent_rejects_zero_norm(self):
        with pytest.raises(ValueError, match="zero norm"):
            error_percent(np.zeros(3), np.ones(3))

    def test_sd_score_identity_and_uniform_offset(self):
        rng = np.random.default_rng(600)
        h = rng.uniform(0.5, 2.0, size=128)
        assert sd_score(h, h) == 0.0
        assert abs(sd_score(h, h / 10.0) - 20.0) < 1e-10

    def test_sd_score_matches_direct_formula(self):
        rng = np.random.default_rng(601)
        h = rng.uniform(0.5, 2.0, size=128)
        g = rng.uniform(0.5, 2.0, size=128)
        direct = np.sqrt(np.mean((20 * np.log10(h) - 20 * np.log10(g)) ** 2))
        assert abs(sd_score(h, g) - direct) < 1e-10

    def test_sd_score_band_restriction(self):
        h = np.ones(128)
        g = np.ones(128)
        g[100] = 0.1
        spacing = 44100.0 / 256
        assert sd_score(h, g, bin_spacing=spacing, band=(0.0, 5000.0)) == 0.0
        assert sd_score(h, g) > 0.0


class TestEvaluate:
    def test_exact_world_individualized_error_below_tenth_percent(
            self, small_world, small_model):
        report = evaluate(small_model, small_world.archive, small_world.anthro,
                          mode="individualized")
        assert report.overall_mean_error() < 0.1
        assert report.error_percent.shape == (12, 2, 6)

    def test_pca_mode_equals_reconstruct_then_error(self, small_world, small_model):
        report = evaluate(small_model, small_world.archive, mode="pca")
        H, _ = pipeline.magnitude_matrix(small_world.archive)
        V = small_model.pca.basis
        mu = small_model.pca.mean
        k = 0
        from hrtfkit.pca import clamp_positive
        for s in range(len(small_world.archive.subjects)):
            for e in range(2):
                for d in range(small_world.archive.n_directions):
                    h = H[:, k]
                    recon = V @ (V.T @ (h - mu)) + mu
                    recon, _ = clamp_positive(recon)
                    want = error_percent(h, recon)
                    assert report.error_percent[s, e, d] == pytest.approx(want, abs=1e-12)
                    k += 1

    def test_pca_mode_error_monotone_in_q(self, small_world):
        errors = []
        for q in (1, 2, 3):
            model = train(small_world.archive, small_world.anthro, q=q)
            errors.append(evaluate(model, small_world.archive,
                                   mode="pca").overall_mean_error())
        assert errors[0] >= errors[1] >= errors[2] - 1e-12

    def test_aggregates_match_recomputation(self, small_world, small_model):
        report = evaluate(small_model, small_world.archive, small_world.anthro,
                          mode="individualized")
        cells = report.error_percent
        assert report.overall_mean_error() == pytest.approx(cells.mean(), abs=1e-12)
        left, right = report.per_ear_mean_error()
        assert left == pytest.approx(cells[:, 0, :].mean(), abs=1e-12)
        assert right == pytest.approx(cells[:, 1, :].mean(), abs=1e-12)

    def test_csv_and_summary_outputs(self, small_world, small_model, tmp_path):
        report = evaluate(small_model, small_world.archive, small_world.anthro,
                          mode="individualized")
        report.to_csv(tmp_path / "report.csv")
        report.curves_csv(tmp_path / "curves.csv")
        lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 12 * 2 * 6
        curve_lines = (tmp_path / "curves.csv").read_text().strip().splitlines()
        assert len(curve_lines) == 1 + 2 * 6
        summary = report.summary()
        assert summary["mode"] == "individualized"
        assert summary["n_subjects"] == 12

    def test_direction_mismatch_rejected(self, small_world, small_model):
        archive = small_world.archive
        shifted = HrirArchive(sample_rate=archive.sample_rate,
                              hrir_length=archive.hrir_length,
                              subjects=archive.subjects,
                              directions=archive.directions[:-1]
                              + (type(archive.directions[0])(79.0, "rear"),),
                              data=archive.data)
        with pytest.raises(ValueError, match="directions"):
            evaluate(small_model, shifted, mode="pca")

    def test_individualized_needs_table(self, small_world, small_model):
        with pytest.raises(ValueError, match="anthropometry"):
            evaluate(small_model, small_world.archive, mode="individualized")

    def test_missing_feature_named_in_error(self, small_world, small_model):
        values = small_world.anthro.values.copy()
        values[3, small_model.feature_indices[0]] = np.nan
        table = AnthropometryTable(small_world.anthro.subjects, values)
        with pytest.raises(ValueError, match="s003.*x1"):
            evaluate(small_model, small_world.archive, table,
                     mode="individualized")

    def test_holdout_runs_and_stays_exact_on_linear_world(self, small_world,
                                                          small_model):
        # in a noise-free exactly-linear world, leave-one-subject-out
        # regressions still recover the same coefficients, so held-out
        # subjects reconstruct as well as training subjects
        report = evaluate(small_model, small_world.archive, small_world.anthro,
                          mode="individualized", holdout=True)
        assert report.error_percent.shape == (12, 2, 6)
        assert np.all(np.isfinite(report.error_percent))
        assert report.overall_mean_error() < 0.1

    def test_threads_do_not_change_report(self, small_world, small_model):
        r1 = evaluate(small_model, small_world.archive, small_world.anthro,
                      mode="individualized", threads=1)
        r4 = evaluate(small_model, small_world.archive, small_world.anthro,
                      mode="individualized", threads=4)
        assert np.array_equal(r1.error_percent, r4.error_percent)
        assert np.array_equal(r1.sd_db, r4.sd_db)
