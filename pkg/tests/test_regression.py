"""Design-matrix assembly, QR least squares, per-cell fits, prediction."""

import numpy as np
import pytest

from hrtfkit import regression
from hrtfkit.dataset import AnthropometryTable
from hrtfkit.measurements import MEASUREMENT_LABELS
from hrtfkit.pca import PcaModel
from hrtfkit.testkit import normal_equation_fit


def _table(values, ids=None):
    values = np.asarray(values, dtype=np.float64)
    ids = ids or tuple(f"s{i:02d}" for i in range(values.shape[0]))
    return AnthropometryTable(subjects=tuple(ids), values=values)


def _random_design(rng, n=12):
    values = rng.uniform(1.0, 50.0, size=(n, 27))
    return regression.build_design_matrix(_table(values))


class TestBuildDesignMatrix:
    def test_default_selector_matches_published_list(self):
        labels = [MEASUREMENT_LABELS[i] for i in regression.DEFAULT_FEATURE_INDICES]
        assert labels == ["x1", "x3", "x6", "x12", "d1", "d3", "d5", "d6"]

    def test_all_ones_features_give_all_ones_rows(self):
        design = regression.build_design_matrix(_table(np.ones((10, 27))))
        assert np.array_equal(design.values, np.ones((10, 9)))

    def test_missing_selected_feature_names_subject_and_column(self):
        values = np.ones((10, 27))
        values[3, MEASUREMENT_LABELS.index("d6")] = np.nan
        with pytest.raises(ValueError, match=r"s03.*d6"):
            regression.build_design_matrix(_table(values))

    def test_nan_outside_selection_is_fine(self):
        values = np.ones((10, 27))
        values[:, MEASUREMENT_LABELS.index("x14")] = np.nan
        design = regression.build_design_matrix(_table(values))
        assert np.all(np.isfinite(design.values))

    def test_too_few_subjects(self):
        with pytest.raises(ValueError, match="at least 10"):
            regression.build_design_matrix(_table(np.ones((2, 27))))

    def test_standardize_centers_and_scales(self):
        rng = np.random.default_rng(300)
        values = rng.uniform(1.0, 40.0, size=(15, 27))
        design = regression.build_design_matrix(_table(values), standardize=True)
        feats = design.values[:, 1:]
        assert np.abs(feats.mean(axis=0)).max() < 1e-12
        assert np.abs(feats.std(axis=0) - 1.0).max() < 1e-12


class TestFit:
    def test_intercept_only_response(self):
        rng = np.random.default_rng(301)
        X = _random_design(rng).values
        c = 3.75
        beta = regression.fit(X, c * np.ones(X.shape[0]))
        assert abs(beta[0] - c) < 1e-9
        assert np.abs(beta[1:]).max() < 1e-9
        assert np.linalg.norm(X @ beta - c) < 1e-9

    def test_planted_coefficients_recovered(self):
        rng = np.random.default_rng(302)
        X = _random_design(rng).values
        beta_true = rng.normal(size=9)
        beta = regression.fit(X, X @ beta_true)
        assert np.abs(beta - beta_true).max() < 1e-9

    def test_orthogonal_noise_leaves_coefficients_untouched(self):
        rng = np.random.default_rng(303)
        X = _random_design(rng, n=20).values
        beta_true = rng.normal(size=9)
        Q, _ = np.linalg.qr(X)
        z = rng.normal(size=20)
        noise = z - Q @ (Q.T @ z)
        w = X @ beta_true + noise
        beta = regression.fit(X, w)
        assert np.abs(beta - beta_true).max() < 1e-9
        residual = w - X @ beta
        assert abs(np.linalg.norm(residual) - np.linalg.norm(noise)) < 1e-9

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(304)
        X = _random_design(rng, n=25).values
        w = rng.normal(size=25)
        assert np.abs(regression.fit(X, w) - normal_equation_fit(X, w)).max() < 1e-9

    def test_rank_deficient_raises_with_pivot(self):
        rng = np.random.default_rng(305)
        X = _random_design(rng).values.copy()
        X[:, 4] = 2.0 * X[:, 2]  # exact collinearity
        with pytest.raises(regression.SingularDesignError) as info:
            regression.fit(X, np.ones(X.shape[0]))
        assert info.value.smallest_pivot < 1e-10

    def test_exact_interpolation_with_nine_subjects(self):
        rng = np.random.default_rng(306)
        X = np.column_stack([np.ones(9), rng.uniform(1, 30, size=(9, 8))])
        w = rng.normal(size=9)
        beta = regression.fit(X, w)
        assert np.abs(X @ beta - w).max() < 1e-9

    def test_affine_shift_moves_only_intercept(self):
        rng = np.random.default_rng(307)
        X = _random_design(rng).values
        w = rng.normal(size=X.shape[0])
        b0 = regression.fit(X, w)
        b1 = regression.fit(X, w + 11.5)
        assert abs((b1[0] - b0[0]) - 11.5) < 1e-9
        assert np.abs(b1[1:] - b0[1:]).max() < 1e-9

    def test_permutation_covariance(self):
        rng = np.random.default_rng(308)
        X = _random_design(rng).values
        w = rng.normal(size=X.shape[0])
        perm = rng.permutation(X.shape[0])
        b0 = regression.fit(X, w)
        b1 = regression.fit(X[perm], w[perm])
        assert np.abs(b1 - b0).max() < 1e-12


def _planted_pca_model(design, beta, q, n_dir):
    """PcaModel whose weights are exact linear functions of the design."""
    subjects = design.subjects
    weights_per_subject = np.einsum("edqc,sc->sedq", beta, design.values)
    M = len(subjects) * 2 * n_dir
    W = weights_per_subject.reshape(M, q).T.copy()
    cols = tuple((s, e, d) for s in subjects for e in (0, 1) for d in range(n_dir))
    basis, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(128, q)))
    return PcaModel(mean=np.ones(128), basis=basis, eigenvalues=np.ones(128),
                    weights=W, column_index=cols)


class TestFitAllPredict:
    def test_minimal_cell_recovers_planted_beta(self):
        rng = np.random.default_rng(309)
        design = _random_design(rng)
        beta = rng.normal(size=(2, 1, 1, 9))
        model = _planted_pca_model(design, beta, q=1, n_dir=1)
        reg = regression.fit_all(model, design)
        assert np.abs(reg.coefficients - beta).max() < 1e-9

    def test_zero_weights_give_zero_coefficients(self):
        rng = np.random.default_rng(310)
        design = _random_design(rng)
        model = _planted_pca_model(design, np.zeros((2, 4, 3, 9)), q=3, n_dir=4)
        reg = regression.fit_all(model, design)
        assert np.abs(reg.coefficients).max() < 1e-12

    def test_default_configuration_has_1000_cells(self, full_model):
        assert full_model.regression.coefficients.shape == (2, 50, 10, 9)
        assert full_model.regression.conditioning.shape == (2, 50, 10)

    def test_subject_mismatch_detected(self):
        rng = np.random.default_rng(311)
        design = _random_design(rng)
        beta = rng.normal(size=(2, 2, 2, 9))
        model = _planted_pca_model(design, beta, q=2, n_dir=2)
        other = regression.build_design_matrix(
            _table(rng.uniform(1, 50, size=(12, 27)),
                   ids=tuple(f"t{i:02d}" for i in range(12))))
        with pytest.raises(ValueError, match="column_index"):
            regression.fit_all(model, other)

    def test_predict_reproduces_training_subject(self):
        rng = np.random.default_rng(312)
        design = _random_design(rng)
        beta = rng.normal(size=(2, 3, 2, 9))
        model = _planted_pca_model(design, beta, q=2, n_dir=3)
        reg = regression.fit_all(model, design)
        feats = design.values[5, 1:]
        predicted = regression.predict(reg, feats)
        truth = np.einsum("edqc,c->edq", beta, design.values[5])
        assert np.abs(predicted - truth).max() < 1e-8

    def test_predict_zero_features_gives_intercepts(self):
        rng = np.random.default_rng(313)
        design = _random_design(rng)
        beta = rng.normal(size=(2, 2, 2, 9))
        reg = regression.fit_all(_planted_pca_model(design, beta, q=2, n_dir=2),
                                 design)
        predicted = regression.predict(reg, np.zeros(8))
        assert np.abs(predicted - reg.coefficients[..., 0]).max() < 1e-12

    def test_predict_is_deterministic(self):
        rng = np.random.default_rng(314)
        design = _random_design(rng)
        beta = rng.normal(size=(2, 2, 2, 9))
        reg = regression.fit_all(_planted_pca_model(design, beta, q=2, n_dir=2),
                                 design)
        feats = rng.uniform(1, 30, size=8)
        assert np.array_equal(regression.predict(reg, feats),
                              regression.predict(reg, feats.copy()))

    def test_predict_rejects_nan(self):
        rng = np.random.default_rng(315)
        design = _random_design(rng)
        reg = regression.fit_all(
            _planted_pca_model(design, np.zeros((2, 1, 1, 9)), q=1, n_dir=1),
            design)
        bad = np.ones(8)
        bad[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            regression.predict(reg, bad)

    def test_normal_equation_residual_invariant(self, small_world, small_model):
        design = regression.build_design_matrix(small_world.anthro)
        X = design.values
        reg = small_model.regression
        per_subject = small_model.pca.weights.T.reshape(
            len(design.subjects), 2, -1, small_model.pca.q)
        for e in range(2):
            for d in range(per_subject.shape[2]):
                for i in range(small_model.pca.q):
                    w = per_subject[:, e, d, i]
                    beta = reg.coefficients[e, d, i]
                    lhs = X.T @ (w - X @ beta)
                    assert np.abs(lhs).max() <= 1e-8 * max(np.abs(X.T @ w).max(), 1e-30)

    def test_standardization_changes_conditioning_not_predictions(self):
        rng = np.random.default_rng(316)
        values = rng.uniform(1.0, 50.0, size=(14, 27))
        table = _table(values)
        raw = regression.build_design_matrix(table)
        std = regression.build_design_matrix(table, standardize=True)
        beta = rng.normal(size=(2, 2, 2, 9))
        weights = np.einsum("edqc,sc->sedq", beta, raw.values)
        W = weights.reshape(-1, 2).T.copy()
        cols = tuple((s, e, d) for s in table.subjects for e in (0, 1) for d in range(2))
        basis, _ = np.linalg.qr(rng.normal(size=(128, 2)))
        model = PcaModel(mean=np.ones(128), basis=basis, eigenvalues=np.ones(128),
                         weights=W, column_index=cols)
        reg_raw = regression.fit_all(model, raw)
        reg_std = regression.fit_all(model, std)
        feats = rng.uniform(1.0, 50.0, size=8)
        p_raw = regression.predict(reg_raw, feats)
        p_std = regression.predict(reg_std, feats)
        scale = np.abs(p_raw).max()
        assert np.abs(p_raw - p_std).max() < 1e-8 * max(scale, 1.0)
        assert not np.allclose(reg_raw.conditioning[0, 0, 0],
                               reg_std.conditioning[0, 0, 0])
