import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from screenfit.errors import ComputationError, ValidationError
from screenfit.logit import (
    DesignMatrix,
    Term,
    encode_design,
    fit_irls,
    global_null_lr,
    log_likelihood,
    model_from_dict,
    model_to_dict,
    prune_collinear,
    sbc,
    stepwise_select,
    wald_and_derived,
)
from screenfit.table import ColumnKind

from conftest import make_table


def design_from_arrays(X_cols: list[np.ndarray], y: np.ndarray) -> DesignMatrix:
    terms = tuple(
        Term(source=f"x{i}", encoding="standardized", mean=0.0, std=1.0)
        for i in range(len(X_cols))
    )
    X = np.column_stack([np.ones(len(y))] + X_cols)
    return DesignMatrix(terms=terms, X=X, y=np.asarray(y, dtype=int))


def random_design(rng, n, k):
    X_cols = [rng.standard_normal(n) for _ in range(k)]
    y = (rng.random(n) < 0.5).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return design_from_arrays(X_cols, y)


class TestEncodeDesign:
    def test_z_score_with_training_stats(self):
        t = make_table(
            {"x": [8.0, 12.0], "y": [0, 1]},
            {"x": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        design = encode_design(t, ["x"])
        assert design.terms[0].mean == pytest.approx(10.0)
        assert design.terms[0].std == pytest.approx(2.0)
        np.testing.assert_allclose(design.X[:, 1], [-1.0, 1.0])

    def test_scoring_reuses_template_stats(self):
        train = make_table(
            {"x": [8.0, 12.0], "y": [0, 1]},
            {"x": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        template = encode_design(train, ["x"]).terms
        new = make_table(
            {"x": [12.0, 12.0], "y": [0, 1]},
            {"x": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        design = encode_design(new, ["x"], template=template)
        np.testing.assert_allclose(design.X[:, 1], [1.0, 1.0])  # (12 - 10) / 2

    def test_most_frequent_reference(self):
        c = ["a"] * 5 + ["b"] * 3 + ["c"] * 2
        t = make_table(
            {"c": c, "y": [0, 1] * 5},
            {"c": ColumnKind.CATEGORICAL, "y": ColumnKind.BINARY},
        )
        design = encode_design(t, ["c"])
        assert [term.level for term in design.terms] == ["b", "c"]
        assert all(term.reference == "a" for term in design.terms)

    def test_constant_column_dropped_with_warning(self):
        t = make_table(
            {"x": [3.0, 3.0, 3.0, 3.0], "z": [1.0, 2.0, 3.0, 4.0], "y": [0, 1, 0, 1]},
            {"x": ColumnKind.CONTINUOUS, "z": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        design = encode_design(t, ["x", "z"])
        assert len(design.terms) == 1
        assert design.terms[0].source == "z"
        assert any("constant" in w for w in design.warnings)

    def test_unseen_level_maps_to_reference_with_warning(self):
        train = make_table(
            {"c": ["a", "a", "b", "b"], "y": [0, 1, 0, 1]},
            {"c": ColumnKind.CATEGORICAL, "y": ColumnKind.BINARY},
        )
        template = encode_design(train, ["c"]).terms
        scoring = make_table(
            {"c": ["a", "zz", "b"], "y": [0, 1, 0]},
            {"c": ColumnKind.CATEGORICAL, "y": ColumnKind.BINARY},
            levels={"c": ("a", "b", "zz")},
        )
        design = encode_design(scoring, ["c"], template=template)
        assert design.X[1, 1] == 0.0
        assert any("zz" in w for w in design.warnings)

    def test_missing_values_rejected(self):
        t = make_table(
            {"x": [1.0, np.nan], "y": [0, 1]},
            {"x": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        with pytest.raises(ValidationError, match="impute"):
            encode_design(t, ["x"])

    def test_binary_kept_as_flag(self):
        t = make_table(
            {"f": [0, 1, 1, 0], "y": [0, 1, 0, 1]},
            {"f": ColumnKind.BINARY, "y": ColumnKind.BINARY},
        )
        design = encode_design(t, ["f"])
        assert design.terms[0].encoding == "flag"
        np.testing.assert_array_equal(design.X[:, 1], [0, 1, 1, 0])


class TestLogLikelihood:
    def test_zero_beta_gives_n_log_half(self):
        rng = np.random.default_rng(0)
        design = random_design(rng, 40, 2)
        logL, _, _ = log_likelihood(design, np.zeros(3))
        assert logL == pytest.approx(40 * math.log(0.5))

    def test_gradient_at_zero(self):
        rng = np.random.default_rng(1)
        design = random_design(rng, 30, 2)
        _, gradient, _ = log_likelihood(design, np.zeros(3))
        np.testing.assert_allclose(gradient, design.X.T @ (design.y - 0.5), atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(20, 200))
            k = int(rng.integers(1, 6))
            design = random_design(rng, n, k)
            beta = rng.normal(0, 0.5, k + 1)
            logL, gradient, _ = log_likelihood(design, beta)
            h = 1e-6
            fd = np.empty_like(beta)
            for j in range(len(beta)):
                e = np.zeros_like(beta)
                e[j] = h
                up, _, _ = log_likelihood(design, beta + e)
                dn, _, _ = log_likelihood(design, beta - e)
                fd[j] = (up - dn) / (2 * h)
            np.testing.assert_allclose(gradient, fd, rtol=1e-6, atol=1e-8)

    def test_hessian_matches_finite_differences_of_gradient(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            design = random_design(rng, 80, 3)
            beta = rng.normal(0, 0.5, 4)
            _, _, hessian = log_likelihood(design, beta)
            h = 1e-5
            fd = np.empty_like(hessian)
            for j in range(len(beta)):
                e = np.zeros_like(beta)
                e[j] = h
                _, g_up, _ = log_likelihood(design, beta + e)
                _, g_dn, _ = log_likelihood(design, beta - e)
                fd[:, j] = (g_up - g_dn) / (2 * h)
            np.testing.assert_allclose(hessian, fd, rtol=1e-4, atol=1e-6)


class TestFitIrls:
    def test_intercept_only_matches_prevalence_logit(self):
        y = np.array([1] * 3 + [0] * 5)
        design = DesignMatrix(terms=(), X=np.ones((8, 1)), y=y)
        model = fit_irls(design)
        assert model.converged
        assert model.beta[0] == pytest.approx(math.log(0.375 / 0.625), abs=1e-9)

    def test_deviance_non_increasing(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            design = random_design(rng, 120, 3)
            model = fit_irls(design)
            path = np.array(model.deviance_path)
            assert (np.diff(path) <= 1e-9).all()

    def test_independent_predictor_rarely_significant(self):
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            n = 600
            x = rng.standard_normal(n)
            y = (rng.random(n) < 0.4).astype(int)
            design = design_from_arrays([x], y)
            model = fit_irls(design)
            if model.p_values[1] > 0.05:
                hits += 1
        assert hits >= 9

    def test_separation_warning(self):
        x = np.linspace(-2, 2, 30)
        y = (x > 0).astype(int)
        design = design_from_arrays([x], y)
        model = fit_irls(design)
        assert any("separation" in w for w in model.warnings)

    def test_affine_invariance_of_standardized_fit(self):
        rng = np.random.default_rng(5)
        x = rng.normal(3.0, 2.0, 400)
        y = (rng.random(400) < 1 / (1 + np.exp(-(0.8 * (x - 3) / 2)))).astype(int)
        t1 = make_table(
            {"x": x, "y": y},
            {"x": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        t2 = make_table(
            {"x": 100.0 * x - 7.0, "y": y},
            {"x": ColumnKind.CONTINUOUS, "y": ColumnKind.BINARY},
        )
        m1 = fit_irls(encode_design(t1, ["x"]))
        m2 = fit_irls(encode_design(t2, ["x"]))
        np.testing.assert_allclose(m1.beta, m2.beta, atol=1e-8)
        np.testing.assert_allclose(m1.wald, m2.wald, rtol=1e-6)

    def test_needs_more_rows_than_columns(self):
        design = design_from_arrays([np.array([1.0, 2.0])], np.array([0, 1]))
        with pytest.raises(ValidationError):
            fit_irls(design)

    def test_grid_search_oracle_small(self):
        rng = np.random.default_rng(6)
        design = random_design(rng, 60, 1)
        model = fit_irls(design)
        grid = np.arange(-3.0, 3.0 + 1e-9, 0.05)
        best = -np.inf
        for b0 in grid:
            for b1 in grid:
                logL, _, _ = log_likelihood(design, np.array([b0, b1]))
                best = max(best, logL)
        assert model.log_likelihood >= best - 1e-6


class TestWaldAndDerived:
    def model_with(self, beta, se):
        k = len(beta)
        return wald_and_derived(
            _bare_model(
                terms=tuple(
                    Term(source=f"v{i}", encoding="standardized", mean=0.0, std=1.0)
                    for i in range(k - 1)
                ),
                beta=np.array(beta),
                se=np.array(se),
            )
        )

    def test_printed_table_style_case(self):
        model = self.model_with([-0.8057, -1.1382], [0.0321, 0.0199])
        assert model.wald[1] == pytest.approx((1.1382 / 0.0199) ** 2, rel=1e-12)
        assert model.wald[1] == pytest.approx(3260.12, rel=0.01)
        assert model.exp_est[1] == pytest.approx(0.32, abs=2e-3)

    def test_zero_estimate(self):
        model = self.model_with([0.5, 0.0], [0.1, 0.2])
        assert model.wald[2 - 1] == pytest.approx(0.0)
        assert model.exp_est[1] == pytest.approx(1.0)
        assert model.p_values[1] == pytest.approx(1.0)

    def test_standardized_estimate_only_for_standardized_terms(self):
        terms = (
            Term(source="s", encoding="standardized", mean=0.0, std=1.0),
            Term(source="f", encoding="flag"),
            Term(source="c", encoding="dummy", level="b", reference="a"),
        )
        model = wald_and_derived(
            _bare_model(terms=terms, beta=np.array([0.1, 0.4, -0.2, 0.3]), se=np.ones(4))
        )
        assert model.standardized_estimate[0] is None  # intercept
        assert model.standardized_estimate[1] == pytest.approx(0.4)
        assert model.standardized_estimate[2] is None  # flag
        assert model.standardized_estimate[3] is None  # dummy


def _bare_model(terms, beta, se):
    from screenfit.logit import LogisticModel

    k = len(beta)
    return LogisticModel(
        terms=terms,
        beta=beta,
        se=se,
        wald=np.zeros(k),
        p_values=np.ones(k),
        standardized_estimate=(None,) * k,
        exp_est=np.ones(k),
        log_likelihood=-1.0,
        sbc=0.0,
        n=100,
        converged=True,
        iterations=1,
    )


class TestSbc:
    def test_hand_case(self):
        assert sbc(-60.0, 1, 100) == pytest.approx(120.0 + math.log(100.0), rel=1e-12)

    def test_extra_parameter_costs_log_n(self):
        assert sbc(-10.0, 3, 50) - sbc(-10.0, 2, 50) == pytest.approx(math.log(50.0))

    def test_n_one_has_no_penalty(self):
        assert sbc(-5.0, 0, 1) == pytest.approx(10.0)

    @given(
        logL=st.floats(-1e5, -1e-3),
        k=st.integers(0, 30),
        n=st.integers(2, 10_000),
    )
    def test_strictly_increasing_in_k(self, logL, k, n):
        assert sbc(logL, k + 1, n) > sbc(logL, k, n)


def planted_design(rng, n, n_noise, beta=1.5):
    noise = [rng.standard_normal(n) for _ in range(n_noise)]
    signal = rng.standard_normal(n)
    p = 1 / (1 + np.exp(-(0.3 + beta * signal)))
    y = (rng.random(n) < p).astype(int)
    cols = [signal] + noise
    return design_from_arrays(cols, y)  # x0 is the planted column


class TestStepwise:
    def test_planted_predictor_enters_first(self):
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            design = planted_design(rng, 4000, 20)
            model, trace = stepwise_select(design)
            if trace.steps and trace.steps[0].term == "x0":
                hits += 1
        assert hits >= 9

    def test_all_noise_yields_intercept_only(self):
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            design = random_design(rng, 4000, 20)
            model, trace = stepwise_select(design, p_enter=0.01, p_stay=0.01)
            if len(model.terms) == 0:
                hits += 1
        assert hits >= 8

    def test_duplicate_column_enters_at_most_once(self):
        rng = np.random.default_rng(200)
        x = rng.standard_normal(1000)
        p = 1 / (1 + np.exp(-1.2 * x))
        y = (rng.random(1000) < p).astype(int)
        X = np.column_stack([np.ones(1000), x, x])
        terms = (
            Term(source="a", encoding="standardized", mean=0.0, std=1.0),
            Term(source="a_copy", encoding="standardized", mean=0.0, std=1.0),
        )
        design = DesignMatrix(terms=terms, X=X, y=y)
        model, _ = stepwise_select(design)
        assert len(model.terms) == 1

    def test_final_model_satisfies_stay_and_entry_conditions(self):
        rng = np.random.default_rng(300)
        design = planted_design(rng, 800, 6, beta=1.0)
        model, trace = stepwise_select(design, p_enter=0.01, p_stay=0.01)
        assert (model.p_values[1:] < 0.01).all()
        # no excluded candidate would enter with p < p_enter and a lower SBC
        names = [t.name for t in design.terms]
        in_model = [names.index(t.name) for t in model.terms]
        from scipy import stats as sps

        for j in range(len(design.terms)):
            if j in in_model:
                continue
            refit = fit_irls(design.select(in_model + [j]))
            lr = max(2 * (refit.log_likelihood - model.log_likelihood), 0.0)
            p = sps.chi2.sf(lr, df=1)
            assert not (p < 0.01 and refit.sbc < model.sbc)

    def test_trace_matches_final_terms(self):
        rng = np.random.default_rng(400)
        design = planted_design(rng, 900, 5, beta=0.8)
        model, trace = stepwise_select(design)
        assert sorted(trace.net_terms()) == sorted(t.name for t in model.terms)

    def test_max_terms_cap(self):
        rng = np.random.default_rng(500)
        cols = [rng.standard_normal(2000) for _ in range(5)]
        latent = 1.2 * cols[0] + 1.0 * cols[1] + 0.8 * cols[2]
        y = (rng.random(2000) < 1 / (1 + np.exp(-latent))).astype(int)
        design = design_from_arrays(cols, y)
        model, _ = stepwise_select(design, max_terms=2)
        assert len(model.terms) <= 2

    def test_argmax_wald_stable_under_column_reorder(self):
        rng = np.random.default_rng(600)
        cols = [rng.standard_normal(1500) for _ in range(4)]
        latent = 1.5 * cols[2] + 0.5 * cols[0]
        y = (rng.random(1500) < 1 / (1 + np.exp(-latent))).astype(int)
        d1 = design_from_arrays(cols, y)
        m1 = fit_irls(d1)
        perm = [3, 2, 0, 1]
        d2 = design_from_arrays([cols[i] for i in perm], y)
        # renaming: term xj in d2 is cols[perm[j]]
        m2 = fit_irls(d2)
        best1 = int(np.argmax(m1.wald[1:]))
        best2 = perm[int(np.argmax(m2.wald[1:]))]
        assert best1 == best2


class TestPruneCollinear:
    def duplicated_design(self, seed=0, n=1200):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        z = rng.standard_normal(n)
        y = (rng.random(n) < 1 / (1 + np.exp(-(1.0 * x + 0.5 * z)))).astype(int)
        X = np.column_stack([np.ones(n), x, x, z])
        terms = (
            Term(source="a", encoding="standardized", mean=0.0, std=1.0),
            Term(source="a_twin", encoding="standardized", mean=0.0, std=1.0),
            Term(source="z", encoding="standardized", mean=0.0, std=1.0),
        )
        return DesignMatrix(terms=terms, X=X, y=y)

    def test_duplicate_dropped_deviance_unchanged(self):
        design = self.duplicated_design()
        model = fit_irls(design)
        pruned = prune_collinear(model, design, design, cutoff=0.40)
        assert len(pruned.terms) == 2
        assert abs(-2 * pruned.log_likelihood - (-2 * model.log_likelihood)) < 1e-6

    def test_uncorrelated_model_unchanged(self):
        rng = np.random.default_rng(1)
        design = random_design(rng, 500, 3)
        model = fit_irls(design)
        pruned = prune_collinear(model, design, design, cutoff=0.40)
        assert pruned.term_names() == model.term_names()
        assert pruned.log_likelihood == model.log_likelihood

    def test_true_driver_survives(self):
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            n = 3000
            driver = rng.standard_normal(n)
            shadow = 0.9 * driver + math.sqrt(1 - 0.81) * rng.standard_normal(n)
            y = (rng.random(n) < 1 / (1 + np.exp(-1.5 * driver))).astype(int)
            X = np.column_stack([np.ones(n), driver, shadow])
            terms = (
                Term(source="driver", encoding="standardized", mean=0.0, std=1.0),
                Term(source="shadow", encoding="standardized", mean=0.0, std=1.0),
            )
            design = DesignMatrix(terms=terms, X=X, y=y)
            model = fit_irls(design)
            pruned = prune_collinear(model, design, design, cutoff=0.40)
            if [t.source for t in pruned.terms] == ["driver"]:
                hits += 1
        assert hits >= 8


class TestGlobalNull:
    def test_df_zero_rejected(self):
        y = np.array([0, 1, 0, 1, 1, 0])
        design = DesignMatrix(terms=(), X=np.ones((6, 1)), y=y)
        model = fit_irls(design)
        with pytest.raises(ValidationError):
            global_null_lr(model, design)

    def test_null_effect_statistic_near_zero(self):
        rng = np.random.default_rng(2)
        design = random_design(rng, 2000, 1)
        model = fit_irls(design)
        res = global_null_lr(model, design)
        assert res["df"] == 1
        assert 0.0 <= res["statistic"] < 10.0

    def test_planted_signal_is_overwhelming(self):
        from scipy import stats as sps

        rng = np.random.default_rng(3)
        cols = [rng.standard_normal(4000) for _ in range(3)]
        latent = 1.2 * cols[0] + 1.0 * cols[1] + 0.9 * cols[2]
        y = (rng.random(4000) < 1 / (1 + np.exp(-latent))).astype(int)
        design = design_from_arrays(cols, y)
        model = fit_irls(design)
        res = global_null_lr(model, design)
        assert res["statistic"] > sps.chi2.ppf(0.999, df=3)
        assert res["p_value"] < 0.001

    def test_statistic_definition(self):
        rng = np.random.default_rng(4)
        design = planted_design(rng, 500, 1)
        model = fit_irls(design)
        pbar = design.y.mean()
        logL0 = len(design.y) * (pbar * math.log(pbar) + (1 - pbar) * math.log(1 - pbar))
        res = global_null_lr(model, design)
        assert res["statistic"] == pytest.approx(2 * (model.log_likelihood - logL0), rel=1e-12)


class TestModelSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        design = planted_design(rng, 300, 2)
        model = fit_irls(design)
        doc = model_to_dict(model)
        back = model_from_dict(doc)
        np.testing.assert_allclose(back.beta, model.beta)
        np.testing.assert_allclose(back.se, model.se)
        assert back.term_names() == model.term_names()
        assert back.sbc == model.sbc
        assert back.standardized_estimate == model.standardized_estimate
