"""Baseline estimators: pooled OLS, within FE, FGLS RE, augmented CRE."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cregmm import ModelSpec, VariableRole, build_panel, cre, fe_within, pols, re_fgls
from cregmm.errors import RankDeficient, TimeInvariantInFE
from cregmm.estimators import cluster_vcov, wald_subset
from conftest import ardl_spec, simulated_panel, toy_panel


def static_spec(**kwargs):
    return ModelSpec(
        dependent="y",
        ar_order=0,
        x_terms=[("x", 0, VariableRole("strictly-exogenous", het_correlated=False))],
        **kwargs,
    )


# ---------------------------------------------------------------------------
# pooled OLS

def test_pols_exact_fit():
    x = np.arange(12.0).reshape(3, 4)
    panel = toy_panel({"y": 2 * x, "x": x})
    result = pols(panel, static_spec(), start_offset=0)
    assert abs(result.coef("x") - 2.0) < 1e-10
    assert abs(result.coef("const")) < 1e-10


def test_pols_matches_normal_equations(rng):
    x = rng.normal(size=(3, 3))
    y = 1.0 + 0.5 * x + rng.normal(size=(3, 3))
    panel = toy_panel({"y": y, "x": x})
    result = pols(panel, static_spec(), start_offset=0)
    X = np.column_stack([np.ones(9), x.ravel()])
    beta = np.linalg.solve(X.T @ X, X.T @ y.ravel())
    np.testing.assert_allclose([result.coef("const"), result.coef("x")], beta, atol=1e-10)


def test_pols_rank_deficient_reports_columns():
    x = np.ones((3, 4))
    panel = toy_panel({"y": x * 2, "x": x})
    with pytest.raises(RankDeficient) as err:
        pols(panel, static_spec(), start_offset=0)
    assert err.value.dropped


# ---------------------------------------------------------------------------
# fixed effects

def test_fe_removes_unit_effects():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 6))
    mu = rng.normal(size=(20, 1))
    panel = toy_panel({"y": mu + x, "x": x})
    result = fe_within(panel, static_spec(), start_offset=0)
    assert abs(result.coef("x") - 1.0) < 1e-10


def test_fe_rejects_time_invariant_regressor():
    panel = toy_panel({"y": np.arange(8.0).reshape(2, 4), "x": np.arange(8.0).reshape(2, 4), "w": np.ones((2, 4))})
    spec = ModelSpec(
        dependent="y",
        ar_order=0,
        x_terms=[("x", 0, VariableRole("strictly-exogenous", het_correlated=False))],
        w_terms=["w"],
    )
    with pytest.raises(TimeInvariantInFE):
        fe_within(panel, spec, start_offset=0)


# ---------------------------------------------------------------------------
# random effects

def test_re_equals_pols_when_no_unit_variance():
    # y depends only on x and iid noise: sigma_mu^2 estimate truncates to 0
    rng = np.random.default_rng(3)
    x = rng.normal(size=(60, 5))
    y = 1.0 + 0.5 * x + rng.normal(scale=5.0, size=(60, 5))
    panel = toy_panel({"y": y, "x": x})
    a = re_fgls(panel, static_spec(), start_offset=0)
    b = pols(panel, static_spec(), start_offset=0)
    if a.diagnostics["sigma_mu2"] == 0.0:
        np.testing.assert_allclose(a.beta, b.beta, atol=1e-8)


def test_re_matches_explicit_gls_on_balanced_panel():
    rng = np.random.default_rng(5)
    n, t = 40, 5
    x = rng.normal(size=(n, t))
    y = 0.3 + 0.7 * x + rng.normal(size=(n, 1)) + rng.normal(size=(n, t))
    panel = toy_panel({"y": y, "x": x})
    result = re_fgls(panel, static_spec(), start_offset=0)
    s_e2 = result.diagnostics["sigma_e2"]
    s_mu2 = result.diagnostics["sigma_mu2"]
    # explicit GLS with the same estimated components
    omega_inv_blocks = np.linalg.inv(s_mu2 * np.ones((t, t)) + s_e2 * np.eye(t))
    XtOX = np.zeros((2, 2))
    XtOy = np.zeros(2)
    for i in range(n):
        Xi = np.column_stack([np.ones(t), x[i]])
        XtOX += Xi.T @ omega_inv_blocks @ Xi
        XtOy += Xi.T @ omega_inv_blocks @ y[i]
    beta = np.linalg.solve(XtOX, XtOy)
    np.testing.assert_allclose(result.beta, beta, atol=1e-8)


# ---------------------------------------------------------------------------
# CRE / Mundlak

def test_mundlak_full_sample_equivalence():
    # augmenting with full-sample unit means reproduces the within slopes
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 6)) + rng.normal(size=(30, 1))
    y = 2.0 + 0.4 * x + rng.normal(size=(30, 1)) + rng.normal(size=(30, 6))
    panel = toy_panel({"y": y, "x": x})
    spec = static_spec()
    fe = fe_within(panel, spec, start_offset=0)
    mundlak = cre(panel, spec, variant="CRE2", means_source="fullsample", start_offset=0)
    assert abs(mundlak.coef("x") - fe.coef("x")) < 1e-8


def test_cre_presample_runs_and_reports_hausman():
    panel = simulated_panel(seed=2, gamma1=0.8, N=400)
    result = cre(panel, ardl_spec(), variant="CRE2")
    assert "hausman" in result.diagnostics
    assert result.diagnostics["hausman"]["df"] == 2
    assert set(result.coefficients) >= {"const", "y_lag1", "x"}


def test_cre1_only_lagged_dependent_average():
    panel = simulated_panel(seed=2, N=200)
    result = cre(panel, ardl_spec(), variant="CRE1")
    assert "y_lag_pre_mean" in result.coefficients
    assert "x_pre_mean" not in result.coefficients


def test_cre_constant_average_collinear():
    x = np.tile(np.arange(5.0), (4, 1))
    panel = toy_panel({"y": 2 * x, "x": x})
    spec = ModelSpec(
        dependent="y",
        ar_order=0,
        x_terms=[("x", 0, VariableRole("strictly-exogenous", het_correlated=False))],
        presample_end=2,
    )
    # x identical across units -> its pre-sample average is constant
    with pytest.raises(RankDeficient):
        cre(panel, spec, variant="CRE2", start_offset=1)


# ---------------------------------------------------------------------------
# shared machinery

def test_cluster_vcov_singleton_equals_hc1():
    rng = np.random.default_rng(9)
    X = np.column_stack([np.ones(30), rng.normal(size=30)])
    resid = rng.normal(size=30)
    clusters = np.arange(30)
    got = cluster_vcov(X, resid, clusters)
    bread = np.linalg.inv(X.T @ X)
    meat = (X * resid[:, None]).T @ (X * resid[:, None])
    n, k = X.shape
    hc1 = (n / (n - 1)) * ((n - 1) / (n - k)) * bread @ meat @ bread
    np.testing.assert_allclose(got, hc1, atol=1e-12)


def test_wald_subset_zero_coefficients():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(50, 6))
    y = 0.5 * x + rng.normal(size=(50, 6))
    panel = toy_panel({"y": y, "x": x})
    result = pols(panel, static_spec(), start_offset=0)
    forced = dict(result.coefficients)
    forced["x"] = 0.0
    result.coefficients = forced
    stat, df, p = wald_subset(result, ["x"])
    assert stat == 0.0 and df == 1 and p == 1.0


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_unit_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 5))
    y = 1.0 + 0.5 * x + rng.normal(size=(8, 5))
    a = pols(toy_panel({"y": y, "x": x}), static_spec(), start_offset=0)
    relabeled = toy_panel({"y": y, "x": x}, units=[f"u{i}" for i in range(8)])
    b = pols(relabeled, static_spec(), start_offset=0)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-10)
    np.testing.assert_allclose(a.vcov, b.vcov, atol=1e-10)


@given(shift=st.integers(-5, 50))
@settings(max_examples=20, deadline=None)
def test_period_shift_invariance(shift):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 5))
    y = 1.0 + 0.5 * x + rng.normal(size=(6, 5))
    rows_a, rows_b = [], []
    for i in range(6):
        for t in range(5):
            vals = {"y": y[i, t], "x": x[i, t]}
            rows_a.append((i, t + 1, vals))
            rows_b.append((i, t + 1 + shift, vals))
    # the pre-sample boundary is a calendar cutoff, so it shifts with the data
    a = pols(build_panel(rows_a), static_spec(), start_offset=0)
    b = pols(build_panel(rows_b), static_spec(presample_end=shift), start_offset=0)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-10)


def test_vcov_symmetric_nonnegative_diagonal():
    panel = simulated_panel(seed=13, N=150)
    for result in (
        pols(panel, ardl_spec()),
        fe_within(panel, ardl_spec()),
        re_fgls(panel, ardl_spec()),
        cre(panel, ardl_spec(), variant="CRE2"),
    ):
        np.testing.assert_allclose(result.vcov, result.vcov.T, atol=1e-12)
        assert (np.diag(result.vcov) >= 0).all()
        assert list(result.coefficients) == result.names
