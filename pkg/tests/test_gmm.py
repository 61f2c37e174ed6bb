"""GMM engine: instrument construction, solver algebra, diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cregmm import DgpConfig, GmmOptions, ModelSpec, VariableRole, estimate_variant, simulate_panel
from cregmm.errors import InsufficientSpan, UnknownVariant, Underidentified
from cregmm.gmm import VARIANTS, ar_test, build_instruments, gmm_solve, hansen_j
from conftest import ardl_spec, simulated_panel


def solve(y, X, Z, clusters, **opts):
    return gmm_solve(y, X, Z, clusters, GmmOptions(**opts))


# ---------------------------------------------------------------------------
# solver algebra

def make_iv_problem(seed=0, n=200, n_instruments=3):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, n_instruments))
    v = rng.normal(size=n)
    x = z @ np.linspace(0.5, 1.0, n_instruments) + v
    y = 1.0 + 2.0 * x + v + rng.normal(size=n)
    X = np.column_stack([np.ones(n), x])
    Z = np.column_stack([np.ones(n), z])
    clusters = np.arange(n) // 4
    return y, X, Z, clusters


def test_gmm_equals_ols_when_z_is_x():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(100), rng.normal(size=100)])
    y = X @ np.array([1.0, 0.5]) + rng.normal(size=100)
    beta, _, _, _ = solve(y, X, X.copy(), np.arange(100) // 5)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(beta, ols, atol=1e-10)


def test_gmm_exactly_identified_equals_iv_ratio():
    rng = np.random.default_rng(2)
    n = 20
    z = rng.normal(size=n)
    x = 0.8 * z + rng.normal(size=n)
    y = 2.0 * x + rng.normal(size=n)
    xd, yd, zd = x - x.mean(), y - y.mean(), z - z.mean()
    ratio = (zd @ yd) / (zd @ xd)
    X = np.column_stack([np.ones(n), x])
    Z = np.column_stack([np.ones(n), z])
    beta, _, _, _ = solve(y, X, Z, np.arange(n))
    assert abs(beta[1] - ratio) < 1e-8


def test_gmm_matches_projection_2sls_oracle():
    y, X, Z, clusters = make_iv_problem(seed=3)
    beta, _, _, _ = solve(y, X, Z, clusters)
    P = Z @ np.linalg.solve(Z.T @ Z, Z.T)
    Xhat = P @ X
    tsls = np.linalg.solve(Xhat.T @ X, Xhat.T @ y)
    np.testing.assert_allclose(beta, tsls, atol=1e-8)


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_projection_invariance_under_recombination(seed):
    y, X, Z, clusters = make_iv_problem(seed=seed)
    rng = np.random.default_rng(seed + 1)
    A = rng.normal(size=(Z.shape[1], Z.shape[1]))
    while abs(np.linalg.det(A)) < 1e-3:
        A = rng.normal(size=(Z.shape[1], Z.shape[1]))
    b1, _, _, i1 = solve(y, X, Z, clusters)
    b2, _, _, i2 = solve(y, X, Z @ A, clusters)
    np.testing.assert_allclose(b1, b2, atol=1e-8)
    assert i1["hansen_j"]["stat"] == pytest.approx(i2["hansen_j"]["stat"], abs=1e-6)


def test_two_step_projection_invariance():
    y, X, Z, clusters = make_iv_problem(seed=10)
    rng = np.random.default_rng(11)
    A = rng.normal(size=(Z.shape[1], Z.shape[1])) + 2 * np.eye(Z.shape[1])
    b1, _, _, _ = solve(y, X, Z, clusters, steps="two")
    b2, _, _, _ = solve(y, X, Z @ A, clusters, steps="two")
    np.testing.assert_allclose(b1, b2, atol=1e-8)


def test_joint_scaling_leaves_slopes_proportional():
    y, X, Z, clusters = make_iv_problem(seed=4)
    b1, _, _, _ = solve(y, X, Z, clusters)
    c = 3.7
    b2, _, _, _ = solve(c * y, c * X, Z, clusters)
    np.testing.assert_allclose(b1, b2, atol=1e-8)


def test_underidentified_raises():
    rng = np.random.default_rng(5)
    X = np.column_stack([np.ones(50), rng.normal(size=50), rng.normal(size=50)])
    y = rng.normal(size=50)
    Z = np.column_stack([np.ones(50), rng.normal(size=50)])
    with pytest.raises(Underidentified):
        solve(y, X, Z, np.arange(50) // 5)


def test_hansen_j_nonnegative_with_df():
    y, X, Z, clusters = make_iv_problem(seed=6, n_instruments=4)
    _, _, _, info = solve(y, X, Z, clusters)
    j = info["hansen_j"]
    assert j["stat"] >= 0
    assert j["df"] == Z.shape[1] - X.shape[1]
    assert 0 <= j["p"] <= 1


def test_hansen_j_just_identified_flagged():
    y, X, Z, clusters = make_iv_problem(seed=7, n_instruments=1)
    _, _, _, info = solve(y, X, Z, clusters)
    assert info["hansen_j"]["df"] == 0
    assert info["hansen_j"]["stat"] == 0.0
    assert info["hansen_j"]["p"] is None


# ---------------------------------------------------------------------------
# instrument construction

def test_instrument_count_matches_enumeration():
    cfg = DgpConfig(N=50, T=8, S=2, seed=21)
    panel = simulate_panel(cfg)
    spec = ardl_spec(S=2)
    Z = build_instruments(panel, spec, "CREGMM5")
    # estimation rows are t = S+2 .. S+T; available history reaches back to
    # period 0, so a lag-m value exists when t - m >= 0 (for y differences
    # t - m - 1 >= 0)
    est_periods = range(cfg.S + 2, cfg.S + cfg.T + 1)
    expected = 0
    for t in est_periods:
        for m in (1, 2, 3):
            if t - m - 1 >= 0:
                expected += 1  # lagged difference of y
            if t - m >= 0:
                expected += 1  # lagged level of x (predetermined window)
    expected += 1  # intercept instruments itself
    assert Z.n_columns == expected


def test_strictly_exogenous_adds_contemporaneous_column():
    panel = simulated_panel(seed=22, S=3)
    pre = ardl_spec(role="predetermined")
    exo = ardl_spec(role="strictly-exogenous")
    z_pre = build_instruments(panel, pre, "CREGMM3")
    z_exo = build_instruments(panel, exo, "CREGMM3")
    lag0 = [m for m in z_exo.meta if m["var"] == "x" and m["lag"] == 0]
    assert lag0
    assert not [m for m in z_pre.meta if m["var"] == "x" and m["lag"] == 0]
    assert z_exo.n_columns > z_pre.n_columns


def test_endogenous_x_starts_at_lag_two_in_dif_equation():
    panel = simulated_panel(seed=23)
    endo = ardl_spec(role="endogenous")
    z = build_instruments(panel, endo, "GMMDIF")
    x_lags = {m["lag"] for m in z.meta if m["var"] == "x"}
    assert min(x_lags) == 2


def test_collapsed_columns_are_block_row_sums():
    panel = simulated_panel(seed=24)
    spec = ardl_spec()
    full = build_instruments(panel, spec, "CREGMM5", GmmOptions())
    coll = build_instruments(panel, spec, "CREGMM5", GmmOptions(collapse=True))
    assert coll.n_columns < full.n_columns
    for j, meta in enumerate(coll.meta):
        if meta["form"] in ("exog", "average"):
            continue
        block = [
            k
            for k, m in enumerate(full.meta)
            if m["var"] == meta["var"]
            and m["lag"] == meta["lag"]
            and m["form"] == meta["form"]
        ]
        np.testing.assert_allclose(
            coll.values[:, j], full.values[:, block].sum(axis=1), atol=1e-12
        )


def test_average_instrument_columns_present_by_variant():
    panel = simulated_panel(seed=25)
    spec = ardl_spec()
    forms = {
        tag: [m["form"] for m in build_instruments(panel, spec, tag).meta]
        for tag in ("GL", "CREGMM0", "CREGMM1", "CREGMM2")
    }
    assert forms["CREGMM0"].count("average") == 2
    assert forms["CREGMM1"].count("average") == 1
    assert forms["CREGMM2"].count("average") == 0
    assert forms["GL"].count("average") == 0


def test_unknown_variant():
    panel = simulated_panel(seed=26)
    with pytest.raises(UnknownVariant):
        build_instruments(panel, ardl_spec(), "CREGMM9")


def test_every_column_has_nonzero_support():
    panel = simulated_panel(seed=27)
    Z = build_instruments(panel, ardl_spec(), "CREGMM0")
    assert (np.abs(Z.values).sum(axis=0) > 0).all()


def test_instrument_population_orthogonality():
    # valid configuration: no heterogeneity correlation, no simultaneity
    cfg = DgpConfig(N=5000, T=8, S=3, gamma1=0.0, gamma2=0.0, gamma3=0.0, seed=28)
    panel = simulate_panel(cfg)
    spec = ardl_spec()
    Z = build_instruments(panel, spec, "GL")
    design = Z.design
    # composite level error: mu + eps for each design row
    pj = np.searchsorted(panel.periods, design.periods)
    err = (
        panel.column("mu")[design.unit_idx, pj]
        + panel.column("eps")[design.unit_idx, pj]
    )
    moments = Z.values.T @ err / len(err)
    scale = np.abs(Z.values).mean(axis=0) + 1e-12
    assert (np.abs(moments) / np.maximum(scale, 1.0) < 0.05).all()


# ---------------------------------------------------------------------------
# estimate_variant + diagnostics

def test_estimate_variant_attaches_diagnostics():
    panel = simulated_panel(seed=30, N=300)
    result = estimate_variant(panel, ardl_spec(), "CREGMM5")
    assert result.estimator_tag == "CREGMM5"
    assert "hansen_j" in result.diagnostics
    assert "hausman" in result.diagnostics
    assert result.diagnostics["hansen_j"]["df"] > 0
    for m in (1, 2, 3):
        assert f"ar{m}" in result.diagnostics


def test_gl_omits_averages_from_model():
    panel = simulated_panel(seed=31, N=200)
    result = estimate_variant(panel, ardl_spec(), "GL")
    assert "y_lag_pre_mean" not in result.coefficients
    assert "x_pre_mean" not in result.coefficients


def test_hansen_accessor_matches_diagnostics():
    panel = simulated_panel(seed=32, N=200)
    result = estimate_variant(panel, ardl_spec(), "CREGMM5")
    stat, df, p = hansen_j(result)
    assert stat == result.diagnostics["hansen_j"]["stat"]
    assert df == result.diagnostics["hansen_j"]["df"]


def test_ar_test_insufficient_span():
    panel = simulated_panel(seed=33, N=120, T=4)
    result = estimate_variant(panel, ardl_spec(), "CREGMM5")
    with pytest.raises(InsufficientSpan):
        ar_test(result, 10)


def test_all_variants_run_on_default_panel():
    panel = simulated_panel(seed=34, N=250, T=8)
    for tag in VARIANTS:
        result = estimate_variant(panel, ardl_spec(), tag)
        assert np.isfinite(result.coef("y_lag1"))
        assert np.isfinite(result.coef("x"))
