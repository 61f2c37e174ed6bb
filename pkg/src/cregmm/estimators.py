"""Baseline panel estimators: pooled OLS, within FE, FGLS RE, and the
augmented regressions with unit-level averages (CRE1/CRE2).

All estimators return an :class:`EstimationResult` with cluster-by-unit
sandwich variance.  Rank checking uses a pivoted QR; collinear columns are
reported, never silently absorbed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .design import Design, assemble_design
from .errors import EmptySample, RankDeficient, TermsNotInModel, TimeInvariantInFE
from .model import ModelSpec
from .panel import PanelDataset

RANK_TOL = 1e-10


@dataclass
class EstimationResult:
    """Coefficients, cluster-robust variance and diagnostics of one fit."""

    coefficients: dict
    vcov: np.ndarray
    residuals: np.ndarray
    unit_idx: np.ndarray
    periods: np.ndarray
    n_obs: int
    n_units: int
    estimator_tag: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def names(self):
        return list(self.coefficients)

    @property
    def beta(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))

    def se(self, name: str) -> float:
        i = self.names.index(name)
        return float(np.sqrt(self.vcov[i, i]))

    def coef(self, name: str) -> float:
        return self.coefficients[name]


def check_rank(X: np.ndarray, names) -> None:
    """Raise RankDeficient naming the offending columns (pivoted QR)."""
    if X.shape[0] < X.shape[1]:
        raise RankDeficient(
            f"more columns ({X.shape[1]}) than rows ({X.shape[0]})", dropped=names
        )
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return
    bad = diag <= RANK_TOL * diag[0]
    if bad.any():
        dropped = [names[piv[j]] for j in np.flatnonzero(bad)]
        raise RankDeficient(
            f"collinear design columns: {', '.join(dropped)}", dropped=dropped
        )


def cluster_vcov(X: np.ndarray, resid: np.ndarray, clusters: np.ndarray) -> np.ndarray:
    """One-way cluster sandwich with Stata-style small-sample factor.

    With singleton clusters this reduces to the HC1 heteroskedasticity-robust
    estimator.
    """
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    Xu = X * resid[:, None]
    labels, inv = np.unique(clusters, return_inverse=True)
    G = len(labels)
    scores = np.zeros((G, k))
    np.add.at(scores, inv, Xu)
    meat = scores.T @ scores
    if G > 1 and n > k:
        c = (G / (G - 1)) * ((n - 1) / (n - k))
    else:
        c = 1.0
    return c * bread @ meat @ bread


def _fit_ols(y, X, names, clusters):
    check_rank(X, names)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    vcov = cluster_vcov(X, resid, clusters)
    return beta, resid, vcov


def _r_squared(y, fitted) -> float:
    # squared correlation: comparable across transformed estimators
    if np.std(y) == 0 or np.std(fitted) == 0:
        return float("nan")
    return float(np.corrcoef(y, fitted)[0, 1] ** 2)


def _result(design: Design, beta, resid, vcov, tag, extra_diag=None) -> EstimationResult:
    diag = {"r2": _r_squared(design.y, design.y - resid)}
    if extra_diag:
        diag.update(extra_diag)
    return EstimationResult(
        coefficients=dict(zip(design.names, beta)),
        vcov=vcov,
        residuals=resid,
        unit_idx=design.unit_idx,
        periods=design.periods,
        n_obs=design.n_obs,
        n_units=design.n_units,
        estimator_tag=tag,
        diagnostics=diag,
    )


def wald_subset(result: EstimationResult, names) -> tuple:
    """Wald chi-square test that the named coefficients are jointly zero."""
    missing = [n for n in names if n not in result.coefficients]
    if missing:
        raise TermsNotInModel(f"not in model: {', '.join(missing)}")
    idx = [result.names.index(n) for n in names]
    b = result.beta[idx]
    V = result.vcov[np.ix_(idx, idx)]
    stat = float(b @ np.linalg.solve(V, b))
    df = len(idx)
    p = float(stats.chi2.sf(stat, df)) if stat > 0 else 1.0
    return stat, df, p


def pols(panel: PanelDataset, spec: ModelSpec, *, start_offset: int = 1) -> EstimationResult:
    """Pooled OLS with cluster-by-unit standard errors."""
    design = assemble_design(panel, spec, start_offset=start_offset)
    beta, resid, vcov = _fit_ols(design.y, design.X, design.names, design.unit_idx)
    return _result(design, beta, resid, vcov, "POLS")


def fe_within(panel: PanelDataset, spec: ModelSpec, *, start_offset: int = 1) -> EstimationResult:
    """Within (fixed effects) estimator; time-invariant regressors rejected."""
    if spec.w_terms:
        raise TimeInvariantInFE(
            f"time-invariant regressors are absorbed by the within transform: "
            f"{', '.join(spec.w_terms)}"
        )
    if spec.include_averages != "none":
        raise TimeInvariantInFE("unit-level averages are absorbed by the within transform")
    design = assemble_design(panel, spec, include_intercept=False, start_offset=start_offset)

    yd, Xd = _within_demean(design.y, design.X, design.unit_idx)
    counts = np.bincount(design.unit_idx, minlength=0)
    if (counts[np.unique(design.unit_idx)] < 2).any():
        raise EmptySample("within estimator needs >= 2 observations per unit")
    beta, resid, vcov = _fit_ols(yd, Xd, design.names, design.unit_idx)
    return _result(design, beta, resid, vcov, "FE")


def _within_demean(y, X, clusters):
    labels, inv = np.unique(clusters, return_inverse=True)
    G = len(labels)
    counts = np.bincount(inv).astype(float)
    ymeans = np.bincount(inv, weights=y) / counts
    Xmeans = np.zeros((G, X.shape[1]))
    np.add.at(Xmeans, inv, X)
    Xmeans /= counts[:, None]
    return y - ymeans[inv], X - Xmeans[inv]


def _swamy_arora_components(design: Design):
    """Within and between residual variances (Swamy-Arora, unbalanced)."""
    labels, inv = np.unique(design.unit_idx, return_inverse=True)
    G = len(labels)
    counts = np.bincount(inv).astype(float)

    # within step: time-varying columns only
    tv_cols = [
        j
        for j, name in enumerate(design.names)
        if name != "const" and _is_time_varying(design.X[:, j], inv, G)
    ]
    yd, Xd = _within_demean(design.y, design.X[:, tv_cols], design.unit_idx)
    bw, *_ = np.linalg.lstsq(Xd, yd, rcond=None)
    rw = yd - Xd @ bw
    dof_w = design.n_obs - G - len(tv_cols)
    sigma_e2 = float(rw @ rw) / max(dof_w, 1)

    # between step: unit means, intercept included
    ybar = np.bincount(inv, weights=design.y) / counts
    Xbar = np.zeros((G, design.X.shape[1]))
    np.add.at(Xbar, inv, design.X)
    Xbar /= counts[:, None]
    keep = [j for j in range(Xbar.shape[1]) if np.ptp(Xbar[:, j]) > 0 or design.names[j] == "const"]
    Xb = Xbar[:, keep]
    bb, *_ = np.linalg.lstsq(Xb, ybar, rcond=None)
    rb = ybar - Xb @ bb
    dof_b = G - Xb.shape[1]
    between_ms = float(rb @ rb) / max(dof_b, 1)
    sigma_mu2 = max(between_ms - sigma_e2 * float(np.mean(1.0 / counts)), 0.0)
    return sigma_e2, sigma_mu2, counts, inv


def _is_time_varying(col, inv, G):
    means = np.zeros(G)
    cnt = np.bincount(inv).astype(float)
    np.add.at(means, inv, col)
    means /= cnt
    return float(np.abs(col - means[inv]).max()) > 1e-12


def re_fgls(panel: PanelDataset, spec: ModelSpec, *, start_offset: int = 1) -> EstimationResult:
    """Random effects via Swamy-Arora FGLS (quasi-demeaning), cluster vcov."""
    design = assemble_design(panel, spec, start_offset=start_offset)
    sigma_e2, sigma_mu2, counts, inv = _swamy_arora_components(design)
    theta_i = 1.0 - np.sqrt(sigma_e2 / (counts * sigma_mu2 + sigma_e2))

    ymeans = np.bincount(inv, weights=design.y) / counts
    Xmeans = np.zeros((len(counts), design.X.shape[1]))
    np.add.at(Xmeans, inv, design.X)
    Xmeans /= counts[:, None]

    yq = design.y - theta_i[inv] * ymeans[inv]
    Xq = design.X - theta_i[inv, None] * Xmeans[inv]
    beta, resid, vcov = _fit_ols(yq, Xq, design.names, design.unit_idx)
    return _result(
        design,
        beta,
        resid,
        vcov,
        "RE",
        extra_diag={"sigma_e2": sigma_e2, "sigma_mu2": sigma_mu2},
    )


def cre(
    panel: PanelDataset,
    spec: ModelSpec,
    variant: str = "CRE2",
    means_source: str = "presample",
    backend: str = "pols",
    start_offset: int = 1,
) -> EstimationResult:
    """Augmented regression with unit averages: CRE1 adds the average of the
    lagged dependent variable only, CRE2 also the averages of the x terms.

    The composite error (unit remainder + shock) is clustered, so the
    default backend is pooled OLS with cluster standard errors; an RE-FGLS
    backend is available.  Diagnostics carry the variable-addition Hausman
    Wald test on the average coefficients.
    """
    if variant not in ("CRE1", "CRE2"):
        raise ValueError("variant must be CRE1 or CRE2")
    include = "y-only" if variant == "CRE1" else "y-and-x"
    aug_spec = ModelSpec(
        dependent=spec.dependent,
        ar_order=spec.ar_order,
        x_terms=spec.x_terms,
        w_terms=spec.w_terms,
        time_dummies=spec.time_dummies,
        presample_end=spec.presample_end,
        include_averages=include,
    )
    design = assemble_design(panel, aug_spec, means_source=means_source, start_offset=start_offset)
    if backend == "pols":
        beta, resid, vcov = _fit_ols(design.y, design.X, design.names, design.unit_idx)
        result = _result(design, beta, resid, vcov, variant)
    elif backend == "re":
        sigma_e2, sigma_mu2, counts, inv = _swamy_arora_components(design)
        theta_i = 1.0 - np.sqrt(sigma_e2 / (counts * sigma_mu2 + sigma_e2))
        ymeans = np.bincount(inv, weights=design.y) / counts
        Xmeans = np.zeros((len(counts), design.X.shape[1]))
        np.add.at(Xmeans, inv, design.X)
        Xmeans /= counts[:, None]
        yq = design.y - theta_i[inv] * ymeans[inv]
        Xq = design.X - theta_i[inv, None] * Xmeans[inv]
        beta, resid, vcov = _fit_ols(yq, Xq, design.names, design.unit_idx)
        result = _result(design, beta, resid, vcov, variant)
    else:
        raise ValueError("backend must be pols or re")

    stat, df, p = wald_subset(result, design.average_names)
    result.diagnostics["hausman"] = {"stat": stat, "df": df, "p": p}
    result.diagnostics["units_dropped_no_presample"] = design.n_units_dropped
    return result
