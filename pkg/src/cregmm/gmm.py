"""Linear GMM for level equations with lag-window instruments.

Implements the estimator family around the level equation augmented with
pre-sample unit averages: the plain level-GMM baseline (GL), six variants
differing in whether x instruments enter as first differences or levels and
in which averages are used as extra orthogonality conditions, plus a
first-differenced GMM benchmark.  Lagged instruments are restricted to the
window t-1..t-3 (t-0..t-3 under strict exogeneity) and arranged as
per-period blocks with structural zeros, optionally collapsed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .design import Design, assemble_design
from .errors import (
    InsufficientSpan,
    SingularWeight,
    Underidentified,
    UnknownVariant,
    WindowEmpty,
)
from .estimators import EstimationResult, wald_subset, _r_squared
from .model import ModelSpec, STRICTLY_EXOGENOUS
from .panel import PanelDataset, lag

WEIGHT_EIG_TOL = 1e-12


@dataclass(frozen=True)
class GmmVariant:
    """One member of the estimator family.

    ``x_form`` selects the instrument transform for x in the level equation;
    ``avg_ivs`` names which pre-sample averages double as instruments;
    ``averages_in_model`` controls whether the averages enter the regressor
    set at all (the plain baseline omits them).
    """

    tag: str
    x_form: str  # "diff" | "level" | "dif-equation"
    avg_ivs: frozenset = frozenset()
    averages_in_model: bool = True
    max_lag: int = 3


VARIANTS = {
    "GL": GmmVariant("GL", "diff", frozenset(), averages_in_model=False),
    "CREGMM0": GmmVariant("CREGMM0", "diff", frozenset({"y", "x"})),
    "CREGMM1": GmmVariant("CREGMM1", "diff", frozenset({"x"})),
    "CREGMM2": GmmVariant("CREGMM2", "diff", frozenset()),
    "CREGMM3": GmmVariant("CREGMM3", "level", frozenset({"y", "x"})),
    "CREGMM4": GmmVariant("CREGMM4", "level", frozenset({"x"})),
    "CREGMM5": GmmVariant("CREGMM5", "level", frozenset()),
    "GMMDIF": GmmVariant("GMMDIF", "dif-equation", frozenset(), averages_in_model=False),
}


@dataclass(frozen=True)
class GmmOptions:
    steps: str = "one"  # "one" | "two"
    collapse: bool = False
    windmeijer: bool = False
    weight_ridge: float = 0.0

    def __post_init__(self):
        if self.steps not in ("one", "two"):
            raise ValueError("steps must be 'one' or 'two'")
        if self.windmeijer and self.steps != "two":
            raise ValueError("windmeijer correction requires two-step estimation")


@dataclass
class InstrumentMatrix:
    """Per-observation instrument values plus column metadata.

    ``meta`` holds one dict per column: block id, source variable, lag m and
    form (level/diff/average/exog).  Out-of-window cells are structural
    zeros.
    """

    values: np.ndarray
    meta: list
    design: Design = None

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path):
        """Debug dump: metadata header row then the raw values."""
        header = ",".join(
            f"{m['block']}|{m['var']}|lag{m['lag']}|{m['form']}" for m in self.meta
        )
        np.savetxt(path, self.values, delimiter=",", header=header, comments="")


def _augmented_spec(spec: ModelSpec, variant: GmmVariant) -> ModelSpec:
    include = "y-and-x" if variant.averages_in_model else "none"
    if spec.include_averages != include:
        spec = replace(spec, include_averages=include)
    return spec


def _lag_window(role, max_lag: int, has_lag_term: bool):
    start = 0 if role.exogeneity == STRICTLY_EXOGENOUS else 1
    stop = max_lag + (1 if has_lag_term else 0)
    return range(start, stop + 1)


def _block_columns(vals, row_periods, block, var, m, form, collapse, cols, meta):
    """Append per-period (or collapsed) instrument columns for one lag."""
    vals = np.where(np.isnan(vals), 0.0, vals)
    if collapse:
        if np.any(vals != 0.0):
            cols.append(vals)
            meta.append({"block": block, "var": var, "lag": m, "form": form})
        return
    for t0 in np.unique(row_periods):
        col = np.where(row_periods == t0, vals, 0.0)
        if np.any(col != 0.0):
            cols.append(col)
            meta.append({"block": f"{block}:t{t0}", "var": var, "lag": m, "form": form})


def build_instruments(
    panel: PanelDataset,
    spec: ModelSpec,
    variant,
    options: GmmOptions = GmmOptions(),
    design: Design = None,
) -> InstrumentMatrix:
    """Build the instrument matrix for one variant over the GMM sample.

    For level variants: the lagged dependent variable is always instrumented
    by lagged first differences of y; x by lagged differences or lagged
    levels per variant; averages named in ``avg_ivs`` enter as plain
    IV-style columns; intercept, time dummies and time-invariant covariates
    instrument themselves.  The differenced-equation variant instead uses
    lagged levels of y (m>=2) and of x (m>=1 predetermined, m>=2
    endogenous).
    """
    if isinstance(variant, str):
        if variant not in VARIANTS:
            raise UnknownVariant(f"unknown variant {variant!r}")
        variant = VARIANTS[variant]
    spec = _augmented_spec(spec, variant)
    if design is None:
        design = assemble_design(panel, spec, start_offset=2)

    pj = np.searchsorted(panel.periods, design.periods)
    ui = design.unit_idx
    dep = spec.dependent
    cols, meta = [], []

    def lag_grid(var, m):
        return panel.column(var) if m == 0 else lag(panel, var, m)

    dif_equation = variant.x_form == "dif-equation"

    if dif_equation:
        # y levels, m >= 2 up to max_lag
        for m in range(2, variant.max_lag + 1):
            vals = lag_grid(dep, m)[ui, pj]
            _block_columns(vals, design.periods, "y_lev", dep, m, "level",
                           options.collapse, cols, meta)
        for var in spec.x_vars:
            role = spec.role_of(var)
            if role.exogeneity == STRICTLY_EXOGENOUS:
                m_start = 0
            elif role.exogeneity == "predetermined":
                m_start = 1
            else:
                m_start = 2
            has_lag = any(v == var and q == 1 for v, q, _ in spec.x_terms)
            stop = variant.max_lag + (1 if has_lag else 0)
            for m in range(m_start, stop + 1):
                vals = lag_grid(var, m)[ui, pj]
                _block_columns(vals, design.periods, "x_lev", var, m, "level",
                               options.collapse, cols, meta)
    else:
        # lagged dependent: always lagged first differences of y
        for m in range(1, variant.max_lag + 1):
            vals = (lag_grid(dep, m) - lag_grid(dep, m + 1))[ui, pj]
            _block_columns(vals, design.periods, "dy", dep, m, "diff",
                           options.collapse, cols, meta)
        for var in spec.x_vars:
            role = spec.role_of(var)
            has_lag = any(v == var and q == 1 for v, q, _ in spec.x_terms)
            for m in _lag_window(role, variant.max_lag, has_lag):
                if variant.x_form == "diff":
                    vals = (lag_grid(var, m) - lag_grid(var, m + 1))[ui, pj]
                    form = "diff"
                else:
                    vals = lag_grid(var, m)[ui, pj]
                    form = "level"
                _block_columns(vals, design.periods, f"x_{variant.x_form}", var, m,
                               form, options.collapse, cols, meta)
        if "y" in variant.avg_ivs:
            name = f"{dep}_lag_pre_mean"
            cols.append(design.column(name))
            meta.append({"block": "avg", "var": name, "lag": 0, "form": "average"})
        if "x" in variant.avg_ivs:
            for name in design.average_names:
                if name == f"{dep}_lag_pre_mean":
                    continue
                cols.append(design.column(name))
                meta.append({"block": "avg", "var": name, "lag": 0, "form": "average"})

    # exogenous design columns instrument themselves
    avg_set = set(design.average_names)
    for name in design.names:
        is_exog = name == "const" or name.startswith("t") and name[1:].isdigit()
        is_exog = is_exog or name in spec.w_terms
        if is_exog and name not in avg_set:
            cols.append(design.column(name))
            meta.append({"block": "exog", "var": name, "lag": 0, "form": "exog"})

    if not cols:
        raise WindowEmpty("no instrument columns could be built (T too short?)")
    Z = np.column_stack(cols)
    keep = np.flatnonzero(np.any(Z != 0.0, axis=0))
    Z = Z[:, keep]
    meta = [meta[j] for j in keep]
    return InstrumentMatrix(values=Z, meta=meta, design=design)


def _robust_inverse(M: np.ndarray, ridge: float = 0.0):
    """Symmetric generalized inverse with small-eigenvalue cutoff."""
    M = (M + M.T) / 2
    if ridge > 0:
        M = M + ridge * np.eye(M.shape[0])
    w, V = np.linalg.eigh(M)
    lam_max = float(np.max(np.abs(w))) if w.size else 0.0
    if lam_max == 0.0:
        raise SingularWeight("weight matrix is identically zero")
    keep = np.abs(w) > WEIGHT_EIG_TOL * lam_max
    if not keep.any():
        raise SingularWeight("weight matrix has no usable eigenvalues")
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    rank = int(keep.sum())
    return (V * inv_w) @ V.T, rank


def _cluster_scores(Z, u, clusters):
    labels, inv = np.unique(clusters, return_inverse=True)
    scores = np.zeros((len(labels), Z.shape[1]))
    np.add.at(scores, inv, Z * u[:, None])
    return scores


def gmm_solve(y, X, Z, clusters, options: GmmOptions = GmmOptions(), names=None):
    """One- or two-step linear GMM with cluster weighting.

    Step one uses W1 = (sum_i Z_i'Z_i)^-1 (the 2SLS weight for level
    equations); step two builds the weight from clustered step-one moment
    outer products.  Returns (beta, vcov, residuals, info) where info holds
    the Hansen J ingredients and weight diagnostics.
    """
    n, K = X.shape
    L = Z.shape[1]
    if L < K:
        raise Underidentified(f"{L} instruments for {K} parameters")

    W1, w1_rank = _robust_inverse(Z.T @ Z, options.weight_ridge)
    XtZ = X.T @ Z
    ZtX = XtZ.T
    Zty = Z.T @ y

    def solve_step(W):
        A = XtZ @ W @ ZtX
        b = XtZ @ W @ Zty
        try:
            beta = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise Underidentified("X'Z W Z'X is singular") from None
        return beta, A

    beta1, A1 = solve_step(W1)
    u1 = y - X @ beta1
    scores1 = _cluster_scores(Z, u1, clusters)
    S1 = scores1.T @ scores1

    M1 = np.linalg.inv(A1)
    V1 = M1 @ (XtZ @ W1 @ S1 @ W1 @ ZtX) @ M1

    info = {
        "weight_rank_step1": w1_rank,
        "n_instruments": L,
        "n_params": K,
        "steps": options.steps,
    }

    if options.steps == "one":
        beta, vcov, u = beta1, V1, u1
        # J evaluated with the efficient weight built from one-step residuals
        W2, w2_rank = _robust_inverse(S1, options.weight_ridge)
        gbar = Z.T @ u
        j_rank = min(w2_rank, int(np.linalg.matrix_rank(Z)))
    else:
        W2, w2_rank = _robust_inverse(S1, options.weight_ridge)
        beta, A2 = solve_step(W2)
        u = y - X @ beta
        M2 = np.linalg.inv(A2)
        scores2 = _cluster_scores(Z, u, clusters)
        S2 = scores2.T @ scores2
        if options.windmeijer:
            vcov = _windmeijer(X, Z, clusters, XtZ, ZtX, W2, M2, beta, u, V1)
        else:
            vcov = M2 @ (XtZ @ W2 @ S2 @ W2 @ ZtX) @ M2
        gbar = Z.T @ u
        W2, w2_rank = _robust_inverse(S2, options.weight_ridge)
        j_rank = min(w2_rank, int(np.linalg.matrix_rank(Z)))
    info["weight_rank_step2"] = w2_rank

    j_df = j_rank - K
    j_stat = float(gbar @ W2 @ gbar) if j_df > 0 else 0.0
    j_p = float(stats.chi2.sf(j_stat, j_df)) if j_df > 0 else None
    info["hansen_j"] = {"stat": max(j_stat, 0.0), "df": max(j_df, 0), "p": j_p}
    return beta, vcov, u, info


def _windmeijer(X, Z, clusters, XtZ, ZtX, W2, M2, beta, u, V1):
    """Finite-sample correction of the two-step variance (linear moments)."""
    labels, inv = np.unique(clusters, return_inverse=True)
    K = X.shape[1]
    gbar2 = Z.T @ u
    D = np.zeros((K, K))
    scores_u = _cluster_scores(Z, u, clusters)
    for j in range(K):
        # dS/dbeta_j = -sum_i Z_i'(x_ij u_i' + u_i x_ij') Z_i
        scores_xj = _cluster_scores(Z, X[:, j], clusters)
        dS = -(scores_xj.T @ scores_u + scores_u.T @ scores_xj)
        D[:, j] = -(M2 @ XtZ @ W2 @ dS @ W2 @ gbar2)
    return M2 + D @ M2 + M2 @ D.T + D @ V1 @ D.T


def hansen_j(result: EstimationResult):
    """Hansen overidentification statistic recorded during estimation."""
    info = result.diagnostics.get("hansen_j")
    if info is None:
        raise ValueError("result carries no GMM moment diagnostics")
    return info["stat"], info["df"], info["p"]


def ar_test(result: EstimationResult, order: int):
    """Serial-correlation z test of the given order on first-differenced
    residuals (Arellano-Bond form, clustered by unit)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    per_unit = {}
    for u, p, r in zip(result.unit_idx, result.periods, result.residuals):
        per_unit.setdefault(u, {})[int(p)] = r
    s = []
    for resids in per_unit.values():
        d = {
            p: resids[p] - resids[p - 1]
            for p in resids
            if (p - 1) in resids
        }
        acc = 0.0
        hit = False
        for p, dv in d.items():
            if (p - order) in d:
                acc += dv * d[p - order]
                hit = True
        if hit:
            s.append(acc)
    if not s:
        raise InsufficientSpan(f"no residual span for order {order}")
    s = np.asarray(s)
    denom = float(np.sqrt((s**2).sum()))
    if denom == 0.0:
        raise InsufficientSpan("degenerate variance in serial-correlation test")
    z = float(s.sum()) / denom
    p = 2 * float(stats.norm.sf(abs(z)))
    return z, p


def hausman_addition(result: EstimationResult, average_terms):
    """Variable-addition (robust Hausman) Wald test on average coefficients."""
    stat, df, p = wald_subset(result, list(average_terms))
    return stat, df, p


def _difference_design(panel: PanelDataset, spec: ModelSpec, design: Design) -> Design:
    """First-difference the level design (drop unit-level columns)."""
    dep = spec.dependent
    pj = np.searchsorted(panel.periods, design.periods)
    ui = design.unit_idx

    def dgrid(var, m=0):
        a = panel.column(var) if m == 0 else lag(panel, var, m)
        b = lag(panel, var, m + 1)
        return (a - b)[ui, pj]

    names, cols = [], []
    if spec.ar_order == 1:
        names.append(f"{dep}_lag1")
        cols.append(dgrid(dep, 1))
    for var, qlag, _ in spec.x_terms:
        names.append(var if qlag == 0 else f"{var}_lag1")
        cols.append(dgrid(var, qlag))
    y = dgrid(dep, 0)
    if spec.time_dummies:
        uniq = np.unique(design.periods)
        for p in uniq[1:]:
            names.append(f"t{p}")
            cols.append((design.periods == p).astype(float))
    X = np.column_stack(cols)
    ok = ~np.isnan(y) & ~np.isnan(X).any(axis=1)
    return Design(
        y=y[ok],
        X=X[ok],
        names=names,
        unit_idx=ui[ok],
        periods=design.periods[ok],
        dependent=dep,
        average_names=[],
    )


def estimate_variant(
    panel: PanelDataset,
    spec: ModelSpec,
    variant,
    options: GmmOptions = GmmOptions(),
) -> EstimationResult:
    """Assemble regressors, build instruments, solve, attach diagnostics."""
    if isinstance(variant, str):
        if variant not in VARIANTS:
            raise UnknownVariant(f"unknown variant {variant!r}")
        variant = VARIANTS[variant]
    spec = _augmented_spec(spec, variant)
    design = assemble_design(panel, spec, start_offset=2)
    if variant.x_form == "dif-equation":
        design = _difference_design(panel, spec, design)
    zmat = build_instruments(panel, spec, variant, options, design)

    beta, vcov, resid, info = gmm_solve(
        design.y, design.X, zmat.values, design.unit_idx, options, design.names
    )
    result = EstimationResult(
        coefficients=dict(zip(design.names, beta)),
        vcov=vcov,
        residuals=resid,
        unit_idx=design.unit_idx,
        periods=design.periods,
        n_obs=design.n_obs,
        n_units=design.n_units,
        estimator_tag=variant.tag,
        diagnostics={
            "hansen_j": info["hansen_j"],
            "n_instruments": info["n_instruments"],
            "weight_rank_step1": info["weight_rank_step1"],
            "r2": _r_squared(design.y, design.y - resid),
            "ar_transform": "first-differenced level residuals",
        },
    )
    for m in (1, 2, 3):
        try:
            z, p = ar_test(result, m)
            result.diagnostics[f"ar{m}"] = {"z": z, "p": p}
        except InsufficientSpan:
            result.diagnostics[f"ar{m}"] = None
    if design.average_names:
        stat, df, p = hausman_addition(result, design.average_names)
        result.diagnostics["hausman"] = {"stat": stat, "df": df, "p": p}
    result.diagnostics["units_dropped_no_presample"] = design.n_units_dropped
    return result
