"""Shared regressor assembly for baseline and GMM estimators.

Turns a :class:`~cregmm.model.ModelSpec` plus panel into an aligned
(y, X, clusters) triple over complete-case estimation rows.  Column order is
fixed: intercept, lagged dependent, x terms, time-invariant covariates,
unit-level averages, time dummies.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySample, NoPresampleUnits
from .model import ModelSpec
from .panel import PanelDataset, full_sample_means, lag, mundlak_averages

INTERCEPT = "const"


@dataclass
class Design:
    """Stacked estimation rows aligned with a panel.

    ``unit_idx``/``periods`` give each row's (unit, period) in panel
    coordinates; ``average_names`` lists the Mundlak-average columns present
    in ``X`` (targets of the variable-addition Hausman test).
    """

    y: np.ndarray
    X: np.ndarray
    names: list
    unit_idx: np.ndarray
    periods: np.ndarray
    dependent: str
    average_names: list = field(default_factory=list)
    n_units_dropped: int = 0

    @property
    def n_obs(self) -> int:
        return len(self.y)

    @property
    def n_units(self) -> int:
        return len(np.unique(self.unit_idx))

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def average_column_names(spec: ModelSpec) -> list:
    """Names of the unit-average regressors implied by ``include_averages``.

    The lagged-dependent average comes first and exists only for dynamic
    models (it proxies the initial condition, which a static model does not
    have); an ARDL(1,1) spec also carries the lagged-x averages.
    """
    names = []
    if spec.include_averages in ("y-only", "y-and-x") and spec.ar_order == 1:
        names.append(f"{spec.dependent}_lag_pre_mean")
    if spec.include_averages == "y-and-x":
        for var in spec.x_vars:
            names.append(f"{var}_pre_mean")
        if spec.has_x_lag:
            for var, qlag, _ in spec.x_terms:
                if qlag == 1:
                    names.append(f"{var}_lag_pre_mean")
    return names


def _unit_averages(panel: PanelDataset, spec: ModelSpec, means_source: str) -> dict:
    if spec.include_averages == "none":
        return {}
    S = spec.presample_end
    x_vars = spec.x_vars if spec.include_averages == "y-and-x" else []
    lagged_x = (
        [v for v, q, _ in spec.x_terms if q == 1]
        if (spec.include_averages == "y-and-x" and spec.has_x_lag)
        else []
    )
    lagged_y = spec.dependent if spec.ar_order == 1 else None
    if means_source == "presample":
        return mundlak_averages(
            panel, S, x_vars, lagged_y_var=lagged_y, lagged_x_vars=lagged_x
        )
    if means_source == "fullsample":
        est_mask = panel.periods > S
        est = panel.restrict_periods(est_mask)
        out = {}
        for key, arr in full_sample_means(est, x_vars).items():
            out[key.replace("_full_mean", "_pre_mean")] = arr
        lagged = ([lagged_y] if lagged_y else []) + lagged_x
        lag_grids = {v: lag(panel, v, 1)[:, est_mask] for v in lagged}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for v, grid in lag_grids.items():
                out[f"{v}_lag_pre_mean"] = np.nanmean(grid, axis=1)
        return out
    raise ValueError(f"means_source must be presample or fullsample, got {means_source!r}")


def assemble_design(
    panel: PanelDataset,
    spec: ModelSpec,
    *,
    start_offset: int = 1,
    include_intercept: bool = True,
    means_source: str = "presample",
) -> Design:
    """Build complete-case estimation rows for ``spec``.

    Rows cover periods t >= presample_end + start_offset (1 for single-lag
    estimators, 2 for the GMM sample where three lagged differences must
    reach into the pre-sample).  Any row with a missing design cell is
    dropped.
    """
    S = spec.presample_end
    dep = spec.dependent
    grids = {}
    order = []

    if include_intercept:
        grids[INTERCEPT] = np.ones((panel.n_units, panel.n_periods))
        order.append(INTERCEPT)

    if spec.ar_order == 1:
        ylag_name = f"{dep}_lag1"
        grids[ylag_name] = lag(panel, dep, 1)
        order.append(ylag_name)

    for var, qlag, _ in spec.x_terms:
        name = var if qlag == 0 else f"{var}_lag1"
        grids[name] = panel.column(var) if qlag == 0 else lag(panel, var, 1)
        order.append(name)

    for var in spec.w_terms:
        grids[var] = panel.column(var)
        order.append(var)

    averages = _unit_averages(panel, spec, means_source)
    avg_names = average_column_names(spec)
    for name in avg_names:
        grids[name] = np.tile(averages[name][:, None], (1, panel.n_periods))
        order.append(name)

    y_grid = panel.column(dep)
    row_mask = panel.observed & (panel.periods >= S + start_offset)[None, :]
    row_mask &= ~np.isnan(y_grid)
    for name in order:
        row_mask &= ~np.isnan(grids[name])

    units_with_avg = None
    if avg_names:
        usable = np.ones(panel.n_units, dtype=bool)
        for name in avg_names:
            usable &= ~np.isnan(averages[name])
        units_with_avg = usable
        if not usable.any():
            raise NoPresampleUnits("no unit has usable pre-sample averages")

    ui, pj = np.nonzero(row_mask)
    if len(ui) == 0:
        raise EmptySample("no complete estimation rows")
    row_periods = panel.periods[pj]

    names = list(order)
    X_cols = [grids[name][ui, pj] for name in order]

    if spec.time_dummies:
        uniq = np.unique(row_periods)
        for p in uniq[1:]:  # first period is the reference
            names.append(f"t{p}")
            X_cols.append((row_periods == p).astype(float))

    X = np.column_stack(X_cols)
    dropped = 0
    if units_with_avg is not None:
        dropped = int((~units_with_avg).sum())

    return Design(
        y=y_grid[ui, pj],
        X=X,
        names=names,
        unit_idx=ui,
        periods=row_periods,
        dependent=dep,
        average_names=avg_names,
        n_units_dropped=dropped,
    )
