"""Panel container and transformation operators.

A :class:`PanelDataset` holds a rectangularized unbalanced panel as dense
``(n_units, n_periods)`` grids with NaN marking missing cells.  Periods are
plain integers; lags and differences respect calendar time, so a gap in a
unit's periods yields missing transformed values rather than a fabricated
positional lag.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadPeriod,
    DuplicateKey,
    EmptyEstimationSample,
    UnknownVariable,
    ZeroVariance,
)


@dataclass(frozen=True)
class PanelDataset:
    """Immutable rectangularized panel keyed by (unit, period).

    Attributes
    ----------
    units : np.ndarray
        Unit identifiers, in sorted order.
    periods : np.ndarray
        Sorted union of integer periods across units.
    columns : dict[str, np.ndarray]
        Variable name -> (n_units, n_periods) float grid, NaN = missing.
    observed : np.ndarray
        Boolean (n_units, n_periods) support mask: True where the (unit,
        period) pair was present in the source rows.
    latent : frozenset[str]
        Names of columns that exist for validation only (e.g. simulated
        unit effects) and must never enter an estimation design.
    """

    units: np.ndarray
    periods: np.ndarray
    columns: dict
    observed: np.ndarray
    latent: frozenset = field(default_factory=frozenset)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def period_index(self, period: int):
        """Column index of ``period`` in the grid, or None if absent."""
        idx = np.searchsorted(self.periods, period)
        if idx < len(self.periods) and self.periods[idx] == period:
            return int(idx)
        return None

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise UnknownVariable(f"unknown variable {name!r}")
        return self.columns[name]

    def variable_names(self, include_latent: bool = False):
        if include_latent:
            return list(self.columns)
        return [c for c in self.columns if c not in self.latent]

    def first_last_observed(self):
        """Per-unit (first, last) observed period; (None, None) if empty."""
        out = []
        for i in range(self.n_units):
            obs = np.flatnonzero(self.observed[i])
            if obs.size == 0:
                out.append((None, None))
            else:
                out.append((int(self.periods[obs[0]]), int(self.periods[obs[-1]])))
        return out

    def with_columns(self, new_columns: dict, latent=()) -> "PanelDataset":
        """Return a new dataset with extra (or replaced) columns."""
        cols = dict(self.columns)
        for name, grid in new_columns.items():
            grid = np.asarray(grid, dtype=float)
            if grid.shape != (self.n_units, self.n_periods):
                raise ValueError(f"column {name!r} has shape {grid.shape}")
            cols[name] = grid
        return PanelDataset(
            units=self.units,
            periods=self.periods,
            columns=cols,
            observed=self.observed,
            latent=self.latent | frozenset(latent),
        )

    def restrict_periods(self, keep_mask: np.ndarray) -> "PanelDataset":
        """View restricted to the period columns selected by ``keep_mask``."""
        return PanelDataset(
            units=self.units,
            periods=self.periods[keep_mask],
            columns={k: v[:, keep_mask] for k, v in self.columns.items()},
            observed=self.observed[:, keep_mask],
            latent=self.latent,
        )


def build_panel(rows) -> PanelDataset:
    """Build a :class:`PanelDataset` from ``(unit, period, values)`` rows.

    ``values`` is a mapping variable-name -> numeric value (None/NaN allowed
    for missing).  Rows may arrive in any order; duplicates raise.
    """
    seen = set()
    varnames = []
    for unit, period, values in rows:
        if not isinstance(period, (int, np.integer)) or isinstance(period, bool):
            raise BadPeriod(f"non-integer period {period!r} for unit {unit!r}")
        key = (unit, int(period))
        if key in seen:
            raise DuplicateKey(f"duplicate (unit, period) = {key}")
        seen.add(key)
        for name in values:
            if name not in varnames:
                varnames.append(name)

    units = np.array(sorted({u for u, _, _ in rows}, key=lambda u: (str(type(u)), u)))
    periods = np.array(sorted({int(p) for _, p, _ in rows}), dtype=int)
    uidx = {u: i for i, u in enumerate(units)}
    pidx = {int(p): j for j, p in enumerate(periods)}

    observed = np.zeros((len(units), len(periods)), dtype=bool)
    columns = {name: np.full((len(units), len(periods)), np.nan) for name in varnames}
    for unit, period, values in rows:
        i, j = uidx[unit], pidx[int(period)]
        observed[i, j] = True
        for name, val in values.items():
            columns[name][i, j] = np.nan if val is None else float(val)

    return PanelDataset(units=units, periods=periods, columns=columns, observed=observed)


def lag(panel: PanelDataset, var: str, k: int) -> np.ndarray:
    """Calendar lag: value at (i, t) is var at (i, t-k), NaN when unobserved."""
    if k < 1:
        raise ValueError("lag order k must be >= 1")
    grid = panel.column(var)
    out = np.full_like(grid, np.nan)
    for j, p in enumerate(panel.periods):
        src = panel.period_index(int(p) - k)
        if src is not None:
            out[:, j] = grid[:, src]
    return out


def first_difference(panel: PanelDataset, var: str) -> np.ndarray:
    """Calendar first difference var(i,t) - var(i,t-1); missing propagates."""
    return panel.column(var) - lag(panel, var, 1)


def split_presample(panel: PanelDataset, S: int):
    """Split into (pre-sample s <= S, estimation sample t > S, flagged units).

    Flagged units have zero observed pre-sample cells.
    """
    est_mask = panel.periods > S
    if not est_mask.any():
        raise EmptyEstimationSample(f"no periods beyond presample_end={S}")
    pre = panel.restrict_periods(~est_mask)
    est = panel.restrict_periods(est_mask)
    flagged = [u for i, u in enumerate(panel.units) if not pre.observed[i].any()]
    return pre, est, flagged


def mundlak_averages(panel: PanelDataset, S: int, x_vars, lagged_y_var=None, lagged_x_vars=()):
    """Per-unit pre-sample averages: x over s <= S, and means of lagged series.

    Returns a dict mapping ``f"{v}_pre_mean"`` (and ``f"{v}_lag_pre_mean"``
    for the lagged dependent / lagged regressors) to length-``n_units``
    arrays; units without a usable pre-sample value get NaN and are counted
    in a single warning.
    """
    pre_mask = panel.periods <= S
    out = {}
    bad_units = set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN slices
        for v in x_vars:
            grid = panel.column(v)[:, pre_mask]
            means = np.nanmean(grid, axis=1)
            bad_units.update(np.flatnonzero(np.isnan(means)).tolist())
            out[f"{v}_pre_mean"] = means
        lagged_names = list(lagged_x_vars)
        if lagged_y_var is not None:
            lagged_names.insert(0, lagged_y_var)
        for v in lagged_names:
            lagged = lag(panel, v, 1)[:, pre_mask]
            means = np.nanmean(lagged, axis=1)
            bad_units.update(np.flatnonzero(np.isnan(means)).tolist())
            out[f"{v}_lag_pre_mean"] = means
    if bad_units:
        warnings.warn(
            f"{len(bad_units)} unit(s) lack usable pre-sample data and will be "
            "dropped from CRE estimations",
            stacklevel=2,
        )
    return out


def full_sample_means(panel: PanelDataset, x_vars):
    """Per-unit means over all observed periods of the given panel view."""
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for v in x_vars:
            out[f"{v}_full_mean"] = np.nanmean(panel.column(v), axis=1)
    return out


@dataclass(frozen=True)
class DecompositionReport:
    """Between/within split of a variable's total sum of squares, with the
    within part further divided into a period-common and a unit-specific
    share."""

    between_share: float
    within_share: float
    within_common_share: float
    within_unitspecific_share: float


def variance_decomposition(panel: PanelDataset, var: str, period_range=None) -> DecompositionReport:
    """Decompose SS_total of ``var`` into between / within(common, specific).

    SS_between = sum_i T_i (ybar_i - ybar)^2, SS_within = sum (y_it - ybar_i)^2,
    common = sum_t n_t dbar_t^2 where dbar_t is the period mean of within
    deviations and n_t the units observed at t.
    """
    if period_range is not None:
        lo, hi = period_range
        keep = (panel.periods >= lo) & (panel.periods <= hi)
        panel = panel.restrict_periods(keep)
    grid = panel.column(var)
    obs = ~np.isnan(grid)
    vals = grid[obs]
    if vals.size == 0:
        raise ZeroVariance(f"no observations of {var!r} in range")
    grand = vals.mean()
    ss_total = float(((vals - grand) ** 2).sum())
    if ss_total == 0.0:
        raise ZeroVariance(f"{var!r} is constant over the requested range")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        unit_means = np.nanmean(grid, axis=1)
    t_i = obs.sum(axis=1)
    has = t_i > 0
    ss_between = float((t_i[has] * (unit_means[has] - grand) ** 2).sum())

    dev = grid - unit_means[:, None]
    ss_within = float(np.nansum(dev**2))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        period_dev_means = np.nanmean(dev, axis=0)
    n_t = obs.sum(axis=0)
    valid_t = n_t > 0
    ss_common = float((n_t[valid_t] * period_dev_means[valid_t] ** 2).sum())

    return DecompositionReport(
        between_share=ss_between / ss_total,
        within_share=ss_within / ss_total,
        within_common_share=ss_common / ss_total,
        within_unitspecific_share=(ss_within - ss_common) / ss_total,
    )
