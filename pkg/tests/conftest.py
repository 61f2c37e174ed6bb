"""Shared fixtures and small panel builders for the test suite."""

import numpy as np
import pytest

from cregmm import DgpConfig, ModelSpec, VariableRole, build_panel, simulate_panel
from cregmm.model import ENDOGENOUS, PREDETERMINED


def toy_panel(series: dict, units=None):
    """Build a balanced panel from {var: (n_units, n_periods) array-like}."""
    grids = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    n_units, n_periods = next(iter(grids.values())).shape
    if units is None:
        units = list(range(n_units))
    rows = []
    for i, unit in enumerate(units):
        for t in range(n_periods):
            values = {k: grids[k][i, t] for k in grids}
            rows.append((unit, t + 1, values))
    return build_panel(rows)


def simulated_panel(seed=0, **overrides):
    defaults = dict(N=200, T=8, S=3, seed=seed)
    defaults.update(overrides)
    return simulate_panel(DgpConfig(**defaults))


def ardl_spec(S=3, role=PREDETERMINED, with_lag=False, **kwargs):
    terms = [("x", 0, VariableRole(role, het_correlated=True))]
    if with_lag:
        terms.append(("x", 1, VariableRole(role, het_correlated=True)))
    return ModelSpec(dependent="y", x_terms=terms, presample_end=S, **kwargs)


@pytest.fixture
def small_sim_panel():
    return simulated_panel(seed=11, gamma1=0.25, gamma3=0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
