"""Synthetic panel generator with controlled double endogeneity.

The process is an ARDL(1,1) in y driven by an AR(1) regressor x:

    y_it = beta0 + rho y_it-1 + beta1 x_it + beta2 x_it-1 + mu_i + e_it
    x_it = gamma1 mu_i + theta_x x_it-1 + gamma2 eps_it + xi_it
    e_it = gamma3 mu_i + eps_it

gamma1 ties x to the unit effect, gamma2 to the idiosyncratic shock, and
gamma3 ties the shock to the unit effect.  Variances are calibrated so that
either the composite quantities (V(e), V(x)) or the primitive shocks
(sigma_eps, sigma_xi) are held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationInfeasible, MissingLatents
from .panel import PanelDataset

FIX_VE = "fix-Ve"
FIX_VEPS = "fix-Veps"
FIX_VX = "fix-Vx"
FIX_VXI = "fix-Vxi"

LATENT_COLUMNS = ("mu", "eps", "e", "xi")


@dataclass(frozen=True)
class DgpConfig:
    """Simulation parameters.

    ``e_mode`` selects whether ``sigma_e`` (composite shock s.d.) or
    ``sigma_eps`` (primitive shock s.d.) is held fixed; ``x_mode`` does the
    same for ``sigma_x`` vs ``sigma_xi``.  ``T`` counts estimation periods,
    ``S`` pre-sample periods; the generated panel carries periods
    ``0 .. S+T`` with period 0 holding only the lag base of y.
    """

    rho: float = 0.5
    beta0: float = 0.0
    beta1: float = 1.0
    beta2: float = 0.0
    theta_x: float = 0.5
    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma3: float = 0.0
    sigma_mu: float = 1.0
    e_mode: str = FIX_VEPS
    x_mode: str = FIX_VXI
    sigma_e: float | None = None
    sigma_eps: float | None = 1.0
    sigma_x: float | None = None
    sigma_xi: float | None = 1.0
    N: int = 100
    T: int = 10
    S: int = 3
    burn_in: int = 50
    seed: int = 0

    def __post_init__(self):
        if abs(self.rho) >= 1:
            raise ValueError("|rho| must be < 1")
        if abs(self.theta_x) >= 1:
            raise ValueError("|theta_x| must be < 1")
        if self.e_mode not in (FIX_VE, FIX_VEPS):
            raise ValueError(f"unknown e_mode {self.e_mode!r}")
        if self.x_mode not in (FIX_VX, FIX_VXI):
            raise ValueError(f"unknown x_mode {self.x_mode!r}")
        if self.e_mode == FIX_VE and self.sigma_e is None:
            raise ValueError("e_mode fix-Ve requires sigma_e")
        if self.e_mode == FIX_VEPS and self.sigma_eps is None:
            raise ValueError("e_mode fix-Veps requires sigma_eps")
        if self.x_mode == FIX_VX and self.sigma_x is None:
            raise ValueError("x_mode fix-Vx requires sigma_x")
        if self.x_mode == FIX_VXI and self.sigma_xi is None:
            raise ValueError("x_mode fix-Vxi requires sigma_xi")

    def replace(self, **kwargs) -> "DgpConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class CalibratedSigmas:
    """Shock standard deviations implied by the variance mode, plus the
    composite variances they imply."""

    sigma_eps: float
    sigma_xi: float
    implied_Vx: float
    implied_Ve: float


def calibrate_variances(config: DgpConfig) -> CalibratedSigmas:
    """Resolve (sigma_eps, sigma_xi) and the implied V(x), V(e)."""
    g1, g2, g3 = config.gamma1, config.gamma2, config.gamma3
    s_mu2 = config.sigma_mu**2

    if config.e_mode == FIX_VE:
        var_eps = config.sigma_e**2 - g3**2 * s_mu2
        if var_eps <= 0:
            raise CalibrationInfeasible(
                f"sigma_e^2 - gamma3^2 sigma_mu^2 = {var_eps:.6g} <= 0"
            )
        sigma_eps = math.sqrt(var_eps)
        implied_Ve = config.sigma_e**2
    else:
        sigma_eps = config.sigma_eps
        implied_Ve = g3**2 * s_mu2 + sigma_eps**2

    if config.x_mode == FIX_VX:
        var_xi = (
            (1 - config.theta_x**2) * config.sigma_x**2
            - g1**2 * s_mu2
            - g2**2 * sigma_eps**2
        )
        if var_xi <= 0:
            raise CalibrationInfeasible(
                "(1-theta^2) sigma_x^2 - gamma1^2 sigma_mu^2 - "
                f"gamma2^2 sigma_eps^2 = {var_xi:.6g} <= 0"
            )
        sigma_xi = math.sqrt(var_xi)
        implied_Vx = config.sigma_x**2
    else:
        sigma_xi = config.sigma_xi
        implied_Vx = (g1**2 * s_mu2 + g2**2 * sigma_eps**2 + sigma_xi**2) / (
            1 - config.theta_x**2
        )

    return CalibratedSigmas(
        sigma_eps=sigma_eps,
        sigma_xi=sigma_xi,
        implied_Vx=implied_Vx,
        implied_Ve=implied_Ve,
    )


def _unit_draws(config: DgpConfig, sigmas: CalibratedSigmas, total: int):
    """Per-unit shock streams, seeded independently of N (unit i's stream is
    a pure function of (seed, i))."""
    mu = np.empty(config.N)
    eps = np.empty((config.N, total))
    xi = np.empty((config.N, total))
    for i in range(config.N):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(i,))
        )
        mu[i] = rng.normal(0.0, config.sigma_mu)
        eps[i] = rng.normal(0.0, sigmas.sigma_eps, size=total)
        xi[i] = rng.normal(0.0, sigmas.sigma_xi, size=total)
    return mu, eps, xi


def simulate_panel(config: DgpConfig) -> PanelDataset:
    """Generate a balanced panel with periods 0..S+T.

    Period 0 holds only y (the lag base for the first pre-sample average);
    periods 1..S are the pre-sample, S+1..S+T the estimation sample.  Latent
    columns mu, eps, e, xi are stored for moment validation and flagged so
    estimators never pick them up.
    """
    sigmas = calibrate_variances(config)
    total = config.burn_in + config.S + config.T
    mu, eps, xi = _unit_draws(config, sigmas, total)

    N = config.N
    x = np.zeros((N, total + 1))  # index k = steps since start, x[:,0] = 0
    y = np.zeros((N, total + 1))
    e = np.empty((N, total))
    for k in range(total):
        x[:, k + 1] = (
            config.gamma1 * mu + config.theta_x * x[:, k] + config.gamma2 * eps[:, k] + xi[:, k]
        )
        e[:, k] = config.gamma3 * mu + eps[:, k]
        y[:, k + 1] = (
            config.beta0
            + config.rho * y[:, k]
            + config.beta1 * x[:, k + 1]
            + config.beta2 * x[:, k]
            + mu
            + e[:, k]
        )

    periods = np.arange(0, config.S + config.T + 1)
    n_p = len(periods)
    # period p corresponds to step index burn_in + p
    keep = slice(config.burn_in, total + 1)

    def grid_from(series, first_period):
        g = np.full((N, n_p), np.nan)
        g[:, first_period:] = series
        return g

    y_grid = y[:, keep]
    x_grid = grid_from(x[:, keep][:, 1:], 1)
    e_grid = grid_from(e[:, config.burn_in :], 1)
    eps_grid = grid_from(eps[:, config.burn_in :], 1)
    xi_grid = grid_from(xi[:, config.burn_in :], 1)
    mu_grid = np.tile(mu[:, None], (1, n_p))

    observed = np.ones((N, n_p), dtype=bool)
    return PanelDataset(
        units=np.arange(N),
        periods=periods,
        columns={
            "y": y_grid,
            "x": x_grid,
            "mu": mu_grid,
            "eps": eps_grid,
            "e": e_grid,
            "xi": xi_grid,
        },
        observed=observed,
        latent=frozenset(LATENT_COLUMNS),
    )


def ols_bias_oracle(gamma1, gamma2, gamma3, theta_x, V_xi=1.0, variance_mode=FIX_VXI):
    """Analytical slope bias of pooled OLS in the static (rho=0) model,
    under the V(mu)=V(eps)=1 normalization.

    Stationary moments of x_t = gamma1*mu + theta*x_{t-1} + gamma2*eps_t
    + xi_t against the composite error u_t = (1+gamma3)*mu + eps_t:

        cov(x, u) = gamma1*(1+gamma3)/(1-theta) + gamma2
        V(x)      = gamma1^2/(1-theta)^2 + (gamma2^2 + V_xi)/(1-theta^2)

    The unit effect accumulates through the AR recursion, so its variance
    contribution scales with 1/(1-theta)^2 while the transient shocks scale
    with 1/(1-theta^2).  ``variance_mode`` fix-Vx derives V_xi from the
    calibration identity (1-theta^2) - gamma1^2 - gamma2^2 with the x scale
    normalized to one; fix-Vxi takes V_xi as given.
    """
    if variance_mode == FIX_VX:
        V_xi = (1 - theta_x**2) - gamma1**2 - gamma2**2
        if V_xi <= 0:
            raise CalibrationInfeasible(
                "x-level calibration infeasible: (1 - theta^2) - gamma1^2 "
                "- gamma2^2 must be positive"
            )
    elif variance_mode != FIX_VXI:
        raise ValueError(f"variance_mode must be {FIX_VX!r} or {FIX_VXI!r}")
    cov = gamma1 * (1 + gamma3) / (1 - theta_x) + gamma2
    var = gamma1**2 / (1 - theta_x) ** 2 + (gamma2**2 + V_xi) / (1 - theta_x**2)
    return cov / var


def empirical_moments(panel: PanelDataset, presample_end: int = 0) -> dict:
    """Observed-variance / correlation report over the estimation sample.

    Requires the latent columns kept by :func:`simulate_panel`.
    """
    for name in ("mu", "eps", "e"):
        if name not in panel.columns:
            raise MissingLatents(f"latent column {name!r} not present")
    est_mask = panel.periods > presample_end
    x = panel.column("x")[:, est_mask].ravel()
    e = panel.column("e")[:, est_mask].ravel()
    mu = panel.column("mu")[:, est_mask].ravel()
    eps = panel.column("eps")[:, est_mask].ravel()
    ok = ~np.isnan(x)
    x, e, mu, eps = x[ok], e[ok], mu[ok], eps[ok]
    return {
        "V(x)": float(np.var(x)),
        "V(e)": float(np.var(e)),
        "corr(x,mu)": float(np.corrcoef(x, mu)[0, 1]),
        "corr(x,eps)": float(np.corrcoef(x, eps)[0, 1]),
    }
