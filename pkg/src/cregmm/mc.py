"""Monte Carlo harness: scenario grids, replication loops, bias summaries,
and plot-data exports.

Scenarios are the cross product of autoregressive, feedback and endogeneity
parameters with panel sizes.  Every estimator in a scenario is run on the
same simulated panels, over the common estimation sample starting two
periods after the pre-sample so that single-lag estimators and the
multi-lag GMM estimators see identical rows.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dgp import (
    FIX_VE,
    FIX_VEPS,
    FIX_VX,
    FIX_VXI,
    DgpConfig,
    calibrate_variances,
    simulate_panel,
)
from .errors import (
    AllRepsFailed,
    CalibrationInfeasible,
    CregmmError,
    KeyMismatch,
    NonFactorialGrid,
    RawNotRetained,
)
from .estimators import cre, fe_within, pols, re_fgls
from .gmm import GmmOptions, VARIANTS, estimate_variant
from .model import ENDOGENOUS, PREDETERMINED, ModelSpec, VariableRole

log = logging.getLogger(__name__)

# All estimators share the sample t >= S + 2: the first period where every
# instrument lag difference can reach back into the pre-sample.
COMMON_SAMPLE_OFFSET = 2

BASELINE_ESTIMATORS = ("POLS", "RE", "FE", "CRE1", "CRE2")
GMM_ESTIMATORS = tuple(VARIANTS)
DEFAULT_ESTIMATORS = (
    "RE",
    "FE",
    "CRE1",
    "CRE2",
    "GL",
    "CREGMM0",
    "CREGMM1",
    "CREGMM2",
    "CREGMM3",
    "CREGMM4",
    "CREGMM5",
)

GRID_PARAMETERS = ("rho", "beta2", "gamma1", "gamma2", "gamma3", "N", "T")


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation grid."""

    rho: float
    beta1: float
    beta2: float
    gamma1: float
    gamma2: float
    gamma3: float
    N: int
    T: int

    @property
    def scenario_id(self) -> str:
        return (
            f"N{self.N}_T{self.T}_rho{self.rho:g}_b2{self.beta2:g}"
            f"_g1{self.gamma1:g}_g2{self.gamma2:g}_g3{self.gamma3:g}"
        )

    def value(self, parameter: str):
        return getattr(self, parameter)


@dataclass
class McConfig:
    """Simulation grid, replication count and estimator selection.

    The grid is factorial over ``rho_values x beta2_values x gamma1_values x
    gamma2_values x gamma3_values x sizes``.  ``sizes`` are (N, T) pairs with
    T counting estimation-sample periods; the pre-sample length ``S`` is
    shared across the grid.
    """

    rho_values: tuple = (0.5,)
    beta2_values: tuple = (0.0,)
    gamma1_values: tuple = (0.0,)
    gamma2_values: tuple = (0.0,)
    gamma3_values: tuple = (0.0,)
    sizes: tuple = ((1000, 10),)
    reps: int = 300
    estimators: tuple = DEFAULT_ESTIMATORS
    base_seed: int = 0
    S: int = 3
    beta1: float = 1.0
    keep_raw: bool = False
    e_mode: str = FIX_VE
    x_mode: str = FIX_VXI

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError("reps must be >= 2")
        for values in (
            self.rho_values,
            self.beta2_values,
            self.gamma1_values,
            self.gamma2_values,
            self.gamma3_values,
            self.sizes,
        ):
            if len(tuple(values)) == 0:
                raise ValueError("grid lists must be nonempty")
        unknown = [e for e in self.estimators if e not in BASELINE_ESTIMATORS + GMM_ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators: {', '.join(unknown)}")

    def scenarios(self) -> list:
        cells = []
        for rho, beta2, g1, g2, g3, (N, T) in itertools.product(
            self.rho_values,
            self.beta2_values,
            self.gamma1_values,
            self.gamma2_values,
            self.gamma3_values,
            self.sizes,
        ):
            cells.append(
                Scenario(
                    rho=rho,
                    beta1=self.beta1,
                    beta2=beta2,
                    gamma1=g1,
                    gamma2=g2,
                    gamma3=g3,
                    N=N,
                    T=T,
                )
            )
        return cells


SUMMARY_FIELDS = (
    "scenario_id",
    "rho",
    "beta1",
    "beta2",
    "gamma1",
    "gamma2",
    "gamma3",
    "N",
    "T",
    "S",
    "estimator",
    "coef",
    "bias",
    "ese",
    "reps",
    "failures",
)


@dataclass
class McSummary:
    """Per-(scenario, estimator, coefficient) bias/dispersion summary."""

    rows: list
    scenarios: list
    config: McConfig
    raw: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=SUMMARY_FIELDS)
            writer.writeheader()
            writer.writerows(self.rows)

    def lookup(self, scenario_id: str, estimator: str, coef: str) -> dict:
        for row in self.rows:
            if (
                row["scenario_id"] == scenario_id
                and row["estimator"] == estimator
                and row["coef"] == coef
            ):
                return row
        raise KeyError((scenario_id, estimator, coef))


def replication_seed(base_seed: int, scenario: Scenario, rep: int) -> int:
    """Stable 63-bit seed for one (scenario, replication) pair.

    Uses a cryptographic digest rather than ``hash()`` so seeds are
    reproducible across processes and Python versions, and adding scenarios
    or replications never reshuffles existing draws.
    """
    key = f"{base_seed}|{scenario.scenario_id}|{rep}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


def dgp_config(
    scenario: Scenario, S: int, seed: int, e_mode: str = FIX_VE, x_mode: str = FIX_VXI
) -> DgpConfig:
    """DGP settings for one scenario.

    All variance scales are normalized to one; ``e_mode``/``x_mode`` choose
    which side of each calibration identity is held fixed (the composite
    error or its idiosyncratic part; the level of x or its innovation).
    """
    fix_e = e_mode == FIX_VE
    fix_x = x_mode == FIX_VX
    return DgpConfig(
        rho=scenario.rho,
        beta0=0.0,
        beta1=scenario.beta1,
        beta2=scenario.beta2,
        theta_x=0.5,
        gamma1=scenario.gamma1,
        gamma2=scenario.gamma2,
        gamma3=scenario.gamma3,
        sigma_mu=1.0,
        e_mode=e_mode,
        sigma_e=1.0 if fix_e else None,
        sigma_eps=None if fix_e else 1.0,
        x_mode=x_mode,
        sigma_x=1.0 if fix_x else None,
        sigma_xi=None if fix_x else 1.0,
        N=scenario.N,
        T=scenario.T,
        S=S,
        seed=seed,
    )


def model_spec(scenario: Scenario, S: int) -> ModelSpec:
    """Estimation model for one scenario.

    The x regressor is classified by the data-generating truth: correlated
    with the contemporaneous shock (gamma2 > 0) means endogenous, otherwise
    predetermined; both classes share the same lag-1..3 instrument windows
    for the level-equation estimators.
    """
    exogeneity = ENDOGENOUS if scenario.gamma2 > 0 else PREDETERMINED
    role = VariableRole(exogeneity, het_correlated=True)
    x_terms = [("x", 0, role)]
    if scenario.beta2 != 0.0:
        x_terms.append(("x", 1, role))
    return ModelSpec(dependent="y", x_terms=x_terms, presample_end=S)


def _target_coefficients(result, ecm: bool) -> dict:
    out = {"rho": result.coef("y_lag1"), "beta1": result.coef("x")}
    if ecm:
        out["beta2"] = result.coef("x_lag1")
    return out


def run_estimator(name: str, panel, spec: ModelSpec) -> dict:
    """Run one named estimator and return its target coefficients."""
    offset = COMMON_SAMPLE_OFFSET
    if name == "POLS":
        result = pols(panel, spec, start_offset=offset)
    elif name == "RE":
        result = re_fgls(panel, spec, start_offset=offset)
    elif name == "FE":
        result = fe_within(panel, spec, start_offset=offset)
    elif name in ("CRE1", "CRE2"):
        result = cre(panel, spec, variant=name, start_offset=offset)
    elif name in VARIANTS:
        result = estimate_variant(panel, spec, name, GmmOptions())
    else:
        raise ValueError(f"unknown estimator {name!r}")
    return _target_coefficients(result, ecm=spec.has_x_lag)


def _run_scenario(config: McConfig, scenario: Scenario):
    """All replications of one scenario: (summary rows, raw biases)."""
    spec = model_spec(scenario, config.S)
    estimates = {name: {} for name in config.estimators}
    failures = {name: 0 for name in config.estimators}
    for rep in range(config.reps):
        seed = replication_seed(config.base_seed, scenario, rep)
        panel = simulate_panel(
            dgp_config(scenario, config.S, seed, config.e_mode, config.x_mode)
        )
        for name in config.estimators:
            try:
                coefs = run_estimator(name, panel, spec)
            except (CregmmError, np.linalg.LinAlgError):
                failures[name] += 1
                continue
            for coef, value in coefs.items():
                estimates[name].setdefault(coef, []).append((rep, value))
    truth = {"rho": scenario.rho, "beta1": scenario.beta1, "beta2": scenario.beta2}
    rows = []
    raw = {}
    for name in config.estimators:
        if not estimates[name]:
            raise AllRepsFailed(
                f"all {config.reps} replications failed for "
                f"{name} on {scenario.scenario_id}"
            )
        for coef, pairs in estimates[name].items():
            values = np.array([v for _, v in pairs])
            bias = float(np.mean(values) - truth[coef])
            ese = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            rows.append(
                {
                    "scenario_id": scenario.scenario_id,
                    "rho": scenario.rho,
                    "beta1": scenario.beta1,
                    "beta2": scenario.beta2,
                    "gamma1": scenario.gamma1,
                    "gamma2": scenario.gamma2,
                    "gamma3": scenario.gamma3,
                    "N": scenario.N,
                    "T": scenario.T,
                    "S": config.S,
                    "estimator": name,
                    "coef": coef,
                    "bias": bias,
                    "ese": ese,
                    "reps": len(values),
                    "failures": failures[name],
                }
            )
            if config.keep_raw:
                raw[(scenario.scenario_id, name, coef)] = [
                    (rep, value - truth[coef]) for rep, value in pairs
                ]
    return rows, raw


def run_grid(config: McConfig, n_jobs: int = 1) -> McSummary:
    """Run every estimator over every feasible scenario of the grid.

    Estimator failures (rank problems, singular weights) are counted per
    (scenario, estimator) and excluded from the bias/ese moments; a pair
    with no successful replication raises AllRepsFailed.  Infeasible
    variance calibrations skip the whole scenario with a logged reason.

    With ``n_jobs > 1`` scenarios run in a process pool; seeds are
    per-(scenario, rep) and results are merged in scenario order, so
    parallel and serial runs yield identical summaries.
    """
    kept_scenarios = []
    skipped = []
    for scenario in config.scenarios():
        try:
            calibrate_variances(
                dgp_config(scenario, config.S, 0, config.e_mode, config.x_mode)
            )
        except CalibrationInfeasible as exc:
            log.warning("skipping %s: %s", scenario.scenario_id, exc)
            skipped.append((scenario, str(exc)))
            continue
        kept_scenarios.append(scenario)

    if n_jobs > 1 and len(kept_scenarios) > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(partial(_run_scenario, config), kept_scenarios))
    else:
        results = [_run_scenario(config, s) for s in kept_scenarios]

    rows = []
    raw = {}
    for scenario_rows, scenario_raw in results:
        rows.extend(scenario_rows)
        raw.update(scenario_raw)
    return McSummary(
        rows=rows, scenarios=kept_scenarios, config=config, raw=raw, skipped=skipped
    )


def export_nestedloop(summary: McSummary, parameter_order, path, coef: str = "rho") -> None:
    """Write nested-loop plot data: scenarios ordered lexicographically by
    ``parameter_order`` (slowest first), one bias column per estimator and
    one step-trace column per parameter.
    """
    parameter_order = list(parameter_order)
    for parameter in parameter_order:
        if parameter not in GRID_PARAMETERS:
            raise ValueError(f"unknown grid parameter {parameter!r}")
    scenarios = summary.scenarios
    skipped = [s for s, _ in summary.skipped]
    # infeasible cells removed by the calibration skip-filter still count
    # toward the factorial layout; their traces are simply absent
    covered = scenarios + skipped
    levels = {p: sorted({s.value(p) for s in covered}) for p in parameter_order}
    expected = math.prod(len(v) for v in levels.values())
    if expected != len(covered) or len(scenarios) == 0:
        raise NonFactorialGrid(
            f"{len(covered)} scenarios do not form a full factorial over "
            f"{', '.join(parameter_order)} (expected {expected})"
        )
    ordered = sorted(
        scenarios, key=lambda s: tuple(s.value(p) for p in parameter_order)
    )
    estimators = list(summary.config.estimators)
    fieldnames = (
        ["position", "scenario_id"]
        + [f"trace_{p}" for p in parameter_order]
        + [f"bias_{e}" for e in estimators]
    )
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for position, scenario in enumerate(ordered):
            row = {"position": position, "scenario_id": scenario.scenario_id}
            for parameter in parameter_order:
                row[f"trace_{parameter}"] = scenario.value(parameter)
            for name in estimators:
                row[f"bias_{name}"] = summary.lookup(
                    scenario.scenario_id, name, coef
                )["bias"]
            writer.writerow(row)


def group_label(scenario: Scenario, grouping) -> str:
    parts = []
    for parameter in grouping:
        value = scenario.value(parameter)
        shown = f"{value:g}" if isinstance(value, float) else f"{value}"
        parts.append(f"{parameter}={shown}")
    return ",".join(parts)


def export_boxplot(summary: McSummary, path, grouping=(), coef: str = "rho") -> None:
    """Write long-format per-replication biases of one coefficient for box
    plotting.

    Requires the raw estimates to have been retained (``keep_raw``).
    """
    if not summary.config.keep_raw:
        raise RawNotRetained("run_grid was called without keep_raw")
    by_id = {s.scenario_id: s for s in summary.scenarios}
    fieldnames = ["scenario_id", "group", "estimator", "coef", "rep", "bias"]
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for (scenario_id, estimator, raw_coef), pairs in summary.raw.items():
            if raw_coef != coef:
                continue
            label = group_label(by_id[scenario_id], grouping)
            for rep, bias in pairs:
                writer.writerow(
                    {
                        "scenario_id": scenario_id,
                        "group": label,
                        "estimator": estimator,
                        "coef": coef,
                        "rep": rep,
                        "bias": bias,
                    }
                )


REFERENCE_KEY = ("N", "T", "gamma1", "gamma2", "gamma3", "estimator", "coef")


def load_reference(path) -> dict:
    """Load a published-values reference table keyed like summary rows."""
    table = {}
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            key = (
                int(row["N"]),
                int(row["T"]),
                float(row["gamma1"]),
                float(row["gamma2"]),
                float(row["gamma3"]),
                row["estimator"],
                row["coef"],
            )
            table[key] = {"bias": float(row["bias"]), "ese": float(row["ese"])}
    return table


def compare_to_reference(
    summary: McSummary, reference_path, abs_tol: float = 0.02, z: float = 3.0
) -> dict:
    """Check summary biases against a reference table.

    Per row the verdict is |bias - reference| <= max(abs_tol,
    z * reference_ese / sqrt(reps)).  Returns per-row verdicts and the
    aggregate pass rate; a summary row with no reference counterpart raises
    KeyMismatch.
    """
    reference = load_reference(reference_path)
    verdicts = []
    for row in summary.rows:
        key = (
            row["N"],
            row["T"],
            row["gamma1"],
            row["gamma2"],
            row["gamma3"],
            row["estimator"],
            row["coef"],
        )
        if key not in reference:
            raise KeyMismatch(f"no reference row for {key}")
        ref = reference[key]
        tolerance = max(abs_tol, z * ref["ese"] / math.sqrt(row["reps"]))
        gap = abs(row["bias"] - ref["bias"])
        verdicts.append(
            {
                "scenario_id": row["scenario_id"],
                "estimator": row["estimator"],
                "coef": row["coef"],
                "bias": row["bias"],
                "reference_bias": ref["bias"],
                "gap": gap,
                "tolerance": tolerance,
                "pass": gap <= tolerance,
            }
        )
    passed = sum(1 for v in verdicts if v["pass"])
    return {
        "rows": verdicts,
        "pass_rate": passed / len(verdicts) if verdicts else float("nan"),
        "n_pass": passed,
        "n_total": len(verdicts),
    }
