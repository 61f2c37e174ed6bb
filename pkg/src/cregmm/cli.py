"""Command-line interface: JSON config parsing, CSV panel IO, result tables.

Config files are flat JSON documents with up to five sections -- ``dgp``,
``model``, ``gmm``, ``mc``, ``io`` -- plus an optional top-level
``command``.  Every key is validated against a schema: unknown keys are
rejected by name, missing values take documented defaults, and type errors
are reported per key.  All randomness flows from the config's seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields as dataclass_fields

import numpy as np

from . import mc as mc_mod
from .dgp import DgpConfig, simulate_panel
from .errors import (
    CregmmError,
    DuplicateKey,
    IoFailure,
    MissingColumn,
    MissingSection,
    NonNumericCell,
    TypeMismatch,
    UnknownKey,
)
from .estimators import EstimationResult, cre, fe_within, pols, re_fgls
from .gmm import GmmOptions, VARIANTS, estimate_variant
from .model import (
    ENDOGENOUS,
    PREDETERMINED,
    STRICTLY_EXOGENOUS,
    ModelSpec,
    VariableRole,
)
from .panel import PanelDataset, build_panel, variance_decomposition

COMMANDS = ("simulate", "estimate", "mc", "decompose")

BASELINE_NAMES = ("POLS", "RE", "FE", "CRE1", "CRE2")
ESTIMATOR_NAMES = BASELINE_NAMES + tuple(VARIANTS)

_EXOGENEITY_LEVELS = (STRICTLY_EXOGENOUS, PREDETERMINED, ENDOGENOUS)


# ---------------------------------------------------------------------------
# config schema

_DGP_SCHEMA = {
    f.name: (float if f.type in ("float", "float | None") else int if f.type == "int" else str)
    for f in dataclass_fields(DgpConfig)
}
_DGP_OPTIONAL = {"sigma_e", "sigma_eps", "sigma_x", "sigma_xi"}
_DGP_DEFAULTS = {f.name: f.default for f in dataclass_fields(DgpConfig)}

_MODEL_SCHEMA = {
    "dependent": str,
    "ar_order": int,
    "x_terms": list,
    "w_terms": list,
    "time_dummies": bool,
    "presample_end": int,
    "include_averages": str,
}
_MODEL_DEFAULTS = {
    "dependent": "y",
    "ar_order": 1,
    "x_terms": [["x", 0, PREDETERMINED]],
    "w_terms": [],
    "time_dummies": False,
    "presample_end": 3,
    "include_averages": "none",
}

_GMM_SCHEMA = {
    "estimators": list,
    "steps": str,
    "collapse": bool,
    "windmeijer": bool,
    "weight_ridge": float,
    "start_offset": int,
}
_GMM_DEFAULTS = {
    "estimators": ["CREGMM5"],
    "steps": "one",
    "collapse": False,
    "windmeijer": False,
    "weight_ridge": 0.0,
    "start_offset": 2,
}

_MC_SCHEMA = {
    "rho_values": list,
    "beta2_values": list,
    "gamma1_values": list,
    "gamma2_values": list,
    "gamma3_values": list,
    "sizes": list,
    "reps": int,
    "estimators": list,
    "base_seed": int,
    "S": int,
    "beta1": float,
    "keep_raw": bool,
    "e_mode": str,
    "x_mode": str,
}
_MC_DEFAULTS = {
    "rho_values": [0.5],
    "beta2_values": [0.0],
    "gamma1_values": [0.0],
    "gamma2_values": [0.0],
    "gamma3_values": [0.0],
    "sizes": [[1000, 10]],
    "reps": 300,
    "estimators": list(mc_mod.DEFAULT_ESTIMATORS),
    "base_seed": 0,
    "S": 3,
    "beta1": 1.0,
    "keep_raw": False,
    "e_mode": mc_mod.FIX_VE,
    "x_mode": mc_mod.FIX_VXI,
}

_IO_SCHEMA = {
    "output_dir": str,
    "formats": list,
    "unit_col": str,
    "time_col": str,
    "decompose_var": str,
}
_IO_OPTIONAL = {"decompose_var"}
_IO_DEFAULTS = {
    "output_dir": ".",
    "formats": ["table-csv", "summary-text"],
    "unit_col": "unit",
    "time_col": "time",
    "decompose_var": None,
}

_SECTIONS = {
    "dgp": (_DGP_SCHEMA, _DGP_DEFAULTS, _DGP_OPTIONAL),
    "model": (_MODEL_SCHEMA, _MODEL_DEFAULTS, set()),
    "gmm": (_GMM_SCHEMA, _GMM_DEFAULTS, set()),
    "mc": (_MC_SCHEMA, _MC_DEFAULTS, set()),
    "io": (_IO_SCHEMA, _IO_DEFAULTS, _IO_OPTIONAL),
}

_REQUIRED_SECTIONS = {
    "simulate": ("dgp",),
    "estimate": ("model",),
    "mc": ("mc",),
    "decompose": (),
}


@dataclass
class RunConfig:
    """Validated configuration: command plus normalized section dicts."""

    command: str = None
    dgp: dict = None
    model: dict = None
    gmm: dict = field(default_factory=lambda: dict(_GMM_DEFAULTS))
    io: dict = field(default_factory=lambda: dict(_IO_DEFAULTS))
    mc: dict = None


def _check_type(section: str, key: str, value, expected, optional: bool):
    if value is None and optional:
        return None
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeMismatch(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise TypeMismatch(f"{section}.{key}: expected a boolean, got {value!r}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise TypeMismatch(f"{section}.{key}: expected a string, got {value!r}")
        return value
    if expected is list:
        if not isinstance(value, list):
            raise TypeMismatch(f"{section}.{key}: expected a list, got {value!r}")
        return value
    raise AssertionError(expected)


def _parse_section(name: str, raw: dict) -> dict:
    schema, defaults, optional = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise TypeMismatch(f"section {name!r} must be an object")
    for key in raw:
        if key not in schema:
            raise UnknownKey(f"unknown key {key!r} in section {name!r}")
    out = {}
    for key, expected in schema.items():
        if key in raw:
            out[key] = _check_type(name, key, raw[key], expected, key in optional)
        else:
            out[key] = defaults[key]
    return out


def parse_config(text: str, command: str = None) -> RunConfig:
    """Parse and validate a JSON config document into a RunConfig."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TypeMismatch(f"config is not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise TypeMismatch("config root must be a JSON object")
    known_top = set(_SECTIONS) | {"command"}
    for key in document:
        if key not in known_top:
            raise UnknownKey(f"unknown top-level key {key!r}")
    cfg_command = document.get("command", command)
    if cfg_command is not None and cfg_command not in COMMANDS:
        raise TypeMismatch(f"command must be one of {COMMANDS}, got {cfg_command!r}")
    sections = {}
    for name in _SECTIONS:
        if name in document:
            sections[name] = _parse_section(name, document[name])
    effective = command or cfg_command
    if effective is not None:
        for required in _REQUIRED_SECTIONS[effective]:
            if required not in sections:
                raise MissingSection(
                    f"command {effective!r} requires section {required!r}"
                )
    sections.setdefault("gmm", dict(_GMM_DEFAULTS))
    sections.setdefault("io", dict(_IO_DEFAULTS))
    return RunConfig(command=cfg_command, **sections)


def serialize_config(config: RunConfig) -> str:
    """Inverse of :func:`parse_config`: parse(serialize(c)) == c."""
    document = {}
    if config.command is not None:
        document["command"] = config.command
    for name in _SECTIONS:
        section = getattr(config, name)
        if section is not None:
            document[name] = section
    return json.dumps(document, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# typed builders

def build_dgp_config(section: dict) -> DgpConfig:
    return DgpConfig(**section)


def build_model_spec(section: dict) -> ModelSpec:
    x_terms = []
    for term in section["x_terms"]:
        if not isinstance(term, list) or len(term) not in (3, 4):
            raise TypeMismatch(
                f"model.x_terms entries must be [var, lag, exogeneity"
                f"[, het_correlated]], got {term!r}"
            )
        var, qlag, exo = term[0], term[1], term[2]
        het = term[3] if len(term) == 4 else True
        if not isinstance(var, str) or isinstance(qlag, bool) or not isinstance(qlag, int):
            raise TypeMismatch(f"model.x_terms entry {term!r} is malformed")
        if exo not in _EXOGENEITY_LEVELS:
            raise TypeMismatch(
                f"model.x_terms exogeneity must be one of {_EXOGENEITY_LEVELS}"
            )
        if not isinstance(het, bool):
            raise TypeMismatch(f"model.x_terms het_correlated must be a boolean")
        x_terms.append((var, qlag, VariableRole(exo, het_correlated=het)))
    return ModelSpec(
        dependent=section["dependent"],
        ar_order=section["ar_order"],
        x_terms=x_terms,
        w_terms=list(section["w_terms"]),
        time_dummies=section["time_dummies"],
        presample_end=section["presample_end"],
        include_averages=section["include_averages"],
    )


def build_gmm_options(section: dict) -> GmmOptions:
    return GmmOptions(
        steps=section["steps"],
        collapse=section["collapse"],
        windmeijer=section["windmeijer"],
        weight_ridge=section["weight_ridge"],
    )


def build_mc_config(section: dict, full: bool = False) -> mc_mod.McConfig:
    sizes = []
    for pair in section["sizes"]:
        if not isinstance(pair, list) or len(pair) != 2:
            raise TypeMismatch(f"mc.sizes entries must be [N, T], got {pair!r}")
        sizes.append((int(pair[0]), int(pair[1])))
    return mc_mod.McConfig(
        rho_values=tuple(section["rho_values"]),
        beta2_values=tuple(section["beta2_values"]),
        gamma1_values=tuple(section["gamma1_values"]),
        gamma2_values=tuple(section["gamma2_values"]),
        gamma3_values=tuple(section["gamma3_values"]),
        sizes=tuple(sizes),
        reps=1000 if full else section["reps"],
        estimators=tuple(section["estimators"]),
        base_seed=section["base_seed"],
        S=section["S"],
        beta1=section["beta1"],
        keep_raw=section["keep_raw"],
        e_mode=section["e_mode"],
        x_mode=section["x_mode"],
    )


# ---------------------------------------------------------------------------
# panel CSV IO

def _format_value(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def read_panel_csv(path, unit_col: str = "unit", time_col: str = "time") -> PanelDataset:
    """Read a long-format panel CSV: header ``unit,time,<vars...>``, empty
    cells are missing values."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, no header") from None
        for required in (unit_col, time_col):
            if required not in header:
                raise MissingColumn(f"{path}: missing column {required!r}")
        u_idx = header.index(unit_col)
        t_idx = header.index(time_col)
        var_cols = [
            (j, name)
            for j, name in enumerate(header)
            if j not in (u_idx, t_idx)
        ]
        rows = []
        seen = {}
        for line_no, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise NonNumericCell(
                    f"{path}:{line_no}: expected {len(header)} cells, got {len(cells)}"
                )
            unit_raw = cells[u_idx]
            try:
                unit = int(unit_raw)
            except ValueError:
                unit = unit_raw
            try:
                period = int(cells[t_idx])
            except ValueError:
                raise NonNumericCell(
                    f"{path}:{line_no}: column {time_col!r}: "
                    f"non-integer period {cells[t_idx]!r}"
                ) from None
            key = (unit, period)
            if key in seen:
                raise DuplicateKey(
                    f"{path}: duplicate (unit, time) = {key} at rows "
                    f"{seen[key]} and {line_no}"
                )
            seen[key] = line_no
            values = {}
            for j, name in var_cols:
                cell = cells[j].strip()
                if cell == "":
                    values[name] = None
                    continue
                try:
                    values[name] = float(cell)
                except ValueError:
                    raise NonNumericCell(
                        f"{path}:{line_no}: column {name!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
            rows.append((unit, period, values))
    return build_panel(rows)


def write_panel_csv(
    panel: PanelDataset,
    path,
    unit_col: str = "unit",
    time_col: str = "time",
    include_latent: bool = False,
) -> None:
    """Write a panel in long format; finite values round-trip bit-identically
    through :func:`read_panel_csv`."""
    names = panel.variable_names(include_latent=include_latent)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([unit_col, time_col] + names)
        for i, unit in enumerate(panel.units):
            for j in np.flatnonzero(panel.observed[i]):
                row = [unit, int(panel.periods[j])]
                row += [_format_value(panel.columns[name][i, j]) for name in names]
                writer.writerow(row)


# ---------------------------------------------------------------------------
# results serialization

def _diag_pvalue(result: EstimationResult, key: str):
    entry = result.diagnostics.get(key)
    if not isinstance(entry, dict):
        return None
    return entry.get("p")


def _format_p(p) -> str:
    if p is None or (isinstance(p, float) and math.isnan(p)):
        return ""
    return f"{p:.4f}"


_DIAGNOSTIC_ROWS = (
    ("Hansen J pval.", lambda r: _format_p(_diag_pvalue(r, "hansen_j"))),
    ("Hausman pval.", lambda r: _format_p(_diag_pvalue(r, "hausman"))),
    ("Observations", lambda r: str(r.n_obs)),
    ("Units", lambda r: str(r.n_units)),
)


def _results_table(results: dict) -> list:
    """Aligned rows: coefficient, per-estimator value; se rows in
    parentheses; diagnostics rows always present (blank when undefined)."""
    term_order = []
    for result in results.values():
        for name in result.names:
            if name not in term_order:
                term_order.append(name)
    table = [["term"] + list(results)]
    for term in term_order:
        coef_row = [term]
        se_row = [""]
        for result in results.values():
            if term in result.coefficients:
                coef_row.append(f"{result.coef(term):.4f}")
                se_row.append(f"({result.se(term):.4f})")
            else:
                coef_row.append("")
                se_row.append("")
        table.append(coef_row)
        table.append(se_row)
    for label, extract in _DIAGNOSTIC_ROWS:
        table.append([label] + [extract(r) for r in results.values()])
    return table


def write_results(results: dict, out_path, fmt: str) -> None:
    """Serialize estimator results keyed by name to one file.

    ``fmt`` is ``table-csv`` (one column per estimator) or ``summary-text``
    (fixed-width rendering of the same table).
    """
    if not results:
        raise IoFailure("no results to write")
    table = _results_table(results)
    try:
        if fmt == "table-csv":
            with open(out_path, "w", newline="") as handle:
                csv.writer(handle).writerows(table)
        elif fmt == "summary-text":
            widths = [
                max(len(row[j]) for row in table) for j in range(len(table[0]))
            ]
            with open(out_path, "w") as handle:
                for row in table:
                    handle.write(
                        "  ".join(
                            cell.ljust(w) if j == 0 else cell.rjust(w)
                            for j, (cell, w) in enumerate(zip(row, widths))
                        ).rstrip()
                        + "\n"
                    )
        else:
            raise IoFailure(f"unknown results format {fmt!r}")
    except OSError as exc:
        raise IoFailure(f"cannot write {out_path}: {exc}") from None


def run_named_estimator(
    name: str,
    panel: PanelDataset,
    spec: ModelSpec,
    options: GmmOptions,
    start_offset: int,
) -> EstimationResult:
    if name == "POLS":
        return pols(panel, spec, start_offset=start_offset)
    if name == "RE":
        return re_fgls(panel, spec, start_offset=start_offset)
    if name == "FE":
        return fe_within(panel, spec, start_offset=start_offset)
    if name in ("CRE1", "CRE2"):
        return cre(panel, spec, variant=name, start_offset=start_offset)
    if name in VARIANTS:
        return estimate_variant(panel, spec, name, options)
    raise CregmmError(f"unknown estimator {name!r}")


# ---------------------------------------------------------------------------
# commands

def _threads() -> int:
    raw = os.environ.get("CREGMM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_config(path, command):
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from None
    return parse_config(text, command=command)


def cmd_simulate(args) -> int:
    config = _load_config(args.config, "simulate")
    panel = simulate_panel(build_dgp_config(config.dgp))
    out_dir = config.io["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "panel.csv")
    write_panel_csv(
        panel,
        out_path,
        unit_col=config.io["unit_col"],
        time_col=config.io["time_col"],
        include_latent=args.keep_latents,
    )
    print(f"wrote {out_path}")
    return 0


def cmd_estimate(args) -> int:
    config = _load_config(args.config, "estimate")
    panel = read_panel_csv(
        args.data, unit_col=config.io["unit_col"], time_col=config.io["time_col"]
    )
    spec = build_model_spec(config.model)
    options = build_gmm_options(config.gmm)
    results = {}
    for name in config.gmm["estimators"]:
        results[name] = run_named_estimator(
            name, panel, spec, options, config.gmm["start_offset"]
        )
    out_dir = config.io["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    suffix = {"table-csv": "results.csv", "summary-text": "results.txt"}
    for fmt in config.io["formats"]:
        if fmt not in suffix:
            raise IoFailure(f"unknown results format {fmt!r}")
        out_path = os.path.join(out_dir, suffix[fmt])
        write_results(results, out_path, fmt)
        print(f"wrote {out_path}")
    if config.io["decompose_var"]:
        report = variance_decomposition(panel, config.io["decompose_var"])
        out_path = os.path.join(out_dir, "decomposition.txt")
        with open(out_path, "w") as handle:
            handle.write(_decomposition_text(config.io["decompose_var"], report))
        print(f"wrote {out_path}")
    return 0


def cmd_mc(args) -> int:
    config = _load_config(args.config, "mc")
    mc_config = build_mc_config(config.mc, full=args.full)
    summary = mc_mod.run_grid(mc_config, n_jobs=_threads())
    out_dir = config.io["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "mc_summary.csv")
    summary.write_csv(summary_path)
    print(f"wrote {summary_path}")

    varying = [
        p
        for p in mc_mod.GRID_PARAMETERS
        if len({s.value(p) for s in summary.scenarios}) > 1
    ]
    if varying:
        try:
            nl_path = os.path.join(out_dir, "nestedloop.csv")
            mc_mod.export_nestedloop(summary, varying, nl_path)
            print(f"wrote {nl_path}")
        except mc_mod.NonFactorialGrid as exc:
            print(f"nestedloop export skipped: {exc}", file=sys.stderr)
    if mc_config.keep_raw:
        bp_path = os.path.join(out_dir, "boxplot.csv")
        mc_mod.export_boxplot(summary, bp_path, grouping=varying)
        print(f"wrote {bp_path}")

    if args.reference:
        report = mc_mod.compare_to_reference(summary, args.reference)
        report_path = os.path.join(out_dir, "reference_report.csv")
        with open(report_path, "w", newline="") as handle:
            writer = csv.DictWriter(
                handle,
                fieldnames=[
                    "scenario_id",
                    "estimator",
                    "coef",
                    "bias",
                    "reference_bias",
                    "gap",
                    "tolerance",
                    "pass",
                ],
            )
            writer.writeheader()
            writer.writerows(report["rows"])
        print(f"wrote {report_path}")
        print(
            f"reference check: {report['n_pass']}/{report['n_total']} rows "
            f"within tolerance"
        )
        if report["n_pass"] < report["n_total"]:
            return 1
    return 0


def _decomposition_text(var: str, report) -> str:
    lines = [
        f"Variance decomposition of {var!r}",
        f"  between share            {report.between_share:.4f}",
        f"  within share             {report.within_share:.4f}",
        f"    period-common          {report.within_common_share:.4f}",
        f"    unit-specific          {report.within_unitspecific_share:.4f}",
    ]
    return "\n".join(lines) + "\n"


def cmd_decompose(args) -> int:
    panel = read_panel_csv(args.data)
    period_range = None
    if args.presample_end is not None:
        period_range = (args.presample_end + 1, int(panel.periods.max()))
    report = variance_decomposition(panel, args.var, period_range=period_range)
    sys.stdout.write(_decomposition_text(args.var, report))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cregmm",
        description="Dynamic panel estimation with pre-sample Mundlak averages",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a panel to CSV")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--keep-latents", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate a model on a panel CSV")
    p_est.add_argument("--config", required=True)
    p_est.add_argument("--data", required=True)
    p_est.set_defaults(func=cmd_estimate)

    p_mc = sub.add_parser("mc", help="run a Monte Carlo grid")
    p_mc.add_argument("--config", required=True)
    p_mc.add_argument("--full", action="store_true", help="1000 replications")
    p_mc.add_argument("--reference", default=None, help="reference bias table CSV")
    p_mc.set_defaults(func=cmd_mc)

    p_dec = sub.add_parser("decompose", help="variance decomposition of a column")
    p_dec.add_argument("--data", required=True)
    p_dec.add_argument("--var", required=True)
    p_dec.add_argument("--presample-end", type=int, default=None)
    p_dec.set_defaults(func=cmd_decompose)

    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except CregmmError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
