"""Model specification types for ARDL(1,q) panel regressions."""

from __future__ import annotations

from dataclasses import dataclass, field


STRICTLY_EXOGENOUS = "strictly-exogenous"
PREDETERMINED = "predetermined"
ENDOGENOUS = "endogenous"
_EXOGENEITY_LEVELS = (STRICTLY_EXOGENOUS, PREDETERMINED, ENDOGENOUS)


@dataclass(frozen=True)
class VariableRole:
    """Exogeneity status of a time-varying regressor.

    ``het_correlated`` marks correlation with the unit effect, which is
    orthogonal to the exogeneity level with respect to the idiosyncratic
    shock (double endogeneity).
    """

    exogeneity: str = PREDETERMINED
    het_correlated: bool = True

    def __post_init__(self):
        if self.exogeneity not in _EXOGENEITY_LEVELS:
            raise ValueError(f"exogeneity must be one of {_EXOGENEITY_LEVELS}")


@dataclass(frozen=True)
class ModelSpec:
    """ARDL(1,q) specification with optional pre-sample Mundlak averages.

    ``x_terms`` is a list of ``(variable, lag, VariableRole)`` with lag in
    {0, 1}; ``presample_end`` S splits periods into pre-sample (s <= S) and
    estimation sample (t > S); ``include_averages`` selects which unit-level
    pre-sample averages enter the regression.
    """

    dependent: str
    ar_order: int = 1
    x_terms: list = field(default_factory=list)
    w_terms: list = field(default_factory=list)
    time_dummies: bool = False
    presample_end: int = 0
    include_averages: str = "none"  # none | y-only | y-and-x

    def __post_init__(self):
        if self.ar_order not in (0, 1):
            raise ValueError("ar_order must be 0 (static) or 1")
        if self.include_averages not in ("none", "y-only", "y-and-x"):
            raise ValueError("include_averages must be none, y-only or y-and-x")
        for term in self.x_terms:
            var, qlag, role = term
            if qlag not in (0, 1):
                raise ValueError(f"x lag must be 0 or 1, got {qlag} for {var!r}")
            if not isinstance(role, VariableRole):
                raise TypeError(f"role for {var!r} must be a VariableRole")

    @property
    def x_vars(self):
        """Distinct time-varying regressor names, in first-appearance order."""
        seen = []
        for var, _, _ in self.x_terms:
            if var not in seen:
                seen.append(var)
        return seen

    def role_of(self, var: str) -> VariableRole:
        for name, _, role in self.x_terms:
            if name == var:
                return role
        raise KeyError(var)

    @property
    def has_x_lag(self) -> bool:
        return any(qlag == 1 for _, qlag, _ in self.x_terms)
