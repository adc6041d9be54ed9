class DomainError(ValueError):
    """An argument lies outside the domain of a model function."""


class ConfigError(ValueError):
    """A configuration violates a model invariant or the config schema."""


class ConditionAWarning(RuntimeWarning):
    """Wind alone may cover total demand, so the reduced profit forms are unreliable."""


class ConditionAError(ConfigError):
    """A configuration fails the condition-A guardrail."""


class BudgetError(RuntimeError):
    """Estimated solver work exceeds the configured budget."""
