"""Exception types shared across the package."""


class HardSFMError(Exception):
    """Base class for all package errors."""


class DomainError(HardSFMError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(HardSFMError, ValueError):
    """Parameters violate a feasibility constraint."""


class ResourceError(HardSFMError, RuntimeError):
    """An exhaustive computation would exceed its configured budget."""


class BudgetError(HardSFMError, RuntimeError):
    """A query batch exceeds the per-round budget of an oracle session."""


class IntegrityError(HardSFMError, RuntimeError):
    """An oracle returned answers inconsistent with the matroid axioms."""
