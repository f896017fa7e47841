"""Hard instances for parallel submodular minimization and matroid intersection."""

from .errors import BudgetError, ConfigError, DomainError, HardSFMError, IntegrityError, ResourceError
from .hardfamily import HardParams, Variant, derive_params, hard_function
from .hypergrid import Partition, signature

__version__ = "0.1.0"

__all__ = [
    "BudgetError", "ConfigError", "DomainError", "HardSFMError", "IntegrityError", "ResourceError",
    "HardParams", "Variant", "derive_params", "hard_function", "Partition", "signature",
]
