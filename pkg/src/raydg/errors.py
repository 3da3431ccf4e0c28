"""Exception taxonomy shared across the solver pipeline."""


class RaydgError(Exception):
    """Base class for all solver errors."""


class ConfigurationError(RaydgError):
    """Invalid or inconsistent user configuration (CLI exit code 2)."""


class NumericalError(RaydgError):
    """Numerical failure during a run (CLI exit code 3)."""


class PropagationError(NumericalError):
    """Ray integration produced a non-finite state."""


class InstabilityError(NumericalError):
    """Time marching violated its stability bound or blew up."""


class AssemblyIntegrityError(NumericalError):
    """Assembled operator failed a structural check (symmetry, definiteness)."""


class StoreIntegrityError(NumericalError):
    """Precomputed entry store is corrupt or inconsistent with the request."""
