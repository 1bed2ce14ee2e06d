"""Exception types shared across the package."""


class InputError(ValueError):
    """A caller supplied an argument outside an operation's domain."""


class ConfigurationError(ValueError):
    """A parameter combination is invalid or would produce an absurd workload."""


class WarmStartError(RuntimeError):
    """No interior warm-start point could be found for a random-walk sampler."""
