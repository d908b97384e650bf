"""Exception hierarchy shared by all modules."""


class SubgError(Exception):
    """Base class for library errors."""


class InputError(SubgError, ValueError):
    """Invalid or inconsistent input data."""


class NonPSDCovariance(InputError):
    pass


class IndexMismatch(InputError):
    pass


class MarginalMismatch(InputError):
    pass


class DegenerateInput(InputError):
    pass


class NonpositiveC(InputError):
    pass


class ClassTooLarge(InputError):
    def __init__(self, size, cap):
        super().__init__(f"sequence class has {size} elements, cap is {cap}")
        self.size = size
        self.cap = cap


class InsufficientSamples(InputError):
    pass


class ExactTooLarge(InputError):
    pass


class NotTransitive(SubgError):
    pass


class NotInvariant(SubgError):
    def __init__(self, generator, entry, deviation):
        super().__init__(
            f"covariance not invariant under generator {generator}: "
            f"entry {entry} deviates by {deviation:.3e}"
        )
        self.generator = generator
        self.entry = entry
        self.deviation = deviation


class PreconditionFailed(SubgError):
    pass


class ConfigError(SubgError):
    pass


class InputMissing(ConfigError):
    pass
