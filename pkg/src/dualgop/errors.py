"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for schema/config
problems, 3 for bad data, 4 for numeric failures.
"""


class DualGopError(Exception):
    exit_code = 3

    def __init__(self, message="", *, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


# --- config / schema (exit 2) -------------------------------------------

class ConfigError(DualGopError):
    exit_code = 2


class InvalidConfig(ConfigError):
    pass


class SchemaError(ConfigError):
    pass


# --- data (exit 3) -------------------------------------------------------

class InvalidInput(DualGopError):
    pass


class IoError(DualGopError):
    pass


class InsufficientAudio(InvalidInput):
    pass


class InsufficientFrames(InvalidInput):
    pass


class UnknownPhone(InvalidInput):
    def __init__(self, phone, *, stage=None):
        super().__init__(f"unknown phone {phone!r}", stage=stage)
        self.phone = phone


class UncoveredPhone(InvalidInput):
    def __init__(self, phones, *, stage=None):
        self.phones = list(phones)
        super().__init__(f"phones never observed in training transcripts: {self.phones}", stage=stage)


class InfeasibleAlignment(InvalidInput):
    pass


class SilenceNotScorable(InvalidInput):
    pass


class InsufficientPhones(InvalidInput):
    def __init__(self, category, count, *, stage=None):
        super().__init__(f"category {category!r} has {count} scored phones, need at least 2", stage=stage)
        self.category = category
        self.count = count


class DegenerateLabels(InvalidInput):
    pass


# --- numeric (exit 4) ----------------------------------------------------

class NumericError(DualGopError):
    exit_code = 4


class SingularSystem(NumericError):
    pass


# --- warnings ------------------------------------------------------------

class SkippedUtteranceWarning(UserWarning):
    """An utterance was too short for its transcript and left out of training."""


class DegenerateInputWarning(UserWarning):
    """A metric was computed on a constant vector."""
