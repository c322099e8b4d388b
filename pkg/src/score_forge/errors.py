"""Exception types.  The CLI reports ``type(exc).__name__`` on failure."""


class ScoreForgeError(Exception):
    pass


# kb
class SchemaError(ScoreForgeError):
    pass


class DanglingReference(ScoreForgeError):
    pass


class DuplicateId(ScoreForgeError):
    pass


class UnknownScenario(ScoreForgeError):
    pass


# reasoner
class ConstraintViolation(ScoreForgeError):
    pass


class NonInjectiveAssignment(ScoreForgeError):
    pass


class NotDerivable(ScoreForgeError):
    pass


# solver
class VocabularyMismatch(ScoreForgeError):
    pass


class NoConsistentAssignment(ScoreForgeError):
    pass


class NotUnique(ScoreForgeError):
    pass


# generator
class UnsatisfiableScenario(ScoreForgeError):
    pass


class RetryBudgetExhausted(ScoreForgeError):
    pass


class DegenerateOptions(ScoreForgeError):
    pass


class MissingFeature(ScoreForgeError):
    pass


class SinkError(ScoreForgeError):
    pass


# renderer
class MissingTemplate(ScoreForgeError):
    pass


class MissingHoleBinding(ScoreForgeError):
    pass


# evalharness
class UnknownQuestion(ScoreForgeError):
    pass


class EndpointError(ScoreForgeError):
    pass


class CassetteMiss(ScoreForgeError):
    pass


class ConfigurationError(ScoreForgeError):
    pass


# cli
class UsageError(ScoreForgeError):
    pass
