"""Exception hierarchy shared across the framework."""


class KgemfError(Exception):
    """Base class for all framework errors."""


class EmptyDataset(KgemfError):
    pass


class MalformedLine(KgemfError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class InfeasibleSplit(KgemfError):
    pass


class AlreadyAugmented(KgemfError):
    pass


class IdOutOfRange(KgemfError):
    pass


class InverseNotAvailable(KgemfError):
    pass


class NonFiniteUpstream(KgemfError):
    pass


class NonFiniteGradient(KgemfError):
    pass


class ShapeMismatch(KgemfError):
    pass


class LabelOutOfRange(KgemfError):
    pass


class IndexOutOfRange(KgemfError):
    pass


class TooFewEntities(KgemfError):
    pass


class LossDiverged(KgemfError):
    pass


class IncompatibleLoss(KgemfError):
    pass


class InfiniteDimension(KgemfError):
    pass


class AllTrialsFailed(KgemfError):
    pass


class NoFeasibleBatch(KgemfError):
    pass


class DegenerateLabels(KgemfError):
    pass


class EmptyInput(KgemfError):
    pass


class UnknownEntity(KgemfError):
    def __init__(self, labels):
        self.labels = list(labels)
        super().__init__("unknown labels: " + ", ".join(self.labels))


class ConfigError(KgemfError):
    """Invalid run configuration (unknown key, bad value, incompatible composition)."""
