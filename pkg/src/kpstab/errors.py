"""Exception hierarchy shared by every kpstab module."""


class KPStabError(Exception):
    """Base class; ``code`` is the short name written into failure reports."""

    code = "KPStabError"


class GridMismatch(KPStabError, ValueError):
    code = "GridMismatch"


class ZeroMeanViolation(KPStabError, ValueError):
    """The operand has x-mean content where an antiderivative is required."""

    code = "ZeroMeanViolation"


class DegenerateField(KPStabError, ValueError):
    code = "DegenerateField"


class BufferViolation(KPStabError, ValueError):
    """A perturbation carries mass near the periodic seam of the x-domain."""

    code = "BufferViolation"


class RangeViolation(KPStabError, ValueError):
    """Right-hand side is not in the range of the operator being inverted."""

    code = "RangeViolation"


class NonConvergence(KPStabError, RuntimeError):
    code = "NonConvergence"


class BlowupDetected(KPStabError, RuntimeError):
    code = "BlowupDetected"


class NanDetected(KPStabError, RuntimeError):
    code = "NanDetected"


class SmallnessViolation(KPStabError, ValueError):
    code = "SmallnessViolation"


class OutOfTube(KPStabError, RuntimeError):
    """Modulation Newton iteration failed: the state left the kink neighborhood."""

    code = "OutOfTube"


class NotInNeighborhood(KPStabError, RuntimeError):
    code = "NotInNeighborhood"


class WindowExitedDomain(KPStabError, ValueError):
    code = "WindowExitedDomain"


class ConfigError(KPStabError, ValueError):
    code = "ConfigError"
