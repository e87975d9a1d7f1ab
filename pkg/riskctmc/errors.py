"""
Exception hierarchy for riskctmc.
Every error is a ValueError so callers that only know the numeric layer still catch them.
"""


class RiskCtmcError(ValueError):
    """Base class for all riskctmc errors"""
    exit_code = 4


class StructuralError(RiskCtmcError):
    """Matrix or vector shapes do not match the state space"""
    exit_code = 2


class ModelParseError(RiskCtmcError):
    """Model file could not be parsed or does not match the schema"""
    exit_code = 2

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ConfigurationError(RiskCtmcError):
    """Invalid risk spec, solver settings, or unsupported combination"""
    exit_code = 3


class DomainError(RiskCtmcError):
    """Argument outside the admissible domain (times, step sizes)"""
    exit_code = 4


class OracleScaleError(RiskCtmcError):
    """Brute-force oracle called on a state space that is too large"""
    exit_code = 4
