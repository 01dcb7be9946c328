class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class NumericDomainError(ArithmeticError):
    """A simulation produced or received a non-finite value."""


class StructuralError(ValueError):
    """A genome does not describe a buildable network."""


class IdentificationError(RuntimeError):
    """The heave model could not be identified from the truth plant."""


class ArchiveParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno
