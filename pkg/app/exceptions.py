from typing import List, Optional


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class ParameterError(ToolkitError):
    """Invalid sizes, moduli, weights or mismatched dimensions"""


class ComplexityError(ParameterError):
    """A request exceeds an enumeration guard"""


class NotInvertible(ToolkitError):
    """Polynomial has no inverse in the requested quotient ring"""


class GenerationError(ToolkitError):
    """Key generation gave up after too many resamples"""


class ReductionError(ToolkitError):
    """Basis cannot be reduced (linearly dependent rows)"""


class IntegrityError(ToolkitError):
    """Reducer output is malformed or spans a different lattice"""


class TheoremError(ToolkitError):
    """Hypothesis of the zero-block theorem does not hold"""


class ExternalToolError(ToolkitError):
    """External reducer could not be run or failed"""

    def __init__(self, message: str, command: Optional[List[str]] = None,
                 returncode: Optional[int] = None, stdout: str = "", stderr: str = ""):
        super().__init__(message)
        self.command = command or []
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr

    def __str__(self):
        text = super().__str__()
        if self.command:
            text += f" (command: {' '.join(self.command)})"
        if self.stderr:
            text += f"\n{self.stderr.strip()[-2000:]}"
        return text
